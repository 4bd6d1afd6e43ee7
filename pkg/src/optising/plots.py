"""Figure rendering for CLI outputs.

All functions write PNG files via the Agg backend and return the path;
they are thin wrappers so the numeric pipeline stays matplotlib-free.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_hamiltonian_evolution(traces, h_min, path, max_runs: int = 20):
    """Accepted-Hamiltonian traces (exact re-score) for up to max_runs runs."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for trace in traces[:max_runs]:
        ax.plot(trace, lw=0.8, alpha=0.6)
    if h_min is not None:
        ax.axhline(h_min, color="k", ls="--", lw=1, label=f"H_min = {h_min:g}")
        ax.legend(loc="upper right")
    ax.set_xlabel("iteration")
    ax.set_ylabel("Hamiltonian")
    ax.set_title("Hamiltonian evolution")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_probability(curve, path):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(np.asarray(curve), lw=1.5)
    ax.set_xlabel("iteration")
    ax.set_ylabel("ground-state probability")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title("Ground-state probability")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_layout(positions, radius, aperture, path):
    """Beam regions on the SLM aperture."""
    fig, ax = plt.subplots(figsize=(6, 6 * aperture[1] / aperture[0]))
    for i, (x, y) in enumerate(np.atleast_2d(positions)):
        ax.add_patch(plt.Circle((x * 1e3, y * 1e3), radius * 1e3,
                                fill=False, ec="C0"))
        ax.annotate(str(i), (x * 1e3, y * 1e3), ha="center", va="center",
                    fontsize=8)
    wx, wy = aperture
    ax.set_xlim(-wx / 2 * 1e3, wx / 2 * 1e3)
    ax.set_ylim(-wy / 2 * 1e3, wy / 2 * 1e3)
    ax.set_aspect("equal")
    ax.set_xlabel("x (mm)")
    ax.set_ylabel("y (mm)")
    ax.set_title("Beam layout")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_noise_budget(ns, delta_hs, snrs, path):
    fig, ax1 = plt.subplots(figsize=(7, 4.5))
    ax1.plot(ns, delta_hs, "o-", color="C0")
    ax1.set_xlabel("spin count n")
    ax1.set_ylabel("Hamiltonian noise (electrons)", color="C0")
    ax2 = ax1.twinx()
    ax2.plot(ns, snrs, "s--", color="C1")
    ax2.set_ylabel("SNR (dB)", color="C1")
    ax1.set_title("Detector noise budget")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_perf(ns, rates, energies, path):
    fig, ax1 = plt.subplots(figsize=(7, 4.5))
    ax1.plot(ns, np.asarray(rates) / 1e3, "o-", color="C0")
    ax1.set_xlabel("spin count n")
    ax1.set_ylabel("throughput (kFLOP/s)", color="C0")
    ax2 = ax1.twinx()
    ax2.plot(ns, np.asarray(energies) * 1e3, "s--", color="C1")
    ax2.set_ylabel("energy (mJ/FLOP)", color="C1")
    ax1.set_title("Performance model")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_phase_scatter(injected, recovered, path):
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot([-np.pi, np.pi], [-np.pi, np.pi], "k--", lw=1)
    ax.plot(np.ravel(injected), np.ravel(recovered), ".", ms=4)
    ax.set_xlabel("injected phase difference (rad)")
    ax.set_ylabel("recovered phase difference (rad)")
    ax.set_title("Phase calibration recovery")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_phase_map(phase, path, title="Phase pattern"):
    fig, ax = plt.subplots(figsize=(6, 6 * phase.shape[0] / phase.shape[1]))
    im = ax.imshow(np.asarray(phase), cmap="twilight", vmin=0, vmax=2 * np.pi,
                   origin="lower")
    fig.colorbar(im, ax=ax, label="phase (rad)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
