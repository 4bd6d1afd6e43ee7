"""Command-line front-end.

Subcommands: solve (annealing runs from a manifest), oracle (brute-force
ground state), report (noise / perf / geometry documents), calibrate
(injected-error recovery demo), holo (SLM pattern synthesis and export).

Exit codes: 0 success, 2 configuration error, 3 capacity error,
4 numerical failure.  Every artifact embeds the manifest hash and seed;
report and solve paths render figures next to the CSV output.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import annealer, calibration, holography, ising, optical, plots, rig
from .errors import CapacityError, ConfigError, NumericalError

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Helpers

def _manifest_hash(manifest: dict) -> str:
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _resolve_problem(spec) -> ising.IsingModel:
    """spec is a file path string or {"type": mobius|glass|file, ...}."""
    if isinstance(spec, str):
        return ising.load_problem(spec)
    if not isinstance(spec, dict):
        raise ConfigError("problem must be a path or an object")
    kind = spec.get("type")
    if kind == "mobius":
        return ising.mobius_ladder(int(spec.get("n", 20)),
                                   float(spec.get("coupling", -1.0)))
    if kind == "glass":
        return ising.random_glass(int(spec["n"]), int(spec.get("seed", 0)))
    if kind == "file":
        return ising.load_problem(spec["path"])
    raise ConfigError(f"unknown problem type {kind!r}")


def _camera(spec) -> optical.DetectorModel:
    if spec is None:
        return optical.DetectorModel()
    try:
        return optical.DetectorModel(**spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad camera config: {exc}") from exc


def _artifact_header(tag: str, seed) -> str:
    return (f"# schema_version={SCHEMA_VERSION} manifest_sha256={tag} "
            f"seed={seed}\n")


def _reference_minimum(model, seed, probes: int = 200):
    """Ground-state Hamiltonian: brute force when tractable, otherwise the
    best of `probes` independent exact-tier annealing runs."""
    try:
        _, h_min = ising.brute_force_ground(model)
        return h_min, "brute-force"
    except CapacityError:
        pass
    cfg = annealer.AnnealConfig(n_step=50, n_temp=40, eta=0.92,
                                seed=int(seed) + 987654321)
    results = annealer.run_replicas(
        model, lambda s: optical.ExactEvaluator(model), cfg, probes)
    return min(r.best_h for r in results), f"best-of-{probes}-exact-runs"


# ---------------------------------------------------------------------------
# solve

def _make_evaluator_factory(tier, model, transform, det, exposure_scale):
    if tier == "exact":
        return lambda seed: optical.ExactEvaluator(model)
    if tier == "ideal":
        return lambda seed: optical.IdealOpticalEvaluator(transform)
    if tier == "noisy":
        return lambda seed: optical.NoisyOpticalEvaluator(
            transform, det, exposure_scale, np.random.default_rng(seed))
    if tier == "physical":
        def factory(seed):
            r, _ = rig.design_toy_rig(model.n, rng=np.random.default_rng(seed))
            calibration.calibrate_rig(r, transform.a)
            return rig.PhysicalOpticalEvaluator(r, transform)
        return factory
    raise ConfigError(f"unknown evaluator tier {tier!r}")


def cmd_solve(args) -> int:
    manifest = _load_json(args.manifest)
    if args.outdir:
        manifest["outdir"] = args.outdir
    if args.runs:
        manifest["runs"] = args.runs
    tag = _manifest_hash(manifest)

    model = _resolve_problem(manifest.get("problem"))
    tier = manifest.get("tier", "exact")
    runs = int(manifest.get("runs", 100))
    seed = int(manifest.get("seed", 0))
    outdir = Path(manifest.get("outdir", "results"))
    outdir.mkdir(parents=True, exist_ok=True)

    acfg = manifest.get("anneal", {})
    cfg = annealer.AnnealConfig(
        t0=acfg.get("t0"),
        n_step=int(acfg.get("n_step", 30)),
        n_temp=int(acfg.get("n_temp", 20)),
        eta=float(acfg.get("eta", 0.9)),
        alpha=acfg.get("alpha"),
        seed=seed,
    )
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    transform = ising.spectral_transform(model)
    det = _camera(manifest.get("camera")) if tier == "noisy" else None

    t_start = time.perf_counter()
    h_min, h_min_method = _reference_minimum(model, seed)

    exposure_scale = manifest.get("exposure_scale")
    if tier == "noisy":
        if exposure_scale is None:
            # ground-state convention: the Hamiltonian scale maps the
            # ground state to half the full well (H0 = -C_well/2)
            exposure_scale = det.full_well / (2.0 * abs(h_min))
        exposure_scale = float(exposure_scale)
        if cfg.t0 is not None:
            cfg.t0 = cfg.t0 * exposure_scale
    factory = _make_evaluator_factory(tier, model, transform, det,
                                      exposure_scale)

    results = annealer.run_replicas(model, factory, cfg, runs)
    curve = annealer.ground_state_probability(results, h_min, model)

    runs_csv = outdir / "runs.csv"
    with open(runs_csv, "w", newline="") as fh:
        fh.write(_artifact_header(tag, seed))
        w = csv.writer(fh)
        w.writerow(["run", "iteration", "stage", "T", "H_evaluator",
                    "H_exact", "accepted_flag", "flip_count"])
        for r_idx, res in enumerate(results):
            for it in range(res.iterations):
                w.writerow([r_idx, it, int(res.stage[it]),
                            repr(float(res.temperature[it])),
                            repr(float(res.accepted_h[it])),
                            repr(float(res.h_exact[it])),
                            int(res.accepted[it]), int(res.flip_count[it])])

    prob_csv = outdir / "probability.csv"
    with open(prob_csv, "w", newline="") as fh:
        fh.write(_artifact_header(tag, seed))
        w = csv.writer(fh)
        w.writerow(["iteration", "probability"])
        for it, p in enumerate(curve):
            w.writerow([it, repr(float(p))])

    summary = {
        "schema_version": SCHEMA_VERSION,
        "manifest_sha256": tag,
        "seed": seed,
        "tier": tier,
        "n": model.n,
        "runs": runs,
        "iterations": int(results[0].iterations),
        "h_min_reference": h_min,
        "h_min_method": h_min_method,
        "best_h": min(r.best_h for r in results),
        "final_probability": float(curve[-1]),
        "t0": results[0].t0,
        "alpha": results[0].alpha,
        "wall_clock_s": time.perf_counter() - t_start,
    }
    if tier == "noisy":
        h_eval = np.concatenate([r.accepted_h for r in results])
        h_theo = np.concatenate([r.h_exact for r in results])
        k_mean, k_std = optical.normalization_coefficient(h_eval, h_theo)
        summary["exposure_scale"] = exposure_scale
        summary["k_mean"] = k_mean
        summary["k_std"] = k_std
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)

    plots.plot_hamiltonian_evolution(
        [r.h_exact for r in results], h_min, outdir / "hamiltonian.png")
    plots.plot_probability(curve, outdir / "probability.png")
    print(f"solve: best H = {summary['best_h']:g}, "
          f"final probability = {summary['final_probability']:.3f} "
          f"-> {outdir}")
    return 0


# ---------------------------------------------------------------------------
# oracle

def cmd_oracle(args) -> int:
    model = _resolve_problem(_problem_from_args(args))
    state, h_min = ising.brute_force_ground(model, cap=args.cap)
    doc = {"n": model.n, "h_min": h_min, "state": state.tolist()}
    print(json.dumps(doc))
    return 0


def _problem_from_args(args):
    if getattr(args, "problem", None):
        return args.problem
    if getattr(args, "mobius", None):
        return {"type": "mobius", "n": args.mobius}
    if getattr(args, "glass", None):
        return {"type": "glass", "n": args.glass,
                "seed": getattr(args, "glass_seed", 0)}
    raise ConfigError("give --problem, --mobius N, or --glass N")


# ---------------------------------------------------------------------------
# report

def cmd_report(args) -> int:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    seed = 0
    tag = _manifest_hash({"report": args.kind, "n": args.n})

    if args.kind == "noise":
        det = _camera(_load_json(args.camera) if args.camera else None)
        budget = optical.noise_budget(det, args.n, args.h0)
        doc = {"schema_version": SCHEMA_VERSION, "manifest_sha256": tag,
               "seed": seed, "readout_noise": det.readout_noise}
        doc.update(budget.as_dict())
        ns = list(range(4, 101, 4))
        rows = [optical.noise_budget(det, n, args.h0) for n in ns]
        with open(outdir / "noise.csv", "w", newline="") as fh:
            fh.write(_artifact_header(tag, seed))
            w = csv.writer(fh)
            w.writerow(["n", "delta_h", "snr_db", "resolution"])
            for b in rows:
                w.writerow([b.n, repr(b.delta_h), repr(b.snr_db),
                            repr(b.resolution)])
        plots.plot_noise_budget(ns, [b.delta_h for b in rows],
                                [b.snr_db for b in rows],
                                outdir / "noise.png")
        out = outdir / "noise.json"
    elif args.kind == "perf":
        perf = optical.PerfModel()
        rep = optical.perf_report(args.n, perf)
        doc = {"schema_version": SCHEMA_VERSION, "manifest_sha256": tag,
               "seed": seed}
        doc.update(rep.as_dict())
        ns = list(range(4, 101, 4))
        rows = [optical.perf_report(n, perf) for n in ns]
        with open(outdir / "perf.csv", "w", newline="") as fh:
            fh.write(_artifact_header(tag, seed))
            w = csv.writer(fh)
            w.writerow(["n", "flops", "rate_flops", "energy_per_flop"])
            for r in rows:
                w.writerow([r.n, r.flops, repr(r.rate),
                            repr(r.energy_per_flop)])
        plots.plot_perf(ns, [r.rate for r in rows],
                        [r.energy_per_flop for r in rows],
                        outdir / "perf.png")
        out = outdir / "perf.json"
    elif args.kind == "geometry":
        w0, w_slm = holography.beam_geometry(args.wavelength, args.z)
        geom = holography.OpticalGeometry(
            l01=args.z, l12=args.z, l2p=args.z, wavelength=args.wavelength,
            slm_pixels=tuple(int(v) for v in args.slm.split("x")),
            pixel_pitch=args.pitch, region_radius=args.radius)
        try:
            positions, capacity = holography.layout_spins(args.n, geom)
        except CapacityError as exc:
            if exc.capacity == 0:
                raise
            positions, capacity = holography.layout_spins(exc.capacity, geom)
        doc = {"schema_version": SCHEMA_VERSION, "manifest_sha256": tag,
               "seed": seed, "w0_m": w0, "w_slm_m": w_slm,
               "capacity": capacity, "region_radius_m": args.radius,
               "placed": len(positions)}
        with open(outdir / "geometry.csv", "w", newline="") as fh:
            fh.write(_artifact_header(tag, seed))
            w = csv.writer(fh)
            w.writerow(["index", "x_m", "y_m"])
            for i, (x, y) in enumerate(positions):
                w.writerow([i, repr(float(x)), repr(float(y))])
        plots.plot_layout(positions, args.radius, geom.aperture,
                          outdir / "geometry.png")
        out = outdir / "geometry.json"
    else:
        raise ConfigError(f"unknown report kind {args.kind!r}")

    with open(out, "w") as fh:
        json.dump(doc, fh, indent=2)
    print(f"report {args.kind} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# calibrate

def cmd_calibrate(args) -> int:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    n = args.n
    tag = _manifest_hash({"calibrate": n, "inject": args.inject})

    err = calibration.RigError.random(n, args.inject,
                                      gain_band=(0.7, 1.3))
    det = _camera(None) if args.noisy else None
    target = calibration.dft_matrix(n)
    exposure = 0.0
    if det is not None:
        exposure = det.full_well * 0.8 * n  # identity outputs carry 1/n power

    def fresh_rig():
        return calibration.MatrixRig(err, detector=det,
                                     exposure_scale=exposure,
                                     rng=np.random.default_rng(args.inject))

    before_rig = fresh_rig()
    before_rig.program_slm1(target)
    f_before = calibration.dft_benchmark(before_rig, n)

    rig_ = fresh_rig()
    tables = calibration.calibrate_rig(rig_, target)
    f_after = calibration.dft_benchmark(rig_, n, tables)

    injected = np.mod(err.phases[:, [0]] - err.phases[:, 1:] + np.pi,
                      2 * np.pi) - np.pi
    recovered = np.mod(tables.delta_phi + np.pi, 2 * np.pi) - np.pi
    phase_err = float(np.max(np.abs(
        np.mod(recovered - injected + np.pi, 2 * np.pi) - np.pi)))

    tables.to_json(outdir / "calibration_tables.json")
    doc = {"schema_version": SCHEMA_VERSION, "manifest_sha256": tag,
           "seed": args.inject, "n": n, "noisy": bool(args.noisy),
           "fidelity_before": f_before, "fidelity_after": f_after,
           "max_phase_error_rad": phase_err,
           "clamp_excess": tables.clamp_excess}
    with open(outdir / "calibration_report.json", "w") as fh:
        json.dump(doc, fh, indent=2)
    with open(outdir / "calibration_phases.csv", "w", newline="") as fh:
        fh.write(_artifact_header(tag, args.inject))
        w = csv.writer(fh)
        w.writerow(["row", "col", "injected_rad", "recovered_rad"])
        for i in range(n):
            for j in range(n - 1):
                w.writerow([i, j, repr(float(injected[i, j])),
                            repr(float(recovered[i, j]))])
    plots.plot_phase_scatter(injected, recovered, outdir / "calibration.png")
    print(f"calibrate: fidelity {f_before:.5f} -> {f_after:.5f}, "
          f"max phase error {phase_err:.2e} rad -> {outdir}")
    return 0


# ---------------------------------------------------------------------------
# holo

def cmd_holo(args) -> int:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    model = _resolve_problem(_problem_from_args(args))
    transform = ising.spectral_transform(model)
    _, geom = rig.design_toy_rig(model.n, grid=args.grid)
    shape = (args.grid, args.grid)
    dx = geom.pixel_pitch
    patterns = {
        "slm0": holography.ideal_modulation(
            "split0", geom, shape, dx, np.ones(model.n)),
        "slm1": holography.ideal_modulation(
            "split1", geom, shape, dx, transform.a),
        "slm2": holography.ideal_modulation(
            "recombine2", geom, shape, dx, np.ones((model.n, model.n))),
    }
    for name, pattern in patterns.items():
        holo = holography.phase_only_project(pattern)
        _write_pgm(outdir / f"{name}.pgm", holo.to_gray8())
        plots.plot_phase_map(holo.phase, outdir / f"{name}.png",
                             title=f"{name} phase pattern")
    print(f"holo: wrote SLM patterns for n={model.n} -> {outdir}")
    return 0


def _write_pgm(path, gray: np.ndarray):
    with open(path, "wb") as fh:
        fh.write(f"P5\n{gray.shape[1]} {gray.shape[0]}\n255\n".encode())
        fh.write(gray.tobytes())


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="optising",
        description="Ising annealer with optical evaluation tiers")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run annealing replicas from a manifest")
    ps.add_argument("--manifest", required=True)
    ps.add_argument("--outdir", default=None)
    ps.add_argument("--runs", type=int, default=None)
    ps.set_defaults(func=cmd_solve)

    po = sub.add_parser("oracle", help="brute-force ground state")
    po.add_argument("--problem")
    po.add_argument("--mobius", type=int)
    po.add_argument("--glass", type=int)
    po.add_argument("--glass-seed", type=int, default=0)
    po.add_argument("--cap", type=int, default=ising.BRUTE_FORCE_CAP)
    po.set_defaults(func=cmd_oracle)

    pr = sub.add_parser("report", help="noise / perf / geometry documents")
    pr.add_argument("kind", choices=["noise", "perf", "geometry"])
    pr.add_argument("--n", type=int, default=20)
    pr.add_argument("--h0", type=float, default=3e5)
    pr.add_argument("--camera", default=None)
    pr.add_argument("--wavelength", type=float, default=1550e-9)
    pr.add_argument("--z", type=float, default=0.377)
    pr.add_argument("--radius", type=float, default=950e-6)
    pr.add_argument("--slm", default="1920x1080")
    pr.add_argument("--pitch", type=float, default=8e-6)
    pr.add_argument("--outdir", default="report")
    pr.set_defaults(func=cmd_report)

    pc = sub.add_parser("calibrate", help="injected-error recovery demo")
    pc.add_argument("--n", type=int, default=8)
    pc.add_argument("--inject", type=int, default=0,
                    help="seed for the injected systematic errors")
    pc.add_argument("--noisy", action="store_true",
                    help="measure through the default camera model")
    pc.add_argument("--outdir", default="calibration")
    pc.set_defaults(func=cmd_calibrate)

    ph = sub.add_parser("holo", help="synthesize and export SLM patterns")
    ph.add_argument("--problem")
    ph.add_argument("--mobius", type=int)
    ph.add_argument("--glass", type=int)
    ph.add_argument("--glass-seed", type=int, default=0)
    ph.add_argument("--grid", type=int, default=256)
    ph.add_argument("--outdir", default="holograms")
    ph.set_defaults(func=cmd_holo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
