"""Acceptance suite: one test per criterion, each printing a PASS line
with the measured value against its pinned tolerance and time budget.

Run with ``pytest -v tests/test_acceptance.py``.
"""

import itertools
import time

import numpy as np
import pytest

import optising as op
from optising.calibration import MatrixRig, RigError
from optising.ising import hamiltonian_batch


@pytest.fixture
def report(capsys):
    """Emit one unbuffered pass/fail line per criterion."""
    def _report(line):
        with capsys.disabled():
            print(line, flush=True)
    return _report


def all_states(n):
    bits = ((np.arange(2 ** n)[:, None] >> np.arange(n)) & 1)
    return 2 * bits - 1


def ideal_hamiltonians(t, states):
    i_mat = np.abs(states.astype(float) @ t.a.T) ** 2
    signed = np.where(t.sign_mask, 1.0, -1.0)
    return 0.5 * (i_mat @ signed)


def test_criterion_01_oracle_equivalence(report):
    tic = time.time()
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(4, 13))
        model = op.symmetrize(rng.normal(size=(n, n)))
        t = op.spectral_transform(model)
        states = all_states(n)
        h_opt = ideal_hamiltonians(t, states)
        h_ref = hamiltonian_batch(model, states)
        rel = np.abs(h_opt - h_ref) / np.maximum(1.0, np.abs(h_ref))
        worst = max(worst, float(rel.max()))
    elapsed = time.time() - tic
    report(f"criterion 01 oracle equivalence: max rel err {worst:.3e} "
           f"(<= 1e-9), {elapsed:.1f}s (< 60s) -> "
           f"{'PASS' if worst <= 1e-9 and elapsed < 60 else 'FAIL'}")
    assert worst <= 1e-9
    assert elapsed < 60


def test_criterion_02_exact_tier_mobius(report):
    tic = time.time()
    model = op.mobius_ladder(20)
    _, h_min = op.brute_force_ground(model)
    cfg = op.AnnealConfig(t0=2.0, n_step=30, n_temp=20, eta=0.9, seed=42)
    results = op.run_replicas(model, lambda s: op.ExactEvaluator(model),
                              cfg, 100)
    curve = op.ground_state_probability(results, h_min, model)
    prob = float(curve[-1])
    elapsed = time.time() - tic
    ok = prob >= 0.95 and h_min == -26 and elapsed < 120
    report(f"criterion 02 exact-tier Mobius n=20: P(ground) {prob:.3f} "
           f"(>= 0.95), H_min {h_min:.0f} (= -26), {elapsed:.1f}s (< 120s) "
           f"-> {'PASS' if ok else 'FAIL'}")
    assert h_min == -26
    assert prob >= 0.95
    assert elapsed < 120


def test_criterion_03_noisy_tier_glasses(report):
    tic = time.time()
    det = op.DetectorModel()

    model20 = op.random_glass(20, 2)
    t20 = op.spectral_transform(model20)
    _, h_min20 = op.brute_force_ground(model20)
    es20 = det.full_well / (2 * abs(h_min20))
    cfg20 = op.AnnealConfig(t0=4.0 * es20, n_step=40, n_temp=30, eta=0.90,
                            seed=7)
    res20 = op.run_replicas(
        model20,
        lambda s: op.NoisyOpticalEvaluator(t20, det, es20,
                                           np.random.default_rng(s)),
        cfg20, 100)
    prob20 = float(op.ground_state_probability(res20, h_min20, model20)[-1])

    model30 = op.random_glass(30, 9)
    t30 = op.spectral_transform(model30)
    cfg_ref = op.AnnealConfig(t0=4.0, n_step=50, n_temp=40, eta=0.92, seed=99)
    ref = op.run_replicas(model30, lambda s: op.ExactEvaluator(model30),
                          cfg_ref, 200)
    h_min30 = min(r.best_h for r in ref)
    es30 = det.full_well / (2 * abs(h_min30))
    cfg30 = op.AnnealConfig(t0=4.0 * es30, n_step=50, n_temp=40, eta=0.92,
                            seed=7)
    res30 = op.run_replicas(
        model30,
        lambda s: op.NoisyOpticalEvaluator(t30, det, es30,
                                           np.random.default_rng(s)),
        cfg30, 100)
    prob30 = float(op.ground_state_probability(res30, h_min30, model30)[-1])

    elapsed = time.time() - tic
    ok = prob20 >= 0.90 and prob30 >= 0.75 and elapsed < 600
    report(f"criterion 03 noisy tier: n=20 P {prob20:.3f} (>= 0.90), "
           f"n=30 P {prob30:.3f} (>= 0.75, ref H_min {h_min30:.0f}), "
           f"{elapsed:.1f}s (< 600s) -> {'PASS' if ok else 'FAIL'}")
    assert prob20 >= 0.90
    assert prob30 >= 0.75
    assert elapsed < 600


def test_criterion_04_noise_budget(report):
    tic = time.time()
    det = op.DetectorModel()
    nb20 = op.noise_budget(det, 20, 3e5)
    nb30 = op.noise_budget(det, 30, 3e5)
    checks = {
        "delta_q": (nb20.delta_q, 21.0),
        "delta_d": (nb20.delta_d, 79.0),
        "delta_h_20": (nb20.delta_h, 2276.0),
        "delta_h_30": (nb30.delta_h, 2774.0),
        "snr_20": (nb20.snr_db, 42.4),
        "snr_30": (nb30.snr_db, 40.7),
    }
    worst = max(abs(got - want) / want for got, want in checks.values())
    elapsed = time.time() - tic
    ok = worst <= 0.01 and elapsed < 1
    report(f"criterion 04 noise budget: dq {nb20.delta_q:.1f}, "
           f"dd {nb20.delta_d:.1f}, dH {nb20.delta_h:.0f}/{nb30.delta_h:.0f}, "
           f"SNR {nb20.snr_db:.1f}/{nb30.snr_db:.1f} dB, worst dev "
           f"{worst * 100:.2f}% (<= 1%), {elapsed:.2f}s (< 1s) -> "
           f"{'PASS' if ok else 'FAIL'}")
    assert worst <= 0.01
    assert elapsed < 1


def test_criterion_05_monte_carlo_noise(report):
    tic = time.time()
    det = op.DetectorModel(frames_averaged=1)
    model = op.mobius_ladder(20)
    t = op.spectral_transform(model)
    ground, h_min = op.brute_force_ground(model)
    es = det.full_well / (2 * abs(h_min))
    rng = np.random.default_rng(1)
    vals = np.array([op.noisy_hamiltonian(t, ground, det, es, rng)
                     for _ in range(10000)])
    analytic = op.noise_budget(det, 20, 3e5).delta_h
    dev = abs(vals.std() / analytic - 1.0)
    elapsed = time.time() - tic
    ok = dev <= 0.05 and elapsed < 30
    report(f"criterion 05 MC noise: empirical std {vals.std():.1f} vs "
           f"analytic {analytic:.1f} e-, dev {dev * 100:.2f}% (<= 5%), "
           f"{elapsed:.1f}s (< 30s) -> {'PASS' if ok else 'FAIL'}")
    assert dev <= 0.05
    assert elapsed < 30


def test_criterion_06_beam_geometry_capacity(report):
    tic = time.time()
    w0, w_slm = op.beam_geometry(1550e-9, 0.377)
    dev_w0 = abs(w0 / 431e-6 - 1.0)
    dev_ws = abs(w_slm / 610e-6 - 1.0)

    geo_a = op.OpticalGeometry(l01=0.377, l12=0.377, l2p=0.377,
                               wavelength=1550e-9, slm_pixels=(1920, 1080),
                               pixel_pitch=8e-6, region_radius=950e-6)
    geo_b = op.OpticalGeometry(l01=0.4, l12=0.4, l2p=0.4,
                               wavelength=800e-9, slm_pixels=(1920, 1080),
                               pixel_pitch=8e-6, region_radius=500e-6)
    geo_c = op.OpticalGeometry(l01=0.4, l12=0.4, l2p=0.4,
                               wavelength=800e-9, slm_pixels=(3840, 2160),
                               pixel_pitch=8e-6, region_radius=500e-6)
    caps = [op.layout_spins(1, g)[1] for g in (geo_a, geo_b, geo_c)]
    cap_dev = max(abs(c / w - 1.0) for c, w in zip(caps, (36, 132, 520)))

    elapsed = time.time() - tic
    ok = dev_w0 <= 0.005 and dev_ws <= 0.005 and cap_dev <= 0.20 and elapsed < 1
    report(f"criterion 06 beam geometry: w0 {w0 * 1e6:.1f}um, "
           f"w_slm {w_slm * 1e6:.1f}um (dev {max(dev_w0, dev_ws) * 100:.2f}% "
           f"<= 0.5%), capacities {caps} vs (36, 132, 520) "
           f"(dev {cap_dev * 100:.1f}% <= 20%), {elapsed:.2f}s (< 1s) -> "
           f"{'PASS' if ok else 'FAIL'}")
    assert dev_w0 <= 0.005 and dev_ws <= 0.005
    assert cap_dev <= 0.20
    assert elapsed < 1


def test_criterion_07_propagation(report):
    tic = time.time()
    lam = 1550e-9
    w0, _ = op.beam_geometry(lam, 0.377)
    worst = 0.0
    for z in (0.1, 0.377, 0.754):
        beam = op.gaussian_field((512, 512), 8e-6, w0)
        out = op.propagate(beam, z, lam)
        w_fit = op.fit_gaussian_radius(out)
        w_th = op.gaussian_radius(w0, z, lam)
        worst = max(worst, abs(w_fit / w_th - 1.0))

    rng = np.random.default_rng(2)
    u = op.FieldGrid(rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64)),
                     8e-6, 8e-6)
    v = op.FieldGrid(rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64)),
                     8e-6, 8e-6)
    a = np.vdot(v.samples, op.propagate(u, 0.01, lam).samples)
    b = np.vdot(op.propagate_adjoint(v, 0.01, lam).samples, u.samples)
    adj = abs(a - b) / abs(a)

    elapsed = time.time() - tic
    ok = worst <= 0.01 and adj <= 1e-9 and elapsed < 60
    report(f"criterion 07 propagation: worst radius dev {worst * 100:.3f}% "
           f"(<= 1%), adjoint rel err {adj:.2e} (<= 1e-9), {elapsed:.1f}s "
           f"(< 60s) -> {'PASS' if ok else 'FAIL'}")
    assert worst <= 0.01
    assert adj <= 1e-9
    assert elapsed < 60


def test_criterion_08_hologram_optimizer(report):
    tic = time.time()
    lam = 1550e-9
    rng = np.random.default_rng(0)

    # analytic gradient against central differences on random pixels
    shape, dx, z = (16, 16), 8e-6, 0.01
    u_i = op.gaussian_field(shape, dx, 40e-6)
    p_true = np.exp(1j * rng.uniform(0, 2 * np.pi, shape))
    u_t = op.propagate(op.FieldGrid(p_true * u_i.samples, dx, dx), z, lam)
    p = (np.exp(1j * rng.uniform(0, 2 * np.pi, shape))
         * rng.uniform(0.5, 1.5, shape))
    delta = 0.1 * np.abs(u_t.samples).max()
    _, grad = op.hologram_loss_grad(p, u_i, u_t, z, lam, delta)
    eps = 1e-7
    fd_worst = 0.0
    for _ in range(10):
        i, j = rng.integers(0, shape[0], 2)
        for direction in (1.0, 1j):
            p_hi = p.copy(); p_hi[i, j] += eps * direction
            p_lo = p.copy(); p_lo[i, j] -= eps * direction
            l_hi, _ = op.hologram_loss_grad(p_hi, u_i, u_t, z, lam, delta)
            l_lo, _ = op.hologram_loss_grad(p_lo, u_i, u_t, z, lam, delta)
            fd = (l_hi - l_lo) / (2 * eps)
            an = 2 * (grad[i, j].real if direction == 1.0 else grad[i, j].imag)
            fd_worst = max(fd_worst, abs(fd - an) / max(abs(fd), 1e-12))

    # two-beam splitting synthesis at 64x64
    shape, dx, z = (64, 64), 8e-6, 0.02
    u_i = op.gaussian_field(shape, dx, 100e-6)
    x = (np.arange(64) - 32) * dx
    xg, yg = np.meshgrid(x, x)
    k = 2 * np.pi / lam
    ideal = sum(np.exp(-1j * k / z * (tx * xg + ty * yg))
                for tx, ty in ((150e-6, 0.0), (-150e-6, 0.0)))
    u_t = op.propagate(op.FieldGrid(ideal * u_i.samples, dx, dx), z, lam)
    p0 = op.phase_only_project(ideal)
    res = op.optimize_hologram(p0, u_i, u_t, z, lam, iters=500, lr=0.02)
    out = op.propagate(op.FieldGrid(res.hologram.field() * u_i.samples,
                                    dx, dx), z, lam)
    fid = op.fidelity_vector(out.intensity().ravel(),
                             u_t.intensity().ravel())

    elapsed = time.time() - tic
    ok = fd_worst <= 1e-5 and fid >= 0.99 and elapsed < 120
    report(f"criterion 08 hologram optimizer: gradient vs FD {fd_worst:.2e} "
           f"(<= 1e-5), synthesis fidelity {fid:.4f} (>= 0.99), "
           f"{elapsed:.1f}s (< 120s) -> {'PASS' if ok else 'FAIL'}")
    assert fd_worst <= 1e-5
    assert fid >= 0.99
    assert elapsed < 120


def test_criterion_09_calibration(report):
    tic = time.time()
    n = 20
    err = RigError.random(n, 5, gain_band=(0.7, 1.3))

    rig = MatrixRig(err)
    tables = op.phase_calibrate(rig)
    injected = np.mod(err.phases[:, [0]] - err.phases[:, 1:] + np.pi,
                      2 * np.pi) - np.pi
    recovered = np.mod(tables.delta_phi + np.pi, 2 * np.pi) - np.pi
    phase_err = float(np.max(np.abs(
        np.mod(recovered - injected + np.pi, 2 * np.pi) - np.pi)))

    det = op.DetectorModel()
    target = op.dft_matrix(n)
    rig_noisy = MatrixRig(err, detector=det,
                          exposure_scale=det.full_well * 0.8 * n,
                          rng=np.random.default_rng(3))
    tables_noisy = op.calibrate_rig(rig_noisy, target)
    fid = op.dft_benchmark(rig_noisy, n, tables_noisy)

    elapsed = time.time() - tic
    ok = phase_err <= 1e-6 and fid >= 0.999 and elapsed < 60
    report(f"criterion 09 calibration: phase recovery {phase_err:.2e} rad "
           f"(<= 1e-6), noisy DFT fidelity {fid:.6f} (>= 0.999), "
           f"{elapsed:.1f}s (< 60s) -> {'PASS' if ok else 'FAIL'}")
    assert phase_err <= 1e-6
    assert fid >= 0.999
    assert elapsed < 60


def test_criterion_10_end_to_end_physical(report):
    tic = time.time()
    j = np.zeros((4, 4))
    for a, b in ((0, 1), (0, 2), (1, 3)):
        j[a, b] = j[b, a] = 1.0
    model = op.IsingModel(4, j)
    t = op.spectral_transform(model)
    ground, h_min = op.brute_force_ground(model)

    rig, _ = op.design_toy_rig(4)
    op.calibrate_rig(rig, t.a)
    evaluator = op.PhysicalOpticalEvaluator(rig, t)

    worst = 0.0
    best_state, best_h = None, np.inf
    for bits in itertools.product([1, -1], repeat=4):
        s = np.array(bits)
        h, _ = evaluator.evaluate(s)
        h_ref = op.hamiltonian_exact(model, s)
        worst = max(worst, abs(h - h_ref) / abs(h_ref))
        if h < best_h:
            best_h, best_state = h, s
    argmin_ok = (op.hamiltonian_exact(model, best_state) == h_min)

    elapsed = time.time() - tic
    ok = worst <= 0.05 and argmin_ok and elapsed < 300
    report(f"criterion 10 end-to-end physical: worst rel err "
           f"{worst * 100:.2f}% (<= 5%), argmin matches brute force: "
           f"{argmin_ok}, {elapsed:.1f}s (< 300s) -> "
           f"{'PASS' if ok else 'FAIL'}")
    assert worst <= 0.05
    assert argmin_ok
    assert elapsed < 300


def test_criterion_11_performance(report):
    tic = time.time()
    rep = op.perf_report(30, op.PerfModel())
    rate_k = rep.rate / 1e3
    energy_m = rep.energy_per_flop * 1e3
    elapsed = time.time() - tic
    ok = (rep.flops == 1860 and round(rate_k, 2) == 5.81
          and round(energy_m, 2) == 2.75 and elapsed < 1)
    report(f"criterion 11 performance: F {rep.flops} (= 1860), rate "
           f"{rate_k:.2f} kFLOP/s (= 5.81), energy {energy_m:.2f} mJ/FLOP "
           f"(= 2.75), {elapsed:.2f}s (< 1s) -> {'PASS' if ok else 'FAIL'}")
    assert rep.flops == 1860
    assert round(rate_k, 2) == 5.81
    assert round(energy_m, 2) == 2.75
    assert elapsed < 1
