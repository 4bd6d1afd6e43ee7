import numpy as np
import pytest

import optising as op
from optising.calibration import MatrixRig, RigError


def make_rig(n=8, seed=5, **kwargs):
    err = RigError.random(n, seed, gain_band=(0.7, 1.3))
    return MatrixRig(err, **kwargs), err


def test_rig_error_random_bands():
    err = RigError.random(6, 0, gain_band=(0.8, 1.2), input_band=(0.9, 1.1))
    assert err.gains.shape == (6, 6)
    assert np.all((err.gains >= 0.8) & (err.gains <= 1.2))
    assert np.all((err.input_gains >= 0.9) & (err.input_gains <= 1.1))
    assert np.all((err.phases >= -np.pi) & (err.phases < np.pi))


def test_matrix_rig_measurement_model():
    rig, err = make_rig(4)
    s = op.dft_matrix(4)
    rig.program_slm1(s)
    e = np.ones(4, dtype=complex)
    rig.program_input(e)
    measured = rig.measure()
    eff = err.gains * np.exp(1j * err.phases) * s
    expected = np.abs(eff @ (err.input_gains * e)) ** 2
    assert np.allclose(measured, expected)


def test_matrix_rig_deactivation_blocks_columns():
    rig, err = make_rig(4)
    rig.program_slm1(np.ones((4, 4), dtype=complex))
    rig.program_input(np.ones(4, dtype=complex))
    rig.deactivate([1, 2, 3])
    only_first = rig.measure()
    eff = err.gains * np.exp(1j * err.phases)
    assert np.allclose(only_first, np.abs(eff[:, 0] * err.input_gains[0]) ** 2)
    rig.reset_regions()
    assert not np.allclose(rig.measure(), only_first)


def test_phase_calibrate_recovers_injected_offsets():
    rig, err = make_rig(10)
    tables = op.phase_calibrate(rig)
    injected = np.mod(err.phases[:, [0]] - err.phases[:, 1:] + np.pi,
                      2 * np.pi) - np.pi
    recovered = np.mod(tables.delta_phi + np.pi, 2 * np.pi) - np.pi
    wrap = np.mod(recovered - injected + np.pi, 2 * np.pi) - np.pi
    assert np.max(np.abs(wrap)) < 1e-9
    assert tables.clamp_excess < 1e-9
    assert not tables.unmeasurable.any()


def test_calibrate_rig_noiseless_reaches_unit_fidelity():
    n = 8
    rig, _ = make_rig(n)
    target = op.dft_matrix(n)
    tables = op.calibrate_rig(rig, target)
    fid = op.dft_benchmark(rig, n, tables)
    assert fid > 1.0 - 1e-6
    assert tables.slm1_residuals[-1] < 1e-3


def test_calibrate_improves_noisy_rig():
    n = 8
    det = op.DetectorModel()
    target = op.dft_matrix(n)
    err = RigError.random(n, 5, gain_band=(0.7, 1.3))

    before_rig = MatrixRig(err, detector=det,
                           exposure_scale=det.full_well * 0.8 * n,
                           rng=np.random.default_rng(1))
    before_rig.program_slm1(target)
    before = op.dft_benchmark(before_rig, n)

    cal_rig = MatrixRig(err, detector=det,
                        exposure_scale=det.full_well * 0.8 * n,
                        rng=np.random.default_rng(1))
    tables = op.calibrate_rig(cal_rig, target)
    after = op.dft_benchmark(cal_rig, n, tables)
    assert after > before
    assert after > 0.999


def test_tables_json_roundtrip(tmp_path):
    rig, _ = make_rig(6)
    tables = op.calibrate_rig(rig, op.dft_matrix(6))
    path = tmp_path / "tables.json"
    tables.to_json(path)
    back = op.CalibrationTables.from_json(path)
    assert np.allclose(back.delta_phi, tables.delta_phi)
    assert np.allclose(back.slm1_matrix, tables.slm1_matrix)
    assert np.allclose(back.slm0_input, tables.slm0_input)
    assert np.allclose(back.phase_correction(), tables.phase_correction())


def test_dft_matrix_unitary():
    w = op.dft_matrix(7)
    assert np.allclose(w @ w.conj().T, np.eye(7), atol=1e-12)
