"""Phase and amplitude calibration against intensity-only measurements.

A "rig" is anything exposing the measurement interface below: program the
splitting matrix and input amplitudes, deactivate regions or add phase
offsets, and measure output intensities.  MatrixRig is the cheap
matrix-level model with injected multiplicative errors; the diffraction
chain in the rig module implements the same interface, so the procedures
here run unchanged against either.

The phase protocol interferes beam 1 with beam i+1 through four intensity
measurements per column and recovers the within-row phase differences via
an arccos with a sign branch; amplitude calibration is an iterative
multiplicative update toward the target magnitudes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .optical import DetectorModel, detect, fidelity_matrix


# ---------------------------------------------------------------------------
# Injected-error model and matrix-level rig

@dataclass(frozen=True)
class RigError:
    """Multiplicative systematic errors of a simulated rig.

    The element actually implemented when the splitting matrix is
    programmed with S is gains * exp(i phases) * S; input port j carries
    the extra amplitude factor input_gains[j].
    """

    gains: np.ndarray        # (n, n) positive
    phases: np.ndarray       # (n, n) radians
    input_gains: np.ndarray  # (n,) positive

    def __post_init__(self):
        for name in ("gains", "phases", "input_gains"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} must be finite")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.gains <= 0) or np.any(self.input_gains <= 0):
            raise ValueError("gains must be positive")

    @property
    def n(self):
        return self.gains.shape[0]

    @classmethod
    def random(cls, n: int, seed: int, gain_band=(0.5, 1.5),
               input_band=(0.5, 1.5)) -> "RigError":
        rng = np.random.default_rng(seed)
        return cls(
            gains=rng.uniform(gain_band[0], gain_band[1], size=(n, n)),
            phases=rng.uniform(-np.pi, np.pi, size=(n, n)),
            input_gains=rng.uniform(input_band[0], input_band[1], size=n),
        )

    @classmethod
    def none(cls, n: int) -> "RigError":
        return cls(gains=np.ones((n, n)), phases=np.zeros((n, n)),
                   input_gains=np.ones(n))


class MatrixRig:
    """Matrix-level simulated rig exposing only intensity measurements.

    Ground-truth errors are private by convention: calibration procedures
    must go through program_*/deactivate/measure alone.
    """

    def __init__(self, error: RigError, detector: DetectorModel | None = None,
                 exposure_scale: float = 1.0, rng=None):
        self._error = error
        self.detector = detector
        self.exposure_scale = exposure_scale
        self.rng = (rng if isinstance(rng, np.random.Generator)
                    else np.random.default_rng(rng))
        n = error.n
        self._slm1 = np.ones((n, n), dtype=complex)
        self._e_in = np.ones(n, dtype=complex)
        self._active = np.ones(n, dtype=bool)
        self._region_phase = np.zeros(n)

    @property
    def n(self):
        return self._error.n

    def program_slm1(self, s):
        s = np.asarray(s, dtype=complex)
        if s.shape != (self.n, self.n):
            raise ValueError("splitting matrix has wrong shape")
        self._slm1 = s.copy()

    def program_input(self, e_in):
        e_in = np.asarray(e_in, dtype=complex)
        if e_in.shape != (self.n,):
            raise ValueError("input vector has wrong length")
        self._e_in = e_in.copy()

    def deactivate(self, regions):
        for r in np.atleast_1d(regions):
            self._active[int(r)] = False

    def add_region_phase(self, region: int, phase: float):
        self._region_phase[int(region)] += phase

    def reset_regions(self):
        self._active[:] = True
        self._region_phase[:] = 0.0

    def _ideal_intensity(self) -> np.ndarray:
        mod = (self._active * np.exp(1j * self._region_phase)
               * self._error.input_gains * self._e_in)
        actual = self._error.gains * np.exp(1j * self._error.phases) * self._slm1
        return np.abs(actual @ mod) ** 2

    def meter(self, margin: float = 0.5):
        """Auto-exposure: map the current peak signal to margin * full_well.

        Mirrors setting the camera exposure from a pilot frame; no-op
        without a detector.  Measurements that are compared against each
        other must share one metering call.
        """
        if self.detector is None:
            return
        peak = float(self._ideal_intensity().max())
        if peak > 0:
            self.exposure_scale = margin * self.detector.full_well / peak

    def measure(self) -> np.ndarray:
        """Output intensity vector for the current programming."""
        i_vec = self._ideal_intensity()
        if self.detector is None:
            return i_vec
        return detect(i_vec, self.detector, self.exposure_scale, self.rng).electrons


# ---------------------------------------------------------------------------
# Calibration tables

@dataclass
class CalibrationTables:
    """Everything the calibration produced: within-row phase corrections,
    the calibrated splitting matrix, and the input amplitude vector."""

    delta_phi: np.ndarray            # (n, n-1) radians, column j -> region j+1
    slm1_matrix: np.ndarray | None = None   # complex calibrated S
    slm0_input: np.ndarray | None = None    # complex calibrated E_in
    unmeasurable: np.ndarray | None = None  # bool (n, n-1) dead-beam flags
    clamp_excess: float = 0.0               # worst |arccos arg| - 1 excursion
    slm1_residuals: list = field(default_factory=list)

    @property
    def n(self):
        return self.delta_phi.shape[0]

    def phase_correction(self) -> np.ndarray:
        """Unit-magnitude (n, n) correction; column 0 is the reference."""
        n = self.n
        corr = np.ones((n, n), dtype=complex)
        corr[:, 1:] = np.exp(1j * self.delta_phi)
        return corr

    def to_json(self, path):
        doc = {
            "delta_phi": self.delta_phi.tolist(),
            "clamp_excess": self.clamp_excess,
            "slm1_residuals": list(map(float, self.slm1_residuals)),
        }
        if self.slm1_matrix is not None:
            doc["slm1_matrix_re"] = self.slm1_matrix.real.tolist()
            doc["slm1_matrix_im"] = self.slm1_matrix.imag.tolist()
        if self.slm0_input is not None:
            doc["slm0_input_re"] = self.slm0_input.real.tolist()
            doc["slm0_input_im"] = self.slm0_input.imag.tolist()
        if self.unmeasurable is not None:
            doc["unmeasurable"] = self.unmeasurable.tolist()
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)

    @classmethod
    def from_json(cls, path) -> "CalibrationTables":
        with open(path) as fh:
            doc = json.load(fh)
        t = cls(delta_phi=np.asarray(doc["delta_phi"], dtype=float),
                clamp_excess=doc.get("clamp_excess", 0.0),
                slm1_residuals=doc.get("slm1_residuals", []))
        if "slm1_matrix_re" in doc:
            t.slm1_matrix = (np.asarray(doc["slm1_matrix_re"])
                             + 1j * np.asarray(doc["slm1_matrix_im"]))
        if "slm0_input_re" in doc:
            t.slm0_input = (np.asarray(doc["slm0_input_re"])
                            + 1j * np.asarray(doc["slm0_input_im"]))
        if "unmeasurable" in doc:
            t.unmeasurable = np.asarray(doc["unmeasurable"], dtype=bool)
        return t


# ---------------------------------------------------------------------------
# Procedures

DEAD_BEAM_TOL = 1e-12


def phase_calibrate(rig) -> CalibrationTables:
    """Recover the within-row phase differences of the implemented matrix.

    With the all-one splitting matrix and all inputs lit, each step keeps
    beams 1 and i+1 together (M1), separately (M3, M4), and together with a
    pi/2 offset on beam i+1 (M2); delta_phi[i, j] = phi_{i,1} - phi_{i,j+1}
    follows from the interference terms, the sign taken from the M2 branch.

    Beam selection is done by deactivating the other encoding regions, not
    by reprogramming the input stage: the realized phases of a shared input
    hologram shift when its weights change, so the input pattern must stay
    fixed across all phase comparisons.
    """
    n = rig.n
    rig.reset_regions()
    rig.program_slm1(np.ones((n, n), dtype=complex))
    rig.program_input(np.ones(n, dtype=complex))
    delta_phi, dead, clamp_excess = _interference_sweep(rig)
    return CalibrationTables(delta_phi=delta_phi, unmeasurable=dead,
                             clamp_excess=max(0.0, clamp_excess))


def _interference_sweep(rig):
    """Measure realized phase differences phi_{i,1} - phi_{i,j+1} for the
    currently programmed splitting matrix and input, using deactivation to
    select beam pairs.  Returns (delta_phi, dead-mask, clamp excess)."""
    n = rig.n
    delta_phi = np.zeros((n, n - 1))
    dead = np.zeros((n, n - 1), dtype=bool)
    clamp_excess = 0.0
    for j in range(n - 1):
        others = [r for r in range(n) if r not in (0, j + 1)]

        rig.reset_regions()
        rig.deactivate(others)
        # one exposure per column: M1..M4 are compared against each other
        rig.meter(margin=0.2)
        m1 = rig.measure()

        rig.deactivate(j + 1)
        m3 = rig.measure()

        rig.reset_regions()
        rig.deactivate(others)
        rig.deactivate(0)
        m4 = rig.measure()

        rig.reset_regions()
        rig.deactivate(others)
        rig.add_region_phase(j + 1, np.pi / 2)
        m2 = rig.measure()
        rig.reset_regions()

        prod = m3 * m4
        for i in range(n):
            if prod[i] <= DEAD_BEAM_TOL * max(1.0, m1[i]) ** 2:
                dead[i, j] = True
                continue
            # cos and sin branches of the interference term; atan2 keeps
            # the estimate well conditioned near 0 and pi, where an
            # arccos of the cos branch alone would amplify readout bias
            cos_b = (m1[i] - m3[i] - m4[i]) / (2.0 * math.sqrt(prod[i]))
            sin_b = (m2[i] - m3[i] - m4[i]) / (2.0 * math.sqrt(prod[i]))
            clamp_excess = max(clamp_excess, math.hypot(cos_b, sin_b) - 1.0)
            delta_phi[i, j] = math.atan2(sin_b, cos_b)
    return delta_phi, dead, clamp_excess


def phase_refine(rig, target_a, s, n_rounds: int = 2):
    """Correct the programmed phases at the operating point.

    The initial phase table is taken with the all-one matrix, but the
    realized phase of each hologram component shifts when the programmed
    weights change, so the matrix built from that table lands a few tens
    of degrees off target.  This reruns the interference sweep with the
    operating matrix programmed and folds the residual phase error of each
    element back into it; the input pattern is left untouched.
    """
    n = rig.n
    target_a = np.asarray(target_a, dtype=complex)
    target_diff = np.angle(target_a[:, :1] * np.conj(target_a[:, 1:])
                           + (np.abs(target_a[:, 1:]) == 0))
    s = np.array(s, dtype=complex)
    for _ in range(n_rounds):
        rig.reset_regions()
        rig.program_slm1(s)
        measured, dead, _ = _interference_sweep(rig)
        err = np.where(dead, 0.0, measured - target_diff)
        s[:, 1:] *= np.exp(1j * err)
    rig.program_slm1(s)
    return s


def amplitude_calibrate_slm1(rig, target_a, tables: CalibrationTables,
                             n_rounds: int = 4, damping: float = 0.5,
                             s_init=None, e_in=None):
    """Iteratively pull the measured intensity matrix toward |target|^2.

    Starting from S = target * phase-correction, each round measures the
    output intensity matrix C under identity inputs and applies
    S_ij <- S_ij * |A_ij| / sqrt(C_ij); entries with C ~ 0 where |A| > 0
    are flagged and skipped.

    The comparison is per column: the splitting stage only controls the
    relative weights within a column (a phase hologram redistributes but
    cannot change a region's total throughput, and the detector scale is
    arbitrary), so each column of sqrt(C) is normalized to the matching
    target column before the ratio is formed.  Column scales are the input
    stage's job.

    The update is damped (ratio ** damping) because the realized column
    shares respond nonlinearly to the programmed weights on a phase-only
    hologram; the best-residual matrix over the rounds is kept.
    """
    n = rig.n
    target_a = np.asarray(target_a, dtype=complex)
    s = (target_a * tables.phase_correction() if s_init is None
         else np.asarray(s_init, dtype=complex))
    abs_a = np.abs(target_a)
    col_norm_a = np.linalg.norm(abs_a, axis=0, keepdims=True)
    flagged = np.zeros((n, n), dtype=bool)
    residuals = []
    c = None
    rig.reset_regions()
    rig.program_input(np.ones(n, dtype=complex) if e_in is None
                      else np.asarray(e_in, dtype=complex))
    for _ in range(n_rounds):
        rig.program_slm1(s)
        c = _measure_identity_matrix(rig)
        root = np.sqrt(np.maximum(c, 0.0))
        col_norm = np.linalg.norm(root, axis=0, keepdims=True)
        root = root * np.where(col_norm > 0, col_norm_a / np.where(
            col_norm > 0, col_norm, 1.0), 1.0)
        residuals.append(float(np.linalg.norm(root - abs_a) /
                               max(np.linalg.norm(abs_a), 1e-300)))
        bad = (root <= DEAD_BEAM_TOL) & (abs_a > 0)
        flagged |= bad
        if residuals[-1] == min(residuals):
            best_s, best_c = s, c
        ratio = np.where(bad | (root == 0), 1.0, abs_a / np.where(root == 0, 1.0, root))
        s = s * ratio ** damping
    s, c = best_s, best_c
    tables.slm1_matrix = s
    tables.slm1_residuals = residuals
    tables.unmeasurable_amplitude = flagged
    rig.program_slm1(s)
    return s, residuals, c


def _measure_identity_matrix(rig) -> np.ndarray:
    """Output intensity matrix column by column, isolating one encoding
    region at a time by deactivating the others (the shared input pattern
    stays untouched so its realized beam weights do not drift)."""
    n = rig.n
    cols = []
    for j in range(n):
        rig.reset_regions()
        rig.deactivate([r for r in range(n) if r != j])
        if j == 0:
            # all columns share one exposure so the matrix is comparable
            rig.meter(margin=0.25)
        cols.append(rig.measure())
    rig.reset_regions()
    return np.stack(cols, axis=1)


def amplitude_calibrate_slm0(rig, target_a, tables: CalibrationTables,
                             n_rounds: int = 4, c_matrix=None):
    """Equalize the per-column contributions by adjusting input amplitudes.

    Each round isolates every region j in turn (all others deactivated)
    under one shared exposure and records the column peak max_i (F_j)_i.
    Only relative input weights are physical (the input hologram is a
    phase pattern and the detector scale is arbitrary), so the measured
    peaks and the target column maxima max_i |A_ij| are both normalized
    before the damped ratio update is applied.
    """
    n = rig.n
    abs_a = np.abs(np.asarray(target_a, dtype=complex))
    col_max = abs_a.max(axis=0)
    target = col_max / np.linalg.norm(col_max)
    if c_matrix is not None:
        peak = np.sqrt(np.maximum(np.asarray(c_matrix, dtype=float).max(axis=0),
                                  DEAD_BEAM_TOL))
        e_in = np.where(peak > DEAD_BEAM_TOL, target / peak, 1.0)
    else:
        e_in = np.ones(n)
    e_in = (e_in / np.abs(e_in).max()).astype(complex)
    dead_cols = np.zeros(n, dtype=bool)
    damping = 0.5
    for _ in range(n_rounds):
        rig.program_input(e_in)
        peaks = np.zeros(n)
        for j in range(n):
            rig.reset_regions()
            rig.deactivate([r for r in range(n) if r != j])
            if j == 0:
                # per-round exposure, shared across the column isolations
                rig.meter(margin=0.25)
            peaks[j] = float(np.max(rig.measure()))
        rig.reset_regions()
        dead_cols |= peaks <= DEAD_BEAM_TOL
        measured = np.sqrt(np.maximum(peaks, DEAD_BEAM_TOL))
        measured = measured / np.linalg.norm(measured)
        ratio = np.where(dead_cols, 1.0, target / measured)
        e_in = e_in * ratio ** damping
        # the global input scale is arbitrary; keep it pinned so detector
        # signal levels do not drift between rounds
        top = np.abs(e_in).max()
        if top > 0:
            e_in = e_in / top
    rig.program_input(e_in)
    tables.slm0_input = e_in
    tables.dead_columns = dead_cols
    rig.program_input(e_in)
    return e_in


def calibrate_rig(rig, target_a, n_rounds_slm1: int = 6,
                  n_rounds_slm0: int = 4,
                  n_refine_cycles: int = 5) -> CalibrationTables:
    """Full sequence: phase protocol, SLM1 amplitudes, SLM0 inputs, then
    interleaved phase/amplitude refinement at the operating point; leaves
    the rig programmed with the calibrated matrix and input vector."""
    tables = phase_calibrate(rig)
    s, _, c = amplitude_calibrate_slm1(rig, target_a, tables, n_rounds_slm1,
                                       damping=0.3)
    e_in = amplitude_calibrate_slm0(rig, target_a, tables, n_rounds_slm0,
                                    c_matrix=c)
    for _ in range(n_refine_cycles):
        s = phase_refine(rig, target_a, s, n_rounds=1)
        s, _, _ = amplitude_calibrate_slm1(rig, target_a, tables, n_rounds=5,
                                           s_init=s, e_in=e_in, damping=0.25)
    # amplitude rounds perturb the realized phases a little; finish on phase
    s = phase_refine(rig, target_a, s, n_rounds=1)
    tables.slm1_matrix = s
    rig.reset_regions()
    rig.program_slm1(s)
    rig.program_input(e_in)
    return tables


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix with omega = exp(-2 pi i / n)."""
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n) / math.sqrt(n)


def dft_benchmark(rig, n: int, tables: CalibrationTables | None = None) -> float:
    """Score a calibrated rig on the unitary DFT target.

    Inputs are the columns of W^-1 = W^H (uniform amplitudes, phases
    applied on top of the calibrated input vector); a perfect rig returns
    the identity intensity matrix, scored with the matrix fidelity.
    """
    w = dft_matrix(n)
    e_base = tables.slm0_input if tables is not None and tables.slm0_input is not None \
        else np.ones(n, dtype=complex)
    w_inv = w.conj().T
    cols = []
    rig.reset_regions()
    for kcol in range(n):
        rig.program_input(e_base * np.exp(1j * np.angle(w_inv[:, kcol])))
        if kcol == 0:
            rig.meter(margin=0.5)
        cols.append(rig.measure())
    rig.program_input(e_base)
    out = np.stack(cols, axis=1)
    return fidelity_matrix(out, np.eye(n))
