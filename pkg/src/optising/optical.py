"""Optical Hamiltonian evaluation at the matrix level, plus noise budgets.

Two fidelity tiers live here: ideal complex matrix arithmetic (E = A s,
intensities |E_i|^2, signed summation) and the same path corrupted by a
camera model with readout, dark, and shot noise plus ADC quantization.
The full diffraction tier is provided by the rig module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ising import IsingModel, SpectralTransform, as_spins, hamiltonian_exact

# Elementary charge as used in the camera datasheet arithmetic.
ELEMENTARY_CHARGE = 1.6e-19


# ---------------------------------------------------------------------------
# Ideal tier

def ovmm_ideal(t: SpectralTransform, s) -> np.ndarray:
    """Output field E = A s with unit input amplitude.

    Each entry is purely imaginary (negative-eigenvalue rows) or purely
    real (the rest).
    """
    s = as_spins(s, t.n).astype(float)
    return t.a @ s


def hamiltonian_from_intensities(i_vec, sign_mask, scale: float = 1.0,
                                 allow_negative: bool = False) -> float:
    """H = (sum of negative-row intensities - sum of the rest) / (2 * scale).

    ``scale`` is the squared input amplitude (1 in simulation units, or the
    electron-per-unit-intensity factor for detector output).  Negative
    entries are rejected unless the caller marks the vector as noisy
    detector output, where small negative excursions are expected.
    """
    i_vec = np.asarray(i_vec, dtype=float)
    sign_mask = np.asarray(sign_mask, dtype=bool)
    if i_vec.shape != sign_mask.shape:
        raise ValueError("intensity vector and sign mask differ in length")
    if scale <= 0:
        raise ValueError("scale must be positive")
    if not allow_negative and np.any(i_vec < 0):
        raise ValueError("negative intensities are not physical here")
    return float((i_vec[sign_mask].sum() - i_vec[~sign_mask].sum()) / (2.0 * scale))


# ---------------------------------------------------------------------------
# Detector model

@dataclass(frozen=True)
class DetectorModel:
    """Camera noise model in electron units.

    readout_noise already includes the thermal and quantization
    contributions, matching how camera datasheets quote it.  bias_offset is
    the ADC pedestal: raw counts are clamped to the ADC range around it and
    the pedestal is subtracted afterwards, so reported intensities near
    zero keep symmetric noise (and may go slightly negative).
    """

    full_well: float = 6.0e5          # electrons
    adc_bits: int = 14
    dark_current: float = 60e-15      # amperes
    exposure: float = 16.7e-3         # seconds
    readout_noise: float = 1000.0     # electrons RMS
    frames_averaged: int = 3
    bias_offset: float = 5000.0       # electrons

    def __post_init__(self):
        if min(self.full_well, self.dark_current, self.exposure, self.readout_noise) <= 0:
            raise ValueError("detector parameters must be positive")
        if self.adc_bits < 1:
            raise ValueError("adc_bits must be >= 1")
        if self.frames_averaged < 1:
            raise ValueError("frames_averaged must be >= 1")

    @property
    def delta_q(self) -> float:
        """Quantization noise per the datasheet convention."""
        return self.full_well / 2 ** (self.adc_bits - 1) / math.sqrt(12.0)

    @property
    def delta_d(self) -> float:
        """Dark noise: sqrt(dark charge in electrons per frame)."""
        return math.sqrt(self.dark_current * self.exposure / ELEMENTARY_CHARGE)

    @property
    def adc_step(self) -> float:
        return self.full_well / 2 ** self.adc_bits

    @classmethod
    def from_dict(cls, data: dict) -> "DetectorModel":
        return cls(**data)


@dataclass
class Detection:
    electrons: np.ndarray
    saturated: bool


def detect(signal, det: DetectorModel, exposure_scale: float,
           rng: np.random.Generator) -> Detection:
    """Convert ideal intensities (or a complex field vector) to noisy,
    quantized electron counts.

    Per frame: mean signal exposure_scale * I, plus independent Gaussian
    readout, dark, and shot noise; the ADC clamps raw counts (pedestal
    included) and quantizes to full_well / 2^bits.  frames_averaged frames
    are averaged, scaling every noise term by 1/sqrt(frames).
    """
    signal = np.asarray(signal)
    i_vec = np.abs(signal) ** 2 if np.iscomplexobj(signal) else signal.astype(float)
    if np.any(i_vec < 0):
        raise ValueError("ideal intensities must be nonnegative")
    mu = exposure_scale * i_vec
    saturated = bool(np.any(mu > det.full_well))
    mu = np.minimum(mu, det.full_well)
    shot_sigma = np.sqrt(mu)
    step = det.adc_step
    acc = np.zeros_like(mu)
    for _ in range(det.frames_averaged):
        frame = (
            mu
            + rng.normal(0.0, det.readout_noise, size=mu.shape)
            + rng.normal(0.0, det.delta_d, size=mu.shape)
            + rng.normal(0.0, 1.0, size=mu.shape) * shot_sigma
        )
        raw = frame + det.bias_offset
        np.clip(raw, 0.0, det.full_well + det.bias_offset, out=raw)
        raw = np.round(raw / step) * step
        acc += raw - det.bias_offset
    return Detection(electrons=acc / det.frames_averaged, saturated=saturated)


def noisy_hamiltonian(t: SpectralTransform, s, det: DetectorModel,
                      exposure_scale: float, rng: np.random.Generator) -> float:
    """Ideal transform -> detector -> signed intensity sum, in electron units."""
    e = ovmm_ideal(t, s)
    d = detect(e, det, exposure_scale, rng)
    return hamiltonian_from_intensities(d.electrons, t.sign_mask, allow_negative=True)


# ---------------------------------------------------------------------------
# Evaluators

class ExactEvaluator:
    """Direct quadratic oracle; reference tier."""

    def __init__(self, model: IsingModel):
        self.model = model

    def evaluate(self, s):
        return hamiltonian_exact(self.model, s), None


class IdealOpticalEvaluator:
    """Noiseless matrix-level optical path."""

    def __init__(self, transform: SpectralTransform):
        self.transform = transform

    def evaluate(self, s):
        i_vec = np.abs(ovmm_ideal(self.transform, s)) ** 2
        h = hamiltonian_from_intensities(i_vec, self.transform.sign_mask)
        return h, i_vec


class NoisyOpticalEvaluator:
    """Matrix-level optical path read out through the camera model.

    Returns H in electron units; divide by the normalization coefficient K
    (= exposure_scale here) to compare with theoretical units.
    """

    def __init__(self, transform: SpectralTransform, detector: DetectorModel,
                 exposure_scale: float, rng):
        self.transform = transform
        self.detector = detector
        self.exposure_scale = exposure_scale
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)

    def evaluate(self, s):
        e = ovmm_ideal(self.transform, s)
        d = detect(e, self.detector, self.exposure_scale, self.rng)
        h = hamiltonian_from_intensities(d.electrons, self.transform.sign_mask,
                                         allow_negative=True)
        return h, d.electrons


# ---------------------------------------------------------------------------
# Fidelity and accuracy metrics

def fidelity_vector(i_exp, i_theo) -> float:
    """Normalized inner product of two intensity vectors; 1 means parallel."""
    i_exp = np.asarray(i_exp, dtype=float).ravel()
    i_theo = np.asarray(i_theo, dtype=float).ravel()
    if i_exp.shape != i_theo.shape:
        raise ValueError("intensity vectors differ in length")
    na, nb = np.linalg.norm(i_exp), np.linalg.norm(i_theo)
    if na == 0 or nb == 0:
        raise ValueError("fidelity is undefined for a zero vector")
    return float(abs(i_exp @ i_theo) / (na * nb))


def fidelity_matrix(i_exp, i_theo) -> float:
    """Frobenius-normalized inner product of two intensity matrices."""
    i_exp = np.asarray(i_exp, dtype=float)
    i_theo = np.asarray(i_theo, dtype=float)
    if i_exp.shape != i_theo.shape:
        raise ValueError("intensity matrices differ in shape")
    return fidelity_vector(i_exp.ravel(), i_theo.ravel())


def normalization_coefficient(h_exp, h_theo, tol: float = 1e-12):
    """Per-sample K = H_exp / H_theo; samples with H_theo = 0 are excluded."""
    h_exp = np.asarray(h_exp, dtype=float)
    h_theo = np.asarray(h_theo, dtype=float)
    if h_exp.shape != h_theo.shape:
        raise ValueError("paired samples differ in length")
    mask = np.abs(h_theo) > tol
    if not mask.any():
        raise ValueError("no samples with nonzero theoretical Hamiltonian")
    k = h_exp[mask] / h_theo[mask]
    return float(k.mean()), float(k.std())


# ---------------------------------------------------------------------------
# Noise budget and performance accounting

@dataclass
class NoiseBudget:
    n: int
    h0: float
    delta_q: float
    delta_d: float
    delta_p_max: float
    delta_i_dark: float
    delta_i_max: float
    delta_h: float
    snr_db: float
    resolution: float
    delta_h_r: float | None = None
    resolvable: bool | None = None

    def as_dict(self):
        return {k: v for k, v in self.__dict__.items()}


def noise_budget(det: DetectorModel, n: int, h0: float,
                 h_min: float | None = None,
                 delta_h_min: float | None = None) -> NoiseBudget:
    """Ground-state noise budget: one beam at full well, n-1 dark beams.

    delta_h = 1/2 sqrt((n-1) * dI_dark^2 + dI_max^2); the resolution R is
    compared against the relative Hamiltonian interval when h_min and
    delta_h_min are supplied.
    """
    if h0 == 0:
        raise ValueError("h0 must be nonzero")
    dark = math.sqrt(det.readout_noise ** 2 + det.delta_d ** 2)
    bright = math.sqrt(dark ** 2 + det.full_well)
    delta_h = 0.5 * math.sqrt((n - 1) * dark ** 2 + bright ** 2)
    snr = 20.0 * math.log10(abs(h0) / delta_h)
    res = abs(delta_h / h0)
    dhr = None
    resolvable = None
    if h_min is not None and delta_h_min is not None:
        dhr = abs(delta_h_min / h_min)
        resolvable = dhr > res
    return NoiseBudget(
        n=n, h0=h0,
        delta_q=det.delta_q, delta_d=det.delta_d,
        delta_p_max=math.sqrt(det.full_well),
        delta_i_dark=dark, delta_i_max=bright,
        delta_h=delta_h, snr_db=snr, resolution=res,
        delta_h_r=dhr, resolvable=resolvable,
    )


@dataclass(frozen=True)
class PerfModel:
    t_p: float = 5e-9      # light propagation
    t_u: float = 0.15      # modulator update
    t_d: float = 0.17      # detection
    t_e: float = 0.0       # electronic step
    power: float = 16.0    # watts, laser + camera

    def __post_init__(self):
        if min(self.t_p, self.t_u, self.t_d, self.t_e) < 0 or self.power < 0:
            raise ValueError("timings and power must be nonnegative")

    @property
    def t_iter(self) -> float:
        return self.t_p + self.t_u + self.t_d + self.t_e


@dataclass
class PerfReport:
    n: int
    flops: int
    t_iter: float
    rate: float            # FLOP/s
    energy_per_flop: float # J/FLOP

    def as_dict(self):
        return dict(self.__dict__)


def perf_report(n: int, perf: PerfModel) -> PerfReport:
    """F = 2 n^2 + 2 n operations per optical pass."""
    flops = 2 * n * n + 2 * n
    rate = flops / perf.t_iter
    return PerfReport(n=n, flops=flops, t_iter=perf.t_iter, rate=rate,
                      energy_per_flop=perf.power / rate)
