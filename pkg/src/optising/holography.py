"""Scalar diffraction simulation and SLM pattern synthesis.

Free-space propagation uses the Rayleigh-Sommerfeld first solution,
discretized as a linear convolution: the kernel is sampled over a
double-length support, both operands are zero-padded to 3L x 3L, the
spectra are multiplied, and the result is clipped back to L x L and
scaled by dx*dy.  The adjoint operator (conjugated kernel spectrum)
drives the gradient-descent hologram optimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, SamplingError

_KERNEL_CACHE: dict = {}
_KERNEL_CACHE_MAX = 16


# ---------------------------------------------------------------------------
# Field containers

@dataclass
class FieldGrid:
    """Complex field sampled on a uniform grid centered on the optical axis."""

    samples: np.ndarray
    dx: float
    dy: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.ndim != 2 or min(self.samples.shape) < 2:
            raise ValueError("field grid must be 2-D with at least 2 samples per axis")
        if self.dx <= 0 or self.dy <= 0:
            raise ValueError("sampling intervals must be positive")

    @property
    def shape(self):
        return self.samples.shape

    def coords(self):
        """Centered physical coordinates (x along axis 1, y along axis 0)."""
        ny, nx = self.samples.shape
        x = (np.arange(nx) - nx / 2) * self.dx
        y = (np.arange(ny) - ny / 2) * self.dy
        return x, y

    def power(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2) * self.dx * self.dy)

    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    def copy(self) -> "FieldGrid":
        return FieldGrid(self.samples.copy(), self.dx, self.dy)


@dataclass
class Hologram:
    """Phase-only SLM pattern; phase in [0, 2*pi)."""

    phase: np.ndarray
    dx: float
    dy: float

    def __post_init__(self):
        self.phase = np.mod(np.asarray(self.phase, dtype=float), 2 * np.pi)

    @property
    def shape(self):
        return self.phase.shape

    def field(self) -> np.ndarray:
        """Unit-magnitude complex modulation exp(i*phase)."""
        return np.exp(1j * self.phase)

    def to_gray8(self) -> np.ndarray:
        """8-bit export: 0..255 maps to phase 0..2*pi."""
        return np.round(self.phase / (2 * np.pi) * 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# Propagation

def _kernel_spectrum(shape, dx, dy, z, wavelength):
    """DFT of the Rayleigh-Sommerfeld kernel sampled on the double support.

    h(d) = z (1 + i k r) e^{-i k r} / (2 pi r^3), r = sqrt(|d|^2 + z^2);
    this is -1/(2 pi) d/dz' [e^{-i k r}/r].
    """
    key = (shape, dx, dy, z, wavelength)
    cached = _KERNEL_CACHE.get(key)
    if cached is not None:
        return cached
    ny, nx = shape
    k = 2 * np.pi / wavelength
    # displacement grids covering -(L-1)..(L-1), laid out mod 3L
    px, py = 3 * nx, 3 * ny
    ix = np.arange(px)
    iy = np.arange(py)
    ddx = np.where(ix < px - (nx - 1), ix, ix - px).astype(float) * dx
    ddy = np.where(iy < py - (ny - 1), iy, iy - py).astype(float) * dy
    # zero out displacements outside the needed double-length support
    mx = np.abs(np.where(ix < px - (nx - 1), ix, ix - px)) <= nx - 1
    my = np.abs(np.where(iy < py - (ny - 1), iy, iy - py)) <= ny - 1
    r = np.sqrt(ddx[None, :] ** 2 + ddy[:, None] ** 2 + z * z)
    h = z * (1.0 + 1j * k * r) * np.exp(-1j * k * r) / (2 * np.pi * r ** 3)
    h *= my[:, None] & mx[None, :]
    spec = np.fft.fft2(h)
    if len(_KERNEL_CACHE) >= _KERNEL_CACHE_MAX:
        _KERNEL_CACHE.pop(next(iter(_KERNEL_CACHE)))
    _KERNEL_CACHE[key] = spec
    return spec


def _check_sampling(u: FieldGrid, z: float, wavelength: float):
    """The kernel's local spatial frequency rho/(lambda r) must stay below
    the grid Nyquist limit over the sampled support."""
    ny, nx = u.shape
    rho = math.hypot(nx * u.dx, ny * u.dy)
    f_max = rho / (wavelength * math.hypot(rho, z))
    nyquist = 0.5 / max(u.dx, u.dy)
    if f_max > nyquist:
        raise SamplingError(
            f"kernel frequency {f_max:.3g}/m exceeds grid Nyquist {nyquist:.3g}/m "
            f"for z={z}; use finer sampling or larger z"
        )


def propagate(u: FieldGrid, z: float, wavelength: float,
              pixel_spectrum: np.ndarray | None = None) -> FieldGrid:
    """Propagate a field by distance z > 0.

    pixel_spectrum, when given, is the precomputed 3Lx x 3Ly spectrum of
    the per-pixel wavefront (the SLM pixel aperture); it multiplies the
    kernel spectrum.
    """
    if z <= 0:
        raise ValueError("propagation distance must be positive")
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    _check_sampling(u, z, wavelength)
    ny, nx = u.shape
    spec = _kernel_spectrum((ny, nx), u.dx, u.dy, z, wavelength)
    if pixel_spectrum is not None:
        spec = spec * pixel_spectrum
    pad = np.zeros((3 * ny, 3 * nx), dtype=complex)
    pad[:ny, :nx] = u.samples
    out = np.fft.ifft2(np.fft.fft2(pad) * spec)[:ny, :nx]
    return FieldGrid(out * (u.dx * u.dy), u.dx, u.dy)


def propagate_adjoint(v: FieldGrid, z: float, wavelength: float,
                      pixel_spectrum: np.ndarray | None = None) -> FieldGrid:
    """Adjoint of propagate: same structure with the conjugated spectrum,
    so that <propagate(u), v> == <u, propagate_adjoint(v)>."""
    if z <= 0:
        raise ValueError("propagation distance must be positive")
    _check_sampling(v, z, wavelength)
    ny, nx = v.shape
    spec = np.conj(_kernel_spectrum((ny, nx), v.dx, v.dy, z, wavelength))
    if pixel_spectrum is not None:
        spec = spec * np.conj(pixel_spectrum)
    pad = np.zeros((3 * ny, 3 * nx), dtype=complex)
    pad[:ny, :nx] = v.samples
    out = np.fft.ifft2(np.fft.fft2(pad) * spec)[:ny, :nx]
    return FieldGrid(out * (v.dx * v.dy), v.dx, v.dy)


def pixel_aperture_spectrum(shape, dx, dy, fill_x: float = 1.0,
                            fill_y: float = 1.0) -> np.ndarray:
    """Spectrum of a rectangular pixel aperture on the padded grid
    (separable sinc); fill factors in (0, 1]."""
    ny, nx = shape
    fx = np.fft.fftfreq(3 * nx, d=dx)
    fy = np.fft.fftfreq(3 * ny, d=dy)
    return np.outer(np.sinc(fy * dy * fill_y), np.sinc(fx * dx * fill_x))


# ---------------------------------------------------------------------------
# Gaussian beams

def gaussian_field(shape, dx, w: float, center=(0.0, 0.0),
                   dy: float | None = None) -> FieldGrid:
    """Fundamental Gaussian amplitude exp(-rho^2 / w^2) at its waist."""
    if w <= 0:
        raise ValueError("beam radius must be positive")
    dy = dx if dy is None else dy
    g = FieldGrid(np.zeros(shape, dtype=complex), dx, dy)
    x, y = g.coords()
    rho2 = (x[None, :] - center[0]) ** 2 + (y[:, None] - center[1]) ** 2
    g.samples = np.exp(-rho2 / w ** 2).astype(complex)
    return g


def fit_gaussian_radius(u: FieldGrid, threshold: float = 1e-3) -> float:
    """Radius w of the best-fit Gaussian intensity A exp(-2 rho^2 / w^2).

    Linear regression of log intensity against rho^2 over pixels above
    threshold * peak, which is robust to window truncation.
    """
    i = u.intensity()
    peak = i.max()
    if peak <= 0:
        raise ValueError("empty field")
    x, y = u.coords()
    # recentre on the intensity centroid
    tot = i.sum()
    cx = float((i * x[None, :]).sum() / tot)
    cy = float((i * y[:, None]).sum() / tot)
    rho2 = (x[None, :] - cx) ** 2 + (y[:, None] - cy) ** 2
    mask = i > threshold * peak
    coef = np.polyfit(rho2[mask], np.log(i[mask]), 1)
    if coef[0] >= 0:
        raise ValueError("field is not Gaussian-decaying")
    return float(math.sqrt(-2.0 / coef[0]))


def beam_geometry(wavelength: float, z_half: float):
    """Waist that minimizes the beam radius at distance z from the waist:
    w0 = sqrt(lambda z / pi), giving radius w0 * sqrt(2) at the plane."""
    if wavelength <= 0 or z_half <= 0:
        raise ValueError("wavelength and distance must be positive")
    w0 = math.sqrt(wavelength * z_half / math.pi)
    return w0, w0 * math.sqrt(2.0)


def gaussian_radius(w0: float, z: float, wavelength: float) -> float:
    """Free-space Gaussian radius w(z) = w0 sqrt(1 + (lambda z / pi w0^2)^2)."""
    return w0 * math.sqrt(1.0 + (wavelength * z / (math.pi * w0 * w0)) ** 2)


def waist_relay_focal(w_in: float, d: float, wavelength: float,
                      tight: bool = True) -> float:
    """Focal length placing the output waist of a Gaussian (waist w_in at
    the lens) at distance d behind it.

    From the complex-beam-parameter transform the output waist sits at
    d = zR^2 f / (f^2 + zR^2) with zR = pi w_in^2 / lambda, a quadratic in
    f with two real roots when zR >= 2d.  ``tight`` picks the strongly
    focusing (smaller) root.
    """
    zr = math.pi * w_in * w_in / wavelength
    disc = zr * zr * (zr * zr - 4 * d * d)
    if disc < 0:
        raise ValueError("beam too divergent to place the waist at distance d")
    root = math.sqrt(disc)
    f1 = (zr * zr - root) / (2 * d)
    f2 = (zr * zr + root) / (2 * d)
    return f1 if tight else f2


# ---------------------------------------------------------------------------
# Geometry and layout

@dataclass
class OpticalGeometry:
    """Plane spacings, SLM raster, and beam positions for the full chain.

    Positions are (x, y) in meters relative to the optical axis;
    beam_positions_slm1 holds the r_n split targets, beam_positions_slm2
    the R_m recombining regions, and output_positions the detection spots
    p_m on the pinhole plane (defaults to R_m scaled by l2p/l12 so output
    beams keep diverging away from the axis).
    """

    l01: float
    l12: float
    l2p: float
    wavelength: float
    slm_pixels: tuple = (1920, 1080)   # (x, y)
    pixel_pitch: float = 8e-6
    beam_positions_slm1: np.ndarray | None = None
    beam_positions_slm2: np.ndarray | None = None
    output_positions: np.ndarray | None = None
    region_radius: float = 950e-6
    lens_f1: float | None = None
    lens_f2: float | None = None
    phase_compensation: np.ndarray | None = None

    def __post_init__(self):
        if min(self.l01, self.l12, self.l2p, self.wavelength,
               self.pixel_pitch, self.region_radius) <= 0:
            raise ValueError("distances, wavelength, pitch, radius must be positive")
        for name in ("beam_positions_slm1", "beam_positions_slm2", "output_positions"):
            val = getattr(self, name)
            if val is not None:
                setattr(self, name, np.atleast_2d(np.asarray(val, dtype=float)))
        if self.output_positions is None and self.beam_positions_slm2 is not None:
            self.output_positions = self.beam_positions_slm2 * (self.l2p / self.l12)

    @property
    def k(self):
        return 2 * np.pi / self.wavelength

    @property
    def aperture(self):
        """Physical SLM extent (width_x, width_y) in meters."""
        return (self.slm_pixels[0] * self.pixel_pitch,
                self.slm_pixels[1] * self.pixel_pitch)


def _check_regions(centers, radius, aperture):
    centers = np.atleast_2d(centers)
    wx, wy = aperture
    if np.any(np.abs(centers[:, 0]) + radius > wx / 2 + 1e-12) or \
       np.any(np.abs(centers[:, 1]) + radius > wy / 2 + 1e-12):
        raise ValueError("beam region extends outside the SLM aperture")
    for i in range(len(centers)):
        d = np.hypot(*(centers[i + 1:] - centers[i]).T)
        if np.any(d < 2 * radius - 1e-12):
            raise ValueError("beam regions overlap")


def layout_spins(n: int, geometry: OpticalGeometry):
    """Pack n circles of region_radius on a triangular lattice inside the
    SLM aperture; returns (positions used, capacity).

    Circles touch at lattice pitch 2 * radius; candidates are sorted by
    distance from the center so small problems use the middle of the SLM.
    """
    if n < 1:
        raise ValueError("need at least one spin")
    r = geometry.region_radius
    wx, wy = geometry.aperture
    pitch = 2.0 * r
    row_h = pitch * math.sqrt(3.0) / 2.0
    half_x = wx / 2 - r
    half_y = wy / 2 - r
    if half_x < 0 or half_y < 0:
        raise CapacityError("region radius exceeds the SLM aperture", capacity=0)
    pts = []
    n_rows = int(half_y // row_h)
    for row in range(-n_rows, n_rows + 1):
        y = row * row_h
        offset = (row % 2) * pitch / 2
        n_cols = int((half_x - abs(offset)) // pitch) if half_x >= abs(offset) else -1
        for col in range(-n_cols, n_cols + 1):
            pts.append((col * pitch + offset, y))
    pts = np.array(pts) if pts else np.empty((0, 2))
    capacity = len(pts)
    if n > capacity:
        raise CapacityError(
            f"geometry fits at most {capacity} beams, requested {n}",
            capacity=capacity,
        )
    order = np.argsort(np.hypot(pts[:, 0], pts[:, 1]), kind="stable")
    return pts[order[:n]], capacity


# ---------------------------------------------------------------------------
# Ideal modulation patterns

def _lens_phase(xg, yg, cx, cy, k, f):
    return np.exp(1j * k * ((xg - cx) ** 2 + (yg - cy) ** 2) / (2.0 * f))


def _checkerboard(shape):
    iy, ix = np.indices(shape)
    return np.where((ix + iy) % 2 == 0, 1.0, -1.0).astype(complex)


def ideal_modulation(role: str, geom: OpticalGeometry, shape, dx: float,
                     weights, spins=None, dy: float | None = None,
                     global_grating: bool = False) -> np.ndarray:
    """Ideal (complex, not phase-only) modulation for one SLM.

    role 'split0': single region at the origin, superposed blazed gratings
    steering weight alpha_n toward r_n on the next plane.
    role 'split1': per-spin region at r_n; spin sign sigma_n times a
    superposition of gratings (weights column beta[:, n]) aimed at R_m,
    compensating the incoming tilt, plus a lens of focal lens_f1 and the
    phase offsets theta[m, n].
    role 'recombine2': region at R_m, gratings (weights row gamma[m, :])
    canceling each incoming tilt and steering to the output spot p_m, plus
    a lens of focal lens_f2.

    Pixels outside the circular regions carry an alternating 0/pi
    checkerboard; global_grating superposes a 4-pixel-period blazed ramp.
    """
    dy = dx if dy is None else dy
    weights = np.asarray(weights, dtype=complex)
    r1 = geom.beam_positions_slm1
    r2 = geom.beam_positions_slm2
    if r1 is None:
        raise ValueError("geometry needs beam_positions_slm1")
    n = len(r1)
    k = geom.k
    ny, nx = shape
    x = (np.arange(nx) - nx / 2) * dx
    y = (np.arange(ny) - ny / 2) * dy
    xg, yg = np.meshgrid(x, y)
    out = _checkerboard(shape)
    rr = geom.region_radius

    def region_mask(cx, cy):
        return (xg - cx) ** 2 + (yg - cy) ** 2 <= rr * rr

    if role == "split0":
        if weights.shape != (n,):
            raise ValueError(f"split0 needs {n} weights")
        mask = region_mask(0.0, 0.0)
        acc = np.zeros(shape, dtype=complex)
        for j in range(n):
            acc += weights[j] * np.exp(
                -1j * k / geom.l01 * (r1[j, 0] * xg + r1[j, 1] * yg))
        out[mask] = acc[mask]
    elif role == "split1":
        if r2 is None:
            raise ValueError("geometry needs beam_positions_slm2")
        if weights.shape != (n, n):
            raise ValueError(f"split1 needs an {n}x{n} weight matrix")
        if geom.lens_f1 is None:
            raise ValueError("geometry needs lens_f1 for split1")
        _check_regions(r1, rr, geom.aperture)
        spins = np.ones(n) if spins is None else np.asarray(spins, dtype=float)
        theta = geom.phase_compensation
        theta = np.zeros((n, n)) if theta is None else np.asarray(theta, dtype=float)
        for j in range(n):
            cx, cy = r1[j]
            mask = region_mask(cx, cy)
            acc = np.zeros(shape, dtype=complex)
            for m in range(n):
                gx = (r2[m, 0] - cx) / geom.l12 - cx / geom.l01
                gy = (r2[m, 1] - cy) / geom.l12 - cy / geom.l01
                acc += weights[m, j] * np.exp(
                    -1j * k * (gx * (xg - cx) + gy * (yg - cy)) + 1j * theta[m, j])
            acc *= spins[j] * _lens_phase(xg, yg, cx, cy, k, geom.lens_f1)
            out[mask] = acc[mask]
    elif role == "recombine2":
        if r2 is None or geom.output_positions is None:
            raise ValueError("geometry needs beam_positions_slm2 and output_positions")
        if weights.shape != (n, n):
            raise ValueError(f"recombine2 needs an {n}x{n} weight matrix")
        if geom.lens_f2 is None:
            raise ValueError("geometry needs lens_f2 for recombine2")
        _check_regions(r2, rr, geom.aperture)
        p = geom.output_positions
        for m in range(n):
            cx, cy = r2[m]
            mask = region_mask(cx, cy)
            acc = np.zeros(shape, dtype=complex)
            for j in range(n):
                gx = (p[m, 0] - cx) / geom.l2p - (cx - r1[j, 0]) / geom.l12
                gy = (p[m, 1] - cy) / geom.l2p - (cy - r1[j, 1]) / geom.l12
                acc += weights[m, j] * np.exp(
                    -1j * k * (gx * (xg - cx) + gy * (yg - cy)))
            acc *= _lens_phase(xg, yg, cx, cy, k, geom.lens_f2)
            out[mask] = acc[mask]
    else:
        raise ValueError(f"unknown role {role!r}")

    if global_grating:
        out = out * np.exp(1j * 2 * np.pi * np.arange(nx)[None, :] / 4.0)
    return out


def phase_only_project(h_ideal) -> Hologram:
    """Closest pure-phase pattern: keep the argument, drop the magnitude.
    Zero-magnitude pixels get phase 0."""
    h_ideal = np.asarray(h_ideal, dtype=complex)
    phase = np.angle(h_ideal)
    phase[h_ideal == 0] = 0.0
    return Hologram(phase=phase, dx=1.0, dy=1.0)


# ---------------------------------------------------------------------------
# Gradient-descent hologram optimization

def _huber(mag: np.ndarray, delta: float):
    """Elementwise Huber loss of |W| and its derivative factor g with
    dl/dW* = g: g = W/2 in the quadratic zone, delta*W/(2|W|) outside."""
    quad = mag <= delta
    loss = np.where(quad, 0.5 * mag ** 2, delta * mag - 0.5 * delta * delta)
    return float(loss.sum()), quad


def hologram_loss_grad(p: np.ndarray, u_incident: FieldGrid,
                       u_target: FieldGrid, z: float, wavelength: float,
                       delta: float,
                       pixel_spectrum: np.ndarray | None = None):
    """Huber loss of the phase-only-projected pattern and its Wirtinger
    gradient dL/dP*.

    The forward map is W = T(N(P) . U_I) - U_T with N(P) = P/|P|; the
    gradient chains the elementwise Huber derivative through the adjoint
    propagation and the normalization.
    """
    absp = np.abs(p)
    if np.any(absp == 0):
        raise ValueError("pattern contains zero-magnitude pixels")
    npat = p / absp
    forward = propagate(
        FieldGrid(npat * u_incident.samples, u_incident.dx, u_incident.dy),
        z, wavelength, pixel_spectrum)
    w = forward.samples - u_target.samples
    mag = np.abs(w)
    loss, quad = _huber(mag, delta)
    safe = np.where(mag == 0, 1.0, mag)
    g = np.where(quad, 0.5 * w, 0.5 * delta * w / safe)
    b = propagate_adjoint(FieldGrid(g, forward.dx, forward.dy),
                          z, wavelength, pixel_spectrum).samples
    grad = (-(p ** 2) / (2.0 * absp ** 3) * u_incident.samples * np.conj(b)
            + 1.0 / (2.0 * absp) * np.conj(u_incident.samples) * b)
    return loss, grad


@dataclass
class OptimizeResult:
    hologram: Hologram
    loss_history: np.ndarray
    diverged: bool
    best_loss: float


def optimize_hologram(p0, u_incident: FieldGrid, u_target: FieldGrid,
                      z: float, wavelength: float,
                      delta: float | None = None, iters: int = 200,
                      lr: float = 0.01,
                      pixel_spectrum: np.ndarray | None = None,
                      patience: int = 20,
                      match_power: bool = True) -> OptimizeResult:
    """Refine an initial pattern with Adam on the complex parameters.

    p0 may be a Hologram or a complex ideal-modulation array.  delta
    defaults to 0.1 * max |u_target|.  With match_power the target is
    rescaled to the power the phase-only pattern actually delivers, so
    the optimizer shapes the distribution instead of fighting an
    unreachable global amplitude.  If the loss fails to improve for
    ``patience`` consecutive steps the best-so-far pattern is returned
    with the diverged flag set.
    """
    p = p0.field().astype(complex) if isinstance(p0, Hologram) else \
        np.asarray(p0, dtype=complex).copy()
    p[p == 0] = 1.0
    if match_power:
        out0 = propagate(FieldGrid((p / np.abs(p)) * u_incident.samples,
                                   u_incident.dx, u_incident.dy),
                         z, wavelength, pixel_spectrum)
        pw_t = u_target.power()
        if pw_t > 0:
            u_target = FieldGrid(
                u_target.samples * math.sqrt(out0.power() / pw_t),
                u_target.dx, u_target.dy)
    if delta is None:
        delta = 0.1 * float(np.abs(u_target.samples).max())
    if delta <= 0:
        raise ValueError("Huber threshold must be positive")
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m = np.zeros_like(p)
    v = np.zeros(p.shape)
    losses = []
    best_loss = math.inf
    best_p = p.copy()
    stall = 0
    diverged = False
    for step in range(1, iters + 1):
        loss, grad_conj = hologram_loss_grad(
            p, u_incident, u_target, z, wavelength, delta, pixel_spectrum)
        losses.append(loss)
        if loss < best_loss - 1e-15:
            best_loss = loss
            best_p = p.copy()
            stall = 0
        else:
            stall += 1
            if stall >= patience:
                diverged = True
                break
        # real-parameter Adam: gradient w.r.t. (Re P, Im P) is 2 dL/dP*
        g = 2.0 * grad_conj
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * np.abs(g) ** 2
        mhat = m / (1 - beta1 ** step)
        vhat = v / (1 - beta2 ** step)
        p = p - lr * mhat / (np.sqrt(vhat) + eps)
        p[p == 0] = 1e-12
    final_loss, _ = hologram_loss_grad(
        best_p, u_incident, u_target, z, wavelength, delta, pixel_spectrum)
    if final_loss <= best_loss:
        best_loss = final_loss
    holo = Hologram(phase=np.angle(best_p), dx=u_incident.dx, dy=u_incident.dy)
    return OptimizeResult(hologram=holo, loss_history=np.array(losses),
                          diverged=diverged, best_loss=best_loss)
