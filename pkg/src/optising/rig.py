"""End-to-end diffraction simulation of the three-SLM optical chain.

The chain is: incident Gaussian -> SLM0 (beam splitting) -> free space
L01 -> SLM1 (spin encoding + splitting matrix) -> L12 -> SLM2 (beam
recombining) -> L2p -> pinhole plane, where the output spot intensities
are read out.  DiffractionRig exposes the same measurement interface as
the matrix-level rig, so the calibration procedures run against it
unchanged; spins, deactivation, and phase offsets are applied as region
masks right after SLM1.
"""

from __future__ import annotations

import numpy as np

from .errors import CapacityError
from .holography import (FieldGrid, OpticalGeometry, gaussian_field,
                         ideal_modulation, phase_only_project, propagate)
from .ising import SpectralTransform, as_spins
from .optical import DetectorModel, detect, hamiltonian_from_intensities


class DiffractionRig:
    """Physically simulated rig with programmable SLM patterns.

    detection_pixels selects point sampling (1) or a 3x3 average (9) at
    each output spot.  Holograms are phase-only projections of the ideal
    complex patterns; the SLM0 and SLM1 stages are cached against the
    programmed values so repeated measurements only pay for propagation.
    """

    def __init__(self, geometry: OpticalGeometry, grid_shape, dx: float,
                 input_waist: float, detection_pixels: int = 1,
                 detector: DetectorModel | None = None,
                 exposure_scale: float = 1.0, rng=None,
                 pinhole_radius: float | None = None):
        if detection_pixels not in (1, 9):
            raise ValueError("detection_pixels must be 1 or 9")
        self.geometry = geometry
        self.grid_shape = tuple(grid_shape)
        self.dx = dx
        self.input_waist = input_waist
        self.detection_pixels = detection_pixels
        self.detector = detector
        self.exposure_scale = exposure_scale
        self.rng = (rng if isinstance(rng, np.random.Generator)
                    else np.random.default_rng(rng))

        n = len(geometry.beam_positions_slm1)
        self._n = n
        self._slm1 = np.ones((n, n), dtype=complex)
        self._e_in = np.ones(n, dtype=complex)
        self._active = np.ones(n, dtype=bool)
        self._region_phase = np.zeros(n)
        self._spins = np.ones(n)

        self._u0 = gaussian_field(self.grid_shape, dx, input_waist)
        self._region_masks = self._build_region_masks()
        self._slm2_field = phase_only_project(
            ideal_modulation("recombine2", geometry, self.grid_shape, dx,
                             np.ones((n, n)))).field()
        self._pinhole = self._build_pinhole(pinhole_radius)
        self._det_index = self._detection_indices()
        self._u1_cache = (None, None)   # (e_in bytes, field after L01)
        self._p1_cache = (None, None)   # (slm1 bytes, hologram field)

    # -- measurement interface -------------------------------------------

    @property
    def n(self):
        return self._n

    def program_slm1(self, s):
        s = np.asarray(s, dtype=complex)
        if s.shape != (self._n, self._n):
            raise ValueError("splitting matrix has wrong shape")
        self._slm1 = s.copy()

    def program_input(self, e_in):
        e_in = np.asarray(e_in, dtype=complex)
        if e_in.shape != (self._n,):
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

    def set_spins(self, s):
        self._spins = as_spins(s, self._n).astype(float)

    def meter(self, margin: float = 0.5):
        """Auto-exposure from a noiseless pilot readout; no-op without a
        detector.  Comparable measurements must share one metering call."""
        if self.detector is None:
            return
        det, self.detector = self.detector, None
        try:
            peak = float(np.max(self.measure()))
        finally:
            self.detector = det
        if peak > 0:
            self.exposure_scale = margin * det.full_well / peak

    def measure(self) -> np.ndarray:
        i_img = self._output_field().intensity()
        i_img = i_img * self._pinhole
        vals = []
        ny, nx = self.grid_shape
        for iy, ix in self._det_index:
            if self.detection_pixels == 1:
                vals.append(i_img[iy, ix])
            else:
                vals.append(i_img[max(0, iy - 1):iy + 2,
                                  max(0, ix - 1):ix + 2].mean())
        i_vec = np.asarray(vals)
        if self.detector is None:
            return i_vec
        return detect(i_vec, self.detector, self.exposure_scale, self.rng).electrons

    # -- internals --------------------------------------------------------

    def _build_region_masks(self):
        g = self.geometry
        x = (np.arange(self.grid_shape[1]) - self.grid_shape[1] / 2) * self.dx
        y = (np.arange(self.grid_shape[0]) - self.grid_shape[0] / 2) * self.dx
        xg, yg = np.meshgrid(x, y)
        masks = []
        for cx, cy in g.beam_positions_slm1:
            masks.append((xg - cx) ** 2 + (yg - cy) ** 2 <= g.region_radius ** 2)
        return masks

    def _build_pinhole(self, radius):
        g = self.geometry
        p = g.output_positions
        if radius is None:
            if len(p) > 1:
                d = [np.hypot(*(p[i] - p[j]))
                     for i in range(len(p)) for j in range(i + 1, len(p))]
                radius = min(d) / 2.0
            else:
                radius = g.region_radius
        x = (np.arange(self.grid_shape[1]) - self.grid_shape[1] / 2) * self.dx
        y = (np.arange(self.grid_shape[0]) - self.grid_shape[0] / 2) * self.dx
        xg, yg = np.meshgrid(x, y)
        mask = np.zeros(self.grid_shape, dtype=bool)
        for cx, cy in p:
            mask |= (xg - cx) ** 2 + (yg - cy) ** 2 <= radius * radius
        return mask

    def _detection_indices(self):
        ny, nx = self.grid_shape
        idx = []
        for cx, cy in self.geometry.output_positions:
            ix = int(round(cx / self.dx + nx / 2))
            iy = int(round(cy / self.dx + ny / 2))
            if not (0 <= ix < nx and 0 <= iy < ny):
                raise ValueError("output spot falls outside the grid")
            idx.append((iy, ix))
        return idx

    def _field_after_l01(self) -> FieldGrid:
        key = self._e_in.tobytes()
        if self._u1_cache[0] == key:
            return self._u1_cache[1]
        p0 = phase_only_project(
            ideal_modulation("split0", self.geometry, self.grid_shape,
                             self.dx, self._e_in)).field()
        u = FieldGrid(p0 * self._u0.samples, self.dx, self.dx)
        u1 = propagate(u, self.geometry.l01, self.geometry.wavelength)
        self._u1_cache = (key, u1)
        return u1

    def _slm1_field(self) -> np.ndarray:
        key = self._slm1.tobytes()
        if self._p1_cache[0] == key:
            return self._p1_cache[1]
        p1 = phase_only_project(
            ideal_modulation("split1", self.geometry, self.grid_shape,
                             self.dx, self._slm1)).field()
        self._p1_cache = (key, p1)
        return p1

    def _output_field(self) -> FieldGrid:
        g = self.geometry
        u1 = self._field_after_l01()
        field = u1.samples * self._slm1_field()
        # spins, deactivation, and calibration phase offsets act per region
        for j, mask in enumerate(self._region_masks):
            factor = 0.0 if not self._active[j] else (
                self._spins[j] * np.exp(1j * self._region_phase[j]))
            if factor != 1.0:
                field = np.where(mask, field * factor, field)
        u2 = propagate(FieldGrid(field, self.dx, self.dx), g.l12, g.wavelength)
        u3 = propagate(FieldGrid(u2.samples * self._slm2_field, self.dx, self.dx),
                       g.l2p, g.wavelength)
        return u3


GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


def _ghost_landings(r, s):
    """Landing points of the parasitic single-grating paths.

    A beam aimed at recombiner region m may take the grating order meant
    for a different source (landing at p_m + s (r_b - r_a)), a weaker
    second-order order combination (p_m + s (r_a + r_b - r_n - r_c)), or
    pass the region undeflected (landing at R_m + s (R_m - r_a)).
    Returns (first-order offsets, second-order offsets, passthrough
    landing points); detection spots must keep clear of all three.
    """
    n = len(r)
    first = [s * (r[b] - r[a]) for a in range(n) for b in range(n) if a != b]
    tol = 1e-9 * max(np.hypot(*d) for d in first)
    second = []
    for a in range(n):
        for b in range(n):
            for n_ in range(n):
                for c in range(n):
                    d = s * (r[a] + r[b] - r[n_] - r[c])
                    if np.hypot(*d) < tol:
                        continue
                    if any(np.hypot(*(d - e)) < tol for e in first + second):
                        continue
                    second.append(d)
    passthrough = [r[m] + s * (r[m] - r[a]) for m in range(n) for a in range(n)]
    return first, second, passthrough


def _output_layout(r, s, half, clearance, clearance2=None):
    """Rotate/scale the input layout into output positions whose spots
    all miss the ghost-order landing points: by at least ``clearance``
    for the first-order and undeflected families and ``clearance2``
    (default clearance / 2) for the weaker second-order family."""
    if clearance2 is None:
        clearance2 = clearance / 2.0
    first, second, passthrough = _ghost_landings(r, s)
    n = len(r)
    best = None
    for theta in np.radians(np.arange(0.0, 180.0, 2.0)):
        for rho in np.arange(0.60, 1.16, 0.05):
            c, sn = np.cos(theta), np.sin(theta)
            p = (s * rho) * r @ np.array([[c, sn], [-sn, c]])
            if np.abs(p).max() > half - clearance:
                continue
            m1 = min(min(np.hypot(*(p[m] + d - p[i]))
                         for m in range(n) for i in range(n))
                     for d in first)
            m1 = min(m1, min(np.hypot(*(q - p[i]))
                             for q in passthrough for i in range(n)))
            m2 = min(min(np.hypot(*(p[m] + d - p[i]))
                         for m in range(n) for i in range(n))
                     for d in second)
            score = min(m1 / clearance, m2 / clearance2)
            if best is None or score > best[0]:
                best = (score, p)
    if best is None or best[0] < 1.0:
        raise CapacityError("no output layout clears the ghost orders")
    return best[1]


def _spiral_positions(n: int, spacing: float) -> np.ndarray:
    """n points on a golden-angle spiral with min pairwise distance = spacing."""
    i = np.arange(1, n + 1, dtype=float)
    pts = np.sqrt(i)[:, None] * np.stack(
        [np.cos(i * GOLDEN_ANGLE), np.sin(i * GOLDEN_ANGLE)], axis=1)
    if n == 1:
        return np.zeros((1, 2))
    dmin = min(np.hypot(*(pts[a] - pts[b]))
               for a in range(n) for b in range(a + 1, n))
    return pts * (spacing / dmin)


def design_toy_rig(n: int, wavelength: float = 1550e-9, grid: int = 256,
                   dx: float = 16e-6, l01: float = 0.15, l12: float = 0.15,
                   l2p: float = 0.15, detector: DetectorModel | None = None,
                   exposure_scale: float = 1.0, rng=None,
                   detection_pixels: int = 1):
    """Build a small but physically sensible diffraction rig.

    The incident waist is the optimum for the SLM0-SLM1 distance and the
    lenses relay the beam waists onto SLM2 and near the pinhole plane.
    Regions sit on a golden-angle spiral rather than a regular lattice:
    phase-only holograms of grating superpositions emit spurious
    diffraction orders at mirror/harmonic positions (-r_j, 2 r_j - r_i),
    and an asymmetric layout keeps those orders away from the regions and
    detection spots.  Returns (rig, geometry).
    """
    from .holography import beam_geometry

    w0, w_slm = beam_geometry(wavelength, l01)
    region_radius = 1.4 * w_slm
    positions = _spiral_positions(n, 2.2 * region_radius)
    half = grid * dx / 2
    if np.any(np.abs(positions) + region_radius > half):
        raise CapacityError(
            f"cannot place {n} regions of radius {region_radius:.2e} m on a "
            f"{grid}x{grid} grid with {dx:.2e} m pitch")
    geom = OpticalGeometry(
        l01=l01, l12=l12, l2p=l2p, wavelength=wavelength,
        slm_pixels=(grid, grid), pixel_pitch=dx,
        region_radius=region_radius,
        lens_f1=l12, lens_f2=l2p,
        beam_positions_slm1=positions,
        beam_positions_slm2=positions.copy(),
        output_positions=_output_layout(positions, l2p / l12, half,
                                        clearance=0.45e-3),
    )
    rig = DiffractionRig(geom, (grid, grid), dx, input_waist=w0,
                         detector=detector, exposure_scale=exposure_scale,
                         rng=rng, detection_pixels=detection_pixels)
    return rig, geom


class PhysicalOpticalEvaluator:
    """Hamiltonian evaluator backed by the full diffraction chain.

    The rig must already be calibrated and programmed for the transform;
    the intensity-to-Hamiltonian scale is fixed once from a reference
    state by matching the total measured power to the total theoretical
    power of A times the reference spins.
    """

    def __init__(self, rig: DiffractionRig, transform: SpectralTransform,
                 reference=None):
        self.rig = rig
        self.transform = transform
        ref = np.ones(transform.n) if reference is None else \
            as_spins(reference, transform.n)
        i_theo = np.abs(transform.a @ ref.astype(float)) ** 2
        rig.set_spins(ref)
        i_meas = rig.measure()
        total_theo = float(i_theo.sum())
        total_meas = float(i_meas.sum())
        if total_theo <= 0 or total_meas <= 0:
            raise ValueError("reference state produced no power")
        self.scale = total_meas / total_theo

    def evaluate(self, s):
        self.rig.set_spins(s)
        i_vec = self.rig.measure()
        h = hamiltonian_from_intensities(
            i_vec, self.transform.sign_mask, scale=self.scale,
            allow_negative=self.rig.detector is not None)
        return h, i_vec
