"""Ising problems, spectral pretreatment, and exact oracles.

The quadratic energy H = -1/2 s^T J s is rewritten through the
eigendecomposition J = Q^T D Q as a single linear transform A = sqrt(D) Q,
so the energy of a spin vector can be read off the signed squared
magnitudes of A s.  Rows of A belonging to negative eigenvalues are purely
imaginary, the remaining rows purely real.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ConfigError, NumericalError

BRUTE_FORCE_CAP = 24
_ENUM_CHUNK = 1 << 16


@dataclass(frozen=True)
class IsingModel:
    """Symmetric, zero-diagonal coupling matrix and its spin count."""

    n: int
    j: np.ndarray

    def __post_init__(self):
        j = np.asarray(self.j, dtype=float)
        if j.ndim != 2 or j.shape[0] != j.shape[1]:
            raise ValueError(f"coupling matrix must be square, got shape {j.shape}")
        if self.n != j.shape[0]:
            raise ValueError("n does not match coupling matrix size")
        if self.n < 2:
            raise ValueError("need at least 2 spins")
        if not np.isfinite(j).all():
            raise ValueError("coupling matrix contains non-finite entries")
        if not np.array_equal(j, j.T):
            raise ValueError("coupling matrix must be exactly symmetric")
        if np.any(np.diag(j) != 0.0):
            raise ValueError("coupling matrix must have zero diagonal")
        j = j.copy()
        j.setflags(write=False)
        object.__setattr__(self, "j", j)


@dataclass(frozen=True)
class SpectralTransform:
    """Transform A = sqrt(D) Q with the eigenvalue sign bookkeeping.

    ``sign_mask`` is True for rows belonging to negative eigenvalues (the
    purely imaginary rows of A); eigenvalues within ``zero_tol`` of zero are
    grouped with the nonnegative ones.
    """

    a: np.ndarray
    eigenvalues: np.ndarray
    q: np.ndarray
    sign_mask: np.ndarray

    @property
    def n(self):
        return self.a.shape[0]


def symmetrize(raw) -> IsingModel:
    """Build a model from an arbitrary square matrix.

    The anti-symmetric part (raw - raw^T)/2 contributes nothing to the
    energy and is discarded; the diagonal is zeroed (self-coupling only
    shifts H by a constant).
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {raw.shape}")
    if raw.shape[0] < 2:
        raise ValueError("need at least 2 spins")
    if not np.isfinite(raw).all():
        raise ValueError("matrix contains non-finite entries")
    j = (raw + raw.T) / 2.0
    np.fill_diagonal(j, 0.0)
    return IsingModel(n=raw.shape[0], j=j)


def spectral_transform(model: IsingModel, zero_tol: float | None = None) -> SpectralTransform:
    """Eigendecompose J and assemble A = sqrt(D) Q.

    Rows with eigenvalue below -zero_tol get the factor i*sqrt(-lambda);
    everything else gets sqrt(max(lambda, 0)).
    """
    try:
        w, v = np.linalg.eigh(model.j)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    q = v.T  # rows are eigenvectors, J = q.T @ diag(w) @ q
    if zero_tol is None:
        zero_tol = 1e-12 * (np.max(np.abs(w)) if w.size else 1.0)
    elif zero_tol < 0:
        raise ValueError("zero_tol must be nonnegative")
    negative = w < -zero_tol
    root = np.sqrt(np.abs(np.where(np.abs(w) <= zero_tol, 0.0, w)))
    a = (root[:, None] * q).astype(complex)
    a[negative] *= 1j
    for arr in (a, w, q, negative):
        arr.setflags(write=False)
    return SpectralTransform(a=a, eigenvalues=w, q=q, sign_mask=negative)


def random_spins(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(np.array([-1, 1], dtype=np.int8), size=n)


def as_spins(s, n: int) -> np.ndarray:
    s = np.asarray(s)
    if s.shape != (n,):
        raise ValueError(f"spin vector has shape {s.shape}, expected ({n},)")
    if not np.all(np.abs(s) == 1):
        raise ValueError("spins must be +1 or -1")
    return s.astype(np.int8)


def hamiltonian_exact(model: IsingModel, s) -> float:
    """H = -1/2 s^T J s."""
    s = as_spins(s, model.n).astype(float)
    return float(-0.5 * s @ model.j @ s)


def hamiltonian_batch(model: IsingModel, states: np.ndarray) -> np.ndarray:
    """Exact H for a (k, n) batch of spin vectors."""
    states = np.asarray(states, dtype=float)
    return -0.5 * np.einsum("ij,ij->i", states @ model.j, states)


def brute_force_ground(model: IsingModel, cap: int = BRUTE_FORCE_CAP):
    """Exhaustive minimum over all states, exploiting global flip symmetry.

    Spin 0 is fixed to +1, halving the enumeration to 2^(n-1) states.
    """
    n = model.n
    if n > cap:
        raise CapacityError(
            f"brute force limited to n <= {cap}, got n = {n}", capacity=cap
        )
    m = n - 1
    total = 1 << m
    shifts = np.arange(m, dtype=np.uint64)
    best_h = np.inf
    best_state = None
    for start in range(0, total, _ENUM_CHUNK):
        idx = np.arange(start, min(start + _ENUM_CHUNK, total), dtype=np.uint64)
        bits = (idx[:, None] >> shifts) & np.uint64(1)
        states = np.empty((idx.size, n))
        states[:, 0] = 1.0
        states[:, 1:] = 1.0 - 2.0 * bits
        h = hamiltonian_batch(model, states)
        k = int(np.argmin(h))
        if h[k] < best_h:
            best_h = float(h[k])
            best_state = states[k].astype(np.int8)
    return best_state, best_h


# ---------------------------------------------------------------------------
# Built-in problem generators

def mobius_ladder(n: int, coupling: float = -1.0) -> IsingModel:
    """Cycle of n nodes plus antipodal chords; antiferromagnetic by default."""
    if n < 4 or n % 2:
        raise ValueError("moebius ladder needs an even n >= 4")
    j = np.zeros((n, n))
    for i in range(n):
        j[i, (i + 1) % n] = coupling
        j[(i + 1) % n, i] = coupling
    for i in range(n // 2):
        j[i, i + n // 2] = coupling
        j[i + n // 2, i] = coupling
    return IsingModel(n=n, j=j)


def random_glass(n: int, seed: int) -> IsingModel:
    """Fully connected model with couplings drawn uniformly from {-1, +1}."""
    rng = np.random.default_rng(seed)
    j = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)
    j[iu] = rng.choice([-1.0, 1.0], size=iu[0].size)
    j += j.T
    return IsingModel(n=n, j=j)


# ---------------------------------------------------------------------------
# Problem file I/O

def load_problem(source) -> IsingModel:
    """Load a problem from a JSON path or an already-parsed dict.

    Accepts either {"n": int, "edges": [[i, j, w], ...]} with 0-based
    indices (duplicate edges summed) or {"matrix": [[...]]}.
    """
    if isinstance(source, (str,)) or hasattr(source, "read"):
        try:
            if hasattr(source, "read"):
                data = json.load(source)
            else:
                with open(source) as fh:
                    data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read problem file: {exc}") from exc
    else:
        data = source
    if not isinstance(data, dict):
        raise ConfigError("problem file must contain a JSON object")
    if "matrix" in data:
        return symmetrize(np.asarray(data["matrix"], dtype=float))
    if "edges" in data:
        try:
            n = int(data["n"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("edge-list problems need an integer 'n'") from exc
        j = np.zeros((n, n))
        for edge in data["edges"]:
            try:
                i, k, w = int(edge[0]), int(edge[1]), float(edge[2])
            except (TypeError, ValueError, IndexError) as exc:
                raise ConfigError(f"malformed edge {edge!r}") from exc
            if not (0 <= i < n and 0 <= k < n):
                raise ConfigError(f"edge {edge!r} out of range for n={n}")
            j[i, k] += w
        return symmetrize(j)
    raise ConfigError("problem file needs either 'matrix' or 'edges'")
