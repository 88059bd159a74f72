"""Classical DOA estimators: pseudo-intensity and steered response power."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import eval_legendre
from scipy.spatial import cKDTree

from .dsp import ComplexSpectrogram
from .features import intensity_terms
from .sh import Direction, fibonacci_vectors, n_channels, sh_matrix, vectors_to_directions

DEFAULT_GRID = 2562
REFINE_RADIUS = 1.5


class SilentInputError(ValueError):
    """No time-frequency bin carries energy."""


def pseudo_intensity_vector(spec: ComplexSpectrogram) -> np.ndarray:
    """Active intensity features accumulated with C(t, f) weights.

    Weighting each bin's normalized feature by C cancels the normalization,
    so the sum is ``sum Re{W conj([X, Y, Z])}`` over bins with C > 0.
    """
    act, _, norm = intensity_terms(spec)
    mask = norm > 0.0
    if not mask.any():
        raise SilentInputError("all bins are silent")
    return act[mask].sum(axis=0)


def pseudo_intensity_doa(spec: ComplexSpectrogram) -> Direction:
    vec = pseudo_intensity_vector(spec)
    if not np.any(vec):
        raise SilentInputError("accumulated intensity vanishes")
    return Direction.from_vector(vec)


@dataclass
class PowerMap:
    vectors: np.ndarray  # (G, 3) grid directions
    power: np.ndarray  # (G,)
    order: int

    def __post_init__(self):
        if len(self.vectors) != len(self.power):
            raise ValueError("grid and power lengths differ")

    @property
    def grid(self) -> list[Direction]:
        return [Direction.from_vector(v) for v in self.vectors]


@lru_cache(maxsize=8)
def search_grid(count: int = DEFAULT_GRID) -> np.ndarray:
    v = fibonacci_vectors(count)
    v.setflags(write=False)
    return v


def grid_spacing(vectors) -> float:
    """Mean nearest-neighbour angle of a grid, radians."""
    vectors = np.asarray(vectors, float)
    if len(vectors) < 2:
        return math.pi
    chord, _ = cKDTree(vectors).query(vectors, k=2)
    return float(np.mean(2.0 * np.arcsin(np.clip(chord[:, 1] / 2.0, 0.0, 1.0))))


def spatial_covariance(spec: ComplexSpectrogram) -> np.ndarray:
    """Real part of sum_tf s s^H over all bins, shape (channels, channels)."""
    s = spec.data.reshape(-1, spec.channels)
    return (s.T @ s.conj()).real


def steered_power_map(spec: ComplexSpectrogram, order: int, grid=None) -> PowerMap:
    """Plane-wave decomposition power over a direction grid.

    The beam steered to Omega is ``sum_nm (2n+1) Y_n^m(Omega) s_nm(t, f)``;
    its power summed over (t, f) is evaluated as a quadratic form in the
    channel covariance, which is exact because the steering weights are real.
    """
    if spec.channels != n_channels(order):
        raise ValueError(f"order {order} needs {n_channels(order)} channels, got {spec.channels}")
    vectors = search_grid() if grid is None else np.asarray(grid, float)
    if len(vectors) == 0:
        raise ValueError("empty grid")
    el, az = vectors_to_directions(vectors)
    weights = sh_matrix(order, el, az) * _n3d_weights(order)
    cov = spatial_covariance(spec)
    power = np.einsum("gi,ij,gj->g", weights, cov, weights)
    return PowerMap(np.asarray(vectors), np.clip(power, 0.0, None), order)


def _n3d_weights(order: int) -> np.ndarray:
    return np.concatenate([np.full(2 * n + 1, 2.0 * n + 1.0) for n in range(order + 1)])


def srp_doa(pmap: PowerMap, radius: float = REFINE_RADIUS) -> Direction:
    """Grid argmax (lowest index on ties) refined within ``radius`` mean grid
    spacings of the peak.

    A peak that covers the whole window is interpolated by a least-squares
    quadratic surface on the tangent plane. A peak narrower than the grid
    (some window points without power) falls back to the power-weighted mean
    of the window's grid vectors; a flat window returns the peak itself.
    """
    if len(pmap.power) == 0:
        raise ValueError("empty power map")
    peak = int(np.argmax(pmap.power))
    v = pmap.vectors
    limit = radius * _cached_spacing(v)
    near = np.arccos(np.clip(v @ v[peak], -1.0, 1.0)) <= limit
    w = pmap.power[near]
    if w.max() == w.min():
        return Direction.from_vector(v[peak])
    if w.min() > 0.0 and near.sum() >= 6:
        refined = _quadratic_peak(v[peak], v[near], w, limit)
        if refined is not None:
            return Direction.from_vector(refined)
    mean = (w[:, None] * v[near]).sum(axis=0)
    return Direction.from_vector(mean)


def _tangent_basis(p: np.ndarray):
    a = np.array([1.0, 0.0, 0.0]) if abs(p[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(p, a)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(p, e1)


def _quadratic_peak(center, pts, values, limit):
    e1, e2 = _tangent_basis(center)
    x, y = pts @ e1, pts @ e2
    design = np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=1)
    c, *_ = np.linalg.lstsq(design, values, rcond=None)
    hess = np.array([[2.0 * c[3], c[4]], [c[4], 2.0 * c[5]]])
    if np.any(np.linalg.eigvalsh(hess) >= 0.0):
        return None
    dx, dy = np.linalg.solve(hess, -c[1:3])
    if math.hypot(dx, dy) > limit:
        return None
    return center + dx * e1 + dy * e2


_SPACING_CACHE: dict[tuple[int, bytes], float] = {}


def _cached_spacing(vectors: np.ndarray) -> float:
    key = (len(vectors), vectors[: min(4, len(vectors))].tobytes())
    if key not in _SPACING_CACHE:
        _SPACING_CACHE[key] = grid_spacing(vectors)
    return _SPACING_CACHE[key]


def beampattern(order: int, gamma) -> np.ndarray:
    """Normalized plane-wave-decomposition beampattern at off-axis angle gamma."""
    x = np.cos(np.asarray(gamma, float))
    num = sum((2 * n + 1) * eval_legendre(n, x) for n in range(order + 1))
    return num / (order + 1) ** 2


def beamwidth(order: int, tol: float = 1e-10) -> float:
    """Full -3 dB width of the beampattern in degrees, found by bisection."""
    if not 1 <= order <= 4:
        raise ValueError("order must be in [1, 4]")
    target = 1.0 / math.sqrt(2.0)
    # bracket the first crossing on a coarse scan
    gammas = np.linspace(0.0, math.pi, 1801)
    below = np.flatnonzero(beampattern(order, gammas) < target)
    hi = gammas[below[0]]
    lo = gammas[below[0] - 1]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if beampattern(order, mid) >= target:
            lo = mid
        else:
            hi = mid
    return math.degrees(lo + hi)
