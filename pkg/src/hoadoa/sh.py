"""Real spherical harmonics (ambiX: ACN ordering, SN3D normalization) and
direction geometry.

Coordinates: x front, y left, z up. Elevation is zero on the horizontal
plane and positive upwards; azimuth is zero at the front and increases
counterclockwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_ORDER = 4


def _wrap_azimuth(azimuth: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    if -math.pi < azimuth <= math.pi:
        return float(azimuth)
    wrapped = math.pi - math.fmod(math.pi - azimuth, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    elif wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Direction:
    """A direction on the unit sphere, normalized on construction.

    Elevation lies in [-pi/2, pi/2] and azimuth in (-pi, pi]. At the poles
    the azimuth is set to 0 so equal directions compare equal.
    """

    elevation: float
    azimuth: float

    def __post_init__(self):
        el = float(self.elevation)
        az = float(self.azimuth)
        if not (math.isfinite(el) and math.isfinite(az)):
            raise ValueError(f"non-finite direction ({el}, {az})")
        if not -math.pi / 2 <= el <= math.pi / 2:
            # fold through the pole via Cartesian coordinates
            x, y, z = _unit(el, az)
            el, az = _angles(x, y, z)
        az = _wrap_azimuth(az)
        if abs(el) == math.pi / 2:
            az = 0.0
        object.__setattr__(self, "elevation", el)
        object.__setattr__(self, "azimuth", az)

    @classmethod
    def from_degrees(cls, elevation: float, azimuth: float) -> "Direction":
        return cls(math.radians(elevation), math.radians(azimuth))

    @classmethod
    def from_vector(cls, vec) -> "Direction":
        x, y, z = (float(v) for v in vec)
        if x == 0.0 and y == 0.0 and z == 0.0:
            raise ValueError("zero vector has no direction")
        return cls(*_angles(x, y, z))

    def to_vector(self) -> np.ndarray:
        return np.array(_unit(self.elevation, self.azimuth))

    @property
    def elevation_deg(self) -> float:
        return math.degrees(self.elevation)

    @property
    def azimuth_deg(self) -> float:
        return math.degrees(self.azimuth)


def _unit(el: float, az: float) -> tuple[float, float, float]:
    c = math.cos(el)
    return c * math.cos(az), c * math.sin(az), math.sin(el)


def _angles(x: float, y: float, z: float) -> tuple[float, float]:
    horiz = math.hypot(x, y)
    el = math.atan2(z, horiz)
    az = math.atan2(y, x) if horiz > 0.0 else 0.0
    return el, az


@dataclass(frozen=True)
class SphericalPoint:
    radius: float
    direction: Direction

    def __post_init__(self):
        if not self.radius >= 0.0:
            raise ValueError(f"radius must be non-negative, got {self.radius}")


@dataclass(frozen=True)
class ShIndex:
    """Spherical harmonic of order ``n`` and degree ``m``."""

    n: int
    m: int

    def __post_init__(self):
        if self.n < 0 or abs(self.m) > self.n:
            raise ValueError(f"invalid SH index (n={self.n}, m={self.m})")


def n_channels(order: int) -> int:
    return (order + 1) ** 2


def acn(index: ShIndex) -> int:
    return index.n * index.n + index.n + index.m


def acn_to_index(channel: int) -> ShIndex:
    if channel < 0:
        raise ValueError(f"ACN must be non-negative, got {channel}")
    n = math.isqrt(channel)
    return ShIndex(n, channel - n * n - n)


def sph_to_cart(point: SphericalPoint) -> np.ndarray:
    return point.radius * point.direction.to_vector()


def cart_to_sph(vec) -> SphericalPoint:
    x, y, z = (float(v) for v in vec)
    r = math.sqrt(x * x + y * y + z * z)
    if r == 0.0:
        raise ValueError("the origin has no direction")
    return SphericalPoint(r, Direction(*_angles(x, y, z)))


def directions_to_vectors(elevation, azimuth) -> np.ndarray:
    """Vectorized unit vectors, shape (..., 3)."""
    el = np.asarray(elevation, dtype=float)
    az = np.asarray(azimuth, dtype=float)
    c = np.cos(el)
    return np.stack([c * np.cos(az), c * np.sin(az), np.sin(el)], axis=-1)


def vectors_to_directions(vectors) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (elevation, azimuth) of non-zero vectors, shape (..., 3)."""
    v = np.asarray(vectors, dtype=float)
    horiz = np.hypot(v[..., 0], v[..., 1])
    el = np.arctan2(v[..., 2], horiz)
    az = np.where(horiz > 0.0, np.arctan2(v[..., 1], v[..., 0]), 0.0)
    return el, az


def _legendre(order: int, x: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    """Associated Legendre functions P_n^m(x), 0 <= m <= n <= order, without
    the Condon-Shortley phase."""
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    table = {}
    pmm = np.ones_like(x)
    for m in range(order + 1):
        if m > 0:
            pmm = pmm * (2 * m - 1) * s
        table[m, m] = pmm
        if m + 1 <= order:
            table[m + 1, m] = x * (2 * m + 1) * pmm
        for n in range(m + 2, order + 1):
            table[n, m] = ((2 * n - 1) * x * table[n - 1, m] - (n + m - 1) * table[n - 2, m]) / (n - m)
    return table


@lru_cache(maxsize=None)
def sn3d_norm(n: int, m: int) -> float:
    """N_n^|m| including the 1/sqrt(4 pi) factor."""
    am = abs(m)
    delta = 1.0 if m == 0 else 0.0
    return math.sqrt((2.0 - delta) / (4.0 * math.pi) * math.factorial(n - am) / math.factorial(n + am))


def sh_matrix(order: int, elevation, azimuth) -> np.ndarray:
    """Real SH up to ``order`` at the given directions.

    Parameters
    ----------
    order : int
        Maximum SH order.
    elevation, azimuth : array_like
        Angles in radians, broadcastable to a common shape ``S``.

    Returns
    -------
    numpy.ndarray
        Shape ``S + ((order+1)**2,)``, last axis in ACN order.
    """
    if order < 0:
        raise ValueError(f"order must be non-negative, got {order}")
    el, az = np.broadcast_arrays(np.asarray(elevation, float), np.asarray(azimuth, float))
    leg = _legendre(order, np.sin(el))
    out = np.empty(el.shape + (n_channels(order),))
    for n in range(order + 1):
        for m in range(-n, n + 1):
            am = abs(m)
            trig = np.sin(am * az) if m < 0 else np.cos(am * az)
            out[..., n * n + n + m] = sn3d_norm(n, m) * leg[n, am] * trig
    return out


def real_sh(index: ShIndex, direction: Direction) -> float:
    """Y_n^m at a single direction."""
    leg = _legendre(index.n, np.float64(math.sin(direction.elevation)))
    am = abs(index.m)
    trig = math.sin(am * direction.azimuth) if index.m < 0 else math.cos(am * direction.azimuth)
    return float(sn3d_norm(index.n, index.m) * leg[index.n, am] * trig)


def encode_direction(order: int, direction: Direction) -> np.ndarray:
    """Plane-wave encoding gains, length (order+1)**2 in ACN order."""
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in [0, {MAX_ORDER}], got {order}")
    return sh_matrix(order, direction.elevation, direction.azimuth)


def angular_distance(a: Direction, b: Direction) -> float:
    """Great-circle angle between two directions, in radians.

    Evaluated as atan2(|u x v|, u . v), which equals the arccos form but
    stays accurate for nearly equal or antipodal directions.
    """
    u = a.to_vector()
    v = b.to_vector()
    return float(math.atan2(np.linalg.norm(np.cross(u, v)), float(np.dot(u, v))))


def angular_distance_vec(u, v) -> np.ndarray:
    """Angles between rows of two arrays of vectors (need not be unit)."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    return np.arctan2(np.linalg.norm(np.cross(u, v), axis=-1), np.sum(u * v, axis=-1))


def fibonacci_vectors(count: int) -> np.ndarray:
    """Fibonacci lattice on the unit sphere, shape (count, 3)."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    i = np.arange(count, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / count
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    v = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def fibonacci_grid(count: int) -> list[Direction]:
    return [Direction.from_vector(v) for v in fibonacci_vectors(count)]


def equiangular_quadrature(n_elevation: int = 181, n_azimuth: int = 360):
    """Equiangular grid with weights for integration over the sphere.

    Elevation nodes run pole to pole including both poles. Their weights are
    Clenshaw-Curtis weights in sin(elevation), i.e. the cos(elevation) surface
    element integrated exactly for polynomials up to degree n_elevation - 1.

    Returns
    -------
    elevation, azimuth, weights : numpy.ndarray
        Flattened arrays; ``weights.sum() == 4*pi``.
    """
    n = n_elevation - 1
    k = np.arange(n + 1)
    colat = k * math.pi / n
    # Clenshaw-Curtis weights on [-1, 1]
    w = np.ones(n + 1)
    v = np.ones(n - 1)
    inner = colat[1:-1]
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n * n - 1)
        for j in range(1, n // 2):
            v -= 2.0 * np.cos(2 * j * inner) / (4 * j * j - 1)
        v -= np.cos(n * inner) / (n * n - 1)
    else:
        w[0] = w[n] = 1.0 / (n * n)
        for j in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * j * inner) / (4 * j * j - 1)
    w[1:-1] = 2.0 * v / n
    el = math.pi / 2 - colat
    az = np.arange(n_azimuth) * 2.0 * math.pi / n_azimuth
    EL, AZ = np.meshgrid(el, az, indexing="ij")
    W = np.repeat(w[:, None], n_azimuth, axis=1) * (2.0 * math.pi / n_azimuth)
    return EL.ravel(), AZ.ravel(), W.ravel()
