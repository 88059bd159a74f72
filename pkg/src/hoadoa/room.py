"""Shoebox image-source simulator producing HOA room impulse responses, and a
synthetic diffuse-field HOA response.

Walls are broadband: each reflection scales the pressure amplitude by
sqrt(1 - absorption) of the wall it hits. Positions are in a room-fixed frame
with the origin in one corner; the receiver frame is that frame translated
to the receiver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kernels import render_arrivals
from .sh import MAX_ORDER, Direction, cart_to_sph, n_channels, sh_matrix, vectors_to_directions

SPEED_OF_SOUND = 343.0
FD_TAPS = 32
MIN_RELATIVE_AMPLITUDE = 1e-6


@dataclass(frozen=True)
class RoomSpec:
    """Shoebox room; absorption order is (x=0, x=Lx, y=0, y=Ly, z=0, z=Lz)."""

    dims: tuple[float, float, float]
    absorption: tuple[float, ...] = (0.5,) * 6
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))
        object.__setattr__(self, "absorption", tuple(float(a) for a in self.absorption))
        if len(self.dims) != 3 or min(self.dims) <= 0.0:
            raise ValueError(f"invalid room dimensions {self.dims}")
        if len(self.absorption) != 6 or not all(0.0 <= a <= 1.0 for a in self.absorption):
            raise ValueError(f"absorption needs 6 values in [0, 1], got {self.absorption}")

    @property
    def volume(self) -> float:
        lx, ly, lz = self.dims
        return lx * ly * lz

    @property
    def wall_areas(self) -> tuple[float, ...]:
        lx, ly, lz = self.dims
        return (ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly)

    def sabine_rt60(self) -> float:
        absorbing = sum(s * a for s, a in zip(self.wall_areas, self.absorption))
        if absorbing <= 0.0:
            return math.inf
        return 0.161 * self.volume / absorbing

    def contains(self, pos, margin: float = 0.0) -> bool:
        return all(margin < p < d - margin for p, d in zip(pos, self.dims))

    def wall_distance(self, pos) -> float:
        return min(min(p, d - p) for p, d in zip(pos, self.dims))


@dataclass(frozen=True)
class SrirRequest:
    room: RoomSpec
    source: tuple[float, float, float]
    receiver: tuple[float, float, float]
    ambisonics_order: int = 4
    sample_rate: int = 48000
    max_reflection_order: int = 20
    length: int = 24000

    def __post_init__(self):
        if not 1 <= self.ambisonics_order <= MAX_ORDER:
            raise ValueError(f"ambisonics order must be in [1, {MAX_ORDER}]")
        if self.length <= 0:
            raise ValueError("length must be positive")
        if not self.room.contains(self.source):
            raise ValueError(f"source {self.source} is not inside the room")
        if not self.room.contains(self.receiver):
            raise ValueError(f"receiver {self.receiver} is not inside the room")


@dataclass
class HoaSignal:
    """Ambisonics signal in ACN/SN3D, shape (channels, samples)."""

    data: np.ndarray
    sample_rate: int
    order: int

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[0] != n_channels(self.order):
            raise ValueError(f"order {self.order} needs {n_channels(self.order)} channels, got {self.data.shape}")

    def foa(self) -> np.ndarray:
        """Channels W, Y, Z, X."""
        return self.data[:4]

    def truncate(self, order: int) -> "HoaSignal":
        return HoaSignal(self.data[: n_channels(order)], self.sample_rate, order)


@dataclass
class Arrivals:
    """Image sources that contribute to a response."""

    delays: np.ndarray  # samples
    amplitudes: np.ndarray
    vectors: np.ndarray  # receiver-frame image positions, (A, 3)
    reflection_orders: np.ndarray


@dataclass
class HoaSrir:
    hoa: HoaSignal
    doa_label: Direction
    distance: float
    arrivals: Arrivals = field(repr=False)


def fractional_delay_taps(delays, n_taps: int = FD_TAPS):
    """Hann-windowed sinc interpolators for fractional delays.

    Returns the first sample index of each tap block and the (A, n_taps) weights.
    """
    delays = np.asarray(delays, dtype=float)
    half = n_taps // 2
    base = np.floor(delays).astype(np.int64)
    start = base - (half - 1)
    t = (start[:, None] + np.arange(n_taps)[None, :]) - delays[:, None]
    window = 0.5 * (1.0 + np.cos(np.pi * t / half))
    return start, np.sinc(t) * window


def _axis_images(src: float, length: float, max_index: int):
    """Image coordinates along one axis with hit counts on the low and high wall."""
    ls = np.arange(-max_index, max_index + 1)
    coords, low, high = [], [], []
    for q in (0, 1):
        coords.append((1 - 2 * q) * src + 2 * ls * length)
        low.append(np.abs(ls - q))
        high.append(np.abs(ls))
    return np.concatenate(coords), np.concatenate(low), np.concatenate(high)


def image_sources(req: SrirRequest) -> Arrivals:
    """Enumerate contributing image sources of a shoebox room."""
    room = req.room
    c, fs = room.speed_of_sound, req.sample_rate
    rcv = np.asarray(req.receiver, float)
    src = np.asarray(req.source, float)
    max_dist = (req.length + FD_TAPS) / fs * c
    beta = np.sqrt(1.0 - np.asarray(room.absorption))
    coords, orders, log_gain = [], [], []
    for axis in range(3):
        max_index = min(req.max_reflection_order, int(math.ceil(max_dist / (2.0 * room.dims[axis]))) + 1)
        x, lo, hi = _axis_images(src[axis], room.dims[axis], max_index)
        coords.append(x - rcv[axis])
        orders.append(lo + hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            lb = np.log(beta[2 * axis : 2 * axis + 2])
            # 0 * log(0) must stay 0 for paths that never touch a fully absorbing wall
            g = np.where(lo > 0, lo * lb[0], 0.0) + np.where(hi > 0, hi * lb[1], 0.0)
        log_gain.append(g)
    gx, gy, gz = np.meshgrid(*[np.arange(len(a)) for a in coords], indexing="ij")
    gx, gy, gz = gx.ravel(), gy.ravel(), gz.ravel()
    order = orders[0][gx] + orders[1][gy] + orders[2][gz]
    keep = order <= req.max_reflection_order
    gx, gy, gz, order = gx[keep], gy[keep], gz[keep], order[keep]
    vec = np.stack([coords[0][gx], coords[1][gy], coords[2][gz]], axis=1)
    dist = np.linalg.norm(vec, axis=1)
    refl = np.exp(log_gain[0][gx] + log_gain[1][gy] + log_gain[2][gz])
    amp = refl / dist
    direct = 1.0 / np.linalg.norm(src - rcv)
    keep = (amp >= MIN_RELATIVE_AMPLITUDE * direct) & (dist <= max_dist)
    # stable sort: arrival order by delay, ties by enumeration order
    idx = np.flatnonzero(keep)
    idx = idx[np.argsort(dist[idx], kind="stable")]
    return Arrivals(dist[idx] / c * fs, amp[idx], vec[idx], order[idx])


def render(arrivals_delays, arrival_gains, n_ch: int, length: int) -> np.ndarray:
    start, taps = fractional_delay_taps(arrivals_delays)
    return render_arrivals(n_ch, length, start, taps, arrival_gains)


def image_source_srir(req: SrirRequest) -> HoaSrir:
    """Simulate an HOA room impulse response with the image-source method."""
    arr = image_sources(req)
    el, az = vectors_to_directions(arr.vectors)
    gains = sh_matrix(req.ambisonics_order, el, az) * arr.amplitudes[:, None]
    data = render(arr.delays, gains, n_channels(req.ambisonics_order), req.length)
    rel = np.asarray(req.source, float) - np.asarray(req.receiver, float)
    sp = cart_to_sph(rel)
    hoa = HoaSignal(data, req.sample_rate, req.ambisonics_order)
    return HoaSrir(hoa, sp.direction, sp.radius, arr)


DIFFUSE_TAILS = 3
DIFFUSE_ARRIVALS = 2048
DIFFUSE_ONSET = 0.010


def default_room_sampler(rng: np.random.Generator) -> RoomSpec:
    dims = rng.uniform([3.0, 3.0, 3.0], [20.0, 20.0, 5.0])
    return RoomSpec(tuple(dims), tuple(rng.uniform(0.1, 0.9, 6)))


def diffuse_srir(
    rng_seed,
    room_sampler: Callable[[np.random.Generator], RoomSpec] = default_room_sampler,
    order: int = 4,
    length: int = 24000,
    sample_rate: int = 48000,
    n_arrivals: int = DIFFUSE_ARRIVALS,
) -> HoaSignal:
    """Average of three synthetic diffuse tails.

    Each tail draws a room, then ``n_arrivals`` arrivals with isotropic
    random directions, random signs and uniformly distributed (sub-sample)
    times after a 10 ms onset. Amplitudes follow the Sabine decay of that
    room (60 dB over RT60).
    """
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in [1, {MAX_ORDER}]")
    if n_arrivals < 256:
        raise ValueError("a diffuse tail needs at least 256 arrivals")
    rng = np.random.default_rng(rng_seed)
    onset = int(round(DIFFUSE_ONSET * sample_rate))
    total = np.zeros((n_channels(order), length))
    for _ in range(DIFFUSE_TAILS):
        room = room_sampler(rng)
        rt60 = room.sabine_rt60()
        t = rng.uniform(onset + FD_TAPS // 2, length, n_arrivals)
        z = rng.uniform(-1.0, 1.0, n_arrivals)
        az = rng.uniform(-np.pi, np.pi, n_arrivals)
        sign = rng.choice([-1.0, 1.0], n_arrivals)
        amp = sign * np.exp(-3.0 * math.log(10.0) * (t / sample_rate) / rt60)
        gains = sh_matrix(order, np.arcsin(z), az) * amp[:, None]
        tail = render(t, gains, n_channels(order), length)
        tail[:, :onset] = 0.0
        total += tail
    return HoaSignal(total / DIFFUSE_TAILS, sample_rate, order)
