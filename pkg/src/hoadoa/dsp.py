"""STFT, convolution, 3:1 resampling, SNR mixing and segmentation.

Multichannel signals are arrays of shape (channels, samples); a 1-D array
is a mono signal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

FS_SIM = 48000
FS = 16000


@dataclass(frozen=True)
class StftConfig:
    window_length: int = 640
    fft_length: int = 1024
    hop: int = 320
    window: str = "hann"

    def __post_init__(self):
        if self.window_length > self.fft_length:
            raise ValueError("window_length must not exceed fft_length")
        if self.hop < 1:
            raise ValueError("hop must be >= 1")

    @property
    def n_bins(self) -> int:
        # the Nyquist bin is dropped
        return self.fft_length // 2

    def n_frames(self, n_samples: int) -> int:
        return -(-n_samples // self.hop)


@dataclass
class ComplexSpectrogram:
    """STFT data, shape (frames, bins, channels)."""

    data: np.ndarray

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def bins(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def __mul__(self, alpha):
        return ComplexSpectrogram(self.data * alpha)

    __rmul__ = __mul__


def _as_2d(x) -> np.ndarray:
    x = np.asarray(x)
    return x[None, :] if x.ndim == 1 else x


def stft(x, cfg: StftConfig = StftConfig()) -> ComplexSpectrogram:
    """Short-time Fourier transform with tail zero-padding.

    Frame ``k`` covers samples ``[k*hop, k*hop + window_length)``; the
    signal is zero-padded at the end so there are ``ceil(len/hop)`` frames.
    """
    x = _as_2d(np.asarray(x, dtype=float))
    n_ch, n = x.shape
    if n == 0:
        raise ValueError("empty signal")
    n_frames = cfg.n_frames(n)
    padded_len = (n_frames - 1) * cfg.hop + cfg.window_length
    buf = np.zeros((n_ch, max(padded_len, n)))
    buf[:, :n] = x
    frames = np.lib.stride_tricks.sliding_window_view(buf, cfg.window_length, axis=1)[:, :: cfg.hop][:, :n_frames]
    win = sps.get_window(cfg.window, cfg.window_length, fftbins=True)
    spec = np.fft.rfft(frames * win, n=cfg.fft_length, axis=-1)[..., : cfg.n_bins]
    return ComplexSpectrogram(np.ascontiguousarray(spec.transpose(1, 2, 0)))


def convolve(x, h) -> np.ndarray:
    """Full linear convolution, length len(x) + len(h) - 1.

    A mono signal convolved with a multichannel response yields one output
    channel per response channel; two multichannel inputs must match in
    channel count and are convolved channel-wise.
    """
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    if x.shape[-1] == 0 or h.shape[-1] == 0:
        raise ValueError("empty input")
    if x.ndim == 1 and h.ndim == 1:
        return sps.fftconvolve(x, h)
    x2, h2 = _as_2d(x), _as_2d(h)
    if x2.shape[0] != h2.shape[0] and 1 not in (x2.shape[0], h2.shape[0]):
        raise ValueError(f"channel mismatch: {x2.shape[0]} vs {h2.shape[0]}")
    return sps.fftconvolve(x2, h2, axes=1)


RESAMPLE_TAPS = 121
RESAMPLE_BETA = 8.0


def resampling_filter() -> np.ndarray:
    """121-tap Kaiser-windowed sinc (beta 8), cutoff 8 kHz at 48 kHz, unit DC gain."""
    return sps.firwin(RESAMPLE_TAPS, FS / 2, window=("kaiser", RESAMPLE_BETA), fs=FS_SIM)


def resample_3to1(x) -> np.ndarray:
    """Low-pass and decimate 48 kHz to 16 kHz; zero-phase, length ceil(len/3)."""
    x = np.asarray(x, dtype=float)
    h = resampling_filter()
    delay = (RESAMPLE_TAPS - 1) // 2 // 3
    n_out = -(-x.shape[-1] // 3)
    y = sps.upfirdn(h, x, up=1, down=3, axis=-1)
    return np.ascontiguousarray(y[..., delay : delay + n_out])


def power(x) -> float:
    """Mean power of channel 0 (the omni channel) over the whole signal."""
    x = _as_2d(np.asarray(x, dtype=float))
    return float(np.mean(x[0] ** 2))


def snr_db(primary, noise) -> float:
    return 10.0 * math.log10(power(primary) / power(noise))


def fit_length(noise, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Loop (if shorter) or crop (if longer) ``noise`` to ``n`` samples from a
    random offset; offset 0 without ``rng``."""
    noise = np.asarray(noise, dtype=float)
    m = noise.shape[-1]
    if m >= n:
        offset = int(rng.integers(m - n + 1)) if rng is not None else 0
        return noise[..., offset : offset + n]
    offset = int(rng.integers(m)) if rng is not None else 0
    idx = (offset + np.arange(n)) % m
    return noise[..., idx]


def snr_gain(primary, noise, snr: float) -> float:
    p_noise = power(noise)
    if p_noise <= 0.0:
        raise ValueError("noise is silent")
    return math.sqrt(power(primary) / p_noise * 10.0 ** (-snr / 10.0))


def mix_at_snr(primary, noise, snr: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """Return ``primary + g * noise`` with ``g`` set so the channel-0 SNR is ``snr`` dB.

    The noise is looped or cropped to the primary's length first (see
    :func:`fit_length`); all its channels share the same gain.
    """
    primary = np.asarray(primary, dtype=float)
    if primary.shape[-1] == 0 or np.asarray(noise).shape[-1] == 0:
        raise ValueError("empty input")
    noise = fit_length(noise, primary.shape[-1], rng)
    g = snr_gain(primary, noise, snr)
    return primary + g * noise


def segment(x, seconds: float, rate: int = FS) -> list[np.ndarray]:
    """Cut into consecutive non-overlapping segments; the remainder is dropped."""
    n = int(round(seconds * rate))
    if n < 1:
        raise ValueError("segment length must be at least one sample")
    x = np.asarray(x)
    count = x.shape[-1] // n
    return [x[..., k * n : (k + 1) * n] for k in range(count)]
