"""Network input features: HOA magnitude/phase and FOA intensity spectrograms."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dsp import ComplexSpectrogram
from .sh import n_channels

# ACN channel indices of the FOA components
W, Y, Z, X = 0, 1, 2, 3

INTENSITY_BOUND = math.sqrt(3.0) / 2.0


@dataclass
class FeatureTensor:
    """Real features, shape (frames, bins, channels), channel-last."""

    data: np.ndarray
    kind: str
    order: int | None = None

    @property
    def shape(self):
        return self.data.shape


def magphase_features(spec: ComplexSpectrogram, order: int) -> FeatureTensor:
    """Magnitudes of all ACN channels followed by their phases in (-pi, pi]."""
    expected = n_channels(order)
    if spec.channels != expected:
        raise ValueError(f"order {order} needs {expected} channels, got {spec.channels}")
    mag = np.abs(spec.data)
    phase = np.angle(spec.data)
    # angle(-1 - 0j) is -pi; map it onto the closed end of the range
    phase[phase == -np.pi] = np.pi
    return FeatureTensor(np.concatenate([mag, phase], axis=-1), "magphase", order)


def intensity_terms(spec: ComplexSpectrogram):
    """Re and Im of W * conj([X, Y, Z]) (the negated active and reactive
    intensity) and the normalization term C."""
    if spec.channels < 4:
        raise ValueError(f"intensity features need 4 FOA channels, got {spec.channels}")
    d = spec.data
    w = d[..., W]
    dip = d[..., [X, Y, Z]]
    cross = w[..., None] * np.conj(dip)
    norm = np.abs(w) ** 2 + (np.abs(dip) ** 2).sum(axis=-1) / 3.0
    return cross.real, cross.imag, norm


def intensity_features(spec: ComplexSpectrogram) -> FeatureTensor:
    """Six-channel [active x, y, z, reactive x, y, z] intensity features.

    Each bin is divided by ``|W|^2 + (|X|^2 + |Y|^2 + |Z|^2) / 3``; bins where
    that term is zero produce zeros.
    """
    act, react, norm = intensity_terms(spec)
    stacked = np.concatenate([act, react], axis=-1)
    out = np.zeros_like(stacked)
    np.divide(stacked, norm[..., None], out=out, where=norm[..., None] > 0.0)
    return FeatureTensor(out, "intensity")


def feature_channels(kind: str, order: int | None = None) -> int:
    if kind == "intensity":
        return 6
    if kind == "magphase":
        return 2 * n_channels(order)
    raise ValueError(f"unknown feature kind {kind!r}")


def compute_features(spec: ComplexSpectrogram, kind: str, order: int | None = None) -> FeatureTensor:
    if kind == "intensity":
        return intensity_features(spec)
    if kind == "magphase":
        if spec.channels > n_channels(order):
            spec = ComplexSpectrogram(spec.data[..., : n_channels(order)])
        return magphase_features(spec, order)
    raise ValueError(f"unknown feature kind {kind!r}")
