"""Pure-numpy versions of the compiled kernels, bit-identical to them."""
import numpy as np


def render_arrivals(n_channels, length, start, taps, gains):
    n_taps = taps.shape[1]
    out = np.zeros((n_channels, length))
    idx = start[:, None] + np.arange(n_taps)[None, :]
    valid = (idx >= 0) & (idx < length)
    flat_idx = idx[valid]
    for ch in range(n_channels):
        contrib = (gains[:, ch][:, None] * taps)[valid]
        # bincount accumulates in input order, matching the compiled loop
        out[ch] = np.bincount(flat_idx, weights=contrib, minlength=length)
    return out
