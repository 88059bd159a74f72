# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled scatter-add of fractional-delay arrivals into a multichannel IR."""
import numpy as np


def render_arrivals(Py_ssize_t n_channels, Py_ssize_t length, const long long[::1] start,
                    const double[:, ::1] taps, const double[:, ::1] gains):
    """out[ch, start[a] + k] += gains[a, ch] * taps[a, k], dropping samples
    outside the buffer. Loop order (a, ch, k) fixes the summation order."""
    out_arr = np.zeros((n_channels, length))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t n_arr = taps.shape[0]
    cdef Py_ssize_t n_taps = taps.shape[1]
    cdef Py_ssize_t a, ch, k, idx, k0, k1
    cdef double g
    for a in range(n_arr):
        k0 = 0
        if start[a] < 0:
            k0 = -start[a]
        k1 = n_taps
        if start[a] + n_taps > length:
            k1 = length - start[a]
        if k1 <= k0:
            continue
        for ch in range(n_channels):
            g = gains[a, ch]
            for k in range(k0, k1):
                idx = start[a] + k
                out[ch, idx] = out[ch, idx] + g * taps[a, k]
    return out_arr
