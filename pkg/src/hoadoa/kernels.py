"""Hot-loop kernels: compiled extension when built, numpy otherwise.

Set ``HOADOA_PURE_PYTHON=1`` to force the numpy fallback. Both backends
produce bit-identical results.
"""
import os

import numpy as np

from . import _fallback

_compiled = None
if not os.environ.get("HOADOA_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _fallback


def render_arrivals(n_channels, length, start, taps, gains, backend=None):
    """Sum fractional-delay arrivals into a new (n_channels, length) buffer.

    Parameters
    ----------
    n_channels, length : int
        Output shape.
    start : (A,) int
        First sample index of each arrival's tap block.
    taps : (A, K) float
        Interpolation weights of each arrival.
    gains : (A, n_channels) float
        Per-channel gain of each arrival.
    backend : {None, "compiled", "python"}
        Force a backend; ``None`` uses the one selected at import.
    """
    impl = _impl
    if backend == "python":
        impl = _fallback
    elif backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        impl = _compiled
    start = np.ascontiguousarray(start, dtype=np.int64)
    taps = np.ascontiguousarray(taps, dtype=np.float64)
    gains = np.ascontiguousarray(gains, dtype=np.float64)
    if taps.shape[0] != start.shape[0] or gains.shape != (start.shape[0], n_channels):
        raise ValueError("inconsistent arrival array shapes")
    return impl.render_arrivals(int(n_channels), int(length), start, taps, gains)
