"""Kernel backend selection.

The hot non-BLAS loops (segment reductions, edge gather/scatter, the GRU
sequence, and the conv1d column scatter) have two interchangeable
implementations:

* ``numba`` -- ``@njit``-compiled loops (default when numba imports cleanly)
* ``numpy`` -- pure numpy (``np.add.at`` and vectorized per-step updates)

The backend is chosen once at import time from the ``HTGNN_BACKEND``
environment variable ("numba" or "numpy").  ``benchmarks/bench_kernels.py``
compares the two.
"""

import os

import numpy as np

from . import _kernels_numpy

_requested = os.environ.get("HTGNN_BACKEND", "").strip().lower()

if _requested not in ("", "numba", "numpy"):
    raise ValueError(
        f"HTGNN_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested == "numpy":
    _impl = _kernels_numpy
    BACKEND = "numpy"
else:
    try:
        from . import _kernels_numba as _impl

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        _impl = _kernels_numpy
        BACKEND = "numpy"


def segment_sum(values: np.ndarray, ids: np.ndarray, num_segments: int) -> np.ndarray:
    """Sum rows of ``values`` into ``num_segments`` buckets given by ``ids``.

    ``values`` may be 1-D ``(R,)`` or 2-D ``(R, C)``; ``ids`` is ``(R,)`` int.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    ids = np.ascontiguousarray(ids, dtype=np.int64)
    if values.ndim == 1:
        return _impl.segment_sum_1d(values, ids, num_segments)
    if values.ndim == 2:
        return _impl.segment_sum_2d(values, ids, num_segments)
    raise ValueError(f"segment_sum expects 1-D or 2-D values, got {values.ndim}-D")


def segment_max(values: np.ndarray, ids: np.ndarray, num_segments: int) -> np.ndarray:
    """Per-segment maximum of a 1-D array; empty segments yield -inf."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    ids = np.ascontiguousarray(ids, dtype=np.int64)
    return _impl.segment_max_1d(values, ids, num_segments)


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _ci(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def weighted_scatter(values, src, dst, scale, n_out: int) -> np.ndarray:
    """out[dst[e]] += scale[e] * values[src[e]]; the edge-message hot path."""
    return _impl.weighted_scatter(_c(values), _ci(src), _ci(dst), _c(scale), n_out)


def weighted_scatter_scale_grad(values, gout, src, dst) -> np.ndarray:
    return _impl.weighted_scatter_scale_grad(_c(values), _c(gout), _ci(src), _ci(dst))


def col2im_add(gcols, l_pad: int) -> np.ndarray:
    """Accumulate (N, L_out, C_in, K) window grads onto (N, C_in, L_pad)."""
    return _impl.col2im_add(_c(gcols), l_pad)


def gru_forward(x, h0, wz, uz, bz, wr, ur, br, wc, uc, bc):
    return _impl.gru_forward(_c(x), _c(h0), _c(wz), _c(uz), _c(bz),
                             _c(wr), _c(ur), _c(br), _c(wc), _c(uc), _c(bc))


def gru_backward(x, hs, zs, rs, cs, wz, uz, wr, ur, wc, uc, gfinal):
    return _impl.gru_backward(_c(x), _c(hs), _c(zs), _c(rs), _c(cs),
                              _c(wz), _c(uz), _c(wr), _c(ur), _c(wc), _c(uc),
                              _c(gfinal))
