"""Numeric hot kernels with backend selection at import time.

The compiled Cython extension is preferred when present; the pure-NumPy
implementations are the fallback and the behavioral reference. Set
``GRIDADVICE_PURE_PYTHON=1`` to force the fallback. ``BACKEND`` reports
which one is active.
"""

from __future__ import annotations

import os

import numpy as np

from . import _numpy as _np_impl

_cy = None
if not os.environ.get("GRIDADVICE_PURE_PYTHON"):
    try:
        from . import _conv as _cy  # type: ignore[no-redef]
    except ImportError:
        _cy = None

BACKEND = "cython" if _cy is not None else "numpy"

# The compiled direct-convolution kernels have near-zero call overhead and win
# on small, latency-sensitive problems (single-state policy queries on desk
# grids); the NumPy fallback rides BLAS and wins on throughput shapes
# (training batches, large grids). Dispatch on the im2col patch-matrix size;
# see benchmarks/kernel_bench.py for the measured crossover.
_SMALL_PATCH = 64_000


def _f64c(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def _small_f64(x, w) -> bool:
    """Compiled-path eligibility: small patch matrix and float64 weights
    (the extension is specialized for doubles)."""
    n, c, h, wd = x.shape
    return (
        w.dtype == np.float64
        and n * h * wd * c * w.shape[2] * w.shape[3] <= _SMALL_PATCH
    )


if _cy is not None:

    def conv2d_forward(x, w, b):
        if _small_f64(x, w):
            return _cy.conv2d_forward(_f64c(x), _f64c(w), _f64c(b))
        return _np_impl.conv2d_forward(x, w, b)

    def conv2d_backward(x, w, dy):
        if _small_f64(x, w):
            return _cy.conv2d_backward(_f64c(x), _f64c(w), _f64c(dy))
        return _np_impl.conv2d_backward(x, w, dy)

    def conv2d_backward_params(x, w, dy):
        if _small_f64(x, w):
            _, dw, db = _cy.conv2d_backward(_f64c(x), _f64c(w), _f64c(dy))
            return dw, db
        return _np_impl.conv2d_backward_params(x, w, dy)

    def conv2d_forward_train(x, w, b):
        if _small_f64(x, w):
            return _cy.conv2d_forward(_f64c(x), _f64c(w), _f64c(b)), None
        return _np_impl.conv2d_forward_train(x, w, b)

    def conv2d_backward_cached(x, w, dy, cache, need_dx):
        if cache is None and _small_f64(x, w):
            dx, dw, db = _cy.conv2d_backward(_f64c(x), _f64c(w), _f64c(dy))
            return (dx if need_dx else None), dw, db
        if need_dx:
            return _np_impl.conv2d_backward(x, w, dy, cache)
        dw, db = _np_impl.conv2d_backward_params(x, w, dy, cache)
        return None, dw, db

    def count_disc_neighbors(mask, radius):
        side = 2 * int(radius) + 1
        if mask.size * side * side <= _SMALL_PATCH:
            m = np.ascontiguousarray(mask, dtype=np.uint8)
            return _cy.count_disc_neighbors(m, int(radius))
        return _np_impl.count_disc_neighbors(mask, radius)

else:
    conv2d_forward = _np_impl.conv2d_forward
    conv2d_backward = _np_impl.conv2d_backward
    conv2d_backward_params = _np_impl.conv2d_backward_params
    conv2d_forward_train = _np_impl.conv2d_forward_train
    count_disc_neighbors = _np_impl.count_disc_neighbors

    def conv2d_backward_cached(x, w, dy, cache, need_dx):
        if need_dx:
            return _np_impl.conv2d_backward(x, w, dy, cache)
        dw, db = _np_impl.conv2d_backward_params(x, w, dy, cache)
        return None, dw, db


numpy_backend = _np_impl
compiled_backend = _cy
