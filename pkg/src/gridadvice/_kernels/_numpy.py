"""Pure-NumPy kernel implementations (fallback backend).

Same contracts as the compiled backend in ``_conv.pyx``:

- convolutions are 2-D cross-correlations with zero "same" padding
  (odd kernel sizes only), NCHW layout, float64;
- ``count_disc_neighbors`` counts true cells within Chebyshev distance
  <= radius of each cell, excluding the cell itself.
"""

from __future__ import annotations

import numpy as np


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """(N, C, H, W) -> (N*H*W, kh*kw*C) patch matrix under same padding.

    Patches are gathered through a channels-last intermediate so every copy
    is a contiguous block; the column order is (kh, kw, C).
    """
    n, c, h, w = x.shape
    xt = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
    xp = np.pad(xt, ((0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2), (0, 0)))
    cols = np.empty((n, h, w, kh, kw, c), dtype=x.dtype)
    for u in range(kh):
        for v in range(kw):
            cols[:, :, :, u, v, :] = xp[:, u : u + h, v : v + w, :]
    return cols.reshape(n * h * w, kh * kw * c)


def _weight_matrix(w: np.ndarray) -> np.ndarray:
    """(co, ci, kh, kw) -> (kh*kw*ci, co), matching the im2col column order."""
    co = w.shape[0]
    return np.ascontiguousarray(w.transpose(2, 3, 1, 0)).reshape(-1, co)


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return conv2d_forward_train(x, w, b)[0]


def conv2d_forward_train(
    x: np.ndarray, w: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Forward pass plus the patch matrix, reusable by the backward pass."""
    n, _, h, width = x.shape
    co, _, kh, kw = w.shape
    cols = _im2col(x, kh, kw)
    out = cols @ _weight_matrix(w)
    out += b
    # contiguous NCHW: downstream elementwise/pad work is strided otherwise
    return np.ascontiguousarray(out.reshape(n, h, width, co).transpose(0, 3, 1, 2)), cols


def conv2d_backward_params(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray, cols: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Weight/bias gradients only (first layers never need dx); reuses the
    forward pass's patch matrix when provided."""
    n, _, h, width = x.shape
    co, ci, kh, kw = w.shape
    db = dy.sum(axis=(0, 2, 3))
    dyc = np.ascontiguousarray(dy.transpose(0, 2, 3, 1)).reshape(n * h * width, co)
    if cols is None:
        cols = _im2col(x, kh, kw)
    dw_mat = cols.T @ dyc  # (kh*kw*ci, co)
    dw = np.ascontiguousarray(dw_mat.reshape(kh, kw, ci, co).transpose(3, 2, 0, 1))
    return dw, db


def conv2d_backward(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray, cols: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    co, ci, kh, kw = w.shape
    dw, db = conv2d_backward_params(x, w, dy, cols)
    # dx is the same-padded correlation of dy with the spatially flipped,
    # channel-swapped weights.
    w_t = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    dx = conv2d_forward(dy, np.ascontiguousarray(w_t), np.zeros(ci, dtype=dy.dtype))
    return dx, dw, db


def count_disc_neighbors(mask: np.ndarray, radius: int) -> np.ndarray:
    """Per-cell count of true cells within Chebyshev distance <= radius.

    The cell itself is excluded; the window is clipped at the borders.
    """
    m = mask.astype(np.int64)
    p = np.pad(m, radius)
    # summed-area table with a zero first row/column
    sat = np.zeros((p.shape[0] + 1, p.shape[1] + 1), dtype=np.int64)
    sat[1:, 1:] = p.cumsum(0).cumsum(1)
    side = 2 * radius + 1
    h, w = m.shape
    window = (
        sat[side : side + h, side : side + w]
        - sat[:h, side : side + w]
        - sat[side : side + h, :w]
        + sat[:h, :w]
    )
    return (window - m).astype(np.int64)
