"""Pure-Python (numpy) kernels.

Same call signatures as the compiled ``_kernels`` module; ``memtrack.backend``
picks one of the two at import. Inputs are assumed already validated and
converted to contiguous float64 by the callers in ``memtrack.tensor``.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "python"


def conv2d(x, w, b, stride, pad):
    C, H, W = x.shape
    K, _, kh, kw = w.shape
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    # win: [C, Ho, Wo, kh, kw]
    Ho, Wo = win.shape[1], win.shape[2]
    cols = win.transpose(0, 3, 4, 1, 2).reshape(C * kh * kw, Ho * Wo)
    out = w.reshape(K, C * kh * kw) @ cols
    out += b[:, None]
    return out.reshape(K, Ho, Wo)


def bilinear_sample(x, ys, xs):
    C, H, W = x.shape
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    wy = ys - y0
    wx = xs - x0
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)
    out = np.zeros((C, ys.shape[0]))
    for dy, dx, wgt in (
        (0, 0, (1.0 - wy) * (1.0 - wx)),
        (0, 1, (1.0 - wy) * wx),
        (1, 0, wy * (1.0 - wx)),
        (1, 1, wy * wx),
    ):
        yy = y0 + dy
        xx = x0 + dx
        ok = (yy >= 0) & (yy < H) & (xx >= 0) & (xx < W)
        vals = np.zeros((C, ys.shape[0]))
        vals[:, ok] = x[:, yy[ok], xx[ok]]
        out += vals * wgt
    return out


def deform_im2col(x, offsets, kh, kw, pad):
    """Columns [C*kh*kw, H*W] of ``x`` sampled at tap + offset, stride 1."""
    C, H, W = x.shape
    ii, jj = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    cols = np.empty((C, kh * kw, H * W))
    for t in range(kh * kw):
        a, c = divmod(t, kw)
        ys = (ii - pad + a + offsets[2 * t]).ravel()
        xs = (jj - pad + c + offsets[2 * t + 1]).ravel()
        cols[:, t, :] = bilinear_sample(x, ys, xs)
    return cols.reshape(C * kh * kw, H * W)


def linear_sum_assignment(cost):
    """Minimum-cost maximum matching on a dense rectangular matrix.

    Shortest augmenting path with row/column potentials, O(n^2 m).
    Returns (rows, cols) sorted by row.
    """
    transposed = cost.shape[0] > cost.shape[1]
    a = cost.T if transposed else cost
    n, m = a.shape
    if n == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, np.int64)
    way = np.zeros(m + 1, np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = a[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    cols = np.nonzero(p[1:])[0]
    rows = p[1:][cols] - 1
    if transposed:
        rows, cols = cols, rows
    order = np.argsort(rows, kind="stable")
    return rows[order].astype(np.int64), cols[order].astype(np.int64)
