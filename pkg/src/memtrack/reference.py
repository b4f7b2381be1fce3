"""Slow, loop-based reference implementations used as test oracles."""
import itertools

import numpy as np


def naive_attend(q, k, v, wq, wk, wv, wo, n_heads, scale=None):
    """Multi-head attention written with explicit loops over heads, queries and keys."""
    nq, d = q.shape
    nk = k.shape[0]
    dh = d // n_heads
    scale = 1.0 / np.sqrt(dh) if scale is None else scale
    Q, K, V = q @ wq.T, k @ wk.T, v @ wv.T
    concat = np.zeros((nq, d))
    for h in range(n_heads):
        sl = slice(h * dh, (h + 1) * dh)
        for i in range(nq):
            logits = [sum(Q[i, sl][c] * K[j, sl][c] for c in range(dh)) * scale for j in range(nk)]
            m = max(logits)
            w = [np.exp(x - m) for x in logits]
            z = sum(w)
            for j in range(nk):
                concat[i, sl] += (w[j] / z) * V[j, sl]
    return concat @ wo.T


def naive_conv2d(x, w, b, stride=1, pad=0):
    C, H, W = x.shape
    K, _, kh, kw = w.shape
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    out = np.zeros((K, Ho, Wo))
    for k in range(K):
        for i in range(Ho):
            for j in range(Wo):
                acc = b[k]
                for c in range(C):
                    for a in range(kh):
                        for e in range(kw):
                            y = i * stride + a - pad
                            xx = j * stride + e - pad
                            if 0 <= y < H and 0 <= xx < W:
                                acc += w[k, c, a, e] * x[c, y, xx]
                out[k, i, j] = acc
    return out


def naive_bilinear(x, y, xx):
    """Value of x [C,H,W] at real (y, xx) with zero padding outside the grid."""
    C, H, W = x.shape
    y0, x0 = int(np.floor(y)), int(np.floor(xx))
    out = np.zeros(C)
    for dy in (0, 1):
        for dx in (0, 1):
            yy, xq = y0 + dy, x0 + dx
            wgt = (1 - abs(y - yy)) * (1 - abs(xx - xq))
            if 0 <= yy < H and 0 <= xq < W:
                out += wgt * x[:, yy, xq]
    return out


def brute_force_assignment(cost):
    """Minimum cost over all maximum matchings, by enumerating permutations."""
    cost = np.asarray(cost, dtype=np.float64)
    n, m = cost.shape
    if n == 0 or m == 0:
        return 0.0
    if n <= m:
        return min(sum(cost[i, p[i]] for i in range(n)) for p in itertools.permutations(range(m), n))
    return min(sum(cost[p[j], j] for j in range(m)) for p in itertools.permutations(range(n), m))


def brute_force_identity_tp(tp):
    """Largest total overlap over all injective gt -> pred identity mappings."""
    tp = np.asarray(tp, dtype=np.float64)
    n, m = tp.shape
    best = 0.0
    k = min(n, m)
    for rows in itertools.permutations(range(n), k) if n > m else [tuple(range(n))]:
        for cols in itertools.permutations(range(m), k):
            best = max(best, sum(tp[r, c] for r, c in zip(rows, cols)))
    return best


def central_difference(f, x, h=1e-6):
    """Gradient of scalar f at x by central differences."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def relative_error(a, b, floor=1e-5):
    """Max elementwise |a - b| / max(|a|, |b|, floor).

    The floor keeps exact analytic zeros from being compared against pure
    finite-difference roundoff (about 1e-10 at h = 1e-6).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))
