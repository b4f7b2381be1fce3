# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Mirrors ``memtrack._pykernels`` call for call."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, INFINITY

cnp.import_array()

NAME = "compiled"


def conv2d(double[:, :, ::1] x, double[:, :, :, ::1] w, double[::1] b, int stride, int pad):
    # im2col in C, then one BLAS matrix product
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t K = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t Ho = (H + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - kw) // stride + 1
    cols_arr = np.zeros((C * kh * kw, Ho * Wo))
    cdef double[:, ::1] cols = cols_arr
    cdef Py_ssize_t c, a, e, i, j, yy, xx, row
    with nogil:
        for c in range(C):
            for a in range(kh):
                for e in range(kw):
                    row = (c * kh + a) * kw + e
                    for i in range(Ho):
                        yy = i * stride - pad + a
                        if yy < 0 or yy >= H:
                            continue
                        for j in range(Wo):
                            xx = j * stride - pad + e
                            if 0 <= xx < W:
                                cols[row, i * Wo + j] = x[c, yy, xx]
    out = np.asarray(w).reshape(K, C * kh * kw) @ cols_arr
    out += np.asarray(b)[:, None]
    return out.reshape(K, Ho, Wo)


cdef inline void _sample(double[:, :, ::1] x, double y, double xc, double[:, ::1] out, Py_ssize_t col) nogil:
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef double fy = floor(y), fx = floor(xc)
    cdef double wy = y - fy, wx = xc - fx
    cdef Py_ssize_t y0 = <Py_ssize_t>fy, x0 = <Py_ssize_t>fx
    cdef Py_ssize_t c
    cdef double w00 = (1.0 - wy) * (1.0 - wx)
    cdef double w01 = (1.0 - wy) * wx
    cdef double w10 = wy * (1.0 - wx)
    cdef double w11 = wy * wx
    cdef bint in_y0 = 0 <= y0 < H
    cdef bint in_y1 = 0 <= y0 + 1 < H
    cdef bint in_x0 = 0 <= x0 < W
    cdef bint in_x1 = 0 <= x0 + 1 < W
    for c in range(C):
        out[c, col] = 0.0
        if in_y0 and in_x0:
            out[c, col] += x[c, y0, x0] * w00
        if in_y0 and in_x1:
            out[c, col] += x[c, y0, x0 + 1] * w01
        if in_y1 and in_x0:
            out[c, col] += x[c, y0 + 1, x0] * w10
        if in_y1 and in_x1:
            out[c, col] += x[c, y0 + 1, x0 + 1] * w11


def bilinear_sample(double[:, :, ::1] x, double[::1] ys, double[::1] xs):
    cdef Py_ssize_t P = ys.shape[0], p
    out_arr = np.empty((x.shape[0], P))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for p in range(P):
            _sample(x, ys[p], xs[p], out, p)
    return out_arr


def deform_im2col(double[:, :, ::1] x, double[:, :, ::1] offsets, int kh, int kw, int pad):
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t T = kh * kw
    cdef Py_ssize_t t, i, j, c, col
    cdef double y, xc
    tmp_arr = np.empty((C, H * W))
    cdef double[:, ::1] tmp = tmp_arr
    cols_arr = np.empty((C, T, H * W))
    cdef double[:, :, ::1] cols = cols_arr
    with nogil:
        for t in range(T):
            for i in range(H):
                for j in range(W):
                    col = i * W + j
                    y = i - pad + (t // kw) + offsets[2 * t, i, j]
                    xc = j - pad + (t % kw) + offsets[2 * t + 1, i, j]
                    _sample(x, y, xc, tmp, col)
            for c in range(C):
                for col in range(H * W):
                    cols[c, t, col] = tmp[c, col]
    return cols_arr.reshape(C * T, H * W)


def linear_sum_assignment(double[:, :] cost):
    cdef bint transposed = cost.shape[0] > cost.shape[1]
    cdef double[:, :] a = cost.T if transposed else cost
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1]
    if n == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    u_arr = np.zeros(n + 1)
    v_arr = np.zeros(m + 1)
    p_arr = np.zeros(m + 1, np.int64)
    way_arr = np.zeros(m + 1, np.int64)
    minv_arr = np.empty(m + 1)
    used_arr = np.empty(m + 1, np.uint8)
    cdef double[::1] u = u_arr, v = v_arr, minv = minv_arr
    cdef cnp.int64_t[::1] p = p_arr, way = way_arr
    cdef unsigned char[::1] used = used_arr
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double delta, cur
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(m + 1):
            minv[j] = INFINITY
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            delta = INFINITY
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = a[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    cols = np.nonzero(p_arr[1:])[0]
    rows = p_arr[1:][cols] - 1
    if transposed:
        rows, cols = cols, rows
    order = np.argsort(rows, kind="stable")
    return rows[order].astype(np.int64), cols[order].astype(np.int64)
