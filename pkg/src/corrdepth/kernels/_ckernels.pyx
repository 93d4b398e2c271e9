# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels.

The numeric contracts live in ``_pykernels``; every loop here accumulates in
the same order, so corr_volume, avg_pool2x2, lookup_windows, and upsample2x
are bit-identical to the fallback (conv3x3 agrees to float32 rounding, since
the fallback's einsum does not pin its contraction order).  The build disables
FMA contraction to keep additions and multiplications individually rounded.
"""

import numpy as np

from libc.math cimport floor

BACKEND = "cython"


def corr_volume(ref, src):
    """All-pairs feature dot products: (H,W,D) x (Hs,Ws,D) -> (H,W,Hs,Ws)."""
    cdef float[:, ::1] a = np.ascontiguousarray(ref, dtype=np.float32).reshape(-1, ref.shape[2])
    cdef float[:, ::1] b = np.ascontiguousarray(src, dtype=np.float32).reshape(-1, src.shape[2])
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], d = a.shape[1]
    out_arr = np.empty((n, m), dtype=np.float32)
    cdef float[:, ::1] out = out_arr
    cdef Py_ssize_t p, q, c
    cdef double acc
    for p in range(n):
        for q in range(m):
            acc = 0.0
            for c in range(d):
                acc += (<double>a[p, c]) * (<double>b[q, c])
            out[p, q] = <float>acc
    return out_arr.reshape(ref.shape[0], ref.shape[1],
                           src.shape[0], src.shape[1])


def avg_pool2x2(vol):
    """2x2 average pooling on the last two dims; odd dims edge-replicate."""
    cdef float[:, :, ::1] v = np.ascontiguousarray(vol, dtype=np.float32).reshape(-1, vol.shape[2], vol.shape[3])
    cdef Py_ssize_t n = v.shape[0], vh = v.shape[1], vw = v.shape[2]
    cdef Py_ssize_t ph = (vh + 1) // 2, pw = (vw + 1) // 2
    out_arr = np.empty((n, ph, pw), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef Py_ssize_t p, y, x, y0, y1, x0, x1
    cdef double acc
    for p in range(n):
        for y in range(ph):
            y0 = 2 * y
            y1 = y0 + 1 if y0 + 1 < vh else vh - 1
            for x in range(pw):
                x0 = 2 * x
                x1 = x0 + 1 if x0 + 1 < vw else vw - 1
                acc = (<double>v[p, y0, x0]) + (<double>v[p, y0, x1])
                acc = acc + (<double>v[p, y1, x0])
                acc = acc + (<double>v[p, y1, x1])
                out[p, y, x] = <float>(acc * 0.25)
    return out_arr.reshape(vol.shape[0], vol.shape[1], ph, pw)


def lookup_windows(vol, centers, radius):
    """Bilinear (2r+1)^2 neighborhood samples per reference pixel."""
    cdef float[:, :, ::1] flat = np.ascontiguousarray(vol, dtype=np.float32).reshape(-1, vol.shape[2], vol.shape[3])
    cdef double[:, ::1] ctr = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 2)
    cdef Py_ssize_t n = flat.shape[0], vh = flat.shape[1], vw = flat.shape[2]
    cdef Py_ssize_t r = radius, side = 2 * radius + 1
    out_arr = np.empty((n, side * side), dtype=np.float32)
    cdef float[:, ::1] out = out_arr
    cdef Py_ssize_t p, k, dy, dx
    cdef double cx, cy, x, y, x0f, y0f, fx, fy, acc, v00, v01, v10, v11
    cdef Py_ssize_t x0, y0
    for p in range(n):
        cx = ctr[p, 0]
        cy = ctr[p, 1]
        k = 0
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                x = cx + dx
                y = cy + dy
                x0f = floor(x)
                y0f = floor(y)
                fx = x - x0f
                fy = y - y0f
                x0 = <Py_ssize_t>x0f
                y0 = <Py_ssize_t>y0f
                v00 = (<double>flat[p, y0, x0]) \
                    if 0 <= y0 < vh and 0 <= x0 < vw else 0.0
                v01 = (<double>flat[p, y0, x0 + 1]) \
                    if 0 <= y0 < vh and 0 <= x0 + 1 < vw else 0.0
                v10 = (<double>flat[p, y0 + 1, x0]) \
                    if 0 <= y0 + 1 < vh and 0 <= x0 < vw else 0.0
                v11 = (<double>flat[p, y0 + 1, x0 + 1]) \
                    if 0 <= y0 + 1 < vh and 0 <= x0 + 1 < vw else 0.0
                acc = 0.0
                acc += (1.0 - fy) * (1.0 - fx) * v00
                acc += (1.0 - fy) * fx * v01
                acc += fy * (1.0 - fx) * v10
                acc += fy * fx * v11
                out[p, k] = <float>acc
                k += 1
    return out_arr.reshape(vol.shape[0], vol.shape[1], side * side)


def conv3x3(x, weight, bias):
    """3x3 convolution, zero padding, stride 1, float64 accumulation."""
    cdef float[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float32)
    cdef double[:, :, :, ::1] wv = np.ascontiguousarray(weight, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(bias, dtype=np.float64)
    cdef Py_ssize_t h = xv.shape[0], w = xv.shape[1], cin = xv.shape[2]
    cdef Py_ssize_t cout = wv.shape[3]
    out_arr = np.empty((h, w, cout), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, o, u, v, c, yy, xx
    cdef double acc
    for i in range(h):
        for j in range(w):
            for o in range(cout):
                acc = bv[o]
                for u in range(3):
                    yy = i + u - 1
                    if yy < 0 or yy >= h:
                        continue
                    for v in range(3):
                        xx = j + v - 1
                        if xx < 0 or xx >= w:
                            continue
                        for c in range(cin):
                            acc += (<double>xv[yy, xx, c]) * wv[u, v, c, o]
                out[i, j, o] = <float>acc
    return out_arr


cdef void _up2_pass(double[:, :, ::1] src, double[:, :, ::1] dst):
    """Double the first axis with half-pixel-centered bilinear weights."""
    cdef Py_ssize_t n = src.shape[0], m = src.shape[1], c = src.shape[2]
    cdef Py_ssize_t i, j, k, i0, lo, hi
    cdef double pos, f
    for i in range(2 * n):
        pos = (i + 0.5) / 2.0 - 0.5
        i0 = <Py_ssize_t>floor(pos)
        f = pos - floor(pos)
        lo = i0 if i0 > 0 else 0
        if lo > n - 1:
            lo = n - 1
        hi = i0 + 1 if i0 + 1 > 0 else 0
        if hi > n - 1:
            hi = n - 1
        for j in range(m):
            for k in range(c):
                dst[i, j, k] = (1.0 - f) * src[lo, j, k] + f * src[hi, j, k]


def upsample2x(arr):
    """2x bilinear upsample of (H,W) or (H,W,C): half-pixel centers, edge clamp."""
    squeeze = arr.ndim == 2
    work = np.ascontiguousarray(arr, dtype=np.float64)
    if squeeze:
        work = np.ascontiguousarray(work[:, :, None])
    cdef Py_ssize_t h = work.shape[0], w = work.shape[1], c = work.shape[2]
    mid_arr = np.empty((2 * h, w, c), dtype=np.float64)
    cdef double[:, :, ::1] srcv = work
    cdef double[:, :, ::1] midv = mid_arr
    _up2_pass(srcv, midv)
    mid_t = np.ascontiguousarray(mid_arr.transpose(1, 0, 2))
    out_t = np.empty((2 * w, 2 * h, c), dtype=np.float64)
    cdef double[:, :, ::1] mtv = mid_t
    cdef double[:, :, ::1] otv = out_t
    _up2_pass(mtv, otv)
    out = np.ascontiguousarray(out_t.transpose(1, 0, 2))
    if squeeze:
        out = out[:, :, 0]
    return out.astype(arr.dtype)
