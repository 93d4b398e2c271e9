"""Scalar reference implementations used to pin down the vectorized code.

Everything here is written as plain loops over numpy scalars, kept
deliberately independent of the library internals: tests compare library
output against these, so the two must not share shortcuts.
"""

import math

import numpy as np


def corr_volume_loops(ref, src):
    """Quadruple-loop all-pairs dot products with float64 accumulation in
    channel order, cast to float32 once per cell."""
    h, w, d = ref.shape
    hs, ws, _ = src.shape
    out = np.empty((h, w, hs, ws), dtype=np.float32)
    for i in range(h):
        for j in range(w):
            for y in range(hs):
                for x in range(ws):
                    acc = 0.0
                    for c in range(d):
                        acc += float(ref[i, j, c]) * float(src[y, x, c])
                    out[i, j, y, x] = np.float32(acc)
    return out


def avg_pool2x2_loops(vol):
    """2x2 mean over the source dims, replicating the last row/column when
    a dimension is odd."""
    h, w, vh, vw = vol.shape
    ph, pw = (vh + 1) // 2, (vw + 1) // 2
    out = np.empty((h, w, ph, pw), dtype=np.float32)
    for i in range(h):
        for j in range(w):
            for y in range(ph):
                for x in range(pw):
                    y0, x0 = 2 * y, 2 * x
                    y1, x1 = min(y0 + 1, vh - 1), min(x0 + 1, vw - 1)
                    acc = float(vol[i, j, y0, x0]) + float(vol[i, j, y0, x1])
                    acc += float(vol[i, j, y1, x0])
                    acc += float(vol[i, j, y1, x1])
                    out[i, j, y, x] = np.float32(acc * 0.25)
    return out


def bilinear_at(plane, x, y):
    """Bilinear sample of a 2D array at (x, y); outside counts as zero."""
    vh, vw = plane.shape
    x0, y0 = math.floor(x), math.floor(y)
    fx, fy = x - x0, y - y0
    acc = 0.0
    for dy, dx, wgt in ((0, 0, (1 - fy) * (1 - fx)), (0, 1, (1 - fy) * fx),
                        (1, 0, fy * (1 - fx)), (1, 1, fy * fx)):
        yy, xx = y0 + dy, x0 + dx
        val = float(plane[yy, xx]) if 0 <= yy < vh and 0 <= xx < vw else 0.0
        acc += wgt * val
    return acc


def lookup_windows_loops(vol, centers, radius):
    """Window of bilinear samples around each center, row-major offsets."""
    h, w, _, _ = vol.shape
    side = 2 * radius + 1
    out = np.empty((h, w, side * side), dtype=np.float32)
    for i in range(h):
        for j in range(w):
            k = 0
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    out[i, j, k] = np.float32(bilinear_at(
                        vol[i, j], float(centers[i, j, 0]) + dx,
                        float(centers[i, j, 1]) + dy))
                    k += 1
    return out


def conv3x3_loops(x, weight, bias):
    """Direct 3x3 convolution with zero padding, float64 accumulation."""
    h, w, cin = x.shape
    cout = weight.shape[3]
    out = np.empty((h, w, cout), dtype=np.float32)
    for i in range(h):
        for j in range(w):
            for o in range(cout):
                acc = float(bias[o])
                for u in range(3):
                    for v in range(3):
                        yy, xx = i + u - 1, j + v - 1
                        if 0 <= yy < h and 0 <= xx < w:
                            for c in range(cin):
                                acc += float(x[yy, xx, c]) * float(weight[u, v, c, o])
                out[i, j, o] = np.float32(acc)
    return out


def _sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


def gru_cell_loops(hidden, inp, weights):
    """Scalar convolutional GRU step on (H, W, C) arrays.

    Gates use conv3x3 of [hidden, input]; the candidate uses
    [reset * hidden, input]; the new hidden is the usual convex blend.
    """
    hx = np.concatenate([hidden, inp], axis=2)
    z = conv3x3_loops(hx, weights.update_w, weights.update_b)
    r = conv3x3_loops(hx, weights.reset_w, weights.reset_b)
    z = np.vectorize(_sigmoid)(z.astype(np.float64))
    r = np.vectorize(_sigmoid)(r.astype(np.float64))
    rhx = np.concatenate([(r * hidden).astype(np.float32), inp], axis=2)
    cand = conv3x3_loops(rhx, weights.cand_w, weights.cand_b)
    cand = np.tanh(cand.astype(np.float64))
    out = (1.0 - z) * hidden + z * cand
    return out.astype(np.float32)


def upsample2x_loops(arr):
    """2x bilinear upsampling with half-pixel-centered, edge-clamped taps."""
    work = arr.astype(np.float64)
    if work.ndim == 2:
        work = work[:, :, None]
    for axis in (0, 1):
        n = work.shape[axis]
        segs = []
        for i in range(2 * n):
            pos = (i + 0.5) / 2.0 - 0.5
            i0 = math.floor(pos)
            f = pos - i0
            lo = min(max(i0, 0), n - 1)
            hi = min(max(i0 + 1, 0), n - 1)
            segs.append((1.0 - f) * np.take(work, lo, axis=axis)
                        + f * np.take(work, hi, axis=axis))
        work = np.stack(segs, axis=axis)
    if arr.ndim == 2:
        work = work[:, :, 0]
    return work.astype(arr.dtype)


def reprojection_energy(d, ref_pixel, correspondences):
    """E_proj(d): cross-product residual energy over per-view tuples
    (pixel, relative pose, intrinsics)."""
    total = 0.0
    for pix, rel, k in correspondences:
        kinv = np.linalg.inv(k.matrix())
        a = kinv @ np.array([pix.x, pix.y, 1.0])
        b = rel.rotation @ kinv @ np.array([ref_pixel.x, ref_pixel.y, 1.0])
        total += float(np.linalg.norm(np.cross(a, d * b + rel.translation)) ** 2)
    return total


def energy_scan_grid(ref_pixel, correspondences, ds):
    """Evaluate E_proj at every candidate depth in ds; return the argmin."""
    pre = []
    for pix, rel, k in correspondences:
        kinv = np.linalg.inv(k.matrix())
        a = kinv @ np.array([pix.x, pix.y, 1.0])
        b = rel.rotation @ kinv @ np.array([ref_pixel.x, ref_pixel.y, 1.0])
        pre.append((a, b, rel.translation))
    e = np.zeros(len(ds))
    for a, b, c in pre:
        resid = np.cross(np.broadcast_to(a, (len(ds), 3)),
                         ds[:, None] * b + c[None, :])
        e += np.einsum("ij,ij->i", resid, resid)
    return float(ds[int(np.argmin(e))])


def energy_scan(ref_pixel, correspondences, lo=0.1, hi=10.0, step=1e-4,
                stride=100):
    """Minimize E_proj over the uniform grid lo + k*step.

    E_proj is a convex quadratic in depth, so scanning every stride-th grid
    point and then every point within two coarse strides of that winner
    selects the same lattice point as the full scan, at a fraction of the
    evaluations.  energy_scan_grid over the full lattice cross-checks this
    in the tests.
    """
    count = int(round((hi - lo) / step))
    coarse = lo + np.arange(0, count + 1, stride) * step
    d0 = energy_scan_grid(ref_pixel, correspondences, coarse)
    k0 = int(round((d0 - lo) / step))
    ks = np.arange(max(0, k0 - 2 * stride), min(count, k0 + 2 * stride) + 1)
    return energy_scan_grid(ref_pixel, correspondences, lo + ks * step)


def ray_plane_depth(k, pose, normal, anchor, py, px):
    """Scalar ray cast of pixel (px, py) against a plane in world space."""
    dir_cam = np.array([(px - k.cx) / k.fx, (py - k.cy) / k.fy, 1.0])
    dir_world = pose.rotation.T @ dir_cam
    origin = -pose.rotation.T @ pose.translation
    t = float(normal @ (anchor - origin)) / float(normal @ dir_world)
    return t


def metrics_loops(pred, gt):
    """Scalar metric reductions over jointly valid pixels."""
    pairs = [(float(p), float(g))
             for p, g in zip(pred.ravel(), gt.ravel()) if p > 0 and g > 0]
    m = len(pairs)
    abs_rel = sum(abs(g - p) / g for p, g in pairs) / m
    abs_err = sum(abs(g - p) for p, g in pairs) / m
    sq_rel = sum((g - p) ** 2 / g for p, g in pairs) / m
    rmse = math.sqrt(sum((g - p) ** 2 for p, g in pairs) / m)
    inlier = sum(1 for p, g in pairs if max(p / g, g / p) < 1.25)
    return abs_rel, abs_err, sq_rel, rmse, 100.0 * inlier / m, m
