"""Pure numpy implementations of the hot kernels.

These are the fallback for the compiled backend in ``_ckernels``.  Both
backends implement the same numeric contracts so either can be active:

* ``corr_volume``: each output element is a float64 accumulation of the
  exact float64 products of float32 inputs, summed in increasing channel
  order, rounded to float32 once.  This makes the result independent of
  vectorization and bit-identical to a scalar loop.
* ``avg_pool2x2``: the four cell values are added in row-major order in
  float64, scaled by 0.25, rounded to float32 once.  Odd trailing dims are
  edge-replicated to even size first.
* ``lookup_windows``: bilinear samples use float64 weights, treat
  out-of-range neighbors as zero, and round to float32 once per sample.
* ``conv3x3``: zero padding, stride 1, float64 accumulation, float32 out.
* ``upsample2x``: separable half-pixel-centered bilinear, vertical pass
  then horizontal pass, edge clamped; float64 arithmetic throughout, cast
  back to the input dtype at the end.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "python"


def corr_volume(ref: np.ndarray, src: np.ndarray) -> np.ndarray:
    """All-pairs feature dot products: (H,W,D) x (Hs,Ws,D) -> (H,W,Hs,Ws)."""
    h, w, d = ref.shape
    hs, ws, _ = src.shape
    a = ref.reshape(h * w, d).astype(np.float64)
    b = src.reshape(hs * ws, d).astype(np.float64)
    out = np.zeros((h * w, hs * ws), dtype=np.float64)
    tmp = np.empty_like(out)
    for c in range(d):
        # One fused rank-1 update per channel keeps the per-element
        # accumulation sequential in c, matching the scalar definition.
        np.multiply(a[:, c, None], b[None, :, c], out=tmp)
        out += tmp
    return out.astype(np.float32).reshape(h, w, hs, ws)


def avg_pool2x2(vol: np.ndarray) -> np.ndarray:
    """2x2 average pooling on the last two dims of a 4D float32 volume."""
    h, w, hs, ws = vol.shape
    ph, pw = hs + (hs & 1), ws + (ws & 1)
    if (ph, pw) != (hs, ws):
        vol = np.pad(vol, ((0, 0), (0, 0), (0, ph - hs), (0, pw - ws)),
                     mode="edge")
    v = vol.astype(np.float64)
    acc = v[..., 0::2, 0::2] + v[..., 0::2, 1::2]
    acc += v[..., 1::2, 0::2]
    acc += v[..., 1::2, 1::2]
    acc *= 0.25
    return acc.astype(np.float32)


def lookup_windows(vol: np.ndarray, centers: np.ndarray,
                   radius: int) -> np.ndarray:
    """Bilinear (2r+1)^2 neighborhood samples per reference pixel.

    vol: (H,W,h,w) float32 volume; centers: (H,W,2) float64 (x, y) in the
    volume's last-two-dims grid.  Returns (H,W,(2r+1)^2) float32, window
    offsets row-major over (dy, dx).  Out-of-range samples read as zero.
    """
    h, w, vh, vw = vol.shape
    flat = vol.reshape(h * w, vh, vw)
    rows = np.arange(h * w)
    cx = centers[..., 0].reshape(-1)
    cy = centers[..., 1].reshape(-1)
    side = 2 * radius + 1
    out = np.empty((h * w, side * side), dtype=np.float32)
    k = 0
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            x = cx + dx
            y = cy + dy
            x0 = np.floor(x)
            y0 = np.floor(y)
            fx = x - x0
            fy = y - y0
            x0 = x0.astype(np.int64)
            y0 = y0.astype(np.int64)
            acc = np.zeros(h * w, dtype=np.float64)
            for (yi, xi, wgt) in (
                (y0, x0, (1.0 - fy) * (1.0 - fx)),
                (y0, x0 + 1, (1.0 - fy) * fx),
                (y0 + 1, x0, fy * (1.0 - fx)),
                (y0 + 1, x0 + 1, fy * fx),
            ):
                inside = (yi >= 0) & (yi < vh) & (xi >= 0) & (xi < vw)
                vals = flat[rows, np.clip(yi, 0, vh - 1),
                            np.clip(xi, 0, vw - 1)]
                acc += wgt * np.where(inside, vals, 0.0)
            out[:, k] = acc.astype(np.float32)
            k += 1
    return out.reshape(h, w, side * side)


def conv3x3(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """3x3 convolution, zero padding, stride 1.

    x: (H,W,Cin); weight: (3,3,Cin,Cout); bias: (Cout,).  Returns
    (H,W,Cout) float32.
    """
    xp = np.pad(x.astype(np.float64), ((1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(0, 1))  # (H,W,Cin,3,3)
    out = np.einsum("hwcuv,uvco->hwo", win, weight.astype(np.float64))
    out += bias.astype(np.float64)
    return out.astype(np.float32)


def _up2_axis(arr: np.ndarray, axis: int) -> np.ndarray:
    n = arr.shape[axis]
    pos = (np.arange(2 * n, dtype=np.float64) + 0.5) / 2.0 - 0.5
    i0 = np.floor(pos)
    frac = pos - i0
    i0 = i0.astype(np.int64)
    lo = np.take(arr, np.clip(i0, 0, n - 1), axis=axis)
    hi = np.take(arr, np.clip(i0 + 1, 0, n - 1), axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = 2 * n
    f = frac.reshape(shape)
    return (1.0 - f) * lo + f * hi


def upsample2x(arr: np.ndarray) -> np.ndarray:
    """2x bilinear upsample of (H,W) or (H,W,C): half-pixel centers, edge clamp."""
    out = _up2_axis(arr.astype(np.float64), 0)
    out = _up2_axis(out, 1)
    return out.astype(arr.dtype)
