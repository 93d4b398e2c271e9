"""Depth initialization by per-pixel multi-view triangulation.

For a reference pixel p with correspondence p_k in source view k, the
projection error of depth d is ||a_k x (b_k d + c_k)||^2 summed over views,
where a_k = K^-1 p_k (homogeneous), b_k = R_k K^-1 p, c_k = t_k.  The energy
is quadratic in d, so the minimizer is the scalar least-squares solution

    d* = - sum_k (a_k x b_k) . (a_k x c_k) / sum_k ||a_k x b_k||^2.

A denominator below 1e-12 means every baseline is degenerate for that pixel
(pure rotation); a non-positive minimizer means the correspondences are
inconsistent.  Both cases mark the pixel invalid in grid form and raise in
scalar form.
"""

import numpy as np

from .errors import (DegenerateGeometryError, EmptyResultError,
                     NegativeDepthError, ShapeError)
from .geometry import CameraRig, Intrinsics, Pixel, RelativePose, pixel_grid
from .grids import DepthMap, FlowField

DEGENERATE_DENOM = 1e-12


def triangulate_pixel(p: Pixel,
                      corr: list[tuple[Pixel, RelativePose, Intrinsics]]
                      ) -> tuple[float, float]:
    """Closed-form depth for one pixel; returns (depth, residual energy)."""
    if not corr:
        raise DegenerateGeometryError("no correspondences given")
    num = den = 0.0
    crosses = []
    for p_k, rel, k in corr:
        a = np.array([(p_k.x - k.cx) / k.fx, (p_k.y - k.cy) / k.fy, 1.0])
        b = rel.rotation @ np.array([(p.x - k.cx) / k.fx,
                                     (p.y - k.cy) / k.fy, 1.0])
        axb = np.cross(a, b)
        axc = np.cross(a, rel.translation)
        num += float(axb @ axc)
        den += float(axb @ axb)
        crosses.append((axb, axc))
    if den < DEGENERATE_DENOM:
        raise DegenerateGeometryError(
            f"triangulation denominator {den:.3e} below {DEGENERATE_DENOM:.0e}; "
            "baselines are degenerate for this pixel")
    d = -num / den
    if d <= 0:
        raise NegativeDepthError(f"triangulated depth {d} is not positive")
    # evaluate the residual from the per-view vectors rather than the
    # expanded quadratic, which cancels catastrophically near zero
    resid = 0.0
    for axb, axc in crosses:
        r = axb * d + axc
        resid += float(r @ r)
    return d, resid


def triangulate_grid(corrs: np.ndarray, valid: np.ndarray,
                     rig: CameraRig) -> np.ndarray:
    """Vectorized triangulation of every reference pixel at once.

    corrs: (m, H, W, 2) absolute source-pixel coordinates per view;
    valid: (m, H, W) mask of usable correspondences.  Returns (H, W) float64
    depths with 0 where the pixel had no valid view, a degenerate baseline,
    or a non-positive minimizer.
    """
    corrs = np.asarray(corrs, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    m = rig.num_sources
    if corrs.ndim != 4 or corrs.shape[0] != m or corrs.shape[3] != 2:
        raise ShapeError(f"correspondences must be ({m}, H, W, 2), "
                         f"got {corrs.shape}")
    if valid.shape != corrs.shape[:3]:
        raise ShapeError(f"mask shape {valid.shape} != {corrs.shape[:3]}")
    h, w = corrs.shape[1:3]
    k = rig.k
    px, py = pixel_grid(h, w)
    dirs = np.stack([(px - k.cx) / k.fx, (py - k.cy) / k.fy,
                     np.ones_like(px)], axis=-1)
    num = np.zeros((h, w))
    den = np.zeros((h, w))
    for i, rel in enumerate(rig.rel_poses):
        a = np.stack([(corrs[i, ..., 0] - k.cx) / k.fx,
                      (corrs[i, ..., 1] - k.cy) / k.fy,
                      np.ones((h, w))], axis=-1)
        # einsum (optimize off) keeps the contraction off BLAS so results do
        # not depend on thread count
        b = np.einsum("hwj,ij->hwi", dirs, rel.rotation)
        axb = np.cross(a, b)
        axc = np.cross(a, np.broadcast_to(rel.translation, a.shape))
        use = valid[i]
        num += np.where(use, np.einsum("hwi,hwi->hw", axb, axc), 0.0)
        den += np.where(use, np.einsum("hwi,hwi->hw", axb, axb), 0.0)
    ok = den >= DEGENERATE_DENOM
    depth = np.zeros((h, w))
    np.divide(-num, den, out=depth, where=ok)
    depth[~(np.isfinite(depth) & (depth > 0))] = 0.0
    return depth


def init_depth_from_flows(flows: list[FlowField], rig: CameraRig) -> DepthMap:
    """Triangulate p + O_k(p) across all views where the flow is valid."""
    if len(flows) != rig.num_sources:
        raise ShapeError(f"{len(flows)} flow fields for {rig.num_sources} views")
    if not flows:
        raise EmptyResultError("no source views")
    h, w = flows[0].shape
    for i, f in enumerate(flows):
        if f.shape != (h, w):
            raise ShapeError(f"flow {i} shape {f.shape} != ({h}, {w})")
    valid = np.stack([f.valid for f in flows])
    if not valid.any():
        raise EmptyResultError("every pixel lacks a valid flow in all views")
    px, py = pixel_grid(h, w)
    base = np.stack([px, py], axis=-1)
    corrs = np.stack([base + f.flow for f in flows])
    # masked-out entries may be non-finite; zero them before the arithmetic
    corrs = np.where(valid[..., None], corrs, 0.0)
    return DepthMap(triangulate_grid(corrs, valid, rig))


def flow_from_correlation(vol) -> FlowField:
    """Argmax-over-source flow from a level-0 correlation volume.

    Ties resolve to the smallest row-major source index; every pixel is valid.
    """
    if vol.level != 0:
        raise ShapeError(f"flow needs the level-0 volume, got level {vol.level}")
    h, w, sh, sw = vol.values.shape
    flat = vol.values.reshape(h, w, sh * sw)
    idx = np.argmax(flat, axis=-1)
    qy, qx = np.divmod(idx, sw)
    px, py = pixel_grid(h, w)
    flow = np.stack([qx - px, qy - py], axis=-1)
    return FlowField(flow, np.ones((h, w), dtype=bool))
