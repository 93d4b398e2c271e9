"""Synthetic scenes with exactly-known geometry.

A scene is an analytic world surface (plane, tilted plane, sphere interior,
or a two-plane step), a shared pinhole camera, and a reference view at the
world origin with seeded perturbed source views.  Ground-truth depth for any
view is the ray-surface intersection, so flows, correlations, and refinement
can all be checked against closed forms.

Positional features encode each pixel's observed world point with seeded
random-Fourier projections, L2-normalized; two pixels correlate highly iff
they observe nearby world points, with a tunable peak width in pixels.  That
gives correlation volumes whose argmax provably sits at the true
correspondence, standing in for a learned encoder.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .correlation import FeatureMap
from .errors import ConfigError
from .geometry import (MIN_SOURCE_Z, CameraRig, Intrinsics, Pose, pixel_grid,
                       reproject_grid)
from .grids import DepthMap, FlowField
from .seeding import derive_seed, normal, uniform

SURFACE_KINDS = ("plane", "tilted", "sphere", "step")
DEPTH_RANGE = (0.5, 20.0)


@dataclass(frozen=True)
class SurfaceParams:
    """Surface and rig knobs; defaults give a well-conditioned 4-view scene.

    depth anchors the surface (plane depth, tilted-plane anchor, sphere
    center, step near-plane).  baseline bounds the source camera-center
    offset; actual magnitudes are drawn in [0.6, 1.0] x baseline so no view
    degenerates to pure rotation.
    """

    depth: float = 4.0
    tilt_x: float = 0.15
    tilt_y: float = 0.1
    radius: float = 5.0
    far_depth: float = 6.0
    split: float = 0.0
    baseline: float = 0.5
    rot_max: float = 0.01
    focal: float = 96.0
    height: int = 48
    width: int = 64


@dataclass
class Scene:
    """Camera rig plus per-view ground-truth depth (index 0 = reference)."""

    rig: CameraRig
    gt_depths: tuple[DepthMap, ...]
    kind: str
    params: SurfaceParams
    seed: int

    @property
    def gt_ref(self) -> DepthMap:
        return self.gt_depths[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.gt_depths[0].shape


def _rotation_about(axis: np.ndarray, angle: float) -> np.ndarray:
    a = axis / np.linalg.norm(axis)
    k = np.array([[0.0, -a[2], a[1]],
                  [a[2], 0.0, -a[0]],
                  [-a[1], a[0], 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def _anchor_depth(kind: str, p: SurfaceParams) -> float:
    """Depth of the surface along the reference's principal ray.

    Source views aim here, so the rig converges on the visible surface and
    flows stay small; for the step surface the midpoint splits the
    difference between the two plane depths.
    """
    if kind == "sphere":
        return p.depth + p.radius
    if kind == "step":
        return 0.5 * (p.depth + p.far_depth)
    return p.depth


def _look_at(center: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Camera-from-world rotation aiming the optical axis at ``target``.

    Rows are the camera axes in world coordinates; y stays close to world y
    so the views share an up direction.
    """
    z = target - center
    z = z / np.linalg.norm(z)
    x = np.cross(np.array([0.0, 1.0, 0.0]), z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z])


def _surface_depth(kind: str, p: SurfaceParams, origin: np.ndarray,
                   dirs: np.ndarray) -> np.ndarray:
    """Ray parameter t of the first surface hit; t is camera depth because
    rays carry unit z in the camera frame."""
    dz = dirs[..., 2]
    if kind == "plane":
        return (p.depth - origin[2]) / dz
    if kind == "tilted":
        n = np.array([p.tilt_x, p.tilt_y, 1.0])
        n /= np.linalg.norm(n)
        anchor = np.array([0.0, 0.0, p.depth])
        denom = np.einsum("hwj,j->hw", dirs, n)
        return float(n @ (anchor - origin)) / denom
    if kind == "sphere":
        center = np.array([0.0, 0.0, p.depth])
        rel = origin - center
        if rel @ rel >= (0.9 * p.radius) ** 2:
            raise ConfigError(
                "sphere scene needs every camera center well inside the "
                f"sphere; |c|={np.linalg.norm(rel):.3f} vs radius {p.radius}")
        a = np.einsum("hwj,hwj->hw", dirs, dirs)
        b = 2.0 * np.einsum("hwj,j->hw", dirs, rel)
        c = float(rel @ rel) - p.radius ** 2
        disc = b * b - 4.0 * a * c
        return (-b + np.sqrt(disc)) / (2.0 * a)
    if kind == "step":
        t_near = (p.depth - origin[2]) / dz
        x_near = origin[0] + t_near * dirs[..., 0]
        t_far = (p.far_depth - origin[2]) / dz
        return np.where(x_near < p.split, t_near, t_far)
    raise ConfigError(f"unknown surface kind {kind!r}, "
                      f"expected one of {SURFACE_KINDS}")


def _view_depth(kind: str, p: SurfaceParams, pose: Pose,
                k: Intrinsics) -> DepthMap:
    px, py = pixel_grid(p.height, p.width)
    dirs_cam = np.stack([(px - k.cx) / k.fx, (py - k.cy) / k.fy,
                         np.ones_like(px)], axis=-1)
    dirs_world = np.einsum("hwj,ji->hwi", dirs_cam, pose.rotation)
    origin = pose.center()
    t = _surface_depth(kind, p, origin, dirs_world)
    if not np.isfinite(t).all() or (t <= 0).any():
        raise ConfigError(f"{kind} surface parameters leave some pixel rays "
                          "without a positive depth")
    lo, hi = float(t.min()), float(t.max())
    if lo < DEPTH_RANGE[0] or hi > DEPTH_RANGE[1]:
        raise ConfigError(f"scene depths [{lo:.3f}, {hi:.3f}] leave the "
                          f"required range {DEPTH_RANGE}")
    return DepthMap(t)


def make_scene(kind: str = "plane", params: SurfaceParams = SurfaceParams(),
               views: int = 4, seed: int = 0) -> Scene:
    """Build a scene with ``views`` perturbed source cameras around the
    identity reference."""
    if kind not in SURFACE_KINDS:
        raise ConfigError(f"unknown surface kind {kind!r}, "
                          f"expected one of {SURFACE_KINDS}")
    if views < 1:
        raise ConfigError(f"need at least one source view, got {views}")
    if params.height < 8 or params.width < 8:
        raise ConfigError(f"scene grid {params.height}x{params.width} too small")
    if params.baseline <= 0 or params.focal <= 0:
        raise ConfigError("baseline and focal must be positive")
    k = Intrinsics(params.focal, params.focal,
                   (params.width - 1) / 2.0, (params.height - 1) / 2.0)
    ref = Pose.identity()
    src_poses = []
    for i in range(views):
        axis = normal(derive_seed(seed, 2 * i + 1), (3,))
        if np.linalg.norm(axis) < 1e-9:
            axis = np.array([0.0, 0.0, 1.0])
        draws = uniform(derive_seed(seed, 2 * i + 2), (5,), 0.0, 1.0)
        angle = (2.0 * draws[0] - 1.0) * params.rot_max
        direction = normal(derive_seed(seed, 1000 + i), (3,))
        if np.linalg.norm(direction) < 1e-9:
            direction = np.array([1.0, 0.0, 0.0])
        direction /= np.linalg.norm(direction)
        magnitude = (0.6 + 0.4 * draws[1]) * params.baseline
        center = magnitude * direction
        anchor = np.array([0.0, 0.0, _anchor_depth(kind, params)])
        r = _rotation_about(axis, float(angle)) @ _look_at(center, anchor)
        src_poses.append(Pose(r, -r @ center))
    rig = CameraRig(k, ref, src_poses)
    depths = tuple(_view_depth(kind, params, pose, k)
                   for pose in (ref,) + rig.src_poses)
    return Scene(rig, depths, kind, params, seed)


def full_res_depth(scene: Scene, scale: int = 8) -> DepthMap:
    """Reference-view GT depth at ``scale`` times the feature resolution.

    Uses the half-pixel-centered intrinsics scaling, matching the alignment
    of the bilinear upsampling stages.
    """
    if scale < 1:
        raise ConfigError(f"scale must be >= 1, got {scale}")
    p_hi = replace(scene.params, height=scene.params.height * scale,
                   width=scene.params.width * scale)
    k_hi = scene.rig.k.scaled(float(scale))
    return _view_depth(scene.kind, p_hi, scene.rig.ref_pose, k_hi)


def gt_flow(scene: Scene, src_index: int) -> FlowField:
    """Exact reference-to-source flow; invalid outside the frame or behind."""
    if not 0 <= src_index < scene.rig.num_sources:
        raise ConfigError(f"source index {src_index} out of range "
                          f"[0, {scene.rig.num_sources})")
    h, w = scene.shape
    depth = scene.gt_ref.values
    coords, z = reproject_grid(depth, scene.rig.k,
                               scene.rig.rel_poses[src_index])
    x, y = coords[..., 0], coords[..., 1]
    valid = ((z > MIN_SOURCE_Z) & (x >= 0) & (x <= w - 1)
             & (y >= 0) & (y <= h - 1))
    px, py = pixel_grid(h, w)
    flow = np.where(valid[..., None],
                    coords - np.stack([px, py], axis=-1), 0.0)
    return FlowField(flow, valid)


def world_points(scene: Scene, view: int) -> np.ndarray:
    """(H, W, 3) world coordinates observed by the given view (0 = reference)."""
    if not 0 <= view <= scene.rig.num_sources:
        raise ConfigError(f"view {view} out of range "
                          f"[0, {scene.rig.num_sources}]")
    pose = scene.rig.ref_pose if view == 0 else scene.rig.src_poses[view - 1]
    k = scene.rig.k
    h, w = scene.shape
    px, py = pixel_grid(h, w)
    dirs_cam = np.stack([(px - k.cx) / k.fx, (py - k.cy) / k.fy,
                         np.ones_like(px)], axis=-1)
    dirs_world = np.einsum("hwj,ji->hwi", dirs_cam, pose.rotation)
    t = scene.gt_depths[view].values
    return pose.center() + dirs_world * t[..., None]


def positional_features(scene: Scene, view: int, dim: int = 96,
                        seed: int = 0, peak_px: float = 1.5) -> FeatureMap:
    """Random-Fourier encoding of the world point each pixel observes.

    Frequencies are scaled so that the expected correlation between two
    pixels drops to about one half when their world points are one
    ``peak_px``-pixel step apart at the scene's anchor depth.  The same
    (seed, dim) must be used for every view of a scene so matching world
    points match in feature space.
    """
    if dim < 16:
        raise ConfigError(f"feature dim must be >= 16, got {dim}")
    if peak_px <= 0:
        raise ConfigError(f"peak width must be positive, got {peak_px}")
    pts = world_points(scene, view)
    anchor = _anchor_depth(scene.kind, scene.params)
    world_step = peak_px * anchor / scene.params.focal
    sigma = math.sqrt(2.0 * math.log(2.0)) / world_step
    freqs = sigma * normal(derive_seed(seed, 7001), (dim, 3))
    phases = uniform(derive_seed(seed, 7002), (dim,), 0.0, 2.0 * math.pi)
    raw = np.cos(np.einsum("hwj,dj->hwd", pts, freqs) + phases)
    norm = np.sqrt(np.einsum("hwd,hwd->hw", raw, raw))
    norm = np.where(norm == 0, 1.0, norm)
    return FeatureMap((raw / norm[..., None]).astype(np.float32))
