"""Pinhole camera models, relative poses, and reprojection.

Conventions, fixed package-wide:

* ``Pose`` stores camera-from-world: ``x_cam = R @ x_world + t``.
* ``RelativePose`` maps reference-camera coordinates to source-camera
  coordinates: ``x_src = R_k @ x_ref + t_k``.
* Pixel coordinates are continuous, at feature resolution, with integer
  coordinates at cell centers.
* All geometry runs in float64.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, InvalidDepthError, InvalidPoseError

ROTATION_TOL = 1e-9
MIN_SOURCE_Z = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics: focal lengths and principal point, in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidPoseError(f"non-finite intrinsics: {vals}")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidPoseError(
                f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def scaled(self, s: float) -> "Intrinsics":
        """Intrinsics for the same camera at ``s`` times the resolution.

        Uses the half-pixel-centered resampling convention, so the
        principal point maps as c -> s*(c + 0.5) - 0.5.
        """
        return Intrinsics(self.fx * s, self.fy * s,
                          s * (self.cx + 0.5) - 0.5,
                          s * (self.cy + 0.5) - 0.5)


def _check_rotation(r: np.ndarray, tol: float) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3) or not np.isfinite(r).all():
        raise InvalidPoseError(f"rotation must be a finite 3x3 matrix, got {r.shape}")
    err = np.abs(r.T @ r - np.eye(3)).max()
    det = np.linalg.det(r)
    if err > tol or abs(det - 1.0) > tol:
        raise InvalidPoseError(
            f"rotation not orthonormal (orthogonality error {err:.3e}, det {det:.12f})")
    return r


def _check_translation(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (3,):
        raise InvalidPoseError(f"translation must be a 3-vector, got {t.shape}")
    if not np.isfinite(t).all():
        raise InvalidPoseError(f"non-finite translation: {t}")
    return t


@dataclass(frozen=True)
class Pose:
    """Camera-from-world rigid transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _check_rotation(self.rotation, ROTATION_TOL)
        t = _check_translation(self.translation)
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def center(self) -> np.ndarray:
        """Camera center in world coordinates, -R^T t."""
        return -self.rotation.T @ self.translation


@dataclass(frozen=True)
class RelativePose:
    """Source-camera-from-reference-camera rigid transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _check_rotation(self.rotation, ROTATION_TOL)
        t = _check_translation(self.translation)
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RelativePose":
        return RelativePose(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class Pixel:
    """Continuous pixel coordinates at feature resolution."""

    x: float
    y: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise InvalidPoseError(f"non-finite pixel ({self.x}, {self.y})")


def relative_pose(ref_pose: Pose, src_pose: Pose) -> RelativePose:
    """Relative transform taking reference-camera points to source-camera points."""
    r = src_pose.rotation @ ref_pose.rotation.T
    t = src_pose.translation - r @ ref_pose.translation
    return RelativePose(r, t)


def unproject(p: Pixel, d: float, k: Intrinsics) -> np.ndarray:
    """Back-project pixel ``p`` at depth ``d`` to camera coordinates.

    Returns d * K^-1 * (x, y, 1); the z component equals ``d`` exactly.
    """
    if not (np.isfinite(d) and d > 0):
        raise InvalidDepthError(f"depth must be positive and finite, got {d}")
    return np.array([(p.x - k.cx) / k.fx * d, (p.y - k.cy) / k.fy * d, d])


def project(point: np.ndarray, k: Intrinsics) -> Pixel:
    """Perspective projection of a camera-frame 3D point."""
    x, y, z = np.asarray(point, dtype=np.float64).reshape(3)
    if z <= MIN_SOURCE_Z:
        raise BehindCameraError(f"point z={z} is on or behind the camera plane")
    return Pixel(k.fx * x / z + k.cx, k.fy * y / z + k.cy)


def reproject(p: Pixel, d: float, k: Intrinsics,
              rel: RelativePose) -> tuple[Pixel, float]:
    """Map reference pixel ``p`` with depth ``d`` into the source view.

    Returns the source pixel and the pre-division source depth z.  Raises
    BehindCameraError when z <= 1e-9 so callers can mark the sample invalid.
    """
    x = rel.rotation @ unproject(p, d, k) + rel.translation
    z = x[2]
    if z <= MIN_SOURCE_Z:
        raise BehindCameraError(
            f"pixel ({p.x}, {p.y}) at depth {d} reprojects to z={z}")
    return Pixel(k.fx * x[0] / z + k.cx, k.fy * x[1] / z + k.cy), z


def pixel_grid(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """(x, y) coordinate arrays of shape (H, W), float64."""
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    return x, y


def reproject_grid(depth: np.ndarray, k: Intrinsics,
                   rel: RelativePose) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized reprojection of a full depth grid.

    depth: (H,W) float64 of strictly positive depths (zeros allowed; the
    corresponding outputs are meaningless and flagged by z).  Returns
    (coords, z): coords (H,W,2) source-view (x, y), z (H,W) source depth.
    No behind-camera error is raised; callers mask on ``z > MIN_SOURCE_Z``.
    """
    h, w = depth.shape
    px, py = pixel_grid(h, w)
    dirs = np.stack([(px - k.cx) / k.fx, (py - k.cy) / k.fy,
                     np.ones_like(px)], axis=-1)
    pts = dirs * depth[..., None]
    x = np.einsum("ij,hwj->hwi", rel.rotation, pts) + rel.translation
    z = x[..., 2]
    safe = np.where(np.abs(z) > MIN_SOURCE_Z, z, 1.0)
    coords = np.stack([k.fx * x[..., 0] / safe + k.cx,
                       k.fy * x[..., 1] / safe + k.cy], axis=-1)
    return coords, z


class CameraRig:
    """Shared intrinsics plus a reference pose and source poses.

    Relative poses (source-from-reference) are computed once and cached.
    """

    def __init__(self, k: Intrinsics, ref_pose: Pose,
                 src_poses: list[Pose] | tuple[Pose, ...]):
        self.k = k
        self.ref_pose = ref_pose
        self.src_poses = tuple(src_poses)
        self.rel_poses = tuple(relative_pose(ref_pose, p) for p in self.src_poses)

    @property
    def num_sources(self) -> int:
        return len(self.src_poses)
