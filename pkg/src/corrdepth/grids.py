"""Grid containers shared across the pipeline: depth maps and flow fields."""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDepthError, ShapeError

# smallest depth any estimator is allowed to emit, in scene units
DEPTH_FLOOR = 1e-3


@dataclass
class DepthMap:
    """H x W depths in scene units, float64; the value 0 marks an invalid pixel.

    Every nonzero entry must be positive and finite.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ShapeError(f"depth map must be 2-D, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise InvalidDepthError("depth map contains non-finite values")
        if (v < 0).any():
            raise InvalidDepthError("depth map contains negative values")
        self.values = v

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def valid(self) -> np.ndarray:
        """Boolean mask of pixels carrying an estimate."""
        return self.values > 0

    def num_valid(self) -> int:
        return int(np.count_nonzero(self.values > 0))


@dataclass
class FlowField:
    """H x W x 2 pixel displacements (dx, dy) with a per-pixel validity mask.

    Flow entries must be finite wherever the mask is set; masked-out entries
    are unconstrained and are zeroed when written to disk.
    """

    flow: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        f = np.asarray(self.flow, dtype=np.float64)
        if f.ndim != 3 or f.shape[2] != 2:
            raise ShapeError(f"flow must have shape (H, W, 2), got {f.shape}")
        if self.valid is None:
            m = np.ones(f.shape[:2], dtype=bool)
        else:
            m = np.asarray(self.valid, dtype=bool)
        if m.shape != f.shape[:2]:
            raise ShapeError(
                f"validity mask shape {m.shape} does not match flow {f.shape[:2]}")
        if not np.isfinite(f[m]).all():
            raise ShapeError("flow contains non-finite values at valid pixels")
        self.flow = f
        self.valid = m

    @property
    def shape(self) -> tuple[int, int]:
        return self.flow.shape[:2]
