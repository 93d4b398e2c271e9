"""Depth evaluation metrics and the discounted multi-iterate sequence loss."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyMaskError, ShapeError
from .grids import DepthMap


@dataclass(frozen=True)
class MetricsRecord:
    """Five-metric summary over the M pixels valid in both maps.

    abs_rel and sq_rel are dimensionless, abs and rmse are in scene units,
    delta_125 is the percentage of pixels with max(gt/pred, pred/gt) < 1.25.
    """

    abs_rel: float
    abs: float
    sq_rel: float
    rmse: float
    delta_125: float
    valid_count: int

    def items(self):
        return [("abs_rel", self.abs_rel), ("abs", self.abs),
                ("sq_rel", self.sq_rel), ("rmse", self.rmse),
                ("delta_125", self.delta_125), ("valid_count", self.valid_count)]


@dataclass(frozen=True)
class LossConfig:
    gamma: float = 0.8
    num_iters: int = 12

    def __post_init__(self):
        if not (0 < self.gamma <= 1):
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.num_iters < 1:
            raise ConfigError(f"num_iters must be >= 1, got {self.num_iters}")


def compute_metrics(pred: DepthMap, gt: DepthMap) -> MetricsRecord:
    """Evaluate pred against gt on the pixels valid in both."""
    if pred.shape != gt.shape:
        raise ShapeError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    mask = pred.valid & gt.valid
    m = int(np.count_nonzero(mask))
    if m == 0:
        raise EmptyMaskError("no pixels are valid in both prediction and GT")
    d = pred.values[mask]
    d_gt = gt.values[mask]
    err = np.abs(d_gt - d)
    ratio = np.maximum(d_gt / d, d / d_gt)
    return MetricsRecord(
        abs_rel=float(np.sum(err / d_gt) / m),
        abs=float(np.sum(err) / m),
        sq_rel=float(np.sum(err * err / d_gt) / m),
        rmse=float(np.sqrt(np.sum(err * err) / m)),
        delta_125=float(np.count_nonzero(ratio < 1.25) / m * 100.0),
        valid_count=m,
    )


def _masked_l1(pred: DepthMap, gt: DepthMap, what: str) -> float:
    if pred.shape != gt.shape:
        raise ShapeError(f"{what}: shape mismatch {pred.shape} vs {gt.shape}")
    mask = pred.valid & gt.valid
    m = int(np.count_nonzero(mask))
    if m == 0:
        raise EmptyMaskError(f"{what}: no overlapping valid pixels")
    return float(np.sum(np.abs(gt.values[mask] - pred.values[mask])) / m)


def sequence_loss(iterates_lo: list[DepthMap], gt_lo: DepthMap,
                  final: DepthMap, gt: DepthMap,
                  cfg: LossConfig = LossConfig()) -> float:
    """Discounted sum of per-iterate L1 errors plus the full-resolution term.

    Iterate t (1-based) carries weight gamma^(N - t), so the last iterate
    counts fully and early iterates are discounted.  Each L1 term is the mean
    absolute error over pixels valid in both maps.
    """
    n = cfg.num_iters
    if len(iterates_lo) != n:
        raise ConfigError(
            f"expected {n} iterates per the loss config, got {len(iterates_lo)}")
    total = 0.0
    for t, d_t in enumerate(iterates_lo, start=1):
        total += cfg.gamma ** (n - t) * _masked_l1(d_t, gt_lo, f"iterate {t}")
    return total + _masked_l1(final, gt, "final depth")


def format_report(record: MetricsRecord, structured: bool = False) -> str:
    """Render metrics as key=value lines.

    Structured mode prints full-precision round-trippable floats; text mode
    rounds for reading.
    """
    lines = []
    for key, val in record.items():
        if structured:
            lines.append(f"{key}={val!r}")
        elif isinstance(val, int):
            lines.append(f"{key}={val}")
        else:
            lines.append(f"{key}={val:.6f}")
    return "\n".join(lines)
