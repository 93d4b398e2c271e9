"""All-pairs correlation volumes, their pooled pyramids, neighborhood lookup,
and multi-view fusion.

The level-0 volume holds the dot product of every reference-pixel feature with
every source-pixel feature.  Coarser levels 2x2-average-pool the source
dimensions, so a lookup at radius r gathers a (2r+1)^2 neighborhood whose
footprint doubles per level.  Per-view correlation feature maps carry a
validity mask (pixels whose reprojection fell behind a source camera);
reductions in fuse_views skip invalid views per pixel and accumulate in
ascending value order, which makes every strategy exactly invariant to the
order views are passed in.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError
from .geometry import Pixel

MAX_PYRAMID_LEVELS = 4


@dataclass
class FeatureMap:
    """Dense H x W grid of D-dimensional float32 feature vectors."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float32)
        if v.ndim != 3 or min(v.shape) < 1:
            raise ShapeError(f"feature map must be (H, W, D), got {v.shape}")
        if not np.isfinite(v).all():
            raise ShapeError("feature map contains non-finite values")
        self.values = v

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


@dataclass
class CorrelationVolume:
    """Pairwise correlations at one pyramid level.

    values[y, x, qy, qx] correlates reference pixel (x, y) with source cell
    (qx, qy) of the (possibly pooled) source grid.
    """

    values: np.ndarray
    level: int = 0

    def __post_init__(self):
        if not 0 <= self.level < MAX_PYRAMID_LEVELS:
            raise ConfigError(f"level must be in [0, {MAX_PYRAMID_LEVELS - 1}], "
                              f"got {self.level}")
        v = np.ascontiguousarray(self.values, dtype=np.float32)
        if v.ndim != 4 or min(v.shape) < 1:
            raise ShapeError(f"correlation volume must be rank 4, got {v.shape}")
        if not np.isfinite(v).all():
            raise ShapeError("correlation volume contains non-finite values")
        self.values = v


@dataclass
class CorrelationPyramid:
    volumes: tuple[CorrelationVolume, ...]

    def __post_init__(self):
        vols = tuple(self.volumes)
        if not 1 <= len(vols) <= MAX_PYRAMID_LEVELS:
            raise ConfigError(f"pyramid needs 1..{MAX_PYRAMID_LEVELS} levels, "
                              f"got {len(vols)}")
        base = vols[0].values.shape
        for l, vol in enumerate(vols):
            if vol.level != l:
                raise ShapeError(f"volume at position {l} has level {vol.level}")
            h, w = vol.values.shape[2:]
            # pooled size is ceil(prev/2) because odd dims are edge-padded
            eh = base[2]
            ew = base[3]
            for _ in range(l):
                eh = (eh + 1) // 2
                ew = (ew + 1) // 2
            if vol.values.shape[:2] != base[:2] or (h, w) != (eh, ew):
                raise ShapeError(
                    f"level {l} shape {vol.values.shape} inconsistent with "
                    f"level 0 {base}")
        self.volumes = vols

    @property
    def levels(self) -> int:
        return len(self.volumes)


@dataclass
class CorrelationFeatureMap:
    """Per-pixel neighborhood-correlation vectors with a validity mask."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float32)
        m = np.asarray(self.valid, dtype=bool)
        if v.ndim != 3:
            raise ShapeError(f"correlation features must be (H, W, L), got {v.shape}")
        if m.shape != v.shape[:2]:
            raise ShapeError(f"mask shape {m.shape} does not match {v.shape[:2]}")
        if not np.isfinite(v[m]).all():
            raise ShapeError("correlation features non-finite at valid pixels")
        self.values = v
        self.valid = m


@dataclass(frozen=True)
class LookupConfig:
    radius: int = 3
    levels: int = 4

    def __post_init__(self):
        if self.radius < 0:
            raise ConfigError(f"radius must be >= 0, got {self.radius}")
        if not 1 <= self.levels <= MAX_PYRAMID_LEVELS:
            raise ConfigError(f"levels must be in [1, {MAX_PYRAMID_LEVELS}], "
                              f"got {self.levels}")

    @property
    def vector_length(self) -> int:
        return self.levels * (2 * self.radius + 1) ** 2


def build_correlation_volume(ref: FeatureMap, src: FeatureMap,
                             normalize: bool = False) -> CorrelationVolume:
    """Dot product of every reference feature with every source feature.

    With normalize=True each feature vector is L2-normalized first (zero
    vectors stay zero); default is the plain dot product.
    """
    if ref.shape[2] != src.shape[2]:
        raise ShapeError(f"feature dims differ: {ref.shape[2]} vs {src.shape[2]}")
    if ref.shape[:2] != src.shape[:2]:
        raise ShapeError(
            f"feature grids differ: {ref.shape[:2]} vs {src.shape[:2]}")
    a, b = ref.values, src.values
    if normalize:
        a = _unit(a)
        b = _unit(b)
    return CorrelationVolume(kernels.corr_volume(a, b))


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.sqrt(np.sum(v.astype(np.float64) ** 2, axis=-1, keepdims=True))
    norm[norm == 0] = 1.0
    return (v / norm).astype(np.float32)


def build_pyramid(c0: CorrelationVolume, levels: int = 4) -> CorrelationPyramid:
    """Pool the source dimensions 2x2 per level; reference dims untouched."""
    if not 1 <= levels <= MAX_PYRAMID_LEVELS:
        raise ConfigError(f"levels must be in [1, {MAX_PYRAMID_LEVELS}], got {levels}")
    if c0.level != 0:
        raise ConfigError(f"pyramid base must be level 0, got level {c0.level}")
    h, w = c0.values.shape[2:]
    if min(h, w) < 1 << (levels - 1):
        raise ShapeError(
            f"source dims {h}x{w} too small to pool {levels} levels")
    vols = [c0]
    for l in range(1, levels):
        vols.append(CorrelationVolume(kernels.avg_pool2x2(vols[-1].values), l))
    return CorrelationPyramid(tuple(vols))


def lookup_grid(pyr: CorrelationPyramid, centers: np.ndarray,
                cfg: LookupConfig = LookupConfig()) -> np.ndarray:
    """Neighborhood correlation vectors for one center per reference pixel.

    centers: (H, W, 2) float64 source-grid (x, y) at level-0 scale.  Returns
    (H, W, L) float32 with levels concatenated in order, each level row-major
    over the (dy, dx) offsets; samples beyond a level's grid read as zero.
    """
    if cfg.levels > pyr.levels:
        raise ConfigError(f"lookup wants {cfg.levels} levels, pyramid has "
                          f"{pyr.levels}")
    ph, pw = pyr.volumes[0].values.shape[:2]
    centers = np.asarray(centers, dtype=np.float64)
    if centers.shape != (ph, pw, 2):
        raise ShapeError(f"centers must be ({ph}, {pw}, 2), got {centers.shape}")
    parts = []
    for l in range(cfg.levels):
        scaled = centers / float(1 << l)
        parts.append(kernels.lookup_windows(pyr.volumes[l].values, scaled,
                                            cfg.radius))
    return np.concatenate(parts, axis=-1)


def lookup(pyr: CorrelationPyramid, p: Pixel, p_k: Pixel,
           cfg: LookupConfig = LookupConfig()) -> np.ndarray:
    """Single-pixel variant of lookup_grid; p must lie on integer coordinates."""
    ph, pw = pyr.volumes[0].values.shape[:2]
    x, y = int(p.x), int(p.y)
    if (x, y) != (p.x, p.y) or not (0 <= x < pw and 0 <= y < ph):
        raise IndexError(f"reference pixel ({p.x}, {p.y}) not on the {ph}x{pw} grid")
    center = np.array([[[p_k.x, p_k.y]]], dtype=np.float64)
    parts = []
    for l in range(cfg.levels):
        vol = pyr.volumes[l].values[y:y + 1, x:x + 1]
        parts.append(kernels.lookup_windows(vol, center / float(1 << l),
                                            cfg.radius))
    return np.concatenate(parts, axis=-1)[0, 0]


FUSION_STRATEGIES = ("averaging", "max", "variance")


def fuse_views(maps: list[CorrelationFeatureMap],
               strategy: str = "averaging") -> CorrelationFeatureMap:
    """Reduce per-view correlation features element-wise across views.

    Per pixel, only views whose mask is set contribute; a pixel invalid in
    every view is invalid in the output.  Sums run over value-sorted operands
    so any view ordering produces bit-identical output.
    """
    if strategy not in FUSION_STRATEGIES:
        raise ConfigError(f"unknown fusion strategy {strategy!r}, "
                          f"expected one of {FUSION_STRATEGIES}")
    if not maps:
        raise ConfigError("fuse_views needs at least one view")
    if strategy == "variance" and len(maps) == 1:
        raise ConfigError("variance fusion is degenerate with a single view")
    shape = maps[0].values.shape
    for i, m in enumerate(maps):
        if m.values.shape != shape:
            raise ShapeError(f"view {i} shape {m.values.shape} != {shape}")
    vals = np.stack([m.values for m in maps]).astype(np.float64)
    masks = np.stack([m.valid for m in maps])
    counts = masks.sum(axis=0)
    out_valid = counts > 0
    ch = masks[..., None]
    if strategy == "max":
        peak = np.where(ch, vals, -np.inf).max(axis=0)
        out = np.where(out_valid[..., None], peak, 0.0)
        return CorrelationFeatureMap(out.astype(np.float32), out_valid)
    mean = _sorted_masked_mean(vals, ch, counts)
    if strategy == "averaging":
        out = np.where(out_valid[..., None], mean, 0.0)
        return CorrelationFeatureMap(out.astype(np.float32), out_valid)
    dev = np.where(ch, vals - mean[None], 0.0) ** 2
    var = _sorted_sum(dev)
    var = _safe_divide(var, counts)
    out = np.where(out_valid[..., None], var, 0.0)
    return CorrelationFeatureMap(out.astype(np.float32), out_valid)


def _sorted_sum(vals: np.ndarray) -> np.ndarray:
    """Sum over axis 0 in ascending value order, one addition at a time."""
    s = np.sort(vals, axis=0)
    acc = s[0].copy()
    for i in range(1, s.shape[0]):
        acc += s[i]
    return acc


def _sorted_masked_mean(vals, ch, counts) -> np.ndarray:
    total = _sorted_sum(np.where(ch, vals, 0.0))
    return _safe_divide(total, counts)


def _safe_divide(total: np.ndarray, counts: np.ndarray) -> np.ndarray:
    out = np.zeros_like(total)
    np.divide(total, counts[..., None], out=out,
              where=(counts > 0)[..., None])
    return out
