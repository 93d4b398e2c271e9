"""Iterative depth refinement driven by correlation lookups.

Each iteration reprojects every reference pixel into every source view with
the current depth, gathers neighborhood correlation vectors there, fuses them
across views, and applies an updater to produce the next depth map.  Two
updaters are provided:

* ``gru``: a convolutional GRU over the fused correlation features plus
  pre-convolved depth and an optional context feature; a two-layer head turns
  the hidden state into a depth residual.  Weights load from the named-tensor
  container or come from the seeded initializer.
* ``oracle``: a weight-free geometric updater.  Per view it takes the integer
  argmax of the level-0 correlation window around the rounded reprojection,
  sharpens it with a log-quadratic subpixel fit, re-triangulates the corrected
  correspondences, and keeps the new depth per pixel only when it strictly
  raises the mean center correlation.  Strict improvement makes the iteration
  reach an exact fixed point, after which depth maps repeat bit-for-bit.
"""

from dataclasses import dataclass, fields

import numpy as np

from . import kernels
from .correlation import (FUSION_STRATEGIES, CorrelationFeatureMap,
                          CorrelationPyramid, FeatureMap, LookupConfig,
                          fuse_views, lookup_grid)
from .errors import (ConfigError, EmptyResultError, FormatError, ShapeError)
from .geometry import MIN_SOURCE_Z, CameraRig, reproject_grid
from .grids import DEPTH_FLOOR, DepthMap
from .seeding import derive_seed, uniform
from .triangulation import triangulate_grid

_WEIGHT_FIELDS = (
    ("update_w", "gru.update.weight"), ("update_b", "gru.update.bias"),
    ("reset_w", "gru.reset.weight"), ("reset_b", "gru.reset.bias"),
    ("cand_w", "gru.candidate.weight"), ("cand_b", "gru.candidate.bias"),
    ("pre_corr_w", "pre.corr.weight"), ("pre_corr_b", "pre.corr.bias"),
    ("pre_depth_w", "pre.depth.weight"), ("pre_depth_b", "pre.depth.bias"),
    ("head_hidden_w", "head.hidden.weight"), ("head_hidden_b", "head.hidden.bias"),
    ("head_out_w", "head.out.weight"), ("head_out_b", "head.out.bias"),
    ("init_ctx_w", "init.context.weight"), ("init_ctx_b", "init.context.bias"),
)
_HEADER_KEY = "header.sizes"


@dataclass
class GruWeights:
    """All convolution weights of the GRU updaterable from a weight file.

    Convolution kernels are (3, 3, C_in, C_out); biases are (C_out,).  The
    gate convolutions see [hidden, input] concatenated, the candidate
    convolution sees [reset * hidden, input].  Channel sizes are free; they
    are recovered from the shapes and cross-checked on load against the
    header entry.
    """

    update_w: np.ndarray
    update_b: np.ndarray
    reset_w: np.ndarray
    reset_b: np.ndarray
    cand_w: np.ndarray
    cand_b: np.ndarray
    pre_corr_w: np.ndarray
    pre_corr_b: np.ndarray
    pre_depth_w: np.ndarray
    pre_depth_b: np.ndarray
    head_hidden_w: np.ndarray
    head_hidden_b: np.ndarray
    head_out_w: np.ndarray
    head_out_b: np.ndarray
    init_ctx_w: np.ndarray
    init_ctx_b: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            arr = np.ascontiguousarray(getattr(self, f.name), dtype=np.float32)
            expected = 4 if f.name.endswith("_w") else 1
            if arr.ndim != expected:
                raise ShapeError(f"{f.name} must be rank {expected}, "
                                 f"got {arr.shape}")
            if arr.ndim == 4 and arr.shape[:2] != (3, 3):
                raise ShapeError(f"{f.name} must be a 3x3 kernel, got {arr.shape}")
            if not np.isfinite(arr).all():
                raise ShapeError(f"{f.name} contains non-finite values")
            setattr(self, f.name, arr)
        ch, cx = self.c_hidden, self.c_input
        pairs = [
            ("update", self.update_w, self.update_b, ch + cx, ch),
            ("reset", self.reset_w, self.reset_b, ch + cx, ch),
            ("candidate", self.cand_w, self.cand_b, ch + cx, ch),
            ("pre.corr", self.pre_corr_w, self.pre_corr_b,
             self.lookup_len, self.c_corr),
            ("pre.depth", self.pre_depth_w, self.pre_depth_b, 1, self.c_depth),
            ("head.hidden", self.head_hidden_w, self.head_hidden_b,
             ch, self.c_head),
            ("head.out", self.head_out_w, self.head_out_b, self.c_head, 1),
            ("init.context", self.init_ctx_w, self.init_ctx_b,
             self.c_context, ch),
        ]
        for name, w, b, cin, cout in pairs:
            if w.shape[2:] != (cin, cout) or b.shape != (cout,):
                raise ShapeError(
                    f"{name} expects kernel (3, 3, {cin}, {cout}) and bias "
                    f"({cout},), got {w.shape} and {b.shape}")
        if self.c_context < 0:
            raise ShapeError(
                f"input channels {cx} smaller than pre-conv outputs "
                f"{self.c_corr}+{self.c_depth}")

    @property
    def c_hidden(self) -> int:
        return self.update_w.shape[3]

    @property
    def c_input(self) -> int:
        return self.update_w.shape[2] - self.c_hidden

    @property
    def c_corr(self) -> int:
        return self.pre_corr_w.shape[3]

    @property
    def c_depth(self) -> int:
        return self.pre_depth_w.shape[3]

    @property
    def c_context(self) -> int:
        return self.c_input - self.c_corr - self.c_depth

    @property
    def c_head(self) -> int:
        return self.head_hidden_w.shape[3]

    @property
    def lookup_len(self) -> int:
        return self.pre_corr_w.shape[2]

    @classmethod
    def zeros(cls, lookup_len: int, c_hidden: int = 64, c_corr: int = 64,
              c_depth: int = 16, c_context: int = 16,
              c_head: int = 32) -> "GruWeights":
        cx = c_corr + c_depth + c_context
        mk = lambda *s: np.zeros(s, dtype=np.float32)
        return cls(
            update_w=mk(3, 3, c_hidden + cx, c_hidden), update_b=mk(c_hidden),
            reset_w=mk(3, 3, c_hidden + cx, c_hidden), reset_b=mk(c_hidden),
            cand_w=mk(3, 3, c_hidden + cx, c_hidden), cand_b=mk(c_hidden),
            pre_corr_w=mk(3, 3, lookup_len, c_corr), pre_corr_b=mk(c_corr),
            pre_depth_w=mk(3, 3, 1, c_depth), pre_depth_b=mk(c_depth),
            head_hidden_w=mk(3, 3, c_hidden, c_head), head_hidden_b=mk(c_head),
            head_out_w=mk(3, 3, c_head, 1), head_out_b=mk(1),
            init_ctx_w=mk(3, 3, c_context, c_hidden), init_ctx_b=mk(c_hidden),
        )

    @classmethod
    def seeded(cls, seed: int, lookup_len: int, c_hidden: int = 64,
               c_corr: int = 64, c_depth: int = 16, c_context: int = 16,
               c_head: int = 32) -> "GruWeights":
        """Uniform kernels in [-1/sqrt(9 C_in), +1/sqrt(9 C_in)], zero biases."""
        base = cls.zeros(lookup_len, c_hidden, c_corr, c_depth, c_context, c_head)
        for i, (field_name, _) in enumerate(_WEIGHT_FIELDS):
            if not field_name.endswith("_w"):
                continue
            shape = getattr(base, field_name).shape
            bound = 1.0 / np.sqrt(9.0 * shape[2])
            vals = uniform(derive_seed(seed, i), shape, -bound, bound)
            setattr(base, field_name, vals.astype(np.float32))
        return cls(**{f.name: getattr(base, f.name) for f in fields(cls)})

    def to_entries(self) -> dict[str, np.ndarray]:
        header = np.array([self.c_hidden, self.c_corr, self.c_depth,
                           self.c_context, self.c_head, self.lookup_len],
                          dtype=np.float32)
        out = {_HEADER_KEY: header}
        for field_name, key in _WEIGHT_FIELDS:
            out[key] = getattr(self, field_name)
        return out

    @classmethod
    def from_entries(cls, entries: dict[str, np.ndarray]) -> "GruWeights":
        missing = [k for _, k in _WEIGHT_FIELDS if k not in entries]
        if _HEADER_KEY not in entries:
            missing.append(_HEADER_KEY)
        if missing:
            raise FormatError(f"weight container missing entries: {missing}")
        w = cls(**{f: entries[k] for f, k in _WEIGHT_FIELDS})
        header = tuple(int(v) for v in np.asarray(entries[_HEADER_KEY]).ravel())
        actual = (w.c_hidden, w.c_corr, w.c_depth, w.c_context, w.c_head,
                  w.lookup_len)
        if header != actual:
            raise FormatError(f"weight header sizes {header} disagree with "
                              f"tensor shapes {actual}")
        return w


@dataclass
class GruState:
    """Hidden tensor of the recurrent updater."""

    hidden: np.ndarray

    def __post_init__(self):
        h = np.ascontiguousarray(self.hidden, dtype=np.float32)
        if h.ndim != 3:
            raise ShapeError(f"hidden state must be (H, W, C), got {h.shape}")
        if not np.isfinite(h).all():
            raise ShapeError("hidden state contains non-finite values")
        self.hidden = h


@dataclass
class UpdateInput:
    """Channel concatenation of pre-convolved correlation, depth, and context."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float32)
        if v.ndim != 3:
            raise ShapeError(f"update input must be (H, W, C), got {v.shape}")
        self.values = v


@dataclass(frozen=True)
class RefineConfig:
    iterations: int = 12
    radius: int = 3
    levels: int = 4
    fusion: str = "averaging"
    d_min: float = DEPTH_FLOOR

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.fusion not in FUSION_STRATEGIES:
            raise ConfigError(f"unknown fusion strategy {self.fusion!r}")
        if self.d_min <= 0:
            raise ConfigError(f"d_min must be positive, got {self.d_min}")
        LookupConfig(self.radius, self.levels)

    def lookup(self) -> LookupConfig:
        return LookupConfig(self.radius, self.levels)


def _sigmoid(v: np.ndarray) -> np.ndarray:
    return (1.0 / (1.0 + np.exp(-v.astype(np.float64)))).astype(np.float32)


def _tanh(v: np.ndarray) -> np.ndarray:
    return np.tanh(v.astype(np.float64)).astype(np.float32)


def gru_cell(state: GruState, x: UpdateInput, w: GruWeights) -> GruState:
    """One ConvGRU step: gates from [h, x], candidate from [reset*h, x]."""
    h = state.hidden
    if h.shape[2] != w.c_hidden or x.values.shape[2] != w.c_input:
        raise ShapeError(
            f"state/input channels ({h.shape[2]}, {x.values.shape[2]}) do not "
            f"match weights ({w.c_hidden}, {w.c_input})")
    if h.shape[:2] != x.values.shape[:2]:
        raise ShapeError(f"state grid {h.shape[:2]} != input {x.values.shape[:2]}")
    hx = np.concatenate([h, x.values], axis=-1)
    z = _sigmoid(kernels.conv3x3(hx, w.update_w, w.update_b))
    r = _sigmoid(kernels.conv3x3(hx, w.reset_w, w.reset_b))
    rhx = np.concatenate([r * h, x.values], axis=-1)
    cand = _tanh(kernels.conv3x3(rhx, w.cand_w, w.cand_b))
    return GruState((1.0 - z) * h + z * cand)


def fuse_correlation_step(d_prev: DepthMap, pyrs: list[CorrelationPyramid],
                          rig: CameraRig,
                          cfg: LookupConfig = LookupConfig(),
                          strategy: str = "averaging") -> CorrelationFeatureMap:
    """Reproject with the current depth, look up every view, fuse across views.

    A pixel is excluded from a view when its depth is missing or it lands
    behind that view's camera; out-of-frame lookups read zeros but stay valid.
    """
    if not pyrs or rig.num_sources == 0:
        raise ConfigError("fuse_correlation_step needs at least one source view")
    if len(pyrs) != rig.num_sources:
        raise ShapeError(f"{len(pyrs)} pyramids for {rig.num_sources} views")
    maps = []
    for pyr, rel in zip(pyrs, rig.rel_poses):
        coords, z = reproject_grid(d_prev.values, rig.k, rel)
        valid = (z > MIN_SOURCE_Z) & d_prev.valid
        coords = np.where(valid[..., None], coords, 0.0)
        maps.append(CorrelationFeatureMap(lookup_grid(pyr, coords, cfg), valid))
    return fuse_views(maps, strategy)


def depth_update_step(d_prev: DepthMap, v: CorrelationFeatureMap,
                      context: FeatureMap | None, state: GruState,
                      w: GruWeights,
                      d_min: float = DEPTH_FLOOR) -> tuple[DepthMap, GruState]:
    """GRU update: the head residual is added to valid pixels, floored at d_min.

    Invalid pixels stay invalid; seed them before refining if full coverage
    is wanted.
    """
    h, wd = d_prev.shape
    if v.values.shape != (h, wd, w.lookup_len):
        raise ShapeError(f"correlation features {v.values.shape} do not match "
                         f"depth {d_prev.shape} and weights L={w.lookup_len}")
    x_corr = kernels.conv3x3(v.values, w.pre_corr_w, w.pre_corr_b)
    d32 = d_prev.values.astype(np.float32)[..., None]
    x_depth = kernels.conv3x3(d32, w.pre_depth_w, w.pre_depth_b)
    if context is None:
        x_ctx = np.zeros((h, wd, w.c_context), dtype=np.float32)
    else:
        if context.values.shape != (h, wd, w.c_context):
            raise ShapeError(f"context {context.values.shape} != "
                             f"({h}, {wd}, {w.c_context})")
        x_ctx = context.values
    x = UpdateInput(np.concatenate([x_corr, x_depth, x_ctx], axis=-1))
    new_state = gru_cell(state, x, w)
    mid = np.maximum(kernels.conv3x3(new_state.hidden, w.head_hidden_w,
                                     w.head_hidden_b), np.float32(0.0))
    delta = kernels.conv3x3(mid, w.head_out_w, w.head_out_b)[..., 0]
    updated = np.maximum(d_prev.values + delta.astype(np.float64), d_min)
    return DepthMap(np.where(d_prev.valid, updated, 0.0)), new_state


def seed_invalid(d0: DepthMap) -> DepthMap:
    """Fill invalid pixels with the median of the valid depths."""
    if bool(d0.valid.all()):
        return d0
    vals = d0.values[d0.valid]
    if vals.size == 0:
        raise EmptyResultError("initial depth map has no valid pixels to seed from")
    med = float(np.median(vals))
    return DepthMap(np.where(d0.valid, d0.values, med))


def initial_state(shape: tuple[int, int], w: GruWeights,
                  context: FeatureMap | None) -> GruState:
    """tanh of the context projection, or zeros without a context feature."""
    if context is None:
        return GruState(np.zeros((*shape, w.c_hidden), dtype=np.float32))
    if context.values.shape != (*shape, w.c_context):
        raise ShapeError(f"context {context.values.shape} != "
                         f"({shape[0]}, {shape[1]}, {w.c_context})")
    return GruState(_tanh(kernels.conv3x3(context.values, w.init_ctx_w,
                                          w.init_ctx_b)))


class GruUpdater:
    """Per-iteration fuse + ConvGRU + residual head."""

    def __init__(self, pyrs: list[CorrelationPyramid], rig: CameraRig,
                 weights: GruWeights, context: FeatureMap | None = None,
                 cfg: RefineConfig = RefineConfig()):
        if weights is None:
            raise ConfigError("the gru updater needs weights")
        if weights.lookup_len != cfg.lookup().vector_length:
            raise ShapeError(
                f"weights expect lookup vectors of {weights.lookup_len}, config "
                f"produces {cfg.lookup().vector_length}")
        self.pyrs = pyrs
        self.rig = rig
        self.weights = weights
        self.context = context
        self.cfg = cfg
        self.state = None

    def begin(self, d0: DepthMap) -> None:
        self.state = initial_state(d0.shape, self.weights, self.context)

    def step(self, d_prev: DepthMap) -> DepthMap:
        v = fuse_correlation_step(d_prev, self.pyrs, self.rig,
                                  self.cfg.lookup(), self.cfg.fusion)
        d, self.state = depth_update_step(d_prev, v, self.context, self.state,
                                          self.weights, self.cfg.d_min)
        return d


class OracleUpdater:
    """Weight-free updater: window-argmax correction plus re-triangulation.

    A correction is kept per pixel only when it lifts the mean reprojection
    correlation by at least SCORE_MARGIN, and each pixel is corrected at
    most once per run.  Together the two rules make the iteration settle at
    a fixed point instead of jittering around the correlation peak, so the
    error trace is non-increasing.
    """

    SCORE_MARGIN = 1e-3

    def __init__(self, pyrs: list[CorrelationPyramid], rig: CameraRig,
                 cfg: RefineConfig = RefineConfig()):
        if not pyrs or len(pyrs) != rig.num_sources:
            raise ConfigError(f"{len(pyrs)} pyramids for {rig.num_sources} views")
        self.vols = [p.volumes[0].values for p in pyrs]
        self.rig = rig
        self.radius = cfg.radius
        self._done: np.ndarray | None = None

    def begin(self, d0: DepthMap) -> None:
        self._done = np.zeros(d0.shape, dtype=bool)

    def step(self, d_prev: DepthMap) -> DepthMap:
        corrected = []
        usable = []
        for vol, rel in zip(self.vols, self.rig.rel_poses):
            coords, z = reproject_grid(d_prev.values, self.rig.k, rel)
            valid = (z > MIN_SOURCE_Z) & d_prev.valid
            best, ok = _window_argmax(vol, coords, valid, self.radius)
            corrected.append(_subpixel_peak(vol, best, ok))
            usable.append(ok)
        usable = np.stack(usable)
        proposal = triangulate_grid(np.stack(corrected), usable, self.rig)
        old_score = self._mean_center_score(d_prev.values, d_prev.valid)
        new_score = self._mean_center_score(proposal, proposal > 0)
        accept = (proposal > 0) & (new_score > old_score + self.SCORE_MARGIN)
        if self._done is None:
            self._done = np.zeros(d_prev.shape, dtype=bool)
        accept &= ~self._done
        self._done |= accept
        return DepthMap(np.where(accept, proposal, d_prev.values))

    def _mean_center_score(self, depth: np.ndarray,
                           dvalid: np.ndarray) -> np.ndarray:
        """Mean over views of the bilinear correlation at the reprojection."""
        total = np.zeros(depth.shape)
        count = np.zeros(depth.shape, dtype=np.int64)
        for vol, rel in zip(self.vols, self.rig.rel_poses):
            coords, z = reproject_grid(depth, self.rig.k, rel)
            valid = (z > MIN_SOURCE_Z) & dvalid
            coords = np.where(valid[..., None], coords, 0.0)
            sample = kernels.lookup_windows(vol, coords, 0)[..., 0]
            total += np.where(valid, sample.astype(np.float64), 0.0)
            count += valid
        out = np.full(depth.shape, -np.inf)
        np.divide(total, count, out=out, where=count > 0)
        return out


def _window_argmax(vol: np.ndarray, coords: np.ndarray, valid: np.ndarray,
                   radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer argmax over the window centered at the rounded reprojection.

    Returns best (H, W, 2) int64 as (qx, qy) plus an ok mask; a pixel is ok
    when it was valid and its rounded center lies inside the volume grid.
    Ties resolve to the smallest row-major window index.
    """
    h, w, vh, vw = vol.shape
    n = h * w
    flat = vol.reshape(n, vh, vw)
    rows = np.arange(n)
    rx = np.rint(coords[..., 0]).reshape(n)
    ry = np.rint(coords[..., 1]).reshape(n)
    ok = (valid.reshape(n) & (rx >= 0) & (rx < vw) & (ry >= 0) & (ry < vh))
    rx = np.clip(rx, 0, vw - 1).astype(np.int64)
    ry = np.clip(ry, 0, vh - 1).astype(np.int64)
    offs = np.arange(-radius, radius + 1, dtype=np.int64)
    qy = ry[:, None, None] + offs[None, :, None]
    qx = rx[:, None, None] + offs[None, None, :]
    qy, qx = np.broadcast_arrays(qy, qx)
    inside = (qy >= 0) & (qy < vh) & (qx >= 0) & (qx < vw)
    vals = flat[rows[:, None, None], np.clip(qy, 0, vh - 1),
                np.clip(qx, 0, vw - 1)].astype(np.float64)
    vals = np.where(inside, vals, -np.inf)
    side = 2 * radius + 1
    pick = vals.reshape(n, side * side).argmax(axis=1)
    by = qy.reshape(n, -1)[rows, pick]
    bx = qx.reshape(n, -1)[rows, pick]
    best = np.stack([bx, by], axis=-1).reshape(h, w, 2)
    return best, ok.reshape(h, w)


def _subpixel_peak(vol: np.ndarray, best: np.ndarray,
                   ok: np.ndarray) -> np.ndarray:
    """Log-parabola refinement of an integer peak, one axis at a time.

    The fit only applies where the peak and both neighbors are strictly
    positive and log-concave; the offset is clamped to [-0.5, 0.5].
    """
    h, w, vh, vw = vol.shape
    n = h * w
    flat = vol.reshape(n, vh, vw).astype(np.float64)
    rows = np.arange(n)
    bx = best[..., 0].reshape(n)
    by = best[..., 1].reshape(n)
    out = np.stack([bx, by], axis=-1).astype(np.float64)
    c0 = flat[rows, by, bx]
    for axis, limit in ((0, vw), (1, vh)):
        lo = (by, bx - 1) if axis == 0 else (by - 1, bx)
        hi = (by, bx + 1) if axis == 0 else (by + 1, bx)
        coord = bx if axis == 0 else by
        in_range = (coord - 1 >= 0) & (coord + 1 < limit)
        cm = flat[rows, np.clip(lo[0], 0, vh - 1), np.clip(lo[1], 0, vw - 1)]
        cp = flat[rows, np.clip(hi[0], 0, vh - 1), np.clip(hi[1], 0, vw - 1)]
        usable = in_range & ok.reshape(n) & (cm > 0) & (c0 > 0) & (cp > 0)
        lm = np.log(np.where(usable, cm, 1.0))
        l0 = np.log(np.where(usable, c0, 1.0))
        lp = np.log(np.where(usable, cp, 1.0))
        denom = lm - 2.0 * l0 + lp
        usable &= denom < 0
        off = np.zeros(n)
        np.divide(lm - lp, 2.0 * denom, out=off, where=usable)
        out[:, axis] += np.clip(off, -0.5, 0.5)
    return out.reshape(h, w, 2)


def make_updater(kind, pyrs, rig, weights=None, context=None,
                 cfg: RefineConfig = RefineConfig()):
    if not isinstance(kind, str):
        return kind
    if kind == "gru":
        return GruUpdater(pyrs, rig, weights, context, cfg)
    if kind == "oracle":
        return OracleUpdater(pyrs, rig, cfg)
    raise ConfigError(f"unknown updater {kind!r}, expected 'gru' or 'oracle'")


def refine_loop(d0: DepthMap, pyrs: list[CorrelationPyramid], rig: CameraRig,
                context: FeatureMap | None = None,
                weights: GruWeights | None = None,
                cfg: RefineConfig = RefineConfig(),
                updater: str = "gru") -> list[DepthMap]:
    """Run the updater for cfg.iterations steps and return every iterate.

    Invalid pixels of d0 are median-seeded first.  An empty list comes back
    for zero iterations; callers then keep using d0.
    """
    d = seed_invalid(d0)
    upd = make_updater(updater, pyrs, rig, weights, context, cfg)
    upd.begin(d)
    out = []
    for _ in range(cfg.iterations):
        d = upd.step(d)
        out.append(d)
    return out
