"""Coarse-to-fine depth upsampling: three 2x stages with feature fusion.

Each stage bilinearly doubles the incoming depth and feature map, concatenates
them (plus a same-resolution context feature when one exists at that scale),
runs two fusion convolutions to produce the next feature map, and adds a
two-layer head's residual to the upsampled depth.  With all-zero weights every
stage is exactly bilinear upsampling, which pins the module's geometry and
gives tests an analytic identity.  The final stage has no context input: the
context pyramid stops at half resolution.
"""

from dataclasses import dataclass, fields

import numpy as np

from . import kernels
from .correlation import FeatureMap
from .errors import ConfigError, FormatError, ShapeError
from .grids import DEPTH_FLOOR, DepthMap

_STAGE_FIELDS = ("fuse1_w", "fuse1_b", "fuse2_w", "fuse2_b",
                 "head1_w", "head1_b", "head2_w", "head2_b")
_HEADER_KEY = "header.sizes"
# applied coarsest first: 1/8 -> 1/4 -> 1/2 -> full
_STAGE_NAMES = ("stage2", "stage1", "stage0")


@dataclass
class DffmStage:
    """One 2x stage: two fusion convolutions and a two-layer depth head."""

    fuse1_w: np.ndarray
    fuse1_b: np.ndarray
    fuse2_w: np.ndarray
    fuse2_b: np.ndarray
    head1_w: np.ndarray
    head1_b: np.ndarray
    head2_w: np.ndarray
    head2_b: np.ndarray

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
        pairs = [
            ("fuse1", self.fuse1_w, self.fuse1_b, self.c_in, self.c_out),
            ("fuse2", self.fuse2_w, self.fuse2_b, self.c_out, self.c_out),
            ("head1", self.head1_w, self.head1_b, self.c_out, self.c_head),
            ("head2", self.head2_w, self.head2_b, self.c_head, 1),
        ]
        for name, w, b, cin, cout in pairs:
            if w.shape[2:] != (cin, cout) or b.shape != (cout,):
                raise ShapeError(
                    f"{name} expects kernel (3, 3, {cin}, {cout}) and bias "
                    f"({cout},), got {w.shape} and {b.shape}")

    @property
    def c_in(self) -> int:
        return self.fuse1_w.shape[2]

    @property
    def c_out(self) -> int:
        return self.fuse1_w.shape[3]

    @property
    def c_head(self) -> int:
        return self.head1_w.shape[3]

    @classmethod
    def zeros(cls, c_in: int, c_out: int, c_head: int = 32) -> "DffmStage":
        mk = lambda *s: np.zeros(s, dtype=np.float32)
        return cls(fuse1_w=mk(3, 3, c_in, c_out), fuse1_b=mk(c_out),
                   fuse2_w=mk(3, 3, c_out, c_out), fuse2_b=mk(c_out),
                   head1_w=mk(3, 3, c_out, c_head), head1_b=mk(c_head),
                   head2_w=mk(3, 3, c_head, 1), head2_b=mk(1))


@dataclass
class DffmWeights:
    """The three stage weight sets, coarsest first."""

    stages: tuple[DffmStage, DffmStage, DffmStage]

    def __post_init__(self):
        stages = tuple(self.stages)
        if len(stages) != 3:
            raise ConfigError(f"need 3 stages, got {len(stages)}")
        self.stages = stages

    @classmethod
    def zeros(cls, c_feat: int = 64, c_ctx_quarter: int = 48,
              c_ctx_half: int = 32, c_final: int = 16,
              c_head: int = 32) -> "DffmWeights":
        """Zero weights sized for a context pyramid of the given channels.

        c_feat is the channel count of the coarsest input feature (fed
        alongside the depth), c_ctx_* are the context channels at 1/4 and
        1/2 resolution, c_final the channels of the last fused map.
        """
        s2 = DffmStage.zeros(c_feat + 1 + c_ctx_quarter, c_ctx_quarter, c_head)
        s1 = DffmStage.zeros(c_ctx_quarter + 1 + c_ctx_half, c_ctx_half, c_head)
        s0 = DffmStage.zeros(c_ctx_half + 1, c_final, c_head)
        return cls((s2, s1, s0))

    def to_entries(self) -> dict[str, np.ndarray]:
        sizes = []
        out = {}
        for name, stage in zip(_STAGE_NAMES, self.stages):
            sizes += [stage.c_in, stage.c_out, stage.c_head]
            for f in _STAGE_FIELDS:
                key = f"{name}.{f[:-2]}.{'weight' if f.endswith('_w') else 'bias'}"
                out[key] = getattr(stage, f)
        return {_HEADER_KEY: np.array(sizes, dtype=np.float32), **out}

    @classmethod
    def from_entries(cls, entries: dict[str, np.ndarray]) -> "DffmWeights":
        if _HEADER_KEY not in entries:
            raise FormatError(f"weight container missing {_HEADER_KEY!r}")
        stages = []
        sizes = []
        for name in _STAGE_NAMES:
            kwargs = {}
            for f in _STAGE_FIELDS:
                key = f"{name}.{f[:-2]}.{'weight' if f.endswith('_w') else 'bias'}"
                if key not in entries:
                    raise FormatError(f"weight container missing entry {key!r}")
                kwargs[f] = entries[key]
            stage = DffmStage(**kwargs)
            sizes += [stage.c_in, stage.c_out, stage.c_head]
            stages.append(stage)
        header = tuple(int(v) for v in np.asarray(entries[_HEADER_KEY]).ravel())
        if header != tuple(sizes):
            raise FormatError(f"weight header sizes {header} disagree with "
                              f"tensor shapes {tuple(sizes)}")
        return cls(tuple(stages))


@dataclass
class ContextPyramid:
    """Reference-image features at 1/2, 1/4, and 1/8 resolution."""

    half: FeatureMap
    quarter: FeatureMap
    eighth: FeatureMap

    def __post_init__(self):
        h2, w2 = self.half.shape[:2]
        h4, w4 = self.quarter.shape[:2]
        h8, w8 = self.eighth.shape[:2]
        if (h4, w4) != (h2 // 2, w2 // 2) or h2 % 2 or w2 % 2:
            raise ShapeError(f"quarter {h4}x{w4} is not half of {h2}x{w2}")
        if (h8, w8) != (h4 // 2, w4 // 2) or h4 % 2 or w4 % 2:
            raise ShapeError(f"eighth {h8}x{w8} is not half of {h4}x{w4}")


def zero_context(shape_lo: tuple[int, int],
                 channels: tuple[int, int, int] = (32, 48, 64)) -> ContextPyramid:
    """All-zero context pyramid for a 1/8-resolution grid of the given shape."""
    h, w = shape_lo
    c1, c2, c3 = channels
    return ContextPyramid(
        FeatureMap(np.zeros((4 * h, 4 * w, c1), dtype=np.float32)),
        FeatureMap(np.zeros((2 * h, 2 * w, c2), dtype=np.float32)),
        FeatureMap(np.zeros((h, w, c3), dtype=np.float32)))


def dffm(depth_lo: DepthMap, feat_lo: FeatureMap,
         context_hi: FeatureMap | None, w: DffmStage,
         d_min: float = DEPTH_FLOOR) -> tuple[FeatureMap, DepthMap]:
    """One 2x stage; context_hi is None only for the final (full-res) stage."""
    h, wd = depth_lo.shape
    if feat_lo.shape[:2] != (h, wd):
        raise ShapeError(f"feature grid {feat_lo.shape[:2]} != depth ({h}, {wd})")
    c_ctx = 0
    if context_hi is not None:
        if context_hi.shape[:2] != (2 * h, 2 * wd):
            raise ShapeError(
                f"context grid {context_hi.shape[:2]} is not 2x depth "
                f"({h}, {wd})")
        c_ctx = context_hi.shape[2]
    c_in = feat_lo.shape[2] + 1 + c_ctx
    if c_in != w.c_in:
        raise ShapeError(f"stage expects {w.c_in} input channels, inputs "
                         f"provide {c_in}")
    up_d = kernels.upsample2x(depth_lo.values)
    up_f = kernels.upsample2x(feat_lo.values)
    parts = [up_f, up_d.astype(np.float32)[..., None]]
    if context_hi is not None:
        parts.append(context_hi.values)
    cat = np.concatenate(parts, axis=-1)
    mid = np.maximum(kernels.conv3x3(cat, w.fuse1_w, w.fuse1_b), np.float32(0.0))
    fused = kernels.conv3x3(mid, w.fuse2_w, w.fuse2_b)
    hh = np.maximum(kernels.conv3x3(fused, w.head1_w, w.head1_b), np.float32(0.0))
    res = kernels.conv3x3(hh, w.head2_w, w.head2_b)[..., 0]
    depth_hi = np.maximum(up_d + res.astype(np.float64), d_min)
    return FeatureMap(fused), DepthMap(depth_hi)


def upsample_depth(d_lo: DepthMap, ctx: ContextPyramid, w: DffmWeights,
                   d_min: float = DEPTH_FLOOR) -> DepthMap:
    """Chain the three stages: 1/8 -> 1/4 -> 1/2 -> full resolution."""
    if ctx.eighth.shape[:2] != d_lo.shape:
        raise ShapeError(f"coarsest context {ctx.eighth.shape[:2]} does not "
                         f"match depth {d_lo.shape}")
    feat, depth = ctx.eighth, d_lo
    for stage, context_hi in zip(w.stages, (ctx.quarter, ctx.half, None)):
        feat, depth = dffm(depth, feat, context_hi, stage, d_min)
    return depth
