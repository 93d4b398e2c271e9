"""Command-line front end: one subcommand per pipeline stage plus ``pipeline``.

Stages communicate through files in a workspace directory with fixed names
(cameras.txt, ref.cort / src{k}.cort features, corr{k}.cort level-0 volumes,
flow{k}.corw flow containers, PFM depth maps).  ``pipeline`` invokes the same
stage helpers back to back through the same files, so its outputs are
byte-identical to running the subcommands by hand.

Exit codes: 0 success, 2 usage, 3 unreadable or malformed file, 4 shape or
configuration error, 5 degenerate geometry or empty result.
"""

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

from . import fileio
from .correlation import (CorrelationVolume, FeatureMap,
                          FUSION_STRATEGIES, build_correlation_volume,
                          build_pyramid)
from .errors import (ConfigError, CorrDepthError, DegenerateGeometryError,
                     EmptyMaskError, EmptyResultError, FormatError,
                     GeometryError, ShapeError)
from .grids import DepthMap
from .metrics import compute_metrics, format_report
from .refine import GruWeights, RefineConfig, refine_loop, seed_invalid
from .synthscene import (SURFACE_KINDS, SurfaceParams, full_res_depth,
                         make_scene, positional_features)
from .triangulation import flow_from_correlation, init_depth_from_flows
from .upsample import DffmWeights, upsample_depth, zero_context

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_CONFIG = 4
EXIT_GEOMETRY = 5

CAMERAS = "cameras.txt"
FEAT_REF = "ref.cort"
FEAT_SRC = "src{k}.cort"
CORR = "corr{k}.cort"
FLOW = "flow{k}.corw"
GT_LO = "gt_lo.pfm"
GT_FULL = "gt_full.pfm"
INIT_DEPTH = "init.pfm"
REFINED = "refined.pfm"
FULL_DEPTH = "depth_full.pfm"


@dataclass(frozen=True)
class PipelineConfig:
    """Validated bundle of every knob the end-to-end run needs."""

    out_dir: Path
    surface: str = "plane"
    views: int = 4
    seed: int = 0
    height: int = 48
    width: int = 64
    dim: int = 96
    radius: int = 3
    iters: int = 12
    fusion: str = "averaging"
    levels: int = 4
    updater: str = "gru"
    weights: Path | None = None
    report: str = "text"

    def __post_init__(self):
        if self.surface not in SURFACE_KINDS:
            raise ConfigError(f"unknown surface {self.surface!r}")
        if self.views < 1:
            raise ConfigError(f"views must be >= 1, got {self.views}")
        if self.updater not in ("gru", "oracle"):
            raise ConfigError(f"unknown updater {self.updater!r}")
        if self.report not in ("text", "structured"):
            raise ConfigError(f"unknown report mode {self.report!r}")
        # raises early if the numeric knobs are inconsistent
        RefineConfig(self.iters, self.radius, self.levels, self.fusion)


def _count_views(directory: Path, pattern: str) -> int:
    n = 0
    while (directory / pattern.format(k=n)).exists():
        n += 1
    if n == 0:
        raise FormatError(f"no {pattern.format(k=0)} found in {directory}")
    return n


def do_synth(out_dir: Path, surface: str, views: int, seed: int,
             height: int, width: int, dim: int) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    params = SurfaceParams(height=height, width=width)
    scene = make_scene(surface, params, views, seed)
    fileio.write_camera_file(out_dir / CAMERAS, scene.rig)
    for v in range(views + 1):
        feats = positional_features(scene, v, dim, seed)
        name = FEAT_REF if v == 0 else FEAT_SRC.format(k=v - 1)
        fileio.write_tensor(out_dir / name, feats.values)
    fileio.save_depth(out_dir / GT_LO, scene.gt_ref)
    fileio.save_depth(out_dir / GT_FULL, full_res_depth(scene))


def do_corr(features_dir: Path, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    ref = FeatureMap(fileio.read_tensor(features_dir / FEAT_REF))
    n = _count_views(features_dir, FEAT_SRC)
    for k in range(n):
        src = FeatureMap(fileio.read_tensor(features_dir / FEAT_SRC.format(k=k)))
        vol = build_correlation_volume(ref, src)
        fileio.write_tensor(out_dir / CORR.format(k=k), vol.values)


def do_flow(corr_dir: Path, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    n = _count_views(corr_dir, CORR)
    for k in range(n):
        vol = CorrelationVolume(fileio.read_tensor(corr_dir / CORR.format(k=k)))
        fileio.save_flow(out_dir / FLOW.format(k=k), flow_from_correlation(vol))


def do_init(cameras: Path, flows_dir: Path, out: Path) -> None:
    rig = fileio.read_camera_file(cameras)
    flows = [fileio.load_flow(flows_dir / FLOW.format(k=k))
             for k in range(rig.num_sources)]
    depth = init_depth_from_flows(flows, rig)
    if depth.num_valid() == 0:
        raise DegenerateGeometryError(
            "triangulation failed everywhere: the camera file has degenerate "
            "baselines (rotation-only rig) or no usable flows")
    out.parent.mkdir(parents=True, exist_ok=True)
    fileio.save_depth(out, depth)


def do_refine(cameras: Path, corr_dir: Path, init_path: Path, out: Path,
              updater: str, weights_path: Path | None, seed: int,
              cfg: RefineConfig) -> None:
    rig = fileio.read_camera_file(cameras)
    pyrs = []
    for k in range(rig.num_sources):
        vol = CorrelationVolume(fileio.read_tensor(corr_dir / CORR.format(k=k)))
        pyrs.append(build_pyramid(vol, cfg.levels))
    d0 = fileio.load_depth(init_path)
    weights = None
    if updater == "gru":
        if weights_path is not None:
            weights = GruWeights.from_entries(fileio.read_weights(weights_path))
        else:
            weights = GruWeights.seeded(seed, cfg.lookup().vector_length)
    iterates = refine_loop(d0, pyrs, rig, None, weights, cfg, updater)
    final = iterates[-1] if iterates else seed_invalid(d0)
    out.parent.mkdir(parents=True, exist_ok=True)
    fileio.save_depth(out, final)


def do_upsample(init_path: Path, out: Path, weights_path: Path | None) -> None:
    d_lo = fileio.load_depth(init_path)
    if weights_path is not None:
        weights = DffmWeights.from_entries(fileio.read_weights(weights_path))
    else:
        weights = DffmWeights.zeros()
    ctx = zero_context(d_lo.shape)
    out.parent.mkdir(parents=True, exist_ok=True)
    fileio.save_depth(out, upsample_depth(d_lo, ctx, weights))


def do_eval(pred: Path, gt: Path, report: str) -> str:
    record = compute_metrics(fileio.load_depth(pred), fileio.load_depth(gt))
    return format_report(record, structured=(report == "structured"))


def do_pipeline(cfg: PipelineConfig) -> str:
    ws = cfg.out_dir
    do_synth(ws, cfg.surface, cfg.views, cfg.seed, cfg.height, cfg.width,
             cfg.dim)
    do_corr(ws, ws)
    do_flow(ws, ws)
    do_init(ws / CAMERAS, ws, ws / INIT_DEPTH)
    refine_cfg = RefineConfig(cfg.iters, cfg.radius, cfg.levels, cfg.fusion)
    do_refine(ws / CAMERAS, ws, ws / INIT_DEPTH, ws / REFINED,
              cfg.updater, cfg.weights, cfg.seed, refine_cfg)
    do_upsample(ws / REFINED, ws / FULL_DEPTH, None)
    return do_eval(ws / FULL_DEPTH, ws / GT_FULL, cfg.report)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corrdepth",
        description="correlation-guided multi-view depth estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    def scene_flags(p):
        p.add_argument("--surface", default="plane", choices=SURFACE_KINDS)
        p.add_argument("--views", type=int, default=4)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--height", type=int, default=48)
        p.add_argument("--width", type=int, default=64)
        p.add_argument("--dim", type=int, default=96,
                       help="feature dimensionality")

    def refine_flags(p):
        p.add_argument("--radius", type=int, default=3)
        p.add_argument("--iters", type=int, default=12)
        p.add_argument("--fusion", default="averaging",
                       choices=FUSION_STRATEGIES)
        p.add_argument("--levels", type=int, default=4)
        p.add_argument("--updater", default="gru", choices=("gru", "oracle"))
        p.add_argument("--weights", type=Path, default=None)

    p = sub.add_parser("synth", help="generate a synthetic scene workspace")
    scene_flags(p)
    p.add_argument("--out", type=Path, required=True,
                   help="workspace directory")

    p = sub.add_parser("corr", help="build level-0 correlation volumes")
    p.add_argument("--features", type=Path, required=True,
                   help="directory with ref.cort and src{k}.cort")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("flow", help="argmax flows from correlation volumes")
    p.add_argument("--features", type=Path, required=True,
                   help="directory with corr{k}.cort")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("init", help="triangulate initial depth from flows")
    p.add_argument("--cameras", type=Path, required=True)
    p.add_argument("--flows", type=Path, required=True,
                   help="directory with flow{k}.corw")
    p.add_argument("--out", type=Path, required=True, help="output PFM")

    p = sub.add_parser("refine", help="iterative depth refinement")
    p.add_argument("--cameras", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True,
                   help="directory with corr{k}.cort")
    p.add_argument("--init", type=Path, required=True, help="initial depth PFM")
    p.add_argument("--out", type=Path, required=True, help="output PFM")
    p.add_argument("--seed", type=int, default=0,
                   help="gru weight seed when --weights is absent")
    refine_flags(p)

    p = sub.add_parser("upsample", help="coarse-to-fine 8x upsampling")
    p.add_argument("--init", type=Path, required=True,
                   help="low-resolution depth PFM")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--weights", type=Path, default=None)

    p = sub.add_parser("eval", help="five-metric evaluation of two depth PFMs")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--report", default="text", choices=("text", "structured"))

    p = sub.add_parser("pipeline", help="synth through eval in one workspace")
    scene_flags(p)
    refine_flags(p)
    p.add_argument("--out", type=Path, required=True,
                   help="workspace directory")
    p.add_argument("--report", default="text", choices=("text", "structured"))
    return parser


def run(args: argparse.Namespace) -> int:
    if args.command == "synth":
        do_synth(args.out, args.surface, args.views, args.seed, args.height,
                 args.width, args.dim)
    elif args.command == "corr":
        do_corr(args.features, args.out)
    elif args.command == "flow":
        do_flow(args.features, args.out)
    elif args.command == "init":
        do_init(args.cameras, args.flows, args.out)
    elif args.command == "refine":
        cfg = RefineConfig(args.iters, args.radius, args.levels, args.fusion)
        do_refine(args.cameras, args.features, args.init, args.out,
                  args.updater, args.weights, args.seed, cfg)
    elif args.command == "upsample":
        do_upsample(args.init, args.out, args.weights)
    elif args.command == "eval":
        print(do_eval(args.pred, args.gt, args.report))
    elif args.command == "pipeline":
        cfg = PipelineConfig(
            out_dir=args.out, surface=args.surface, views=args.views,
            seed=args.seed, height=args.height, width=args.width,
            dim=args.dim, radius=args.radius, iters=args.iters,
            fusion=args.fusion, levels=args.levels, updater=args.updater,
            weights=args.weights, report=args.report)
        print(do_pipeline(cfg))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (FormatError, FileNotFoundError, IsADirectoryError) as e:
        print(f"corrdepth: file error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except (ShapeError, ConfigError) as e:
        print(f"corrdepth: invalid input: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (GeometryError, EmptyResultError, EmptyMaskError) as e:
        print(f"corrdepth: geometry error: {e}", file=sys.stderr)
        return EXIT_GEOMETRY
    except CorrDepthError as e:
        print(f"corrdepth: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
