"""Correlation-guided multi-view depth estimation.

Builds all-pairs correlation volumes between a reference view and its source
views, initializes depth by closed-form multi-view triangulation of
correlation-argmax flows, refines it iteratively with reprojection-guided
correlation lookups, and upsamples coarse depth to full resolution.  A
synthetic-scene generator with exact ground truth backs every geometric
claim, and the ``corrdepth`` CLI exposes each stage plus an end-to-end
pipeline.
"""

from .correlation import (CorrelationFeatureMap, CorrelationPyramid,
                          CorrelationVolume, FeatureMap, LookupConfig,
                          build_correlation_volume, build_pyramid, fuse_views,
                          lookup, lookup_grid)
from .errors import (BehindCameraError, ConfigError, CorrDepthError,
                     DegenerateGeometryError, EmptyMaskError,
                     EmptyResultError, FormatError, GeometryError,
                     InvalidDepthError, InvalidPoseError, NegativeDepthError,
                     ShapeError)
from .geometry import (CameraRig, Intrinsics, Pixel, Pose, RelativePose,
                       project, relative_pose, reproject, unproject)
from .grids import DepthMap, FlowField
from .kernels import backend_name
from .metrics import (LossConfig, MetricsRecord, compute_metrics,
                      format_report, sequence_loss)
from .refine import (GruState, GruUpdater, GruWeights, OracleUpdater,
                     RefineConfig, UpdateInput, depth_update_step,
                     fuse_correlation_step, gru_cell, refine_loop,
                     seed_invalid)
from .synthscene import (Scene, SurfaceParams, full_res_depth, gt_flow,
                         make_scene, positional_features, world_points)
from .triangulation import (flow_from_correlation, init_depth_from_flows,
                            triangulate_grid, triangulate_pixel)
from .upsample import (ContextPyramid, DffmStage, DffmWeights, dffm,
                       upsample_depth, zero_context)

__version__ = "0.1.0"
