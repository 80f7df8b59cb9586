"""voxsil: differentiable voxel-to-silhouette projection and reconstruction.

A perspective camera renders a voxel occupancy grid to a 2D silhouette by
dense trilinear resampling into a camera-frame volume followed by a
per-pixel max across disparity.  The operation has an analytic backward
pass, which the reconstruction engine uses to recover 3D occupancy grids
from multi-view silhouettes with Adam.  A ray-tracing oracle, a
space-carving visual-hull baseline, and an IoU harness round out the
toolkit.
"""

__version__ = "0.1.0"

from .errors import DegeneratePoseError, DivergenceError, SingularMatrixError
from .geometry import (
    CameraIntrinsics,
    PerspectiveTransform,
    SamplingGrid,
    Viewpoint,
    build_intrinsics,
    build_rig,
    build_sampling_grid,
    camera_to_world,
    compose_transform,
    default_intrinsics,
    default_rig,
    disparity_range,
    extrinsics_from_viewpoint,
    index_identity_transform,
    rig_sampling_grids,
    transform_from_viewpoint,
    world_to_camera,
)
from .oracle import GradCheckReport, finite_diff_loss_grad, grad_check, raytrace_silhouette
from .projector import (
    SENTINEL_NO_MAX,
    backend_name,
    flatten_max,
    project,
    project_backward,
    resample,
    set_num_threads,
)
from .recon import (
    Adam,
    CombinedLoss,
    LossConfig,
    ReconConfig,
    ReconResult,
    adam_step,
    combined_loss,
    projection_loss,
    reconstruct,
    volume_loss,
)
from .volume import (
    VoxelGrid,
    binarize,
    index_to_world,
    iou,
    rotate90_z,
    synth_shape,
    visual_hull,
    world_to_index,
)

__all__ = [name for name in dir() if not name.startswith("_")]
