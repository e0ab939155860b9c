"""Monocular face reconstruction from video.

Fits a PCA identity model plus expression blendshapes to tracked 2D
landmarks frame by frame, and fuses every frame's colours into one
globally registered texture map.
"""

from .camera import (
    AffineCamera,
    SimilarityNormalization,
    estimate_affine_camera,
    normalize_points,
    project,
)
from .errors import (
    ConfigurationError,
    DegenerateConfigurationError,
    DimensionMismatchError,
    FacefuseError,
    FileFormatError,
    InsufficientCorrespondencesError,
    MissingInitializationError,
    RankDeficiencyError,
    SchemaVersionError,
)
from .fitting import (
    FitResult,
    fit_expressions,
    fit_frame,
    fit_shape,
    fit_shape_and_expressions,
    refine_contour,
)
from .landmarks import (
    LandmarkSet,
    LandmarkVertexMapping,
    load_landmarks,
    load_mapping,
    save_landmarks,
    save_mapping,
)
from .model import (
    BlendshapeSet,
    PcaShapeModel,
    generate_shape,
    generate_shape_with_expression,
    load_model,
    save_model,
    save_obj,
)
from .nnls import kkt_violation, nnls
from .pipeline import (
    FrameRecord,
    PipelineConfig,
    evaluate_tracking,
    landmark_error_percent,
    load_frame_records,
    run_video,
)
from .render import render_mesh, render_view
from .texture import (
    FrameTexture,
    IsomapLayout,
    TextureFusionBuffer,
    build_isomap_layout,
    compute_texel_weights,
    fuse_average,
    fuse_median,
    remap_frame,
)
from .tracker import (
    FeatureConfig,
    PerturbationConfig,
    RegressorCascade,
    extract_features,
    track_video_step,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AffineCamera",
    "BlendshapeSet",
    "ConfigurationError",
    "DegenerateConfigurationError",
    "DimensionMismatchError",
    "FacefuseError",
    "FeatureConfig",
    "FileFormatError",
    "FitResult",
    "FrameRecord",
    "FrameTexture",
    "InsufficientCorrespondencesError",
    "IsomapLayout",
    "LandmarkSet",
    "LandmarkVertexMapping",
    "MissingInitializationError",
    "PcaShapeModel",
    "PerturbationConfig",
    "PipelineConfig",
    "RankDeficiencyError",
    "RegressorCascade",
    "SchemaVersionError",
    "SimilarityNormalization",
    "TextureFusionBuffer",
    "build_isomap_layout",
    "compute_texel_weights",
    "estimate_affine_camera",
    "evaluate_tracking",
    "extract_features",
    "fit_expressions",
    "fit_frame",
    "fit_shape",
    "fit_shape_and_expressions",
    "fuse_average",
    "fuse_median",
    "generate_shape",
    "generate_shape_with_expression",
    "kkt_violation",
    "landmark_error_percent",
    "load_frame_records",
    "load_landmarks",
    "load_mapping",
    "load_model",
    "nnls",
    "normalize_points",
    "project",
    "refine_contour",
    "remap_frame",
    "render_mesh",
    "render_view",
    "run_video",
    "save_landmarks",
    "save_mapping",
    "save_model",
    "save_obj",
    "track_video_step",
    "train",
]
