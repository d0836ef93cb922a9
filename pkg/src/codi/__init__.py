"""Subject-consistent image-set generation engine.

Backbone-agnostic building blocks for keeping one subject's identity
stable across a set of generated images while poses stay free: subject
masks from cross-attention, exact optimal-transport identity transfer,
saliency-filtered cross-image attention, a deterministic toy pipeline
wiring them together, and pose/consistency evaluation.
"""

from .errors import (
    DegenerateShapeError,
    EngineError,
    FormatError,
    InfeasibleMassesError,
    InsufficientKeypointsError,
    NoValidPairsError,
    NumericError,
    ParameterError,
    ShapeError,
    TensorCorruptionError,
    TensorFormatError,
    ValidationError,
)
from .evaluate import (
    AlignmentResult,
    KeypointSet,
    PairwiseResult,
    align_keypoints,
    dataset_average,
    embedding_consistency,
    filter_common,
    load_keypoint_file,
    pairwise_average,
    pose_distance,
    pose_set_score,
    procrustes_align,
    tau_sweep,
)
from .masks import (
    average_attention,
    extract_subject,
    importance_weights,
    otsu_threshold,
)
from .pipeline import (
    PipelineConfig,
    RunArtifacts,
    load_config,
    parse_config,
    run_pipeline,
    toy_denoise_step,
)
from .refine import (
    AttentionBundle,
    cross_image_scores,
    filter_and_renormalize,
    refine_attention,
    select_top_alpha,
)
from .synth import synth_attention, synth_features, synth_keypoints, write_fixture
from .tensor_io import flatten_spatial, read_tensor, write_tensor
from .transport import (
    TransportPlan,
    compose_features,
    cost_matrix,
    saliency_scores,
    solve_ot,
    transport_features,
)

__version__ = "0.1.0"
