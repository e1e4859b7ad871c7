"""Two-stage limb-pose estimation on depth images.

A detection network proposes per-joint and per-connection confidence maps,
a regression network refines them, and a decoder links joints into limb
chains via non-maximum suppression, line integrals, and exact bipartite
matching. The package also ships a synthetic depth-scene generator, the
training protocol for both networks, and an evaluation harness.
"""

from .skeleton import (
    LIMBS,
    NUM_CHANNELS,
    NUM_CONNECTIONS,
    NUM_JOINTS,
    ConnectionId,
    JointId,
    Limb,
    LimbId,
    channel_id,
    channel_index,
    connection_endpoints,
    limb_of,
    limb_of_connection,
)
from .types import (
    Annotation,
    DepthFrame,
    JointAnnotation,
    MapKind,
    MapStack,
    Visibility,
)
from .errors import (
    AnnotationError,
    CheckpointError,
    DataFormatError,
    DegenerateConnectionError,
    LimbPoseError,
    NumericError,
    ShapeMismatchError,
    TrainingDivergedError,
)
from .maskgen import (
    build_targets,
    connection_detection_mask,
    connection_regression_map,
    joint_detection_mask,
    joint_regression_map,
)
from .metrics import aggregate, binarize, confusion, dsc, limb_rmsd, recall
from .decoding import (
    ConnectionMatch,
    DecoderConfig,
    JointCandidate,
    LimbPose,
    LocatedJoint,
    PoseEstimate,
    assemble_pose,
    decode_frame,
    extract_candidates,
    line_integral,
    match_connection,
    match_scores,
    nms,
)
from .nets import (
    DetectionNet,
    RegressionNet,
    detect_forward,
    detection_loss,
    load_checkpoint,
    regress_forward,
    regression_loss,
    save_checkpoint,
)
from .training import (
    DatasetSplit,
    DetectionSample,
    EpochRecord,
    RegressionSample,
    TrainConfig,
    fit_detection,
    fit_regression,
    lr_at_epoch,
    make_detection_samples,
    make_regression_samples,
    preprocess,
    scale_annotation,
    split_dataset,
    train_detection_pipeline,
    train_regression_pipeline,
)
from .synthdata import (
    SceneParams,
    SkeletonSample,
    SyntheticFrame,
    generate_dataset,
    generate_frame,
    generate_patient_set,
    render_depth,
    sample_skeleton,
)
from .evaluation import evaluate_poses, format_report
from .config import PipelineConfig, default_config, load_config

__version__ = "0.1.0"
