"""Desk-scale vision-and-language navigation engine.

Synthetic worlds with geodesic queries, a discrete motion model, a
reason-act rollout loop over pluggable decision backends, demonstration
collection with key-node mining, reasoning supervision, and standard
route-quality metrics.  Hot geometry kernels run compiled when the
extension built, with a pure-Python twin selected at import time.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .config import PipelineConfig, apply_overrides, load_config
from .engine import (
    KeyNode,
    NoisyExpertConfig,
    collect_dagger_trajectory,
    collect_gt_trajectory,
    compute_progress,
    detect_deviation_nodes,
    detect_nodes,
    detect_stopping_error,
    detect_subtask_nodes,
    extract_node_context,
)
from .errors import (
    CollectionError,
    CommandParseError,
    DeskvlnError,
    EmissionError,
    GenerationError,
    RemoteCallError,
    SchemaError,
    TripletFormatError,
    ValidationError,
)
from .kinematics import (
    FORWARD_STEP_M,
    TURN_STEP_DEG,
    ActionPrimitive,
    Pose,
    StepMarker,
    StepRecord,
    Trajectory,
    apply_action,
    path_length,
)
from .metrics import EvalReport, evaluate, evaluate_episode, ndtw, render_report_text
from .orchestrator import (
    FOVConfig,
    ObservationFrame,
    PolicyDecision,
    ReasoningLog,
    RolloutConfig,
    decide_mode,
    fuse_reasoning_context,
    parse_action_text,
    render_command,
    run_rollout,
    sample_frames,
)
from .policies import RandomWalkBackend, ReplayBackend, ScriptedExpertBackend
from .remote import RemoteClient, RemoteConfig, RemotePolicyBackend, RemoteReasonerBackend
from .supervision import (
    ConversationTurn,
    MockReasonerBackend,
    ReasoningTriplet,
    TrainingSample,
    emit_training_samples,
    generate_reasoning,
    parse_triplet,
    render_triplet,
)
from .world import (
    Episode,
    SceneWorld,
    WorldGenParams,
    generate_synthetic_world,
    geodesic_distance,
    load_episodes,
    load_world,
    save_episodes,
    save_world,
    shortest_path,
)

__version__ = "0.1.0"
