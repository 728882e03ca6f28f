"""Real-time, model-agnostic affect fusion in PAD space.

Uni-modal affective cues arrive as events (from built-in analyzers or
external processes over UDP), decay linearly, and fuse into a smoothed
pleasure/arousal/dominance estimate that is broadcast continuously and
steerable live through a control API.
"""

from .emotion import (
    DominanceRule,
    LabelPrototypeTable,
    PadVector,
    clamp_pad,
    default_label_table,
    pad_to_label,
    va_to_dominance,
)
from .fusion import (
    AffectEvent,
    ClockRegressionError,
    DecayedEvent,
    FusionConfig,
    FusionEngine,
    FusionResult,
    compute_fusion_point,
    decay_event,
)
from .pipeline import (
    ActivityRegistry,
    ActivityState,
    ActivityUpdate,
    ComponentDescriptor,
    PipelineRuntime,
    TopicQueue,
    gate_event,
)
from .config import DaemonConfig, config_from_dict, load_config
from .daemon import AffectDaemon
from .session import read_session, replay_session, write_session

__version__ = "0.1.0"

__all__ = [
    "AffectDaemon",
    "AffectEvent",
    "ActivityRegistry",
    "ActivityState",
    "ActivityUpdate",
    "ClockRegressionError",
    "ComponentDescriptor",
    "DaemonConfig",
    "DecayedEvent",
    "DominanceRule",
    "FusionConfig",
    "FusionEngine",
    "FusionResult",
    "LabelPrototypeTable",
    "PadVector",
    "PipelineRuntime",
    "TopicQueue",
    "clamp_pad",
    "compute_fusion_point",
    "config_from_dict",
    "decay_event",
    "default_label_table",
    "gate_event",
    "load_config",
    "pad_to_label",
    "read_session",
    "replay_session",
    "va_to_dominance",
    "write_session",
]
