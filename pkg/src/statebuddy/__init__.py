"""Declarative FSM workflow orchestration with state-constrained intent
matching, pluggable tool executors, and event-sourced sessions."""

from .engine import (
    ActionFailed,
    AutopilotRun,
    AutopilotStepLimit,
    CallDepthExceeded,
    DEFAULT_GLOBALS,
    EngineConfig,
    ExecutorUnavailable,
    GlobalCommandSet,
    GuardFailed,
    InadmissibleTransition,
    Session,
    SessionEnded,
    SessionState,
)
from .errors import StatebuddyError
from .events import EventType, SessionEvent, read_event_log, replay_snapshot
from .intent import (
    EmbeddingVector,
    HashEmbeddingProvider,
    IntentDecision,
    Thresholds,
    TransitionCandidate,
    Utterance,
    cosine_similarity,
    decide,
    jaccard_distance,
    levenshtein,
    match_in_state,
)
from .model import (
    ActionKind,
    ActionSpec,
    JumpStateDef,
    ParseError,
    StateDef,
    TransitionDef,
    ValidationError,
    WorkflowDefinition,
    admissible_triggers,
    export_diagram,
    load_workflow,
    load_workflow_file,
    serialize_workflow,
)

__version__ = "0.1.0"
