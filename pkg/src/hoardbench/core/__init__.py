from .belief import Belief, BeliefConfig, initial_belief, update_belief
from .policy import (
    ActOutcome,
    DigAtRetrieved,
    OptionPolicy,
    PolicyContext,
    PrimitivePolicy,
    StabilizingController,
    act,
    form_query,
    select_option,
)
from .state import (
    Action,
    AgentState,
    ConfigurationError,
    DEFAULT_OPTION_SCHEMA,
    EmbodiedState,
    InputError,
    LatentEvidence,
    LatentParams,
    LatentSpec,
    NOOP,
    Observation,
    OptionChoice,
    OptionKind,
    OPTION_MAX_STEPS,
    SchemaError,
    TaskState,
    Trace,
    TraceRecord,
    TraceSegment,
    validate_option,
)

__all__ = [
    "Action",
    "ActOutcome",
    "AgentState",
    "Belief",
    "BeliefConfig",
    "ConfigurationError",
    "DEFAULT_OPTION_SCHEMA",
    "DigAtRetrieved",
    "EmbodiedState",
    "InputError",
    "LatentEvidence",
    "LatentParams",
    "LatentSpec",
    "NOOP",
    "Observation",
    "OptionChoice",
    "OptionKind",
    "OPTION_MAX_STEPS",
    "OptionPolicy",
    "PolicyContext",
    "PrimitivePolicy",
    "SchemaError",
    "StabilizingController",
    "TaskState",
    "Trace",
    "TraceRecord",
    "TraceSegment",
    "act",
    "form_query",
    "initial_belief",
    "select_option",
    "update_belief",
    "validate_option",
]
