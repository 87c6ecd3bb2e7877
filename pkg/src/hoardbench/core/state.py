"""Shared state, option, action, and trace types.

This file is the contract between the agent side (beliefs, policies) and the
environment side (ground truth, physics). The split is deliberate: policies
are handed `Belief`, `Retrieval`, and `OptionChoice` objects only, never the
ground-truth `LatentParams` living inside `AgentState`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

from ..errors import ConfigurationError, InputError, SchemaError


# ---------------------------------------------------------------------------
# Embodied / latent / task state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmbodiedState:
    """Plant state: position-like and velocity-like coordinates.

    Stored as tuples so environments of any dimensionality share one type;
    the hidden-dynamics control family uses a single error coordinate.
    """

    position: tuple[float, ...]
    velocity: tuple[float, ...]

    def scalar(self) -> tuple[float, float]:
        """Convenience accessor for 1-D environments."""
        return self.position[0], self.velocity[0]


@dataclass(frozen=True)
class LatentSpec:
    """Declared names and closed ranges for hidden environment parameters."""

    names: tuple[str, ...]
    lows: tuple[float, ...]
    highs: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.names) == len(self.lows) == len(self.highs)):
            raise ConfigurationError("latent spec fields must have equal length")
        for name, lo, hi in zip(self.names, self.lows, self.highs):
            if not lo <= hi:
                raise ConfigurationError(f"latent {name!r}: empty range [{lo}, {hi}]")

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class LatentParams:
    """Ground-truth hidden values. Environment-side only; policies never see this."""

    spec: LatentSpec
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.spec.names):
            raise InputError("latent value count does not match spec")
        for name, lo, hi, v in zip(
            self.spec.names, self.spec.lows, self.spec.highs, self.values
        ):
            if not (lo <= v <= hi):
                raise InputError(f"latent {name!r}={v} outside [{lo}, {hi}]")

    def get(self, name: str) -> float:
        return self.values[self.spec.index(name)]


@dataclass
class TaskState:
    """Remaining horizon, resource counters, and permission flags."""

    remaining_steps: int
    resources: dict[str, float] = field(default_factory=dict)
    permissions: dict[str, bool] = field(default_factory=dict)

    def tick(self) -> None:
        if self.remaining_steps <= 0:
            raise InputError("task horizon already exhausted")
        self.remaining_steps -= 1

    def __post_init__(self):
        for k, v in self.resources.items():
            if v < 0:
                raise InputError(f"resource {k!r} is negative")


@dataclass
class AgentState:
    """Full environment-side state bundle for one run.

    `observer_estimate` is the agent-side copy of what an adversary may have
    inferred; it is the only field here a policy is allowed to read, and it
    is always handed over separately, never through this container.
    """

    embodied: EmbodiedState
    latent: LatentParams
    memory_ref: str
    observer_estimate: object  # ObserverBelief; kept loose to avoid an import cycle
    task: TaskState


# ---------------------------------------------------------------------------
# Options
# ---------------------------------------------------------------------------


class OptionKind(str, Enum):
    LAUNCH = "launch"
    STABILIZE = "stabilize"
    CACHE = "cache"
    RETRIEVE = "retrieve"
    CONCEAL = "conceal"
    PROPOSE = "propose"
    EXECUTE = "execute"
    CHECK = "check"
    PROBE = "probe"


# Parameter keys each option kind carries by default. Environments may narrow
# or extend this via their own schema; validation always uses exact key sets.
DEFAULT_OPTION_SCHEMA: dict[OptionKind, tuple[str, ...]] = {
    OptionKind.LAUNCH: ("offset", "impulse"),
    OptionKind.STABILIZE: (),
    OptionKind.CACHE: ("x", "y", "item_type", "item_value"),
    OptionKind.RETRIEVE: ("item_type", "x", "y"),
    OptionKind.CONCEAL: ("steps",),
    OptionKind.PROPOSE: (),
    OptionKind.EXECUTE: (),
    OptionKind.CHECK: (),
    OptionKind.PROBE: ("count",),
}

# Bounded macro-actions: an option that never fires its own termination
# predicate is cut off after this many steps.
OPTION_MAX_STEPS = 50


@dataclass(frozen=True)
class OptionChoice:
    """A temporally extended macro-action selected by the high-level policy."""

    kind: OptionKind
    params: dict[str, float] = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {"kind": self.kind.value, "params": dict(sorted(self.params.items()))}


def validate_option(
    option: OptionChoice, schema: dict[OptionKind, tuple[str, ...]] | None = None
) -> OptionChoice:
    """Check the option kind and its exact parameter key set against a schema."""
    schema = schema or DEFAULT_OPTION_SCHEMA
    if option.kind not in schema:
        raise ConfigurationError(f"option kind {option.kind} not in environment schema")
    expected = set(schema[option.kind])
    got = set(option.params)
    if got != expected:
        raise SchemaError(
            f"option {option.kind.value}: params {sorted(got)} != declared {sorted(expected)}"
        )
    for k, v in option.params.items():
        if not math.isfinite(float(v)):
            raise InputError(f"option {option.kind.value}: param {k!r} is not finite")
    return option


# ---------------------------------------------------------------------------
# Observations and actions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatentEvidence:
    """One linear measurement of a latent: response = regressor * value + noise."""

    name: str
    regressor: float
    response: float


@dataclass(frozen=True)
class Observation:
    """Raw per-step sensor payload.

    `values` follows the environment's declared key layout. `latent_evidence`
    is non-empty only on informative steps (contact, landmark, or
    constraint-evaluation events). `landmarks` carries (id, x, y) triples for
    spatial-memory environments.
    """

    values: dict[str, float]
    latent_evidence: tuple[LatentEvidence, ...] = ()
    landmarks: tuple[tuple[int, float, float], ...] = ()

    def validate(self, keys: tuple[str, ...]) -> "Observation":
        if set(self.values) != set(keys):
            raise SchemaError(
                f"observation keys {sorted(self.values)} != schema {sorted(keys)}"
            )
        for k, v in self.values.items():
            if not math.isfinite(v):
                raise InputError(f"observation value {k!r} is not finite")
        return self

    def to_json_obj(self) -> dict:
        obj: dict = {"values": {k: self.values[k] for k in sorted(self.values)}}
        if self.latent_evidence:
            obj["latent_evidence"] = [
                [e.name, e.regressor, e.response] for e in self.latent_evidence
            ]
        if self.landmarks:
            obj["landmarks"] = [list(t) for t in self.landmarks]
        return obj


@dataclass(frozen=True)
class Action:
    """Primitive action. `kind` names the actuator, `params` its arguments."""

    kind: str
    params: dict[str, float] = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {"kind": self.kind, "params": {k: self.params[k] for k in sorted(self.params)}}


NOOP = Action("noop")


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceRecord:
    step: int
    observation: Observation
    action: Action
    option_active: OptionChoice
    observed_by_adversary: bool

    def to_json_line(self) -> str:
        # Field order is part of the wire format; do not reorder.
        obj = {
            "step": self.step,
            "observation": self.observation.to_json_obj(),
            "action": self.action.to_json_obj(),
            "option_active": self.option_active.to_json_obj(),
            "observed_by_adversary": self.observed_by_adversary,
        }
        return json.dumps(obj, separators=(",", ":"))


class Trace:
    """Append-only step log with strictly increasing, gap-free step indices."""

    def __init__(self):
        self.records: list[TraceRecord] = []

    def append(self, record: TraceRecord) -> None:
        expected = self.records[-1].step + 1 if self.records else 0
        if record.step != expected:
            raise InputError(f"trace step {record.step} != expected {expected}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def segment(self, start: int, end: int) -> "TraceSegment":
        if not (0 <= start <= end):
            raise InputError("invalid segment bounds")
        recs = tuple(r for r in self.records if start <= r.step <= end)
        return TraceSegment(start, end, recs)

    def to_jsonl(self) -> str:
        return "\n".join(r.to_json_line() for r in self.records) + ("\n" if self.records else "")


@dataclass(frozen=True)
class TraceSegment:
    """A contiguous slice of a trace, addressed by inclusive step bounds."""

    start: int
    end: int
    records: tuple[TraceRecord, ...] = ()
