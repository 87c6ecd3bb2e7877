"""Policy interfaces and the generic control-loop operators.

Firewall rule: a policy receives `Belief`, `Retrieval`, `OptionChoice`, and a
`PolicyContext`, and nothing else. Ground-truth latents and environment state
never cross this boundary; an audit test inspects these signatures to keep it
that way.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

from ..controller import ControllerConfig, pd_feedback
from ..memory import EMPTY_QUERY, LandmarkSet, Query, Retrieval, encode_cue
from ..rng import Substream
from .belief import Belief, BeliefConfig
from .state import (
    Action,
    ConfigurationError,
    NOOP,
    OptionChoice,
    OptionKind,
    validate_option,
)


@dataclass
class PolicyContext:
    """Everything a policy may consult besides its belief.

    `observer_estimate` is the agent-side copy of the adversary belief (None
    for observer-unaware agents); `signals` are agent-visible verifier
    signals delivered so far; `landmark_estimates` are the agent's current
    landmark fixes used for cue formation.
    """

    rng: Substream
    controller: ControllerConfig | None = None
    belief_config: BeliefConfig | None = None
    observer_estimate: object | None = None
    signals: list = field(default_factory=list)
    landmark_estimates: LandmarkSet | None = None
    option_schema: dict | None = None


@runtime_checkable
class OptionPolicy(Protocol):
    """High-level policy choosing temporally extended options."""

    def select(self, belief: Belief, ctx: PolicyContext) -> OptionChoice: ...


@runtime_checkable
class PrimitivePolicy(Protocol):
    """Low-level policy emitting one primitive action per step."""

    def act(
        self,
        belief: Belief,
        retrieved: Retrieval | None,
        option: OptionChoice,
        ctx: PolicyContext,
    ) -> "ActOutcome": ...


@dataclass(frozen=True)
class ActOutcome:
    """Primitive action plus its reported compute burden."""

    action: Action
    compute: float = 0.0
    clamped: bool = False


def select_option(policy: OptionPolicy, belief: Belief, ctx: PolicyContext) -> OptionChoice:
    """Run the high-level policy and validate its choice against the schema."""
    if not isinstance(policy, OptionPolicy):
        raise ConfigurationError("policy does not implement the option interface")
    option = policy.select(belief, ctx)
    return validate_option(option, ctx.option_schema)


def form_query(belief: Belief, option: OptionChoice, ctx: PolicyContext) -> Query:
    """Derive the retrieval query induced by the current belief and option.

    Only cache and retrieve options touch memory; every other option kind
    maps to the distinguished empty query.
    """
    if option.kind not in (OptionKind.RETRIEVE, OptionKind.CACHE):
        return EMPTY_QUERY
    landmarks = ctx.landmark_estimates
    if landmarks is None:
        raise ConfigurationError("query formation requires landmark estimates")
    location = (option.params["x"], option.params["y"])
    return Query(
        item_type=int(option.params["item_type"]),
        value_band=None,
        cue=encode_cue(location, landmarks),
    )


def act(
    policy: PrimitivePolicy,
    belief: Belief,
    retrieved: Retrieval | None,
    option: OptionChoice,
    ctx: PolicyContext,
) -> ActOutcome:
    """Run the low-level policy for the active option."""
    if not isinstance(policy, PrimitivePolicy):
        raise ConfigurationError("policy does not implement the primitive interface")
    return policy.act(belief, retrieved, option, ctx)


# ---------------------------------------------------------------------------
# Generic primitive policies
# ---------------------------------------------------------------------------


class StabilizingController:
    """PD regulation toward zero error while a stabilize option is active.

    Uses the compensated state estimate when the compensator is enabled,
    otherwise the raw delayed estimate. With feedback disabled it pops the
    pre-committed open-loop schedule (if any) and then stays silent.
    """

    def __init__(self, schedule: list[float] | None = None):
        self.schedule = list(schedule or [])

    def act(
        self,
        belief: Belief,
        retrieved: Retrieval | None,
        option: OptionChoice,
        ctx: PolicyContext,
    ) -> ActOutcome:
        cfg = ctx.controller
        if cfg.feedback_enabled:
            if cfg.compensator_enabled:
                est = belief.reconstructed_embodied
            else:
                est = belief.delayed_embodied
            err, err_rate = est.scalar()
            force, clamped = pd_feedback(cfg, err, err_rate)
            return ActOutcome(Action("force", {"force": force}), 0.0, clamped)
        if self.schedule:
            force = self.schedule.pop(0)
            bounded = max(-cfg.action_bound, min(cfg.action_bound, force))
            return ActOutcome(
                Action("force", {"force": bounded}), 0.0, bounded != force
            )
        return ActOutcome(Action("force", {"force": 0.0}))


class DigAtRetrieved:
    """Dig at the decoded location carried by a retrieval result."""

    def act(
        self,
        belief: Belief,
        retrieved: Retrieval | None,
        option: OptionChoice,
        ctx: PolicyContext,
    ) -> ActOutcome:
        if retrieved is None or retrieved.decoded_location is None:
            return ActOutcome(NOOP)
        x, y = retrieved.decoded_location
        return ActOutcome(Action("dig", {"x": x, "y": y}))
