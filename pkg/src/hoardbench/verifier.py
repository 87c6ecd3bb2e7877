"""Delayed, noisy pass/fail checks over executed trace segments.

A verifier evaluates a registered predicate against ground truth, then flips
the verdict with its false-positive or false-negative probability using the
dedicated verifier-noise stream. Signals carry both the (possibly flipped)
verdict the agent may see and the ground-truth verdict, which exists for
offline metric computation only: agent-facing code receives `AgentSignal`
views with the ground truth stripped.

Coverage is explicit: a verifier asked about a predicate outside its
coverage set withholds its signal. That is a modelled blind spot, never an
error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .core.state import ConfigurationError, InputError, TraceSegment
from .rng import Substream

# Predicates are pure: (segment, environment ground truth) -> satisfied?
Predicate = Callable[[TraceSegment, object], bool]


class VerifierKind(str, Enum):
    PRECONDITION = "precondition"
    RUNTIME_MONITOR = "runtime_monitor"
    POSTCONDITION = "postcondition"


class Placement(str, Enum):
    IN_LOOP = "in_loop"
    END_ONLY = "end_only"


@dataclass(frozen=True)
class VerifierSpec:
    """One checker: which predicate, how noisy, how late, and what it can see."""

    kind: VerifierKind
    predicate_id: str
    fp_rate: float = 0.0
    fn_rate: float = 0.0
    delay: int = 0
    coverage: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if not (0.0 <= self.fp_rate < 1.0 and 0.0 <= self.fn_rate < 1.0):
            raise ConfigurationError("fp and fn rates must lie in [0, 1)")
        if self.fp_rate + self.fn_rate >= 1.0:
            raise ConfigurationError(
                "fp_rate + fn_rate must stay below 1 (verifier must be informative)"
            )
        if self.delay < 0:
            raise ConfigurationError("delay must be non-negative")
        if not self.coverage:
            object.__setattr__(self, "coverage", frozenset({self.predicate_id}))


@dataclass(frozen=True)
class AgentSignal:
    """What the agent is allowed to see of a verifier signal."""

    emitted_at: int
    segment_start: int
    segment_end: int
    verdict: bool
    predicate_id: str
    target: int | None = None


@dataclass(frozen=True)
class VerifierSignal:
    """Full signal, including ground truth. Report-side only."""

    emitted_at: int
    segment_start: int
    segment_end: int
    verdict: bool | None
    ground_truth_verdict: bool
    predicate_id: str
    target: int | None = None
    withheld: bool = False

    def __post_init__(self):
        if not self.withheld and self.emitted_at < self.segment_end:
            raise InputError("signal emitted before its segment completed")

    def agent_view(self) -> AgentSignal | None:
        if self.withheld or self.verdict is None:
            return None
        return AgentSignal(
            self.emitted_at,
            self.segment_start,
            self.segment_end,
            self.verdict,
            self.predicate_id,
            self.target,
        )

    def to_json_obj(self) -> dict:
        return {
            "emitted_at": self.emitted_at,
            "segment": [self.segment_start, self.segment_end],
            "verdict": self.verdict,
            "ground_truth_verdict": self.ground_truth_verdict,
            "predicate_id": self.predicate_id,
            "target": self.target,
            "withheld": self.withheld,
        }


def evaluate(
    spec: VerifierSpec,
    segment: TraceSegment,
    env_truth: object,
    noise_stream: Substream,
    registry: dict[str, Predicate],
    target: int | None = None,
    emitted_at: int | None = None,
) -> VerifierSignal:
    """Run one check over a completed segment.

    `emitted_at` defaults to segment end plus the spec's delay; an end-only
    schedule passes the final step instead (never earlier than the natural
    emission time). One noise draw is consumed per evaluation regardless of
    the configured rates, so noise settings do not shift the stream.
    """
    if spec.predicate_id not in registry:
        raise ConfigurationError(f"predicate {spec.predicate_id!r} not registered")
    natural = segment.end + spec.delay
    when = natural if emitted_at is None else max(int(emitted_at), natural)

    if spec.predicate_id not in spec.coverage:
        ground = bool(registry[spec.predicate_id](segment, env_truth))
        return VerifierSignal(
            when, segment.start, segment.end, None, ground, spec.predicate_id,
            target, withheld=True,
        )

    ground = bool(registry[spec.predicate_id](segment, env_truth))
    u = float(noise_stream.random())
    verdict = ground
    if ground and u < spec.fp_rate:
        verdict = False
    elif not ground and u < spec.fn_rate:
        verdict = True
    return VerifierSignal(
        when, segment.start, segment.end, verdict, ground, spec.predicate_id, target
    )


@dataclass(frozen=True)
class VerifierPipeline:
    """An ordered set of verifiers plus the placement policy under which the
    environment triggers them."""

    specs: tuple[VerifierSpec, ...]
    placement: Placement = Placement.IN_LOOP

    def __post_init__(self):
        if not self.specs:
            raise ConfigurationError("pipeline must contain at least one verifier")

    def of_kind(self, kind: VerifierKind) -> tuple[VerifierSpec, ...]:
        return tuple(s for s in self.specs if s.kind is kind)


def schedule(pipeline: VerifierPipeline, placement: Placement | str) -> VerifierPipeline:
    """Return the pipeline bound to a placement policy.

    In-loop keeps each verifier's natural trigger (preconditions at option
    start, monitors every step, postconditions at option end plus delay);
    end-only defers every evaluation to the final step while preserving
    predicates and the order of noise draws.
    """
    return VerifierPipeline(pipeline.specs, Placement(placement))


@dataclass(frozen=True)
class VerifierMetrics:
    fp_rate: float
    fn_rate: float
    miss_rate: float
    mean_detection_latency: float
    samples: int


def score_verifier(
    signals: list[VerifierSignal], deadline: int | None = None
) -> VerifierMetrics:
    """Empirical error profile of a signal set.

    FP and FN rates are computed over emitted signals. The miss rate is the
    fraction of ground-truth failures that produced no emitted signal
    (coverage withholding), or, when a `deadline` is given, no signal early
    enough to act on. Detection latency averages emission minus segment end
    over correctly detected failures.
    """
    if not signals:
        return VerifierMetrics(0.0, 0.0, 0.0, 0.0, 0)
    emitted = [s for s in signals if not s.withheld]
    true_pass = [s for s in emitted if s.ground_truth_verdict]
    true_fail = [s for s in emitted if not s.ground_truth_verdict]
    fp = sum(1 for s in true_pass if s.verdict is False) / len(true_pass) if true_pass else 0.0
    fn = sum(1 for s in true_fail if s.verdict is True) / len(true_fail) if true_fail else 0.0

    all_fail = [s for s in signals if not s.ground_truth_verdict]
    missed = 0
    for s in all_fail:
        if s.withheld:
            missed += 1
        elif deadline is not None and s.emitted_at > deadline:
            missed += 1
    miss = missed / len(all_fail) if all_fail else 0.0

    detected = [s for s in true_fail if s.verdict is False]
    latency = (
        sum(s.emitted_at - s.segment_end for s in detected) / len(detected)
        if detected
        else 0.0
    )
    return VerifierMetrics(fp, fn, miss, latency, len(signals))
