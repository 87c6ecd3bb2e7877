"""Family B: cache-like episodic retrieval at scale.

Phase one writes N one-shot cache events (plus same-type distractors placed
within a small radius of true caches, modelling cue conflict). Phase two
drifts every landmark, then issues one delayed query per true event in
random order. A query is formed the way a returning agent would form it:
re-encode the remembered location against the current, drifted landmark
fixes, and ask the store for the best-matching episode of that item type.

Retrieval latency is the probe count; precision is the fraction of queries
whose decoded dig point lands within the dig radius of the true location;
confusion is returning the wrong episode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core.belief import Belief, BeliefConfig, initial_belief
from ..core.policy import PolicyContext, form_query, select_option
from ..core.state import (
    Action,
    ConfigurationError,
    EmbodiedState,
    Observation,
    OptionChoice,
    OptionKind,
    Trace,
    TraceRecord,
    TraceSegment,
)
from ..ledger import CostLedger, StepCosts, accrue
from ..memory import (
    LandmarkSet,
    MemoryStore,
    StoreVariant,
    retrieve,
    write,
)
from ..rng import RunStreams
from ..verifier import (
    Placement,
    VerifierKind,
    VerifierPipeline,
    VerifierSpec,
    evaluate,
    schedule,
)
from .records import RunRecord, STATUS_COMPLETED, finish_record

# Distractors land within this radius of a true cache: near enough to share
# landmark context and confuse cue matching, far enough that digging at a
# distractor's location usually misses the true item.
CONFLICT_RADIUS = 0.15
PROVENANCE_SAMPLE_STRIDE = 256

PREDICATES = {
    "retrieval_cites_written_episode": lambda seg, truth: bool(truth["cited_ok"]),
    "precision_target": lambda seg, truth: bool(truth["precision_ok"]),
}

OPTION_SCHEMA = {
    OptionKind.RETRIEVE: ("item_type", "x", "y"),
    OptionKind.CACHE: ("x", "y", "item_type", "item_value"),
}


class RetrievalGoalPolicy:
    """Queue of pending retrieval goals; the only admissible option is to go
    retrieve the next one."""

    def __init__(self, goals: list[tuple[int, float, float]]):
        self.goals = list(goals)

    def select(self, belief: Belief, ctx: PolicyContext) -> OptionChoice:
        item_type, x, y = self.goals.pop(0)
        return OptionChoice(
            OptionKind.RETRIEVE, {"item_type": float(item_type), "x": x, "y": y}
        )


@dataclass(frozen=True)
class FamilyBConfig:
    n_events: int = 256
    item_types: int = 8
    landmark_count: int = 25
    query_delay: int = 50
    landmark_drift: float = 0.0
    conflict_rate: float = 0.0
    dig_radius: float = 0.05
    precision_target: float = 0.9
    verifier_fp: float = 0.0
    verifier_fn: float = 0.0
    verifier_delay: int = 1

    def __post_init__(self):
        if self.n_events < 1:
            raise ConfigurationError("n_events must be at least 1")
        if self.dig_radius <= 0:
            raise ConfigurationError("dig_radius must be positive")
        if self.item_types < 1 or self.landmark_count < 3:
            raise ConfigurationError("need >= 1 item type and >= 3 landmarks")
        if self.conflict_rate < 0 or self.landmark_drift < 0:
            raise ConfigurationError("conflict_rate and landmark_drift must be >= 0")


def run_family_b(
    env: FamilyBConfig,
    variant: StoreVariant | str,
    ledger: CostLedger,
    seed: int,
    placement: Placement | str = Placement.IN_LOOP,
    trace: Trace | None = None,
) -> RunRecord:
    streams = RunStreams(seed)
    landmarks = LandmarkSet.sample(env.landmark_count, streams.env)
    store = MemoryStore(variant)

    n = env.n_events
    types = streams.env.integers(1, env.item_types + 1, size=n)
    values = streams.env.uniform(0.5, 1.5, size=n)
    locs = streams.env.uniform(0.0, 1.0, size=(n, 2))

    # Drift and query order are drawn before the conflict payload so that
    # sweeps over conflict_rate compare paired worlds: same landmarks, same
    # caches, same drift, only the distractor set differs.
    drifted = landmarks.drifted(env.landmark_drift, streams.env)
    order = streams.env.permutation(n)

    n_conflict = int(round(env.conflict_rate * n))
    base_idx = streams.env.integers(0, n, size=n_conflict) if n_conflict else np.zeros(0, dtype=int)
    radii = CONFLICT_RADIUS * np.sqrt(streams.env.uniform(0.0, 1.0, size=n_conflict)) if n_conflict else np.zeros(0)
    angles = streams.env.uniform(0.0, 2.0 * np.pi, size=n_conflict) if n_conflict else np.zeros(0)
    conflict_values = streams.env.uniform(0.5, 1.5, size=n_conflict) if n_conflict else np.zeros(0)

    landmark_obs = landmarks.as_obs_tuples()
    step = 0
    write_kappa = 0.0

    def cache_write(item_type: int, value: float, loc: tuple[float, float]) -> None:
        nonlocal step, write_kappa
        action = Action(
            "dig",
            {
                "x": float(loc[0]),
                "y": float(loc[1]),
                "item_type": float(item_type),
                "item_value": float(value),
                "step": float(step),
            },
        )
        obs = Observation({"phase": 0.0}, landmarks=landmark_obs)
        write(store, obs, action)
        accrue(ledger, StepCosts(latency=1.0, compute=1.0))
        write_kappa += 1.0
        if trace is not None:
            option = OptionChoice(
                OptionKind.CACHE,
                {
                    "x": float(loc[0]),
                    "y": float(loc[1]),
                    "item_type": float(item_type),
                    "item_value": float(value),
                },
            )
            # Trace steps are contiguous; the semantic timestamp (including
            # the structural query delay) lives in the store records.
            trace.append(TraceRecord(len(trace), obs, action, option, False))
        step += 1

    for i in range(n):
        cache_write(int(types[i]), float(values[i]), (float(locs[i, 0]), float(locs[i, 1])))
    for j in range(n_conflict):
        b = int(base_idx[j])
        dx = float(radii[j] * np.cos(angles[j]))
        dy = float(radii[j] * np.sin(angles[j]))
        loc = (
            min(1.0, max(0.0, float(locs[b, 0]) + dx)),
            min(1.0, max(0.0, float(locs[b, 1]) + dy)),
        )
        cache_write(int(types[b]), float(conflict_values[j]), loc)

    # Delay between storage and recall is structural: nothing decays, but the
    # world moves underneath the cues.
    step += env.query_delay

    belief_cfg = BeliefConfig(observation_keys=("phase",), embodied_keys=("phase", "phase"))
    belief = initial_belief(belief_cfg, EmbodiedState((0.0,), (0.0,)))
    policy = RetrievalGoalPolicy(
        [(int(types[int(k)]), float(locs[int(k), 0]), float(locs[int(k), 1])) for k in order]
    )
    ctx = PolicyContext(
        rng=streams.agent,
        belief_config=belief_cfg,
        landmark_estimates=drifted,
        option_schema=OPTION_SCHEMA,
    )

    pipeline = schedule(
        VerifierPipeline(
            (
                VerifierSpec(
                    VerifierKind.RUNTIME_MONITOR, "retrieval_cites_written_episode",
                    env.verifier_fp, env.verifier_fn, env.verifier_delay,
                ),
                VerifierSpec(
                    VerifierKind.POSTCONDITION, "precision_target",
                    env.verifier_fp, env.verifier_fn, env.verifier_delay,
                ),
            )
        ),
        placement,
    )
    signals = []
    pending = []

    hits = 0
    confusions = 0
    probes: list[int] = []
    probe_kappa = 0.0
    provenance_failures = 0

    for qi, idx in enumerate(int(k) for k in order):
        true_loc = (float(locs[idx, 0]), float(locs[idx, 1]))
        option = select_option(policy, belief, ctx)
        query = form_query(belief, option, ctx)
        result = retrieve(store, query, drifted)
        probes.append(result.probes_used)
        probe_kappa += result.probes_used
        accrue(ledger, StepCosts(latency=1.0, compute=float(result.probes_used)))
        if trace is not None:
            option = OptionChoice(
                OptionKind.RETRIEVE,
                {
                    "item_type": float(types[idx]),
                    "x": true_loc[0],
                    "y": true_loc[1],
                },
            )
            dig = result.decoded_location or (0.0, 0.0)
            trace.append(
                TraceRecord(
                    len(trace),
                    Observation({"phase": 1.0}, landmarks=drifted.as_obs_tuples()),
                    Action("dig", {"x": float(dig[0]), "y": float(dig[1])}),
                    option,
                    False,
                )
            )

        if result.episode is not None and result.decoded_location is not None:
            dx = result.decoded_location[0] - true_loc[0]
            dy = result.decoded_location[1] - true_loc[1]
            if (dx * dx + dy * dy) ** 0.5 <= env.dig_radius:
                hits += 1
            if result.episode.id != idx:
                confusions += 1
            cited_ok = store.episode_by_id(result.episode.id) is not None
        else:
            cited_ok = True  # nothing was cited
            confusions += 1

        if qi % PROVENANCE_SAMPLE_STRIDE == 0:
            seg = (step, step)
            truth = {"cited_ok": cited_ok}
            if not cited_ok:
                provenance_failures += 1
            if pipeline.placement is Placement.IN_LOOP:
                signals.append(
                    evaluate(pipeline.specs[0], TraceSegment(*seg), truth,
                             streams.verifier, PREDICATES)
                )
            else:
                pending.append((pipeline.specs[0], seg, truth))
        step += 1

    precision = hits / n
    confusion_rate = confusions / n
    truth = {"precision_ok": precision >= env.precision_target}
    final_step = step
    if pipeline.placement is Placement.IN_LOOP:
        signals.append(
            evaluate(pipeline.specs[1], TraceSegment(0, final_step), truth,
                     streams.verifier, PREDICATES)
        )
    else:
        pending.append((pipeline.specs[1], (0, final_step), truth))
    for spec, seg, t in pending:
        signals.append(
            evaluate(spec, TraceSegment(*seg), t, streams.verifier, PREDICATES,
                     emitted_at=final_step + env.verifier_delay)
        )

    accrue(ledger, StepCosts(task=0.0 if truth["precision_ok"] else 1.0))

    probe_arr = np.asarray(probes, dtype=float)
    post = [s for s in signals if s.predicate_id == "precision_target"]
    record = RunRecord(family="B", variant="", seed=seed, status=STATUS_COMPLETED)
    record.goal_verdict = int(all(s.verdict for s in post)) if post else 0
    record.metrics = {
        "precision": precision,
        "confusion_rate": confusion_rate,
        "probes_mean": float(probe_arr.mean()),
        "probes_median": float(np.median(probe_arr)),
        "probes_p95": float(np.percentile(probe_arr, 95)),
        "provenance_failures": float(provenance_failures),
        "episodes_stored": float(len(store)),
    }
    record.kappa_by_source = {"writes": write_kappa, "retrieval_probes": probe_kappa}
    record.signals = [s.to_json_obj() for s in signals]
    return finish_record(record, ledger)
