"""Family C: caching under strategic observation.

Three phases. In the caching phase the agent buries K items on the 20x20
arena grid; every physical action is independently visible to a watching
adversary with probability nu, and each sighting updates the adversary's
location belief. An observer-aware agent maintains its own copy of that
belief from the visibility bits it logs, opens with decoy digs that dilute
later evidence, places caches where inferred mass is low, defers when even
the best spot looks watched, and relocates caches the runtime monitor
reports as seen. In the pilfer phase the adversary digs up its top-mass
cells. In the recovery phase the agent retrieves survivors through its
episodic memory and re-caches what it finds stolen.

A hidden constraint (a forbidden zone the agent does not know about) is
checkable only by postcondition. The "cache while observed" runtime monitor
is the signal whose placement the ablation grid flips: end-only signals
arrive only after the adversary has already acted.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..core.belief import Belief, BeliefConfig, initial_belief
from ..core.policy import PolicyContext, select_option
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
from ..memory import LandmarkSet, MemoryStore, Query, StoreVariant, encode_cue, retrieve, write
from ..observer import (
    OBSERVER_GRID,
    ObserverBelief,
    SawCache,
    SawNothing,
    SawPresence,
    leakage_score,
    observer_update,
    pilfer_select,
)
from ..rng import RunStreams
from ..verifier import (
    Placement,
    VerifierKind,
    VerifierPipeline,
    VerifierSpec,
    evaluate,
    schedule,
    score_verifier,
)
from .records import RunRecord, STATUS_COMPLETED, finish_record

CANDIDATE_CELLS = 8
MAX_DEFERS_PER_CACHE = 3
OPENING_DECOYS = 2

PREDICATES = {
    "cache_while_observed": lambda seg, truth: not bool(truth["violation"]),
    "no_cache_in_forbidden_zone": lambda seg, truth: not bool(truth["in_zone"]),
    "recovered_target": lambda seg, truth: bool(truth["recovered_ok"]),
}

OPTION_SCHEMA = {
    OptionKind.CACHE: ("row", "col"),
    OptionKind.CONCEAL: ("steps", "row", "col"),
}


@dataclass(frozen=True)
class FamilyCConfig:
    caches: int = 10
    pilfer_budget: int = 3
    visibility: float = 0.5
    decoy_cost: float = 1.0
    conceal_wait_cost: int = 2
    recovery_horizon: int = 50
    landmark_count: int = 25
    item_types: int = 4
    dig_radius: float = 0.05
    diffusion_rate: float = 0.02
    theta_obs: float = 0.02
    forbidden_zone: tuple[int, int, int, int] = (0, 0, 2, 2)  # r0, c0, r1, c1
    recovered_target: float = 0.5
    monitor_delay: int = 1
    verifier_fp: float = 0.0
    verifier_fn: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.visibility <= 1.0):
            raise ConfigurationError("visibility must lie in [0, 1]")
        if not (1 <= self.pilfer_budget <= OBSERVER_GRID * OBSERVER_GRID):
            raise ConfigurationError("pilfer budget out of range")
        if self.caches < 1:
            raise ConfigurationError("need at least one cache")
        r0, c0, r1, c1 = self.forbidden_zone
        if not (0 <= r0 <= r1 < OBSERVER_GRID and 0 <= c0 <= c1 < OBSERVER_GRID):
            raise ConfigurationError("forbidden zone must lie inside the grid")


@dataclass(frozen=True)
class AgentFlags:
    observer_aware: bool = True
    decoys_enabled: bool = True


def _cell_of(flat: int) -> tuple[int, int]:
    return int(flat) // OBSERVER_GRID, int(flat) % OBSERVER_GRID


def _cell_center(cell: tuple[int, int]) -> tuple[float, float]:
    return (cell[0] + 0.5) / OBSERVER_GRID, (cell[1] + 0.5) / OBSERVER_GRID


class CacheSitePolicy:
    """Pick a low-suspicion burial cell, or conceal (defer) when even the
    best candidate carries more inferred observer mass than the threshold."""

    def __init__(self, theta: float, wait_steps: int, avoid: set[tuple[int, int]]):
        self.theta = theta
        self.wait_steps = wait_steps
        self.avoid = avoid  # shared with the run loop; cells already in use

    def _mass(self, ctx: PolicyContext, cell: tuple[int, int]) -> float:
        est = ctx.observer_estimate
        return est.mass_at(cell) if est is not None else 0.0

    def pick_cell(self, ctx: PolicyContext) -> tuple[int, int]:
        flat = ctx.rng.integers(0, OBSERVER_GRID * OBSERVER_GRID, size=CANDIDATE_CELLS)
        cells = [_cell_of(k) for k in flat]
        pool = [c for c in cells if c not in self.avoid] or cells
        return min(pool, key=lambda c: (self._mass(ctx, c), c))

    def select(self, belief: Belief, ctx: PolicyContext) -> OptionChoice:
        cell = self.pick_cell(ctx)
        if self._mass(ctx, cell) > self.theta:
            return OptionChoice(
                OptionKind.CONCEAL,
                {"steps": float(self.wait_steps), "row": float(cell[0]), "col": float(cell[1])},
            )
        return OptionChoice(
            OptionKind.CACHE, {"row": float(cell[0]), "col": float(cell[1])}
        )


def _in_zone(cell: tuple[int, int], zone: tuple[int, int, int, int]) -> bool:
    r0, c0, r1, c1 = zone
    return r0 <= cell[0] <= r1 and c0 <= cell[1] <= c1


def run_family_c(
    env: FamilyCConfig,
    flags: AgentFlags,
    ledger: CostLedger,
    seed: int,
    placement: Placement | str = Placement.IN_LOOP,
    trace: Trace | None = None,
) -> RunRecord:
    streams = RunStreams(seed)
    landmarks = LandmarkSet.sample(env.landmark_count, streams.env)
    landmark_obs = landmarks.as_obs_tuples()
    store = MemoryStore(StoreVariant.CLUSTERED)

    adversary = ObserverBelief.uniform(env.diffusion_rate)
    agent_estimate = ObserverBelief.uniform(env.diffusion_rate) if flags.observer_aware else None

    pipeline = schedule(
        VerifierPipeline(
            (
                VerifierSpec(
                    VerifierKind.RUNTIME_MONITOR, "cache_while_observed",
                    env.verifier_fp, env.verifier_fn, env.monitor_delay,
                ),
                VerifierSpec(
                    VerifierKind.POSTCONDITION, "no_cache_in_forbidden_zone",
                    env.verifier_fp, env.verifier_fn, env.monitor_delay,
                ),
                VerifierSpec(
                    VerifierKind.POSTCONDITION, "recovered_target",
                    env.verifier_fp, env.verifier_fn, env.monitor_delay,
                ),
            )
        ),
        placement,
    )
    monitor_spec, zone_spec, goal_spec = pipeline.specs
    in_loop = pipeline.placement is Placement.IN_LOOP
    signals = []
    pending = []

    # Item values and the unaware agent's cell plan are drawn up front so
    # awareness toggles cannot shift the environment stream.
    values = streams.env.uniform(0.5, 1.5, size=env.caches)
    unaware_cells = [
        _cell_of(k)
        for k in streams.env.permutation(OBSERVER_GRID * OBSERVER_GRID)[: env.caches]
    ]

    placed: list[dict] = []
    pending_items = list(range(env.caches))
    compromised: list[int] = []
    defer_budget = dict.fromkeys(range(env.caches), MAX_DEFERS_PER_CACHE)
    decoys_owed = OPENING_DECOYS if (flags.observer_aware and flags.decoys_enabled) else 0
    used_cells: set[tuple[int, int]] = set()

    caching_horizon = 8 * env.caches
    step = 0
    wait_remaining = 0
    decoys_used = 0
    recache_moves = 0
    violations = 0
    kappa = {"cache_writes": 0.0, "decoys": 0.0, "recovery_probes": 0.0, "corrections": 0.0}
    inbox: list = []  # (deliver_at, agent-visible signal view)
    sighted_cells: list[tuple[int, int]] = []  # raw sightings, in order

    belief_cfg = BeliefConfig(observation_keys=("phase",), embodied_keys=("phase", "phase"))
    belief = initial_belief(belief_cfg, EmbodiedState((0.0,), (0.0,)))
    policy = CacheSitePolicy(env.theta_obs, env.conceal_wait_cost, used_cells)
    ctx = PolicyContext(
        rng=streams.agent,
        belief_config=belief_cfg,
        observer_estimate=agent_estimate,
        option_schema=OPTION_SCHEMA,
    )

    def pick_decoy_cell() -> tuple[int, int]:
        flat = streams.agent.integers(0, OBSERVER_GRID * OBSERVER_GRID, size=CANDIDATE_CELLS)
        cells = [_cell_of(k) for k in flat]
        avoid = used_cells | {c["cell"] for c in placed}
        pool = [c for c in cells if c not in avoid] or cells
        mass = policy._mass
        return min(pool, key=lambda c: (-mass(ctx, c), c))

    # The caching phase runs for its full horizon whatever the agent does:
    # the adversary strike comes at a fixed time, idle steps diffuse its
    # belief, and every agent variant sees the same visibility draws.
    while step < caching_horizon:
        arrived = [m for m in inbox if m[0] <= step]
        inbox = [m for m in inbox if m[0] > step]
        if flags.observer_aware:
            for _, view in arrived:
                if view is not None and view.verdict is False:
                    for i, cache in enumerate(placed):
                        if cache["placed_step"] == view.segment_start and not cache["moved"]:
                            if i not in compromised:
                                compromised.append(i)

        ctx.observer_estimate = agent_estimate
        action_kind = "wait"
        action_cell: tuple[int, int] | None = None
        item_idx: int | None = None
        is_real_cache = False

        if wait_remaining > 0:
            wait_remaining -= 1
        elif decoys_owed and flags.observer_aware:
            decoys_owed -= 1
            action_cell = pick_decoy_cell()
            action_kind = "decoy"
        elif flags.observer_aware and compromised:
            item_idx = compromised.pop(0)
            action_cell = policy.pick_cell(ctx)
            action_kind = "recache"
            is_real_cache = True
        elif pending_items:
            nxt = pending_items[0]
            if flags.observer_aware:
                option = select_option(policy, belief, ctx)
                cell = (int(option.params["row"]), int(option.params["col"]))
                if option.kind is OptionKind.CONCEAL and defer_budget[nxt] > 0:
                    defer_budget[nxt] -= 1
                    action_kind = "conceal"
                    action_cell = cell
                    wait_remaining = int(option.params["steps"]) - 1
                else:
                    pending_items.pop(0)
                    item_idx = nxt
                    action_cell = cell
                    action_kind = "cache"
                    is_real_cache = True
            else:
                pending_items.pop(0)
                item_idx = nxt
                action_cell = unaware_cells[nxt]
                action_kind = "cache"
                is_real_cache = True

        # One visibility draw per step keeps the adversary stream aligned
        # across agent variants; only physical digs can actually be seen.
        u = float(streams.adversary.random())
        physical = action_kind in ("cache", "recache", "decoy")
        visible = physical and u < env.visibility
        present_visible = action_kind == "conceal" and u < env.visibility

        step_costs = {"latency": 1.0, "compute": 0.0, "repair": 0.0}
        if action_kind in ("cache", "recache"):
            cell = action_cell
            assert cell is not None and item_idx is not None
            x, y = _cell_center(cell)
            if action_kind == "recache":
                cache = placed[item_idx]
                used_cells.discard(cache["cell"])
                cache["cell"] = cell
                cache["moved"] = True
                cache["placed_step"] = step
                item_type = cache["type"]
                item_value = cache["value"]
                recache_moves += 1
                step_costs["repair"] = 1.0
            else:
                item_type = 1 + item_idx % env.item_types
                item_value = float(values[item_idx])
                placed.append(
                    {
                        "cell": cell,
                        "value": item_value,
                        "type": item_type,
                        "placed_step": step,
                        "moved": False,
                        "stolen": False,
                    }
                )
            used_cells.add(cell)
            dig = Action(
                "dig",
                {
                    "x": x,
                    "y": y,
                    "item_type": float(item_type),
                    "item_value": float(item_value),
                    "step": float(step),
                },
            )
            write(store, Observation({"phase": 0.0}, landmarks=landmark_obs), dig)
            step_costs["compute"] = 1.0
            kappa["cache_writes"] += 1.0
        elif action_kind == "decoy":
            decoys_used += 1
            step_costs["compute"] = env.decoy_cost
            kappa["decoys"] += env.decoy_cost

        if action_kind == "cache" and flags.observer_aware and flags.decoys_enabled:
            decoys_owed += 1

        # Adversary inference, mirrored by the aware agent's own estimate.
        # The adversary also keeps its raw sighting list: a dig it actually
        # watched is a remembered site, not just a blurred belief bump (and
        # it cannot tell decoy digs from real ones).
        if visible and action_cell is not None:
            event = SawCache(action_cell)
            if action_cell not in sighted_cells:
                sighted_cells.append(action_cell)
        elif present_visible and action_cell is not None:
            event = SawPresence(action_cell)
        else:
            event = SawNothing()
        adversary = observer_update(adversary, event)
        if agent_estimate is not None:
            agent_estimate = observer_update(agent_estimate, event)
        # Leakage is charged as per-step exposure: the mass the adversary
        # currently holds on cells that currently hide something.
        true_cells = [c["cell"] for c in placed]
        exposure = leakage_score(adversary, true_cells) if true_cells else 0.0
        accrue(
            ledger,
            StepCosts(
                latency=step_costs["latency"],
                leak=exposure,
                repair=step_costs["repair"],
                compute=step_costs["compute"],
            ),
        )

        violation = is_real_cache and visible
        violations += int(violation)
        seg = (step, step)
        truth = {"violation": violation}
        if in_loop:
            sig = evaluate(monitor_spec, TraceSegment(*seg), truth, streams.verifier, PREDICATES)
            signals.append(sig)
            inbox.append((sig.emitted_at, sig.agent_view()))
        else:
            pending.append((monitor_spec, seg, truth))

        if trace is not None:
            px, py = _cell_center(action_cell) if action_cell else (0.0, 0.0)
            if is_real_cache:
                r, c = action_cell
                opt = OptionChoice(OptionKind.CACHE, {"row": float(r), "col": float(c)})
            else:
                opt = OptionChoice(
                    OptionKind.CONCEAL, {"steps": 1.0, "row": 0.0, "col": 0.0}
                )
            trace.append(
                TraceRecord(
                    len(trace),
                    Observation({"phase": 0.0}),
                    Action(action_kind, {"x": px, "y": py}),
                    opt,
                    visible,
                )
            )
        step += 1

    # Pilfer phase: the adversary digs its best guesses.
    pilfer_step = step
    final_cells = [c["cell"] for c in placed]
    leakage = leakage_score(adversary, final_cells) if final_cells else 0.0
    belief_mismatch = 0.0
    if agent_estimate is not None:
        belief_mismatch = float(abs(agent_estimate.grid - adversary.grid).max())
    # Remembered sightings are dug first; belief mass guides what is left of
    # the budget. Decoy and stale sightings waste digs, which is the point.
    chosen: list[tuple[int, int]] = list(sighted_cells[: env.pilfer_budget])
    if len(chosen) < env.pilfer_budget:
        ranked = pilfer_select(adversary, min(400, env.pilfer_budget + len(chosen)))
        for cell in ranked:
            if len(chosen) >= env.pilfer_budget:
                break
            if cell not in chosen:
                chosen.append(cell)
    chosen_set = set(chosen)
    stolen_count = 0
    for cache in placed:
        if cache["cell"] in chosen_set:
            cache["stolen"] = True
            stolen_count += 1

    # Recovery: retrieve each cache through memory, dig, and re-cache losses.
    recovered_value = 0.0
    corrections = 0
    for cache in placed:
        if step >= pilfer_step + env.recovery_horizon:
            break
        x, y = _cell_center(cache["cell"])
        query = Query(item_type=cache["type"], cue=encode_cue((x, y), landmarks))
        result = retrieve(store, query, landmarks)
        kappa["recovery_probes"] += float(result.probes_used)
        step_compute = float(result.probes_used)
        repair = 0.0
        if cache["stolen"]:
            corrections += 1
            repair = 1.0
            step_compute += 1.0
            kappa["corrections"] += 1.0
        else:
            ok = (
                result.decoded_location is not None
                and abs(result.decoded_location[0] - x) <= env.dig_radius
                and abs(result.decoded_location[1] - y) <= env.dig_radius
            )
            if ok:
                recovered_value += cache["value"]
        accrue(ledger, StepCosts(repair=repair, compute=step_compute))
        step += 1

    total_value = float(sum(c["value"] for c in placed)) if placed else 1.0
    recovered_fraction = recovered_value / total_value if total_value else 0.0

    final_step = step + env.monitor_delay
    zone_truth = {"in_zone": any(_in_zone(c["cell"], env.forbidden_zone) for c in placed)}
    goal_truth = {"recovered_ok": recovered_fraction >= env.recovered_target}
    if in_loop:
        signals.append(evaluate(zone_spec, TraceSegment(0, step), zone_truth, streams.verifier, PREDICATES))
        signals.append(evaluate(goal_spec, TraceSegment(0, step), goal_truth, streams.verifier, PREDICATES))
    else:
        pending.append((zone_spec, (0, step), zone_truth))
        pending.append((goal_spec, (0, step), goal_truth))
    for spec, seg, t in pending:
        signals.append(
            evaluate(spec, TraceSegment(*seg), t, streams.verifier, PREDICATES,
                     emitted_at=final_step)
        )

    accrue(ledger, StepCosts(task=max(0.0, 1.0 - recovered_fraction)))

    monitor_signals = [s for s in signals if s.predicate_id == "cache_while_observed"]
    vmetrics = score_verifier(monitor_signals, deadline=pilfer_step)

    goal_signals = [s for s in signals if s.predicate_id == "recovered_target"]
    record = RunRecord(family="C", variant="", seed=seed, status=STATUS_COMPLETED)
    record.goal_verdict = int(all(s.verdict for s in goal_signals)) if goal_signals else 0
    record.metrics = {
        "recovered_value": recovered_value,
        "recovered_fraction": recovered_fraction,
        "leakage": leakage,
        "verifier_miss_rate": vmetrics.miss_rate,
        "violations": float(violations),
        "decoys_used": float(decoys_used),
        "recache_moves": float(recache_moves),
        "caches_pilfered": float(stolen_count),
        "post_hoc_corrections": float(corrections),
        "zone_breaches": float(zone_truth["in_zone"]),
        "belief_mismatch": belief_mismatch,
    }
    record.kappa_by_source = dict(kappa)
    record.signals = [s.to_json_obj() for s in signals]
    record.observer_grid = adversary.dump_row_major()
    return finish_record(record, ledger)
