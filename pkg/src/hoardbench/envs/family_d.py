"""Family D: role-differentiated plan verification.

A universe of boolean constraints over short symbol plans is sampled from
four templates (forbidden symbol, required symbol, forbidden adjacent pair,
positional parity ban) and reduced until a witness plan satisfying all of it
exists, so every instance is solvable in principle.

Roles sample partial knowledge of the universe. The proposer hill-climbs a
plan against what it knows; the executor vetoes plans violating its own
sample; the checker evaluates its coverage set through noisy verifiers.
Rejections trigger repair rounds in which the violated constraint ids are
disclosed to the proposer. In differentiated mode each role draws an
independent sample; in single-agent mode one shared sample plays every role,
so the roles share every blind spot.

After release, an adversary probes random constraints. A silent failure is a
released violation nobody in the pipeline caught that the adversary then
finds. Correlated error is the fraction of the universe invisible to both
the proposer's and the checker's original samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from ..core.state import (
    Action,
    ConfigurationError,
    Observation,
    OptionChoice,
    OptionKind,
    Trace,
    TraceRecord,
    TraceSegment,
)
from ..ledger import CostLedger, StepCosts, accrue
from ..rng import RunStreams, Substream
from ..verifier import (
    Placement,
    VerifierKind,
    VerifierPipeline,
    VerifierSpec,
    evaluate,
    schedule,
)
from .records import RunRecord, STATUS_COMPLETED, finish_record

HILLCLIMB_ITERATIONS = 200
WITNESS_ITERATIONS = 2000
MAX_REPAIR_ROUNDS = 5


class RoleMode(str, Enum):
    SINGLE_AGENT = "single_agent"
    DIFFERENTIATED = "differentiated"


@dataclass(frozen=True)
class Constraint:
    """One boolean predicate over plans."""

    cid: int
    kind: str  # forbid_symbol | require_symbol | forbid_adjacent | parity_ban
    a: int
    b: int = 0

    def satisfied(self, plan: tuple[int, ...]) -> bool:
        if self.kind == "forbid_symbol":
            return self.a not in plan
        if self.kind == "require_symbol":
            return self.a in plan
        if self.kind == "forbid_adjacent":
            return all(
                not (plan[i] == self.a and plan[i + 1] == self.b)
                for i in range(len(plan) - 1)
            )
        if self.kind == "parity_ban":
            return all(plan[i] != self.a for i in range(self.b, len(plan), 2))
        raise ConfigurationError(f"unknown constraint kind {self.kind!r}")


@dataclass(frozen=True)
class FamilyDConfig:
    n_constraints: int = 40
    plan_length: int = 12
    alphabet_size: int = 6
    coverage: float | None = None  # checker coverage fraction; None -> knowledge_fraction
    knowledge_fraction: float = 0.6
    adversary_probes: int = 20

    def __post_init__(self):
        if self.n_constraints < 1 or self.plan_length < 2 or self.alphabet_size < 2:
            raise ConfigurationError("degenerate universe configuration")
        if not (0.0 < self.knowledge_fraction <= 1.0):
            raise ConfigurationError("knowledge_fraction must lie in (0, 1]")
        if self.coverage is not None and not (0.0 <= self.coverage <= 1.0):
            raise ConfigurationError("coverage must lie in [0, 1]")
        if self.adversary_probes < 0:
            raise ConfigurationError("adversary_probes must be >= 0")


def _sample_universe(config: FamilyDConfig, stream: Substream) -> list[Constraint]:
    """Draw constraints, steering clear of direct contradictions."""
    alphabet = config.alphabet_size
    required: set[int] = set()
    forbidden: set[int] = set()
    out: list[Constraint] = []
    kinds = stream.integers(0, 4, size=config.n_constraints * 3)
    symbols = stream.integers(0, alphabet, size=config.n_constraints * 6)
    ki = si = 0
    while len(out) < config.n_constraints and ki < len(kinds):
        kind = int(kinds[ki]); ki += 1
        s = int(symbols[si % len(symbols)]); si += 1
        t = int(symbols[si % len(symbols)]); si += 1
        cid = len(out)
        if kind == 0 and s not in required and len(forbidden) < alphabet - 2:
            forbidden.add(s)
            out.append(Constraint(cid, "forbid_symbol", s))
        elif kind == 1 and s not in forbidden and len(required) < config.plan_length // 2:
            required.add(s)
            out.append(Constraint(cid, "require_symbol", s))
        elif kind == 2:
            out.append(Constraint(cid, "forbid_adjacent", s, t))
        elif kind == 3:
            out.append(Constraint(cid, "parity_ban", s, t % 2))
        # Skipped draws fall through; the oversized kind/symbol pools make
        # running dry effectively impossible.
    while len(out) < config.n_constraints:
        s = int(symbols[si % len(symbols)]); si += 1
        t = int(symbols[si % len(symbols)]); si += 1
        out.append(Constraint(len(out), "forbid_adjacent", s, t))
    return out


def _violations(plan: tuple[int, ...], constraints: list[Constraint]) -> list[int]:
    return [c.cid for c in constraints if not c.satisfied(plan)]


def _hill_climb(
    plan: tuple[int, ...],
    known: list[Constraint],
    alphabet: int,
    stream: Substream,
    iterations: int,
) -> tuple[tuple[int, ...], int]:
    """Greedy single-symbol mutation accepting non-worsening moves.

    Returns the plan and the number of plan evaluations (compute burden).
    """
    positions = stream.integers(0, len(plan), size=iterations)
    symbols = stream.integers(0, alphabet, size=iterations)
    current = list(plan)
    current_bad = len(_violations(tuple(current), known))
    evals = 1
    for pos, sym in zip(positions, symbols):
        if current_bad == 0:
            break
        trial = list(current)
        trial[int(pos)] = int(sym)
        bad = len(_violations(tuple(trial), known))
        evals += 1
        if bad <= current_bad:
            current, current_bad = trial, bad
    return tuple(current), evals


def _sample_known(
    universe: list[Constraint], fraction: float, stream: Substream
) -> set[int]:
    k = int(round(fraction * len(universe)))
    k = max(0, min(len(universe), k))
    if k == len(universe):
        return {c.cid for c in universe}
    picked = stream.choice(len(universe), size=k, replace=False)
    return {universe[int(i)].cid for i in picked}


def run_family_d(
    env: FamilyDConfig,
    mode: RoleMode | str,
    ledger: CostLedger,
    seed: int,
    verifier_fp: float = 0.0,
    verifier_fn: float = 0.0,
    placement: Placement | str = Placement.IN_LOOP,
    trace: Trace | None = None,
) -> RunRecord:
    mode = RoleMode(mode)
    streams = RunStreams(seed)
    universe = _sample_universe(env, streams.env)
    by_id = {c.cid: c for c in universe}

    # Guarantee satisfiability: find a witness with full knowledge, dropping
    # constraints the search cannot reconcile (deterministic, rarely needed).
    witness = tuple(int(v) for v in streams.env.integers(0, env.alphabet_size, size=env.plan_length))
    witness, _ = _hill_climb(witness, universe, env.alphabet_size, streams.env, WITNESS_ITERATIONS)
    dropped = set(_violations(witness, universe))
    if dropped:
        universe = [c for c in universe if c.cid not in dropped]
        by_id = {c.cid: c for c in universe}
    n = len(universe)

    kf = env.knowledge_fraction
    coverage_fraction = env.coverage if env.coverage is not None else kf
    if mode is RoleMode.SINGLE_AGENT:
        shared = _sample_known(universe, kf, streams.agent)
        k_proposer = set(shared)
        k_executor = set(shared)
        k_checker = set(shared)
    else:
        k_proposer = _sample_known(universe, kf, streams.agent)
        k_executor = _sample_known(universe, kf, streams.agent)
        k_checker = _sample_known(universe, kf, streams.agent)
    if env.coverage is not None:
        checker_coverage = _sample_known(universe, coverage_fraction, streams.agent)
    else:
        checker_coverage = set(k_checker)

    registry = {
        f"c{c.cid}": (lambda seg, truth, c=c: c.satisfied(truth["plan"]))
        for c in universe
    }
    registry["plan_satisfies_universe"] = lambda seg, truth: len(
        _violations(truth["plan"], truth["universe"])
    ) == 0
    goal_pipeline = schedule(
        VerifierPipeline(
            (VerifierSpec(VerifierKind.POSTCONDITION, "plan_satisfies_universe"),)
        ),
        placement,
    )

    proposer_known_ids = set(k_proposer)
    plan = tuple(int(v) for v in streams.agent.integers(0, env.alphabet_size, size=env.plan_length))
    signals = []
    repair_rounds = 0
    proposer_evals = 0
    executor_evals = 0
    checker_evals = 0
    round_no = 0
    caught_by_checker: set[int] = set()
    step = 0

    while True:
        known = [by_id[cid] for cid in sorted(proposer_known_ids)]
        plan, evals = _hill_climb(plan, known, env.alphabet_size, streams.agent, HILLCLIMB_ITERATIONS)
        proposer_evals += evals
        accrue(ledger, StepCosts(latency=1.0, compute=float(evals)))
        if trace is not None:
            trace.append(
                TraceRecord(
                    len(trace),
                    Observation({"round": float(round_no)}),
                    Action("plan", {k: float(v) for k, v in enumerate(plan)}),
                    OptionChoice(OptionKind.PROPOSE),
                    False,
                )
            )
        step += 1

        exec_bad = [cid for cid in sorted(k_executor) if not by_id[cid].satisfied(plan)]
        executor_evals += len(k_executor)
        accrue(ledger, StepCosts(compute=float(len(k_executor))))
        if exec_bad and round_no < MAX_REPAIR_ROUNDS:
            proposer_known_ids.update(exec_bad)
            repair_rounds += 1
            round_no += 1
            accrue(ledger, StepCosts(repair=1.0))
            continue

        checker_bad: list[int] = []
        truth = {"plan": plan, "universe": universe}
        for cid in sorted(checker_coverage):
            spec = VerifierSpec(
                VerifierKind.RUNTIME_MONITOR, f"c{cid}", verifier_fp, verifier_fn
            )
            sig = evaluate(spec, TraceSegment(step, step), truth, streams.verifier, registry)
            signals.append(sig)
            checker_evals += 1
            if sig.verdict is False:
                checker_bad.append(cid)
                if not sig.ground_truth_verdict:
                    caught_by_checker.add(cid)
        accrue(ledger, StepCosts(compute=float(len(checker_coverage))))
        step += 1
        if checker_bad and round_no < MAX_REPAIR_ROUNDS:
            proposer_known_ids.update(checker_bad)
            repair_rounds += 1
            round_no += 1
            accrue(ledger, StepCosts(repair=1.0))
            continue
        break

    # Release. The adversary probes a random subset of the universe.
    released_violations = set(_violations(plan, universe))
    probes = min(env.adversary_probes, n)
    if probes:
        probed = {
            universe[int(i)].cid
            for i in streams.adversary.choice(n, size=probes, replace=False)
        }
    else:
        probed = set()
    # Disclosed-in-repair constraints count as known: a knowingly released
    # violation is a deadline compromise, not a silent one.
    caught = released_violations & (proposer_known_ids | k_executor | caught_by_checker)
    uncaught = released_violations - caught
    adversary_findings = probed & released_violations
    silent_failure = int(bool(adversary_findings & uncaught))

    correlated_blind = [
        c.cid for c in universe if c.cid not in k_proposer and c.cid not in k_checker
    ]
    correlated_error_rate = len(correlated_blind) / n if n else 0.0

    goal_truth = {"plan": plan, "universe": universe}
    goal_sig = evaluate(
        goal_pipeline.specs[0], TraceSegment(0, step), goal_truth, streams.verifier,
        registry,
        emitted_at=step if goal_pipeline.placement is Placement.END_ONLY else None,
    )
    signals.append(goal_sig)

    accrue(ledger, StepCosts(task=float(len(released_violations))))

    record = RunRecord(family="D", variant="", seed=seed, status=STATUS_COMPLETED)
    record.goal_verdict = int(bool(goal_sig.verdict))
    record.metrics = {
        "silent_failure": float(silent_failure),
        "correlated_error_rate": correlated_error_rate,
        "released_violations": float(len(released_violations)),
        "uncaught_violations": float(len(uncaught)),
        "repair_rounds": float(repair_rounds),
        "universe_size": float(n),
        "adversary_findings": float(len(adversary_findings)),
    }
    record.kappa_by_source = {
        "proposer_evals": float(proposer_evals),
        "executor_evals": float(executor_evals),
        "checker_evals": float(checker_evals),
    }
    record.signals = [s.to_json_obj() for s in signals[-20:]]
    return finish_record(record, ledger)
