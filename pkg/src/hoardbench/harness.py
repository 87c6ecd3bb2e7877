"""Experiment orchestration: config parsing, ablation grids, seeded parallel
execution, and report emission.

A config names one benchmark family, an environment block, an agent block,
a list of single-switch ablations, a seed range, and the cost-ledger
weights. The grid is the baseline plus one variant per ablation, optionally
crossed with a sweep over one environment key, run over every seed. Results
are written as line-delimited JSON plus plot-ready CSV; all run output is
byte-deterministic for a fixed config, whatever the worker count.
"""

from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .controller import ControllerConfig
from .core.state import ConfigurationError, Trace
from .envs import (
    ENV_CONFIGS,
    AgentFlags,
    RunRecord,
    STATUS_FAILED,
    run_family_a,
    run_family_b,
    run_family_c,
    run_family_d,
)
from .ledger import CostLedger, aggregate, constraint_check
from .rng import Substream

WORST_RUNS_LISTED = 3

AGENT_DEFAULTS: dict[str, object] = {
    "feedback": True,
    "compensator": True,
    "rls": False,
    "kp": 3.0,
    "kd": 2.5,
    "action_bound": 10.0,
    "forgetting": 0.98,
    "memory_variant": "clustered",
    "observer_aware": True,
    "decoys": True,
    "verifier_placement": "in_loop",
    "mode": "differentiated",
    "checker_fp": 0.0,
    "checker_fn": 0.0,
}

LEDGER_DEFAULTS: dict[str, float] = {
    "lambda_latency": 0.01,
    "lambda_leak": 1.0,
    "lambda_repair": 0.1,
    "budget": 1e9,
    "delta": 0.1,
}

# Named single-switch ablations: which family they apply to and the exact
# agent key they flip.
ABLATIONS: dict[str, tuple[str, str, object]] = {
    "no_feedback": ("A", "feedback", False),
    "no_compensator": ("A", "compensator", False),
    "flat_archive": ("B", "memory_variant", "flat"),
    "no_observer_model": ("C", "observer_aware", False),
    "end_only_checking": ("C", "verifier_placement", "end_only"),
    "single_agent": ("D", "mode", "single_agent"),
}

_AGENT_CHOICES = {
    "memory_variant": {"flat", "clustered"},
    "verifier_placement": {"in_loop", "end_only"},
    "mode": {"single_agent", "differentiated"},
}

# Environment fields stored as tuples but written as JSON lists.
_TUPLE_FIELDS = {"z_range", "forbidden_zone"}


@dataclass(frozen=True)
class ExperimentConfig:
    family: str
    seed_start: int
    seed_stop: int  # inclusive
    env: object
    agent: dict
    ablations: tuple[str, ...]
    ledger: dict
    sweep_key: str | None
    sweep_values: tuple | None
    output_dir: str

    def seeds(self) -> range:
        return range(self.seed_start, self.seed_stop + 1)


def _fail(key: str, message: str) -> ConfigurationError:
    return ConfigurationError(f"config key {key!r}: {message}")


def _parse_seeds(value) -> tuple[int, int]:
    if isinstance(value, int):
        return value, value
    if isinstance(value, str) and ".." in value:
        a, _, b = value.partition("..")
        try:
            start, stop = int(a), int(b)
        except ValueError as exc:
            raise _fail("seeds", f"cannot parse {value!r} as 'a..b'") from exc
        if stop < start:
            raise _fail("seeds", "range end precedes start")
        return start, stop
    raise _fail("seeds", "expected an integer or an 'a..b' range string")


def _build_env(family: str, block: dict):
    cls = ENV_CONFIGS[family]
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in block.items():
        if key not in names:
            raise _fail(f"env.{key}", f"unknown key for family {family}")
        kwargs[key] = tuple(value) if key in _TUPLE_FIELDS and isinstance(value, list) else value
    try:
        return cls(**kwargs)
    except (ConfigurationError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"config key 'env': {exc}") from exc


def _build_agent(block: dict) -> dict:
    agent = dict(AGENT_DEFAULTS)
    for key, value in block.items():
        if key not in AGENT_DEFAULTS:
            raise _fail(f"agent.{key}", "unknown key")
        if key in _AGENT_CHOICES and value not in _AGENT_CHOICES[key]:
            raise _fail(f"agent.{key}", f"must be one of {sorted(_AGENT_CHOICES[key])}")
        default = AGENT_DEFAULTS[key]
        if isinstance(default, bool) and not isinstance(value, bool):
            raise _fail(f"agent.{key}", "expected a boolean")
        if isinstance(default, float) and not isinstance(value, (int, float)):
            raise _fail(f"agent.{key}", "expected a number")
        agent[key] = value
    return agent


def _build_ledger(block: dict) -> dict:
    out = dict(LEDGER_DEFAULTS)
    for key, value in block.items():
        if key not in LEDGER_DEFAULTS:
            raise _fail(f"ledger.{key}", "unknown key")
        if not isinstance(value, (int, float)):
            raise _fail(f"ledger.{key}", "expected a number")
        out[key] = float(value)
    CostLedger(**out)  # range validation
    return out


_TOP_LEVEL_KEYS = {
    "family", "seeds", "env", "agent", "ablations", "ledger", "sweep",
    "output_dir", "version",
}


def parse_config(document: str) -> ExperimentConfig:
    """Parse, validate, and default-resolve a JSON experiment document."""
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not well-formed JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    for key in raw:
        if key not in _TOP_LEVEL_KEYS:
            raise _fail(key, "unknown top-level key")

    family = raw.get("family")
    if family not in ENV_CONFIGS:
        raise _fail("family", f"must be one of {sorted(ENV_CONFIGS)}")
    seed_start, seed_stop = _parse_seeds(raw.get("seeds", "0..0"))
    env = _build_env(family, raw.get("env", {}))
    agent = _build_agent(raw.get("agent", {}))
    ledger = _build_ledger(raw.get("ledger", {}))

    ablations = raw.get("ablations", [])
    if not isinstance(ablations, list):
        raise _fail("ablations", "expected a list of ablation names")
    for name in ablations:
        if name not in ABLATIONS:
            raise _fail(f"ablations.{name}", f"unknown ablation; known: {sorted(ABLATIONS)}")
        fam, _, _ = ABLATIONS[name]
        if fam != family:
            raise _fail(
                f"ablations.{name}",
                f"only applicable to family {fam}, not {family} (compatibility table)",
            )

    sweep_key = None
    sweep_values = None
    if "sweep" in raw:
        sweep = raw["sweep"]
        if not isinstance(sweep, dict) or set(sweep) != {"key", "values"}:
            raise _fail("sweep", "expected an object with exactly 'key' and 'values'")
        sweep_key = sweep["key"]
        names = {f.name for f in dataclasses.fields(ENV_CONFIGS[family])}
        if sweep_key not in names:
            raise _fail("sweep.key", f"not an env key of family {family}")
        if not isinstance(sweep["values"], list) or not sweep["values"]:
            raise _fail("sweep.values", "expected a non-empty list")
        sweep_values = tuple(sweep["values"])
        for v in sweep_values:
            _build_env(family, {**raw.get("env", {}), sweep_key: v})

    output_dir = raw.get("output_dir", "results")
    if not isinstance(output_dir, str):
        raise _fail("output_dir", "expected a string path")

    return ExperimentConfig(
        family=family,
        seed_start=seed_start,
        seed_stop=seed_stop,
        env=env,
        agent=agent,
        ablations=tuple(ablations),
        ledger=ledger,
        sweep_key=sweep_key,
        sweep_values=sweep_values,
        output_dir=output_dir,
    )


def resolved_document(config: ExperimentConfig) -> dict:
    """Fully resolved echo of a config; parse(echo(c)) round-trips to c."""
    env = dataclasses.asdict(config.env)
    for key in list(env):
        if isinstance(env[key], tuple):
            env[key] = list(env[key])
    doc = {
        "family": config.family,
        "seeds": f"{config.seed_start}..{config.seed_stop}",
        "env": env,
        "agent": dict(config.agent),
        "ablations": list(config.ablations),
        "ledger": dict(config.ledger),
        "output_dir": config.output_dir,
        "version": __version__,
    }
    if config.sweep_key is not None:
        doc["sweep"] = {"key": config.sweep_key, "values": list(config.sweep_values)}
    return doc


# ---------------------------------------------------------------------------
# Grid execution
# ---------------------------------------------------------------------------


def variant_agents(config: ExperimentConfig) -> list[tuple[str, dict]]:
    """Baseline plus one single-switch variant per configured ablation."""
    out = [("baseline", dict(config.agent))]
    for name in config.ablations:
        _, key, value = ABLATIONS[name]
        patched = dict(config.agent)
        patched[key] = value
        out.append((name, patched))
    return out


def _variant_label(name: str, sweep_key: str | None, sweep_value) -> str:
    if sweep_key is None:
        return name
    return f"{name}@{sweep_key}={sweep_value}"


@dataclass
class CellResult:
    variant: str
    seed: int
    record: RunRecord


@dataclass
class ResultSet:
    config: ExperimentConfig
    cells: list[CellResult] = field(default_factory=list)
    wallclock: dict[str, float] = field(default_factory=dict)

    def by_variant(self) -> dict[str, list[RunRecord]]:
        out: dict[str, list[RunRecord]] = {}
        for cell in self.cells:
            out.setdefault(cell.variant, []).append(cell.record)
        return out

    def any_failed(self) -> bool:
        return any(c.record.status == STATUS_FAILED for c in self.cells)


def run_one(
    config: ExperimentConfig,
    agent: dict,
    seed: int,
    sweep_value=None,
    trace: Trace | None = None,
) -> RunRecord:
    """Execute a single cell with a fresh ledger and stream bundle."""
    env = config.env
    if config.sweep_key is not None and sweep_value is not None:
        env = dataclasses.replace(env, **{config.sweep_key: sweep_value})
    ledger = CostLedger(**config.ledger)
    placement = agent["verifier_placement"]
    if config.family == "A":
        controller = ControllerConfig(
            feedback_enabled=bool(agent["feedback"]),
            compensator_enabled=bool(agent["compensator"]),
            rls_enabled=bool(agent["rls"]),
            kp=float(agent["kp"]),
            kd=float(agent["kd"]),
            action_bound=float(agent["action_bound"]),
            forgetting=float(agent["forgetting"]),
        )
        return run_family_a(env, controller, ledger, seed, placement, trace)
    if config.family == "B":
        return run_family_b(env, agent["memory_variant"], ledger, seed, placement, trace)
    if config.family == "C":
        flags = AgentFlags(bool(agent["observer_aware"]), bool(agent["decoys"]))
        return run_family_c(env, flags, ledger, seed, placement, trace)
    if config.family == "D":
        return run_family_d(
            env, agent["mode"], ledger, seed,
            verifier_fp=float(agent["checker_fp"]),
            verifier_fn=float(agent["checker_fn"]),
            placement=placement,
            trace=trace,
        )
    raise ConfigurationError(f"unknown family {config.family!r}")


def _run_cell(payload: tuple[str, str, dict, object, int]) -> str:
    """Worker entry point: returns the finished record as a JSON line."""
    document, variant, agent, sweep_value, seed = payload
    config = parse_config(document)
    label = _variant_label(variant, config.sweep_key, sweep_value)
    try:
        record = run_one(config, agent, seed, sweep_value)
        record.variant = label
    except Exception as exc:  # worker failures become Failed cells, never drops
        record = RunRecord(
            family=config.family, variant=label, seed=seed,
            status=STATUS_FAILED, error=f"{type(exc).__name__}: {exc}",
        )
    return record.to_json_line()


def run_grid(config: ExperimentConfig, jobs: int = 1) -> ResultSet:
    """Run baseline and ablation variants over the full seed range.

    Cells are independent; results are ordered by (variant, sweep value,
    seed) regardless of completion order, so worker count never changes the
    output bytes.
    """
    document = json.dumps(resolved_document(config))
    sweep_values = config.sweep_values if config.sweep_key is not None else (None,)
    payloads = []
    labels = []
    for variant, agent in variant_agents(config):
        for sweep_value in sweep_values:
            for seed in config.seeds():
                payloads.append((document, variant, agent, sweep_value, seed))
                labels.append(_variant_label(variant, config.sweep_key, sweep_value))

    started = time.monotonic()
    if jobs <= 1:
        lines = [_run_cell(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            lines = list(pool.map(_run_cell, payloads, chunksize=4))
    elapsed = time.monotonic() - started

    result = ResultSet(config=config)
    for (_, variant, _, sweep_value, seed), line in zip(payloads, lines):
        record = RunRecord.from_json_obj(json.loads(line))
        label = _variant_label(variant, config.sweep_key, sweep_value)
        result.cells.append(CellResult(label, seed, record))
    result.wallclock = {"total_seconds": elapsed, "jobs": float(jobs)}
    return result


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

SUMMARY_COLUMNS = (
    "metric", "mean", "median", "p95", "ci_lo", "ci_hi", "n_seeds",
    "effect_size_vs_baseline",
)


def _numeric_metrics(records: list[RunRecord]) -> list[str]:
    names: set[str] = {"objective", "goal_verdict"}
    for r in records:
        names.update(r.metrics)
        names.update(r.costs)
    return sorted(names)


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def write_report(result: ResultSet, output_dir: str | Path) -> Path:
    """Emit the full report bundle into `output_dir`.

    Files: resolved_config.json, runs.jsonl, summary.csv,
    constraint_report.json, failures.md, traces/ for the listed failures,
    and timing.json (the only file allowed to differ between identical
    runs).
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = result.config

    (out / "resolved_config.json").write_text(
        json.dumps(resolved_document(config), indent=2, sort_keys=True) + "\n"
    )

    ordered = sorted(
        result.cells,
        key=lambda c: (_variant_order(config).index(c.variant), c.seed),
    )
    with open(out / "runs.jsonl", "w") as fh:
        for cell in ordered:
            fh.write(cell.record.to_json_line() + "\n")

    by_variant = {}
    for cell in ordered:
        by_variant.setdefault(cell.variant, []).append(cell.record)
    baseline_key = _variant_order(config)[0].split("@")[0]

    rows = []
    for variant, records in by_variant.items():
        completed = [r for r in records if r.status != STATUS_FAILED]
        if len(completed) < 2:
            continue
        base_label = variant.replace(variant.split("@")[0], baseline_key, 1)
        baseline = by_variant.get(base_label) if variant != base_label else None
        for metric in _numeric_metrics(completed):
            values = [_metric_or_nan(r, metric) for r in completed]
            values = [v for v in values if v == v]
            if len(values) < 2:
                continue
            base_values = None
            if baseline is not None:
                base_values = [
                    _metric_or_nan(r, metric)
                    for r in baseline
                    if r.status != STATUS_FAILED
                ]
                base_values = [v for v in base_values if v == v] or None
            stream = Substream(config.seed_start, "bootstrap")
            summary = aggregate(values, metric, stream, base_values)
            effect = summary.effect_size_vs_baseline
            rows.append(
                (
                    f"{variant}/{metric}",
                    _fmt(summary.mean),
                    _fmt(summary.median),
                    _fmt(summary.p95),
                    _fmt(summary.ci_low),
                    _fmt(summary.ci_high),
                    str(summary.n_seeds),
                    "" if effect is None else _fmt(effect),
                )
            )
    with open(out / "summary.csv", "w") as fh:
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")

    constraint = {}
    for variant, records in by_variant.items():
        completed = [r for r in records if r.status != STATUS_FAILED]
        if not completed:
            constraint[variant] = {"error": "no completed runs"}
            continue
        report = constraint_check(
            [r.goal_verdict for r in completed], config.ledger["delta"]
        )
        constraint[variant] = report.to_json_obj()
    (out / "constraint_report.json").write_text(
        json.dumps(constraint, indent=2, sort_keys=True) + "\n"
    )

    _write_failures(result, by_variant, out)

    (out / "timing.json").write_text(
        json.dumps(result.wallclock, indent=2, sort_keys=True) + "\n"
    )
    return out


def _metric_or_nan(record: RunRecord, metric: str) -> float:
    try:
        return record.value(metric)
    except KeyError:
        return float("nan")


def _variant_order(config: ExperimentConfig) -> list[str]:
    sweep_values = config.sweep_values if config.sweep_key is not None else (None,)
    order = []
    for variant, _ in variant_agents(config):
        for sweep_value in sweep_values:
            order.append(_variant_label(variant, config.sweep_key, sweep_value))
    return order


def _write_failures(result: ResultSet, by_variant: dict, out: Path) -> None:
    """List the worst completed runs per variant and re-run them with trace
    recording on (determinism makes the replay exact)."""
    config = result.config
    lines = ["# Representative failures", ""]
    trace_dir = out / "traces"
    agents = dict(variant_agents(config))
    for variant, records in by_variant.items():
        completed = [r for r in records if r.status != STATUS_FAILED]
        worst = sorted(completed, key=lambda r: (-r.objective, r.seed))[:WORST_RUNS_LISTED]
        lines.append(f"## {variant}")
        if len(completed) < len(records):
            lines.append(
                f"({len(records) - len(completed)} failed cells; "
                "aggregate is low-confidence)"
            )
        if not worst:
            lines.append("(no completed runs)")
            lines.append("")
            continue
        base_name = variant.split("@")[0]
        sweep_value = None
        if "@" in variant:
            raw_value = variant.split("=", 1)[1]
            sweep_value = _coerce_sweep_value(config, raw_value)
        for record in worst:
            trace = Trace()
            try:
                run_one(config, agents[base_name], record.seed, sweep_value, trace)
                rel = Path("traces") / _safe(variant) / f"seed_{record.seed}.jsonl"
                path = trace_dir / _safe(variant) / f"seed_{record.seed}.jsonl"
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(trace.to_jsonl())
                where = str(rel)
            except Exception as exc:  # trace replay must never sink the report
                where = f"(trace replay failed: {exc})"
            lines.append(
                f"- seed {record.seed}: objective {record.objective:.6g}, "
                f"status {record.status}, trace: {where}"
            )
        lines.append("")
    (out / "failures.md").write_text("\n".join(lines) + "\n")


def _coerce_sweep_value(config: ExperimentConfig, raw: str):
    for v in config.sweep_values or ():
        if str(v) == raw:
            return v
    return raw


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


def load_result_set(directory: str | Path) -> ResultSet:
    """Rebuild a ResultSet from a results directory (for re-reporting)."""
    directory = Path(directory)
    config = parse_config((directory / "resolved_config.json").read_text())
    result = ResultSet(config=config)
    with open(directory / "runs.jsonl") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = RunRecord.from_json_obj(json.loads(line))
            result.cells.append(CellResult(record.variant, record.seed, record))
    return result
