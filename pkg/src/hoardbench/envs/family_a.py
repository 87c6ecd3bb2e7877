"""Family A: hidden-dynamics control.

Per trial the environment draws a hidden compliance scalar z. The agent picks
a launch offset l in [0, 1] and a fixed impulse u; the support absorbs energy
quadratically in the offset, so realized takeoff speed is u * (1 - z * l**2)
and the landing error is the jump length minus the remaining gap
gap_scale * (1 - l). After landing, a double integrator governs the error
coordinate under delayed, noisy observation:

    e' = e + edot * dt
    edot' = edot + (a + w) * dt

with w a one-shot velocity perturbation when configured. Success means both
error tolerances held for `hold_steps` consecutive steps. Trials always run
the full horizon so that toggling controller components never changes the
environment stream's draw count.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..controller import ControllerConfig, double_integrator, open_loop_plan
from ..core.belief import Belief, BeliefConfig, initial_belief, update_belief
from ..core.policy import PolicyContext, StabilizingController, act, select_option
from ..core.state import (
    Action,
    AgentState,
    ConfigurationError,
    EmbodiedState,
    LatentEvidence,
    LatentParams,
    LatentSpec,
    Observation,
    OptionChoice,
    OptionKind,
    OPTION_MAX_STEPS,
    TaskState,
    Trace,
    TraceRecord,
    TraceSegment,
)
from ..ledger import CostLedger, StepCosts, accrue
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

INTERVENTION_EPS = 1e-12

OPTION_SCHEMA = {
    OptionKind.LAUNCH: ("offset", "impulse"),
    OptionKind.STABILIZE: (),
}

PREDICATES = {
    # Launch parameters inside their physical ranges.
    "launch_in_range": lambda seg, truth: bool(truth["launch_ok"]),
    # Final-goal predicate: the trial reached and held the tolerance window.
    "stabilized": lambda seg, truth: bool(truth["success"]),
}


@dataclass(frozen=True)
class FamilyAConfig:
    gap_scale: float = 1.0
    z_range: tuple[float, float] = (0.2, 0.8)
    obs_delay: int = 2
    obs_noise: float = 0.02
    perturb_step: int | None = None
    perturb_magnitude: float = 0.0
    trials: int = 1
    pos_tol: float = 0.02
    vel_tol: float = 0.1
    horizon: int = 240
    dt: float = 0.05
    impulse: float = 0.38
    hold_steps: int = 5
    launch_grid: int = 101
    z_drift: float = 0.0
    z_prior_mean: float = 0.5
    z_prior_variance: float = 1e12
    verifier_delay: int = 2
    verifier_fp: float = 0.0
    verifier_fn: float = 0.0

    def __post_init__(self):
        if self.pos_tol <= 0 or self.vel_tol <= 0:
            raise ConfigurationError("success tolerances must be positive")
        if self.obs_delay < 0:
            raise ConfigurationError("observation delay must be non-negative")
        if not (0.0 <= self.z_range[0] <= self.z_range[1] <= 1.0):
            raise ConfigurationError("z_range must be a subinterval of [0, 1]")
        if self.trials < 1 or self.horizon < 1:
            raise ConfigurationError("trials and horizon must be at least 1")
        if self.impulse < 0 or self.gap_scale <= 0 or self.dt <= 0:
            raise ConfigurationError("impulse, gap_scale, and dt must be positive")


def predicted_landing_error(config: FamilyAConfig, z_hat: float, offset: float) -> float:
    """Landing error the belief-mean dynamics predict for a launch offset."""
    speed = config.impulse * (1.0 - z_hat * offset * offset)
    return speed - config.gap_scale * (1.0 - offset)


class LaunchPlanner:
    """Scan a fixed offset grid and launch where predicted error is smallest."""

    def __init__(self, config: FamilyAConfig):
        self._config = config
        self.last_scan_cost = 0

    def select(self, belief: Belief, ctx: PolicyContext) -> OptionChoice:
        cfg = self._config
        z_hat = float(belief.latent_mean[0])
        best_offset, best_err = 0.0, float("inf")
        for i in range(cfg.launch_grid):
            offset = i / (cfg.launch_grid - 1)
            err = abs(predicted_landing_error(cfg, z_hat, offset))
            if err < best_err:
                best_offset, best_err = offset, err
        self.last_scan_cost = cfg.launch_grid
        return OptionChoice(
            OptionKind.LAUNCH, {"offset": best_offset, "impulse": cfg.impulse}
        )


def run_family_a(
    env: FamilyAConfig,
    agent: ControllerConfig,
    ledger: CostLedger,
    seed: int,
    placement: Placement | str = Placement.IN_LOOP,
    trace: Trace | None = None,
) -> RunRecord:
    streams = RunStreams(seed)
    dynamics = double_integrator(env.dt)
    belief_cfg = BeliefConfig(
        observation_keys=("error", "error_rate"),
        delay=env.obs_delay,
        compensate=agent.compensator_enabled,
        adapt_latents=agent.rls_enabled,
        latent_names=("compliance",),
        latent_prior_mean=(env.z_prior_mean,),
        latent_prior_variance=(env.z_prior_variance,),
        rls_forgetting=agent.forgetting,
        dynamics=dynamics,
    )
    pipeline = schedule(
        VerifierPipeline(
            (
                VerifierSpec(
                    VerifierKind.PRECONDITION, "launch_in_range", env.verifier_fp,
                    env.verifier_fn, 0,
                ),
                VerifierSpec(
                    VerifierKind.POSTCONDITION, "stabilized", env.verifier_fp,
                    env.verifier_fn, env.verifier_delay,
                ),
            )
        ),
        placement,
    )
    latent_spec = LatentSpec(("compliance",), (0.0,), (1.0,))
    task = TaskState(remaining_steps=env.trials * (env.horizon + 1))
    planner = LaunchPlanner(env)
    ctx = PolicyContext(
        rng=streams.agent,
        controller=agent,
        belief_config=belief_cfg,
        option_schema=OPTION_SCHEMA,
    )

    belief = initial_belief(belief_cfg, EmbodiedState((0.0,), (0.0,)))
    record = RunRecord(family="A", variant="", seed=seed, status=STATUS_COMPLETED)
    signals = []
    pending = []  # (spec, segment_bounds, truth, target) deferred to the end

    successes = 0
    stab_times: list[float] = []
    interventions = 0
    clamp_events = 0
    scan_kappa = 0.0
    comp_kappa = 0.0
    global_step = 0
    final_step = env.trials * (env.horizon + 1) - 1
    z = 0.0

    for trial in range(env.trials):
        if env.z_drift > 0.0 and trial > 0:
            z = min(env.z_range[1], max(env.z_range[0], z + env.z_drift * float(streams.env.normal())))
        else:
            z = float(streams.env.uniform(env.z_range[0], env.z_range[1]))
        truth_latent = LatentParams(latent_spec, (z,))

        # Launch: one macro-decision, then physics fixes the landing error.
        launch = select_option(planner, belief, ctx)
        scan_kappa += planner.last_scan_cost
        offset = launch.params["offset"]
        impulse = launch.params["impulse"]
        speed = impulse * (1.0 - truth_latent.get("compliance") * offset * offset)
        e = speed - env.gap_scale * (1.0 - offset)
        edot = 0.0
        launch_ok = 0.0 <= offset <= 1.0 and impulse >= 0.0

        trial_start = global_step
        e_pred = predicted_landing_error(env, float(belief.latent_mean[0]), offset)
        belief = initial_belief(belief_cfg, EmbodiedState((e_pred,), (0.0,)))

        # Landing measurement: noisy and, being a contact event, informative
        # about the hidden compliance.
        noise = streams.env.normal(0.0, 1.0, size=2)
        e_obs = e + env.obs_noise * float(noise[0])
        r_obs = edot + env.obs_noise * float(noise[1])
        evidence = LatentEvidence(
            "compliance",
            regressor=-(impulse * offset * offset),
            response=e_obs - (impulse - env.gap_scale * (1.0 - offset)),
        )
        landing_obs = Observation(
            {"error": e_obs, "error_rate": r_obs}, latent_evidence=(evidence,)
        )
        launch_action = Action("launch", {"offset": offset, "impulse": impulse})
        belief = update_belief(belief, landing_obs, launch_action, belief_cfg)
        comp_kappa += belief.last_compute
        task.tick()
        if trace is not None:
            trace.append(
                TraceRecord(global_step, landing_obs, launch_action, launch, False)
            )
        global_step += 1

        pre_seg = (trial_start, trial_start)
        pre_truth = {"launch_ok": launch_ok}
        if pipeline.placement is Placement.IN_LOOP:
            signals.append(_eval(pipeline.specs[0], pre_seg, pre_truth, streams, trace))
        else:
            pending.append((pipeline.specs[0], pre_seg, pre_truth))

        # Open-loop agents commit a correction schedule now and never revise.
        plan: list[float] = []
        if not agent.feedback_enabled:
            plan = open_loop_plan(
                env.dt, (e_pred, 0.0), (0.0, 0.0), env.pos_tol, env.vel_tol,
                agent.action_bound,
            )
        stabilizer = StabilizingController(plan)
        option = OptionChoice(OptionKind.STABILIZE)
        option_age = 0

        hold = 0
        first_hold_step = None
        perturbed = False
        agent_state = AgentState(
            EmbodiedState((e,), (edot,)), truth_latent, "", None, task
        )

        for step in range(1, env.horizon + 1):
            if option_age >= OPTION_MAX_STEPS:
                option = OptionChoice(OptionKind.STABILIZE)
                option_age = 0
            outcome = act(stabilizer, belief, None, option, ctx)
            force = outcome.action.params.get("force", 0.0)
            if outcome.clamped:
                clamp_events += 1
            if abs(force) > INTERVENTION_EPS:
                interventions += 1

            w = 0.0
            if env.perturb_step is not None and step == env.perturb_step:
                w = env.perturb_magnitude / env.dt
                perturbed = True
            e, edot_new = e + edot * env.dt, edot + (force + w) * env.dt
            edot = edot_new
            agent_state.embodied = EmbodiedState((e,), (edot,))

            noise = streams.env.normal(0.0, 1.0, size=2)
            obs = Observation(
                {
                    "error": e + env.obs_noise * float(noise[0]),
                    "error_rate": edot + env.obs_noise * float(noise[1]),
                }
            )
            belief = update_belief(belief, obs, outcome.action, belief_cfg)
            comp_kappa += belief.last_compute
            task.tick()
            if trace is not None:
                trace.append(
                    TraceRecord(global_step, obs, outcome.action, option, False)
                )
            global_step += 1
            option_age += 1

            if abs(e) < env.pos_tol and abs(edot) < env.vel_tol:
                hold += 1
            else:
                hold = 0
            if first_hold_step is None and hold >= env.hold_steps:
                first_hold_step = step

            accrue(
                ledger,
                StepCosts(
                    latency=0.0 if first_hold_step is not None else 1.0,
                    repair=abs(force) if perturbed else 0.0,
                    compute=float(belief.last_compute),
                ),
            )
            if ledger.exhausted:
                break

        # Success is terminal: the tolerance window must be held through the
        # end of the trial, so a late perturbation an agent cannot correct
        # turns the trial into a failure.
        success = hold >= env.hold_steps
        accrue(ledger, StepCosts(task=0.0 if success else 1.0, compute=env.launch_grid))
        successes += int(success)
        stab_times.append(float(first_hold_step if first_hold_step is not None else env.horizon))

        post_seg = (trial_start, global_step - 1)
        post_truth = {"success": success}
        if pipeline.placement is Placement.IN_LOOP:
            signals.append(_eval(pipeline.specs[1], post_seg, post_truth, streams, trace))
        else:
            pending.append((pipeline.specs[1], post_seg, post_truth))

        if ledger.exhausted:
            break

    for spec, seg, truth in pending:
        signals.append(_eval(spec, seg, truth, streams, trace, emitted_at=final_step))

    post_signals = [s for s in signals if s.predicate_id == "stabilized"]
    record.goal_verdict = int(all(s.verdict for s in post_signals)) if post_signals else 0
    record.metrics = {
        "success_rate": successes / env.trials,
        "time_to_stabilization": sum(stab_times) / len(stab_times) if stab_times else float(env.horizon),
        "intervention_count": float(interventions),
        "clamp_events": float(clamp_events),
        "trials": float(env.trials),
    }
    record.kappa_by_source = {"launch_scan": scan_kappa, "compensation": comp_kappa}
    record.signals = [s.to_json_obj() for s in signals]
    return finish_record(record, ledger)


def _eval(spec, seg_bounds, truth, streams: RunStreams, trace, emitted_at=None):
    segment = TraceSegment(seg_bounds[0], seg_bounds[1])
    return evaluate(
        spec, segment, truth, streams.verifier, PREDICATES, emitted_at=emitted_at
    )
