import pytest

from hoardbench.controller import double_integrator
from hoardbench.core.belief import Belief, BeliefConfig, initial_belief, update_belief
from hoardbench.core.state import (
    Action,
    EmbodiedState,
    InputError,
    LatentEvidence,
    NOOP,
    Observation,
    SchemaError,
)

KEYS = ("error", "error_rate")


def _config(**kw):
    defaults = dict(
        observation_keys=KEYS,
        latent_names=("compliance",),
        latent_prior_mean=(0.5,),
        latent_prior_variance=(1e12,),
        dynamics=double_integrator(0.05),
    )
    defaults.update(kw)
    return BeliefConfig(**defaults)


def _obs(e, v, evidence=()):
    return Observation({"error": e, "error_rate": v}, latent_evidence=evidence)


def test_buffer_law_length_is_min_t_d():
    cfg = _config(delay=3)
    belief = initial_belief(cfg, EmbodiedState((0.0,), (0.0,)))
    for t in range(1, 10):
        belief = update_belief(belief, _obs(float(t), 0.0), NOOP, cfg)
        assert len(belief.delayed_obs_buffer) == min(t, 3)


def test_queue_semantics_oldest_delivered():
    # Buffer [o1, o2], new o3 arrives with delay 2: o1 is delivered and the
    # buffer advances to [o2, o3].
    cfg = _config(delay=2)
    belief = initial_belief(cfg, EmbodiedState((0.0,), (0.0,)))
    o1, o2, o3 = _obs(1.0, 0.0), _obs(2.0, 0.0), _obs(3.0, 0.0)
    belief = update_belief(belief, o1, NOOP, cfg)
    belief = update_belief(belief, o2, NOOP, cfg)
    assert belief.delayed_obs_buffer == (o1, o2)
    belief = update_belief(belief, o3, NOOP, cfg)
    assert belief.delayed_obs_buffer == (o2, o3)
    # Delivered o1 plus forward simulation of logged (zero) actions.
    assert belief.delayed_embodied.position[0] == 1.0
    assert belief.reconstructed_embodied.position[0] == 1.0


def test_zero_delay_zero_noise_reconstruction_exact():
    cfg = _config(delay=0)
    dyn = double_integrator(0.05)
    belief = initial_belief(cfg, EmbodiedState((0.3,), (0.0,)))
    e, v = 0.3, 0.0
    for step in range(40):
        force = -1.2 * e - 0.8 * v
        e, v = dyn(e, v, force)
        belief = update_belief(
            belief, _obs(e, v), Action("force", {"force": force}), cfg
        )
        assert belief.reconstructed_embodied.position[0] == e
        assert belief.reconstructed_embodied.velocity[0] == v


def test_delayed_reconstruction_matches_truth_with_compensation():
    # With known dynamics and no noise, the compensated estimate equals the
    # true present state to 1e-9 despite the delay.
    cfg = _config(delay=4)
    dyn = double_integrator(0.05)
    belief = initial_belief(cfg, EmbodiedState((0.5,), (0.0,)))
    e, v = 0.5, 0.0
    for step in range(30):
        force = -2.0 * e - 1.0 * v
        e, v = dyn(e, v, force)
        belief = update_belief(
            belief, _obs(e, v), Action("force", {"force": force}), cfg
        )
        if step >= 4:
            assert belief.reconstructed_embodied.position[0] == pytest.approx(e, abs=1e-9)
            assert belief.reconstructed_embodied.velocity[0] == pytest.approx(v, abs=1e-9)


def test_one_noiseless_informative_observation_recovers_latent():
    # Oracle: weighted least squares with the prior as a pseudo-observation
    # of weight lambda/P0, solved in closed form.
    z_true = 0.73
    regressor = -0.38 * 0.72 * 0.72
    response = regressor * z_true
    prior_mean, prior_var, lam = 0.5, 1e12, 0.98
    oracle = (lam * prior_mean / prior_var + regressor * response) / (
        lam / prior_var + regressor * regressor
    )

    cfg = _config(delay=0)
    belief = initial_belief(cfg, EmbodiedState((0.0,), (0.0,)))
    evidence = (LatentEvidence("compliance", regressor, response),)
    belief = update_belief(belief, _obs(0.0, 0.0, evidence), NOOP, cfg)
    assert belief.latent_mean[0] == pytest.approx(oracle, abs=1e-12)
    assert belief.latent_mean[0] == pytest.approx(z_true, abs=1e-9)
    assert belief.latent_variance[0] < 1e12  # strictly tightened by the update


def test_latent_updates_only_on_informative_steps():
    cfg = _config(delay=0)
    belief = initial_belief(cfg, EmbodiedState((0.0,), (0.0,)))
    before = belief.latent_mean.copy()
    belief = update_belief(belief, _obs(0.2, 0.1), NOOP, cfg)
    assert belief.latent_mean[0] == before[0]
    assert belief.latent_variance[0] == 1e12


def test_adapt_latents_off_ignores_evidence():
    cfg = _config(delay=0, adapt_latents=False)
    belief = initial_belief(cfg, EmbodiedState((0.0,), (0.0,)))
    evidence = (LatentEvidence("compliance", 1.0, 0.9),)
    belief = update_belief(belief, _obs(0.0, 0.0, evidence), NOOP, cfg)
    assert belief.latent_mean[0] == 0.5


def test_schema_and_finite_errors():
    cfg = _config(delay=0)
    belief = initial_belief(cfg, EmbodiedState((0.0,), (0.0,)))
    with pytest.raises(SchemaError):
        update_belief(belief, Observation({"error": 0.0}), NOOP, cfg)
    with pytest.raises(InputError):
        update_belief(
            belief,
            Observation({"error": float("inf"), "error_rate": 0.0}),
            NOOP,
            cfg,
        )


def test_compensation_cost_reported():
    cfg = _config(delay=3)
    belief = initial_belief(cfg, EmbodiedState((0.0,), (0.0,)))
    for t in range(6):
        belief = update_belief(belief, _obs(0.0, 0.0), NOOP, cfg)
    assert belief.last_compute == 3
    cfg_off = _config(delay=3, compensate=False)
    belief = initial_belief(cfg_off, EmbodiedState((0.0,), (0.0,)))
    for t in range(6):
        belief = update_belief(belief, _obs(0.0, 0.0), NOOP, cfg_off)
    assert belief.last_compute == 0
