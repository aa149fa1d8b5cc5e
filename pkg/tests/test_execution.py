import math

import numpy as np
import pytest

from plumeseek.belief import FilterConfig, ParticleSet, init_particles, sis_update
from plumeseek.env import AgentState, CompositeState, Scenario, move
from plumeseek.errors import ParameterError, TrainingError
from plumeseek.execution import (
    FEATURE_DIM,
    PlannerConfig,
    TrainingSchedule,
    Transition,
    ValueFunction,
    act_pfrl,
    belief_features,
    dcee_action,
    entrotaxis_action,
    infotaxis_action,
    plan_att_pfp,
    predictive_entropy,
    random_action,
    spiral_action,
    td_target,
    td_update,
    train_pfrl,
)
from plumeseek.plume import Observation, SourceParams, concentration_array, sense

PRIOR_BOX = np.array([[5, 20], [10, 20], [10, 3000], [0, 6], [0, 6], [1e-3, 8], [1, 5]], dtype=float)
BASE = np.array([12.0, 15.0, 500.0, 0.0, 0.0, 4.0, 2.0])


def make_state(theta, weights=None, pos=(10.0, 10.0), cfg=FilterConfig()):
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    n = len(theta)
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    ps = ParticleSet(theta=theta, weights=w, prior=PRIOR_BOX.copy())
    return CompositeState(ps, Observation(pos, 1.0, 0), AgentState(pos), np.random.default_rng(0), None, cfg)


def at(x, y, **kw):
    t = BASE.copy()
    t[0], t[1] = x, y
    for k, v in kw.items():
        t[["x_s", "y_s", "q_s", "u_x", "u_y", "lam", "psi"].index(k)] = v
    return t


def observed_state(seed, n=400, steps=4):
    rng = np.random.default_rng(seed)
    cfg = FilterConfig(particle_count=n)
    truth = SourceParams(*rng.uniform(PRIOR_BOX[:, 0], PRIOR_BOX[:, 1]))
    ps = init_particles(PRIOR_BOX, n, rng)
    pos = tuple(rng.uniform(0, 10, 2))
    for k in range(steps):
        ps = sis_update(ps, sense(truth, rng.uniform(0, 20, 2), 0.5, 0.4, rng, k), cfg)
    return CompositeState(ps, Observation(pos, 2.0, steps), AgentState(pos, steps, steps), rng, None, cfg)


# ---- expected-entropy planner


def test_collapsed_belief_north_goes_north():
    st = make_state(np.tile(at(10.0, 14.0), (20, 1)), pos=(10.0, 10.0))
    assert plan_att_pfp(st, PlannerConfig(), np.random.default_rng(0)) == 2
    assert infotaxis_action(st, PlannerConfig(), np.random.default_rng(0)) == 2


def test_symmetric_belief_ties_to_index_zero():
    # four hypotheses placed symmetrically around the agent, no wind
    theta = [at(14, 10), at(10, 14), at(6, 10), at(10, 6)]
    st = make_state(theta, pos=(10.0, 10.0))
    for planner in (plan_att_pfp, infotaxis_action):
        assert planner(st, PlannerConfig(n_predictive_samples=4), np.random.default_rng(0)) == 0


def test_attention_toggle_identity_on_uniform_weights():
    for seed in range(5):
        st = observed_state(seed)
        uniform = make_state(st.belief.theta, pos=st.agent.position)
        a = plan_att_pfp(uniform, PlannerConfig(attention_enabled=True), np.random.default_rng(seed))
        b = plan_att_pfp(uniform, PlannerConfig(attention_enabled=False), np.random.default_rng(seed))
        assert a == b


@pytest.mark.parametrize("seed", range(8))
def test_infotaxis_is_pfp_without_attention(seed):
    st = observed_state(seed)
    a = plan_att_pfp(st, PlannerConfig(horizon=1, attention_enabled=False), np.random.default_rng(seed))
    b = infotaxis_action(st, PlannerConfig(horizon=3, attention_enabled=True), np.random.default_rng(seed))
    assert a == b


@pytest.mark.parametrize("planner", [plan_att_pfp, infotaxis_action, entrotaxis_action, dcee_action])
def test_planners_permutation_invariant(planner):
    for seed in range(4):
        st = observed_state(seed)
        perm = np.random.default_rng(99).permutation(st.belief.n)
        shuffled = make_state(st.belief.theta[perm], st.belief.weights[perm], pos=st.agent.position)
        base = make_state(st.belief.theta, st.belief.weights, pos=st.agent.position)
        assert planner(base, PlannerConfig(), np.random.default_rng(seed)) == planner(
            shuffled, PlannerConfig(), np.random.default_rng(seed)
        )


def test_planners_deterministic():
    st = observed_state(3)
    for planner in (plan_att_pfp, infotaxis_action, entrotaxis_action, dcee_action):
        acts = {planner(st, PlannerConfig(), np.random.default_rng(7)) for _ in range(3)}
        assert len(acts) == 1 and 0 <= acts.pop() < 8


def test_longer_horizon_runs():
    st = observed_state(1, n=200)
    a = plan_att_pfp(st, PlannerConfig(horizon=2, n_predictive_samples=8), np.random.default_rng(0))
    assert 0 <= a < 8


def test_planner_config_validation():
    with pytest.raises(ParameterError):
        PlannerConfig(horizon=0)
    with pytest.raises(ParameterError):
        PlannerConfig(n_predictive_samples=0)


# ---- entrotaxis


def test_predictive_entropy_single_component():
    s = 0.5
    assert predictive_entropy([3.0], s) == pytest.approx(0.5 * math.log(2 * math.pi * math.e * s * s), rel=1e-10)
    assert predictive_entropy([3.0, 3.0, 3.0], s) == pytest.approx(predictive_entropy([1.0], s), rel=1e-10)


def test_predictive_entropy_grows_with_separation():
    vals = [predictive_entropy([0.0, d], 0.5) for d in (0.0, 0.5, 1.0, 2.0, 5.0)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    # well-separated equal mixture adds log 2 nats
    assert vals[-1] == pytest.approx(predictive_entropy([0.0], 0.5) + math.log(2), abs=1e-3)


def test_entrotaxis_degenerate_belief_ties_to_zero():
    st = make_state(np.tile(at(15.0, 17.0), (10, 1)))
    assert entrotaxis_action(st, PlannerConfig(), np.random.default_rng(0)) == 0


def test_entrotaxis_picks_discriminating_move():
    a, b = at(14.0, 13.0, q_s=2000.0), at(14.0, 7.0, q_s=2000.0)
    st = make_state([a, b], pos=(10.0, 10.0))
    # equal two-component mixture: entropy is monotone in the gap between predictions
    gaps = []
    for k in range(8):
        x, y = move((10.0, 10.0), k)
        gaps.append(abs(concentration_array(a, x, y) - concentration_array(b, x, y)))
    expected = int(np.argmax(gaps))
    assert entrotaxis_action(st, PlannerConfig(), np.random.default_rng(0)) == expected
    assert expected in (1, 2, 3)  # moves toward the northern hypothesis separate them


# ---- DCEE


def test_dcee_zero_uncertainty_is_greedy():
    st = make_state(np.tile(at(16.0, 10.0), (10, 1)), pos=(10.0, 10.0))
    assert dcee_action(st, PlannerConfig(kappa=1.0), np.random.default_rng(0)) == 0
    st = make_state(np.tile(at(4.0, 4.0), (10, 1)), pos=(10.0, 10.0))
    assert dcee_action(st, PlannerConfig(kappa=1.0), np.random.default_rng(0)) == 5


def test_dcee_kappa_zero_is_distance_argmin():
    for seed in range(4):
        st = observed_state(seed)
        est = st.belief.weights @ st.belief.theta[:, :2]
        d = [np.sum((np.array(move(st.agent.position, k)) - est) ** 2) for k in range(8)]
        assert dcee_action(st, PlannerConfig(kappa=0.0), np.random.default_rng(seed)) == int(np.argmin(d))


def test_dcee_exploration_flips_greedy_choice():
    # hypotheses north-east and south-east of the agent; the estimate lies due east
    # where both predict the same reading, so east gains nothing.
    # kappa = 0: east (distance^2 = 9, vs 11.3 for NE/SE).
    # kappa = 10: east keeps tr(Sigma) = 4 -> 9 + 40; NE separates the two atoms
    # (gap 9.29 vs 6.43, noise sd about 0.1) -> about 11.3 + 10 * 0; NE and SE tie,
    # NE has the lower index.
    a, b = at(14.0, 12.0, q_s=2000.0), at(14.0, 8.0, q_s=2000.0)
    quiet = FilterConfig(sensor_noise=0.01, env_noise=0.05)
    st = make_state([a, b], pos=(10.0, 10.0), cfg=quiet)
    assert dcee_action(st, PlannerConfig(kappa=0.0), np.random.default_rng(0)) == 0
    assert dcee_action(st, PlannerConfig(kappa=10.0), np.random.default_rng(0)) == 1


# ---- random and scripted


def test_random_action_uniform_and_deterministic():
    rng = np.random.default_rng(0)
    draws = np.array([random_action(rng) for _ in range(100_000)])
    assert draws.min() >= 0 and draws.max() < 8
    counts = np.bincount(draws, minlength=8)
    sd = math.sqrt(100_000 * (1 / 8) * (7 / 8))
    assert np.all(np.abs(counts - 12_500) < 3 * sd)
    a = [random_action(np.random.default_rng(4)) for _ in range(3)]
    assert len(set(a)) == 1


def test_spiral_legs():
    seq = [spiral_action(k) for k in range(12)]
    assert seq == [0, 2, 4, 4, 6, 6, 0, 0, 0, 2, 2, 2]


# ---- features and value function


def test_features_shape_and_range():
    st = observed_state(2)
    for att in (False, True):
        f = belief_features(st, 150, att)
        assert f.shape == (FEATURE_DIM,) and np.all(np.isfinite(f))
        assert np.all(f[7:14] >= 0)


def test_value_function_shape():
    vf = ValueFunction(rng=np.random.default_rng(0))
    assert vf.sizes == (20, 64, 64, 8)
    assert vf.n_params == 20 * 64 + 64 + 64 * 64 + 64 + 64 * 8 + 8
    assert vf.q_values(np.zeros(20)).shape == (8,)


def dominant(action, sizes=(20, 64, 64, 8)):
    vf = ValueFunction(sizes, rng=np.random.default_rng(0))
    for p in vf.params:
        p[...] = 0.0
    vf.params[-1][action] = 1.0
    return vf


def test_act_pfrl_greedy_argmax():
    st = observed_state(0)
    assert act_pfrl(st, dominant(3), 0.0, np.random.default_rng(0)) == 3


def test_act_pfrl_epsilon_one_is_uniform():
    st = observed_state(0)
    vf = dominant(3)
    rng = np.random.default_rng(1)
    draws = np.array([act_pfrl(st, vf, 1.0, rng) for _ in range(8000)])
    counts = np.bincount(draws, minlength=8)
    sd = math.sqrt(8000 / 8 * 7 / 8)
    assert np.all(np.abs(counts - 1000) < 4 * sd)


def test_act_pfrl_affine_invariance():
    for seed in range(5):
        st = observed_state(seed)
        vf = ValueFunction(rng=np.random.default_rng(seed))
        a = act_pfrl(st, vf, 0.0, np.random.default_rng(0))
        g = vf.copy()
        g.params[-2] *= 3.7
        g.params[-1] = g.params[-1] * 3.7 - 12.0
        assert act_pfrl(st, g, 0.0, np.random.default_rng(0)) == a


def test_td_fixed_point_leaves_parameters():
    vf = ValueFunction(rng=np.random.default_rng(3), gamma_discount=1.0)
    x = np.random.default_rng(4).normal(size=20)
    a = int(np.argmax(vf.q_values(x)))
    before = [p.copy() for p in vf.params]
    _, delta = td_update(vf, Transition(x, a, 0.0, x, False))
    assert delta == 0.0
    for p, q in zip(vf.params, before):
        assert np.max(np.abs(p - q)) <= 1e-12


def test_td_terminal_target_is_reward():
    vf = ValueFunction(rng=np.random.default_rng(3))
    x = np.ones(20)
    assert td_target(vf, Transition(x, 0, 1.0, 100 * x, True)) == 1.0
    q0 = vf.q_values(x)[0]
    _, delta = td_update(vf, Transition(x, 0, 1.0, 100 * x, True))
    assert delta == pytest.approx(1.0 - q0, rel=1e-12)
    # the selected head moves toward the target
    assert abs(1.0 - vf.q_values(x)[0]) < abs(1.0 - q0)


def test_td_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    vf = ValueFunction(rng=rng)
    worst = 0.0
    for probe in range(100):
        x = rng.normal(size=20)
        a = int(rng.integers(8))
        target = float(rng.normal())
        _, grads = vf.loss_and_grad(x, a, target)
        k = int(rng.integers(len(vf.params)))
        idx = tuple(int(rng.integers(s)) for s in vf.params[k].shape)
        h = 1e-5
        orig = vf.params[k][idx]
        vf.params[k][idx] = orig + h
        lp, _ = vf.loss_and_grad(x, a, target)
        vf.params[k][idx] = orig - h
        lm, _ = vf.loss_and_grad(x, a, target)
        vf.params[k][idx] = orig
        fd = (lp - lm) / (2 * h)
        g = grads[k][idx]
        rel = abs(fd - g) / max(abs(fd), abs(g), 1e-8)
        worst = max(worst, rel)
    assert worst < 1e-4


def test_td_non_finite_raises():
    vf = ValueFunction(rng=np.random.default_rng(0))
    x = np.zeros(20)
    with pytest.raises(TrainingError, match="non-finite"):
        td_update(vf, Transition(x, 0, float("nan"), x, False))


def test_checkpoint_roundtrip(tmp_path):
    vf = ValueFunction((20, 16, 8), alpha_lr=0.01, gamma_discount=0.9, rng=np.random.default_rng(2))
    vf.save(tmp_path / "vf.json")
    back = ValueFunction.load(tmp_path / "vf.json")
    assert back.sizes == vf.sizes and back.alpha_lr == 0.01 and back.gamma_discount == 0.9
    for p, q in zip(vf.params, back.params):
        assert np.array_equal(p, q)
    bad = vf.to_dict()
    bad["version"] = 2
    with pytest.raises(ParameterError):
        ValueFunction.from_dict(bad)
    bad = vf.to_dict()
    bad["layers"][0]["weight"] = [[0.0]]
    with pytest.raises(ParameterError):
        ValueFunction.from_dict(bad)


# ---- training loop


def easy_factory(ep, rng):
    src = SourceParams(*rng.uniform([4, 4, 500, 0, 0, 2, 1], [7, 7, 1500, 1, 1, 4, 2]))
    prior = ((2.0, 9.0), (2.0, 9.0), (10.0, 3000.0), (0.0, 6.0), (0.0, 6.0), (1e-3, 8.0), (1.0, 5.0))
    return Scenario(src, prior=prior, max_steps=15, noise=(0.1, 0.05), noise_seed=int(rng.integers(2**31)))


def test_schedule_epsilon():
    s = TrainingSchedule(episodes=100, epsilon_start=1.0, epsilon_end=0.1, decay_fraction=0.5)
    assert s.epsilon(0) == 1.0 and s.epsilon(50) == pytest.approx(0.1) and s.epsilon(99) == pytest.approx(0.1)
    assert s.epsilon(25) == pytest.approx(0.55)


def test_train_zero_episodes_is_noop():
    vf = ValueFunction(rng=np.random.default_rng(0))
    before = [p.copy() for p in vf.params]
    out, curve = train_pfrl(easy_factory, vf, TrainingSchedule(episodes=0), np.random.default_rng(0))
    assert curve == []
    assert all(np.array_equal(p, q) for p, q in zip(out.params, before))


def test_train_deterministic():
    def run():
        vf = ValueFunction(rng=np.random.default_rng(0))
        _, curve = train_pfrl(
            easy_factory, vf, TrainingSchedule(episodes=3), np.random.default_rng(5), FilterConfig(particle_count=100)
        )
        return curve, vf.params

    (c1, p1), (c2, p2) = run(), run()
    assert c1 == c2 and len(c1) == 3
    assert all(np.array_equal(a, b) for a, b in zip(p1, p2))
    assert all(c.episode_return in (0.0, 1.0) for c in c1)
