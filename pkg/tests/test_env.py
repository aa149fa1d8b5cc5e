import math
from dataclasses import replace

import numpy as np
import pytest

from plumeseek.belief import FilterConfig, ParticleSet
from plumeseek.env import (
    ACTION_NAMES,
    ACTION_VECTORS,
    R_GOAL,
    DoneReason,
    Scenario,
    episode_success,
    move,
    position_error,
    reset,
    step,
)
from plumeseek.errors import LifecycleError, ParameterError
from plumeseek.plume import SourceParams

SOURCE = SourceParams(12.0, 15.0, 900.0, 1.0, 1.5, 4.0, 2.0)
SMALL = FilterConfig(particle_count=50)


def test_action_alphabet():
    assert ACTION_NAMES == ("E", "NE", "N", "NW", "W", "SW", "S", "SE")
    assert np.allclose(np.linalg.norm(ACTION_VECTORS, axis=1), 1.0)
    angles = np.degrees(np.arctan2(ACTION_VECTORS[:, 1], ACTION_VECTORS[:, 0])) % 360
    assert np.allclose(angles, np.arange(8) * 45)


def test_kinematics_and_clamp():
    assert move((3.0, 3.0), 0) == (4.0, 3.0)
    assert move((0.0, 7.0), 4) == (0.0, 7.0)
    assert move((20.0, 20.0), 1) == (20.0, 20.0)
    x, y = move((5.0, 5.0), 1)
    assert math.hypot(x - 5, y - 5) == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        move((1.0, 1.0), 8)


def test_scenario_validation():
    with pytest.raises(ParameterError):
        Scenario(SourceParams(25.0, 5.0, 1.0, 0.0, 0.0, 1.0, 1.0))
    with pytest.raises(ParameterError):
        Scenario(SOURCE, start_region=((0.0, 25.0), (0.0, 5.0)))
    with pytest.raises(ParameterError):
        Scenario(SOURCE, max_steps=0)
    with pytest.raises(ParameterError):
        Scenario(SOURCE, noise=(-0.1, 0.4))


def test_reset_deterministic():
    sc = Scenario(SOURCE, noise_seed=4)
    a = reset(sc, SMALL, np.random.default_rng(1))
    b = reset(sc, SMALL, np.random.default_rng(1))
    assert a.agent == b.agent and a.last_obs == b.last_obs
    assert np.array_equal(a.belief.theta, b.belief.theta) and np.array_equal(a.belief.weights, b.belief.weights)
    assert a.last_obs.step_index == a.agent.step_count == 0
    assert len(a.belief.observation_history) == 1


def test_reset_start_region():
    cfg = FilterConfig(particle_count=1)
    for seed in range(10_000):
        st = reset(Scenario(SOURCE, noise_seed=seed), cfg, np.random.default_rng(seed))
        x, y = st.agent.position
        assert 0 <= x <= 5 and 0 <= y <= 5


def test_reset_prior_spread():
    st = reset(Scenario(SOURCE), FilterConfig(particle_count=4000), np.random.default_rng(0))
    sd = st.belief.theta[:, 0].std()
    assert sd == pytest.approx(15 / math.sqrt(12), abs=0.15)


def test_noise_stream_is_paired_across_policies():
    sc = Scenario(SOURCE, noise_seed=9)
    a = reset(sc, SMALL, np.random.default_rng(0))
    b = reset(sc, SMALL, np.random.default_rng(123))
    assert a.agent.position == b.agent.position and a.last_obs == b.last_obs


def run_to_end(sc, cfg, rng, policy):
    st = reset(sc, cfg, rng)
    total, n = 0.0, 0
    while True:
        out = step(st, policy(st), sc, cfg, rng)
        total += out.reward
        n += 1
        st = out.state
        assert st.last_obs.step_index == st.agent.step_count == n
        assert st.agent.path_length == pytest.approx(n)
        if out.done:
            return out, total
        assert out.reward == 0.0


def test_episode_max_steps_and_lifecycle():
    sc = Scenario(SOURCE, max_steps=5)
    cfg = FilterConfig(particle_count=50, zeta=1e-9)
    rng = np.random.default_rng(0)
    out, total = run_to_end(sc, cfg, rng, lambda st: 0)
    assert out.done_reason is DoneReason.MAX_STEPS and out.reward == 0.0 and total == 0.0
    assert out.state.agent.step_count == 5
    with pytest.raises(LifecycleError):
        step(out.state, 0, sc, cfg, rng)


def test_episode_cessation_reward():
    sc = Scenario(SOURCE, max_steps=50)
    # an enormous threshold ceases on the first step
    cfg = FilterConfig(particle_count=50, zeta=100.0)
    out, total = run_to_end(sc, cfg, np.random.default_rng(0), lambda st: 2)
    assert out.done_reason is DoneReason.CESSATION and out.reward == R_GOAL and total == R_GOAL
    assert out.state.agent.step_count == 1


@pytest.mark.parametrize("seed", range(3))
def test_reward_is_zero_or_goal(seed):
    sc = Scenario(SOURCE, max_steps=40, noise_seed=seed)
    rng = np.random.default_rng(seed)
    out, total = run_to_end(sc, FilterConfig(particle_count=300), rng, lambda st: int(rng.integers(8)))
    assert total in (0.0, R_GOAL)


def test_same_inputs_same_trajectory():
    sc = Scenario(SOURCE, max_steps=20, noise_seed=3)

    def trajectory():
        rng = np.random.default_rng(5)
        st = reset(sc, SMALL, rng)
        path = [st.agent.position]
        while not st.done:
            st = step(st, int(rng.integers(8)), sc, SMALL, rng).state
            path.append(st.agent.position)
        return path, st.belief.theta

    (p1, t1), (p2, t2) = trajectory(), trajectory()
    assert p1 == p2 and np.array_equal(t1, t2)


def collapsed_state(sc, at, reason):
    theta = np.tile(SOURCE.to_array(), (4, 1))
    theta[:, :2] = at
    ps = ParticleSet(theta=theta, weights=np.full(4, 0.25), prior=np.asarray(sc.prior))
    st = reset(sc, SMALL, np.random.default_rng(0))
    return replace(st, belief=ps, done_reason=reason)


def test_episode_success_cases():
    sc = Scenario(SOURCE)
    exact = collapsed_state(sc, (12.0, 15.0), DoneReason.CESSATION)
    assert episode_success(exact, sc)
    edge = collapsed_state(sc, (13.0, 15.0), DoneReason.CESSATION)
    assert position_error(edge, sc) == 1.0
    assert episode_success(edge, sc, success_radius=1.0)
    assert not episode_success(edge, sc, success_radius=0.999)
    capped = collapsed_state(sc, (12.0, 15.0), DoneReason.MAX_STEPS)
    assert not episode_success(capped, sc)
