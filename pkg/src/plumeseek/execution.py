"""Decision layer.

Planners score the 8 compass moves with a predictive lookahead over the
particle belief: a handful of hypotheses is drawn from the belief, each one
predicts the reading at the candidate position, and the belief is updated
hypothetically with that reading. The TD agent instead maps belief features
to action values with a small tanh network trained from the sparse reward.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .belief import (
    FilterConfig,
    attention_refine,
    belief_std,
    weighted_mean,
)
from .env import (
    DOMAIN,
    MAX_STEPS,
    N_ACTIONS,
    CompositeState,
    Scenario,
    move,
    reset,
    step,
)
from .errors import ParameterError, TrainingError
from .plume import concentration_array

_LOG_FLOOR = math.log(1e-300)
_TIE_TOL = 1e-9


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 1
    n_predictive_samples: int = 64
    attention_enabled: bool = True
    # exploration weight of the DCEE score
    kappa: float = 1.0
    # entropy histogram: square cells of this size over the domain
    cell_size: float = 1.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ParameterError("horizon must be >= 1")
        if self.n_predictive_samples < 1:
            raise ParameterError("n_predictive_samples must be >= 1")


class _Belief:
    """Belief compressed to distinct particle states, in lexicographic order.

    Compression makes every planner independent of particle order.
    """

    def __init__(self, state: CompositeState, attention: bool, cell_size: float):
        ps = state.belief
        self.theta, inverse = np.unique(ps.theta, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        self.weights = np.bincount(inverse, weights=ps.weights, minlength=len(self.theta))
        if attention:
            refined = attention_refine(ps.weights)
            self.sample_weights = np.bincount(inverse, weights=refined, minlength=len(self.theta))
        else:
            self.sample_weights = self.weights
        self.cfg = state.filter_cfg or FilterConfig()
        (xlo, xhi), (ylo, yhi) = DOMAIN
        nx = max(1, int(math.ceil((xhi - xlo) / cell_size)))
        ny = max(1, int(math.ceil((yhi - ylo) / cell_size)))
        cx = np.clip(np.floor((self.theta[:, 0] - xlo) / cell_size), 0, nx - 1).astype(int)
        cy = np.clip(np.floor((self.theta[:, 1] - ylo) / cell_size), 0, ny - 1).astype(int)
        cells = cx * ny + cy
        self.cell_order = np.argsort(cells, kind="stable")
        sorted_cells = cells[self.cell_order]
        self.cell_starts = np.flatnonzero(np.r_[True, sorted_cells[1:] != sorted_cells[:-1]])
        self.position = state.agent.position
        self.estimate = self.weights @ self.theta[:, :2]

    def predict(self, pos):
        mu = concentration_array(self.theta, pos[0], pos[1], self.cfg.r_min)
        var = np.maximum(self.cfg.sensor_noise**2 + (self.cfg.env_noise * mu) ** 2, 1e-12)
        return mu, var

    def posterior(self, weights, pos, hyp):
        """Hypothetical posteriors, one row per predicted (noise-free) reading."""
        mu, var = self.predict(pos)
        obs = mu[hyp]
        ll = -0.5 * np.log(2 * np.pi * var)[None, :] - (obs[:, None] - mu[None, :]) ** 2 / (2 * var[None, :])
        with np.errstate(divide="ignore"):
            logw = np.log(weights)[None, :] + np.maximum(ll, _LOG_FLOOR)
        post = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
        return post / post.sum(axis=1, keepdims=True)

    def entropy(self, post):
        cell_mass = np.add.reduceat(post[:, self.cell_order], self.cell_starts, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(cell_mass > 0, cell_mass * np.log(cell_mass), 0.0)
        return -terms.sum(axis=1)


def _draw(weights, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` systematic draws from ``weights``."""
    w = np.asarray(weights, dtype=float)
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    cdf[-1] = 1.0
    points = (rng.random() + np.arange(m)) / m
    return np.minimum(np.searchsorted(cdf, points, side="right"), len(w) - 1)


def _choose(scores, next_positions, estimate) -> int:
    """Lowest score; near-ties go to the move closest to the estimate, then lowest index."""
    scores = np.asarray(scores, dtype=float)
    best = scores.min()
    tied = np.flatnonzero(scores <= best + _TIE_TOL * max(1.0, abs(best)))
    if len(tied) > 1:
        d = np.linalg.norm(np.asarray(next_positions)[tied] - estimate, axis=1)
        tied = tied[d <= d.min() + _TIE_TOL]
    return int(tied[0])


def _expected_entropy(b: _Belief, weights, sample_weights, pos, depth, m, rng, attention) -> np.ndarray:
    hyp = _draw(sample_weights, m, rng)
    out = np.empty(N_ACTIONS)
    for a in range(N_ACTIONS):
        nxt = move(pos, a)
        post = b.posterior(weights, nxt, hyp)
        if depth == 1:
            out[a] = b.entropy(post).mean()
            continue
        vals = []
        for row in post:
            sw = attention_refine(row) if attention else row
            vals.append(_expected_entropy(b, row, sw, nxt, depth - 1, max(1, m // 2), rng, attention).min())
        out[a] = np.mean(vals)
    return out


def plan_att_pfp(state: CompositeState, cfg: PlannerConfig, rng: np.random.Generator) -> int:
    """Move that minimizes the expected posterior entropy of the source position."""
    b = _Belief(state, cfg.attention_enabled, cfg.cell_size)
    scores = _expected_entropy(
        b, b.weights, b.sample_weights, b.position, cfg.horizon, cfg.n_predictive_samples, rng, cfg.attention_enabled
    )
    nxt = [move(b.position, a) for a in range(N_ACTIONS)]
    return _choose(scores, nxt, b.estimate)


def infotaxis_action(state: CompositeState, cfg: PlannerConfig, rng: np.random.Generator) -> int:
    one_step = PlannerConfig(1, cfg.n_predictive_samples, False, cfg.kappa, cfg.cell_size)
    return plan_att_pfp(state, one_step, rng)


_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite.hermgauss(24)


def predictive_entropy(means, noise_sd: float) -> float:
    """Differential entropy of an equal-weight Gaussian mixture.

    Gauss-Hermite quadrature per component; exact for a single component.
    """
    means = np.asarray(means, dtype=float)
    s = max(noise_sd, 1e-6)
    pts = means[:, None] + math.sqrt(2.0) * s * _GH_NODES[None, :]
    comp = -0.5 * np.log(2 * np.pi * s * s) - (pts[:, :, None] - means[None, None, :]) ** 2 / (2 * s * s)
    logp = logsumexp(comp, axis=2) - math.log(len(means))
    return float(-(logp @ _GH_WEIGHTS).sum() / (math.sqrt(math.pi) * len(means)))


def entrotaxis_action(state: CompositeState, cfg: PlannerConfig, rng: np.random.Generator) -> int:
    """Move whose reading is most uncertain under the predictive ensemble.

    Components carry the additive sensor noise only, so a one-hypothesis
    belief scores the same everywhere.
    """
    b = _Belief(state, False, cfg.cell_size)
    hyp = _draw(b.weights, cfg.n_predictive_samples, rng)
    scores = np.empty(N_ACTIONS)
    for a in range(N_ACTIONS):
        mu, _ = b.predict(move(b.position, a))
        scores[a] = predictive_entropy(mu[hyp], b.cfg.sensor_noise)
    best = scores.max()
    tied = np.flatnonzero(scores >= best - _TIE_TOL * max(1.0, abs(best)))
    return int(tied[0])


def dcee_action(state: CompositeState, cfg: PlannerConfig, rng: np.random.Generator) -> int:
    """Dual control: distance to the estimate plus ``kappa`` times the expected
    posterior position variance after the move."""
    b = _Belief(state, False, cfg.cell_size)
    hyp = _draw(b.weights, cfg.n_predictive_samples, rng)
    scores = np.empty(N_ACTIONS)
    for a in range(N_ACTIONS):
        nxt = np.array(move(b.position, a))
        exploit = float(np.sum((nxt - b.estimate) ** 2))
        explore = 0.0
        if cfg.kappa != 0:
            post = b.posterior(b.weights, nxt, hyp)
            xy = b.theta[:, :2]
            m = post @ xy
            explore = float(np.mean(post @ np.sum(xy**2, axis=1) - np.sum(m**2, axis=1)))
        scores[a] = exploit + cfg.kappa * explore
    best = scores.min()
    return int(np.flatnonzero(scores <= best + _TIE_TOL * max(1.0, abs(best)))[0])


def random_action(rng: np.random.Generator) -> int:
    return int(rng.integers(N_ACTIONS))


def spiral_action(step_count: int) -> int:
    """Square spiral E, N, W, W, S, S, E, E, E, ... (leg lengths 1, 1, 2, 2, 3, 3, ...)."""
    legs = (0, 2, 4, 6)
    k, length, turn = step_count, 1, 0
    while True:
        for _ in range(2):
            if k < length:
                return legs[turn % 4]
            k -= length
            turn += 1
        length += 1


# ---------------------------------------------------------------------------
# TD learning


FEATURE_DIM = 20


def belief_features(state: CompositeState, max_steps: int = MAX_STEPS, attention: bool = False) -> np.ndarray:
    """Fixed-length summary of (belief, last reading, agent).

    Mean and std are scaled by the prior box; attention, when enabled,
    refines the weights before the summary is taken.
    """
    ps = state.belief
    lo, hi = ps.prior[:, 0], ps.prior[:, 1]
    span = hi - lo
    if attention:
        ps = replace(ps, weights=attention_refine(ps.weights))
    mean = weighted_mean(ps)
    std = belief_std(ps)
    pos = np.asarray(state.agent.position, dtype=float)
    d = mean[:2] - pos
    bearing = math.atan2(d[1], d[0])
    return np.concatenate(
        [
            (mean - lo) / span,
            std / span,
            pos / 20.0,
            [math.log1p(max(state.last_obs.intensity, 0.0)) / 10.0],
            [math.sin(bearing), math.cos(bearing)],
            [state.agent.step_count / max_steps],
        ]
    )


class ValueFunction:
    """Action values from a tanh MLP, ``20 -> 64 -> 64 -> 8`` by default."""

    def __init__(self, sizes=(FEATURE_DIM, 64, 64, N_ACTIONS), alpha_lr=1e-3, gamma_discount=0.99, rng=None):
        self.sizes = tuple(int(s) for s in sizes)
        self.alpha_lr = float(alpha_lr)
        self.gamma_discount = float(gamma_discount)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            self.params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.params.append(np.zeros(fan_out))

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "ValueFunction":
        vf = ValueFunction.__new__(ValueFunction)
        vf.sizes, vf.alpha_lr, vf.gamma_discount = self.sizes, self.alpha_lr, self.gamma_discount
        vf.params = [p.copy() for p in self.params]
        return vf

    def _forward(self, x):
        acts = [np.asarray(x, dtype=float)]
        n_layers = len(self.params) // 2
        for i in range(n_layers):
            z = acts[-1] @ self.params[2 * i] + self.params[2 * i + 1]
            acts.append(np.tanh(z) if i < n_layers - 1 else z)
        return acts

    def q_values(self, x) -> np.ndarray:
        return self._forward(x)[-1]

    def grad_q(self, x, action: int) -> list[np.ndarray]:
        """Gradient of ``Q(x, action)`` with respect to every parameter array."""
        acts = self._forward(x)
        n_layers = len(self.params) // 2
        grads = [None] * len(self.params)
        upstream = np.zeros(self.sizes[-1])
        upstream[action] = 1.0
        for i in reversed(range(n_layers)):
            grads[2 * i] = np.outer(acts[i], upstream)
            grads[2 * i + 1] = upstream.copy()
            if i > 0:
                upstream = (self.params[2 * i] @ upstream) * (1.0 - acts[i] ** 2)
        return grads

    def loss_and_grad(self, x, action: int, target: float):
        """Squared TD loss ``0.5 (target - Q)^2`` with the target held fixed."""
        q = self.q_values(x)[action]
        err = target - q
        return 0.5 * err * err, [-err * g for g in self.grad_q(x, action)]

    def to_dict(self) -> dict:
        return {
            "format": "plumeseek.value_function",
            "version": 1,
            "activation": "tanh",
            "layer_sizes": list(self.sizes),
            "alpha_lr": self.alpha_lr,
            "gamma_discount": self.gamma_discount,
            # weight matrices are (fan_in, fan_out), row-major
            "layers": [
                {"weight": self.params[2 * i].tolist(), "bias": self.params[2 * i + 1].tolist()}
                for i in range(len(self.params) // 2)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ValueFunction":
        if data.get("format") != "plumeseek.value_function" or data.get("version") != 1:
            raise ParameterError("not a version-1 value function checkpoint")
        vf = cls(data["layer_sizes"], data["alpha_lr"], data["gamma_discount"])
        params = []
        for layer, (fan_in, fan_out) in zip(data["layers"], zip(vf.sizes[:-1], vf.sizes[1:])):
            w = np.asarray(layer["weight"], dtype=float)
            b = np.asarray(layer["bias"], dtype=float)
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ParameterError("checkpoint layer shape does not match layer_sizes")
            params += [w, b]
        vf.params = params
        return vf

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "ValueFunction":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class Transition:
    features: np.ndarray
    action: int
    reward: float
    next_features: np.ndarray
    done: bool


def td_target(vf: ValueFunction, tr: Transition) -> float:
    if tr.done:
        return float(tr.reward)
    return float(tr.reward + vf.gamma_discount * np.max(vf.q_values(tr.next_features)))


def td_update(vf: ValueFunction, tr: Transition) -> tuple[ValueFunction, float]:
    """One semi-gradient Q-learning step, in place. Returns ``(vf, delta)``
    with the TD error measured before the update."""
    target = td_target(vf, tr)
    delta = target - float(vf.q_values(tr.features)[tr.action])
    if not math.isfinite(delta):
        raise TrainingError(
            f"non-finite TD error (target={target}, action={tr.action}, "
            f"max|feature|={np.max(np.abs(tr.features)):.3g})"
        )
    if delta != 0.0:
        for p, g in zip(vf.params, vf.grad_q(tr.features, tr.action)):
            p += vf.alpha_lr * delta * g
    return vf, delta


def act_pfrl(
    state: CompositeState,
    vf: ValueFunction,
    epsilon: float,
    rng: np.random.Generator,
    attention: bool = False,
    max_steps: int = MAX_STEPS,
) -> int:
    if rng.random() < epsilon:
        return random_action(rng)
    return int(np.argmax(vf.q_values(belief_features(state, max_steps, attention))))


@dataclass(frozen=True)
class TrainingSchedule:
    episodes: int = 500
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    # fraction of the episodes over which epsilon decays linearly
    decay_fraction: float = 0.8

    def epsilon(self, episode: int) -> float:
        span = max(1.0, self.decay_fraction * self.episodes)
        frac = min(1.0, episode / span)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


@dataclass(frozen=True)
class CurvePoint:
    episode: int
    episode_return: float
    steps: int
    epsilon: float


def train_pfrl(
    scenario_factory: Callable[[int, np.random.Generator], Scenario],
    vf: ValueFunction,
    schedule: TrainingSchedule,
    rng: np.random.Generator,
    filter_cfg: FilterConfig = FilterConfig(),
    attention: bool = True,
) -> tuple[ValueFunction, list[CurvePoint]]:
    """Online epsilon-greedy Q-learning over whole search episodes."""
    curve = []
    for ep in range(schedule.episodes):
        eps = schedule.epsilon(ep)
        scenario = scenario_factory(ep, rng)
        state = reset(scenario, filter_cfg, rng)
        feats = belief_features(state, scenario.max_steps, attention)
        total = 0.0
        while True:
            a = act_pfrl(state, vf, eps, rng, attention, scenario.max_steps)
            out = step(state, a, scenario, filter_cfg, rng)
            next_feats = belief_features(out.state, scenario.max_steps, attention)
            td_update(vf, Transition(feats, a, out.reward, next_feats, out.done))
            total += out.reward
            state, feats = out.state, next_feats
            if out.done:
                break
        curve.append(CurvePoint(ep, total, state.agent.step_count, eps))
    return vf, curve
