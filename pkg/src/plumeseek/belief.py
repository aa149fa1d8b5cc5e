"""Attention-enhanced particle belief over source parameters.

The belief is a weighted particle set over the 7 source parameters. Weights
are updated by importance sampling; when the effective sample size drops
below ``ess_fraction * N`` the set is resampled systematically, the weights
are refined by self-attention and every particle takes ``n_moves`` (default
one) Metropolis moves with a covariance-shaped Gaussian proposal.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .errors import NumericalError, ParameterError
from .plume import N_PARAMS, PARAM_NAMES, R_MIN, Observation, SourceParams, concentration_array

LIKELIHOOD_FLOOR = 1e-300
_LOG_FLOOR = math.log(LIKELIHOOD_FLOOR)
_MIN_VARIANCE = 1e-12


@dataclass(frozen=True)
class FilterConfig:
    particle_count: int = 2000
    ess_fraction: float = 0.6
    # cessation threshold on the std of (x_s, y_s), metres
    zeta: float = 0.5
    eps_reg: float = 1e-6
    d_k: int = 1
    r_min: float = R_MIN
    sensor_noise: float = 0.5
    env_noise: float = 0.4
    attention: bool = True
    # refining before resampling flattens O(1/N) weights to uniform and
    # erases the selection step; kept selectable for ablation
    attention_after_resample: bool = True
    beta_paper_strict: bool = False
    # population Mahalanobis term in the acceptance ratio; it pulls every
    # particle toward the current mean and shrinks the cloud without evidence
    mahalanobis: bool = False
    n_moves: int = 1

    def __post_init__(self):
        if self.particle_count < 1:
            raise ParameterError("particle_count must be >= 1")
        if not 0 < self.ess_fraction <= 1:
            raise ParameterError("ess_fraction must lie in (0, 1]")
        if np.any(np.asarray(self.zeta) <= 0):
            raise ParameterError("zeta must be > 0")
        if self.eps_reg <= 0:
            raise ParameterError("eps_reg must be > 0")
        if self.d_k < 1:
            raise ParameterError("d_k must be >= 1")
        if self.n_moves < 1:
            raise ParameterError("n_moves must be >= 1")
        if self.sensor_noise < 0 or self.env_noise < 0:
            raise ParameterError("noise levels must be non-negative")


@dataclass
class ParticleSet:
    """N weighted hypotheses plus the observations consumed so far.

    ``loglik`` caches each particle's log-likelihood of the whole history so
    the move step only has to evaluate proposals.
    """

    theta: np.ndarray
    weights: np.ndarray
    prior: np.ndarray
    obs_xy: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    obs_z: np.ndarray = field(default_factory=lambda: np.zeros(0))
    obs_step: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    loglik: np.ndarray | None = None
    # diagnostics of the last filter_step
    ess: float | None = None
    resampled: bool = False
    acceptance: float | None = None

    def __post_init__(self):
        if self.loglik is None:
            self.loglik = np.zeros(len(self.weights))

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def observation_history(self) -> list[Observation]:
        return [
            Observation((float(p[0]), float(p[1])), float(z), int(k))
            for p, z, k in zip(self.obs_xy, self.obs_z, self.obs_step)
        ]

    def take(self, idx) -> "ParticleSet":
        """Copies of the selected particles with uniform weights."""
        idx = np.asarray(idx)
        return replace(
            self,
            theta=self.theta[idx].copy(),
            weights=np.full(len(idx), 1.0 / len(idx)),
            loglik=self.loglik[idx].copy(),
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([*PARAM_NAMES, "weight"])
            for row, w in zip(self.theta, self.weights):
                writer.writerow([repr(float(v)) for v in row] + [repr(float(w))])


def init_particles(prior_ranges, n: int, rng: np.random.Generator) -> ParticleSet:
    prior = np.asarray(prior_ranges, dtype=float)
    if prior.shape != (N_PARAMS, 2):
        raise ParameterError(f"prior must be {N_PARAMS} (low, high) pairs")
    if np.any(prior[:, 0] >= prior[:, 1]):
        bad = [PARAM_NAMES[i] for i in np.flatnonzero(prior[:, 0] >= prior[:, 1])]
        raise ParameterError(f"inverted or empty prior range for {bad}")
    if n < 1:
        raise ParameterError("need at least one particle")
    theta = rng.uniform(prior[:, 0], prior[:, 1], size=(n, N_PARAMS))
    return ParticleSet(theta=theta, weights=np.full(n, 1.0 / n), prior=prior)


def log_likelihood_array(theta, x, y, z, cfg: FilterConfig) -> np.ndarray:
    """Floored Gaussian log-density of reading ``z`` at ``(x, y)``.

    Broadcasts like :func:`concentration_array`.
    """
    mu = concentration_array(theta, x, y, cfg.r_min)
    var = np.maximum(cfg.sensor_noise**2 + (cfg.env_noise * mu) ** 2, _MIN_VARIANCE)
    ll = -0.5 * np.log(2.0 * np.pi * var) - (z - mu) ** 2 / (2.0 * var)
    return np.maximum(ll, _LOG_FLOOR)


def likelihood(obs: Observation, theta: SourceParams, cfg: FilterConfig) -> float:
    x, y = obs.position
    return float(np.exp(log_likelihood_array(theta.to_array(), x, y, obs.intensity, cfg)))


def history_loglik(theta, obs_xy, obs_z, cfg: FilterConfig) -> np.ndarray:
    """Summed log-likelihood of all readings for each row of ``theta``."""
    theta = np.atleast_2d(theta)
    if len(obs_z) == 0:
        return np.zeros(len(theta))
    ll = log_likelihood_array(
        theta[:, None, :], obs_xy[None, :, 0], obs_xy[None, :, 1], obs_z[None, :], cfg
    )
    return ll.sum(axis=1)


def _normalize_log(logw: np.ndarray) -> np.ndarray:
    w = np.exp(logw - logsumexp(logw))
    return w / w.sum()


def sis_update(ps: ParticleSet, obs: Observation, cfg: FilterConfig) -> ParticleSet:
    x, y = obs.position
    ll = log_likelihood_array(ps.theta, x, y, obs.intensity, cfg)
    with np.errstate(divide="ignore"):
        logw = np.log(ps.weights) + ll
    return replace(
        ps,
        weights=_normalize_log(logw),
        obs_xy=np.vstack([ps.obs_xy, [[x, y]]]),
        obs_z=np.append(ps.obs_z, obs.intensity),
        obs_step=np.append(ps.obs_step, obs.step_index),
        loglik=ps.loglik + ll,
    )


def effective_sample_size(ps_or_weights) -> float:
    w = getattr(ps_or_weights, "weights", ps_or_weights)
    w = np.asarray(w, dtype=float)
    return float(w.sum() ** 2 / np.dot(w, w))


def systematic_indices(weights, offset: float) -> np.ndarray:
    """Systematic resampling with a single offset in ``[0, 1)``."""
    w = np.asarray(weights, dtype=float)
    n = len(w)
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    cdf[-1] = 1.0
    points = (offset + np.arange(n)) / n
    return np.minimum(np.searchsorted(cdf, points, side="right"), n - 1)


def systematic_resample(ps: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    return ps.take(systematic_indices(ps.weights, rng.random()))


def attention_refine(weights, d_k: int = 1) -> np.ndarray:
    """Self-attention over the weight vector, renormalized to the simplex.

    Each weight is a 1-d token serving as query, key and value, so the output
    for particle i is ``sum_j softmax_j(w_i w_j / sqrt(d_k)) w_j``. That only
    depends on the value ``w_i``, so the N x N product is evaluated over
    distinct weight values (resampled sets hold many duplicates).
    """
    w = np.asarray(weights, dtype=float)
    if len(w) == 1:
        return np.ones(1)
    vals, inverse, counts = np.unique(w, return_inverse=True, return_counts=True)
    scale = 1.0 / math.sqrt(d_k)
    out_vals = np.empty_like(vals)
    # rows in blocks to bound memory at 4096 x U
    for start in range(0, len(vals), 4096):
        q = vals[start : start + 4096]
        scores = np.outer(q, vals) * scale
        scores -= scores.max(axis=1, keepdims=True)
        e = np.exp(scores) * counts
        out_vals[start : start + 4096] = (e @ vals) / e.sum(axis=1)
    out = out_vals[inverse]
    return out / out.sum()


def weighted_mean(ps: ParticleSet) -> np.ndarray:
    return ps.weights @ ps.theta


def weighted_covariance(ps: ParticleSet) -> np.ndarray:
    w = ps.weights / ps.weights.sum()
    d = ps.theta - w @ ps.theta
    cov = d.T @ (d * w[:, None])
    return 0.5 * (cov + cov.T)


def regularize_cholesky(sigma, eps_reg: float) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    reg = sigma + eps_reg * np.eye(len(sigma))
    try:
        return np.linalg.cholesky(reg)
    except np.linalg.LinAlgError as exc:
        eig = np.linalg.eigvalsh(0.5 * (reg + reg.T))
        raise NumericalError(
            f"Cholesky failed after adding {eps_reg:g}*I: min eigenvalue {eig.min():.3e}, "
            f"max {eig.max():.3e}, asymmetry {np.abs(sigma - sigma.T).max():.3e}"
        ) from exc


def optimal_bandwidth(n: int, d: int) -> float:
    """Silverman's rule-of-thumb kernel bandwidth."""
    if n < 1 or d < 1:
        raise ParameterError("n and d must be >= 1")
    return (4.0 / (n * (d + 2))) ** (1.0 / (d + 4))


def mcmc_move(
    ps: ParticleSet,
    cfg: FilterConfig,
    rng: np.random.Generator,
    xi: np.ndarray | None = None,
    spread: ParticleSet | None = None,
) -> ParticleSet:
    """One Metropolis move per particle.

    Proposal ``theta + h_opt * L @ xi`` with ``L`` the regularized Cholesky
    factor of the weighted covariance. The log acceptance ratio is the
    history log-likelihood difference (dropped when ``beta_paper_strict``),
    optionally plus the Mahalanobis term about the weighted mean
    (``mahalanobis``); proposals leaving the prior box are rejected. Mean
    and covariance come from ``spread`` when
    given, else from ``ps`` itself.
    """
    spread = ps if spread is None else spread
    n, d = ps.theta.shape
    mean = weighted_mean(spread)
    L = regularize_cholesky(weighted_covariance(spread), cfg.eps_reg)
    h = optimal_bandwidth(n, d)
    if xi is None:
        xi = rng.standard_normal((n, d))
    prop = ps.theta + h * (xi @ L.T)
    u = rng.random(n)

    inside = np.all((prop >= ps.prior[:, 0]) & (prop <= ps.prior[:, 1]), axis=1)
    log_beta = np.zeros(n)
    if cfg.mahalanobis:
        z_new = solve_triangular(L, (prop - mean).T, lower=True)
        z_old = solve_triangular(L, (ps.theta - mean).T, lower=True)
        log_beta = -0.5 * (np.sum(z_new**2, axis=0) - np.sum(z_old**2, axis=0))

    ll_prop = np.full(n, -np.inf)
    if not cfg.beta_paper_strict:
        ll_prop[inside] = history_loglik(prop[inside], ps.obs_xy, ps.obs_z, cfg)
        log_beta = log_beta + ll_prop - ps.loglik
    log_beta[~inside] = -np.inf
    with np.errstate(divide="ignore"):
        accept = np.log(u) < log_beta
    if cfg.beta_paper_strict and accept.any():
        ll_prop[accept] = history_loglik(prop[accept], ps.obs_xy, ps.obs_z, cfg)

    theta = np.where(accept[:, None], prop, ps.theta)
    loglik = np.where(accept, ll_prop, ps.loglik)
    return replace(ps, theta=theta, loglik=loglik, acceptance=float(accept.mean()))


def belief_std(ps: ParticleSet) -> np.ndarray:
    return np.sqrt(np.maximum(np.diag(weighted_covariance(ps)), 0.0))


def check_cessation(ps: ParticleSet, cfg: FilterConfig) -> bool:
    std = belief_std(ps)[:2]
    return bool(np.all(std < np.asarray(cfg.zeta)))


def belief_estimate(ps: ParticleSet) -> SourceParams:
    return SourceParams.from_array(weighted_mean(ps))


def filter_step(
    ps: ParticleSet, obs: Observation, cfg: FilterConfig, rng: np.random.Generator
) -> ParticleSet:
    ps = sis_update(ps, obs, cfg)
    ess = effective_sample_size(ps)
    if ess >= cfg.ess_fraction * ps.n:
        return replace(ps, ess=ess, resampled=False, acceptance=None)
    if cfg.attention and not cfg.attention_after_resample:
        ps = replace(ps, weights=attention_refine(ps.weights, cfg.d_k))
        ps = mcmc_move(systematic_resample(ps, rng), cfg, rng)
    elif cfg.attention:
        refined = replace(ps, weights=attention_refine(ps.weights, cfg.d_k))
        ps = systematic_resample(ps, rng)
        for _ in range(cfg.n_moves):
            ps = mcmc_move(ps, cfg, rng, spread=refined)
    else:
        ps = systematic_resample(ps, rng)
        for _ in range(cfg.n_moves):
            ps = mcmc_move(ps, cfg, rng)
    return replace(ps, ess=ess, resampled=True)
