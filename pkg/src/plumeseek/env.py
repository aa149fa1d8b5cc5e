"""Search episode as a POMDP: unit-speed agent, noisy readings, belief update
and a sparse goal reward emitted when the belief ceases."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .belief import FilterConfig, ParticleSet, belief_estimate, check_cessation, filter_step, init_particles, sis_update
from .errors import LifecycleError, ParameterError
from .plume import FieldType, Observation, SourceParams, field_type, sense

R_GOAL = 1.0
MAX_STEPS = 150
SUCCESS_RADIUS = 1.0
DOMAIN = ((0.0, 20.0), (0.0, 20.0))
START_REGION = ((0.0, 5.0), (0.0, 5.0))

_D = math.sqrt(0.5)
# counter-clockwise from east in 45 degree increments
ACTION_NAMES = ("E", "NE", "N", "NW", "W", "SW", "S", "SE")
ACTION_VECTORS = np.array(
    [[1.0, 0.0], [_D, _D], [0.0, 1.0], [-_D, _D], [-1.0, 0.0], [-_D, -_D], [0.0, -1.0], [_D, -_D]]
)
N_ACTIONS = len(ACTION_NAMES)


def _inside(point, box) -> bool:
    return all(lo <= v <= hi for v, (lo, hi) in zip(point, box))


@dataclass(frozen=True)
class Scenario:
    """Ground truth plus everything the search episode needs.

    ``prior`` holds the (low, high) belief-initialization range of each
    source parameter; ``noise_seed`` drives the start position and all sensor
    noise so that different methods see paired conditions.
    """

    source: SourceParams
    field_type: FieldType = field(default_factory=lambda: field_type("gas"))
    prior: tuple = ((5.0, 20.0), (10.0, 20.0), (10.0, 3000.0), (0.0, 6.0), (0.0, 6.0), (1e-3, 8.0), (1.0, 5.0))
    domain_bounds: tuple = DOMAIN
    start_region: tuple = START_REGION
    max_steps: int = MAX_STEPS
    noise: tuple[float, float] = (0.5, 0.4)
    noise_seed: int = 0

    def __post_init__(self):
        if not _inside(self.source.position, self.domain_bounds):
            raise ParameterError(f"source {tuple(self.source.position)} outside domain")
        for (slo, shi), (dlo, dhi) in zip(self.start_region, self.domain_bounds):
            if slo < dlo or shi > dhi or slo > shi:
                raise ParameterError("start_region must lie inside domain_bounds")
        if self.max_steps < 1:
            raise ParameterError("max_steps must be >= 1")
        if min(self.noise) < 0:
            raise ParameterError("noise levels must be non-negative")
        if len(self.prior) != 7 or any(lo >= hi for lo, hi in self.prior):
            raise ParameterError("prior must hold 7 increasing (low, high) ranges")


@dataclass(frozen=True)
class AgentState:
    position: tuple[float, float]
    step_count: int = 0
    path_length: float = 0.0


class DoneReason(str, enum.Enum):
    CESSATION = "cessation"
    MAX_STEPS = "max_steps"


@dataclass
class CompositeState:
    belief: ParticleSet
    last_obs: Observation
    agent: AgentState
    sensor_rng: np.random.Generator
    done_reason: DoneReason | None = None
    # filter settings with the scenario's noise levels filled in
    filter_cfg: FilterConfig | None = None

    @property
    def done(self) -> bool:
        return self.done_reason is not None


@dataclass
class StepOutcome:
    state: CompositeState
    reward: float
    done: bool
    done_reason: DoneReason | None


def scenario_filter_config(scenario: Scenario, cfg: FilterConfig) -> FilterConfig:
    """The filter is told the sensor's noise levels."""
    return replace(cfg, sensor_noise=scenario.noise[0], env_noise=scenario.noise[1])


def reset(scenario: Scenario, cfg: FilterConfig, rng: np.random.Generator) -> CompositeState:
    cfg = scenario_filter_config(scenario, cfg)
    sensor_rng = np.random.default_rng(scenario.noise_seed)
    (xlo, xhi), (ylo, yhi) = scenario.start_region
    pos = (float(sensor_rng.uniform(xlo, xhi)), float(sensor_rng.uniform(ylo, yhi)))
    belief = init_particles(scenario.prior, cfg.particle_count, rng)
    obs = sense(scenario.source, pos, *scenario.noise, sensor_rng, step_index=0, r_min=cfg.r_min)
    belief = sis_update(belief, obs, cfg)
    return CompositeState(belief, obs, AgentState(pos), sensor_rng, filter_cfg=cfg)


def move(position, action: int, bounds=DOMAIN) -> tuple[float, float]:
    if not 0 <= action < N_ACTIONS:
        raise ParameterError(f"invalid action {action}")
    (xlo, xhi), (ylo, yhi) = bounds
    x = min(max(position[0] + ACTION_VECTORS[action, 0], xlo), xhi)
    y = min(max(position[1] + ACTION_VECTORS[action, 1], ylo), yhi)
    return (float(x), float(y))


def step(
    state: CompositeState,
    action: int,
    scenario: Scenario,
    cfg: FilterConfig,
    rng: np.random.Generator,
) -> StepOutcome:
    if state.done:
        raise LifecycleError(f"episode already finished ({state.done_reason.value})")
    cfg = scenario_filter_config(scenario, cfg)
    pos = move(state.agent.position, int(action), scenario.domain_bounds)
    k = state.agent.step_count + 1
    agent = AgentState(pos, k, state.agent.path_length + 1.0)
    obs = sense(scenario.source, pos, *scenario.noise, state.sensor_rng, step_index=k, r_min=cfg.r_min)
    belief = filter_step(state.belief, obs, cfg, rng)

    reason = None
    reward = 0.0
    if check_cessation(belief, cfg):
        reason, reward = DoneReason.CESSATION, R_GOAL
    elif k >= scenario.max_steps:
        reason = DoneReason.MAX_STEPS
    new_state = CompositeState(belief, obs, agent, state.sensor_rng, reason, cfg)
    return StepOutcome(new_state, reward, reason is not None, reason)


def position_error(state: CompositeState, scenario: Scenario) -> float:
    est = belief_estimate(state.belief)
    return float(np.hypot(est.x_s - scenario.source.x_s, est.y_s - scenario.source.y_s))


def episode_success(state, scenario: Scenario, success_radius: float = SUCCESS_RADIUS) -> bool:
    """Ceased with the position estimate within ``success_radius`` (inclusive).

    Accepts a terminal :class:`CompositeState` or :class:`StepOutcome`.
    """
    state = getattr(state, "state", state)
    if state.done_reason is not DoneReason.CESSATION:
        return False
    return position_error(state, scenario) <= success_radius
