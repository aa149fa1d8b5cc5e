"""Run configuration: a YAML file of nested sections, overridden by flags.

Every key has a default, so an empty file is a valid configuration. Unknown
keys are rejected with their dotted path.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import types
import typing
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .belief import FilterConfig
from .errors import ParameterError, UsageError
from .execution import PlannerConfig, TrainingSchedule
from .plume import FieldKind

COMMANDS = ("simulate", "train", "evaluate", "ood", "ablate", "plot")
WORKERS_ENV = "PLUMESEEK_WORKERS"


@dataclass
class ScenarioSection:
    """Source distribution and episode limits."""

    fields: list = field(default_factory=lambda: [k.value for k in FieldKind])
    x_s: list = field(default_factory=lambda: [5.0, 20.0])
    y_s: list = field(default_factory=lambda: [10.0, 20.0])
    q_s: list = field(default_factory=lambda: [10.0, 3000.0])
    u_x: list = field(default_factory=lambda: [0.0, 6.0])
    u_y: list = field(default_factory=lambda: [0.0, 6.0])
    # lambda and psi ranges come from the field preset unless set here
    lambda_range: list | None = None
    psi_range: list | None = None
    lambda_floor: float = 1e-3
    # None -> the field preset's sensor noise
    sensor_noise: float | None = None
    env_noise: float = 0.4
    # restrict sources to [[x_lo, x_hi], [y_lo, y_hi]] while keeping the prior
    source_box: list | None = None
    max_steps: int = 150
    success_radius: float = 1.0
    presets_path: str | None = None


@dataclass
class FilterSection:
    particle_count: int = 2000
    ess_fraction: float = 0.6
    zeta: float = 0.5
    eps_reg: float = 1e-6
    d_k: int = 1
    r_min: float = 1e-3
    attention: bool = True
    # resample from the SIS weights; attention weights only shape the move
    attention_after_resample: bool = True
    mahalanobis: bool = False
    # drop the data log-likelihood from the acceptance ratio (ablation only)
    beta_paper_strict: bool = False
    n_moves: int = 1

    def build(self) -> FilterConfig:
        return FilterConfig(
            particle_count=self.particle_count,
            ess_fraction=self.ess_fraction,
            zeta=self.zeta,
            eps_reg=self.eps_reg,
            d_k=self.d_k,
            r_min=self.r_min,
            attention=self.attention,
            attention_after_resample=self.attention_after_resample,
            mahalanobis=self.mahalanobis,
            beta_paper_strict=self.beta_paper_strict,
            n_moves=self.n_moves,
        )


@dataclass
class PlannerSection:
    horizon: int = 1
    n_predictive_samples: int = 64
    attention_enabled: bool = True
    kappa: float = 1.0
    cell_size: float = 1.0

    def build(self) -> PlannerConfig:
        return PlannerConfig(
            horizon=self.horizon,
            n_predictive_samples=self.n_predictive_samples,
            attention_enabled=self.attention_enabled,
            kappa=self.kappa,
            cell_size=self.cell_size,
        )


@dataclass
class TrainingSection:
    """TD agent schedule and the (easier) scenarios it trains on."""

    episodes: int = 500
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    decay_fraction: float = 0.8
    alpha_lr: float = 1e-3
    gamma_discount: float = 0.99
    hidden: list = field(default_factory=lambda: [64, 64])
    attention: bool = True
    source_box: list | None = field(default_factory=lambda: [[5.0, 9.0], [10.0, 13.0]])
    particle_count: int = 300
    max_steps: int = 60
    sensor_noise: float = 0.1
    env_noise: float = 0.05
    # declared last: the name shadows dataclasses.field inside the class body
    field: str = "gas"

    def schedule(self) -> TrainingSchedule:
        return TrainingSchedule(self.episodes, self.epsilon_start, self.epsilon_end, self.decay_fraction)


@dataclass
class ExperimentSection:
    methods: list = field(default_factory=lambda: ["att-pfp", "infotaxis", "entrotaxis", "dcee", "random"])
    n_scenarios: int = 100
    # simulate: which method drives the single traced episode
    method: str = "att-pfp"
    snapshot_every: int = 10
    ood_train_box: list = field(default_factory=lambda: [[10.0, 15.0], [10.0, 15.0]])
    ood_test_boxes: list = field(
        default_factory=lambda: [[[5.0, 10.0], [15.0, 20.0]], [[15.0, 20.0], [15.0, 20.0]]]
    )
    checkpoint: str | None = None
    # field type used by simulate, ood and ablate (declared last, see above)
    field: str = "gas"


@dataclass
class RunConfig:
    command: str = "simulate"
    master_seed: int = 0
    output_dir: str = "runs"
    worker_count: int = 1
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    filter: FilterSection = field(default_factory=FilterSection)
    planner: PlannerSection = field(default_factory=PlannerSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Hash of the resolved config, ignoring where output goes and how many workers run."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("worker_count")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _is_section(tp) -> bool:
    return isinstance(tp, type) and dataclasses.is_dataclass(tp)


def _check_scalar(value, tp, path):
    """Light type check against the annotation; returns the coerced value."""
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _check_scalar(value, inner[0], path)
    if tp is bool:
        if not isinstance(value, bool):
            raise UsageError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise UsageError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise UsageError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise UsageError(f"{path}: expected a string, got {value!r}")
        return value
    if tp is list:
        if not isinstance(value, list):
            raise UsageError(f"{path}: expected a list, got {value!r}")
        return value
    return value


def _merge(obj, data: dict, prefix: str = ""):
    if not isinstance(data, dict):
        raise UsageError(f"{prefix or 'config'}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(type(obj))
    known = {f.name for f in fields(obj)}
    for key, value in data.items():
        path = f"{prefix}{key}"
        if key not in known:
            raise UsageError(f"unknown config key '{path}'")
        tp = hints[key]
        if _is_section(tp):
            _merge(getattr(obj, key), value, path + ".")
        else:
            setattr(obj, key, _check_scalar(value, tp, path))


def _validate(cfg: RunConfig) -> None:
    if cfg.command not in COMMANDS:
        raise UsageError(f"command: must be one of {COMMANDS}, got {cfg.command!r}")
    if cfg.worker_count < 1:
        raise UsageError("worker_count: must be >= 1")
    if cfg.experiment.n_scenarios < 0:
        raise UsageError("experiment.n_scenarios: must be >= 0")
    for name in cfg.scenario.fields:
        try:
            FieldKind(name)
        except ValueError:
            raise UsageError(f"scenario.fields: unknown field type {name!r}") from None
    from .experiments import METHODS

    for m in [*cfg.experiment.methods, cfg.experiment.method]:
        if m not in METHODS:
            raise UsageError(f"experiment.methods: unknown method {m!r}")
    # let the domain objects check their own invariants
    try:
        cfg.filter.build()
        cfg.planner.build()
        cfg.training.schedule()
    except ParameterError as exc:
        raise UsageError(str(exc)) from None


def parse_override(item: str) -> tuple[str, object]:
    """``a.b=value`` with the value read as YAML (so ``3``, ``true``, ``[1, 2]`` work)."""
    if "=" not in item:
        raise UsageError(f"override {item!r} must look like key.path=value")
    key, raw = item.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional YAML file plus dotted-key overrides.

    Precedence: defaults < file < ``overrides`` < ``PLUMESEEK_WORKERS``.
    """
    data = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"config file not found: {p}")
        try:
            data = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise UsageError(f"config file {p} is not valid YAML: {exc}") from None
    cfg = RunConfig()
    _merge(cfg, data)
    for key, value in (overrides or {}).items():
        nested = value
        for part in reversed(key.split(".")):
            nested = {part: nested}
        _merge(cfg, nested)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            cfg.worker_count = int(env)
        except ValueError:
            raise UsageError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    _validate(cfg)
    return cfg
