"""Steady-state plume field, point-sensor model and a finite-difference
convection-diffusion residual used for validation.

Coordinates are metres on the 20 x 20 m search domain.
"""

from __future__ import annotations

import enum
from dataclasses import astuple, dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable

import numpy as np
import yaml

from .errors import DimensionError, ParameterError

R_MIN = 1e-3
# exp() overflows just above 709; only reachable with parameters far outside any prior
_MAX_EXPONENT = 700.0

PARAM_NAMES = ("x_s", "y_s", "q_s", "u_x", "u_y", "lambda", "psi")
N_PARAMS = len(PARAM_NAMES)


@dataclass(frozen=True)
class SourceParams:
    """Source and transport-medium parameters.

    ``lam`` is the decay length (``lambda`` in files and reports).
    """

    x_s: float
    y_s: float
    q_s: float
    u_x: float
    u_y: float
    lam: float
    psi: float

    def __post_init__(self):
        vals = np.asarray(astuple(self), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ParameterError(f"non-finite source parameters: {self}")
        for name, v in (("q_s", self.q_s), ("lambda", self.lam), ("psi", self.psi)):
            if v <= 0:
                raise ParameterError(f"{name} must be > 0, got {v}")

    def to_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, arr) -> "SourceParams":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (N_PARAMS,):
            raise DimensionError(f"expected {N_PARAMS} parameters, got shape {arr.shape}")
        return cls(*(float(v) for v in arr))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x_s, self.y_s])


class FieldKind(str, enum.Enum):
    TEMPERATURE = "temperature"
    CONCENTRATION = "concentration"
    MAGNETIC = "magnetic"
    ELECTRIC = "electric"
    GAS = "gas"
    ENERGY = "energy"
    NOISE = "noise"


@dataclass(frozen=True)
class FieldType:
    kind: FieldKind
    q_scale: float
    psi_range: tuple[float, float]
    lambda_range: tuple[float, float]
    sensor_noise: float


@lru_cache(maxsize=None)
def _preset_table(path: str | None = None) -> dict[FieldKind, FieldType]:
    if path is None:
        text = resources.files("plumeseek").joinpath("data/field_presets.yaml").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = yaml.safe_load(text) or {}
    table = {}
    for entry in raw.get("presets", []):
        extra = set(entry) - {"kind", "q_scale", "psi_range", "lambda_range", "sensor_noise"}
        if extra:
            raise ParameterError(f"unknown preset keys {sorted(extra)}")
        kind = FieldKind(entry["kind"])
        if kind in table:
            raise ParameterError(f"duplicate preset for {kind.value}")
        table[kind] = FieldType(
            kind=kind,
            q_scale=float(entry["q_scale"]),
            psi_range=tuple(float(v) for v in entry["psi_range"]),
            lambda_range=tuple(float(v) for v in entry["lambda_range"]),
            sensor_noise=float(entry["sensor_noise"]),
        )
    missing = set(FieldKind) - set(table)
    if missing:
        raise ParameterError(f"presets missing for {sorted(k.value for k in missing)}")
    return table


def field_type(kind: FieldKind | str, presets_path: str | None = None) -> FieldType:
    return _preset_table(presets_path)[FieldKind(kind)]


def all_field_types(presets_path: str | None = None) -> list[FieldType]:
    table = _preset_table(presets_path)
    return [table[k] for k in FieldKind]


@dataclass(frozen=True)
class Observation:
    position: tuple[float, float]
    intensity: float
    step_index: int = 0


def concentration_array(theta, x, y, r_min: float = R_MIN) -> np.ndarray:
    """Vectorised plume field.

    ``theta`` has the 7 source parameters on its last axis; ``x`` and ``y``
    must broadcast against ``theta[..., 0]``. No validation is done here.
    """
    theta = np.asarray(theta, dtype=float)
    xs, ys, q, ux, uy, lam, psi = np.moveaxis(theta, -1, 0)
    dx = x - xs
    dy = y - ys
    r = np.maximum(np.hypot(dx, dy), r_min)
    expo = -r / lam - (dx * ux + dy * uy) / (2.0 * psi)
    return q / (4.0 * np.pi * psi * r) * np.exp(np.minimum(expo, _MAX_EXPONENT))


def plume_concentration(params: SourceParams, x: float, y: float, r_min: float = R_MIN) -> float:
    """Field intensity at ``(x, y)`` for a single source."""
    if not (np.isfinite(x) and np.isfinite(y)):
        raise ParameterError(f"non-finite query point ({x}, {y})")
    return float(concentration_array(params.to_array(), x, y, r_min))


def sense(
    params: SourceParams,
    position,
    sensor_noise: float,
    env_noise: float,
    rng: np.random.Generator,
    step_index: int = 0,
    r_min: float = R_MIN,
) -> Observation:
    """Noisy point reading: ``max(0, phi * (1 + eta_env) + eta_sensor)``."""
    if sensor_noise < 0 or env_noise < 0:
        raise ParameterError("noise levels must be non-negative")
    x, y = float(position[0]), float(position[1])
    phi = plume_concentration(params, x, y, r_min)
    eta_env, eta_sensor = rng.standard_normal(2)
    value = phi * (1.0 + env_noise * eta_env) + sensor_noise * eta_sensor
    return Observation((x, y), max(0.0, float(value)), step_index)


@dataclass(frozen=True)
class Grid:
    """Uniform square lattice ``x0 + i*h``, ``y0 + j*h``."""

    x0: float
    y0: float
    h: float
    nx: int
    ny: int

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.x0 + self.h * np.arange(self.nx)
        ys = self.y0 + self.h * np.arange(self.ny)
        return np.meshgrid(xs, ys, indexing="ij")


def cde_residual(
    field_sampler: Callable,
    grid: Grid,
    alpha: float,
    v,
    gamma_cde: float,
    source_fn: Callable,
) -> np.ndarray:
    """``alpha*lap(phi) - v.grad(phi) + gamma*phi + S`` on interior nodes.

    Second-order central differences. Samplers are called with mesh arrays
    and must be vectorised. Returns an ``(nx-2, ny-2)`` array.
    """
    if grid.h <= 0:
        raise ParameterError("grid spacing must be positive")
    if grid.nx < 3 or grid.ny < 3:
        raise DimensionError(f"grid {grid.nx}x{grid.ny} too small, need at least 3x3")
    X, Y = grid.mesh()
    phi = np.broadcast_to(np.asarray(field_sampler(X, Y), dtype=float), X.shape)
    h = grid.h
    c = phi[1:-1, 1:-1]
    lap = (phi[2:, 1:-1] + phi[:-2, 1:-1] + phi[1:-1, 2:] + phi[1:-1, :-2] - 4.0 * c) / h**2
    gx = (phi[2:, 1:-1] - phi[:-2, 1:-1]) / (2.0 * h)
    gy = (phi[1:-1, 2:] - phi[1:-1, :-2]) / (2.0 * h)
    src = np.broadcast_to(
        np.asarray(source_fn(X[1:-1, 1:-1], Y[1:-1, 1:-1]), dtype=float), c.shape
    )
    return alpha * lap - (v[0] * gx + v[1] * gy) + gamma_cde * c + src
