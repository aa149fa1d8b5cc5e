"""Scenario sampling, metrics and the experiment harnesses.

Episodes are independent tasks. Each is fully determined by its scenario and
a seed derived from the master seed, so a run reproduces exactly whatever the
worker count.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.stats import norm

from . import __version__
from .belief import FilterConfig, belief_estimate, belief_std
from .env import ACTION_NAMES, DoneReason, Scenario, position_error, reset, step
from .errors import ParameterError, UsageError
from .execution import (
    CurvePoint,
    PlannerConfig,
    ValueFunction,
    act_pfrl,
    dcee_action,
    entrotaxis_action,
    infotaxis_action,
    plan_att_pfp,
    random_action,
    spiral_action,
    train_pfrl,
    FEATURE_DIM,
)
from .plume import PARAM_NAMES, FieldKind, SourceParams, field_type

# ---------------------------------------------------------------- scenarios


@dataclass(frozen=True)
class ScenarioDistribution:
    """Independent uniform ranges for the source parameters.

    ``lambda_range`` / ``psi_range`` of None defer to the field preset, and
    ``q_s`` is scaled by the preset's ``q_scale``. ``source_box`` narrows where
    sources are drawn without changing the prior the filter starts from.
    """

    x_s: tuple = (5.0, 20.0)
    y_s: tuple = (10.0, 20.0)
    q_s: tuple = (10.0, 3000.0)
    u_x: tuple = (0.0, 6.0)
    u_y: tuple = (0.0, 6.0)
    lambda_range: tuple | None = None
    psi_range: tuple | None = None
    lambda_floor: float = 1e-3
    sensor_noise: float | None = None
    env_noise: float = 0.4
    source_box: tuple | None = None
    max_steps: int = 150

    def __post_init__(self):
        for name in ("x_s", "y_s", "q_s", "u_x", "u_y", "lambda_range", "psi_range"):
            r = getattr(self, name)
            if r is not None and not (len(r) == 2 and r[0] < r[1]):
                raise ParameterError(f"{name} must be an increasing (low, high) pair, got {r}")
        if self.lambda_floor <= 0:
            raise ParameterError("lambda_floor must be > 0")
        if self.source_box is not None:
            for (lo, hi), (plo, phi) in zip(self.source_box, (self.x_s, self.y_s)):
                if not (plo <= lo < hi <= phi):
                    raise ParameterError(f"source_box {self.source_box} must lie inside the prior position box")

    def ranges(self, ft) -> np.ndarray:
        """Field-adjusted (7, 2) array of parameter ranges, the filter prior."""
        lam = self.lambda_range if self.lambda_range is not None else ft.lambda_range
        psi = self.psi_range if self.psi_range is not None else ft.psi_range
        q = (self.q_s[0] * ft.q_scale, self.q_s[1] * ft.q_scale)
        out = np.array([self.x_s, self.y_s, q, self.u_x, self.u_y, lam, psi], dtype=float)
        out[5, 0] = max(out[5, 0], self.lambda_floor)
        return out

    @classmethod
    def from_section(cls, sec) -> "ScenarioDistribution":
        tup = lambda v: None if v is None else tuple(float(x) for x in v)
        box = None if sec.source_box is None else tuple(tup(b) for b in sec.source_box)
        return cls(
            x_s=tup(sec.x_s), y_s=tup(sec.y_s), q_s=tup(sec.q_s), u_x=tup(sec.u_x), u_y=tup(sec.u_y),
            lambda_range=tup(sec.lambda_range), psi_range=tup(sec.psi_range),
            lambda_floor=sec.lambda_floor, sensor_noise=sec.sensor_noise, env_noise=sec.env_noise,
            source_box=box, max_steps=sec.max_steps,
        )


def sample_scenario(dist: ScenarioDistribution, ft, rng: np.random.Generator) -> Scenario:
    """One scenario; the rng is consumed identically for every field type."""
    ft = field_type(ft) if isinstance(ft, (str, FieldKind)) else ft
    prior = dist.ranges(ft)
    draw_box = prior.copy()
    if dist.source_box is not None:
        draw_box[:2] = np.asarray(dist.source_box, dtype=float)
    theta = rng.uniform(draw_box[:, 0], draw_box[:, 1])
    theta[5] = max(theta[5], dist.lambda_floor)
    noise_seed = int(rng.integers(0, 2**32))
    eps = ft.sensor_noise if dist.sensor_noise is None else dist.sensor_noise
    return Scenario(
        source=SourceParams.from_array(theta),
        field_type=ft,
        prior=tuple((float(lo), float(hi)) for lo, hi in prior),
        max_steps=dist.max_steps,
        noise=(float(eps), float(dist.env_noise)),
        noise_seed=noise_seed,
    )


def scenario_rng(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, *key]))


# ---------------------------------------------------------------- methods


@dataclass(frozen=True)
class MethodSpec:
    name: str
    planner: str
    # None: follow the run config; False: forced off (the non-attention arms)
    attention: bool | None = None


METHODS = {
    m.name: m
    for m in (
        MethodSpec("att-pfp", "pfp"),
        MethodSpec("pfp", "pfp", attention=False),
        MethodSpec("infotaxis", "infotaxis"),
        MethodSpec("entrotaxis", "entrotaxis"),
        MethodSpec("dcee", "dcee"),
        MethodSpec("random", "random"),
        MethodSpec("spiral", "spiral"),
        MethodSpec("att-pfrl", "pfrl"),
        MethodSpec("pfrl", "pfrl", attention=False),
    )
}
LEARNING_METHODS = ("att-pfrl", "pfrl")


def method_configs(name: str, fcfg: FilterConfig, pcfg: PlannerConfig) -> tuple[FilterConfig, PlannerConfig]:
    spec = METHODS[name]
    if spec.attention is False:
        return replace(fcfg, attention=False), replace(pcfg, attention_enabled=False)
    return fcfg, pcfg


def choose_action(name, state, scenario, pcfg, rng, vf=None) -> int:
    planner = METHODS[name].planner
    if planner == "pfp":
        return plan_att_pfp(state, pcfg, rng)
    if planner == "infotaxis":
        return infotaxis_action(state, pcfg, rng)
    if planner == "entrotaxis":
        return entrotaxis_action(state, pcfg, rng)
    if planner == "dcee":
        return dcee_action(state, pcfg, rng)
    if planner == "random":
        return random_action(rng)
    if planner == "spiral":
        return spiral_action(state.agent.step_count)
    if vf is None:
        raise UsageError(f"method {name} needs a trained value function (checkpoint)")
    return act_pfrl(state, vf, 0.0, rng, pcfg.attention_enabled, scenario.max_steps)


# ---------------------------------------------------------------- episodes


TRACE_COLUMNS = ("step", "x", "y", "action", "intensity", "ess", "std_x", "std_y", "reward")


@dataclass
class EpisodeRecord:
    method: str
    field: str
    index: int
    source: tuple
    estimate: tuple
    steps: int
    path_length: float
    ceased: bool
    error: float
    total_reward: float
    wall_time: float
    region: str = "all"
    success: bool = False
    trace: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)


def _trace_row(state, action, reward):
    ps = state.belief
    sd = belief_std(ps)
    return {
        "step": state.agent.step_count,
        "x": state.agent.position[0],
        "y": state.agent.position[1],
        "action": "" if action is None else ACTION_NAMES[action],
        "intensity": state.last_obs.intensity,
        "ess": ps.ess if ps.ess is not None else float(1.0 / np.sum(ps.weights**2)),
        "std_x": float(sd[0]),
        "std_y": float(sd[1]),
        "reward": reward,
    }


def run_episode(
    scenario: Scenario,
    method: str,
    fcfg: FilterConfig,
    pcfg: PlannerConfig,
    rng: np.random.Generator,
    vf: ValueFunction | None = None,
    success_radius: float = 1.0,
    record_trace: bool = False,
    snapshot_every: int = 0,
    index: int = 0,
    region: str = "all",
) -> EpisodeRecord:
    """Drive one search episode to cessation or the step cap."""
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}")
    fcfg, pcfg = method_configs(method, fcfg, pcfg)
    t0 = time.perf_counter()
    state = reset(scenario, fcfg, rng)
    trace, snaps = [], []
    if record_trace:
        trace.append(_trace_row(state, None, 0.0))
    if snapshot_every:
        snaps.append((0, state.belief.theta.copy(), state.belief.weights.copy()))
    total = 0.0
    while True:
        a = choose_action(method, state, scenario, pcfg, rng, vf)
        out = step(state, a, scenario, fcfg, rng)
        state = out.state
        total += out.reward
        if record_trace:
            trace.append(_trace_row(state, a, out.reward))
        k = state.agent.step_count
        if snapshot_every and (k % snapshot_every == 0 or out.done):
            snaps.append((k, state.belief.theta.copy(), state.belief.weights.copy()))
        if out.done:
            break
    wall = time.perf_counter() - t0
    est = belief_estimate(state.belief)
    err = position_error(state, scenario)
    ceased = state.done_reason is DoneReason.CESSATION
    return EpisodeRecord(
        method=method,
        field=scenario.field_type.kind.value,
        index=index,
        source=tuple(float(v) for v in scenario.source.to_array()),
        estimate=tuple(float(v) for v in est.to_array()),
        steps=state.agent.step_count,
        path_length=state.agent.path_length,
        ceased=ceased,
        error=err,
        total_reward=total,
        wall_time=wall,
        region=region,
        success=ceased and err <= success_radius,
        trace=trace,
        snapshots=snaps,
    )


# ---------------------------------------------------------------- metrics


@dataclass(frozen=True)
class Stat:
    mean: float
    std: float
    n: int


@dataclass(frozen=True)
class MetricReport:
    """OCE, ADE, REV and LPS with spread and counts.

    ``lps`` averages only episodes that ceased, and is None when none did.
    Standard deviations are sample deviations (ddof=1), 0 for a single value.
    """

    oce: Stat
    ade: Stat
    rev: Stat
    lps: Stat | None

    def as_rows(self) -> list[tuple[str, Stat | None]]:
        return [("oce", self.oce), ("ade", self.ade), ("rev", self.rev), ("lps", self.lps)]


def _stat(values) -> Stat:
    v = np.asarray(values, dtype=float)
    std = float(v.std(ddof=1)) if len(v) > 1 else 0.0
    return Stat(float(math.fsum(v) / len(v)), std, len(v))


def compute_metrics(records, success_radius: float = 1.0) -> MetricReport:
    if not records:
        raise ParameterError("compute_metrics needs at least one episode record")
    succ = [1.0 if (r.ceased and r.error <= success_radius) else 0.0 for r in records]
    ceased_err = [r.error for r in records if r.ceased]
    return MetricReport(
        oce=_stat(succ),
        ade=_stat([r.path_length for r in records]),
        rev=_stat([r.wall_time for r in records]),
        lps=_stat(ceased_err) if ceased_err else None,
    )


def audit_metrics(records, report: MetricReport, success_radius: float = 1.0, rel_tol: float = 1e-12) -> list[str]:
    """Recompute every aggregate with plain loops; returns the mismatches."""
    problems = []

    def check(name, got, values):
        if got is None:
            if values:
                problems.append(f"{name}: reported absent but {len(values)} values exist")
            return
        if not values:
            problems.append(f"{name}: reported but no values exist")
            return
        n = len(values)
        total = 0.0
        for v in values:
            total += v
        mean = total / n
        ss = 0.0
        for v in values:
            ss += (v - mean) ** 2
        std = math.sqrt(ss / (n - 1)) if n > 1 else 0.0
        if got.n != n:
            problems.append(f"{name}: n {got.n} != {n}")
        if not math.isclose(got.mean, mean, rel_tol=rel_tol, abs_tol=1e-12):
            problems.append(f"{name}: mean {got.mean!r} != {mean!r}")
        if not math.isclose(got.std, std, rel_tol=1e-9, abs_tol=1e-12):
            problems.append(f"{name}: std {got.std!r} != {std!r}")

    succ = []
    for r in records:
        succ.append(1.0 if r.ceased and r.error <= success_radius else 0.0)
    check("oce", report.oce, succ)
    check("ade", report.ade, [r.path_length for r in records])
    check("rev", report.rev, [r.wall_time for r in records])
    check("lps", report.lps, [r.error for r in records if r.ceased])
    if not 0.0 <= report.oce.mean <= 1.0:
        problems.append("oce outside [0, 1]")
    return problems


def two_proportion_test(k1: int, n1: int, k2: int, n2: int) -> tuple[float, float]:
    """Pooled two-proportion z test; returns (z, one-sided p for p1 > p2)."""
    p = (k1 + k2) / (n1 + n2)
    se = math.sqrt(p * (1 - p) * (1 / n1 + 1 / n2))
    if se == 0:
        return 0.0, 0.5 if k1 / n1 == k2 / n2 else (0.0 if k1 / n1 > k2 / n2 else 1.0)
    z = (k1 / n1 - k2 / n2) / se
    return z, float(norm.sf(z))


# ---------------------------------------------------------------- harness


@dataclass(frozen=True)
class Task:
    method: str
    region: str
    index: int
    scenario: Scenario
    seed: tuple
    fcfg: FilterConfig
    pcfg: PlannerConfig
    success_radius: float = 1.0
    vf: ValueFunction | None = None


def _run_task(task: Task) -> EpisodeRecord:
    rng = np.random.default_rng(np.random.SeedSequence(list(task.seed)))
    return run_episode(
        task.scenario, task.method, task.fcfg, task.pcfg, rng, task.vf,
        task.success_radius, index=task.index, region=task.region,
    )


def run_tasks(tasks: list[Task], worker_count: int = 1) -> list[EpisodeRecord]:
    """Run episodes, returning records in task order for any worker count."""
    if worker_count <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=worker_count) as pool:
        return list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * worker_count))))


@dataclass
class Table:
    """Records grouped into (method, field, region) cells with their reports."""

    records: list
    reports: dict
    audit: list
    extra: dict = field(default_factory=dict)


def tabulate(records, success_radius: float = 1.0) -> Table:
    cells = {}
    for r in records:
        cells.setdefault((r.method, r.field, r.region), []).append(r)
    reports, audit = {}, []
    for key, recs in cells.items():
        rep = compute_metrics(recs, success_radius)
        reports[key] = rep
        audit += [f"{'/'.join(key)} {p}" for p in audit_metrics(recs, rep, success_radius)]
    return Table(records, reports, audit)


def _build_cfgs(cfg):
    return cfg.filter.build(), cfg.planner.build()


def _vf_for(method: str, vfs: dict | None):
    if METHODS[method].planner != "pfrl":
        return None
    if not vfs or method not in vfs:
        raise UsageError(f"method {method} needs a trained value function (checkpoint)")
    return vfs[method]


def run_fundamental(methods, n_scenarios: int, cfg, vfs: dict | None = None, fields=None) -> Table:
    """Every method on the same seeded scenarios, for each field type."""
    if n_scenarios < 1:
        raise UsageError("n_scenarios must be >= 1")
    dist = ScenarioDistribution.from_section(cfg.scenario)
    fields = fields or cfg.scenario.fields
    fcfg, pcfg = _build_cfgs(cfg)
    radius = cfg.scenario.success_radius
    tasks = []
    for f in fields:
        ft = field_type(f, cfg.scenario.presets_path)
        for i in range(n_scenarios):
            sc = sample_scenario(dist, ft, scenario_rng(cfg.master_seed, 0, i))
            for m in methods:
                tasks.append(Task(m, "all", i, sc, (cfg.master_seed, 1, i), fcfg, pcfg, radius, _vf_for(m, vfs)))
    return tabulate(run_tasks(tasks, cfg.worker_count), radius)


def training_factory(cfg, source_box=None):
    """Scenario factory for TD training, using the training section's settings."""
    tr = cfg.training
    box = source_box if source_box is not None else tr.source_box
    dist = replace(
        ScenarioDistribution.from_section(cfg.scenario),
        source_box=None if box is None else tuple(tuple(float(v) for v in b) for b in box),
        sensor_noise=tr.sensor_noise,
        env_noise=tr.env_noise,
        max_steps=tr.max_steps,
    )
    ft = field_type(tr.field, cfg.scenario.presets_path)

    def factory(ep, rng):
        return sample_scenario(dist, ft, rng)

    return factory


def train_agent(cfg, attention: bool | None = None, source_box=None, seed_key: int = 0):
    """Train one TD agent; returns (vf, curve)."""
    tr = cfg.training
    attention = tr.attention if attention is None else attention
    rng = scenario_rng(cfg.master_seed, 7, seed_key)
    vf = ValueFunction((FEATURE_DIM, *tr.hidden, 8), tr.alpha_lr, tr.gamma_discount, rng)
    fcfg = replace(cfg.filter.build(), particle_count=tr.particle_count, attention=attention)
    return train_pfrl(training_factory(cfg, source_box), vf, tr.schedule(), rng, fcfg, attention)


def _boxes(cfg):
    ex = cfg.experiment
    boxes = {"train": ex.ood_train_box}
    for j, b in enumerate(ex.ood_test_boxes):
        boxes[f"test{j + 1}"] = b
    return {k: tuple(tuple(float(v) for v in side) for side in b) for k, b in boxes.items()}


def run_ood(methods, cfg, vfs: dict | None = None) -> Table:
    """Train learning methods on the training box, then evaluate every box."""
    ex = cfg.experiment
    if ex.n_scenarios < 1:
        raise UsageError("n_scenarios must be >= 1")
    boxes = _boxes(cfg)
    vfs = dict(vfs or {})
    curves = {}
    for m in methods:
        if METHODS[m].planner == "pfrl" and m not in vfs:
            att = False if METHODS[m].attention is False else cfg.training.attention
            vfs[m], curves[m] = train_agent(cfg, att, boxes["train"], seed_key=1)
    base = ScenarioDistribution.from_section(cfg.scenario)
    fcfg, pcfg = _build_cfgs(cfg)
    radius = cfg.scenario.success_radius
    ft = field_type(ex.field, cfg.scenario.presets_path)
    tasks = []
    for region, box in boxes.items():
        dist = replace(base, source_box=box)
        for i in range(ex.n_scenarios):
            # same seed stream per index in every box: matched seeds
            sc = sample_scenario(dist, ft, scenario_rng(cfg.master_seed, 2, i))
            for m in methods:
                tasks.append(Task(m, region, i, sc, (cfg.master_seed, 3, i), fcfg, pcfg, radius, _vf_for(m, vfs)))
    table = tabulate(run_tasks(tasks, cfg.worker_count), radius)
    tests = {}
    for m in methods:
        tr = table.reports.get((m, ft.kind.value, "train"))
        for region in boxes:
            if region == "train":
                continue
            te = table.reports.get((m, ft.kind.value, region))
            k1, k2 = round(tr.oce.mean * tr.oce.n), round(te.oce.mean * te.oce.n)
            z, _ = two_proportion_test(k1, tr.oce.n, k2, te.oce.n)
            tests[f"{m}/{region}"] = {"z": z, "p_two_sided": float(2 * norm.sf(abs(z)))}
    table.extra = {"boxes": {k: [list(s) for s in b] for k, b in boxes.items()}, "oce_train_vs_test": tests,
                   "curves": {m: [asdict(c) for c in cv] for m, cv in curves.items()}}
    return table


ABLATION_ARMS = ("att-pfp", "pfp", "att-pfrl", "pfrl")
ABLATION_PAIRS = (("att-pfp", "pfp"), ("att-pfrl", "pfrl"))


def run_ablation(cfg, vfs: dict | None = None, arms=ABLATION_ARMS) -> Table:
    """Attention on/off for the planner and the TD agent on paired seeds."""
    ex = cfg.experiment
    if ex.n_scenarios < 1:
        raise UsageError("n_scenarios must be >= 1")
    vfs = dict(vfs or {})
    curves = {}
    for m in arms:
        if METHODS[m].planner == "pfrl" and m not in vfs:
            vfs[m], curves[m] = train_agent(cfg, METHODS[m].attention is None, seed_key=2)
    dist = ScenarioDistribution.from_section(cfg.scenario)
    fcfg, pcfg = _build_cfgs(cfg)
    radius = cfg.scenario.success_radius
    ft = field_type(ex.field, cfg.scenario.presets_path)
    tasks = []
    for i in range(ex.n_scenarios):
        sc = sample_scenario(dist, ft, scenario_rng(cfg.master_seed, 4, i))
        for m in arms:
            tasks.append(Task(m, "all", i, sc, (cfg.master_seed, 5, i), fcfg, pcfg, radius, _vf_for(m, vfs)))
    table = tabulate(run_tasks(tasks, cfg.worker_count), radius)
    echo = {}
    for m in arms:
        f, p = method_configs(m, fcfg, pcfg)
        echo[m] = {"filter_attention": f.attention, "planner_attention": p.attention_enabled}
    deltas = {}
    for a, b in ABLATION_PAIRS:
        if a not in arms or b not in arms:
            continue
        ra, rb = table.reports[(a, ft.kind.value, "all")], table.reports[(b, ft.kind.value, "all")]
        deltas[f"{a} - {b}"] = {
            "oce": ra.oce.mean - rb.oce.mean,
            "ade": ra.ade.mean - rb.ade.mean,
            "lps": None if ra.lps is None or rb.lps is None else ra.lps.mean - rb.lps.mean,
        }
    table.extra = {"attention": echo, "deltas": deltas,
                   "curves": {m: [asdict(c) for c in cv] for m, cv in curves.items()}}
    return table


# ---------------------------------------------------------------- reports


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_reports(out_dir, table: Table, cfg, experiment: str) -> Path:
    """metrics.csv and episodes.csv are deterministic; timing.csv holds REV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    keys = sorted(table.reports)
    metric_rows, timing_rows = [], []
    for key in keys:
        for name, stat in table.reports[key].as_rows():
            if name == "rev":
                timing_rows.append((*key, name, stat.mean, stat.std, stat.n))
            elif stat is None:
                metric_rows.append((*key, name, None, None, 0))
            else:
                metric_rows.append((*key, name, stat.mean, stat.std, stat.n))
    write_csv(out / "metrics.csv", ("method", "field", "region", "metric", "mean", "std", "n"), metric_rows)
    write_csv(out / "timing.csv", ("method", "field", "region", "metric", "mean", "std", "n"), timing_rows)
    ep_header = ("method", "field", "region", "index", *PARAM_NAMES,
                 *(f"est_{p}" for p in PARAM_NAMES), "steps", "path_length", "ceased", "success", "error", "reward")
    ep_rows = [
        (r.method, r.field, r.region, r.index, *r.source, *r.estimate, r.steps, r.path_length,
         r.ceased, r.success, r.error, r.total_reward)
        for r in table.records
    ]
    write_csv(out / "episodes.csv", ep_header, ep_rows)
    extra = {k: v for k, v in table.extra.items() if k != "curves"}
    if extra:
        (out / "summary.json").write_text(json.dumps(extra, indent=2, sort_keys=True) + "\n")
    for m, curve in table.extra.get("curves", {}).items():
        write_curve(out / f"learning_curve_{m}.csv", [CurvePoint(**c) for c in curve])
    write_manifest(out, cfg, experiment, audit=table.audit)
    return out


def write_curve(path, curve) -> None:
    write_csv(path, ("episode", "return", "steps", "epsilon"),
              [(c.episode, c.episode_return, c.steps, c.epsilon) for c in curve])


def write_manifest(out, cfg, experiment: str, audit=(), **extra) -> None:
    manifest = {
        "experiment": experiment,
        "version": __version__,
        "config_hash": cfg.digest(),
        "master_seed": cfg.master_seed,
        "worker_count": cfg.worker_count,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "audit_passed": not audit,
        "audit_problems": list(audit),
        "config": cfg.to_dict(),
        **extra,
    }
    (Path(out) / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
