"""Command-line entry point.

Exit status: 0 on success, 1 when an episode fails or the metric self-audit
finds a mismatch, 2 on a usage, config or input-format error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from .belief import ParticleSet
from .errors import FormatError, ParameterError, PlumeSeekError, UsageError
from .execution import ValueFunction
from .plume import PARAM_NAMES, field_type

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="plumeseek", description="Source search simulation and experiment runner.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config_required=True, out_required=True):
        sp.add_argument("--config", required=config_required, help="YAML run configuration")
        sp.add_argument("--out", required=out_required, help="output directory")
        sp.add_argument("--seed", type=int, help="master seed (overrides the file)")
        sp.add_argument("--workers", type=int, help="worker processes (overrides the file)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, e.g. filter.particle_count=500")

    common(sub.add_parser("simulate", help="run and trace a single episode"), out_required=False)
    common(sub.add_parser("train", help="train the TD agent and save a checkpoint"))
    ev = sub.add_parser("evaluate", help="method x field comparison")
    common(ev)
    ev.add_argument("--checkpoint", help="value-function checkpoint for the TD methods")
    common(sub.add_parser("ood", help="train-box vs test-box evaluation"))
    common(sub.add_parser("ablate", help="attention on/off for planner and TD agent"))
    pl = sub.add_parser("plot", help="render SVG figures from a run directory")
    pl.add_argument("--in", dest="in_dir", required=True)
    pl.add_argument("--out", required=True)
    return p


def _resolve(args):
    from .config import parse_config, parse_override

    overrides = dict(parse_override(s) for s in args.set)
    overrides["command"] = args.command
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.workers is not None:
        overrides["worker_count"] = args.workers
    if getattr(args, "checkpoint", None):
        overrides["experiment.checkpoint"] = args.checkpoint
    return parse_config(args.config, overrides)


def _summary(cfg, table, experiment) -> dict:
    out = {"experiment": experiment, "audit_passed": not table.audit, "cells": {}}
    for key in sorted(table.reports):
        rep = table.reports[key]
        out["cells"]["/".join(key)] = {
            name: None if st is None else {"mean": st.mean, "std": st.std, "n": st.n}
            for name, st in rep.as_rows()
        }
    return out


def cmd_simulate(cfg) -> int:
    import numpy as np

    from .experiments import (
        TRACE_COLUMNS, ScenarioDistribution, run_episode, sample_scenario, scenario_rng, write_csv, write_manifest,
    )

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    dist = ScenarioDistribution.from_section(cfg.scenario)
    ft = field_type(cfg.experiment.field, cfg.scenario.presets_path)
    scenario = sample_scenario(dist, ft, scenario_rng(cfg.master_seed, 0, 0))
    vf = _load_vf(cfg) if cfg.experiment.method in ("att-pfrl", "pfrl") else None
    rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, 1, 0]))
    rec = run_episode(
        scenario, cfg.experiment.method, cfg.filter.build(), cfg.planner.build(), rng, vf,
        cfg.scenario.success_radius, record_trace=True, snapshot_every=cfg.experiment.snapshot_every,
    )
    write_csv(out / "trace.csv", TRACE_COLUMNS, [[row[c] for c in TRACE_COLUMNS] for row in rec.trace])
    for k, theta, w in rec.snapshots:
        ps = ParticleSet(theta=theta, weights=w, prior=np.asarray(scenario.prior))
        ps.to_csv(out / f"particles_{k:04d}.csv")
    summary = {
        "method": rec.method,
        "field": rec.field,
        "source": dict(zip(PARAM_NAMES, rec.source)),
        "estimate": dict(zip(PARAM_NAMES, rec.estimate)),
        "steps": rec.steps,
        "path_length": rec.path_length,
        "ceased": rec.ceased,
        "success": rec.success,
        "position_error": rec.error,
        "total_reward": rec.total_reward,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    write_manifest(out, cfg, "simulate")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _load_vf(cfg):
    if not cfg.experiment.checkpoint:
        raise UsageError("the TD methods need --checkpoint")
    path = Path(cfg.experiment.checkpoint)
    if not path.is_file():
        raise UsageError(f"checkpoint not found: {path}")
    return ValueFunction.load(path)


def cmd_train(cfg) -> int:
    from .experiments import train_agent, write_curve, write_manifest

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    vf, curve = train_agent(cfg)
    vf.save(out / "checkpoint.json")
    write_curve(out / "learning_curve.csv", curve)
    write_manifest(out, cfg, "train")
    n = len(curve)
    k = min(50, n)
    summary = {
        "episodes": n,
        "first_mean_return": sum(c.episode_return for c in curve[:k]) / k if k else None,
        "last_mean_return": sum(c.episode_return for c in curve[-k:]) / k if k else None,
        "checkpoint": str(out / "checkpoint.json"),
    }
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _finish(cfg, table, experiment) -> int:
    from .experiments import write_reports

    write_reports(cfg.output_dir, table, cfg, experiment)
    print(json.dumps(_summary(cfg, table, experiment), sort_keys=True))
    if table.audit:
        for line in table.audit:
            print(f"audit: {line}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_evaluate(cfg) -> int:
    from .experiments import LEARNING_METHODS, run_fundamental

    if cfg.experiment.n_scenarios < 1:
        raise UsageError("evaluate needs experiment.n_scenarios >= 1")
    vfs = None
    if any(m in LEARNING_METHODS for m in cfg.experiment.methods):
        vf = _load_vf(cfg)
        vfs = {m: vf for m in LEARNING_METHODS}
    table = run_fundamental(cfg.experiment.methods, cfg.experiment.n_scenarios, cfg, vfs)
    return _finish(cfg, table, "evaluate")


def cmd_ood(cfg) -> int:
    from .experiments import run_ood

    if cfg.experiment.n_scenarios < 1:
        raise UsageError("ood needs experiment.n_scenarios >= 1")
    return _finish(cfg, run_ood(cfg.experiment.methods, cfg), "ood")


def cmd_ablate(cfg) -> int:
    from .experiments import run_ablation

    if cfg.experiment.n_scenarios < 1:
        raise UsageError("ablate needs experiment.n_scenarios >= 1")
    return _finish(cfg, run_ablation(cfg), "ablate")


def cmd_plot(args) -> int:
    from .plots import emit_plots

    src = Path(args.in_dir)
    if not src.is_dir():
        raise UsageError(f"input directory not found: {src}")
    made = emit_plots(src, args.out)
    print(json.dumps({"plots": [str(p) for p in made]}))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ood": cmd_ood,
    "ablate": cmd_ablate,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "plot":
            return cmd_plot(args)
        cfg = _resolve(args)
        return COMMANDS[args.command](cfg)
    except (UsageError, FormatError, ParameterError) as exc:
        print(f"plumeseek: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PlumeSeekError as exc:
        print(f"plumeseek: failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except Exception:
        traceback.print_exc()
        return EXIT_FAIL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
