"""Static SVG figures built from run output files.

Output is byte-stable for a fixed input: the SVG id salt is fixed and no
date is embedded.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .env import DOMAIN  # noqa: E402
from .errors import FormatError  # noqa: E402
from .experiments import TRACE_COLUMNS  # noqa: E402
from .plume import PARAM_NAMES, SourceParams, concentration_array  # noqa: E402

SEGMENT_PREFIX = "path-seg-"


def _save(fig, path) -> Path:
    with matplotlib.rc_context({"svg.hashsalt": "plumeseek", "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)


def _read_table(path, columns, numeric) -> list[dict]:
    """CSV with an exact header; numeric columns must parse as floats."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError(f"{path}:1: empty file, expected header {','.join(columns)}")
        if tuple(header) != tuple(columns):
            raise FormatError(f"{path}:1: bad header {header}, expected {list(columns)}")
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(columns):
                raise FormatError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(raw)}")
            row = dict(zip(columns, raw))
            for c in numeric:
                try:
                    row[c] = float(row[c])
                except ValueError:
                    raise FormatError(f"{path}:{lineno}: column {c!r} is not a number: {row[c]!r}") from None
                if not np.isfinite(row[c]):
                    raise FormatError(f"{path}:{lineno}: column {c!r} is not finite")
            rows.append(row)
    return rows


def read_trace(path) -> list[dict]:
    numeric = [c for c in TRACE_COLUMNS if c != "action"]
    return _read_table(path, TRACE_COLUMNS, numeric)


def plot_trajectory(trace_path, summary_path, out_path, resolution: int = 80) -> Path:
    """Log-intensity heatmap of the true field with the agent path on top."""
    rows = read_trace(trace_path)
    summary = json.loads(Path(summary_path).read_text())
    src = SourceParams(*(summary["source"][k] for k in PARAM_NAMES))
    (xlo, xhi), (ylo, yhi) = DOMAIN
    xs = np.linspace(xlo, xhi, resolution)
    ys = np.linspace(ylo, yhi, resolution)
    X, Y = np.meshgrid(xs, ys)
    phi = concentration_array(src.to_array(), X, Y)

    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(np.log10(phi + 1e-6), origin="lower", extent=(xlo, xhi, ylo, yhi), cmap="viridis")
    ax.plot([src.x_s], [src.y_s], marker="*", color="red", markersize=12, linestyle="none")
    pts = np.array([[r["x"], r["y"]] for r in rows]).reshape(-1, 2)
    for i in range(len(pts) - 1):
        ax.plot(pts[i : i + 2, 0], pts[i : i + 2, 1], color="white", linewidth=1.2, gid=f"{SEGMENT_PREFIX}{i}")
    if "estimate" in summary and len(pts):
        est = summary["estimate"]
        ax.plot([est["x_s"]], [est["y_s"]], marker="x", color="orange", markersize=10, linestyle="none")
    ax.set_xlim(xlo, xhi)
    ax.set_ylim(ylo, yhi)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title("field (log10) and agent path")
    return _save(fig, out_path)


def read_particles(path) -> tuple[np.ndarray, np.ndarray]:
    rows = _read_table(path, (*PARAM_NAMES, "weight"), (*PARAM_NAMES, "weight"))
    arr = np.array([[r[c] for c in (*PARAM_NAMES, "weight")] for r in rows]).reshape(-1, len(PARAM_NAMES) + 1)
    return arr[:, :-1], arr[:, -1]


def plot_particles(snapshot_paths, out_path, source=None) -> Path:
    """Position clouds of successive belief snapshots, one panel each."""
    paths = list(snapshot_paths)
    n = max(1, len(paths))
    cols = min(4, n)
    nrows = (n + cols - 1) // cols
    fig, axes = plt.subplots(nrows, cols, figsize=(3 * cols, 3 * nrows), squeeze=False)
    (xlo, xhi), (ylo, yhi) = DOMAIN
    for ax in axes.flat:
        ax.set_visible(False)
    for ax, p in zip(axes.flat, paths):
        theta, w = read_particles(p)
        ax.set_visible(True)
        ax.scatter(theta[:, 0], theta[:, 1], s=2 + 200 * w, alpha=0.4)
        if source is not None:
            ax.plot([source[0]], [source[1]], marker="*", color="red", markersize=10, linestyle="none")
        ax.set_xlim(xlo, xhi)
        ax.set_ylim(ylo, yhi)
        ax.set_title(Path(p).stem, fontsize=8)
    return _save(fig, out_path)


def plot_metrics(metrics_path, out_path) -> Path:
    """Bar charts of each metric per method, grouped by field type."""
    cols = ("method", "field", "region", "metric", "mean", "std", "n")
    rows = _read_table(metrics_path, cols, ("n",))
    metrics = sorted({r["metric"] for r in rows})
    fig, axes = plt.subplots(1, max(1, len(metrics)), figsize=(4 * max(1, len(metrics)), 3.5), squeeze=False)
    for ax, metric in zip(axes.flat, metrics):
        sel = [r for r in rows if r["metric"] == metric and r["mean"] != ""]
        groups = sorted({(r["field"], r["region"]) for r in sel})
        methods = sorted({r["method"] for r in sel})
        width = 0.8 / max(1, len(methods))
        for j, m in enumerate(methods):
            vals = []
            for g in groups:
                hit = [r for r in sel if r["method"] == m and (r["field"], r["region"]) == g]
                vals.append(float(hit[0]["mean"]) if hit else 0.0)
            ax.bar(np.arange(len(groups)) + j * width, vals, width, label=m)
        ax.set_xticks(np.arange(len(groups)) + 0.4 - width / 2)
        ax.set_xticklabels([f if r == "all" else f"{f}/{r}" for f, r in groups], rotation=45, fontsize=7)
        ax.set_title(metric.upper())
    axes.flat[0].legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, out_path)


def plot_curves(curve_paths, out_path, window: int = 20) -> Path:
    """Per-episode return (moving average) for each learning curve file."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for p in curve_paths:
        rows = _read_table(p, ("episode", "return", "steps", "epsilon"), ("episode", "return", "steps", "epsilon"))
        ret = np.array([r["return"] for r in rows])
        if len(ret) == 0:
            continue
        k = min(window, len(ret))
        smooth = np.convolve(ret, np.ones(k) / k, mode="valid")
        ax.plot(np.arange(len(smooth)) + k - 1, smooth, label=Path(p).stem)
    ax.set_xlabel("episode")
    ax.set_ylabel(f"return ({window}-episode mean)")
    ax.legend(fontsize=7)
    return _save(fig, out_path)


def emit_plots(in_dir, out_dir) -> list[Path]:
    """Render every figure whose input files are present in ``in_dir``."""
    src, out = Path(in_dir), Path(out_dir)
    if not src.is_dir():
        raise FileNotFoundError(f"input directory not found: {src}")
    out.mkdir(parents=True, exist_ok=True)
    made = []
    summary = src / "summary.json"
    if (src / "trace.csv").exists() and summary.exists():
        made.append(plot_trajectory(src / "trace.csv", summary, out / "trajectory.svg"))
    snaps = sorted(src.glob("particles_*.csv"))
    if snaps:
        source = None
        if summary.exists():
            s = json.loads(summary.read_text()).get("source")
            source = None if s is None else (s["x_s"], s["y_s"])
        made.append(plot_particles(snaps, out / "particles.svg", source))
    if (src / "metrics.csv").exists():
        made.append(plot_metrics(src / "metrics.csv", out / "metrics.svg"))
    curves = sorted(src.glob("learning_curve*.csv"))
    if curves:
        made.append(plot_curves(curves, out / "learning_curves.svg"))
    return made
