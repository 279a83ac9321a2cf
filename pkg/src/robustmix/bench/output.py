"""Result records, deterministic CSV emission, figures, and provenance.

results.csv is byte-reproducible for a fixed config and seed: rows appear
in deterministic cell order, floats print with 17 significant digits, and
the wall_time_s column carries a fixed 0.0 placeholder (measured timings
live in manifest.json, which is outside the determinism contract).
Figures are rendered from the CSV alone, one SVG per metric.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

__all__ = [
    "ResultRecord",
    "emit_outputs",
    "format_records",
    "read_results",
    "render_plots",
    "write_manifest",
]

CSV_HEADER = ("experiment", "method", "alpha", "seed", "metric", "value", "wall_time_s")


@dataclass(frozen=True)
class ResultRecord:
    experiment: str
    method: str
    alpha: float
    seed: int
    metric: str
    value: float
    wall_time_s: float = 0.0


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def format_records(records: Sequence[ResultRecord]) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_HEADER) + "\n")
    for r in records:
        buf.write(
            f"{r.experiment},{r.method},{_fmt(r.alpha)},{r.seed},{r.metric},"
            f"{_fmt(r.value)},{_fmt(0.0)}\n"
        )
    return buf.getvalue()


def read_results(path) -> list[ResultRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            records.append(
                ResultRecord(
                    experiment=row["experiment"],
                    method=row["method"],
                    alpha=float(row["alpha"]),
                    seed=int(row["seed"]),
                    metric=row["metric"],
                    value=float(row["value"]),
                    wall_time_s=float(row["wall_time_s"]),
                )
            )
    return records


def emit_outputs(records: Sequence[ResultRecord], path) -> Path:
    """Write results.csv (UTF-8, LF) under `path`; returns the file path."""
    out_dir = Path(path)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "results.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        handle.write(format_records(records))
    return csv_path


def write_manifest(
    out_dir, config_echo: dict, seed: int, elapsed_s: float, n_records: int
) -> Path:
    from .. import __version__

    manifest = {
        "version": __version__,
        "config": config_echo,
        "base_seed": seed,
        "records": n_records,
        "elapsed_s": elapsed_s,
        "written_at_unix": int(time.time()),
    }
    path = Path(out_dir) / "manifest.json"
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


def render_plots(csv_path, out_dir) -> list[Path]:
    """One SVG per metric: value vs alpha, a polyline per method, with a
    mean line and min-max band over seeds.  Derived solely from the CSV."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    records = read_results(csv_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = sorted({r.metric for r in records})
    written = []
    for metric in metrics:
        rows = [r for r in records if r.metric == metric]
        methods = sorted({r.method for r in rows})
        fig, ax = plt.subplots(figsize=(5.2, 3.6))
        for method in methods:
            pts = {}
            for r in rows:
                if r.method == method:
                    pts.setdefault(r.alpha, []).append(r.value)
            alphas = sorted(pts)
            mean = np.array([np.mean(pts[a]) for a in alphas])
            lo = np.array([np.min(pts[a]) for a in alphas])
            hi = np.array([np.max(pts[a]) for a in alphas])
            ax.plot(alphas, mean, marker="o", label=method)
            ax.fill_between(alphas, lo, hi, alpha=0.15)
        ax.set_xlabel(r"$\alpha$")
        ax.set_ylabel(metric)
        ax.legend(fontsize=8)
        fig.tight_layout()
        safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in metric)
        path = out_dir / f"{safe}.svg"
        fig.savefig(path, format="svg")
        plt.close(fig)
        written.append(path)
    return written
