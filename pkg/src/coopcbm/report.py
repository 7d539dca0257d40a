"""Curve CSV output and figure rendering for the report path."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .rollout import EvaluationCurve

CSV_COLUMNS = ["policy", "axis_kind", "grid_point", "metric", "stderr", "n_seeds"]

POLICY_STYLE = {
    "skyline": dict(color="0.3", linestyle="--"),
    "coop": dict(color="tab:blue"),
    "cpu-only": dict(color="tab:cyan", linestyle=":"),
    "cis-only": dict(color="tab:purple", linestyle=":"),
    "greedy": dict(color="tab:orange"),
    "random": dict(color="tab:green"),
}


def write_curves_csv(curves: list[EvaluationCurve], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for c in curves:
            for g, v, se in zip(c.grid, c.values, c.stderrs):
                w.writerow(
                    [c.policy, c.axis_kind, repr(g), repr(v), repr(se), c.n_seeds]
                )


def read_curves_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    for r in rows:
        r["grid_point"] = float(r["grid_point"])
        r["metric"] = float(r["metric"])
        r["stderr"] = float(r["stderr"])
        r["n_seeds"] = int(r["n_seeds"])
    return rows


def render_report(
    curves_csv: str | Path, out_dir: str | Path, metric_name: str = "accuracy"
) -> list[Path]:
    """Render one figure per axis kind plus a per-policy area summary CSV."""
    rows = read_curves_csv(curves_csv)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    summary_rows = []
    for axis_kind in sorted({r["axis_kind"] for r in rows}):
        fig, ax = plt.subplots(figsize=(6, 4))
        policies = sorted({r["policy"] for r in rows if r["axis_kind"] == axis_kind})
        for policy in policies:
            pts = sorted(
                (
                    (r["grid_point"], r["metric"], r["stderr"])
                    for r in rows
                    if r["axis_kind"] == axis_kind and r["policy"] == policy
                ),
            )
            x = np.array([p[0] for p in pts])
            y = np.array([p[1] for p in pts])
            se = np.array([p[2] for p in pts])
            style = POLICY_STYLE.get(policy, {})
            ax.plot(x, y, label=policy, **style)
            if se.any():
                ax.fill_between(x, y - 2 * se, y + 2 * se, alpha=0.15)
            summary_rows.append(
                {
                    "policy": policy,
                    "axis_kind": axis_kind,
                    "area": float(np.trapezoid(y, x)),
                }
            )
        ax.set_xlabel(
            "interventions" if axis_kind == "steps" else "acquisition cost spent"
        )
        ax.set_ylabel(metric_name)
        ax.legend(loc="lower right", fontsize=8)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig_path = out_dir / f"curve_{axis_kind}.png"
        fig.savefig(fig_path, dpi=150)
        plt.close(fig)
        written.append(fig_path)

    summary_path = out_dir / "summary.csv"
    with open(summary_path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["policy", "axis_kind", "area"])
        w.writeheader()
        for r in summary_rows:
            w.writerow(r)
    written.append(summary_path)
    return written
