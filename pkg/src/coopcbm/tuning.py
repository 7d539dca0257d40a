"""Hyperparameter tuning of the selection weights and the validation-fraction
data-efficiency sweep."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .calibration import CalibrationMap
from .data import CostModel, Dataset
from .errors import EmptyGridError, FractionError
from .model import ConceptToLabelModel
from .policies import PolicyConfig, fit_score_norm, greedy_fit
from .rollout import evaluate_curve, metric_at_budgets, run_sequences

DEFAULT_ALPHA_GRID = (0.0, 0.25, 0.5, 1.0)
DEFAULT_BETA_GRID = (0.0, 0.25, 0.5, 1.0)
DEFAULT_GAMMA_GRID = (0.0, 0.01, 0.1, 1.0)


@dataclass(frozen=True)
class TuneResult:
    config: PolicyConfig
    target_value: float
    # one row per grid point: (alpha, beta, gamma, target value)
    table: tuple[tuple[float, float, float, float], ...]


def tune_coop(
    valset: Dataset,
    model: ConceptToLabelModel,
    cost_model: CostModel,
    calibration: CalibrationMap | None = None,
    alpha_grid=DEFAULT_ALPHA_GRID,
    beta_grid=DEFAULT_BETA_GRID,
    gamma_grid=(0.0,),
    target: tuple[str, object] = ("curve_area", None),
    metric: str = "accuracy",
    calibration_ref: str | None = None,
) -> TuneResult:
    """Exhaustive grid search over the mixing weights.

    target is ("curve_area", budget_grid) for area under the metric-vs-budget
    curve, or ("budget", B) for the metric at one fixed budget. Ties go to the
    lexicographically smallest (alpha, beta, gamma). Normalization statistics
    are fitted once on the validation set and embedded in the result.
    """
    alpha_grid = sorted(set(float(a) for a in alpha_grid))
    beta_grid = sorted(set(float(b) for b in beta_grid))
    gamma_grid = sorted(set(float(g) for g in gamma_grid))
    if not alpha_grid or not beta_grid or not gamma_grid:
        raise EmptyGridError("all weight grids must be nonempty")

    kind, arg = target
    if kind == "curve_area":
        grid = arg if arg is not None else _default_budget_grid(cost_model)
    elif kind == "budget":
        grid = [float(arg)]
    else:
        raise ValueError(f"unknown tuning target {kind!r}")
    grid = [float(g) for g in grid]

    cpu_norm, cis_norm = fit_score_norm(valset, model, calibration)

    best = None
    best_val = -np.inf
    table = []
    for a, b, g in product(alpha_grid, beta_grid, gamma_grid):
        cfg = PolicyConfig(
            alpha=a, beta=b, gamma=g,
            cpu_norm=cpu_norm, cis_norm=cis_norm,
            calibration_ref=calibration_ref,
        )
        seqset = run_sequences(
            "coop", valset, model, cost_model, calibration, coop_config=cfg
        )
        vals = metric_at_budgets(seqset, cost_model, grid, metric)
        if kind == "curve_area" and len(grid) > 1:
            value = float(np.trapezoid(vals, grid))
        else:
            value = float(vals[-1])
        table.append((a, b, g, value))
        if value > best_val:
            best, best_val = cfg, value
    return TuneResult(config=best, target_value=best_val, table=tuple(table))


def _default_budget_grid(cost_model: CostModel) -> list[float]:
    if cost_model.kind == "unit":
        return list(range(len(cost_model.costs) + 1))
    # normalized cost models total 100
    return [0.0] + list(np.linspace(5.0, 100.0, 20))


def data_efficiency_sweep(
    fractions,
    valset: Dataset,
    testset: Dataset,
    model: ConceptToLabelModel,
    cost_model: CostModel,
    calibration: CalibrationMap | None = None,
    alpha_grid=(1.0,),
    beta_grid=DEFAULT_BETA_GRID,
    gamma_grid=(0.0,),
    seed: int = 0,
    metric: str = "accuracy",
) -> list[dict]:
    """Refit the static order and retune the selection weights on seeded
    validation subsamples, then score both policies on the untouched test
    split by area under the metric-vs-steps curve."""
    fractions = [float(f) for f in fractions]
    if any(not 0 < f <= 1 for f in fractions):
        raise FractionError("fractions must lie in (0, 1]")
    m = valset.space.m
    steps_grid = list(range(m + 1))
    rows = []
    for frac in fractions:
        sub = valset.subsample(frac, seed) if frac < 1.0 else valset
        order = greedy_fit(sub, model, metric=metric, calibration=calibration)
        tuned = tune_coop(
            sub,
            model,
            cost_model,
            calibration,
            alpha_grid=alpha_grid,
            beta_grid=beta_grid,
            gamma_grid=gamma_grid,
            target=("curve_area", steps_grid),
            metric=metric,
        )
        for policy, kwargs in (
            ("coop", {"coop_config": tuned.config}),
            ("greedy", {"greedy_order": order}),
        ):
            curve = evaluate_curve(
                policy,
                testset,
                steps_grid,
                "steps",
                cost_model,
                model,
                calibration,
                metric=metric,
                **kwargs,
            )
            rows.append(
                {
                    "fraction": frac,
                    "policy": policy,
                    "n_val": len(sub),
                    "area": curve.area(),
                }
            )
    return rows
