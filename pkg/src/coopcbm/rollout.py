"""Budgeted policy rollout and metric-vs-budget curve evaluation.

`rollout` is the faithful per-instance budget loop. `run_sequences` is a
vectorized engine used for curve evaluation: because no policy's selection
depends on the budget, one full-reveal pass per instance records the whole
selection sequence, and the outcome at any budget is recovered as the
longest affordable prefix (stopping at the first unaffordable selection,
exactly as the budget loop does).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import CalibrationMap
from .data import ConceptSpace, CostModel, Dataset, Instance
from .errors import MetricMismatchError, NothingToSelectError
from .metrics import auc as auc_metric
from .metrics import top1_accuracy
from .model import ConceptToLabelModel, calibrate_distribution, soft_features
from .policies import (
    CoopPolicy,
    GreedyOrder,
    GreedyPolicy,
    InterventionState,
    PolicyConfig,
    RandomPolicy,
    SkylinePolicy,
    batch_raw_scores,
    _normalize,
)

TERMINATION_REASONS = ("budget_exhausted", "all_revealed", "unaffordable_selection")


@dataclass(frozen=True)
class TrajectoryStep:
    concept: int  # 1-based
    cost: float
    value: int  # 1-based revealed value
    label_dist: tuple[float, ...]
    top_label: int  # 1-based


@dataclass(frozen=True)
class Trajectory:
    instance_id: str
    initial_dist: tuple[float, ...]
    steps: tuple[TrajectoryStep, ...]
    final_prediction: int  # 1-based argmax of the last distribution
    total_spent: float
    terminated_reason: str

    @property
    def final_dist(self) -> tuple[float, ...]:
        return self.steps[-1].label_dist if self.steps else self.initial_dist


def rollout(
    policy,
    instance: Instance,
    space: ConceptSpace,
    budget: float,
    cost_model: CostModel,
    model: ConceptToLabelModel,
    calibration: CalibrationMap | None = None,
) -> Trajectory:
    """Budget loop: query the policy, acquire the ground-truth value while it
    fits in the budget, terminate at the first unaffordable selection."""
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    state = InterventionState.initial(instance, space, model, calibration)
    initial_dist = tuple(float(p) for p in state.current_label_dist)
    steps: list[TrajectoryStep] = []
    reason = None
    while True:
        if not state.unrevealed():
            reason = "all_revealed"
            break
        try:
            i = policy.select(state)
        except NothingToSelectError:
            reason = "all_revealed"
            break
        q = cost_model.costs[i - 1]
        if state.spent <= budget - q:
            value = instance.concept_true[i - 1]
            state = state.reveal(i, value, q, model, calibration)
            steps.append(
                TrajectoryStep(
                    concept=i,
                    cost=q,
                    value=value,
                    label_dist=tuple(float(p) for p in state.current_label_dist),
                    top_label=state.current_top_label,
                )
            )
        else:
            reason = "unaffordable_selection"
            break
    return Trajectory(
        instance_id=instance.id,
        initial_dist=initial_dist,
        steps=tuple(steps),
        final_prediction=state.current_top_label,
        total_spent=state.spent,
        terminated_reason=reason,
    )


# ---------------------------------------------------------------------------
# vectorized full-reveal engine

@dataclass(frozen=True)
class SequenceSet:
    """Full-reveal selection order and per-step label distributions."""

    policy: str
    order: np.ndarray  # (N, m) 0-based concept index revealed at each step
    dists: np.ndarray  # (m+1, N, K) label distributions after t reveals
    labels0: np.ndarray  # (N,) 0-based true labels


def make_policy(
    name: str,
    model: ConceptToLabelModel,
    cost_model: CostModel,
    calibration: CalibrationMap | None = None,
    coop_config: PolicyConfig | None = None,
    greedy_order: GreedyOrder | None = None,
    rng=None,
):
    """Instantiate a per-instance policy by name.

    cpu-only / cis-only are the coop config with the other weight zeroed.
    """
    if name in ("coop", "cpu-only", "cis-only"):
        cfg = coop_config
        if name == "cpu-only":
            cfg = PolicyConfig(
                alpha=1.0, beta=0.0, gamma=0.0,
                cpu_norm=cfg.cpu_norm, cis_norm=cfg.cis_norm,
                calibration_ref=cfg.calibration_ref,
            )
        elif name == "cis-only":
            cfg = PolicyConfig(
                alpha=0.0, beta=1.0, gamma=0.0,
                cpu_norm=cfg.cpu_norm, cis_norm=cfg.cis_norm,
                calibration_ref=cfg.calibration_ref,
            )
        return CoopPolicy(cfg, model, cost_model, calibration)
    if name == "greedy":
        return GreedyPolicy(greedy_order)
    if name == "random":
        return RandomPolicy(rng if rng is not None else 0)
    if name == "skyline":
        return SkylinePolicy(model, calibration)
    raise ValueError(f"unknown policy {name!r}")


def instance_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """One independent generator per instance, reproducible from one seed."""
    return [np.random.default_rng(c) for c in np.random.SeedSequence(seed).spawn(n)]


def run_sequences(
    name: str,
    dataset: Dataset,
    model: ConceptToLabelModel,
    cost_model: CostModel,
    calibration: CalibrationMap | None = None,
    coop_config: PolicyConfig | None = None,
    greedy_order: GreedyOrder | None = None,
    seed: int = 0,
) -> SequenceSet:
    space = dataset.space
    n, m = len(dataset), space.m
    offs = space.block_offsets()
    rows = np.arange(n)

    features = soft_features(dataset, calibration)
    weights = [
        np.stack(
            [
                calibrate_distribution(np.asarray(inst.concept_probs[i]), calibration)
                for inst in dataset.instances
            ]
        )
        for i in range(m)
    ]
    true0 = dataset.true_concepts_array()
    labels0 = dataset.labels_array()

    if name in ("coop", "cpu-only", "cis-only"):
        cfg = coop_config
        if name == "cpu-only":
            alpha, beta, gamma = 1.0, 0.0, 0.0
        elif name == "cis-only":
            alpha, beta, gamma = 0.0, 1.0, 0.0
        else:
            alpha, beta, gamma = cfg.alpha, cfg.beta, cfg.gamma
    costs = np.asarray(cost_model.costs)
    rngs = instance_rngs(seed, n) if name == "random" else None

    revealed = np.zeros((n, m), dtype=bool)
    order = np.empty((n, m), dtype=int)
    dists = np.empty((m + 1, n, space.label_count))
    cur = model.predict(features)
    dists[0] = cur

    for t in range(m):
        if name in ("coop", "cpu-only", "cis-only"):
            k0 = np.argmax(cur, axis=1)
            cpu, cis = batch_raw_scores(model, space, features, weights, k0)
            scores = (
                alpha * _normalize(cpu, cfg.cpu_norm)
                + beta * _normalize(cis, cfg.cis_norm)
                - gamma * costs[None, :]
            )
            scores[revealed] = -np.inf
            sel = np.argmax(scores, axis=1)
        elif name == "greedy":
            sel = np.full(n, greedy_order.ordering[t] - 1)
        elif name == "skyline":
            gains = np.empty((n, m))
            for i in range(m):
                f = features.copy()
                block = slice(offs[i], offs[i] + space.arities[i])
                f[:, block] = 0.0
                f[rows, offs[i] + true0[:, i]] = 1.0
                gains[:, i] = model.predict(f)[rows, labels0]
            gains[revealed] = -np.inf
            sel = np.argmax(gains, axis=1)
        elif name == "random":
            sel = np.empty(n, dtype=int)
            for j in range(n):
                candidates = np.flatnonzero(~revealed[j])
                sel[j] = candidates[int(rngs[j].integers(0, len(candidates)))]
        else:
            raise ValueError(f"unknown policy {name!r}")

        for i in np.unique(sel):
            rsel = rows[sel == i]
            block = slice(offs[i], offs[i] + space.arities[i])
            features[np.ix_(rsel, range(block.start, block.stop))] = 0.0
            features[rsel, offs[i] + true0[rsel, i]] = 1.0
        revealed[rows, sel] = True
        order[:, t] = sel
        cur = model.predict(features)
        dists[t + 1] = cur

    return SequenceSet(policy=name, order=order, dists=dists, labels0=labels0)


def prefix_lengths(seqset: SequenceSet, costs: np.ndarray, budget: float) -> np.ndarray:
    """Reveals completed at this budget: leading steps whose cumulative cost
    stays within it (the budget loop stops at the first overrun)."""
    step_costs = costs[seqset.order]  # (N, m)
    cum = np.cumsum(step_costs, axis=1)
    prev = np.concatenate([np.zeros((cum.shape[0], 1)), cum[:, :-1]], axis=1)
    # same float expression as the budget loop's affordability check
    afford = prev <= budget - step_costs
    return np.where(
        afford.all(axis=1), cum.shape[1], np.argmax(~afford, axis=1)
    )


# ---------------------------------------------------------------------------
# curves

@dataclass(frozen=True)
class EvaluationCurve:
    policy: str
    axis_kind: str  # steps | cost
    grid: tuple[float, ...]
    metric_name: str  # accuracy | auc
    values: tuple[float, ...]
    stderrs: tuple[float, ...]
    n_seeds: int

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("grid must be strictly increasing")
        if len(self.values) != len(self.grid):
            raise ValueError("one metric value per grid point")

    def area(self) -> float:
        return float(np.trapezoid(np.asarray(self.values), np.asarray(self.grid)))


def metric_at_budgets(
    seqset: SequenceSet,
    cost_model: CostModel,
    grid,
    metric: str,
) -> np.ndarray:
    costs = np.asarray(cost_model.costs)
    n = seqset.order.shape[0]
    rows = np.arange(n)
    out = np.empty(len(grid))
    for gi, budget in enumerate(grid):
        plen = prefix_lengths(seqset, costs, budget)
        current = seqset.dists[plen, rows, :]  # (N, K)
        if metric == "accuracy":
            out[gi] = top1_accuracy(current, seqset.labels0)
        elif metric == "auc":
            if seqset.dists.shape[2] != 2:
                raise MetricMismatchError("AUC requires a two-class task")
            out[gi] = auc_metric(current[:, 1], (seqset.labels0 == 1).astype(int))
        else:
            raise ValueError(f"unknown metric {metric!r}")
    return out


def evaluate_curve(
    name: str,
    dataset: Dataset,
    grid,
    axis_kind: str,
    cost_model: CostModel,
    model: ConceptToLabelModel,
    calibration: CalibrationMap | None = None,
    coop_config: PolicyConfig | None = None,
    greedy_order: GreedyOrder | None = None,
    seeds=(0,),
    metric: str = "accuracy",
) -> EvaluationCurve:
    """Mean metric over the dataset at each budget grid point, averaged over
    seeds for the stochastic policy (deterministic policies run once)."""
    if axis_kind not in ("steps", "cost"):
        raise ValueError(f"unknown axis kind {axis_kind!r}")
    if metric == "auc" and dataset.space.label_count != 2:
        raise MetricMismatchError("AUC requires a two-class task")
    seeds = list(seeds)
    stochastic = name == "random"
    run_seeds = seeds if stochastic else seeds[:1]
    rows = []
    for s in run_seeds:
        seqset = run_sequences(
            name,
            dataset,
            model,
            cost_model,
            calibration,
            coop_config=coop_config,
            greedy_order=greedy_order,
            seed=s,
        )
        rows.append(metric_at_budgets(seqset, cost_model, grid, metric))
    mat = np.stack(rows)
    mean = mat.mean(axis=0)
    if len(rows) > 1:
        stderr = mat.std(axis=0, ddof=1) / np.sqrt(len(rows))
    else:
        stderr = np.zeros(len(grid))
    return EvaluationCurve(
        policy=name,
        axis_kind=axis_kind,
        grid=tuple(float(g) for g in grid),
        metric_name=metric,
        values=tuple(float(v) for v in mean),
        stderrs=tuple(float(v) for v in stderr),
        n_seeds=len(seeds),
    )
