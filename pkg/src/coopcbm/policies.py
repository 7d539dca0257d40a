"""Concept-selection policies: score-combining selection (uncertainty +
label-influence - cost), random, validation-fitted static greedy, and the
oracle skyline, plus the fitted score-normalization statistics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import CalibrationMap
from .data import ConceptSpace, CostModel, Dataset, Instance
from .errors import (
    AlreadyRevealedError,
    EmptyInputError,
    NothingToSelectError,
)
from .metrics import auc as auc_metric
from .metrics import top1_accuracy
from .model import (
    ConceptToLabelModel,
    assemble_input,
    calibrate_distribution,
    soft_features,
)

NORM_DEGENERATE_EPS = 1e-12


# ---------------------------------------------------------------------------
# state

@dataclass
class InterventionState:
    """Rollout state: revealed concepts, spent budget, current prediction."""

    instance: Instance
    space: ConceptSpace
    revealed: dict[int, int]  # 1-based concept index -> 1-based value
    spent: float
    current_label_dist: np.ndarray
    current_top_label: int  # 1-based

    @classmethod
    def initial(
        cls,
        instance: Instance,
        space: ConceptSpace,
        model: ConceptToLabelModel,
        calibration: CalibrationMap | None = None,
    ) -> "InterventionState":
        dist = model.predict(assemble_input(instance, space, {}, calibration))
        return cls(
            instance=instance,
            space=space,
            revealed={},
            spent=0.0,
            current_label_dist=dist,
            current_top_label=int(np.argmax(dist)) + 1,
        )

    def unrevealed(self) -> list[int]:
        return [i for i in range(1, self.space.m + 1) if i not in self.revealed]

    def reveal(
        self,
        i: int,
        value: int,
        cost: float,
        model: ConceptToLabelModel,
        calibration: CalibrationMap | None = None,
    ) -> "InterventionState":
        if i in self.revealed:
            raise AlreadyRevealedError(f"concept {i} already revealed")
        revealed = dict(self.revealed)
        revealed[i] = value
        dist = model.predict(
            assemble_input(self.instance, self.space, revealed, calibration)
        )
        return InterventionState(
            instance=self.instance,
            space=self.space,
            revealed=revealed,
            spent=self.spent + cost,
            current_label_dist=dist,
            current_top_label=int(np.argmax(dist)) + 1,
        )


# ---------------------------------------------------------------------------
# configs and breakdowns

@dataclass(frozen=True)
class PolicyConfig:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.0
    cpu_norm: tuple[float, float] = (0.0, 1.0)
    cis_norm: tuple[float, float] = (0.0, 1.0)
    calibration_ref: str | None = None

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("mixing weights must be nonnegative")

    @property
    def cpu_degenerate(self) -> bool:
        return self.cpu_norm[1] - self.cpu_norm[0] <= NORM_DEGENERATE_EPS

    @property
    def cis_degenerate(self) -> bool:
        return self.cis_norm[1] - self.cis_norm[0] <= NORM_DEGENERATE_EPS

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "cpu_norm": {"min": self.cpu_norm[0], "max": self.cpu_norm[1]},
            "cis_norm": {"min": self.cis_norm[0], "max": self.cis_norm[1]},
            "calibration_ref": self.calibration_ref,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PolicyConfig":
        return cls(
            alpha=float(obj["alpha"]),
            beta=float(obj["beta"]),
            gamma=float(obj["gamma"]),
            cpu_norm=(float(obj["cpu_norm"]["min"]), float(obj["cpu_norm"]["max"])),
            cis_norm=(float(obj["cis_norm"]["min"]), float(obj["cis_norm"]["max"])),
            calibration_ref=obj.get("calibration_ref"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PolicyConfig":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ScoreEntry:
    raw_cpu: float
    raw_cis: float
    cost: float
    norm_cpu: float
    norm_cis: float
    combined: float


@dataclass(frozen=True)
class ScoreBreakdown:
    """Per-unrevealed-concept scores backing one selection."""

    entries: dict[int, ScoreEntry]  # keyed by 1-based concept index

    def to_json(self) -> dict:
        return {
            str(i): {
                "raw_cpu": e.raw_cpu,
                "raw_cis": e.raw_cis,
                "cost": e.cost,
                "norm_cpu": e.norm_cpu,
                "norm_cis": e.norm_cis,
                "combined": e.combined,
            }
            for i, e in self.entries.items()
        }


@dataclass(frozen=True)
class GreedyOrder:
    ordering: tuple[int, ...]  # permutation of 1..m
    fitted_on: str
    step_metrics: tuple[float, ...]

    def __post_init__(self):
        if sorted(self.ordering) != list(range(1, len(self.ordering) + 1)):
            raise ValueError("ordering must be a permutation of 1..m")

    def to_json(self) -> dict:
        return {
            "ordering": list(self.ordering),
            "fitted_on": self.fitted_on,
            "step_metrics": list(self.step_metrics),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GreedyOrder":
        return cls(
            ordering=tuple(int(i) for i in obj["ordering"]),
            fitted_on=obj.get("fitted_on", ""),
            step_metrics=tuple(float(v) for v in obj.get("step_metrics", [])),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "GreedyOrder":
        return cls.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# scores

def cpu_score(dist) -> float:
    """Shannon entropy in nats of a categorical distribution, 0 ln 0 := 0."""
    p = np.asarray(dist, dtype=float)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def cis_score(
    model: ConceptToLabelModel,
    instance: Instance,
    state: InterventionState,
    i: int,
    calibration: CalibrationMap | None = None,
) -> float:
    """Absolute expected change in the current top label's probability when
    concept i is revealed, expectation over i's (calibrated) distribution."""
    if i in state.revealed:
        raise AlreadyRevealedError(f"concept {i} already revealed")
    space = state.space
    k0 = state.current_top_label - 1
    base = float(state.current_label_dist[k0])
    weights = calibrate_distribution(
        np.asarray(instance.concept_probs[i - 1]), calibration
    )
    expected = 0.0
    for v in range(1, space.arities[i - 1] + 1):
        revealed = dict(state.revealed)
        revealed[i] = v
        p = model.predict(assemble_input(instance, space, revealed, calibration))
        expected += weights[v - 1] * float(p[k0])
    return abs(expected - base)


def _normalize(raw, norm: tuple[float, float]):
    lo, hi = norm
    if hi - lo <= NORM_DEGENERATE_EPS:
        return np.zeros_like(np.asarray(raw, dtype=float))
    return np.clip((np.asarray(raw, dtype=float) - lo) / (hi - lo), 0.0, 1.0)


def batch_raw_scores(
    model: ConceptToLabelModel,
    space: ConceptSpace,
    features: np.ndarray,
    concept_weights: list[np.ndarray],
    k0: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Raw CPU and CIS for every concept of every row, vectorized.

    features: (N, D) current assembled inputs; concept_weights[i]: (N, n_i)
    calibrated concept distributions (the expectation weights and the soft
    blocks); k0: (N,) 0-based current top labels. Revealed concepts get
    scores computed against their one-hot blocks; callers mask them out.
    """
    n = features.shape[0]
    rows = np.arange(n)
    base_k = model.predict(features)[rows, k0]
    offs = space.block_offsets()
    cpu = np.empty((n, space.m))
    cis = np.empty((n, space.m))
    for i in range(space.m):
        arity = space.arities[i]
        w = concept_weights[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            logw = np.where(w > 0, np.log(np.where(w > 0, w, 1.0)), 0.0)
        cpu[:, i] = -np.sum(w * logw, axis=1)
        expected = np.zeros(n)
        block = slice(offs[i], offs[i] + arity)
        for v in range(arity):
            f = features.copy()
            f[:, block] = 0.0
            f[:, offs[i] + v] = 1.0
            expected += w[:, v] * model.predict(f)[rows, k0]
        cis[:, i] = np.abs(expected - base_k)
    return cpu, cis


def fit_score_norm(
    valset: Dataset,
    model: ConceptToLabelModel,
    calibration: CalibrationMap | None = None,
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Min/max of raw CPU and raw CIS over all (instance, concept) pairs at
    the empty-revealed state; at policy time raw scores map to
    (raw - min)/(max - min) clamped to [0, 1]."""
    if len(valset) == 0:
        raise EmptyInputError("empty validation set")
    space = valset.space
    features = soft_features(valset, calibration)
    weights = [
        np.stack(
            [
                calibrate_distribution(np.asarray(inst.concept_probs[i]), calibration)
                for inst in valset.instances
            ]
        )
        for i in range(space.m)
    ]
    preds = model.predict(features)
    k0 = np.argmax(preds, axis=1)
    cpu, cis = batch_raw_scores(model, space, features, weights, k0)
    return (
        (float(cpu.min()), float(cpu.max())),
        (float(cis.min()), float(cis.max())),
    )


# ---------------------------------------------------------------------------
# selection operations

def coop_select(
    state: InterventionState,
    config: PolicyConfig,
    model: ConceptToLabelModel,
    cost_model: CostModel,
    calibration: CalibrationMap | None = None,
) -> tuple[int, ScoreBreakdown]:
    """Argmax over unrevealed concepts of
    alpha*normCPU + beta*normCIS - gamma*cost; ties toward the lowest index."""
    candidates = state.unrevealed()
    if not candidates:
        raise NothingToSelectError("all concepts revealed")
    entries = {}
    best_i, best_score = None, -np.inf
    for i in candidates:
        weights = calibrate_distribution(
            np.asarray(state.instance.concept_probs[i - 1]), calibration
        )
        raw_cpu = cpu_score(weights)
        raw_cis = cis_score(model, state.instance, state, i, calibration)
        q = cost_model.costs[i - 1]
        norm_cpu = float(_normalize(raw_cpu, config.cpu_norm))
        norm_cis = float(_normalize(raw_cis, config.cis_norm))
        combined = config.alpha * norm_cpu + config.beta * norm_cis - config.gamma * q
        entries[i] = ScoreEntry(raw_cpu, raw_cis, q, norm_cpu, norm_cis, combined)
        if combined > best_score:
            best_i, best_score = i, combined
    return best_i, ScoreBreakdown(entries=entries)


def random_select(state: InterventionState, rng: np.random.Generator) -> int:
    candidates = state.unrevealed()
    if not candidates:
        raise NothingToSelectError("all concepts revealed")
    return candidates[int(rng.integers(0, len(candidates)))]


def greedy_select(order: GreedyOrder, state: InterventionState) -> int:
    for i in order.ordering:
        if i not in state.revealed:
            return i
    raise NothingToSelectError("all concepts revealed")


def skyline_select(
    state: InterventionState,
    true_label: int,
    true_concepts: tuple[int, ...],
    model: ConceptToLabelModel,
    calibration: CalibrationMap | None = None,
) -> int:
    """Unrevealed concept whose ground-truth reveal maximizes the probability
    assigned to the true label; ties toward the lowest index."""
    candidates = state.unrevealed()
    if not candidates:
        raise NothingToSelectError("all concepts revealed")
    k0 = true_label - 1
    best_i, best_gain = None, -np.inf
    for i in candidates:
        revealed = dict(state.revealed)
        revealed[i] = true_concepts[i - 1]
        p = model.predict(
            assemble_input(state.instance, state.space, revealed, calibration)
        )
        if p[k0] > best_gain:
            best_i, best_gain = i, float(p[k0])
    return best_i


def greedy_fit(
    valset: Dataset,
    model: ConceptToLabelModel,
    metric: str = "accuracy",
    cost_model: CostModel | None = None,
    calibration: CalibrationMap | None = None,
) -> GreedyOrder:
    """Fit the static ordering: each position takes the concept whose
    ground-truth reveal (on top of all earlier positions) maximizes the
    validation metric; ties toward the lowest index."""
    if len(valset) == 0:
        raise EmptyInputError("empty validation set")
    space = valset.space
    features = soft_features(valset, calibration)
    true0 = valset.true_concepts_array()
    labels0 = valset.labels_array()
    offs = space.block_offsets()
    rows = np.arange(len(valset))

    def eval_metric(f: np.ndarray) -> float:
        preds = model.predict(f)
        if metric == "accuracy":
            return top1_accuracy(preds, labels0)
        if metric == "auc":
            return auc_metric(preds[:, 1], (labels0 == 1).astype(int))
        raise ValueError(f"unknown metric {metric!r}")

    remaining = list(range(space.m))
    ordering: list[int] = []
    step_metrics: list[float] = []
    while remaining:
        best_i, best_val = None, -np.inf
        for i in remaining:
            f = features.copy()
            block = slice(offs[i], offs[i] + space.arities[i])
            f[:, block] = 0.0
            f[rows, offs[i] + true0[:, i]] = 1.0
            val = eval_metric(f)
            if val > best_val:
                best_i, best_val = i, val
        block = slice(offs[best_i], offs[best_i] + space.arities[best_i])
        features[:, block] = 0.0
        features[rows, offs[best_i] + true0[:, best_i]] = 1.0
        remaining.remove(best_i)
        ordering.append(best_i + 1)
        step_metrics.append(best_val)
    return GreedyOrder(
        ordering=tuple(ordering),
        fitted_on=valset.split,
        step_metrics=tuple(step_metrics),
    )


# ---------------------------------------------------------------------------
# policy wrappers with a uniform select interface for rollouts

class CoopPolicy:
    name = "coop"

    def __init__(self, config, model, cost_model, calibration=None):
        self.config = config
        self.model = model
        self.cost_model = cost_model
        self.calibration = calibration
        self.last_breakdown: ScoreBreakdown | None = None

    def select(self, state: InterventionState) -> int:
        i, breakdown = coop_select(
            state, self.config, self.model, self.cost_model, self.calibration
        )
        self.last_breakdown = breakdown
        return i


class RandomPolicy:
    name = "random"

    def __init__(self, rng: np.random.Generator | int):
        self.rng = (
            rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        )
        self.last_breakdown = None

    def select(self, state: InterventionState) -> int:
        return random_select(state, self.rng)


class GreedyPolicy:
    name = "greedy"

    def __init__(self, order: GreedyOrder):
        self.order = order
        self.last_breakdown = None

    def select(self, state: InterventionState) -> int:
        return greedy_select(self.order, state)


class SkylinePolicy:
    name = "skyline"

    def __init__(self, model, calibration=None):
        self.model = model
        self.calibration = calibration
        self.last_breakdown = None

    def select(self, state: InterventionState) -> int:
        inst = state.instance
        return skyline_select(
            state, inst.label, inst.concept_true, self.model, self.calibration
        )
