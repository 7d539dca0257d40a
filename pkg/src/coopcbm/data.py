"""Concept/label/cost data model, dataset IO, and synthetic task generation.

Category values, concept indices, and labels are 1-based everywhere in the
public API (value of concept i lies in {1..n_i}, label in {1..K}); numeric
kernels convert to 0-based internally.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    MissingDifficultyError,
    ParseError,
    SchemaError,
)

# Distributions off by at most this much are renormalized on load; beyond it
# the row is rejected.
RENORM_TOL = 1e-6
STRICT_TOL = 1e-9

DIFFICULTY_COSTS = {
    "very easy": 1.0,
    "moderately difficult": 3.0,
    "very difficult": 10.0,
}


@dataclass(frozen=True)
class ConceptSpace:
    concept_names: tuple[str, ...]
    arities: tuple[int, ...]
    label_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "concept_names", tuple(self.concept_names))
        object.__setattr__(self, "arities", tuple(int(a) for a in self.arities))
        object.__setattr__(self, "label_names", tuple(self.label_names))
        if len(self.concept_names) < 1:
            raise SchemaError("need at least one concept")
        if len(self.concept_names) != len(self.arities):
            raise SchemaError("concept_names and arities length mismatch")
        if len(self.label_names) < 2:
            raise SchemaError("need at least two labels")
        if any(a < 2 for a in self.arities):
            raise SchemaError("every concept arity must be >= 2")
        if len(set(self.concept_names)) != len(self.concept_names):
            raise SchemaError("concept names must be unique")
        if len(set(self.label_names)) != len(self.label_names):
            raise SchemaError("label names must be unique")

    @property
    def m(self) -> int:
        return len(self.concept_names)

    @property
    def label_count(self) -> int:
        return len(self.label_names)

    @property
    def feature_dim(self) -> int:
        return sum(self.arities)

    def block_offsets(self) -> list[int]:
        """Start offset of each concept's block in the feature layout."""
        offs = [0]
        for a in self.arities[:-1]:
            offs.append(offs[-1] + a)
        return offs

    def to_json(self) -> dict:
        return {
            "concept_names": list(self.concept_names),
            "arities": list(self.arities),
            "label_names": list(self.label_names),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ConceptSpace":
        return cls(
            concept_names=obj["concept_names"],
            arities=obj["arities"],
            label_names=obj["label_names"],
        )


@dataclass(frozen=True)
class CostModel:
    costs: tuple[float, ...]
    kind: str  # unit | random | systematic

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(float(q) for q in self.costs))
        if self.kind not in ("unit", "random", "systematic"):
            raise ConfigError(f"unknown cost model kind {self.kind!r}")
        if any(q <= 0 for q in self.costs):
            raise SchemaError("all acquisition costs must be positive")
        if self.kind in ("random", "systematic"):
            total = sum(self.costs)
            if abs(total - 100.0) > 1e-9:
                raise SchemaError(
                    f"{self.kind} cost model must total 100, got {total!r}"
                )

    @property
    def total(self) -> float:
        return float(sum(self.costs))


@dataclass(frozen=True)
class Instance:
    id: str
    concept_probs: tuple[tuple[float, ...], ...]
    concept_true: tuple[int, ...]
    label: int

    def validate(self, space: ConceptSpace) -> None:
        if len(self.concept_probs) != space.m or len(self.concept_true) != space.m:
            raise SchemaError(f"instance {self.id}: expected {space.m} concepts")
        for i, (dist, arity) in enumerate(zip(self.concept_probs, space.arities)):
            if len(dist) != arity:
                raise SchemaError(
                    f"instance {self.id}: concept {i + 1} distribution has "
                    f"{len(dist)} entries, arity is {arity}"
                )
            if any(p < 0 for p in dist):
                raise SchemaError(
                    f"instance {self.id}: concept {i + 1} has a negative probability"
                )
            if abs(sum(dist) - 1.0) > STRICT_TOL:
                raise SchemaError(
                    f"instance {self.id}: concept {i + 1} distribution sums to "
                    f"{sum(dist)!r}"
                )
            if not 1 <= self.concept_true[i] <= arity:
                raise SchemaError(
                    f"instance {self.id}: concept {i + 1} true value "
                    f"{self.concept_true[i]} out of range 1..{arity}"
                )
        if not 1 <= self.label <= space.label_count:
            raise SchemaError(
                f"instance {self.id}: label {self.label} out of range "
                f"1..{space.label_count}"
            )


@dataclass(frozen=True)
class Dataset:
    space: ConceptSpace
    instances: tuple[Instance, ...]
    split: str  # train | val | test

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        if self.split not in ("train", "val", "test"):
            raise SchemaError(f"unknown split {self.split!r}")
        for inst in self.instances:
            inst.validate(self.space)

    def __len__(self) -> int:
        return len(self.instances)

    def labels_array(self) -> np.ndarray:
        """0-based label indices, shape (n,)."""
        return np.array([inst.label - 1 for inst in self.instances], dtype=int)

    def true_concepts_array(self) -> np.ndarray:
        """0-based true category per concept, shape (n, m)."""
        return np.array(
            [[v - 1 for v in inst.concept_true] for inst in self.instances], dtype=int
        )

    def subsample(self, fraction: float, seed: int) -> "Dataset":
        from .errors import FractionError

        if not 0 < fraction <= 1:
            raise FractionError(f"fraction must be in (0, 1], got {fraction}")
        n = max(1, int(round(fraction * len(self.instances))))
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(len(self.instances), size=n, replace=False))
        return Dataset(self.space, tuple(self.instances[i] for i in idx), self.split)


@dataclass(frozen=True)
class SyntheticTaskConfig:
    m: int
    label_count: int
    arities: tuple[int, ...] = ()  # empty means all binary
    prototype_flip_rate: float = 0.2
    probe_sharpness: float = 2.0
    probe_noise: float = 1.0
    miscalibration_exponent: float = 1.0
    n_train: int = 1000
    n_val: int = 500
    n_test: int = 500
    seed: int = 0

    def __post_init__(self):
        arities = tuple(self.arities) if self.arities else tuple([2] * self.m)
        object.__setattr__(self, "arities", arities)
        if self.m < 1 or self.label_count < 2:
            raise ConfigError("need m >= 1 and label_count >= 2")
        if len(arities) != self.m or any(a < 2 for a in arities):
            raise ConfigError("arities must list m integers >= 2")
        if not 0 <= self.prototype_flip_rate < 0.5:
            raise ConfigError("prototype_flip_rate must lie in [0, 0.5)")
        if self.probe_sharpness <= 0:
            raise ConfigError("probe_sharpness must be positive")
        if self.probe_noise < 0:
            raise ConfigError("probe_noise must be nonnegative")
        if self.miscalibration_exponent <= 0:
            raise ConfigError("miscalibration_exponent must be positive")
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ConfigError("split sizes must be positive")

    def space(self) -> ConceptSpace:
        return ConceptSpace(
            concept_names=tuple(f"c{i + 1}" for i in range(self.m)),
            arities=self.arities,
            label_names=tuple(f"y{k + 1}" for k in range(self.label_count)),
        )


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def save_space(space: ConceptSpace, path: str | Path) -> None:
    Path(path).write_text(json.dumps(space.to_json(), indent=2) + "\n")


def load_space(path: str | Path) -> ConceptSpace:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"bad space file {path}: {e}") from e
    return ConceptSpace.from_json(obj)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """JSON-lines, one instance per row, probabilities at 9 significant digits."""
    with open(path, "w") as f:
        for inst in dataset.instances:
            row = {
                "id": inst.id,
                "concept_probs": [
                    [float(_fmt(p)) for p in dist] for dist in inst.concept_probs
                ],
                "concept_true": list(inst.concept_true),
                "label": inst.label,
            }
            f.write(json.dumps(row) + "\n")


def load_dataset(path: str | Path, space: ConceptSpace, split: str = "test") -> Dataset:
    instances = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"bad JSON: {e}", line=lineno) from e
            try:
                probs = row["concept_probs"]
                inst = Instance(
                    id=str(row["id"]),
                    concept_probs=tuple(
                        _check_distribution(dist, lineno, i)
                        for i, dist in enumerate(probs)
                    ),
                    concept_true=tuple(int(v) for v in row["concept_true"]),
                    label=int(row["label"]),
                )
            except (KeyError, TypeError, ValueError) as e:
                raise ParseError(f"malformed row: {e}", line=lineno) from e
            inst.validate(space)
            instances.append(inst)
    return Dataset(space=space, instances=tuple(instances), split=split)


def _check_distribution(dist, lineno: int, concept_idx: int) -> tuple[float, ...]:
    vals = [float(p) for p in dist]
    if any(p < 0 for p in vals):
        raise SchemaError(
            f"line {lineno}: concept {concept_idx + 1} has a negative probability"
        )
    total = sum(vals)
    if abs(total - 1.0) > RENORM_TOL:
        raise SchemaError(
            f"line {lineno}: concept {concept_idx + 1} distribution sums to {total!r}"
        )
    if total != 1.0:
        vals = [p / total for p in vals]
    return tuple(vals)


def generate_synthetic(
    config: SyntheticTaskConfig,
) -> tuple[Dataset, Dataset, Dataset]:
    """Generate train/val/test splits for a prototype-plus-noise concept task.

    Per class, one prototype category tuple is drawn uniformly. Per instance a
    uniform label is drawn, each concept flips away from its prototype with
    probability prototype_flip_rate, and the simulated concept probe places
    logit probe_sharpness on the true category plus Gaussian(0, probe_noise)
    on every category logit before a softmax. Binary concept probabilities are
    then distorted by p -> p^t / (p^t + (1-p)^t) with t the miscalibration
    exponent. Deterministic given the seed.
    """
    rng = np.random.default_rng(config.seed)
    space = config.space()
    arities = np.array(config.arities)

    # 0-based prototypes, shape (K, m)
    prototypes = np.stack(
        [rng.integers(0, arities) for _ in range(config.label_count)]
    )

    tau = config.miscalibration_exponent

    def make_split(n: int, split: str, prefix: str) -> Dataset:
        instances = []
        for j in range(n):
            label = int(rng.integers(0, config.label_count))
            true = prototypes[label].copy()
            for i in range(config.m):
                if rng.random() < config.prototype_flip_rate:
                    other = int(rng.integers(0, arities[i] - 1))
                    if other >= true[i]:
                        other += 1
                    true[i] = other
            probs = []
            for i in range(config.m):
                logits = rng.normal(0.0, config.probe_noise, size=arities[i])
                logits[true[i]] += config.probe_sharpness
                logits -= logits.max()
                p = np.exp(logits)
                p /= p.sum()
                if arities[i] == 2 and tau != 1.0:
                    a = p[0] ** tau
                    b = p[1] ** tau
                    p = np.array([a / (a + b), b / (a + b)])
                probs.append(tuple(float(x) for x in p))
            instances.append(
                Instance(
                    id=f"{prefix}{j}",
                    concept_probs=tuple(probs),
                    concept_true=tuple(int(v) + 1 for v in true),
                    label=label + 1,
                )
            )
        return Dataset(space=space, instances=tuple(instances), split=split)

    train = make_split(config.n_train, "train", "tr")
    val = make_split(config.n_val, "val", "va")
    test = make_split(config.n_test, "test", "te")
    return train, val, test


def make_cost_model(
    kind: str,
    space: ConceptSpace,
    seed: int | None = None,
    cost_file: str | Path | None = None,
) -> CostModel:
    """Build a cost model of the given kind.

    unit: every concept costs 1 (used directly as step counts, not normalized).
    random: raw costs drawn uniformly from [1, 7], scaled so they total 100.
    systematic: difficulty file maps each concept name to very easy /
    moderately difficult / very difficult (raw costs 1/3/10), scaled to 100.
    """
    m = space.m
    if kind == "unit":
        return CostModel(costs=tuple([1.0] * m), kind="unit")
    if kind == "random":
        if seed is None:
            raise ConfigError("random cost model requires a seed")
        rng = np.random.default_rng(seed)
        raw = rng.uniform(1.0, 7.0, size=m)
        return CostModel(costs=_normalize_to_100(raw), kind="random")
    if kind == "systematic":
        if cost_file is None:
            raise MissingDifficultyError(
                "systematic cost model requires a difficulty file"
            )
        try:
            table = json.loads(Path(cost_file).read_text())
        except json.JSONDecodeError as e:
            raise ParseError(f"bad cost file {cost_file}: {e}") from e
        raw = []
        for name in space.concept_names:
            if name not in table:
                raise MissingDifficultyError(f"no difficulty for concept {name!r}")
            diff = table[name]
            if diff not in DIFFICULTY_COSTS:
                raise MissingDifficultyError(
                    f"unknown difficulty {diff!r} for concept {name!r}"
                )
            raw.append(DIFFICULTY_COSTS[diff])
        return CostModel(costs=_normalize_to_100(np.array(raw)), kind="systematic")
    raise ConfigError(f"unknown cost model kind {kind!r}")


def _normalize_to_100(raw: np.ndarray) -> tuple[float, ...]:
    scaled = raw * (100.0 / raw.sum())
    # absorb residual rounding into the last entry so the total is exactly 100
    scaled[-1] = 100.0 - scaled[:-1].sum()
    return tuple(float(q) for q in scaled)


def save_cost_model(cost_model: CostModel, space: ConceptSpace, path: str | Path):
    obj = {
        "kind": cost_model.kind,
        "costs": {
            name: float(_fmt(q))
            for name, q in zip(space.concept_names, cost_model.costs)
        },
    }
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def load_cost_model(path: str | Path, space: ConceptSpace) -> CostModel:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"bad cost file {path}: {e}") from e
    table = obj["costs"]
    missing = [n for n in space.concept_names if n not in table]
    if missing:
        raise SchemaError(f"cost file missing concepts: {missing}")
    kind = obj.get("kind", "unit")
    costs = tuple(float(table[n]) for n in space.concept_names)
    if kind in ("random", "systematic"):
        # serialized at 9 significant digits; rescale text-format drift
        total = sum(costs)
        if abs(total - 100.0) > RENORM_TOL:
            raise SchemaError(f"{kind} cost file totals {total!r}, expected 100")
        costs = _normalize_to_100(np.asarray(costs))
    return CostModel(costs=costs, kind=kind)
