"""Concept-to-label predictor and intervention feature assembly.

The predictor maps a concatenated concept feature vector (one block of
length n_i per concept, each block a probability distribution or a one-hot
vector) to label probabilities via softmax. Architectures: linear, or one
tanh hidden layer.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import CalibrationMap, apply_calibration
from .data import ConceptSpace, Dataset, Instance
from .errors import ArityError, ConfigError, DimensionError, EmptyInputError


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 200
    batch_size: int = 64
    weight_decay: float = 1e-4
    seed: int = 0
    architecture: str = "linear"  # linear | mlp
    hidden_width: int = 64

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigError("learning rate, epochs and batch size must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight decay must be nonnegative")
        if self.architecture not in ("linear", "mlp"):
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.architecture == "mlp" and self.hidden_width < 1:
            raise ConfigError("hidden width must be positive")


@dataclass
class ConceptToLabelModel:
    space: ConceptSpace
    architecture: str
    # linear: w_out is (K, D); mlp: w_hidden (h, D), w_out (K, h)
    w_out: np.ndarray
    b_out: np.ndarray
    w_hidden: np.ndarray | None = None
    b_hidden: np.ndarray | None = None
    trained_on: str = ""
    degenerate_labels: bool = False

    @property
    def feature_dim(self) -> int:
        return self.space.feature_dim

    def logits(self, features: np.ndarray) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.feature_dim:
            raise DimensionError(
                f"feature dimension {x.shape[1]} != model dimension {self.feature_dim}"
            )
        if self.architecture == "mlp":
            h = np.tanh(x @ self.w_hidden.T + self.b_hidden)
            z = h @ self.w_out.T + self.b_out
        else:
            z = x @ self.w_out.T + self.b_out
        return z[0] if squeeze else z

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Label probabilities; accepts a single D-vector or an (N, D) batch."""
        return softmax(self.logits(features))

    def to_json(self) -> dict:
        obj = {
            "architecture": self.architecture,
            "space": self.space.to_json(),
            "w_out": self.w_out.tolist(),
            "b_out": self.b_out.tolist(),
            "trained_on": self.trained_on,
            "degenerate_labels": self.degenerate_labels,
        }
        if self.architecture == "mlp":
            obj["w_hidden"] = self.w_hidden.tolist()
            obj["b_hidden"] = self.b_hidden.tolist()
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "ConceptToLabelModel":
        return cls(
            space=ConceptSpace.from_json(obj["space"]),
            architecture=obj["architecture"],
            w_out=np.asarray(obj["w_out"], dtype=float),
            b_out=np.asarray(obj["b_out"], dtype=float),
            w_hidden=(
                np.asarray(obj["w_hidden"], dtype=float)
                if obj["architecture"] == "mlp"
                else None
            ),
            b_hidden=(
                np.asarray(obj["b_hidden"], dtype=float)
                if obj["architecture"] == "mlp"
                else None
            ),
            trained_on=obj.get("trained_on", ""),
            degenerate_labels=bool(obj.get("degenerate_labels", False)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ConceptToLabelModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def one_hot_features(space: ConceptSpace, true0: np.ndarray) -> np.ndarray:
    """Feature matrix with every block one-hot at the 0-based true categories."""
    true0 = np.atleast_2d(true0)
    n = true0.shape[0]
    x = np.zeros((n, space.feature_dim))
    for i, off in enumerate(space.block_offsets()):
        x[np.arange(n), off + true0[:, i]] = 1.0
    return x


def calibrate_distribution(
    dist: np.ndarray, calibration: CalibrationMap | None
) -> np.ndarray:
    """Apply the shared calibration map entrywise and renormalize the block."""
    dist = np.asarray(dist, dtype=float)
    if calibration is None:
        return dist
    mapped = np.asarray(apply_calibration(calibration, dist), dtype=float)
    total = mapped.sum()
    if total <= 0:
        return np.full_like(dist, 1.0 / len(dist))
    return mapped / total


def soft_features(
    dataset: Dataset, calibration: CalibrationMap | None = None
) -> np.ndarray:
    """(N, D) matrix of unrevealed (optionally calibrated) probability blocks."""
    space = dataset.space
    x = np.empty((len(dataset), space.feature_dim))
    offs = space.block_offsets()
    for r, inst in enumerate(dataset.instances):
        for i, dist in enumerate(inst.concept_probs):
            x[r, offs[i] : offs[i] + space.arities[i]] = calibrate_distribution(
                np.asarray(dist), calibration
            )
    return x


def assemble_input(
    instance: Instance,
    space: ConceptSpace,
    revealed: dict[int, int],
    calibration: CalibrationMap | None = None,
) -> np.ndarray:
    """Mixed feature vector: one-hot blocks for revealed concepts (1-based
    index -> 1-based category value), probability blocks otherwise."""
    offs = space.block_offsets()
    x = np.empty(space.feature_dim)
    for i in range(space.m):
        arity = space.arities[i]
        block = slice(offs[i], offs[i] + arity)
        if (i + 1) in revealed:
            v = revealed[i + 1]
            if not 1 <= v <= arity:
                raise ArityError(
                    f"concept {i + 1} value {v} out of range 1..{arity}"
                )
            x[block] = 0.0
            x[offs[i] + v - 1] = 1.0
        else:
            x[block] = calibrate_distribution(
                np.asarray(instance.concept_probs[i]), calibration
            )
    bad = set(revealed) - set(range(1, space.m + 1))
    if bad:
        raise ArityError(f"revealed concept indices out of range: {sorted(bad)}")
    return x


def train_cy(train: Dataset, config: TrainConfig) -> ConceptToLabelModel:
    """Train the concept-to-label model on one-hot true concepts.

    Mini-batch gradient descent on mean cross-entropy with L2 weight decay;
    deterministic given config.seed. Returns the final-epoch model.
    """
    if len(train) == 0:
        raise EmptyInputError("empty training split")
    space = train.space
    x = one_hot_features(space, train.true_concepts_array())
    y0 = train.labels_array()
    n, d = x.shape
    k = space.label_count
    y_onehot = np.zeros((n, k))
    y_onehot[np.arange(n), y0] = 1.0

    degenerate = len(np.unique(y0)) == 1
    if degenerate:
        warnings.warn("all training instances share one label", stacklevel=2)

    rng = np.random.default_rng(config.seed)
    if config.architecture == "mlp":
        h = config.hidden_width
        w1 = rng.normal(0.0, 1.0 / np.sqrt(d), size=(h, d))
        b1 = np.zeros(h)
        w2 = rng.normal(0.0, 1.0 / np.sqrt(h), size=(k, h))
        b2 = np.zeros(k)
    else:
        w1 = b1 = None
        w2 = rng.normal(0.0, 0.01, size=(k, d))
        b2 = np.zeros(k)

    lr = config.learning_rate
    wd = config.weight_decay
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            xb, yb = x[idx], y_onehot[idx]
            nb = len(idx)
            if config.architecture == "mlp":
                hb = np.tanh(xb @ w1.T + b1)
                p = softmax(hb @ w2.T + b2)
                dz = (p - yb) / nb
                dw2 = dz.T @ hb + wd * w2
                db2 = dz.sum(axis=0)
                dh = (dz @ w2) * (1.0 - hb**2)
                dw1 = dh.T @ xb + wd * w1
                db1 = dh.sum(axis=0)
                w1 -= lr * dw1
                b1 -= lr * db1
                w2 -= lr * dw2
                b2 -= lr * db2
            else:
                p = softmax(xb @ w2.T + b2)
                dz = (p - yb) / nb
                w2 -= lr * (dz.T @ xb + wd * w2)
                b2 -= lr * dz.sum(axis=0)

    return ConceptToLabelModel(
        space=space,
        architecture=config.architecture,
        w_out=w2,
        b_out=b2,
        w_hidden=w1,
        b_hidden=b1,
        trained_on=train.split,
        degenerate_labels=degenerate,
    )


def loss_and_gradients(
    model: ConceptToLabelModel, x: np.ndarray, y0: np.ndarray, weight_decay: float = 0.0
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and analytic parameter gradients (same objective as train_cy)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y0 = np.asarray(y0, dtype=int)
    n = len(y0)
    y_onehot = np.zeros((n, model.space.label_count))
    y_onehot[np.arange(n), y0] = 1.0
    if model.architecture == "mlp":
        h = np.tanh(x @ model.w_hidden.T + model.b_hidden)
        p = softmax(h @ model.w_out.T + model.b_out)
        dz = (p - y_onehot) / n
        grads = {
            "w_out": dz.T @ h + weight_decay * model.w_out,
            "b_out": dz.sum(axis=0),
        }
        dh = (dz @ model.w_out) * (1.0 - h**2)
        grads["w_hidden"] = dh.T @ x + weight_decay * model.w_hidden
        grads["b_hidden"] = dh.sum(axis=0)
    else:
        p = softmax(x @ model.w_out.T + model.b_out)
        dz = (p - y_onehot) / n
        grads = {
            "w_out": dz.T @ x + weight_decay * model.w_out,
            "b_out": dz.sum(axis=0),
        }
    loss = cross_entropy_loss(model, x, y0, weight_decay)
    return loss, grads


def cross_entropy_loss(
    model: ConceptToLabelModel, x: np.ndarray, y0: np.ndarray, weight_decay: float = 0.0
) -> float:
    """Mean cross-entropy plus the L2 penalty used during training."""
    p = model.predict(x)
    loss = -float(np.mean(np.log(p[np.arange(len(y0)), y0] + 1e-300)))
    if weight_decay > 0:
        penalty = float(np.sum(model.w_out**2))
        if model.architecture == "mlp":
            penalty += float(np.sum(model.w_hidden**2))
        loss += 0.5 * weight_decay * penalty
    return loss
