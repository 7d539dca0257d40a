"""Isotonic (pool-adjacent-violators) calibration of concept probabilities.

One map is fitted on probability/outcome pairs pooled across all concepts
and all training instances; multi-category concepts contribute one pair per
category.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyInputError

__all__ = ["CalibrationMap", "fit_isotonic", "apply_calibration", "pooled_pairs", "ece"]


@dataclass(frozen=True)
class CalibrationMap:
    """Nondecreasing piecewise-linear map on [0, 1] given by breakpoints."""

    inputs: tuple[float, ...]
    outputs: tuple[float, ...]

    def __post_init__(self):
        x = np.asarray(self.inputs)
        y = np.asarray(self.outputs)
        if len(x) == 0 or len(x) != len(y):
            raise EmptyInputError("calibration map needs matching breakpoints")
        if np.any(np.diff(x) <= 0):
            raise ValueError("breakpoint inputs must be strictly increasing")
        if np.any(np.diff(y) < 0):
            raise ValueError("breakpoint outputs must be nondecreasing")
        if x.min() < 0 or x.max() > 1 or y.min() < 0 or y.max() > 1:
            raise ValueError("breakpoints must lie in [0, 1]")

    def to_json(self) -> dict:
        return {
            "breakpoints": [
                [float(a), float(b)] for a, b in zip(self.inputs, self.outputs)
            ]
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CalibrationMap":
        pts = obj["breakpoints"]
        return cls(
            inputs=tuple(p[0] for p in pts), outputs=tuple(p[1] for p in pts)
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationMap":
        return cls.from_json(json.loads(Path(path).read_text()))


def _pav(y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted pool-adjacent-violators: nondecreasing least-squares fit."""
    # blocks as (value, weight, count), merged left while out of order
    vals: list[float] = []
    wts: list[float] = []
    cnts: list[int] = []
    for yi, wi in zip(y, w):
        vals.append(float(yi))
        wts.append(float(wi))
        cnts.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            v = (vals[-2] * wts[-2] + vals[-1] * wts[-1]) / (wts[-2] + wts[-1])
            wts[-2] += wts[-1]
            cnts[-2] += cnts[-1]
            vals[-2] = v
            vals.pop()
            wts.pop()
            cnts.pop()
    out = np.empty(len(y))
    pos = 0
    for v, c in zip(vals, cnts):
        out[pos : pos + c] = v
        pos += c
    return out


def fit_isotonic(pairs) -> CalibrationMap:
    """Fit the PAV solution to (predicted probability, binary outcome) pairs.

    Pairs sharing an input probability are averaged into a single weighted
    point before pooling, so the fitted inputs are strictly increasing.
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise EmptyInputError("need at least two (probability, outcome) pairs")
    p = np.asarray([float(a) for a, _ in pairs])
    t = np.asarray([float(b) for _, b in pairs])
    if p.min() < 0 or p.max() > 1:
        raise ValueError("probabilities must lie in [0, 1]")
    if not np.all((t == 0) | (t == 1)):
        raise ValueError("outcomes must be 0 or 1")

    order = np.argsort(p, kind="stable")
    p, t = p[order], t[order]
    ux, start = np.unique(p, return_index=True)
    counts = np.diff(np.append(start, len(p)))
    sums = np.add.reduceat(t, start)
    fitted = np.clip(_pav(sums / counts, counts.astype(float)), 0.0, 1.0)
    # PAV output is piecewise constant; keeping only the endpoints of each
    # constant run leaves the interpolated map unchanged
    keep = np.zeros(len(ux), dtype=bool)
    keep[0] = keep[-1] = True
    keep[1:] |= fitted[1:] != fitted[:-1]
    keep[:-1] |= fitted[1:] != fitted[:-1]
    return CalibrationMap(
        inputs=tuple(float(x) for x in ux[keep]),
        outputs=tuple(float(v) for v in fitted[keep]),
    )


def apply_calibration(cal: CalibrationMap, p) -> float | np.ndarray:
    """Piecewise-linear interpolation, clamped to the fitted range."""
    out = np.interp(p, cal.inputs, cal.outputs)
    if np.isscalar(p) or np.ndim(p) == 0:
        return float(out)
    return out


def pooled_pairs(dataset) -> list[tuple[float, int]]:
    """Pool (predicted probability, category indicator) pairs over a dataset.

    Every category of every concept of every instance contributes one pair.
    """
    pairs = []
    for inst in dataset.instances:
        for i, dist in enumerate(inst.concept_probs):
            true0 = inst.concept_true[i] - 1
            for v, pv in enumerate(dist):
                pairs.append((float(pv), 1 if v == true0 else 0))
    return pairs


def ece(probs, outcomes, bins: int = 10) -> float:
    """Expected calibration error with equal-width bins on [0, 1]."""
    probs = np.asarray(probs, dtype=float)
    outcomes = np.asarray(outcomes, dtype=float)
    if len(probs) == 0:
        raise EmptyInputError("ece needs at least one pair")
    idx = np.clip((probs * bins).astype(int), 0, bins - 1)
    total = len(probs)
    err = 0.0
    for b in range(bins):
        mask = idx == b
        n = int(mask.sum())
        if n == 0:
            continue
        err += (n / total) * abs(probs[mask].mean() - outcomes[mask].mean())
    return float(err)
