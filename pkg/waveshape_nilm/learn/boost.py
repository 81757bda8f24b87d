"""
Multi-class AdaBoost (SAMME) over exhaustively searched decision stumps.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np

from ..errors import ArgumentError, SizeError
from .dataset import SplitDataset

logger = logging.getLogger(__name__)

DEFAULT_ROUNDS = 50
# Error floor so a perfect stump still gets a finite weight
EPS_FLOOR = 1e-10


@dataclass(frozen=True)
class Stump:
    """x[feature] <= threshold votes left_class, otherwise right_class."""

    feature: int
    threshold: float
    left_class: int
    right_class: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(X[:, self.feature] <= self.threshold, self.left_class, self.right_class)


@dataclass(frozen=True)
class BoostRound:
    stump: Stump
    alpha: float
    error: float


@dataclass(frozen=True, eq=False)
class BoostModel:
    rounds: Tuple[BoostRound, ...]
    n_classes: int
    n_features: int
    # Weighted majority class, used when no round was kept
    prior_class: int = 0
    seed: int = 0

    kind = "adaboost"

    @property
    def num_rounds(self) -> int:
        return len(self.rounds)

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        votes = np.zeros((len(X), self.n_classes))
        rows = np.arange(len(X))
        for r in self.rounds:
            votes[rows, r.stump.predict(X)] += r.alpha
        return votes

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Class with the largest alpha-weighted vote; ties go to the lowest id."""
        if not self.rounds:
            return np.full(len(np.atleast_2d(X)), self.prior_class, dtype=int)
        return np.argmax(self.scores(X), axis=1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "prior_class": self.prior_class,
            "seed": self.seed,
            "rounds": [
                {
                    "feature": r.stump.feature,
                    "threshold": r.stump.threshold,
                    "left_class": r.stump.left_class,
                    "right_class": r.stump.right_class,
                    "alpha": r.alpha,
                    "error": r.error,
                }
                for r in self.rounds
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BoostModel":
        rounds = tuple(
            BoostRound(
                stump=Stump(
                    feature=int(r["feature"]),
                    threshold=float(r["threshold"]),
                    left_class=int(r["left_class"]),
                    right_class=int(r["right_class"]),
                ),
                alpha=float(r["alpha"]),
                error=float(r["error"]),
            )
            for r in data["rounds"]
        )
        return cls(
            rounds=rounds,
            n_classes=int(data["n_classes"]),
            n_features=int(data["n_features"]),
            prior_class=int(data.get("prior_class", 0)),
            seed=int(data.get("seed", 0)),
        )


def samme_alpha(error: float, n_classes: int) -> float:
    """Round weight ln((1 - e) / e) + ln(C - 1)."""
    return math.log((1.0 - error) / error) + math.log(n_classes - 1)


def best_stump(X: np.ndarray, y: np.ndarray, w: np.ndarray, n_classes: int) -> Tuple[Stump, float]:
    """
    Exhaustive search over features, midpoint thresholds and left/right class votes.

    Cumulative weighted class masses along each sorted feature give the best
    class on each side of every cut in one pass.

    Returns:
        (stump, weighted error)
    """
    weighted = w[:, None] * np.eye(n_classes)[y]
    total = weighted.sum(axis=0)
    best, best_error = None, np.inf

    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        left = np.cumsum(weighted[order], axis=0)
        # Valid cuts sit between distinct values; the last row is the all-left stump
        cut = np.append(xs[1:] > xs[:-1], True)
        if not cut.any():
            continue
        left = left[cut]
        right = total - left
        correct = left.max(axis=1) + right.max(axis=1)
        k = int(np.argmax(correct))
        error = float(max(0.0, 1.0 - correct[k]))
        if error < best_error:
            position = np.flatnonzero(cut)[k]
            threshold = xs[position] if position == len(xs) - 1 else 0.5 * (xs[position] + xs[position + 1])
            best = Stump(
                feature=f,
                threshold=float(threshold),
                left_class=int(np.argmax(left[k])),
                right_class=int(np.argmax(right[k])),
            )
            best_error = error
    return best, best_error


def train_adaboost(split: SplitDataset, T: int = DEFAULT_ROUNDS, seed: int = 0) -> BoostModel:
    """
    SAMME boosting of decision stumps.

    Each round fits the best stump to the current weights, weighs it by
    samme_alpha and up-weights misclassified examples. Boosting stops before
    a stump whose error reaches 1 - 1/C, and after a stump with zero error.
    The stump search is exhaustive, so the seed is only recorded.

    Args:
        split: train/cv/test data; only train is used
        T: maximum number of rounds
        seed: recorded with the model

    Returns:
        BoostModel
    """
    if T < 1:
        raise ArgumentError(f"T must be at least 1, got {T}")
    train = split.train
    if len(train) == 0:
        raise SizeError("Training set is empty")
    X, y, c = train.X, train.y, split.n_classes

    w = np.full(len(y), 1.0 / len(y))
    prior = int(np.argmax(np.bincount(y, minlength=c)))
    rounds = []
    if c >= 2:
        for _ in range(T):
            stump, error = best_stump(X, y, w, c)
            if stump is None or error >= 1.0 - 1.0 / c:
                break
            alpha = samme_alpha(max(error, EPS_FLOOR), c)
            rounds.append(BoostRound(stump=stump, alpha=alpha, error=error))
            if error <= EPS_FLOOR:
                break
            miss = stump.predict(X) != y
            w = w * np.exp(alpha * miss)
            w /= w.sum()

    logger.debug(f"AdaBoost kept {len(rounds)} of {T} rounds")
    return BoostModel(
        rounds=tuple(rounds),
        n_classes=c,
        n_features=train.n_features,
        prior_class=prior,
        seed=seed,
    )
