"""
Gaussian-kernel SVM: one-vs-one binary machines trained by sequential minimal
optimization on the maximal violating pair.
"""

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import ArgumentError, InputScalingError, SizeError
from .ann import zscore_stats
from .dataset import SplitDataset

logger = logging.getLogger(__name__)

SMO_TOL = 1e-3
DEFAULT_CBOX = 10.0
# Curvature floor for non-positive pair curvature
TAU = 1e-12


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    K = np.exp(-gamma * cdist(A, B, "sqeuclidean"))
    if not np.all(np.isfinite(K)):
        raise InputScalingError("Kernel values are not finite; rescale the features")
    return K


@dataclass(frozen=True, eq=False)
class SvmPair:
    """Binary machine separating class a (+1) from class b (-1)."""

    a: int
    b: int
    support: np.ndarray  # indices into SvmModel.vectors
    coef: np.ndarray  # y_i * alpha_i
    bias: float


@dataclass(frozen=True, eq=False)
class SvmModel:
    gamma: float
    cbox: float
    n_classes: int
    mean: np.ndarray
    std: np.ndarray
    vectors: np.ndarray  # normalized support vectors shared by all pairs
    pairs: Tuple[SvmPair, ...]
    # Label when training saw a single class
    default_class: int = 0

    kind = "svm"

    @property
    def n_features(self) -> int:
        return len(self.mean)

    def normalize(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def pair_decisions(self, X: np.ndarray) -> np.ndarray:
        """Decision value of every pair machine, shape (n, n_pairs)."""
        Z = self.normalize(np.atleast_2d(X))
        if len(self.vectors) == 0:
            return np.tile([p.bias for p in self.pairs], (len(Z), 1))
        K = rbf_kernel(Z, self.vectors, self.gamma)
        return np.stack([K[:, p.support] @ p.coef + p.bias for p in self.pairs], axis=1)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """
        Pairwise vote; ties go to the class with the larger summed decision
        value, then to the lowest class id.
        """
        X = np.atleast_2d(X)
        n = len(X)
        if not self.pairs:
            return np.full(n, self.default_class, dtype=int)
        decisions = self.pair_decisions(X)
        votes = np.zeros((n, self.n_classes))
        score = np.zeros((n, self.n_classes))
        for k, pair in enumerate(self.pairs):
            d = decisions[:, k]
            votes[:, pair.a] += d > 0
            votes[:, pair.b] += d <= 0
            score[:, pair.a] += d
            score[:, pair.b] -= d
        top = votes == votes.max(axis=1, keepdims=True)
        ranked = np.where(top, score, -np.inf)
        return np.argmax(ranked, axis=1)

    def dual_residuals(self) -> List[float]:
        """|sum(y_i alpha_i)| per pair machine."""
        return [abs(float(p.coef.sum())) for p in self.pairs]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "gamma": self.gamma,
            "cbox": self.cbox,
            "n_classes": self.n_classes,
            "default_class": self.default_class,
            "mean": self.mean,
            "std": self.std,
            "vectors": self.vectors,
            "pairs": [
                {"a": p.a, "b": p.b, "support": p.support, "coef": p.coef, "bias": p.bias}
                for p in self.pairs
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SvmModel":
        mean = np.array(data["mean"], dtype=float)
        vectors = np.array(data["vectors"], dtype=float).reshape(-1, len(mean))
        return cls(
            gamma=float(data["gamma"]),
            cbox=float(data["cbox"]),
            n_classes=int(data["n_classes"]),
            mean=mean,
            std=np.array(data["std"], dtype=float),
            vectors=vectors,
            pairs=tuple(
                SvmPair(
                    a=int(p["a"]),
                    b=int(p["b"]),
                    support=np.array(p["support"], dtype=int),
                    coef=np.array(p["coef"], dtype=float),
                    bias=float(p["bias"]),
                )
                for p in data["pairs"]
            ),
            default_class=int(data.get("default_class", 0)),
        )


def smo(
    K: np.ndarray,
    y: np.ndarray,
    cbox: float,
    tol: float = SMO_TOL,
    max_iter: Optional[int] = None,
) -> Tuple[np.ndarray, float]:
    """
    Solve the binary soft-margin dual for labels y in {-1, +1}.

    Works on signed coefficients beta_i = y_i alpha_i with box
    min(0, y_i C) <= beta_i <= max(0, y_i C); each step moves the maximal
    violating pair until the KKT gap is below tol.

    Returns:
        (beta, bias) with decision f(x) = sum_i beta_i K(x_i, x) + bias
    """
    n = len(y)
    y = np.asarray(y, dtype=float)
    lo = np.minimum(0.0, y * cbox)
    hi = np.maximum(0.0, y * cbox)
    beta = np.zeros(n)
    grad = y.copy()
    diag = np.diag(K)
    max_iter = max_iter or max(10000, 100 * n)

    gap = np.inf
    for _ in range(max_iter):
        up = beta < hi
        down = beta > lo
        i = int(np.argmax(np.where(up, grad, -np.inf)))
        j = int(np.argmin(np.where(down, grad, np.inf)))
        gap = grad[i] - grad[j]
        if gap < tol:
            break
        curvature = max(diag[i] + diag[j] - 2.0 * K[i, j], TAU)
        room_i, room_j = hi[i] - beta[i], beta[j] - lo[j]
        step = min(room_i, room_j, gap / curvature)
        grad -= step * (K[:, i] - K[:, j])
        # A step limited by the box lands exactly on its edge
        beta[i] = hi[i] if step == room_i else beta[i] + step
        beta[j] = lo[j] if step == room_j else beta[j] - step
    else:
        logger.warning(f"SMO reached {max_iter} iterations with KKT gap {gap:.3g}")

    bias = 0.5 * (grad[i] + grad[j])
    return beta, float(bias)


def train_svm(
    split: SplitDataset,
    gamma: Optional[float] = None,
    cbox: float = DEFAULT_CBOX,
    tol: float = SMO_TOL,
) -> SvmModel:
    """
    Train one-vs-one Gaussian-kernel SVMs on z-scored training features.

    Args:
        split: train/cv/test data; only train is used
        gamma: kernel width (default 1 / n_features)
        cbox: box constraint
        tol: KKT tolerance

    Returns:
        SvmModel
    """
    train = split.train
    if len(train) == 0:
        raise SizeError("Training set is empty")
    if not np.all(np.isfinite(train.X)):
        raise InputScalingError("Training features contain non-finite values")
    gamma = 1.0 / train.n_features if gamma is None else gamma
    if gamma <= 0 or cbox <= 0:
        raise ArgumentError(f"gamma and cbox must be positive, got {gamma}, {cbox}")

    mean, std = zscore_stats(train.X)
    Z = (train.X - mean) / std
    K = rbf_kernel(Z, Z, gamma)
    classes = [int(c) for c in np.unique(train.y)]

    raw_pairs = []
    used = np.zeros(len(Z), dtype=bool)
    for a, b in combinations(classes, 2):
        index = np.flatnonzero((train.y == a) | (train.y == b))
        y = np.where(train.y[index] == a, 1.0, -1.0)
        beta, bias = smo(K[np.ix_(index, index)], y, cbox, tol)
        keep = beta != 0.0
        raw_pairs.append((a, b, index[keep], beta[keep], bias))
        used[index[keep]] = True

    remap = -np.ones(len(Z), dtype=int)
    remap[used] = np.arange(used.sum())
    pairs = tuple(
        SvmPair(a=a, b=b, support=remap[idx], coef=coef, bias=bias)
        for a, b, idx, coef, bias in raw_pairs
    )
    logger.debug(f"SVM trained: {len(pairs)} pair machines, {used.sum()} support vectors")
    return SvmModel(
        gamma=float(gamma),
        cbox=float(cbox),
        n_classes=split.n_classes,
        mean=mean,
        std=std,
        vectors=Z[used],
        pairs=pairs,
        default_class=classes[0],
    )
