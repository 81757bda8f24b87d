"""
Labeled feature datasets and the stratified train/cv/test split.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ArgumentError, SizeError

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (0.45, 0.10, 0.45)


@dataclass(frozen=True, eq=False)
class LabeledExample:
    x: np.ndarray
    y: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix X (n x F) with integer class ids y in [0, n_classes)."""

    X: np.ndarray
    y: np.ndarray
    n_classes: Optional[int] = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=int).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(len(y), -1) if len(y) else X.reshape(0, 0)
        if X.ndim != 2 or len(X) != len(y):
            raise SizeError(f"Dataset has {len(X)} rows but {len(y)} labels")
        if len(y) and y.min() < 0:
            raise ArgumentError("Class ids must be non-negative")
        n_classes = self.n_classes
        if n_classes is None:
            n_classes = int(y.max()) + 1 if len(y) else 0
        elif len(y) and y.max() >= n_classes:
            raise ArgumentError(f"Class id {y.max()} outside [0, {n_classes})")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "n_classes", int(n_classes))

    def __len__(self) -> int:
        return len(self.y)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @classmethod
    def from_examples(cls, examples: Sequence[LabeledExample], n_classes: Optional[int] = None) -> "Dataset":
        if not examples:
            raise SizeError("Cannot build a dataset from no examples")
        dims = {len(np.atleast_1d(e.x)) for e in examples}
        if len(dims) != 1:
            raise ArgumentError(f"Examples have inconsistent feature counts {sorted(dims)}")
        X = np.stack([np.atleast_1d(np.asarray(e.x, dtype=float)) for e in examples])
        return cls(X=X, y=[e.y for e in examples], n_classes=n_classes)

    def examples(self) -> List[LabeledExample]:
        return [LabeledExample(x=row, y=int(label)) for row, label in zip(self.X, self.y)]

    def subset(self, index: Sequence[int]) -> "Dataset":
        index = np.asarray(index, dtype=int)
        return Dataset(X=self.X[index].reshape(len(index), self.n_features), y=self.y[index], n_classes=self.n_classes)

    def concat(self, other: "Dataset") -> "Dataset":
        return Dataset(
            X=np.vstack([self.X, other.X]),
            y=np.concatenate([self.y, other.y]),
            n_classes=max(self.n_classes, other.n_classes),
        )

    def scaled(self, s: float) -> "Dataset":
        return Dataset(X=self.X * s, y=self.y, n_classes=self.n_classes)

    def with_labels(self, y: Sequence[int]) -> "Dataset":
        return Dataset(X=self.X, y=y, n_classes=self.n_classes)


@dataclass(frozen=True)
class SplitDataset:
    train: Dataset
    cv: Dataset
    test: Dataset
    fractions: Tuple[float, float, float] = DEFAULT_FRACTIONS

    @property
    def n_classes(self) -> int:
        return max(self.train.n_classes, self.cv.n_classes, self.test.n_classes)

    @property
    def n_features(self) -> int:
        return self.train.n_features

    def all(self) -> Dataset:
        return self.train.concat(self.cv).concat(self.test)


def check_fractions(fractions: Sequence[float]) -> Tuple[float, float, float]:
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3:
        raise ArgumentError(f"Need (train, cv, test) fractions, got {fractions}")
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ArgumentError(f"Split fractions must be non-negative and sum to 1, got {fractions}")
    if fractions[0] <= 0:
        raise ArgumentError("Training fraction must be positive")
    return fractions


def allocate(n: int, fractions: Sequence[float]) -> np.ndarray:
    """Largest-remainder allocation of n items to fractions."""
    exact = np.asarray(fractions) * n
    counts = np.floor(exact + 1e-9).astype(int)
    remainder = n - counts.sum()
    if remainder > 0:
        frac = np.where(np.asarray(fractions) > 0, exact - counts, -1.0)
        for k in np.argsort(-frac, kind="stable")[:remainder]:
            counts[k] += 1
    return counts


def split(
    data: Union[Dataset, Sequence[LabeledExample]],
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    seed: int = 0,
) -> SplitDataset:
    """
    Stratified shuffle split into train, cross-validation and test sets.

    Each class is shuffled and cut by largest-remainder allocation. When some
    class has fewer examples than there are non-empty splits, stratification
    is abandoned for a single global shuffle and a warning is logged.

    Args:
        data: dataset or list of labeled examples
        fractions: (train, cv, test), non-negative, summing to 1
        seed: permutation seed

    Returns:
        SplitDataset
    """
    if not isinstance(data, Dataset):
        data = Dataset.from_examples(list(data))
    fractions = check_fractions(fractions)
    rng = np.random.default_rng(seed)
    parts: List[List[int]] = [[], [], []]

    active = sum(1 for f in fractions if f > 0)
    classes, sizes = np.unique(data.y, return_counts=True)
    if len(classes) and sizes.min() < active:
        logger.warning(
            f"Class {classes[np.argmin(sizes)]} has {sizes.min()} examples for {active} splits; "
            f"using an unstratified shuffle"
        )
        groups = [rng.permutation(len(data))]
    else:
        groups = [rng.permutation(np.flatnonzero(data.y == c)) for c in classes]

    for members in groups:
        counts = allocate(len(members), fractions)
        edges = np.cumsum(counts)[:-1]
        for part, chunk in zip(parts, np.split(members, edges)):
            part.extend(chunk.tolist())

    train, cv, test = (data.subset(rng.permutation(np.array(p, dtype=int))) for p in parts)
    return SplitDataset(train=train, cv=cv, test=test, fractions=fractions)
