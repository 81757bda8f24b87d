"""
Switching events: detection on the aggregate stream, delta-form signature
extraction, and K-means grouping of unlabeled signatures.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist
from sklearn.metrics import silhouette_score

from .errors import ArgumentError, BoundaryError, InvariantViolation
from .signal import CyclePair, Waveform, active_power, cycle_power, extract_cycle

logger = logging.getLogger(__name__)

SETTLE_CYCLES = 5
# Pre-event cycle is cut this many cycles before the event boundary
PRE_EVENT_CYCLES = 3
KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 300
K_SCAN_RANGE = (2, 40)


class Polarity(str, Enum):
    ON = "on"
    OFF = "off"


@dataclass(frozen=True)
class DeltaSignature:
    """Difference between the post- and pre-event steady cycles around one switching event."""

    cycle: CyclePair
    event_index: int
    polarity: Polarity
    p_delta: float

    def oriented_cycle(self) -> CyclePair:
        """Delta cycle with off events negated, so on and off of one appliance coincide."""
        if self.polarity == Polarity.OFF:
            return self.cycle.with_current(-self.cycle.i)
        return self.cycle

    def oriented(self) -> "DeltaSignature":
        if self.polarity == Polarity.ON:
            return self
        return DeltaSignature(
            cycle=self.oriented_cycle(),
            event_index=self.event_index,
            polarity=Polarity.ON,
            p_delta=-self.p_delta,
        )


@dataclass(frozen=True, eq=False)
class Clustering:
    """Result of K-means: one cluster id per point plus the member means."""

    k: int
    assignments: np.ndarray
    centroids: np.ndarray
    wcss: float
    n_iter: int = 0

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == cluster)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


def detect_events(
    i: Waveform,
    p_min: float,
    v: Waveform,
    settle: int = SETTLE_CYCLES,
) -> List[int]:
    """
    Find switching events from cycle-granular active power.

    A cycle c is an event when its power differs from the median of the
    previous `settle` cycles by at least p_min, and the median of the next
    `settle` cycles confirms the change. Events are at least `settle` cycles apart.

    Args:
        i: aggregate current stream
        p_min: minimum power step (W)
        v: voltage stream on the same grid
        settle: settle window in cycles

    Returns:
        Sample indices of cycle boundaries where events start
    """
    if p_min < 0:
        raise ArgumentError(f"p_min must be non-negative, got {p_min}")
    if settle < 1:
        raise ArgumentError(f"settle window must be at least one cycle, got {settle}")

    power = pd.Series(cycle_power(v, i))
    if len(power) < 2 * settle + 1:
        return []

    before = power.rolling(settle).median().shift(1).to_numpy()
    after = power.rolling(settle).median().shift(-settle).to_numpy()
    p = power.to_numpy()

    step = np.abs(p - before)
    candidates = np.flatnonzero(np.nan_to_num(step, nan=-np.inf) >= max(p_min, 1e-12))

    n = v.samples_per_cycle
    events: List[int] = []
    last = -settle
    for c in candidates:
        if c - last < settle or np.isnan(after[c]):
            continue
        if abs(after[c] - before[c]) >= p_min and np.sign(after[c] - before[c]) == np.sign(
            p[c] - before[c]
        ):
            events.append(int(c) * n)
            last = c

    logger.info(f"Detected {len(events)} events (p_min={p_min:g} W)")
    return events


def extract_delta(
    v: Waveform,
    i: Waveform,
    event_index: int,
    settle: int = SETTLE_CYCLES,
) -> DeltaSignature:
    """
    Cut the delta-form signature of one event.

    The pre-event cycle starts near event_index - 3 cycles and the post-event
    cycle after the settle window; both are aligned on rising voltage zero crossings.
    """
    n = v.samples_per_cycle
    pre_at = event_index - PRE_EVENT_CYCLES * n
    post_at = event_index + settle * n
    if pre_at < 0 or post_at + 2 * n > len(v):
        raise BoundaryError(
            f"Event at sample {event_index} is too close to the stream edge "
            f"(needs [{pre_at}, {post_at + 2 * n}) of {len(v)})"
        )

    pre = extract_cycle(v, i, pre_at)
    post = extract_cycle(v, i, post_at)
    delta = post.with_current(post.i - pre.i)
    p_delta = active_power(delta.v, delta.i)
    polarity = Polarity.ON if p_delta >= 0 else Polarity.OFF
    return DeltaSignature(cycle=delta, event_index=int(event_index), polarity=polarity, p_delta=p_delta)


def _as_points(points) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or len(x) == 0:
        raise ArgumentError("kmeans needs a non-empty list of equal-length feature vectors")
    return x


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(len(x), p=d2 / total)
        else:
            idx = rng.integers(len(x))
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int) -> Tuple[np.ndarray, np.ndarray, float, int]:
    k = len(centroids)
    labels = None
    wcss_prev = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        d2 = cdist(x, centroids, "sqeuclidean")
        new_labels = np.argmin(d2, axis=1)

        # Reseed empty clusters with the point farthest from its centroid
        counts = np.bincount(new_labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            own = d2[np.arange(len(x)), new_labels]
            own[counts[new_labels] <= 1] = -1.0
            far = int(np.argmax(own))
            if own[far] <= 0:
                break
            counts[new_labels[far]] -= 1
            new_labels[far] = j
            counts[j] = 1
            d2[far, j] = 0.0

        for j in range(k):
            members = x[new_labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)

        wcss = float(np.sum((x - centroids[new_labels]) ** 2))
        if wcss > wcss_prev * (1 + 1e-12) + 1e-12:
            raise InvariantViolation(
                f"K-means WCSS increased from {wcss_prev:.6g} to {wcss:.6g} at iteration {it}"
            )
        wcss_prev = wcss
        if labels is not None and np.array_equal(labels, new_labels):
            labels = new_labels
            break
        labels = new_labels
    return labels, centroids, wcss_prev, it


def kmeans(
    points,
    k: int,
    seed: int,
    restarts: int = KMEANS_RESTARTS,
    max_iter: int = KMEANS_MAX_ITER,
) -> Clustering:
    """
    K-means with k-means++ seeding; best of several restarts by within-cluster sum of squares.

    Args:
        points: n feature vectors (n x d array, or 1-D for scalar features)
        k: number of clusters, 1 <= k <= n
        seed: master seed; restart streams are spawned from it
        restarts: number of independent restarts
        max_iter: Lloyd iteration cap per restart

    Returns:
        Clustering of the best restart
    """
    x = _as_points(points)
    if k < 1 or k > len(x):
        raise ArgumentError(f"k must be in [1, {len(x)}], got {k}")

    best: Optional[Clustering] = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        labels, centroids, wcss, n_iter = _lloyd(x, _kmeans_pp(x, k, rng), max_iter)
        if best is None or wcss < best.wcss:
            best = Clustering(k=k, assignments=labels, centroids=centroids, wcss=wcss, n_iter=n_iter)
    return best


def purity(clustering: Clustering, truth: Sequence) -> float:
    """Share of points whose cluster's majority true label equals their own."""
    truth = list(truth)
    if len(truth) != len(clustering.assignments):
        raise ArgumentError(
            f"Truth has {len(truth)} labels for {len(clustering.assignments)} clustered points"
        )
    if not truth:
        return 0.0
    table = pd.crosstab(pd.Series(clustering.assignments), pd.Series(truth))
    return float(table.max(axis=1).sum() / len(truth))


def silhouette(points, assignments: np.ndarray) -> float:
    """Mean silhouette coefficient; points in singleton clusters score 0."""
    x = _as_points(points)
    labels = np.asarray(assignments)
    n_clusters = len(np.unique(labels))
    if n_clusters < 2 or n_clusters >= len(x):
        return 0.0
    return float(silhouette_score(x, labels))


def select_k(
    points,
    seed: int,
    k_range: Tuple[int, int] = K_SCAN_RANGE,
) -> Tuple[int, Clustering]:
    """Scan k over k_range (inclusive) and keep the clustering with the highest silhouette."""
    x = _as_points(points)
    lo, hi = k_range
    hi = min(hi, len(x) - 1)
    if len(x) < 3 or hi < lo:
        raise ArgumentError(f"Cannot scan k in {k_range} over {len(x)} points")

    best_k, best, best_score = lo, None, -np.inf
    for k in range(lo, hi + 1):
        clustering = kmeans(x, k, seed)
        score = silhouette(x, clustering.assignments)
        if score > best_score:
            best_k, best, best_score = k, clustering, score
    logger.info(f"Selected k={best_k} (silhouette {best_score:.3f})")
    return best_k, best
