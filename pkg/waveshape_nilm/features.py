"""
Feature extraction from delta cycles.

Three feature spaces:
- PQ: active and reactive power plus odd/even harmonic distortion (4 values)
- HAR: normalized current spectral energy in 77 bands over 0-4 kHz
- WS: seven geometric metrics of the V-I trajectory
"""

import logging
from dataclasses import dataclass, fields
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from .errors import (
    ArgumentError,
    DegenerateFundamentalError,
    DegenerateInputError,
    DegenerateVoltageError,
    SizeError,
)
from .events import DeltaSignature
from .signal import CyclePair, rms

logger = logging.getLogger(__name__)

THD_MAX_HARMONIC = 37
HAR_BANDS = 77
HAR_MAX_FREQ = 4000.0
MEAN_CURVE_POINTS = 64
EDGE_BAND = 0.2
# Relative tolerance for zero area and collinear vertices
GEOMETRY_TOL = 1e-9
FUNDAMENTAL_TOL = 1e-12


class FeatureSpace(str, Enum):
    PQ = "PQ"
    HAR = "HAR"
    WS = "WS"

    @property
    def dim(self) -> int:
        return {"PQ": 4, "HAR": HAR_BANDS, "WS": 7}[self.value]


@dataclass(frozen=True)
class PQFeatures:
    p: float
    q: float
    thd_o: float
    thd_e: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.q, self.thd_o, self.thd_e])


@dataclass(frozen=True, eq=False)
class HARFeatures:
    bands: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.array(self.bands, dtype=float)


@dataclass(frozen=True)
class WSFeatures:
    looping_direction: int
    area_enclosed: float
    curve_nonlinearity: float
    num_intersections: int
    middle_slope: float
    area_rl: float
    span: float

    def as_array(self) -> np.ndarray:
        return np.array([float(getattr(self, f.name)) for f in fields(self)])


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Feature values of one signature in one space, with its label when known."""

    space: FeatureSpace
    values: np.ndarray
    label: Optional[int] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "space", FeatureSpace(self.space))
        if values.shape != (self.space.dim,):
            raise SizeError(f"{self.space.value} vector needs {self.space.dim} values, got {values.shape}")

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return (
            self.space == other.space
            and self.label == other.label
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def feature_names(space: Union[FeatureSpace, str]) -> List[str]:
    """Column names of a feature space, in vector order."""
    space = FeatureSpace(space)
    if space == FeatureSpace.PQ:
        return [f.name for f in fields(PQFeatures)]
    if space == FeatureSpace.WS:
        return [f.name for f in fields(WSFeatures)]
    return [f"band_{k:02d}" for k in range(HAR_BANDS)]


def hilbert90(v: np.ndarray) -> np.ndarray:
    """Fundamental of v delayed by a quarter cycle (spectral rotation of bins 1 and N-1)."""
    spectrum = np.fft.fft(v)
    rotated = np.zeros_like(spectrum)
    rotated[1] = spectrum[1] * -1j
    rotated[-1] = spectrum[-1] * 1j
    return np.real(np.fft.ifft(rotated))


def extract_pq(cycle: CyclePair, max_harmonic: Optional[int] = THD_MAX_HARMONIC) -> PQFeatures:
    """
    Active/reactive power and harmonic distortion of the current.

    Q is positive for inductive (lagging) current.

    Args:
        cycle: aligned voltage/current cycle
        max_harmonic: highest harmonic included in THD; None uses every harmonic below Nyquist

    Returns:
        PQFeatures
    """
    v, i, n = cycle.v, cycle.i, cycle.n
    p = float(np.mean(v * i))
    q = float(np.mean(hilbert90(v) * i))

    mags = np.abs(np.fft.fft(i)[: n // 2]) * 2.0 / n
    fundamental = mags[1]
    if fundamental <= FUNDAMENTAL_TOL * rms(i):
        raise DegenerateFundamentalError(
            f"Current fundamental {fundamental:.3g} is negligible against rms {rms(i):.3g}"
        )

    top = n // 2 - 1 if max_harmonic is None else min(max_harmonic, n // 2 - 1)
    harmonics = np.arange(2, top + 1)
    energy = mags[harmonics] ** 2
    thd_o = float(np.sqrt(energy[harmonics % 2 == 1].sum()) / fundamental)
    thd_e = float(np.sqrt(energy[harmonics % 2 == 0].sum()) / fundamental)
    return PQFeatures(p=p, q=q, thd_o=thd_o, thd_e=thd_e)


def extract_har(
    cycle: CyclePair,
    n_bands: int = HAR_BANDS,
    max_freq: float = HAR_MAX_FREQ,
) -> HARFeatures:
    """
    Current spectral energy binned into equal-width bands over [0, max_freq).

    Band of bin c is floor(c * f0 / (max_freq / n_bands)); the vector sums to 1.
    """
    if cycle.n * cycle.mains_freq < 2 * max_freq:
        raise SizeError(
            f"Cycle sampled at {cycle.sample_rate:g} Hz cannot resolve {max_freq:g} Hz bands"
        )
    c = np.arange(cycle.n // 2 + 1)
    freqs = c * cycle.mains_freq
    keep = freqs < max_freq
    energy = np.abs(np.fft.fft(cycle.i)[c[keep]]) ** 2

    width = max_freq / n_bands
    band_of = np.minimum((freqs[keep] / width).astype(int), n_bands - 1)
    bands = np.bincount(band_of, weights=energy, minlength=n_bands)
    total = bands.sum()
    if total <= 0.0:
        raise DegenerateInputError("Current has no spectral energy below the HAR limit")
    return HARFeatures(bands=bands / total)


def har_band_concentration(
    har: HARFeatures,
    low_limit: float = 600.0,
    high_limit: float = 3000.0,
    max_freq: float = HAR_MAX_FREQ,
) -> float:
    """Share of HAR mass in bands centered below low_limit or at/above high_limit."""
    bands = np.asarray(har.bands)
    width = max_freq / len(bands)
    centers = (np.arange(len(bands)) + 0.5) * width
    return float(bands[(centers < low_limit) | (centers >= high_limit)].sum())


def _shoelace(x: np.ndarray, y: np.ndarray) -> float:
    """Signed area of the closed polygon (x, y); positive when counter-clockwise."""
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def mean_curve(v: np.ndarray, i: np.ndarray, points: int = MEAN_CURVE_POINTS):
    """
    Average of the rising and falling arcs of the trajectory on a uniform voltage grid.

    Returns:
        (grid, b) arrays of length `points`
    """
    n = len(v)
    k_min, k_max = int(np.argmin(v)), int(np.argmax(v))
    rising = np.arange(k_min, k_min + (k_max - k_min) % n + 1) % n
    falling = np.arange(k_max, k_max + (k_min - k_max) % n + 1) % n
    grid = np.linspace(v[k_min], v[k_max], points)

    arcs = []
    for arc in (rising, falling):
        order = np.argsort(v[arc], kind="stable")
        arcs.append(np.interp(grid, v[arc][order], i[arc][order]))
    return grid, (arcs[0] + arcs[1]) / 2.0


def _band_run(mask: np.ndarray, k: int) -> np.ndarray:
    """Cyclic run of True entries of mask containing index k."""
    n = len(mask)
    back = 0
    while back < n - 1 and mask[(k - back - 1) % n]:
        back += 1
    ahead = 0
    while ahead < n - 1 - back and mask[(k + ahead + 1) % n]:
        ahead += 1
    return np.arange(k - back, k + ahead + 1) % n


def count_intersections(v: np.ndarray, i: np.ndarray, tol: float) -> int:
    """
    Transversal crossings between non-adjacent edges of the closed polygon.

    Orientation values within tol of zero count as positive, so touching
    at a shared vertex is counted once.
    """
    n = len(v)
    a, b = np.triu_indices(n, k=2)
    keep = ~((a == 0) & (b == n - 1))
    a, b = a[keep], b[keep]

    p = np.stack([v, i], axis=1)
    q = np.roll(p, -1, axis=0)
    p1, p2, p3, p4 = p[a], q[a], p[b], q[b]

    def orient(o, s, t):
        return (s[:, 0] - o[:, 0]) * (t[:, 1] - o[:, 1]) - (s[:, 1] - o[:, 1]) * (t[:, 0] - o[:, 0])

    s1 = orient(p3, p4, p1) >= -tol
    s2 = orient(p3, p4, p2) >= -tol
    s3 = orient(p1, p2, p3) >= -tol
    s4 = orient(p1, p2, p4) >= -tol
    return int(np.count_nonzero((s1 != s2) & (s3 != s4)))


def extract_ws(
    cycle: CyclePair,
    edge_band: float = EDGE_BAND,
    curve_points: int = MEAN_CURVE_POINTS,
) -> WSFeatures:
    """
    Wave-shape metrics of the V-I trajectory.

    Args:
        cycle: aligned voltage/current cycle
        edge_band: fraction of the voltage span treated as the left/right edge regions
        curve_points: size of the mean-curve voltage grid

    Returns:
        WSFeatures
    """
    v, i = cycle.v, cycle.i
    span_v = float(np.ptp(v))
    if not span_v > 1e-12 * float(np.max(np.abs(v))):
        raise DegenerateVoltageError("Voltage cycle is flat")
    span_i = float(np.ptp(i))
    tol = GEOMETRY_TOL * span_v * span_i

    area = _shoelace(v, i)
    looping = 0 if abs(area) <= tol else int(np.sign(area))

    grid, b = mean_curve(v, i, curve_points)
    chord = b[0] + (b[-1] - b[0]) * (grid - grid[0]) / (grid[-1] - grid[0])
    nonlinearity = float(trapezoid(np.abs(b - chord), grid))

    v_lo, v_hi = grid[0] + span_v / 3.0, grid[-1] - span_v / 3.0
    middle = (grid >= v_lo) & (grid <= v_hi)
    slope = float(np.polyfit(grid[middle], b[middle], 1)[0])

    area_rl = 0.0
    v_min, v_max = float(np.min(v)), float(np.max(v))
    for mask, k in (
        (v <= v_min + edge_band * span_v, int(np.argmin(v))),
        (v >= v_max - edge_band * span_v, int(np.argmax(v))),
    ):
        run = _band_run(mask, k)
        if len(run) >= 3:
            area_rl += abs(_shoelace(v[run], i[run]))

    return WSFeatures(
        looping_direction=looping,
        area_enclosed=abs(area),
        curve_nonlinearity=nonlinearity,
        num_intersections=count_intersections(v, i, tol),
        middle_slope=slope,
        area_rl=area_rl,
        span=span_i,
    )


def featurize(
    sig: Union[DeltaSignature, CyclePair],
    space: Union[FeatureSpace, str],
    label: Optional[int] = None,
    oriented: bool = False,
) -> FeatureVector:
    """
    Map a signature (or a bare cycle) into one feature space.

    Args:
        sig: delta signature or cycle
        space: PQ, HAR or WS
        label: class id attached to the vector
        oriented: use the off-event-negated cycle of a DeltaSignature
    """
    space = FeatureSpace(space)
    if isinstance(sig, DeltaSignature):
        cycle = sig.oriented_cycle() if oriented else sig.cycle
    elif isinstance(sig, CyclePair):
        cycle = sig
    else:
        raise ArgumentError(f"Cannot featurize {type(sig).__name__}")

    if space == FeatureSpace.PQ:
        values = extract_pq(cycle).as_array()
    elif space == FeatureSpace.HAR:
        values = extract_har(cycle).as_array()
    else:
        values = extract_ws(cycle).as_array()
    return FeatureVector(space=space, values=values, label=label)


# Feature pairs whose linear correlation is tabulated for wave-shape vs power metrics
CORRELATION_PAIRS = [
    ("area_rl", "p"),
    ("curve_nonlinearity", "thd_e"),
    ("num_intersections", "thd_o"),
    ("num_intersections", "area_enclosed"),
    ("span", "p"),
]


def feature_frame(cycles: Iterable[CyclePair]) -> pd.DataFrame:
    """WS and PQ features of many cycles, one row per cycle."""
    rows = []
    for cycle in cycles:
        row = dict(zip(feature_names(FeatureSpace.WS), extract_ws(cycle).as_array()))
        row.update(zip(feature_names(FeatureSpace.PQ), extract_pq(cycle).as_array()))
        rows.append(row)
    return pd.DataFrame(rows)


def correlation_table(
    cycles: Iterable[CyclePair],
    pairs: Sequence = tuple(CORRELATION_PAIRS),
) -> pd.DataFrame:
    """Pearson correlation of wave-shape and power features over a set of cycles."""
    frame = feature_frame(cycles)
    records = []
    for a, b in pairs:
        records.append({"feature_a": a, "feature_b": b, "correlation": frame[a].corr(frame[b])})
    return pd.DataFrame(records)
