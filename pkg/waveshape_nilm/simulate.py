"""
Synthetic load scenarios.

Appliances are archetypal current cycles (resistive, inductive, power
electronic, composite) plus a database of jittered harmonic snapshots. A
scenario toggles appliances at random event times and holds the aggregate
current as a piecewise-periodic stream: one cycle per interval between
events, tiled on demand by Scenario.window().
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from .errors import ArgumentError, ConfigError, InvariantViolation, StateError
from .events import PRE_EVENT_CYCLES, SETTLE_CYCLES, DeltaSignature, detect_events, extract_delta
from .ingest import TRUTH_COLUMNS, ChannelMap, write_waveform_corpus
from .signal import (
    DEFAULT_MAINS_FREQ,
    DEFAULT_SAMPLES_PER_CYCLE,
    CyclePair,
    Spectrum,
    Waveform,
    active_power,
    add_noise,
    dft,
    is_noiseless,
    noise_sigma,
    sine_cycle,
)
from .utils import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_V_RMS = 120.0
DEFAULT_SNAPSHOTS = 8
# Relative half-width of the uniform harmonic magnitude jitter
DEFAULT_JITTER = 0.05
EVENTS_PER_HOUR = 15.0
NOISE_BLOCK_CYCLES = 1024
DETECT_CHUNK_CYCLES = 4096
REALNESS_TOL = 1e-9
APPLIANCE_CHANNEL_OFFSET = 2


class ApplianceCategory(str, Enum):
    RESISTIVE = "resistive"
    INDUCTIVE = "inductive"
    POWER_ELECTRONIC = "power-electronic"
    COMPOSITE = "composite"


class ApplianceSpec(BaseModel):
    """Recipe for one synthetic appliance."""

    category: ApplianceCategory
    nominal_p: float = Field(gt=0.0)
    name: Optional[str] = None
    # Current lag behind voltage (inductive and composite)
    phi_deg: float = Field(default=30.0, gt=-90.0, lt=90.0)
    # Third-harmonic share of the inductive current
    h3: float = Field(default=0.0, ge=0.0, le=1.0)
    # Power-electronic current flows where |sin| exceeds this
    pulse_threshold: float = Field(default=0.7, ge=0.0, lt=1.0)
    # Power-electronic share of a composite load
    mix: float = Field(default=0.5, gt=0.0, lt=1.0)
    n_snapshots: int = Field(default=DEFAULT_SNAPSHOTS, ge=1)
    jitter: float = Field(default=DEFAULT_JITTER, ge=0.0, lt=1.0)

    def label(self, index: int) -> str:
        return self.name or f"{self.category.value}_{index}"


@dataclass(frozen=True, eq=False)
class ApplianceModel:
    """Base cycle at the reference voltage plus the stored snapshot spectra."""

    name: str
    category: ApplianceCategory
    base: CyclePair
    snapshots: Tuple[Spectrum, ...]
    nominal_p: float

    def __post_init__(self):
        for k, s in enumerate(self.snapshots):
            if len(s) != self.base.n:
                raise InvariantViolation(f"{self.name}: snapshot {k} has {len(s)} bins, cycle has {self.base.n}")
            if not s.is_conjugate_symmetric(atol=1e-9 * max(1.0, float(np.abs(s.coefficients).max()))):
                raise InvariantViolation(f"{self.name}: snapshot {k} is not conjugate-symmetric")
        p = active_power(self.base.v, self.base.i)
        if abs(p - self.nominal_p) > 0.05 * self.nominal_p:
            raise InvariantViolation(f"{self.name}: base cycle draws {p:.1f} W, nominal {self.nominal_p:.1f} W")

    @property
    def snapshot_matrix(self) -> np.ndarray:
        """Snapshots x bins complex coefficients."""
        return np.stack([s.coefficients for s in self.snapshots]) if self.snapshots else np.empty((0, self.base.n))

    def snapshot_cycle(self, k: int) -> np.ndarray:
        return np.real(np.fft.ifft(self.snapshots[k].coefficients))


def voltage_cycle(v_rms: float = DEFAULT_V_RMS, n: int = DEFAULT_SAMPLES_PER_CYCLE) -> np.ndarray:
    """Clean mains cycle starting at its rising zero crossing."""
    return sine_cycle(math.sqrt(2.0) * v_rms, n)


def _pulses(theta: np.ndarray, threshold: float) -> np.ndarray:
    s = np.sin(theta)
    return np.sign(s) * np.clip(np.abs(s) - threshold, 0.0, None) / (1.0 - threshold)


def _current_shape(spec: ApplianceSpec, n: int) -> np.ndarray:
    theta = 2.0 * np.pi * np.arange(n) / n
    phi = math.radians(spec.phi_deg)
    if spec.category == ApplianceCategory.RESISTIVE:
        return np.sin(theta)
    if spec.category == ApplianceCategory.INDUCTIVE:
        return np.sin(theta - phi) + spec.h3 * np.sin(3.0 * (theta - phi))
    if spec.category == ApplianceCategory.POWER_ELECTRONIC:
        return _pulses(theta, spec.pulse_threshold)
    return (1.0 - spec.mix) * np.sin(theta - phi) + spec.mix * _pulses(theta, spec.pulse_threshold)


def _snapshot(coeffs: np.ndarray, jitter: float, rng: np.random.Generator) -> Spectrum:
    """Scale the magnitude of every bin up to N/2 by a factor in [1 - jitter, 1 + jitter] and mirror."""
    n = len(coeffs)
    half = coeffs[: n // 2 + 1] * (1.0 + jitter * rng.uniform(-1.0, 1.0, n // 2 + 1))
    return Spectrum(coefficients=_mirror(half, n))


def _mirror(half: np.ndarray, n: int) -> np.ndarray:
    full = np.empty(n, dtype=complex)
    full[: n // 2 + 1] = half
    full[n // 2 + 1:] = np.conj(half[1: n // 2][::-1])
    full[0] = full[0].real
    full[n // 2] = full[n // 2].real
    return full


def make_appliance(
    category: ApplianceCategory,
    nominal_p: float,
    params: Optional[Dict] = None,
    seed: int = 0,
    v_rms: float = DEFAULT_V_RMS,
    n: int = DEFAULT_SAMPLES_PER_CYCLE,
    mains_freq: float = DEFAULT_MAINS_FREQ,
) -> ApplianceModel:
    """
    Build an appliance archetype drawing nominal_p watts at v_rms.

    Resistive current is proportional to voltage, inductive current lags by
    phi_deg (optionally with a third harmonic), power-electronic current is a
    pair of odd-symmetric pulses around the voltage peaks, and a composite
    load mixes a lagging sinusoid with such pulses.

    Args:
        category: load archetype
        nominal_p: active power in W
        params: ApplianceSpec shape fields (phi_deg, h3, pulse_threshold, mix,
            n_snapshots, jitter, name)
        seed: seed of the snapshot jitter
        v_rms: reference voltage
        n: samples per cycle
        mains_freq: mains frequency in Hz

    Returns:
        ApplianceModel with n_snapshots jittered spectra
    """
    try:
        spec = ApplianceSpec(category=category, nominal_p=nominal_p, **(params or {}))
    except ValidationError as e:
        raise ArgumentError(f"Invalid appliance parameters: {e}") from e
    return build_appliance(spec, seed=seed, v_rms=v_rms, n=n, mains_freq=mains_freq)


def build_appliance(
    spec: ApplianceSpec,
    seed: int = 0,
    index: int = 0,
    v_rms: float = DEFAULT_V_RMS,
    n: int = DEFAULT_SAMPLES_PER_CYCLE,
    mains_freq: float = DEFAULT_MAINS_FREQ,
) -> ApplianceModel:
    v = voltage_cycle(v_rms, n)
    shape = _current_shape(spec, n)
    p_shape = active_power(v, shape)
    if p_shape <= 0.0:
        raise ArgumentError(f"{spec.category.value} shape draws no active power")
    i = shape * (spec.nominal_p / p_shape)

    coeffs = dft(i).coefficients
    rng = np.random.default_rng(seed)
    snapshots = tuple(_snapshot(coeffs, spec.jitter, rng) for _ in range(spec.n_snapshots))
    return ApplianceModel(
        name=spec.label(index),
        category=spec.category,
        base=CyclePair(v=v, i=i, mains_freq=mains_freq),
        snapshots=snapshots,
        nominal_p=spec.nominal_p,
    )


def reconstruct_cw(model: ApplianceModel, rng: np.random.Generator) -> CyclePair:
    """
    Draw a dynamic current cycle from the snapshot database.

    Every bin in [0, N/2] takes the complex coefficient of one uniformly chosen
    snapshot; the upper half is the conjugate mirror, so the inverse DFT is real.
    """
    if not model.snapshots:
        raise StateError(f"{model.name} has no stored snapshots")
    db = model.snapshot_matrix
    n = db.shape[1]
    bins = np.arange(n // 2 + 1)
    pick = rng.integers(len(db), size=len(bins))
    samples = np.fft.ifft(_mirror(db[pick, bins], n))
    residue = float(np.abs(samples.imag).max())
    if residue > REALNESS_TOL * max(1.0, float(np.abs(samples.real).max())):
        raise InvariantViolation(f"Reconstructed cycle has imaginary residue {residue:.3g}")
    return model.base.with_current(samples.real)


def default_bank(n: int = 6) -> List[ApplianceSpec]:
    """n well-separated appliances cycling through the four categories."""
    if not 1 <= n <= 40:
        raise ArgumentError(f"Bank size must be in [1, 40], got {n}")
    order = list(ApplianceCategory)
    bank = []
    for k in range(n):
        category = order[k % len(order)]
        bank.append(
            ApplianceSpec(
                category=category,
                nominal_p=150.0 + 250.0 * k,
                phi_deg=15.0 + (17.0 * k) % 60.0,
                name=f"{category.value}_{k}",
            )
        )
    return bank


class ScenarioConfig(BaseModel):
    """Synthetic scenario settings (duration in hours)."""

    appliances: List[ApplianceSpec] = Field(default_factory=list)
    # Used when appliances is empty
    bank_size: Optional[int] = Field(default=None, ge=1, le=40)
    duration: float = 1.0
    events_per_hour_mean: float = EVENTS_PER_HOUR
    p_min: float = Field(default=50.0, ge=0.0)
    snr_db: Optional[float] = None
    dynamics: bool = False
    v_rms: float = Field(default=DEFAULT_V_RMS, gt=0.0)
    mains_freq: float = Field(default=DEFAULT_MAINS_FREQ, gt=0.0)
    samples_per_cycle: int = DEFAULT_SAMPLES_PER_CYCLE
    settle: int = Field(default=SETTLE_CYCLES, ge=1)
    seed: int = 0

    def resolved_appliances(self) -> List[ApplianceSpec]:
        if self.appliances:
            return list(self.appliances)
        if self.bank_size:
            return default_bank(self.bank_size)
        return []


@dataclass(frozen=True)
class OnInterval:
    """Appliance drawing `cycle` from start_cycle up to (not including) stop_cycle."""

    appliance: int
    start_cycle: int
    stop_cycle: int
    cycle: np.ndarray


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    Piecewise-periodic aggregate stream with its truth log.

    boundaries[s] is the first cycle of segment s and segment_cycles[s] the
    aggregate current cycle repeated until the next boundary.
    """

    config: ScenarioConfig
    appliances: Tuple[ApplianceModel, ...]
    voltage_cycle: np.ndarray
    boundaries: np.ndarray
    segment_cycles: np.ndarray
    intervals: Tuple[OnInterval, ...]
    truth: pd.DataFrame
    n_cycles: int
    noise_power: float
    noise_seed: int

    @property
    def n(self) -> int:
        return len(self.voltage_cycle)

    @property
    def sample_rate(self) -> float:
        return self.n * self.config.mains_freq

    @property
    def n_samples(self) -> int:
        return self.n_cycles * self.n

    @property
    def names(self) -> List[str]:
        return [a.name for a in self.appliances]

    def _check_range(self, start: int, stop: int) -> Tuple[int, int]:
        if start < 0 or stop > self.n_cycles or start >= stop:
            raise ArgumentError(f"Cycle range [{start}, {stop}) outside scenario of {self.n_cycles} cycles")
        return start, stop

    def _clean(self, start: int, stop: int) -> np.ndarray:
        cycles = np.arange(start, stop)
        segment = np.searchsorted(self.boundaries, cycles, side="right") - 1
        return self.segment_cycles[segment].ravel()

    def _wave(self, samples: np.ndarray) -> Waveform:
        return Waveform(samples, sample_rate=self.sample_rate, mains_freq=self.config.mains_freq)

    def window(self, start_cycle: int, stop_cycle: int) -> Tuple[Waveform, Waveform]:
        """Voltage and (noisy) mains current for cycles [start_cycle, stop_cycle)."""
        start, stop = self._check_range(start_cycle, stop_cycle)
        v = np.tile(self.voltage_cycle, stop - start)
        if is_noiseless(self.config.snr_db):
            return self._wave(v), self._wave(self._clean(start, stop))

        # Noise is drawn per fixed block so any window sees the same samples
        b0, b1 = start // NOISE_BLOCK_CYCLES, -(-stop // NOISE_BLOCK_CYCLES)
        lo = b0 * NOISE_BLOCK_CYCLES
        parts = []
        for b in range(b0, b1):
            s = b * NOISE_BLOCK_CYCLES
            e = min(s + NOISE_BLOCK_CYCLES, self.n_cycles)
            block = self._wave(self._clean(s, e))
            noisy = add_noise(
                block,
                self.config.snr_db,
                seed=derive_seed(self.noise_seed, b),
                reference_power=self.noise_power,
            )
            parts.append(noisy.samples)
        i = np.concatenate(parts)[(start - lo) * self.n:(stop - lo) * self.n]
        return self._wave(v), self._wave(i)

    def waveforms(self) -> Tuple[Waveform, Waveform]:
        """The whole stream; long scenarios should be read through window()."""
        return self.window(0, self.n_cycles)

    def appliance_window(self, appliance: int, start_cycle: int, stop_cycle: int) -> np.ndarray:
        """Noise-free current of one appliance over cycles [start_cycle, stop_cycle)."""
        start, stop = self._check_range(start_cycle, stop_cycle)
        out = np.zeros((stop - start, self.n))
        for iv in self.intervals:
            if iv.appliance != appliance:
                continue
            lo, hi = max(iv.start_cycle, start), min(iv.stop_cycle, stop)
            if lo < hi:
                out[lo - start:hi - start] = iv.cycle
        return out.ravel()

    def on_set(self, cycle: int) -> List[int]:
        """Appliances drawing current during a cycle."""
        return sorted(iv.appliance for iv in self.intervals if iv.start_cycle <= cycle < iv.stop_cycle)

    def delta_at(self, event_index: int) -> DeltaSignature:
        """Delta signature of an event, cut from a window around it."""
        c = event_index // self.n
        start = max(c - PRE_EVENT_CYCLES - 1, 0)
        stop = min(c + self.config.settle + 3, self.n_cycles)
        v, i = self.window(start, stop)
        delta = extract_delta(v, i, event_index - start * self.n, self.config.settle)
        return DeltaSignature(
            cycle=delta.cycle,
            event_index=int(event_index),
            polarity=delta.polarity,
            p_delta=delta.p_delta,
        )

    def detect(self, p_min: Optional[float] = None, chunk_cycles: int = DETECT_CHUNK_CYCLES) -> List[int]:
        """
        Run detect_events over overlapping chunks of the stream.

        Each chunk keeps the events in its core range, so chunk edges never
        cut a settle window; merged events stay at least settle cycles apart.
        p_min defaults to the scenario's own threshold.
        """
        if p_min is None:
            p_min = self.config.p_min
        settle = self.config.settle
        margin = settle + 1
        if chunk_cycles <= 2 * margin:
            raise ArgumentError(f"Detection chunk of {chunk_cycles} cycles is too short")
        step = chunk_cycles - 2 * margin
        found: List[int] = []
        for core in range(0, self.n_cycles, step):
            lo = max(core - margin, 0)
            hi = min(core + step + margin, self.n_cycles)
            v, i = self.window(lo, hi)
            for e in detect_events(i, p_min, v, settle):
                c = lo + e // self.n
                if core <= c < core + step and (not found or c - found[-1] // self.n >= settle):
                    found.append(c * self.n)
        return found


def _schedule(config: ScenarioConfig, n_cycles: int, rng: np.random.Generator) -> np.ndarray:
    """Event cycles with normally distributed hourly counts, spaced by at least 2*settle + 4 cycles."""
    cycles_per_hour = 3600.0 * config.mains_freq
    gap = 2 * config.settle + 4
    margin = max(gap, PRE_EVENT_CYCLES + 2)
    mean = config.events_per_hour_mean
    events = []
    for h in range(int(math.ceil(config.duration))):
        first = int(h * cycles_per_hour)
        last = min(int((h + 1) * cycles_per_hour), n_cycles)
        share = (last - first) / cycles_per_hour
        count = int(round(max(0.0, rng.normal(mean, mean / 4.0)) * share))
        lo, hi = max(first, margin), min(last, n_cycles - margin)
        if count and hi > lo:
            events.append(rng.integers(lo, hi, size=count))
    if not events:
        return np.empty(0, dtype=int)

    drawn = np.sort(np.concatenate(events))
    kept: List[int] = []
    for c in drawn:
        if not kept or c - kept[-1] >= gap:
            kept.append(int(c))
    if len(kept) < len(drawn):
        logger.debug(f"Dropped {len(drawn) - len(kept)} events closer than {gap} cycles")
    return np.array(kept, dtype=int)


def generate_scenario(config: ScenarioConfig) -> Scenario:
    """
    Generate a synthetic aggregate-demand scenario.

    Voltage is a clean sinusoid at v_rms. Hourly event counts are drawn from
    N(mean, mean/4), truncated at zero and rounded; each event toggles a
    uniformly chosen appliance. An appliance that turns on draws its base
    cycle, or a reconstruct_cw draw when dynamics is on, until it turns off.
    Noise at snr_db is applied to the aggregate current last.

    Args:
        config: scenario settings

    Returns:
        Scenario (bit-reproducible under config.seed)
    """
    specs = config.resolved_appliances()
    if len(specs) < 2:
        raise ConfigError(f"A scenario needs at least 2 appliances, got {len(specs)}")
    if not config.duration > 0:
        raise ConfigError(f"Scenario duration must be positive, got {config.duration} h")
    if not config.events_per_hour_mean > 0:
        raise ConfigError(f"events_per_hour_mean must be positive, got {config.events_per_hour_mean}")

    n = config.samples_per_cycle
    appliances = tuple(
        build_appliance(
            spec,
            seed=derive_seed(config.seed, "appliance", k),
            index=k,
            v_rms=config.v_rms,
            n=n,
            mains_freq=config.mains_freq,
        )
        for k, spec in enumerate(specs)
    )
    n_cycles = int(round(config.duration * 3600.0 * config.mains_freq))
    schedule_rng, toggle_rng, dynamics_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(3)
    )
    cycles = _schedule(config, n_cycles, schedule_rng)

    on: Dict[int, Tuple[int, np.ndarray]] = {}
    intervals: List[OnInterval] = []
    boundaries = [0]
    segment_cycles = [np.zeros(n)]
    rows = []
    for c in cycles:
        a = int(toggle_rng.integers(len(appliances)))
        if a in on:
            start, cycle = on.pop(a)
            intervals.append(OnInterval(a, start, int(c), cycle))
            polarity = "off"
        else:
            model = appliances[a]
            cycle = reconstruct_cw(model, dynamics_rng).i if config.dynamics else model.base.i
            on[a] = (int(c), np.array(cycle))
            polarity = "on"
        rows.append({"event_index": int(c) * n, "appliance": a, "polarity": polarity})
        boundaries.append(int(c))
        segment_cycles.append(np.sum([cyc for _, cyc in on.values()], axis=0) if on else np.zeros(n))
    for a, (start, cycle) in sorted(on.items()):
        intervals.append(OnInterval(a, start, n_cycles, cycle))

    boundaries = np.array(boundaries)
    segment_cycles = np.stack(segment_cycles)
    lengths = np.diff(np.append(boundaries, n_cycles))
    noise_power = float(np.sum(lengths * np.mean(np.square(segment_cycles), axis=1)) / n_cycles)
    if not is_noiseless(config.snr_db):
        # Fail early on an unusable SNR or an all-zero stream
        noise_sigma(noise_power, config.snr_db)

    truth = pd.DataFrame(rows, columns=TRUTH_COLUMNS)
    logger.info(
        f"Generated scenario: {len(appliances)} appliances, {len(truth)} events over "
        f"{config.duration:g} h ({n_cycles} cycles)"
    )
    return Scenario(
        config=config,
        appliances=appliances,
        voltage_cycle=voltage_cycle(config.v_rms, n),
        boundaries=boundaries,
        segment_cycles=segment_cycles,
        intervals=tuple(sorted(intervals, key=lambda iv: (iv.start_cycle, iv.appliance))),
        truth=truth,
        n_cycles=n_cycles,
        noise_power=noise_power,
        noise_seed=derive_seed(config.seed, "noise"),
    )


def appliance_channel(appliance: int) -> int:
    """Corpus channel of appliance k (channel 1 is the mains)."""
    return appliance + APPLIANCE_CHANNEL_OFFSET


def scenario_channel_map(scenario: Scenario) -> ChannelMap:
    entries = [(1, "mains")] + [(appliance_channel(k), name) for k, name in enumerate(scenario.names)]
    return ChannelMap(entries=tuple(entries), mains_channels=(1,))


def export_scenario(
    scenario: Scenario,
    path: Path,
    encoding: str = "text",
    appliance_channels: bool = True,
) -> ChannelMap:
    """
    Write a scenario as a waveform corpus with its truth log.

    The truth log names appliances by their corpus channel.

    Args:
        scenario: generated scenario
        path: corpus directory
        encoding: "text" or "f32"
        appliance_channels: also write each appliance's noise-free current

    Returns:
        The channel map written to the header
    """
    v, i = scenario.waveforms()
    channel_map = scenario_channel_map(scenario)
    currents = {1: i}
    if appliance_channels:
        for k in range(len(scenario.appliances)):
            currents[appliance_channel(k)] = v.with_samples(
                scenario.appliance_window(k, 0, scenario.n_cycles)
            )
    else:
        channel_map = ChannelMap(entries=((1, "mains"),), mains_channels=(1,))
    truth = scenario.truth.assign(appliance=scenario.truth["appliance"].map(appliance_channel))
    write_waveform_corpus(path, channel_map, v, currents, truth=truth, encoding=encoding)
    return channel_map


def truth_deltas(scenario: Scenario, events: Optional[Sequence[int]] = None) -> List[DeltaSignature]:
    """Delta signatures at the logged events (or at the given event indices)."""
    indices = scenario.truth["event_index"].tolist() if events is None else list(events)
    return [scenario.delta_at(int(e)) for e in indices]
