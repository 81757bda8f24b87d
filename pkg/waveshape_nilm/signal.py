"""
Waveform primitives: sampling grid, DFT, RMS and power integrals, resampling
and SNR-calibrated noise.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    ArgumentError,
    BoundaryError,
    DegenerateInputError,
    MalformedSignalError,
    SizeError,
)

logger = logging.getLogger(__name__)

DEFAULT_MAINS_FREQ = 60.0
DEFAULT_SAMPLES_PER_CYCLE = 256
DEFAULT_SAMPLE_RATE = DEFAULT_MAINS_FREQ * DEFAULT_SAMPLES_PER_CYCLE
# Highest analyzed frequency is 4.5 kHz
MIN_SAMPLE_RATE = 9000.0
MIN_CYCLE_SAMPLES = 64

ArrayLike = Union[Sequence[float], np.ndarray]


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _frozen(values: ArrayLike, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled voltage or current stream on a mains-locked grid."""

    samples: np.ndarray
    sample_rate: float = DEFAULT_SAMPLE_RATE
    mains_freq: float = DEFAULT_MAINS_FREQ

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(self.samples))
        if self.samples.ndim != 1:
            raise SizeError("Waveform samples must be one-dimensional")
        if self.mains_freq <= 0 or self.sample_rate <= 0:
            raise ArgumentError("sample_rate and mains_freq must be positive")
        if self.sample_rate < MIN_SAMPLE_RATE:
            raise SizeError(
                f"sample_rate {self.sample_rate} Hz is below {MIN_SAMPLE_RATE} Hz "
                f"needed for the 4.5 kHz analysis band"
            )
        spc = self.sample_rate / self.mains_freq
        if abs(spc - round(spc)) > 1e-9 or not is_power_of_two(int(round(spc))):
            raise SizeError(
                f"{spc:g} samples per cycle is not a power of two; use resample() first"
            )

    @property
    def samples_per_cycle(self) -> int:
        return int(round(self.sample_rate / self.mains_freq))

    @property
    def n_cycles(self) -> int:
        return len(self.samples) // self.samples_per_cycle

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)

    def same_grid(self, other: "Waveform") -> bool:
        return (
            self.sample_rate == other.sample_rate
            and self.mains_freq == other.mains_freq
            and len(self.samples) == len(other.samples)
        )

    def with_samples(self, samples: ArrayLike) -> "Waveform":
        return replace(self, samples=samples)

    def segment(self, start: int, stop: int) -> "Waveform":
        """Sub-stream [start, stop) on the same grid."""
        if start < 0 or stop > len(self.samples) or start > stop:
            raise BoundaryError(f"Segment [{start}, {stop}) outside stream of {len(self)} samples")
        return self.with_samples(self.samples[start:stop])


@dataclass(frozen=True, eq=False)
class CyclePair:
    """One phase-aligned mains cycle of voltage and current samples."""

    v: np.ndarray
    i: np.ndarray
    mains_freq: float = DEFAULT_MAINS_FREQ

    def __post_init__(self):
        object.__setattr__(self, "v", _frozen(self.v))
        object.__setattr__(self, "i", _frozen(self.i))
        if self.v.shape != self.i.shape or self.v.ndim != 1:
            raise SizeError(f"Cycle v and i differ in shape: {self.v.shape} vs {self.i.shape}")
        n = len(self.v)
        if n < MIN_CYCLE_SAMPLES or not is_power_of_two(n):
            raise SizeError(f"Cycle length {n} must be a power of two >= {MIN_CYCLE_SAMPLES}")

    @property
    def n(self) -> int:
        return len(self.v)

    @property
    def sample_rate(self) -> float:
        return self.n * self.mains_freq

    def with_current(self, i: ArrayLike) -> "CyclePair":
        return replace(self, i=i)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CyclePair):
            return NotImplemented
        return (
            self.mains_freq == other.mains_freq
            and np.array_equal(self.v, other.v)
            and np.array_equal(self.i, other.i)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Complex DFT coefficients with the width of one frequency bin."""

    coefficients: np.ndarray
    bin_width: float = 1.0

    def __len__(self) -> int:
        return len(self.coefficients)

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(len(self.coefficients)) * self.bin_width

    def magnitudes(self) -> np.ndarray:
        return np.abs(self.coefficients)

    def is_conjugate_symmetric(self, atol: float = 1e-12) -> bool:
        c = self.coefficients
        return bool(np.allclose(c[1:], np.conj(c[:0:-1]), rtol=0.0, atol=atol))


def dft(x: ArrayLike, sample_rate: float = 1.0) -> Spectrum:
    """
    Unnormalized forward DFT of a power-of-two length sequence.

    Args:
        x: real or complex samples
        sample_rate: samples per second, sets the bin width (default 1.0)

    Returns:
        Spectrum with bin width sample_rate / N
    """
    x = np.asarray(x)
    n = len(x)
    if not is_power_of_two(n):
        raise SizeError(f"DFT length {n} is not a power of two")
    return Spectrum(coefficients=np.fft.fft(x), bin_width=sample_rate / n)


def idft(spectrum: Union[Spectrum, ArrayLike]) -> np.ndarray:
    """Inverse DFT with 1/N normalization; returns complex samples."""
    coeffs = spectrum.coefficients if isinstance(spectrum, Spectrum) else np.asarray(spectrum)
    if not is_power_of_two(len(coeffs)):
        raise SizeError(f"IDFT length {len(coeffs)} is not a power of two")
    return np.fft.ifft(coeffs)


def rms(x: ArrayLike) -> float:
    """Root mean square of a non-empty sequence."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise SizeError("rms of an empty sequence")
    return float(np.sqrt(np.mean(np.square(x))))


def active_power(v: ArrayLike, i: ArrayLike) -> float:
    """Mean instantaneous power over the given samples."""
    return float(np.mean(np.asarray(v, dtype=float) * np.asarray(i, dtype=float)))


def cycle_power(v: Waveform, i: Waveform) -> np.ndarray:
    """Active power of every whole cycle of a stream pair (trailing partial cycle dropped)."""
    if not v.same_grid(i):
        raise ArgumentError("Voltage and current streams are not on the same sampling grid")
    n = v.samples_per_cycle
    k = v.n_cycles
    vi = v.samples[: k * n] * i.samples[: k * n]
    return vi.reshape(k, n).mean(axis=1)


def noise_sigma(power: float, snr_db: Optional[float]) -> float:
    """Standard deviation of white noise giving snr_db against a signal of mean-square power."""
    if is_noiseless(snr_db):
        return 0.0
    if not math.isfinite(snr_db):
        raise ArgumentError(f"snr_db must be finite or the no-noise sentinel, got {snr_db}")
    if power <= 0.0:
        raise DegenerateInputError("Cannot calibrate noise against a zero-power signal")
    return math.sqrt(power / 10.0 ** (snr_db / 10.0))


def is_noiseless(snr_db: Optional[float]) -> bool:
    """None and +inf both mean "no noise"."""
    return snr_db is None or snr_db == math.inf


def add_noise(
    x: Waveform,
    snr_db: Optional[float],
    seed: int,
    reference_power: Optional[float] = None,
) -> Waveform:
    """
    Add zero-mean white Gaussian noise at a given SNR.

    Args:
        x: stream to corrupt
        snr_db: SNR in dB; None or +inf leaves x untouched
        seed: generator seed, output is bit-reproducible for a fixed seed
        reference_power: signal mean-square power to calibrate against
            (defaults to that of x; windows of a longer stream pass the stream's)

    Returns:
        New Waveform (or x itself when noiseless)
    """
    if len(x) == 0:
        raise SizeError("Cannot add noise to an empty waveform")
    if is_noiseless(snr_db):
        return x
    power = float(np.mean(np.square(x.samples))) if reference_power is None else reference_power
    sigma = noise_sigma(power, snr_db)
    rng = np.random.default_rng(seed)
    return x.with_samples(x.samples + rng.normal(0.0, sigma, size=len(x)))


def resample(
    samples: ArrayLike,
    sample_rate: float,
    mains_freq: float = DEFAULT_MAINS_FREQ,
) -> Waveform:
    """
    Linearly interpolate a stream onto the nearest power-of-two samples-per-cycle grid.

    A stream already on such a grid is wrapped unchanged.
    """
    samples = np.asarray(samples, dtype=float)
    spc = sample_rate / mains_freq
    target = 2 ** int(round(math.log2(spc)))
    new_rate = target * mains_freq
    if abs(spc - target) < 1e-9:
        return Waveform(samples, sample_rate=new_rate, mains_freq=mains_freq)

    duration = len(samples) / sample_rate
    n_out = int(math.floor(duration * new_rate + 1e-9))
    t_in = np.arange(len(samples)) / sample_rate
    t_out = np.arange(n_out) / new_rate
    logger.warning(f"Resampling {len(samples)} samples at {sample_rate:g} Hz to {new_rate:g} Hz")
    return Waveform(np.interp(t_out, t_in, samples), sample_rate=new_rate, mains_freq=mains_freq)


def find_rising_crossing(v: np.ndarray, at: int, n: int) -> int:
    """
    Index of the first positive-going zero crossing of v at or after `at`.

    The crossing is interpolated between samples k and k+1 (v[k] < 0 <= v[k+1])
    and snapped to the nearest sample; it must fall within one cycle of `at`.
    """
    lo = max(at - 1, 0)
    hi = min(at + n, len(v) - 1)
    k = np.arange(lo, hi)
    a = v[k]
    b = v[k + 1]
    rising = (a < 0.0) & (b >= 0.0)
    if np.any(rising):
        k = k[rising]
        t = k + (-a[rising]) / (b[rising] - a[rising])
        snapped = np.rint(t).astype(int)
        ok = snapped >= at
        if np.any(ok):
            return int(snapped[ok][0])
    raise MalformedSignalError(f"No rising voltage zero crossing within one cycle of sample {at}")


def extract_cycle(v: Waveform, i: Waveform, at: int) -> CyclePair:
    """
    Cut one phase-aligned cycle starting at the first rising voltage zero crossing at or after `at`.
    """
    if not v.same_grid(i):
        raise ArgumentError("Voltage and current streams are not on the same sampling grid")
    n = v.samples_per_cycle
    if at < 0 or at + n > len(v):
        raise BoundaryError(f"Cycle at {at} needs samples [{at}, {at + n}) of {len(v)}")

    start = find_rising_crossing(v.samples, at, n)
    if start + n > len(v):
        raise BoundaryError(f"Cycle starting at {start} runs past the end of the stream")
    return CyclePair(
        v=v.samples[start:start + n],
        i=i.samples[start:start + n],
        mains_freq=v.mains_freq,
    )


def sine_cycle(
    amplitude: float = 1.0,
    n: int = DEFAULT_SAMPLES_PER_CYCLE,
    phase: float = 0.0,
    harmonic: int = 1,
) -> np.ndarray:
    """One cycle of amplitude*sin(h*theta + phase) starting at theta = 0."""
    theta = 2.0 * np.pi * np.arange(n) / n
    return amplitude * np.sin(harmonic * theta + phase)
