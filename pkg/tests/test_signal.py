import math

import numpy as np
import pytest

from waveshape_nilm.errors import ArgumentError, BoundaryError, MalformedSignalError, SizeError
from waveshape_nilm.signal import (
    CyclePair,
    Waveform,
    active_power,
    add_noise,
    cycle_power,
    dft,
    extract_cycle,
    find_rising_crossing,
    idft,
    is_noiseless,
    noise_sigma,
    resample,
    rms,
    sine_cycle,
)

from conftest import N, V_PEAK, tiled


def test_waveform_requires_power_of_two_cycle():
    with pytest.raises(SizeError):
        Waveform(np.zeros(400), sample_rate=200 * 60.0)


def test_waveform_rejects_low_sample_rate():
    with pytest.raises(SizeError):
        Waveform(np.zeros(128), sample_rate=128 * 60.0)


def test_waveform_geometry():
    w = tiled(sine_cycle(1.0, N), 10)
    assert w.samples_per_cycle == N
    assert w.n_cycles == 10
    assert w.duration == pytest.approx(10 / 60.0)
    assert not w.samples.flags.writeable


def test_segment_bounds():
    w = tiled(sine_cycle(1.0, N), 2)
    assert len(w.segment(10, 20)) == 10
    with pytest.raises(BoundaryError):
        w.segment(0, 3 * N)


def test_cycle_pair_shapes():
    with pytest.raises(SizeError):
        CyclePair(v=np.zeros(N), i=np.zeros(N // 2))
    with pytest.raises(SizeError):
        CyclePair(v=np.zeros(100), i=np.zeros(100))


def test_rms_and_power(resistive_cycle):
    assert rms(sine_cycle(2.0, N)) == pytest.approx(2.0 / math.sqrt(2.0))
    assert active_power(resistive_cycle.v, resistive_cycle.i) == pytest.approx(V_PEAK * 5.0 / 2.0)
    with pytest.raises(SizeError):
        rms([])


def test_cycle_power_drops_partial_cycle():
    v = Waveform(np.tile(sine_cycle(V_PEAK, N), 3)[: 3 * N - 10])
    p = cycle_power(v, v)
    assert p.shape == (2,)
    assert p == pytest.approx([V_PEAK ** 2 / 2.0] * 2)


def test_dft_of_real_signal_is_conjugate_symmetric():
    x = sine_cycle(1.0, N) + 0.3 * sine_cycle(1.0, N, harmonic=3)
    spectrum = dft(x, sample_rate=N * 60.0)
    assert spectrum.is_conjugate_symmetric(atol=1e-9)
    assert spectrum.bin_width == pytest.approx(60.0)
    assert spectrum.magnitudes()[3] == pytest.approx(0.3 * N / 2.0)
    assert np.allclose(idft(spectrum).real, x)


@pytest.mark.parametrize("n", [64, 256, 1024])
def test_dft_preserves_energy(n):
    rng = np.random.default_rng(n)
    x = rng.normal(size=n) + 1j * rng.normal(size=n)
    energy = np.sum(np.abs(dft(x).coefficients) ** 2) / n
    assert energy == pytest.approx(np.sum(np.abs(x) ** 2), rel=1e-12)


def test_dft_rejects_other_lengths():
    with pytest.raises(SizeError):
        dft(np.zeros(100))


def test_noise_sigma():
    assert noise_sigma(1.0, 20.0) == pytest.approx(0.1)
    assert noise_sigma(5.0, None) == 0.0
    assert is_noiseless(math.inf)
    with pytest.raises(ArgumentError):
        noise_sigma(1.0, math.nan)


def test_add_noise_hits_requested_snr():
    clean = tiled(sine_cycle(10.0, N), 200)
    noisy = add_noise(clean, 20.0, seed=5)
    noise = noisy.samples - clean.samples
    snr = 10.0 * math.log10(np.mean(clean.samples ** 2) / np.mean(noise ** 2))
    assert snr == pytest.approx(20.0, abs=0.2)


def test_add_noise_is_reproducible():
    clean = tiled(sine_cycle(10.0, N), 4)
    a = add_noise(clean, 30.0, seed=9)
    b = add_noise(clean, 30.0, seed=9)
    assert np.array_equal(a.samples, b.samples)
    assert add_noise(clean, None, seed=9) is clean


def test_resample_to_power_of_two_grid():
    samples = np.tile(sine_cycle(1.0, 200), 6)
    w = resample(samples, sample_rate=200 * 60.0)
    assert w.samples_per_cycle == 256
    assert w.n_cycles == 6
    assert w.samples[64] == pytest.approx(1.0, abs=1e-3)


def test_find_rising_crossing_on_tiled_sine():
    v = np.tile(sine_cycle(1.0, N), 3)
    assert find_rising_crossing(v, N, N) == N
    assert find_rising_crossing(v, N + 5, N) == 2 * N


def test_find_rising_crossing_needs_a_crossing():
    with pytest.raises(MalformedSignalError):
        find_rising_crossing(np.ones(3 * N), 0, N)


def test_extract_cycle_starts_at_rising_crossing():
    v = tiled(sine_cycle(V_PEAK, N, phase=0.4), 4)
    i = v.with_samples(v.samples / 10.0)
    cycle = extract_cycle(v, i, N)
    assert cycle.n == N
    assert abs(cycle.v[0]) < V_PEAK * 2 * math.pi / N
    assert cycle.v[1] > cycle.v[0]
    with pytest.raises(BoundaryError):
        extract_cycle(v, i, 4 * N - 10)
