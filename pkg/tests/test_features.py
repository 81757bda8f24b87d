import itertools
import math

import numpy as np
import pytest

from waveshape_nilm.errors import ArgumentError, DegenerateFundamentalError, DegenerateVoltageError, SizeError
from waveshape_nilm.events import DeltaSignature, Polarity
from waveshape_nilm.features import (
    FeatureSpace,
    FeatureVector,
    correlation_table,
    count_intersections,
    extract_har,
    extract_pq,
    extract_ws,
    feature_names,
    featurize,
    har_band_concentration,
)
from waveshape_nilm.signal import CyclePair, sine_cycle

from conftest import N, V_PEAK


def brute_force_crossings(x, y):
    """Proper crossings between non-adjacent edges of the closed polygon."""
    n = len(x)

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    pts = list(zip(x, y))
    count = 0
    for a, b in itertools.combinations(range(n), 2):
        if b - a < 2 or (a == 0 and b == n - 1):
            continue
        p1, p2 = pts[a], pts[(a + 1) % n]
        p3, p4 = pts[b], pts[(b + 1) % n]
        d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
        d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
        if d1 * d2 < 0 and d3 * d4 < 0:
            count += 1
    return count


def test_feature_dimensions():
    assert [s.dim for s in FeatureSpace] == [4, 77, 7]
    for space in FeatureSpace:
        assert len(feature_names(space)) == space.dim


def test_feature_vector_checks_length():
    with pytest.raises(SizeError):
        FeatureVector(space="WS", values=np.zeros(4))


def test_pq_of_resistive_load(resistive_cycle):
    pq = extract_pq(resistive_cycle)
    assert pq.p == pytest.approx(V_PEAK * 5.0 / 2.0)
    assert pq.q == pytest.approx(0.0, abs=1e-9)
    assert pq.thd_o == pytest.approx(0.0, abs=1e-9)
    assert pq.thd_e == pytest.approx(0.0, abs=1e-9)


def test_pq_of_lagging_load(inductive_cycle):
    pq = extract_pq(inductive_cycle)
    phi = math.pi / 6
    assert pq.p == pytest.approx(V_PEAK * 5.0 / 2.0 * math.cos(phi))
    assert pq.q == pytest.approx(V_PEAK * 5.0 / 2.0 * math.sin(phi))


def test_thd_splits_odd_and_even(v_cycle):
    i = sine_cycle(1.0, N) + 0.3 * sine_cycle(1.0, N, harmonic=3) + 0.1 * sine_cycle(1.0, N, harmonic=2)
    pq = extract_pq(CyclePair(v=v_cycle, i=i))
    assert pq.thd_o == pytest.approx(0.3)
    assert pq.thd_e == pytest.approx(0.1)
    assert pq.p == pytest.approx(V_PEAK / 2.0)


def test_thd_truncation(v_cycle):
    i = sine_cycle(1.0, N) + 0.2 * sine_cycle(1.0, N, harmonic=41)
    assert extract_pq(CyclePair(v=v_cycle, i=i)).thd_o == pytest.approx(0.0, abs=1e-9)
    assert extract_pq(CyclePair(v=v_cycle, i=i), max_harmonic=None).thd_o == pytest.approx(0.2)


def test_pq_rejects_missing_fundamental(v_cycle):
    with pytest.raises(DegenerateFundamentalError):
        extract_pq(CyclePair(v=v_cycle, i=sine_cycle(1.0, N, harmonic=2)))


def test_har_is_a_distribution(v_cycle):
    i = sine_cycle(1.0, N) + 0.5 * sine_cycle(1.0, N, harmonic=5)
    har = extract_har(CyclePair(v=v_cycle, i=i))
    assert har.bands.shape == (77,)
    assert har.bands.sum() == pytest.approx(1.0)
    # 60 Hz and 300 Hz fall in bands 1 and 5 of 51.9 Hz each
    assert har.bands[1] == pytest.approx(0.8)
    assert har.bands[5] == pytest.approx(0.2)
    assert har_band_concentration(har) == pytest.approx(1.0)


def test_ws_of_resistive_load(resistive_cycle):
    ws = extract_ws(resistive_cycle)
    assert ws.looping_direction == 0
    assert ws.area_enclosed == pytest.approx(0.0, abs=1e-6)
    assert ws.curve_nonlinearity == pytest.approx(0.0, abs=1e-6)
    assert ws.num_intersections == 0
    assert ws.middle_slope == pytest.approx(5.0 / V_PEAK)
    assert ws.span == pytest.approx(10.0, rel=1e-3)


def test_ws_area_of_lagging_load(inductive_cycle):
    ws = extract_ws(inductive_cycle)
    delta = 2 * math.pi / N
    expected = 0.5 * N * V_PEAK * 5.0 * math.sin(delta) * math.sin(math.pi / 6)
    assert ws.looping_direction == 1
    assert ws.area_enclosed == pytest.approx(expected, rel=1e-9)


def test_ws_leading_load_loops_clockwise(v_cycle):
    ws = extract_ws(CyclePair(v=v_cycle, i=sine_cycle(5.0, N, phase=math.pi / 6)))
    assert ws.looping_direction == -1


def test_figure_eight_has_one_intersection():
    theta = 2 * math.pi * np.arange(N) / N + 0.01
    cycle = CyclePair(v=V_PEAK * np.sin(theta), i=np.sin(theta) + 2.0 * np.sin(2 * theta))
    assert extract_ws(cycle).num_intersections == 1


def test_intersections_match_brute_force():
    n = 64
    theta = 2 * math.pi * np.arange(n) / n + 0.013
    x = np.sin(theta) + 0.2 * np.sin(2 * theta + 0.7)
    y = np.sin(3 * theta + 0.3) + 0.4 * np.cos(5 * theta + 0.1)
    assert count_intersections(x, y, 0.0) == brute_force_crossings(x, y)
    assert brute_force_crossings(x, y) > 0


def test_ws_rejects_flat_voltage():
    with pytest.raises(DegenerateVoltageError):
        extract_ws(CyclePair(v=np.zeros(N), i=sine_cycle(1.0, N)))


def test_featurize_orients_off_events(resistive_cycle):
    off = DeltaSignature(
        cycle=resistive_cycle.with_current(-resistive_cycle.i),
        event_index=0,
        polarity=Polarity.OFF,
        p_delta=-425.0,
    )
    plain = featurize(off, FeatureSpace.PQ)
    oriented = featurize(off, "PQ", label=3, oriented=True)
    assert plain.values[0] == pytest.approx(-425.0)
    assert oriented.values[0] == pytest.approx(425.0)
    assert oriented.label == 3
    assert featurize(resistive_cycle, FeatureSpace.WS).values.shape == (7,)
    with pytest.raises(ArgumentError):
        featurize("not a cycle", FeatureSpace.WS)


def test_correlation_of_span_and_power(v_cycle):
    cycles = [CyclePair(v=v_cycle, i=sine_cycle(a, N, phase=-0.3)) for a in (1.0, 2.0, 3.5, 5.0)]
    table = correlation_table(cycles)
    assert len(table) == 5
    row = table[(table["feature_a"] == "span") & (table["feature_b"] == "p")]
    assert row["correlation"].iloc[0] == pytest.approx(1.0)


@pytest.mark.parametrize("phi_deg", [15.0, 30.0, 60.0, 90.0])
@pytest.mark.parametrize("a, b", [(1.0, 1.0), (1.0, 10.0), (10.0, 1.0), (10.0, 10.0)])
def test_ws_area_of_an_ellipse(phi_deg, a, b):
    phi = math.radians(phi_deg)
    ws = extract_ws(CyclePair(v=sine_cycle(a, N), i=sine_cycle(b, N, phase=-phi)))
    assert ws.area_enclosed == pytest.approx(math.pi * a * b * abs(math.sin(phi)), rel=0.01)
    assert ws.looping_direction == int(np.sign(math.sin(phi)))


@pytest.mark.parametrize("phi_deg", [-60.0, -20.0, 0.0, 20.0, 45.0, 80.0])
def test_pq_of_pure_sinusoids(v_cycle, phi_deg):
    phi = math.radians(phi_deg)
    pq = extract_pq(CyclePair(v=v_cycle, i=sine_cycle(3.0, N, phase=-phi)))
    apparent = (V_PEAK / math.sqrt(2)) * (3.0 / math.sqrt(2))
    assert pq.p == pytest.approx(apparent * math.cos(phi), rel=0.005, abs=1e-9)
    assert pq.q == pytest.approx(apparent * math.sin(phi), rel=0.005, abs=1e-9)


def test_thd_of_a_square_wave(v_cycle):
    square = np.where(np.arange(N) < N // 2, 1.0, -1.0)
    pq = extract_pq(CyclePair(v=v_cycle, i=square), max_harmonic=None)
    assert pq.thd_o == pytest.approx(0.4834, rel=0.01)
    assert pq.thd_e == pytest.approx(0.0, abs=1e-9)


def test_span_tracks_power_on_a_noisy_resistive_bank(v_cycle):
    rng = np.random.default_rng(4)
    cycles = []
    for amplitude in np.linspace(0.5, 10.0, 20):
        clean = sine_cycle(amplitude, N)
        # 30 dB below the current's mean-square power
        sigma = math.sqrt(np.mean(clean**2) / 10**3)
        cycles.append(CyclePair(v=v_cycle, i=clean + rng.normal(0.0, sigma, N)))
    table = correlation_table(cycles)
    row = table[(table["feature_a"] == "span") & (table["feature_b"] == "p")]
    assert row["correlation"].iloc[0] >= 0.95


def test_intersections_match_brute_force_on_random_curves():
    rng = np.random.default_rng(8)
    n = 64
    theta = 2 * math.pi * np.arange(n) / n + 0.011
    crossed = 0
    for _ in range(100):
        x = np.sin(theta + rng.uniform(0, 2 * math.pi)) + 0.3 * np.sin(2 * theta + rng.uniform(0, 2 * math.pi))
        k = rng.integers(1, 6)
        y = np.sin(k * theta + rng.uniform(0, 2 * math.pi)) + 0.2 * np.cos(3 * theta + rng.uniform(0, 2 * math.pi))
        expected = brute_force_crossings(x, y)
        assert extract_ws(CyclePair(v=x, i=y)).num_intersections == expected
        crossed += expected > 0
    assert crossed > 10
