from dataclasses import replace

import numpy as np
import pytest

from waveshape_nilm.errors import ArgumentError, ConfigError, StateError
from waveshape_nilm.features import extract_pq, extract_ws
from waveshape_nilm.ingest import read_waveform_corpus
from waveshape_nilm.signal import active_power, dft
from waveshape_nilm.simulate import (
    NOISE_BLOCK_CYCLES,
    ApplianceCategory,
    ApplianceModel,
    ScenarioConfig,
    _schedule,
    default_bank,
    export_scenario,
    generate_scenario,
    make_appliance,
    reconstruct_cw,
    truth_deltas,
)
from waveshape_nilm.utils import compute_directory_hash

from conftest import small_scenario_config


def test_resistive_appliance_draws_nominal_power():
    model = make_appliance(ApplianceCategory.RESISTIVE, 600.0)
    assert active_power(model.base.v, model.base.i) == pytest.approx(600.0, abs=1.0)
    assert len(model.snapshots) == 8
    for k in range(len(model.snapshots)):
        p = active_power(model.base.v, model.snapshot_cycle(k))
        assert p == pytest.approx(600.0, rel=0.05)


def test_reconstructed_cycles_stay_near_nominal_power():
    model = make_appliance(ApplianceCategory.INDUCTIVE, 400.0, seed=3)
    rng = np.random.default_rng(0)
    for _ in range(20):
        cycle = reconstruct_cw(model, rng)
        assert active_power(cycle.v, cycle.i) == pytest.approx(400.0, rel=0.05)


def test_inductive_load_lags():
    model = make_appliance(ApplianceCategory.INDUCTIVE, 400.0, params={"phi_deg": 40.0})
    assert extract_ws(model.base).looping_direction == 1
    assert extract_pq(model.base).q > 0


def test_power_electronic_load_is_distorted():
    pe = make_appliance(ApplianceCategory.POWER_ELECTRONIC, 600.0)
    resistive = make_appliance(ApplianceCategory.RESISTIVE, 600.0)
    assert extract_pq(pe.base).thd_o > 0.2
    # no current flows around the voltage zero crossing
    assert abs(extract_ws(pe.base).middle_slope) < 0.1 * extract_ws(resistive.base).middle_slope


def test_make_appliance_rejects_bad_params():
    with pytest.raises(ArgumentError):
        make_appliance(ApplianceCategory.INDUCTIVE, 100.0, params={"phi_deg": 95.0})
    with pytest.raises(ArgumentError):
        make_appliance(ApplianceCategory.RESISTIVE, -5.0)


def test_single_snapshot_reconstructs_itself():
    model = make_appliance(ApplianceCategory.COMPOSITE, 300.0, params={"n_snapshots": 1}, seed=5)
    cycle = reconstruct_cw(model, np.random.default_rng(9))
    assert np.allclose(cycle.i, model.snapshot_cycle(0), rtol=0.0, atol=1e-9)


def test_two_snapshots_are_drawn_evenly_per_bin():
    model = make_appliance(ApplianceCategory.RESISTIVE, 200.0, params={"n_snapshots": 2}, seed=1, n=64)
    first = model.snapshots[0].coefficients[1]
    assert first != model.snapshots[1].coefficients[1]
    rng = np.random.default_rng(2)
    draws = 10_000
    hits = 0
    for _ in range(draws):
        coeff = dft(reconstruct_cw(model, rng).i).coefficients[1]
        hits += abs(coeff - first) < 1e-9 * abs(first)
    assert hits / draws == pytest.approx(0.5, abs=0.02)


def test_reconstruct_needs_snapshots():
    model = make_appliance(ApplianceCategory.RESISTIVE, 200.0)
    empty = ApplianceModel(
        name="bare", category=model.category, base=model.base, snapshots=(), nominal_p=200.0
    )
    with pytest.raises(StateError):
        reconstruct_cw(empty, np.random.default_rng(0))


def test_default_bank():
    bank = default_bank(3)
    assert [a.category for a in bank] == [
        ApplianceCategory.RESISTIVE,
        ApplianceCategory.INDUCTIVE,
        ApplianceCategory.POWER_ELECTRONIC,
    ]
    assert [a.nominal_p for a in bank] == [150.0, 400.0, 650.0]
    with pytest.raises(ArgumentError):
        default_bank(41)


def test_scenario_is_a_superposition(scenario):
    stop = min(scenario.n_cycles, 600)
    _, i = scenario.window(0, stop)
    total = sum(scenario.appliance_window(k, 0, stop) for k in range(len(scenario.appliances)))
    assert np.allclose(i.samples, total, rtol=0.0, atol=1e-9)


def test_truth_deltas_are_the_switched_cycles(scenario):
    assert len(scenario.truth) > 10
    deltas = truth_deltas(scenario)
    for delta, row in zip(deltas, scenario.truth.itertuples()):
        sign = 1.0 if row.polarity == "on" else -1.0
        expected = sign * scenario.appliances[row.appliance].base.i
        assert np.allclose(delta.cycle.i, expected, rtol=0.0, atol=1e-9)
        assert delta.polarity.value == row.polarity


def test_events_are_spaced(scenario):
    cycles = scenario.truth["event_index"].to_numpy() // scenario.n
    gap = 2 * scenario.config.settle + 4
    assert np.all(np.diff(cycles) >= gap)
    assert cycles[0] >= gap
    assert cycles[-1] <= scenario.n_cycles - gap


def test_noise_free_detection_matches_truth(scenario):
    assert scenario.detect() == scenario.truth["event_index"].tolist()


def test_detection_uses_the_scenario_threshold(scenario):
    # every bank appliance is below 1 kW
    strict = replace(scenario, config=scenario.config.model_copy(update={"p_min": 1000.0}))
    assert strict.detect() == []
    assert strict.detect(50.0) == scenario.truth["event_index"].tolist()


def test_noisy_windows_agree_across_blocks():
    noisy = generate_scenario(small_scenario_config(snr_db=20.0))
    n = noisy.n
    _, wide = noisy.window(NOISE_BLOCK_CYCLES - 50, NOISE_BLOCK_CYCLES + 50)
    _, narrow = noisy.window(NOISE_BLOCK_CYCLES - 10, NOISE_BLOCK_CYCLES + 10)
    assert np.array_equal(wide.samples[40 * n:60 * n], narrow.samples)
    clean = sum(noisy.appliance_window(k, 0, 100) for k in range(3))
    _, head = noisy.window(0, 100)
    assert not np.allclose(head.samples, clean)


def test_scenario_is_reproducible():
    a = generate_scenario(small_scenario_config(snr_db=30.0, dynamics=True))
    b = generate_scenario(small_scenario_config(snr_db=30.0, dynamics=True))
    assert a.truth.equals(b.truth)
    assert np.array_equal(a.window(100, 200)[1].samples, b.window(100, 200)[1].samples)
    c = generate_scenario(small_scenario_config(seed=12))
    assert not a.truth.equals(c.truth)


def test_schedule_rate_over_two_weeks():
    config = ScenarioConfig(bank_size=3, duration=336.0)
    n_cycles = int(336 * 3600 * config.mains_freq)
    cycles = _schedule(config, n_cycles, np.random.default_rng(0))
    assert len(cycles) == pytest.approx(5040, rel=0.05)


def test_scenario_config_errors():
    with pytest.raises(ConfigError):
        generate_scenario(small_scenario_config(bank_size=1))
    with pytest.raises(ConfigError):
        generate_scenario(small_scenario_config(duration=0.0))


def test_export_scenario_round_trip(tmp_path):
    small = generate_scenario(small_scenario_config(duration=0.002, events_per_hour_mean=10000.0))
    channel_map = export_scenario(small, tmp_path / "synthetic")
    assert channel_map.ids == [1, 2, 3, 4]
    corpus = read_waveform_corpus(tmp_path / "synthetic")
    assert len(corpus.truth) == len(small.truth) > 0
    assert set(corpus.truth["appliance"]) <= {2, 3, 4}
    assert np.allclose(corpus.currents[3].samples, small.appliance_window(1, 0, small.n_cycles))


def test_export_is_byte_identical_across_runs(tmp_path):
    config = small_scenario_config(duration=0.002, events_per_hour_mean=10000.0, snr_db=25.0)
    for name in ("a", "b"):
        export_scenario(generate_scenario(config), tmp_path / name, encoding="f32")
    assert compute_directory_hash(tmp_path / "a") == compute_directory_hash(tmp_path / "b")
