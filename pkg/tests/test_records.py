import math

import numpy as np
import pytest
from scipy import stats

from qtraj.core import BlochVector, ConfigError, config_from_tau
from qtraj.presets import get_preset
from qtraj.records import GeneratorSettings, chunk_rng, generate_record, relax_map, simulate_batch
from qtraj.trajectory import reconstruct_array, run_ensemble

TAU = 1e-6


def test_settings_reject_coarse_rabi_steps():
    cfg = config_from_tau(TAU, 20e-9, Omega=2 * math.pi * 8e6)
    with pytest.raises(ConfigError):
        GeneratorSettings(cfg, 10)
    GeneratorSettings(cfg, 10, substeps_per_dt=20)


def test_settings_reject_substeps_longer_than_tenth_tau():
    cfg = config_from_tau(50e-9, 200e-9)
    with pytest.raises(ConfigError):
        GeneratorSettings(cfg, 10, substeps_per_dt=2)
    GeneratorSettings(cfg, 10, substeps_per_dt=40)
    # a single coarse step is the record resolution itself, not a substep
    GeneratorSettings(cfg, 10, substeps_per_dt=1)


def test_settings_validation():
    cfg = config_from_tau(TAU, 1e-8)
    with pytest.raises(ConfigError):
        GeneratorSettings(cfg, 0)
    with pytest.raises(ConfigError):
        GeneratorSettings(cfg, 5, T1=-1.0)
    assert GeneratorSettings(cfg, 5, initial_state=(0, 0, 1)).initial_state == BlochVector(0, 0, 1)


def test_relax_map_examples():
    assert tuple(relax_map(BlochVector(0, 0, 1), 3e-6, 1e-6)) == (0.0, 0.0, 1.0)
    q = relax_map(BlochVector(0.6, 0, -0.8), 1e3, 1e-6)
    assert tuple(q) == pytest.approx((0, 0, 1), abs=1e-300)
    q = relax_map(BlochVector(1, 0, 0), 1e-6, 1e-6)
    assert q.x == pytest.approx(0.60653065971263342, abs=1e-15)
    assert q.z == pytest.approx(0.63212055882855768, abs=1e-15)
    with pytest.raises(ConfigError):
        relax_map(BlochVector(1, 0, 0), 1.0, 0.0)


def test_seed_determinism():
    gen = GeneratorSettings(config_from_tau(TAU, 20e-9, Omega=1e6), 30, seed=11)
    r1, t1 = generate_record(gen)
    r2, t2 = generate_record(gen)
    np.testing.assert_array_equal(r1.samples, r2.samples)
    np.testing.assert_array_equal(t1.states, t2.states)
    r3, _ = generate_record(GeneratorSettings(gen.config, 30, seed=12))
    assert not np.array_equal(r1.samples, r3.samples)
    assert r1.seed == 11 and r1.dt == gen.config.dt


def test_eigenstate_record_moments():
    cfg = config_from_tau(TAU, 100e-9)
    n = 100_000
    ens = run_ensemble(n, GeneratorSettings(cfg, 5, seed=4, initial_state=(0, 0, 1)), reconstruct_records=False)
    var = cfg.tau / cfg.dt
    for k in range(5):
        r = ens.records[:, k]
        assert abs(r.mean() - 1.0) <= 5 * math.sqrt(var / n)
        assert abs(r.var(ddof=1) - var) <= 5 * var * math.sqrt(2 / (n - 1))
    np.testing.assert_array_equal(ens.truth[:, :, 2], 1.0)


def test_born_rule_at_long_times():
    cfg = config_from_tau(TAU, TAU / 10)
    n = 20_000
    ens = run_ensemble(n, GeneratorSettings(cfg, 200, seed=5), reconstruct_records=False)
    z = ens.truth[:, -1, 2]
    assert np.mean(np.abs(z) > 0.99) > 0.999
    lo, hi = stats.binomtest(int(np.sum(z > 0)), n).proportion_ci(0.99)
    assert lo <= 0.5 <= hi


def test_jump_preset_dwells_near_poles():
    preset = get_preset("fig2-jump")
    ens = run_ensemble(500, preset.generator(3), reconstruct_records=False)
    z = ens.truth[:, 1:, 2]
    dwell = np.mean(np.abs(z) > 0.8)
    assert dwell > 0.8, f"fraction of dt-sampled states with |z| > 0.8 is {dwell:.3f}"


@pytest.mark.parametrize("omega", [0.0, 2 * math.pi * 0.4e6])
def test_record_mean_tracks_state(omega):
    cfg = config_from_tau(1.28e-6, 20e-9, Omega=omega)
    n = 50_000
    ens = run_ensemble(n, GeneratorSettings(cfg, 50, seed=6), reconstruct_records=False)
    diff = ens.records - ens.truth[:, :-1, 2]
    se = diff.std(axis=0, ddof=1) / math.sqrt(n)
    assert np.all(np.abs(diff.mean(axis=0)) <= 4 * se)


def test_coarse_record_reconstructs_substep_truth():
    cfg = config_from_tau(TAU, 50e-9)
    gen = GeneratorSettings(cfg, 40, seed=8, substeps_per_dt=10)
    rng = chunk_rng(gen.seed, 0)
    records, truth = simulate_batch(cfg, 200, 40, rng, (1.0, 0.0, 0.0), 10)
    rebuilt = reconstruct_array(records, cfg, (1.0, 0.0, 0.0))
    np.testing.assert_allclose(rebuilt, truth, atol=1e-9)


def test_t1_relaxation_in_ensemble_mean():
    cfg = config_from_tau(TAU, 20e-9)
    T1 = 2e-6
    n = 20_000
    gen = GeneratorSettings(cfg, 100, seed=9, substeps_per_dt=2, T1=T1, initial_state=(0, 0, -1))
    ens = run_ensemble(n, gen, reconstruct_records=False)
    z = ens.truth[:, :, 2]
    expected = 1 - 2 * np.exp(-ens.times / T1)
    se = z.std(axis=0, ddof=1) / math.sqrt(n)
    assert np.all(np.abs(z.mean(axis=0) - expected) <= 4 * np.maximum(se, 1e-15))


def test_phi_records_are_state_independent():
    cfg = config_from_tau(TAU, 100e-9, axis="phi")
    n = 50_000
    ens = run_ensemble(n, GeneratorSettings(cfg, 3, seed=10, initial_state=(0, 0, 1)), reconstruct_records=False)
    var = cfg.tau / cfg.dt
    assert abs(ens.records.mean()) <= 5 * math.sqrt(var / ens.records.size)
    np.testing.assert_array_equal(ens.truth[:, :, 2], 1.0)
