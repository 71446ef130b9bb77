import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtraj.core import ConfigError, HermitianMatrix2, config_from_tau
from qtraj.measurement import rabi_rotate, update_z
from qtraj.past_state import (
    SmoothedState,
    _apply_diag_kraus,
    _trace,
    backward_step,
    backward_sweep,
    check_povm,
    forward_step,
    forward_sweep,
    gaussian_povm,
    guessing_game,
    kraus_z,
    paired_sign_test,
    predict_hidden,
    projective_povm,
    smooth,
)

DRIVE = 2 * math.pi * 0.4e6


def _random_rho(rng):
    v = rng.normal(size=3)
    v *= rng.uniform(0, 1) / np.linalg.norm(v)
    return HermitianMatrix2.from_bloch(v)


def _random_effect(rng):
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    return a @ a.conj().T


@pytest.mark.parametrize("eta,t2,omega", [(1.0, math.inf, 0.0), (0.4, 20e-6, DRIVE), (0.7, 5e-6, 3 * DRIVE)])
def test_forward_step_matches_bloch_update(eta, t2, omega):
    cfg = config_from_tau(1.28e-6, 20e-9, eta_m=eta, T2star=t2, Omega=omega)
    rng = np.random.default_rng(0)
    for _ in range(200):
        q = _random_rho(rng).to_bloch()
        r = rng.normal(0, 8)
        expected = rabi_rotate(update_z(q, r, cfg), cfg.Omega * cfg.dt)
        got = forward_step(HermitianMatrix2.from_bloch(q), r, cfg).to_bloch()
        np.testing.assert_allclose(got.to_array(), expected.to_array(), atol=1e-12)


def test_kraus_operators_complete():
    cfg = config_from_tau(600e-9, 400e-9)
    r = np.linspace(-40, 40, 400_001)
    k = kraus_z(r, cfg)
    integral = np.trapezoid(np.einsum("nij,nik->njk", k, k), r, axis=0)
    np.testing.assert_allclose(integral, np.eye(2), atol=1e-9)


@pytest.mark.parametrize("omega", [0.0, DRIVE])
def test_backward_map_is_adjoint(omega):
    # Tr(F(rho) E) / Tr(rho F^dag(E)) must not depend on rho
    cfg = config_from_tau(1.28e-6, 20e-9, eta_m=0.4, T2star=20e-6, Omega=omega)
    rng = np.random.default_rng(1)
    for _ in range(50):
        r = rng.normal(0, 6)
        E = HermitianMatrix2.from_array(_random_effect(rng))
        back = backward_step(E, r, cfg).to_array()
        ratios = []
        for _ in range(4):
            rho = _random_rho(rng)
            weight = _trace(_apply_diag_kraus(rho.to_array(), r, cfg))
            lhs = weight * np.real(np.trace(forward_step(rho, r, cfg).to_array() @ E.to_array()))
            rhs = np.real(np.trace(rho.to_array() @ back))
            ratios.append(lhs / rhs)
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-10)


def test_backward_step_has_unit_trace():
    cfg = config_from_tau(1.28e-6, 20e-9, Omega=DRIVE)
    E = backward_step(HermitianMatrix2.identity(0.5), 3.0, cfg)
    assert E.trace == pytest.approx(1.0)
    assert E.is_psd()


def test_identity_effect_reduces_to_forward_prediction():
    cfg = config_from_tau(1.28e-6, 20e-9, eta_m=0.4, T2star=20e-6, Omega=DRIVE)
    rng = np.random.default_rng(2)
    records = rng.normal(0, math.sqrt(cfg.tau / cfg.dt), (200, 60))
    res = smooth(records, cfg, 60)
    np.testing.assert_allclose(res["smoothed"], res["forward"], atol=1e-12)
    rho = forward_sweep(records, HermitianMatrix2.from_bloch((1, 0, 0)), cfg)[:, -1]
    pz = 0.5 * (1 + np.real(rho[:, 0, 0] - rho[:, 1, 1]))
    np.testing.assert_allclose(res["forward"][:, 0], pz, atol=1e-12)


def test_effect_scale_invariance():
    rng = np.random.default_rng(3)
    povm = projective_povm("x")
    for _ in range(20):
        rho = _random_rho(rng)
        E = _random_effect(rng)
        base = predict_hidden(rho, E, povm)
        for scale in (1e-6, 0.3, 7.0, 1e8):
            np.testing.assert_allclose(predict_hidden(rho, scale * E, povm), base, atol=1e-12)


def test_undriven_smoothing_matches_log_odds():
    # with no drive, later z records just add their log likelihood ratio 2 r dt / tau
    cfg = config_from_tau(1.28e-6, 20e-9, eta_m=0.4, T2star=20e-6)
    rng = np.random.default_rng(4)
    records = rng.normal(0.2, math.sqrt(cfg.tau / cfg.dt), (100, 40))
    k = 15
    res = smooth(records, cfg, k)
    p_plus = res["forward"][:, 0]
    log_odds = np.log(p_plus / (1 - p_plus)) + 2 * records[:, k:].sum(axis=1) * cfg.dt / cfg.tau
    np.testing.assert_allclose(res["smoothed"][:, 0], 1 / (1 + np.exp(-log_odds)), atol=1e-12)


def test_sweeps_shapes_and_terminal_condition():
    cfg = config_from_tau(1.28e-6, 20e-9)
    records = np.zeros((3, 5))
    assert forward_sweep(records, HermitianMatrix2.from_bloch((1, 0, 0)), cfg).shape == (3, 6, 2, 2)
    E = backward_sweep(records, cfg)
    assert E.shape == (3, 6, 2, 2)
    np.testing.assert_allclose(E[:, -1], np.broadcast_to(np.eye(2) / 2, (3, 2, 2)))


def test_gaussian_povm_is_complete():
    cfg = config_from_tau(600e-9, 400e-9)
    povm = gaussian_povm([-np.inf, -1.0, 0.0, 2.5, np.inf], cfg)
    assert check_povm(povm).shape == (4, 2, 2)
    with pytest.raises(ValueError):
        check_povm(povm[:-1])
    with pytest.raises(ValueError):
        check_povm([np.eye(3)])


def test_smooth_rejects_bad_inputs():
    cfg = config_from_tau(1.28e-6, 20e-9)
    with pytest.raises(ConfigError):
        smooth(np.zeros((1, 4)), cfg, 5)
    with pytest.raises(ConfigError):
        smooth(np.zeros((1, 4)), config_from_tau(1.28e-6, 20e-9, axis="phi"), 2)


def test_smoothed_state_validation():
    rho = HermitianMatrix2.from_bloch((0, 0, 1))
    state = SmoothedState(rho, HermitianMatrix2.identity(), 0.0)
    np.testing.assert_allclose(state.predict(projective_povm("z")), [1.0, 0.0])
    with pytest.raises(ValueError):
        SmoothedState(HermitianMatrix2.identity(), HermitianMatrix2.identity(), 0.0)


@settings(max_examples=100, deadline=None)
@given(r=st.floats(-30, 30), z=st.floats(-0.99, 0.99), x=st.floats(-0.1, 0.1))
def test_forward_step_stays_physical(r, z, x):
    cfg = config_from_tau(1.28e-6, 20e-9, eta_m=0.4, T2star=20e-6, Omega=DRIVE)
    rho = forward_step(HermitianMatrix2.from_bloch((x, 0.0, z)), r, cfg)
    assert rho.trace == pytest.approx(1.0, abs=1e-12)
    assert rho.is_psd()


def test_paired_sign_test():
    yes = np.array([True] * 10)
    assert paired_sign_test(yes, yes) == 1.0
    p = paired_sign_test(np.array([True] * 10), np.array([False] * 10))
    assert p == pytest.approx(0.5**10)


def test_guessing_game_smoothing_wins():
    cfg = config_from_tau(1.28e-6, 20e-9, Omega=DRIVE)
    result = guessing_game(cfg, 10_000, 50, 50, seed=5)
    assert result.smoothed_accuracy > result.forward_accuracy
    assert result.p_value < 1e-3
    assert result.records.shape == (10_000, 100)
    assert set(result.to_dict()) == {"n_games", "forward_accuracy", "smoothed_accuracy", "p_value"}


def test_guessing_game_validation():
    cfg = config_from_tau(1.28e-6, 20e-9)
    with pytest.raises(ConfigError):
        guessing_game(cfg, 0, 5, 5)
    res = guessing_game(cfg, 200, 0, 10, seed=1)
    np.testing.assert_allclose(res.forward_prob, 0.5)
