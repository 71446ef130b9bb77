"""Acceptance criteria 1-9, each at its stated tolerance.

Every test records one ``ACCEPTANCE <n>: PASS|FAIL ...`` line, printed
in the pytest terminal summary. Running the file directly prints the same lines.
"""

import math
import time

import numpy as np
import pytest
import sympy as sp
from scipy import stats
from scipy.integrate import solve_ivp

from conftest import ACCEPTANCE_LINES
from quadrature import mixture_expectation
from qtraj.core import BlochVector, HermitianMatrix2, config_from_tau
from qtraj.measurement import update_z, update_z_array
from qtraj.past_state import forward_step, forward_sweep, guessing_game, predict_hidden, projective_povm, smooth
from qtraj.presets import get_preset
from qtraj.records import GeneratorSettings, chunk_rng, generate_record, simulate_batch
from qtraj.tomography import MatchingWindow, RecordWindow, conditional_tomography, simulate_shots
from qtraj.trajectory import ensemble_mean, reconstruct_array, run_ensemble
from qtraj.two_qubit import (
    CascadeConfig,
    TwoQubitBayesState,
    branch_counts,
    cascade_ensemble,
    cascade_step,
    measurement_dephasing_exponent,
    update_diag_array,
)

RATIOS = (0.01, 0.1, 0.5, 2 / 3, 1.0, 2.0, 5.0, 10.0)
Z_GRID = np.linspace(-1, 1, 21)


def record(n: int, ok: bool, detail: str):
    line = f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_1_tanh_exactness():
    start = time.perf_counter()
    worst = 0.0
    for ratio in (0.1, 2 / 3, 1.0, 5.0):
        cfg = config_from_tau(600e-9, ratio * 600e-9)
        for r in np.linspace(-5, 5, 201):
            q = update_z(BlochVector(1.0, 0.0, 0.0), r, cfg)
            worst = max(worst, abs(q.z - math.tanh(r * ratio)))
    elapsed = time.perf_counter() - start
    record(1, worst <= 1e-12 and elapsed < 1.0, f"max |z - tanh(r dt/tau)| = {worst:.2e}, {elapsed:.2f}s")


def test_2_martingale_quadrature():
    start = time.perf_counter()
    worst_single = worst_pair = 0.0
    for ratio in RATIOS:
        sigma = math.sqrt(1 / ratio)
        pair_cfg = CascadeConfig(tau=1.0, dt=ratio)
        for z in Z_GRID:
            q = np.array([math.sqrt(max(0.0, 1 - z * z)), 0.0, z])
            mean = mixture_expectation(
                lambda r: update_z_array(q, r, ratio, 1.0)[:, 2], (1.0, -1.0), ((1 + z) / 2, (1 - z) / 2), sigma
            )
            worst_single = max(worst_single, abs(mean - z))
            # two qubits prepared with the same z on each
            p = np.array([(1 + z) ** 2, 1 - z * z, 1 - z * z, (1 - z) ** 2]) / 4
            for i in range(4):
                mean_p = mixture_expectation(
                    lambda r: update_diag_array(p, r, pair_cfg)[0][:, i],
                    (-2.0, 0.0, 0.0, 2.0),
                    p,
                    sigma,
                )
                worst_pair = max(worst_pair, abs(mean_p - p[i]))
    elapsed = time.perf_counter() - start
    ok = worst_single < 1e-9 and worst_pair < 1e-9 and elapsed < 5.0
    record(2, ok, f"single {worst_single:.1e}, two-qubit {worst_pair:.1e}, {elapsed:.2f}s")


def test_3_unconditioned_decay():
    start = time.perf_counter()
    cfg = config_from_tau(1.28e-6, 20e-9, eta_m=0.4, T2star=20e-6)
    ens = run_ensemble(50_000, GeneratorSettings(cfg, 100, seed=301))
    mean, se = ensemble_mean(ens)
    t = ens.times
    dx = np.abs(mean[:, 0] - np.exp(-cfg.Gamma_ens * t))
    dz = np.abs(mean[:, 2] - 0.0)
    ok = bool(np.all(dx <= 4 * se[:, 0]) and np.all(dz <= 4 * se[:, 2]))
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 60
    worst = max(np.max(dx[1:] / se[1:, 0]), np.max(dz[1:] / se[1:, 2]))
    record(3, ok, f"max deviation {worst:.2f} SE over 100 steps, {elapsed:.1f}s")


def test_4_born_rule_limit():
    start = time.perf_counter()
    tau = 1.28e-6
    cfg = config_from_tau(tau, tau / 20)
    gen = GeneratorSettings(cfg, 400, seed=401, initial_state=(0.8, 0.0, 0.6))
    ens = run_ensemble(100_000, gen, reconstruct_records=False)
    k = int(np.sum(ens.truth[:, -1, 2] > 0))
    ci = stats.binomtest(k, len(ens)).proportion_ci(0.99)
    elapsed = time.perf_counter() - start
    ok = ci.low <= 0.8 <= ci.high and elapsed < 60
    record(4, ok, f"P(z>0) = {k / len(ens):.4f}, 99% CI [{ci.low:.4f}, {ci.high:.4f}], {elapsed:.1f}s")


def _bloch_ode(omega: float, gamma: float, q0, times):
    def rhs(_, q):
        x, y, z = q
        return [omega * z - gamma * x, -gamma * y, -omega * x]

    sol = solve_ivp(rhs, (0.0, times[-1]), q0, t_eval=times, rtol=1e-11, atol=1e-13, method="DOP853")
    return sol.y.T


def test_5_rabi_ensemble_vs_ode():
    cfg = config_from_tau(1.28e-6, 10e-9, Omega=2 * math.pi * 0.4e6)
    ens = run_ensemble(50_000, GeneratorSettings(cfg, 250, seed=501))
    mean, se = ensemble_mean(ens)
    oracle = _bloch_ode(cfg.Omega, cfg.Gamma_ens, [1.0, 0.0, 0.0], ens.times)
    dev = np.abs(mean - oracle)
    # the y component stays exactly 0 on every trajectory
    ok = bool(np.all(dev[:, [0, 2]] <= 4 * se[:, [0, 2]]) and np.all(dev[:, 1] == 0))
    worst = np.max(dev[1:, [0, 2]] / se[1:, [0, 2]])
    record(5, ok, f"max deviation {worst:.2f} SE over 250 steps")


def test_6_conditional_tomography():
    failures = []
    fig3 = get_preset("fig3")
    table = simulate_shots(fig3.generator(601), fig3.tomography["n_shots"])[1]
    for c in fig3.tomography["centers"]:
        est = conditional_tomography(table, RecordWindow(c, 0.05), fig3.config)
        pred = reconstruct_array(np.array([[c]]), fig3.config)[0, -1]
        if not np.all(np.abs(est.mean - pred) <= est.eps + 3 * est.stderr):
            failures.append(f"fig3 r={c}")
    checked = len(fig3.tomography["centers"])

    fig4 = get_preset("fig4b")
    gen = fig4.generator(602)
    _, reference = generate_record(gen)
    steps = list(range(10, 101, 10))
    tables = simulate_shots(gen, fig4.tomography["n_shots"], steps, chunk=1)
    for k in steps:
        target = reference.states[k]
        est = conditional_tomography(tables[k], MatchingWindow(target[0], target[2], 0.05), fig4.config)
        if not np.all(np.abs(est.mean - target) <= 0.05 + 3 * est.stderr):
            failures.append(f"fig4 k={k}")
        checked += 1
        plain = conditional_tomography(tables[k])
        truth = tables[k].truth
        se = np.sqrt(plain.stderr**2 + truth.var(axis=0, ddof=1) / truth.shape[0])
        if not np.all(np.abs(plain.mean - truth.mean(axis=0)) <= 3 * se):
            failures.append(f"unconditioned k={k}")
    record(6, not failures, f"{checked} conditioned checks, failures: {failures or 'none'}")


def test_7_past_state_reductions():
    cfg = config_from_tau(1.28e-6, 20e-9, eta_m=0.4, T2star=20e-6, Omega=2 * math.pi * 0.4e6)
    rng = np.random.default_rng(701)
    records = rng.normal(0, math.sqrt(cfg.tau / cfg.dt), (500, 80))
    res = smooth(records, cfg, 80)
    reduction = np.max(np.abs(res["smoothed"] - res["forward"]))
    rho = forward_sweep(records, HermitianMatrix2.from_bloch((1, 0, 0)), cfg)[:, -1]
    born = 0.5 * (1 + np.real(rho[:, 0, 0] - rho[:, 1, 1]))
    reduction = max(reduction, np.max(np.abs(res["forward"][:, 0] - born)))

    mid = smooth(records, cfg, 40)
    base = predict_hidden(mid["rho"], mid["E"], projective_povm("z"))
    scale = max(
        np.max(np.abs(predict_hidden(mid["rho"], s * mid["E"], projective_povm("z")) - base))
        for s in (1e-8, 0.01, 3.0, 1e6)
    )
    game = guessing_game(config_from_tau(1.28e-6, 20e-9, Omega=2 * math.pi * 0.4e6), 10_000, 50, 50, seed=702)
    ok = (
        reduction <= 1e-12
        and scale <= 1e-12
        and game.smoothed_accuracy > game.forward_accuracy
        and game.p_value < 1e-3
    )
    record(
        7,
        ok,
        f"E~I dev {reduction:.1e}, scale dev {scale:.1e}, accuracy {game.forward_accuracy:.4f} -> "
        f"{game.smoothed_accuracy:.4f}, p = {game.p_value:.1e}",
    )


def test_8_entanglement_genesis():
    tau = 0.75e-6
    cfg = CascadeConfig(tau=tau, dt=tau / 10, eta_m=1.0)
    ens = cascade_ensemble(TwoQubitBayesState.product_superposition(), 200, 100_000, cfg, seed=801)
    counts = branch_counts(ens)
    odd = ens.branches() == 1
    c_10tau = ens.C[odd, 100]
    mean_c = float(c_10tau.mean())
    share = float(np.mean(c_10tau > 0.99))
    expected = len(ens) * np.array([0.25, 0.5, 0.25])
    p_branch = stats.chisquare(counts, expected).pvalue
    c_a, c_b, eta, dt, tau_s = sp.symbols("c_a c_b eta dt tau", positive=True)
    exponent = measurement_dephasing_exponent(c_a, c_b, eta, dt, tau_s)
    symbolic = sp.simplify(exponent.subs(c_b, c_a)) == 0 and sp.simplify(sp.exp(exponent.subs({c_a: 0, c_b: 0}))) == 1
    ok = mean_c > 0.99 and p_branch > 0.01 and symbolic
    record(
        8,
        ok,
        f"odd-branch mean C(10 tau) = {mean_c:.4f} ({share:.3f} of trajectories above 0.99), "
        f"branches {counts.tolist()} p = {p_branch:.3f}, odd-pair factor == 1: {symbolic}",
    )


def _fuzz_config(rng):
    tau = 10 ** rng.uniform(-7.5, -5)
    dt = tau * 10 ** rng.uniform(-2, 0.7)
    eta = rng.uniform(0.05, 1.0)
    t2 = math.inf if rng.random() < 0.3 else 10 ** rng.uniform(-6, -3)
    omega = rng.uniform(0, 0.1 / dt) if rng.random() < 0.7 else 0.0
    axis = "phi" if rng.random() < 0.25 else "z"
    return config_from_tau(tau, dt, eta_m=eta, T2star=t2, Omega=omega, axis=axis)


def test_9_invariant_sweep():
    rng = np.random.default_rng(901)
    violations = {"ball": 0, "trace": 0, "positivity": 0, "determinism": 0}
    n_cases = 10_000
    steps = 12
    for _ in range(n_cases):
        cfg = _fuzz_config(rng)
        v = rng.normal(size=3)
        q0 = v / np.linalg.norm(v) * rng.uniform(0, 1) ** (1 / 3)
        sd = math.sqrt(cfg.tau / cfg.dt)
        records = rng.normal(0, sd, (1, steps)) + rng.choice([-1.0, 1.0]) * rng.uniform(0, 3 * sd)
        states = reconstruct_array(records, cfg, q0)[0]
        if np.any(np.linalg.norm(states, axis=1) > 1 + 1e-12):
            violations["ball"] += 1

        if cfg.axis.value == "z":
            rho = HermitianMatrix2.from_bloch(q0)
            for r in records[0]:
                rho = forward_step(rho, r, cfg)
                m = rho.to_array()
                if abs(np.real(np.trace(m)) - 1) > 1e-12:
                    violations["trace"] += 1
                if np.real(m[0, 0]) < -1e-12 or np.real(m[1, 1]) < -1e-12 or abs(m[0, 1]) ** 2 > np.real(
                    m[0, 0] * m[1, 1]
                ) + 1e-12:
                    violations["positivity"] += 1

        pair_cfg = CascadeConfig(cfg.tau, cfg.dt, cfg.eta_m, rng.uniform(0, 1 / cfg.tau, 6))
        state = TwoQubitBayesState.product_superposition()
        for r in records[0] / sd * math.sqrt(pair_cfg.sigma**2):
            state = cascade_step(state, r, pair_cfg)
            bound = np.sqrt(state.p[[0, 0, 0, 1, 1, 2]] * state.p[[1, 2, 3, 2, 3, 3]])
            if abs(state.p.sum() - 1) > 1e-12:
                violations["trace"] += 1
            if np.any(state.p < 0) or np.any(state.m > bound + 1e-12):
                violations["positivity"] += 1

        seed = int(rng.integers(2**31))
        a = simulate_batch(cfg, 2, 4, chunk_rng(seed, 0), q0)
        b = simulate_batch(cfg, 2, 4, chunk_rng(seed, 0), q0)
        if not (np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])):
            violations["determinism"] += 1
    total = sum(violations.values())
    record(9, total == 0, f"{n_cases} fuzzed configs, violations {violations}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
