"""Time-symmetric estimation with the forward state and backward effect matrix.

Within one step the forward map applies the Kraus operator of the outcome,
then the residual dephasing, then the Rabi unitary. This is the same order
as the Bloch-vector update, so :func:`forward_step` and
``rabi_rotate(update_z(q, r))`` agree to round-off. The backward map is the
exact adjoint of the forward map, applied in reverse order.

Array helpers (``*_array``) work on stacks of ``(..., 2, 2)`` complex
matrices and are used for batched smoothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import (
    Axis,
    ConfigError,
    HermitianMatrix2,
    MeasurementConfig,
    ZeroProbabilityError,
    as_state_array,
)
from .records import chunk_rng, simulate_batch

COMPLETENESS_TOL = 1e-9


@dataclass(frozen=True)
class SmoothedState:
    rho: HermitianMatrix2
    E: HermitianMatrix2
    t: float

    def __post_init__(self):
        if abs(self.rho.trace - 1.0) > 1e-12:
            raise ValueError(f"rho must have unit trace, got {self.rho.trace!r}")
        if not (self.rho.is_psd() and self.E.is_psd()):
            raise ValueError("rho and E must be positive semidefinite")

    def predict(self, povm_set) -> np.ndarray:
        return predict_hidden(self.rho, self.E, povm_set)


def kraus_z(r, config: MeasurementConfig) -> np.ndarray:
    """Diagonal Gaussian Kraus operator for outcome ``r``; shape ``(..., 2, 2)``."""
    r = np.asarray(r, dtype=float)
    a2 = config.tau / config.dt
    norm = (2 * math.pi * a2) ** -0.25
    out = np.zeros(r.shape + (2, 2))
    out[..., 0, 0] = norm * np.exp(-((r - 1.0) ** 2) / (4 * a2))
    out[..., 1, 1] = norm * np.exp(-((r + 1.0) ** 2) / (4 * a2))
    return out


def rabi_unitary(theta: float) -> np.ndarray:
    """``exp(-i theta sigma_y / 2)``; carries +z toward +x for ``theta > 0``."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _dephase(m: np.ndarray, decay: float) -> np.ndarray:
    out = np.array(m, dtype=complex)
    out[..., 0, 1] *= decay
    out[..., 1, 0] *= decay
    return out


def _log_kraus_diag(r, config: MeasurementConfig) -> tuple[np.ndarray, np.ndarray]:
    # log of the Kraus diagonal up to a common factor; keeps ratios finite for large |r|
    r = np.asarray(r, dtype=float)
    a2 = config.tau / config.dt
    return -((r - 1.0) ** 2) / (4 * a2), -((r + 1.0) ** 2) / (4 * a2)


def _apply_diag_kraus(m: np.ndarray, r, config: MeasurementConfig) -> np.ndarray:
    """``K m K`` for the diagonal Kraus operator of ``r``, rescaled by a common factor."""
    l0, l1 = _log_kraus_diag(r, config)
    shift = np.maximum(l0, l1)
    k0 = np.exp(l0 - shift)
    k1 = np.exp(l1 - shift)
    out = np.array(m, dtype=complex)
    out[..., 0, 0] *= k0 * k0
    out[..., 1, 1] *= k1 * k1
    out[..., 0, 1] *= k0 * k1
    out[..., 1, 0] *= k0 * k1
    return out


def _trace(m: np.ndarray) -> np.ndarray:
    return np.real(m[..., 0, 0] + m[..., 1, 1])


def forward_array(rho: np.ndarray, r, config: MeasurementConfig) -> np.ndarray:
    """Batched forward step on ``(..., 2, 2)`` density matrices."""
    if config.axis is not Axis.Z:
        raise ConfigError("past-state smoothing supports z-measurements only")
    out = _apply_diag_kraus(rho, r, config)
    tr = _trace(out)
    if np.any(~(tr > 0)):
        raise ZeroProbabilityError("measurement outcome has zero probability for this state")
    out /= tr[..., None, None]
    out = _dephase(out, config.decay)
    theta = config.Omega * config.dt
    if theta:
        U = rabi_unitary(theta)
        out = U @ out @ U.conj().T
    return out


def backward_array(E_next: np.ndarray, r, config: MeasurementConfig) -> np.ndarray:
    """Batched adjoint step on ``(..., 2, 2)`` effect matrices, renormalized to unit trace."""
    if config.axis is not Axis.Z:
        raise ConfigError("past-state smoothing supports z-measurements only")
    out = np.asarray(E_next, dtype=complex)
    theta = config.Omega * config.dt
    if theta:
        U = rabi_unitary(theta)
        out = U.conj().T @ out @ U
    out = _dephase(out, config.decay)
    out = _apply_diag_kraus(out, r, config)
    tr = _trace(out)
    if np.any(~(tr > 0)):
        raise ZeroProbabilityError("effect matrix vanished under the measurement outcome")
    return out / tr[..., None, None]


def forward_step(rho: HermitianMatrix2, r: float, config: MeasurementConfig) -> HermitianMatrix2:
    """Condition ``rho`` on outcome ``r`` and propagate it over one step."""
    return HermitianMatrix2.from_array(forward_array(rho.to_array(), r, config))


def backward_step(E_next: HermitianMatrix2, r: float, config: MeasurementConfig) -> HermitianMatrix2:
    """Propagate the effect matrix one step into the past through outcome ``r``.

    The result is scaled to unit trace; predictions are invariant to the
    scale of ``E``.
    """
    return HermitianMatrix2.from_array(backward_array(E_next.to_array(), r, config))


def projective_povm(axis: str = "z") -> list[np.ndarray]:
    """Projectors onto the +1 and -1 eigenstates of a Pauli operator."""
    paulis = {
        "x": np.array([[0, 1], [1, 0]], dtype=complex),
        "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "z": np.array([[1, 0], [0, -1]], dtype=complex),
    }
    if axis not in paulis:
        raise ValueError(f"axis must be x, y or z; got {axis!r}")
    eye = np.eye(2, dtype=complex)
    return [(eye + paulis[axis]) / 2, (eye - paulis[axis]) / 2]


def gaussian_povm(edges, config: MeasurementConfig) -> list[np.ndarray]:
    """Weak z-measurement coarse-grained into outcome bins.

    ``edges`` must start at ``-inf`` and end at ``+inf`` so the set is
    complete. Bin ``j`` has Kraus operator ``diag(sqrt(P0_j), sqrt(P1_j))``
    with ``P0_j, P1_j`` the bin probabilities of the two eigenstates.
    """
    edges = np.asarray(edges, dtype=float)
    sd = math.sqrt(config.tau / config.dt)
    p0 = np.diff(stats.norm.cdf(edges, loc=1.0, scale=sd))
    p1 = np.diff(stats.norm.cdf(edges, loc=-1.0, scale=sd))
    return [np.diag([math.sqrt(a), math.sqrt(b)]).astype(complex) for a, b in zip(p0, p1)]


def _as_matrix(m) -> np.ndarray:
    return m.to_array() if isinstance(m, HermitianMatrix2) else np.asarray(m, dtype=complex)


def check_povm(povm_set, tol: float = COMPLETENESS_TOL) -> np.ndarray:
    ops = np.array([np.asarray(o, dtype=complex) for o in povm_set])
    if ops.ndim != 3 or ops.shape[1:] != (2, 2):
        raise ValueError("POVM elements must be 2x2 matrices")
    total = np.einsum("mji,mjk->ik", ops.conj(), ops)
    if not np.allclose(total, np.eye(2), atol=tol, rtol=0):
        raise ValueError("POVM set is incomplete: sum of Omega^dag Omega differs from identity")
    return ops


def predict_hidden(rho, E, povm_set) -> np.ndarray:
    """Past-state outcome probabilities ``Tr(O rho O^dag E)``, normalized over outcomes.

    ``rho`` and ``E`` may be :class:`HermitianMatrix2` or stacks of
    ``(..., 2, 2)`` arrays; the outcome index is the last axis of the result.
    """
    ops = check_povm(povm_set)
    rho_a = _as_matrix(rho)
    E_a = _as_matrix(E)
    weights = np.real(np.einsum("mij,...jk,mlk,...li->...m", ops, rho_a, ops.conj(), E_a))
    weights = np.clip(weights, 0.0, None)
    total = weights.sum(axis=-1, keepdims=True)
    if np.any(~(total > 0)):
        raise ZeroProbabilityError("past state assigns zero weight to every outcome")
    return weights / total


def forward_sweep(records, rho0, config: MeasurementConfig) -> np.ndarray:
    """Forward states before each step: shape ``(n_traj, n_steps + 1, 2, 2)``."""
    records = np.atleast_2d(np.asarray(records, dtype=float))
    n, steps = records.shape
    rho = np.broadcast_to(_as_matrix(rho0), (n, 2, 2)).astype(complex)
    out = np.empty((n, steps + 1, 2, 2), dtype=complex)
    out[:, 0] = rho
    for k in range(steps):
        rho = forward_array(rho, records[:, k], config)
        out[:, k + 1] = rho
    return out


def backward_sweep(records, config: MeasurementConfig, E_final=None) -> np.ndarray:
    """Effect matrices ``E_k`` accounting for outcomes ``k..n-1``; ``E_n`` is the terminal condition."""
    records = np.atleast_2d(np.asarray(records, dtype=float))
    n, steps = records.shape
    E_final = np.eye(2) / 2 if E_final is None else _as_matrix(E_final)
    E = np.broadcast_to(E_final, (n, 2, 2)).astype(complex)
    out = np.empty((n, steps + 1, 2, 2), dtype=complex)
    out[:, steps] = E
    for k in range(steps - 1, -1, -1):
        E = backward_array(E, records[:, k], config)
        out[:, k] = E
    return out


def smooth(records, config: MeasurementConfig, hidden_step: int, rho0=None, povm_set=None) -> dict:
    """Forward-only and past-state predictions of a measurement hidden before step ``hidden_step``.

    Records hold outcomes ``0..n-1``; the hidden measurement happens after
    outcome ``hidden_step - 1`` and before outcome ``hidden_step``.
    Returns arrays ``forward`` and ``smoothed`` of shape ``(n_traj, n_outcomes)``.
    """
    records = np.atleast_2d(np.asarray(records, dtype=float))
    n_steps = records.shape[1]
    if not 0 <= hidden_step <= n_steps:
        raise ConfigError(f"hidden step must lie in [0, {n_steps}], got {hidden_step}")
    povm_set = projective_povm("z") if povm_set is None else povm_set
    rho0 = HermitianMatrix2.from_bloch((1.0, 0.0, 0.0)) if rho0 is None else rho0
    rho = forward_sweep(records[:, :hidden_step], rho0, config)[:, -1]
    E = backward_sweep(records[:, hidden_step:], config)[:, 0]
    identity = np.broadcast_to(np.eye(2, dtype=complex), E.shape)
    return {
        "forward": predict_hidden(rho, identity, povm_set),
        "smoothed": predict_hidden(rho, E, povm_set),
        "rho": rho,
        "E": E,
    }


@dataclass(frozen=True)
class GuessingGameResult:
    hidden: np.ndarray
    forward_guess: np.ndarray
    smoothed_guess: np.ndarray
    forward_prob: np.ndarray
    smoothed_prob: np.ndarray
    p_value: float
    records: np.ndarray | None = None

    @property
    def forward_accuracy(self) -> float:
        return float(np.mean(self.forward_guess == self.hidden))

    @property
    def smoothed_accuracy(self) -> float:
        return float(np.mean(self.smoothed_guess == self.hidden))

    def to_dict(self) -> dict:
        return {
            "n_games": int(self.hidden.size),
            "forward_accuracy": self.forward_accuracy,
            "smoothed_accuracy": self.smoothed_accuracy,
            "p_value": self.p_value,
        }


def paired_sign_test(smoothed_correct: np.ndarray, forward_correct: np.ndarray) -> float:
    """One-sided exact McNemar test that the smoothed guesser wins more discordant games."""
    wins = int(np.sum(smoothed_correct & ~forward_correct))
    losses = int(np.sum(~smoothed_correct & forward_correct))
    if wins + losses == 0:
        return 1.0
    return float(stats.binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue)


def guessing_game(
    config: MeasurementConfig,
    n_games: int,
    n_before: int,
    n_after: int,
    seed: int = 0,
    initial_state=(1.0, 0.0, 0.0),
) -> GuessingGameResult:
    """Play the hidden projective z-measurement game ``n_games`` times.

    The qubit is weakly monitored for ``n_before`` steps, projectively
    measured in z by the first experimenter (result hidden), and monitored
    for ``n_after`` more steps. The forward guesser sees the record up to the
    hidden measurement; the smoothed guesser also sees the record after it.
    """
    if n_games < 1:
        raise ConfigError("n_games must be positive")
    if config.axis is not Axis.Z:
        raise ConfigError("the guessing game uses z-measurements")
    rng = chunk_rng(seed, 0)
    q0 = as_state_array(initial_state)
    before, truth = simulate_batch(config, n_games, n_before, rng, q0) if n_before else (
        np.empty((n_games, 0)),
        np.broadcast_to(q0, (n_games, 1, 3)),
    )
    z_mid = truth[:, -1, 2]
    hidden = np.where(rng.random(n_games) < 0.5 * (1.0 + z_mid), 1, -1)
    collapsed = np.zeros((n_games, 3))
    collapsed[:, 2] = hidden
    after, _ = simulate_batch(config, n_games, n_after, rng, collapsed) if n_after else (
        np.empty((n_games, 0)),
        None,
    )
    records = np.concatenate([before, after], axis=1)
    rho0 = HermitianMatrix2.from_bloch(q0)
    result = smooth(records, config, n_before, rho0)
    fwd = result["forward"][:, 0]
    smo = result["smoothed"][:, 0]
    forward_guess = np.where(fwd >= 0.5, 1, -1)
    smoothed_guess = np.where(smo >= 0.5, 1, -1)
    p = paired_sign_test(smoothed_guess == hidden, forward_guess == hidden)
    return GuessingGameResult(hidden, forward_guess, smoothed_guess, fwd, smo, p, records)

