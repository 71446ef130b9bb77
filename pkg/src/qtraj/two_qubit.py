"""Cascaded two-qubit half-parity measurement in the lossless, symmetric regime.

States live in the measurement basis ``00, 01, 10, 11``. Populations are
tracked exactly; off-diagonal elements only by magnitude, which is all the
concurrence needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .core import ConfigError, InsufficientStatisticsError
from .records import chunk_rng

BASIS = ("00", "01", "10", "11")
CENTERS = {"00": -2.0, "01": 0.0, "10": 0.0, "11": 2.0}
CENTER_ARRAY = np.array([CENTERS[b] for b in BASIS])
PAIRS = (("00", "01"), ("00", "10"), ("00", "11"), ("01", "10"), ("01", "11"), ("10", "11"))
PAIR_INDEX = np.array([(BASIS.index(a), BASIS.index(b)) for a, b in PAIRS])
ODD_PAIR = PAIRS.index(("01", "10"))
BRANCHES = ("00", "odd", "11")


def _pair_key(a: str, b: str) -> int:
    try:
        return PAIRS.index((a, b))
    except ValueError:
        return PAIRS.index((b, a))


@dataclass(frozen=True)
class TwoQubitBayesState:
    """Populations ``p`` (order 00, 01, 10, 11) and coherence magnitudes ``m`` (order of ``PAIRS``)."""

    p: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float).reshape(4)
        m = np.array(self.m, dtype=float).reshape(6)
        if np.any(p < -1e-15) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"populations must be non-negative and sum to 1, got {p}")
        bound = np.sqrt(np.clip(p[PAIR_INDEX[:, 0]] * p[PAIR_INDEX[:, 1]], 0, None))
        if np.any(m < 0) or np.any(m > bound + 1e-9):
            raise ValueError("coherence magnitudes violate |rho_ab| <= sqrt(p_a p_b)")
        p.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "m", m)

    @classmethod
    def product_superposition(cls) -> "TwoQubitBayesState":
        """Both qubits in ``(|0> + |1>)/sqrt(2)``."""
        return cls(np.full(4, 0.25), np.full(6, 0.25))

    @classmethod
    def bell_odd(cls) -> "TwoQubitBayesState":
        """``(|01> + |10>)/sqrt(2)``."""
        m = np.zeros(6)
        m[ODD_PAIR] = 0.5
        return cls([0.0, 0.5, 0.5, 0.0], m)

    @classmethod
    def basis(cls, label: str) -> "TwoQubitBayesState":
        p = np.zeros(4)
        p[BASIS.index(label)] = 1.0
        return cls(p, np.zeros(6))

    def coherence(self, a: str, b: str) -> float:
        return float(self.m[_pair_key(a, b)])

    def population(self, label: str) -> float:
        return float(self.p[BASIS.index(label)])

    @property
    def concurrence(self) -> float:
        return float(concurrence_array(self.p, self.m))


@dataclass(frozen=True)
class CascadeConfig:
    tau: float
    dt: float
    eta_m: float = 1.0
    gamma_pair: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        if not (self.tau > 0 and self.dt > 0):
            raise ConfigError("tau and dt must be positive")
        if not 0.0 < self.eta_m <= 1.0:
            raise ConfigError(f"eta_m must lie in (0, 1], got {self.eta_m}")
        g = self.gamma_pair
        if isinstance(g, dict):
            arr = np.zeros(6)
            for (a, b), rate in g.items():
                arr[_pair_key(a, b)] = rate
            g = arr
        g = np.broadcast_to(np.asarray(g, dtype=float), (6,)).copy()
        if np.any(g < 0):
            raise ConfigError("pair dephasing rates must be non-negative")
        object.__setattr__(self, "gamma_pair", g)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.tau / self.dt)

    @property
    def centers(self) -> dict:
        return dict(CENTERS)


def measurement_dephasing_exponent(c_a, c_b, eta_m, dt, tau):
    """Exponent of the per-step dephasing from uncollected photons for one coherence.

    Written with plain arithmetic so symbolic arguments work. Equal centres
    give exactly zero.
    """
    return -(1 - eta_m) * (c_a - c_b) ** 2 * dt / (8 * tau * eta_m)


def _pair_log_factor(config: CascadeConfig) -> np.ndarray:
    ca = CENTER_ARRAY[PAIR_INDEX[:, 0]]
    cb = CENTER_ARRAY[PAIR_INDEX[:, 1]]
    return measurement_dephasing_exponent(ca, cb, config.eta_m, config.dt, config.tau) - config.gamma_pair * config.dt


def concurrence_array(p: np.ndarray, m: np.ndarray) -> np.ndarray:
    """``C = 2 max(0, |rho_01,10| - sqrt(p00 p11))`` over a leading batch."""
    p = np.asarray(p, dtype=float)
    m = np.asarray(m, dtype=float)
    return 2.0 * np.maximum(0.0, m[..., ODD_PAIR] - np.sqrt(p[..., 0] * p[..., 3]))


def concurrence(state: TwoQubitBayesState) -> float:
    return state.concurrence


def _log_likelihood(r, sigma: float) -> np.ndarray:
    r = np.asarray(r, dtype=float)[..., None]
    return -((r - CENTER_ARRAY) ** 2) / (2 * sigma**2)


def update_diag_array(p: np.ndarray, r, config: CascadeConfig) -> tuple[np.ndarray, np.ndarray]:
    """Bayes update of populations. Returns ``(p_new, log_ratio)`` with ``log_ratio = log(p_new/p)``.

    Works in the log domain, so it cannot underflow to an all-zero state.
    """
    p = np.asarray(p, dtype=float)
    ll = _log_likelihood(r, config.sigma)
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    log_post = logp + ll
    log_z = logsumexp(log_post, axis=-1, keepdims=True)
    log_ratio = ll - log_z
    return np.exp(log_post - log_z), log_ratio


def update_offdiag_array(m: np.ndarray, log_ratio: np.ndarray, config: CascadeConfig) -> np.ndarray:
    """Scale coherence magnitudes after a diagonal update with per-population ``log_ratio``."""
    m = np.asarray(m, dtype=float)
    log_bayes = 0.5 * (log_ratio[..., PAIR_INDEX[:, 0]] + log_ratio[..., PAIR_INDEX[:, 1]])
    out = m * np.exp(log_bayes + _pair_log_factor(config))
    # coherence to an extinguished population stays zero
    return np.where(m > 0, out, 0.0)


def cascade_update_diag(state: TwoQubitBayesState, r: float, config: CascadeConfig) -> TwoQubitBayesState:
    """Population update only.

    Coherence magnitudes are carried over, clipped to the positivity bound of
    the new populations; follow with :func:`cascade_update_offdiag` (or use
    :func:`cascade_step`) for the full update.
    """
    p, _ = update_diag_array(state.p, r, config)
    p /= p.sum()
    m = np.minimum(state.m, np.sqrt(p[PAIR_INDEX[:, 0]] * p[PAIR_INDEX[:, 1]]))
    return TwoQubitBayesState(p, m)


def cascade_update_offdiag(
    prior: TwoQubitBayesState, posterior: TwoQubitBayesState, config: CascadeConfig
) -> TwoQubitBayesState:
    """Coherence update given the populations before and after one step's diagonal update."""
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = np.log(posterior.p) - np.log(prior.p)
    log_ratio = np.where(np.isfinite(log_ratio), log_ratio, -np.inf)
    m = update_offdiag_array(prior.m, log_ratio, config)
    return TwoQubitBayesState(posterior.p, m)


def cascade_step(state: TwoQubitBayesState, r: float, config: CascadeConfig) -> TwoQubitBayesState:
    p, log_ratio = update_diag_array(state.p, r, config)
    m = update_offdiag_array(state.m, log_ratio, config)
    return TwoQubitBayesState(p / p.sum(), m)


def cascade_sample_array(p: np.ndarray, config: CascadeConfig, rng: np.random.Generator) -> np.ndarray:
    p = np.atleast_2d(p)
    n = p.shape[0]
    u = rng.random(n)
    low = p[:, 0]
    odd = p[:, 1] + p[:, 2]
    center = np.where(u < low, -2.0, np.where(u < low + odd, 0.0, 2.0))
    return center + rng.normal(0.0, config.sigma, n)


def cascade_sample(state: TwoQubitBayesState, config: CascadeConfig, rng: np.random.Generator) -> float:
    """Draw one outcome: the pointer centre by Born weights, plus Gaussian noise."""
    return float(cascade_sample_array(state.p[None, :], config, rng)[0])


@dataclass(frozen=True)
class CascadeEnsemble:
    """Batch of cascade trajectories: ``p`` ``(n, steps+1, 4)``, ``m`` ``(n, steps+1, 6)``, ``records`` ``(n, steps)``."""

    p: np.ndarray
    m: np.ndarray
    records: np.ndarray
    dt: float
    seed: int

    def __len__(self):
        return self.p.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.p.shape[1])

    @property
    def C(self) -> np.ndarray:
        return concurrence_array(self.p, self.m)

    def branches(self, step: int = -1) -> np.ndarray:
        """Index into ``BRANCHES`` of the most probable pointer outcome at ``step``."""
        p = self.p[:, step]
        weights = np.stack([p[:, 0], p[:, 1] + p[:, 2], p[:, 3]], axis=-1)
        return np.argmax(weights, axis=-1)

    def trajectory(self, i: int) -> list[tuple[TwoQubitBayesState, float]]:
        C = self.C[i]
        return [(TwoQubitBayesState(self.p[i, k], self.m[i, k]), float(C[k])) for k in range(self.p.shape[1])]


def cascade_ensemble(
    initial: TwoQubitBayesState,
    n_steps: int,
    n_traj: int,
    config: CascadeConfig,
    seed: int = 0,
) -> CascadeEnsemble:
    """Simulate ``n_traj`` records and their conditioned two-qubit states (no drive)."""
    if n_steps < 1 or n_traj < 1:
        raise ConfigError("n_steps and n_traj must be positive")
    rng = chunk_rng(seed, 0)
    p = np.broadcast_to(initial.p, (n_traj, 4)).copy()
    m = np.broadcast_to(initial.m, (n_traj, 6)).copy()
    P = np.empty((n_traj, n_steps + 1, 4))
    M = np.empty((n_traj, n_steps + 1, 6))
    R = np.empty((n_traj, n_steps))
    P[:, 0], M[:, 0] = p, m
    for k in range(n_steps):
        r = cascade_sample_array(p, config, rng)
        p_new, log_ratio = update_diag_array(p, r, config)
        m = update_offdiag_array(m, log_ratio, config)
        p = p_new / p_new.sum(axis=-1, keepdims=True)
        P[:, k + 1], M[:, k + 1], R[:, k] = p, m, r
    return CascadeEnsemble(P, M, R, config.dt, seed)


def cascade_trajectory(
    initial: TwoQubitBayesState, n_steps: int, config: CascadeConfig, seed: int = 0
) -> list[tuple[TwoQubitBayesState, float]]:
    """One seeded trajectory as ``(state, concurrence)`` pairs, including the initial state."""
    return cascade_ensemble(initial, n_steps, 1, config, seed).trajectory(0)


def branch_counts(ens: CascadeEnsemble, step: int = -1) -> np.ndarray:
    b = ens.branches(step)
    counts = np.bincount(b, minlength=3)
    if counts.sum() == 0:
        raise InsufficientStatisticsError("empty cascade ensemble", 0)
    return counts
