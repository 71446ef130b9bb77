"""Synthetic measurement records with ground-truth conditioned states."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Axis,
    BlochVector,
    ConfigError,
    MeasurementConfig,
    MeasurementRecord,
    Trajectory,
    as_state_array,
)
from .measurement import rabi_rotate_array, step_kernel

MAX_SUBSTEP_ANGLE = 0.1
MAX_SUBSTEP_FRACTION_OF_TAU = 0.1


@dataclass(frozen=True)
class GeneratorSettings:
    config: MeasurementConfig
    n_steps: int
    seed: int = 0
    substeps_per_dt: int = 1
    T1: float | None = None
    initial_state: BlochVector = field(default_factory=lambda: BlochVector(1.0, 0.0, 0.0))

    def __post_init__(self):
        if isinstance(self.initial_state, (tuple, list, np.ndarray)):
            object.__setattr__(self, "initial_state", BlochVector(*self.initial_state))
        if int(self.n_steps) < 1:
            raise ConfigError(f"n_steps must be at least 1, got {self.n_steps}")
        if int(self.substeps_per_dt) < 1:
            raise ConfigError(f"substeps_per_dt must be at least 1, got {self.substeps_per_dt}")
        if self.T1 is not None and not self.T1 > 0:
            raise ConfigError(f"T1 must be positive, got {self.T1}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "substeps_per_dt", int(self.substeps_per_dt))
        object.__setattr__(self, "seed", int(self.seed))
        sub_dt = self.sub_dt
        if self.config.Omega > 0 and self.config.Omega * sub_dt > MAX_SUBSTEP_ANGLE * (1 + 1e-12):
            raise ConfigError(
                f"Rabi angle per substep {self.config.Omega * sub_dt:.3g} rad exceeds "
                f"{MAX_SUBSTEP_ANGLE}; raise substeps_per_dt"
            )
        if self.substeps_per_dt > 1 and sub_dt > MAX_SUBSTEP_FRACTION_OF_TAU * self.config.tau * (1 + 1e-12):
            raise ConfigError(
                f"substep {sub_dt:.3g} s is longer than tau/10 = {self.config.tau / 10:.3g} s"
            )

    @property
    def sub_dt(self) -> float:
        return self.config.dt / self.substeps_per_dt


def relax_map(q, dt: float, T1: float):
    """Amplitude damping toward the ground pole ``z = +1`` over a time ``dt``."""
    if not T1 > 0:
        raise ConfigError(f"T1 must be positive, got {T1}")
    arr = _relax_array(as_state_array(q), math.exp(-dt / T1))
    return BlochVector(*arr) if isinstance(q, BlochVector) else arr


def _relax_array(q: np.ndarray, p_keep: float) -> np.ndarray:
    out = np.empty_like(q)
    amp = math.sqrt(p_keep)
    out[..., 0] = q[..., 0] * amp
    out[..., 1] = q[..., 1] * amp
    out[..., 2] = 1.0 - (1.0 - q[..., 2]) * p_keep
    return out


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    """Independent counter-derived stream for chunk ``chunk`` of a seeded run."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(chunk),)))


def simulate_batch(
    config: MeasurementConfig,
    n_traj: int,
    n_steps: int,
    rng: np.random.Generator,
    initial_state=(1.0, 0.0, 0.0),
    substeps_per_dt: int = 1,
    T1: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate ``n_traj`` independent measured qubits.

    Each substep draws the pointer branch with the Born probabilities of the
    current state, adds Gaussian noise of variance ``tau/sub_dt``, applies the
    Bayesian update, the Rabi rotation and, if ``T1`` is set, amplitude
    damping. Emitted outcomes are per-``dt`` averages of the substep draws.

    Returns ``(records, truth)`` of shapes ``(n_traj, n_steps)`` and
    ``(n_traj, n_steps + 1, 3)``.
    """
    m = int(substeps_per_dt)
    sub_dt = config.dt / m
    ratio = sub_dt / config.tau
    decay = math.exp(-config.gamma * sub_dt)
    theta = config.Omega * sub_dt
    noise_sd = math.sqrt(config.tau / sub_dt)
    p_keep = None if T1 is None else math.exp(-sub_dt / T1)
    update = step_kernel(config.axis)
    is_phi = config.axis is Axis.PHI

    q = np.broadcast_to(np.asarray(initial_state, dtype=float), (n_traj, 3)).copy()
    records = np.empty((n_traj, n_steps))
    truth = np.empty((n_traj, n_steps + 1, 3))
    truth[:, 0] = q
    for k in range(n_steps):
        acc = np.zeros(n_traj)
        for _ in range(m):
            if is_phi:
                r = rng.normal(0.0, noise_sd, n_traj)
            else:
                u = rng.random(n_traj)
                branch = np.where(u < 0.5 * (1.0 + q[:, 2]), 1.0, -1.0)
                r = branch + rng.normal(0.0, noise_sd, n_traj)
            acc += r
            q = update(q, r, ratio, decay)
            if theta:
                q = rabi_rotate_array(q, theta)
            if p_keep is not None:
                q = _relax_array(q, p_keep)
        records[:, k] = acc / m
        truth[:, k + 1] = q
    return records, truth


def generate_record(settings: GeneratorSettings) -> tuple[MeasurementRecord, Trajectory]:
    """Generate one record and its ground-truth trajectory (deterministic in ``settings.seed``)."""
    records, truth = simulate_batch(
        settings.config,
        1,
        settings.n_steps,
        chunk_rng(settings.seed, 0),
        settings.initial_state.to_array(),
        settings.substeps_per_dt,
        settings.T1,
    )
    dt = settings.config.dt
    record = MeasurementRecord(records[0], dt, settings.seed, settings.config.axis)
    traj = Trajectory(truth[0], dt * np.arange(settings.n_steps + 1))
    return record, traj
