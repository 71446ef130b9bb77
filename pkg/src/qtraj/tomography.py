"""Emulated conditional quantum state tomography.

A shot is one experimental iteration: a weak record of ``k`` steps followed
by a tomography pulse and a projective z readout. Shots are stored
column-wise in a :class:`ShotTable` so conditioning is a vectorized mask.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ConfigError,
    Ensemble,
    InsufficientStatisticsError,
    MeasurementConfig,
    MeasurementRecord,
    as_state_array,
)
from .measurement import rabi_rotate_array
from .records import GeneratorSettings, chunk_rng, simulate_batch
from .trajectory import reconstruct_array

TOMO_AXES = ("x", "y", "z")
DEFAULT_MATCH_EPS = 0.05
DEFAULT_MIN_SHOTS = 200


def tomography_pulse(q, axis: str) -> np.ndarray:
    """Pre-rotation that maps the requested component onto +z.

    x: quarter turn about y; y: quarter turn about x; z: no pulse. The
    rotation senses are fixed so that a ``+1`` readout means the component
    along ``axis`` was positive.
    """
    q = as_state_array(q)
    if axis == "z":
        return np.array(q, dtype=float)
    if axis == "x":
        return rabi_rotate_array(q, -0.5 * math.pi)
    if axis == "y":
        out = np.empty(np.shape(q))
        out[..., 0] = q[..., 0]
        out[..., 1] = -q[..., 2]
        out[..., 2] = q[..., 1]
        return out
    raise ValueError(f"tomography axis must be x, y or z; got {axis!r}")


def projective_sample(q, axis: str, rng: np.random.Generator):
    """Projective readout after the tomography pulse.

    Returns ``+1`` with probability ``(1 + q_axis) / 2``; vectorized over a
    leading batch dimension of ``q``.
    """
    z = tomography_pulse(q, axis)[..., 2]
    u = rng.random(np.shape(z))
    out = np.where(u < 0.5 * (1.0 + z), 1, -1)
    return int(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class TomographyShot:
    record: MeasurementRecord
    axis: str
    outcome: int

    def __post_init__(self):
        if self.axis not in TOMO_AXES:
            raise ValueError(f"axis must be one of {TOMO_AXES}, got {self.axis!r}")
        if self.outcome not in (1, -1):
            raise ValueError(f"outcome must be +1 or -1, got {self.outcome!r}")


@dataclass(frozen=True)
class ShotTable:
    """Columnar shots that all stop after the same number of weak steps."""

    records: np.ndarray
    axes: np.ndarray
    outcomes: np.ndarray
    dt: float
    truth: np.ndarray | None = None

    def __post_init__(self):
        records = np.atleast_2d(np.asarray(self.records, dtype=float))
        axes = np.asarray(self.axes, dtype=int).reshape(-1)
        outcomes = np.asarray(self.outcomes, dtype=int).reshape(-1)
        if not (records.shape[0] == axes.size == outcomes.size):
            raise ValueError("records, axes and outcomes differ in length")
        if np.any((axes < 0) | (axes > 2)):
            raise ValueError("axis codes must be 0 (x), 1 (y) or 2 (z)")
        if np.any(np.abs(outcomes) != 1):
            raise ValueError("outcomes must be +1 or -1")
        object.__setattr__(self, "records", records)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "outcomes", outcomes)

    def __len__(self):
        return self.axes.size

    @property
    def step(self) -> int:
        return self.records.shape[1]

    @classmethod
    def from_shots(cls, shots: list[TomographyShot]) -> "ShotTable":
        if not shots:
            raise InsufficientStatisticsError("no tomography shots", 0)
        lengths = {len(s.record) for s in shots}
        if len(lengths) != 1:
            raise ValueError("all shots must share the same record length")
        return cls(
            records=np.stack([s.record.samples for s in shots]),
            axes=[TOMO_AXES.index(s.axis) for s in shots],
            outcomes=[s.outcome for s in shots],
            dt=shots[0].record.dt,
        )

    def shots(self) -> list[TomographyShot]:
        return [
            TomographyShot(MeasurementRecord(rec, self.dt), TOMO_AXES[a], int(o))
            for rec, a, o in zip(self.records, self.axes, self.outcomes)
        ]


def shots_from_states(records, states, dt: float, rng: np.random.Generator) -> ShotTable:
    """Attach a random tomography axis and projective outcome to each record.

    ``states`` are the true conditioned states at the end of each record.
    """
    states = as_state_array(states)
    n = states.shape[0]
    axes = rng.integers(0, 3, n)
    comp = states[np.arange(n), axes]
    outcomes = np.where(rng.random(n) < 0.5 * (1.0 + comp), 1, -1)
    return ShotTable(records, axes, outcomes, dt, truth=states)


def simulate_shots(gen: GeneratorSettings, n_shots: int, steps=None, chunk: int = 0) -> dict[int, ShotTable]:
    """Run ``n_shots`` iterations and emit a shot table for each stopping step.

    Each full-length iteration is reused for every requested stopping step
    with an independent tomography draw; within one step the shots are
    independent.
    """
    steps = [gen.n_steps] if steps is None else sorted({int(s) for s in steps})
    if any(s < 1 or s > gen.n_steps for s in steps):
        raise ConfigError(f"stopping steps must lie in [1, {gen.n_steps}]")
    rng = chunk_rng(gen.seed, chunk)
    records, truth = simulate_batch(
        gen.config, n_shots, gen.n_steps, rng, gen.initial_state.to_array(), gen.substeps_per_dt, gen.T1
    )
    return {k: shots_from_states(records[:, :k], truth[:, k], gen.config.dt, rng) for k in steps}


def shots_from_ensemble(ens: Ensemble, step: int, rng: np.random.Generator) -> ShotTable:
    return shots_from_states(ens.records[:, :step], ens.truth[:, step], ens.dt, rng)


@dataclass(frozen=True)
class RecordWindow:
    """Condition on the time-averaged record lying in ``center +- eps``.

    If ``adaptive``, ``eps`` widens (with a warning) until the window holds
    at least ``min_shots`` shots.
    """

    center: float
    eps: float = 0.05
    min_shots: int = DEFAULT_MIN_SHOTS
    adaptive: bool = True

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")


@dataclass(frozen=True)
class MatchingWindow:
    """Condition on the reconstructed ``(x, z)`` lying within ``eps`` of a target (y assumed 0)."""

    target_x: float
    target_z: float
    eps: float = DEFAULT_MATCH_EPS

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")


@dataclass(frozen=True)
class TomographyEstimate:
    """Per-axis mean outcomes ``mean = (x, y, z)`` with standard errors.

    Sample means of +-1 outcomes can leave the Bloch ball by statistical
    noise, so the estimate is kept as a plain array.
    """

    mean: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    eps: float | None
    n_selected: int
    condition: object = field(default=None, compare=False)

    def to_dict(self) -> dict:
        return {
            "x": float(self.mean[0]),
            "y": float(self.mean[1]),
            "z": float(self.mean[2]),
            "stderr": [float(s) for s in self.stderr],
            "counts": [int(c) for c in self.counts],
            "eps": self.eps,
            "n_selected": self.n_selected,
        }


def _record_window_mask(table: ShotTable, window: RecordWindow) -> tuple[np.ndarray, float]:
    rbar = table.records.mean(axis=1)
    eps = window.eps
    mask = np.abs(rbar - window.center) <= eps
    if window.adaptive and mask.sum() < window.min_shots and len(table) >= window.min_shots:
        while mask.sum() < window.min_shots:
            eps *= 1.5
            mask = np.abs(rbar - window.center) <= eps
        warnings.warn(
            f"record window around r={window.center} widened to eps={eps:.4g} to hold {window.min_shots} shots",
            stacklevel=3,
        )
    return mask, eps


def conditional_tomography(
    shots,
    condition=None,
    config: MeasurementConfig | None = None,
    q_I=(1.0, 0.0, 0.0),
    min_count: int = 2,
) -> TomographyEstimate:
    """Tomographic estimate over the sub-ensemble selected by ``condition``.

    ``condition`` is ``None`` (all shots), a :class:`RecordWindow` on the
    time-averaged record, or a :class:`MatchingWindow` on the state
    reconstructed from each record, which needs ``config`` and the initial
    state ``q_I``. Per-axis estimates are mean outcomes with standard error
    ``std / sqrt(N)``.

    Raises :class:`InsufficientStatisticsError` if any axis keeps fewer than
    ``min_count`` shots.
    """
    table = shots if isinstance(shots, ShotTable) else ShotTable.from_shots(list(shots))
    eps = None
    if condition is None:
        mask = np.ones(len(table), dtype=bool)
    elif isinstance(condition, RecordWindow):
        mask, eps = _record_window_mask(table, condition)
    elif isinstance(condition, MatchingWindow):
        if config is None:
            raise ConfigError("matching-window conditioning needs the measurement config")
        final = reconstruct_array(table.records, config, q_I)[:, -1]
        eps = condition.eps
        mask = (np.abs(final[:, 0] - condition.target_x) <= eps) & (
            np.abs(final[:, 2] - condition.target_z) <= eps
        )
    else:
        raise TypeError(f"unsupported condition {condition!r}")

    est = np.zeros(3)
    se = np.zeros(3)
    counts = np.zeros(3, dtype=int)
    for a in range(3):
        sel = table.outcomes[mask & (table.axes == a)]
        counts[a] = sel.size
        if sel.size < min_count:
            raise InsufficientStatisticsError(
                f"axis {TOMO_AXES[a]} has {sel.size} conditioned shots (need {min_count})", int(sel.size)
            )
        est[a] = sel.mean()
        se[a] = sel.std(ddof=1) / math.sqrt(sel.size)
    return TomographyEstimate(est, se, counts, eps, int(mask.sum()), condition)
