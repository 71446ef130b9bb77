"""Trajectory reconstruction, seeded ensembles, histograms and post-selection."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    BlochVector,
    ConfigError,
    Ensemble,
    MeasurementConfig,
    MeasurementRecord,
    QTrajError,
    Trajectory,
    as_state_array,
)
from .measurement import rabi_rotate_array, step_kernel
from .records import GeneratorSettings, chunk_rng, simulate_batch

MAX_STEP_ANGLE = 0.1
DEFAULT_CHUNK = 4096
DEFAULT_BINS = 101
COMPONENTS = {"x": 0, "y": 1, "z": 2}


def _check_step_angle(config: MeasurementConfig):
    angle = config.Omega * config.dt
    if angle > MAX_STEP_ANGLE * (1 + 1e-12):
        raise ConfigError(
            f"two-step update needs Omega*dt <= {MAX_STEP_ANGLE} rad, got {angle:.3g}"
        )


def reconstruct_array(records, config: MeasurementConfig, initial_state=(1.0, 0.0, 0.0)) -> np.ndarray:
    """Reconstruct a batch of records of shape ``(n_traj, n_steps)``.

    Returns states of shape ``(n_traj, n_steps + 1, 3)``. ``initial_state``
    is a single vector or one per record.
    """
    _check_step_angle(config)
    records = np.atleast_2d(np.asarray(records, dtype=float))
    n_traj, n_steps = records.shape
    update = step_kernel(config.axis)
    ratio = config.dt / config.tau
    decay = math.exp(-config.gamma * config.dt)
    theta = config.Omega * config.dt

    q = np.broadcast_to(as_state_array(initial_state), (n_traj, 3)).copy()
    states = np.empty((n_traj, n_steps + 1, 3))
    states[:, 0] = q
    for k in range(n_steps):
        q = update(q, records[:, k], ratio, decay)
        if theta:
            q = rabi_rotate_array(q, theta)
        states[:, k + 1] = q
    return states


def reconstruct(
    record: MeasurementRecord, q_I: BlochVector, config: MeasurementConfig
) -> Trajectory:
    """Two-step (Bayesian update, then Rabi rotation) reconstruction of one record."""
    if not math.isclose(record.dt, config.dt, rel_tol=1e-12):
        raise ConfigError(f"record dt {record.dt} does not match config dt {config.dt}")
    if record.axis is not config.axis:
        raise ConfigError(f"record axis {record.axis.value} does not match config axis {config.axis.value}")
    states = reconstruct_array(record.samples[None, :], config, as_state_array(q_I))[0]
    return Trajectory(states, config.dt * np.arange(len(record) + 1))


def run_ensemble(
    n_traj: int,
    gen: GeneratorSettings,
    threads: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    reconstruct_records: bool = True,
) -> Ensemble:
    """Generate and reconstruct ``n_traj`` independent records.

    Trajectories are produced in fixed-size chunks, chunk ``c`` drawing from
    its own stream derived from ``(gen.seed, c)``, so the result does not
    depend on ``threads``. With ``n_traj == 1`` the single member equals
    :func:`~qtraj.records.generate_record` for the same settings.

    When the record cannot be reconstructed at ``dt`` resolution (Rabi angle
    per step above the two-step limit) pass ``reconstruct_records=False``;
    ``states`` then aliases ``truth``.
    """
    if n_traj < 1:
        raise ConfigError(f"n_traj must be at least 1, got {n_traj}")
    if chunk_size < 1:
        raise ConfigError("chunk_size must be positive")
    if reconstruct_records:
        _check_step_angle(gen.config)
    config = gen.config
    n_steps = gen.n_steps
    q0 = gen.initial_state.to_array()
    try:
        records = np.empty((n_traj, n_steps))
        truth = np.empty((n_traj, n_steps + 1, 3))
        states = np.empty_like(truth) if reconstruct_records else truth
    except MemoryError as exc:
        raise QTrajError(
            f"ensemble of {n_traj} x {n_steps} steps does not fit in memory"
        ) from exc

    bounds = [(c, c * chunk_size, min(n_traj, (c + 1) * chunk_size)) for c in range(math.ceil(n_traj / chunk_size))]

    def work(item):
        c, lo, hi = item
        rec, tru = simulate_batch(
            config, hi - lo, n_steps, chunk_rng(gen.seed, c), q0, gen.substeps_per_dt, gen.T1
        )
        records[lo:hi] = rec
        truth[lo:hi] = tru
        if reconstruct_records:
            states[lo:hi] = reconstruct_array(rec, config, q0)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, bounds))
    else:
        for item in bounds:
            work(item)
    return Ensemble(
        records=records,
        states=states,
        truth=truth,
        dt=config.dt,
        seed=gen.seed,
        axis=config.axis,
        meta={"initial_state": q0.tolist(), "substeps_per_dt": gen.substeps_per_dt, "T1": gen.T1},
    )


def _as_state_stack(trajs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(trajs, Ensemble):
        return trajs.states, trajs.times
    if isinstance(trajs, Trajectory):
        trajs = [trajs]
    if isinstance(trajs, np.ndarray):
        raise TypeError("pass an Ensemble or a list of Trajectory; bare arrays carry no time grid")
    trajs = list(trajs)
    if not trajs:
        raise ValueError("empty ensemble")
    times = trajs[0].times
    for t in trajs[1:]:
        if t.times.shape != times.shape or not np.allclose(t.times, times, rtol=1e-12, atol=0):
            raise ValueError("trajectories do not share a time grid")
    return np.stack([t.states for t in trajs]), times


@dataclass(frozen=True)
class EnsembleHistogram:
    """Per-time distribution of one Bloch component.

    ``counts[k, j]`` is the (optionally column-normalized) number of
    trajectories whose component at ``time_bins[k]`` falls in value bin
    ``j``. Bin ``j`` spans ``(value_edges[j], value_edges[j + 1]]``, except
    the first bin, which also includes ``-1``.
    """

    component: str
    time_bins: np.ndarray
    value_edges: np.ndarray
    counts: np.ndarray
    normalized: bool

    @property
    def value_bins(self) -> np.ndarray:
        """Bin centres."""
        return 0.5 * (self.value_edges[1:] + self.value_edges[:-1])


def histogram(trajs, component: str = "z", bins: int = DEFAULT_BINS, normalize: bool = True) -> EnsembleHistogram:
    """Greyscale time-value histogram of an ensemble.

    With ``normalize`` each time column is divided by its maximum so the most
    frequent value at each time reads 1.
    """
    if component not in COMPONENTS:
        raise ValueError(f"component must be one of x, y, z; got {component!r}")
    if bins < 1:
        raise ValueError("bins must be positive")
    states, times = _as_state_stack(trajs)
    if states.shape[0] == 0:
        raise ValueError("empty ensemble")
    values = states[:, :, COMPONENTS[component]]
    edges = np.linspace(-1.0, 1.0, bins + 1)
    idx = np.clip(np.searchsorted(edges, values, side="left") - 1, 0, bins - 1)
    n_times = values.shape[1]
    flat = idx + bins * np.arange(n_times)[None, :]
    counts = np.bincount(flat.ravel(), minlength=n_times * bins).reshape(n_times, bins).astype(float)
    if normalize:
        peak = counts.max(axis=1, keepdims=True)
        counts = np.divide(counts, peak, out=np.zeros_like(counts), where=peak > 0)
    return EnsembleHistogram(component, np.asarray(times, dtype=float), edges, counts, normalize)


@dataclass(frozen=True)
class PostSelectionWindow:
    x_F: float
    z_F: float
    half_width: float
    t_F: float
    z_half_width: float | None = None
    y_F: float | None = None
    y_half_width: float | None = None

    def __post_init__(self):
        widths = [self.half_width, self.z_half_width if self.z_half_width is not None else self.half_width]
        if self.y_F is not None:
            widths.append(self.y_half_width if self.y_half_width is not None else self.half_width)
        if any(not w > 0 for w in widths):
            raise ValueError("window half-widths must be positive")
        centers = [self.x_F, self.z_F] + ([self.y_F] if self.y_F is not None else [])
        if any(abs(c) > 1 for c in centers):
            raise ValueError("window centres must lie in [-1, 1]")

    @property
    def x_half_width(self) -> float:
        return self.half_width

    @property
    def z_width(self) -> float:
        return self.half_width if self.z_half_width is None else self.z_half_width


def _time_index(times: np.ndarray, t: float) -> int:
    k = int(np.argmin(np.abs(times - t)))
    spacing = times[1] - times[0] if times.size > 1 else 1.0
    if abs(times[k] - t) > 1e-6 * abs(spacing):
        raise ValueError(f"t_F = {t!r} is not on the trajectory time grid")
    return k


def post_select_mask(trajs, window: PostSelectionWindow) -> np.ndarray:
    states, times = _as_state_stack(trajs)
    k = _time_index(times, window.t_F)
    final = states[:, k]
    mask = (np.abs(final[:, 0] - window.x_F) <= window.half_width) & (
        np.abs(final[:, 2] - window.z_F) <= window.z_width
    )
    if window.y_F is not None:
        y_w = window.half_width if window.y_half_width is None else window.y_half_width
        mask &= np.abs(final[:, 1] - window.y_F) <= y_w
    return mask


def post_select(trajs, window: PostSelectionWindow):
    """Keep the trajectories whose state at ``t_F`` lies inside the window.

    Returns a list of :class:`Trajectory` for list input, or a smaller
    :class:`Ensemble` for ensemble input. y is ignored unless the window
    sets ``y_F``.
    """
    mask = post_select_mask(trajs, window)
    if isinstance(trajs, Ensemble):
        return Ensemble(
            records=trajs.records[mask],
            states=trajs.states[mask],
            truth=trajs.truth[mask],
            dt=trajs.dt,
            seed=trajs.seed,
            axis=trajs.axis,
            t0=trajs.t0,
            meta=dict(trajs.meta, post_selection=window),
        )
    if isinstance(trajs, Trajectory):
        trajs = [trajs]
    return [t for t, keep in zip(trajs, mask) if keep]


def ensemble_mean(trajs, truth: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Mean Bloch vector and its standard error at every time step."""
    if isinstance(trajs, Ensemble):
        states = trajs.truth if truth else trajs.states
    else:
        states, _ = _as_state_stack(trajs)
    n = states.shape[0]
    mean = states.mean(axis=0)
    se = states.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full_like(mean, np.inf)
    return mean, se

