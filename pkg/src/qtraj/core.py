"""Shared domain types for continuously measured qubits.

All times are in seconds and all rates in s^-1. The qubit ground state
``|0>`` sits at the north pole, ``z = +1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

BLOCH_TOL = 1e-9
PSD_TOL = 1e-9


class QTrajError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(QTrajError, ValueError):
    """Invalid physical parameters or settings."""


class StatisticsError(QTrajError):
    """A statistical estimate could not be formed."""


class InsufficientStatisticsError(StatisticsError):
    def __init__(self, message: str, count: int = 0):
        super().__init__(message)
        self.count = count


class ZeroProbabilityError(StatisticsError):
    """A measurement outcome had vanishing probability for the given state."""


class Axis(str, enum.Enum):
    """Amplified quadrature: ``Z`` gives projective backaction, ``PHI`` phase kicks."""

    Z = "z"
    PHI = "phi"

    @classmethod
    def parse(cls, value: "Axis | str") -> "Axis":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"unknown measurement axis {value!r}; expected 'z' or 'phi'") from None


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite Bloch vector {self!r}")
        if self.x**2 + self.y**2 + self.z**2 > 1.0 + BLOCH_TOL:
            raise ValueError(f"Bloch vector outside the unit ball: {self!r}")

    @classmethod
    def from_array(cls, arr) -> "BlochVector":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (3,):
            raise ValueError(f"expected shape (3,), got {arr.shape}")
        return cls(*arr)

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def norm(self) -> float:
        return math.sqrt(self.x**2 + self.y**2 + self.z**2)

    def __iter__(self):
        yield from (self.x, self.y, self.z)


@dataclass(frozen=True)
class MeasurementConfig:
    """Physical and derived parameters of a dispersive qubit measurement.

    Use :func:`config_from_physical` or :func:`config_from_tau` rather than
    filling the derived fields by hand; ``__post_init__`` rejects
    inconsistent combinations.
    """

    chi_over_kappa: float
    nbar: float
    eta_m: float
    kappa: float
    dt: float
    tau: float
    S: float
    Gamma_meas: float
    T2star: float
    gamma: float
    Omega: float = 0.0
    axis: Axis = Axis.Z

    def __post_init__(self):
        object.__setattr__(self, "axis", Axis.parse(self.axis))
        if not 0.0 < self.eta_m <= 1.0:
            raise ConfigError(f"eta_m must lie in (0, 1], got {self.eta_m}")
        for name in ("dt", "tau", "kappa", "chi_over_kappa", "nbar", "S", "Gamma_meas"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be positive and finite, got {value}")
        if not self.T2star > 0:
            raise ConfigError(f"T2star must be positive, got {self.T2star}")
        if not (math.isfinite(self.Omega) and self.Omega >= 0):
            raise ConfigError(f"Omega must be a finite non-negative rate, got {self.Omega}")
        expected_S = 64.0 * self.chi_over_kappa**2 * self.kappa * self.nbar * self.eta_m * self.dt
        checks = {
            "S": (self.S, expected_S),
            "tau": (self.tau, 4.0 * self.dt / self.S),
            "Gamma_meas": (self.Gamma_meas, 8.0 * self.chi_over_kappa**2 * self.kappa * self.nbar),
            "gamma": (self.gamma, self.Gamma_meas * (1.0 - self.eta_m) + 1.0 / self.T2star),
        }
        for name, (got, want) in checks.items():
            if not math.isclose(got, want, rel_tol=1e-9, abs_tol=1e-300):
                raise ConfigError(f"inconsistent {name}: stored {got!r}, derived {want!r}")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be non-negative, got {self.gamma}")

    @property
    def a(self) -> float:
        """Standard deviation of a single dimensionless outcome."""
        return math.sqrt(self.tau / self.dt)

    @property
    def strength_ratio(self) -> float:
        """Dimensionless kick per unit outcome, ``dt / tau``."""
        return self.dt / self.tau

    @property
    def Gamma_ens(self) -> float:
        """Unconditioned dephasing rate (measurement plus environment)."""
        return self.Gamma_meas + 1.0 / self.T2star

    @property
    def decay(self) -> float:
        """Per-step coherence factor ``exp(-gamma dt)``."""
        return math.exp(-self.gamma * self.dt)

    def replace(self, **changes) -> "MeasurementConfig":
        """Rebuild with changed physical inputs, re-deriving everything else.

        Accepts the keyword arguments of :func:`config_from_tau`.
        """
        params = dict(
            tau=self.tau,
            dt=self.dt,
            eta_m=self.eta_m,
            T2star=self.T2star,
            Omega=self.Omega,
            axis=self.axis,
            chi_over_kappa=self.chi_over_kappa,
            kappa=self.kappa,
        )
        params.update(changes)
        return config_from_tau(**params)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["axis"] = self.axis.value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "MeasurementConfig":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


def config_from_physical(
    chi_over_kappa: float,
    nbar: float,
    eta_m: float,
    kappa: float,
    dt: float,
    T2star: float = math.inf,
    Omega: float = 0.0,
    axis: Axis | str = Axis.Z,
) -> MeasurementConfig:
    """Derive measurement strength, ``tau`` and dephasing rates from device parameters."""
    if not 0.0 < eta_m <= 1.0:
        raise ConfigError(f"eta_m must lie in (0, 1], got {eta_m}")
    for name, value in (("chi_over_kappa", chi_over_kappa), ("nbar", nbar), ("kappa", kappa), ("dt", dt)):
        if not (math.isfinite(value) and value > 0):
            raise ConfigError(f"{name} must be positive and finite, got {value}")
    if not T2star > 0:
        raise ConfigError(f"T2star must be positive, got {T2star}")
    S = 64.0 * chi_over_kappa**2 * kappa * nbar * eta_m * dt
    Gamma_meas = 8.0 * chi_over_kappa**2 * kappa * nbar
    return MeasurementConfig(
        chi_over_kappa=chi_over_kappa,
        nbar=nbar,
        eta_m=eta_m,
        kappa=kappa,
        dt=dt,
        tau=4.0 * dt / S,
        S=S,
        Gamma_meas=Gamma_meas,
        T2star=T2star,
        gamma=Gamma_meas * (1.0 - eta_m) + 1.0 / T2star,
        Omega=Omega,
        axis=Axis.parse(axis),
    )


DEFAULT_CHI_OVER_KAPPA = 0.05
DEFAULT_KAPPA = 2 * math.pi * 1e7


def config_from_tau(
    tau: float,
    dt: float,
    eta_m: float = 1.0,
    T2star: float = math.inf,
    Omega: float = 0.0,
    axis: Axis | str = Axis.Z,
    gamma: float | None = None,
    chi_over_kappa: float = DEFAULT_CHI_OVER_KAPPA,
    kappa: float = DEFAULT_KAPPA,
) -> MeasurementConfig:
    """Build a config from the characteristic measurement time.

    The photon number is back-solved from ``tau`` at fixed ``chi/kappa`` and
    ``kappa``. If ``gamma`` is given, ``T2star`` is ignored and re-derived
    so that the residual dephasing equals ``gamma``.
    """
    if not (math.isfinite(tau) and tau > 0):
        raise ConfigError(f"tau must be positive and finite, got {tau}")
    if not (math.isfinite(dt) and dt > 0):
        raise ConfigError(f"dt must be positive and finite, got {dt}")
    if not 0.0 < eta_m <= 1.0:
        raise ConfigError(f"eta_m must lie in (0, 1], got {eta_m}")
    if gamma is not None:
        floor = (1.0 - eta_m) / (2.0 * tau * eta_m)
        excess = gamma - floor
        if excess < -1e-12 * max(abs(floor), 1.0):
            raise ConfigError(
                f"gamma={gamma} is below the inefficiency floor {floor} set by eta_m={eta_m}"
            )
        T2star = math.inf if excess <= 0 else 1.0 / excess
    S = 4.0 * dt / tau
    nbar = S / (64.0 * chi_over_kappa**2 * kappa * eta_m * dt)
    return config_from_physical(chi_over_kappa, nbar, eta_m, kappa, dt, T2star, Omega, axis)


def phase_shift(config: MeasurementConfig | float) -> float:
    """Cavity phase difference between the two qubit states, ``4|chi|/kappa``."""
    chi_over_kappa = config if isinstance(config, (int, float)) else config.chi_over_kappa
    return 4.0 * abs(chi_over_kappa)


@dataclass(frozen=True)
class MeasurementRecord:
    samples: np.ndarray
    dt: float
    seed: int = 0
    axis: Axis = Axis.Z

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float).reshape(-1)
        if samples.size == 0:
            raise ValueError("empty measurement record")
        if not np.all(np.isfinite(samples)):
            raise ValueError("measurement record contains non-finite samples")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "axis", Axis.parse(self.axis))
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    def __len__(self):
        return self.samples.size

    @property
    def mean(self) -> float:
        return float(self.samples.mean())


@dataclass(frozen=True)
class Trajectory:
    """Conditioned Bloch vectors ``states[k]`` at ``times[k] = t0 + k dt``."""

    states: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        times = np.array(self.times, dtype=float).reshape(-1)
        if states.ndim != 2 or states.shape[1] != 3:
            raise ValueError(f"states must have shape (n, 3), got {states.shape}")
        if states.shape[0] != times.size:
            raise ValueError("states and times differ in length")
        if times.size > 1:
            steps = np.diff(times)
            if not np.all(steps > 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
                raise ValueError("times must be strictly increasing with uniform spacing")
        check_bloch_array(states)
        states.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "times", times)

    def __len__(self):
        return self.times.size

    def __getitem__(self, k) -> BlochVector:
        return BlochVector(*self.states[k])

    @property
    def x(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def z(self) -> np.ndarray:
        return self.states[:, 2]


def check_bloch_array(states, tol: float = BLOCH_TOL) -> np.ndarray:
    """Raise if any vector in a ``(..., 3)`` array leaves the Bloch ball."""
    states = np.asarray(states, dtype=float)
    if not np.all(np.isfinite(states)):
        raise ValueError("non-finite Bloch vector components")
    norms2 = np.einsum("...i,...i->...", states, states)
    if np.any(norms2 > 1.0 + tol):
        worst = float(np.sqrt(norms2.max()))
        raise ValueError(f"Bloch vector outside the unit ball (|q| = {worst!r})")
    return states


@dataclass(frozen=True)
class HermitianMatrix2:
    """2x2 Hermitian matrix ``[[a, b], [conj(b), d]]``.

    Hermiticity holds by construction. Used both for density matrices and
    for unnormalized effect matrices.
    """

    a: float
    d: float
    b: complex = 0j

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "d", float(self.d))
        object.__setattr__(self, "b", complex(self.b))

    @classmethod
    def from_array(cls, m) -> "HermitianMatrix2":
        m = np.asarray(m, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError(f"expected a 2x2 matrix, got shape {m.shape}")
        if not np.allclose(m, m.conj().T, atol=1e-12):
            raise ValueError("matrix is not Hermitian")
        return cls(m[0, 0].real, m[1, 1].real, m[0, 1])

    @classmethod
    def from_bloch(cls, q: BlochVector | np.ndarray) -> "HermitianMatrix2":
        x, y, z = q
        return cls(0.5 * (1 + z), 0.5 * (1 - z), 0.5 * (x - 1j * y))

    @classmethod
    def identity(cls, scale: float = 1.0) -> "HermitianMatrix2":
        return cls(scale, scale, 0j)

    def to_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.b.conjugate(), self.d]], dtype=complex)

    def to_bloch(self) -> BlochVector:
        tr = self.trace
        return BlochVector(2 * self.b.real / tr, -2 * self.b.imag / tr, (self.a - self.d) / tr)

    @property
    def trace(self) -> float:
        return self.a + self.d

    def eigvalsh(self) -> np.ndarray:
        mean = 0.5 * (self.a + self.d)
        radius = math.hypot(0.5 * (self.a - self.d), abs(self.b))
        return np.array([mean - radius, mean + radius])

    def is_psd(self, tol: float = PSD_TOL) -> bool:
        return bool(self.eigvalsh()[0] >= -tol)

    def scaled(self, factor: float) -> "HermitianMatrix2":
        return HermitianMatrix2(self.a * factor, self.d * factor, self.b * factor)

    def normalized(self) -> "HermitianMatrix2":
        tr = self.trace
        if not tr > 0:
            raise ZeroProbabilityError(f"cannot normalize matrix with trace {tr}")
        return self.scaled(1.0 / tr)


def as_state_array(q) -> np.ndarray:
    """Coerce a BlochVector, a sequence of them, or an array to ``(..., 3)`` floats."""
    if isinstance(q, BlochVector):
        return q.to_array()
    if isinstance(q, (list, tuple)) and q and isinstance(q[0], BlochVector):
        return np.array([v.to_array() for v in q])
    arr = np.asarray(q, dtype=float)
    if arr.shape[-1:] != (3,):
        raise ValueError(f"expected trailing dimension 3, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Ensemble:
    """Vectorized batch of measurement records and trajectories.

    ``records`` has shape ``(n_traj, n_steps)``; ``states`` and ``truth``
    have shape ``(n_traj, n_steps + 1, 3)``. ``states`` holds the
    trajectories reconstructed from the records, ``truth`` the generator's
    own conditioned states.
    """

    records: np.ndarray
    states: np.ndarray
    truth: np.ndarray
    dt: float
    seed: int
    axis: Axis = Axis.Z
    t0: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return self.records.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.states.shape[1])

    def record(self, i: int) -> MeasurementRecord:
        return MeasurementRecord(self.records[i], self.dt, self.seed, self.axis)

    def trajectory(self, i: int, truth: bool = False) -> Trajectory:
        return Trajectory((self.truth if truth else self.states)[i], self.times)

    def trajectories(self, truth: bool = False) -> list[Trajectory]:
        return [self.trajectory(i, truth) for i in range(len(self))]
