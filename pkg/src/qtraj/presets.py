"""Named parameter sets and JSON config resolution."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field

from .core import Axis, BlochVector, ConfigError, MeasurementConfig, config_from_physical, config_from_tau
from .records import GeneratorSettings
from .trajectory import PostSelectionWindow
from .two_qubit import CascadeConfig
from .units import parse_angular, parse_rate, parse_time

# Raw presets use the same unit-suffixed schema as user config files.
PRESETS: dict[str, dict] = {
    "fig2-jump": {
        "kind": "single",
        "tau": "50ns",
        "dt": "200ns",
        "Omega": "8MHz",
        "eta_m": 1.0,
        "n_steps": 50,
        "substeps_per_dt": 200,
        "initial_state": [0.0, 0.0, 1.0],
    },
    "fig2-diffusive": {
        "kind": "single",
        "tau": "150ns",
        "dt": "20ns",
        "Omega": "0MHz",
        "eta_m": 1.0,
        "n_steps": 100,
        "initial_state": [1.0, 0.0, 0.0],
    },
    "fig3": {
        "kind": "single",
        "tau": "600ns",
        "dt": "400ns",
        "eta_m": 0.4,
        "T2star": "20us",
        "n_steps": 1,
        "initial_state": [1.0, 0.0, 0.0],
        "tomography": {"mode": "record", "centers": [-1.7, -1.0, 0.0, 1.0, 1.7], "eps": 0.05, "n_shots": 600000},
    },
    "fig4a": {
        "kind": "single",
        "tau": "1.28us",
        "dt": "20ns",
        "Omega": "0MHz",
        "eta_m": 0.4,
        "T2star": "20us",
        "n_steps": 100,
        "initial_state": [1.0, 0.0, 0.0],
        "tomography": {"mode": "matching", "eps": 0.05, "n_shots": 100000, "check_every": 10},
    },
    "fig4b": {
        "kind": "single",
        "tau": "1.28us",
        "dt": "20ns",
        "Omega": "0.4MHz",
        "eta_m": 0.4,
        "T2star": "20us",
        "n_steps": 100,
        "initial_state": [1.0, 0.0, 0.0],
        "tomography": {"mode": "matching", "eps": 0.05, "n_shots": 100000, "check_every": 10},
    },
    "fig5": {
        "kind": "single",
        "tau": "1.28us",
        "dt": "20ns",
        "Omega": "0.4MHz",
        "eta_m": 0.4,
        "T2star": "20us",
        "n_steps": 100,
        "n_traj": 50000,
        "initial_state": [1.0, 0.0, 0.0],
        "window": {"x_F": 0.1, "z_F": 0.55, "half_width": 0.08, "t_F": "2us"},
    },
    "fig6": {
        "kind": "cascade",
        "tau": "0.75us",
        "dt": "20ns",
        "eta_m": 1.0,
        "n_steps": 40,
        "n_traj": 1,
    },
}
PRESETS["fig4"] = PRESETS["fig4b"]

_SINGLE_KEYS = {
    "kind", "tau", "dt", "eta_m", "T2star", "Omega", "axis", "gamma", "chi_over_kappa", "kappa", "nbar",
    "n_steps", "substeps_per_dt", "T1", "initial_state", "seed", "n_traj", "window", "tomography", "preset",
}
_CASCADE_KEYS = {"kind", "tau", "dt", "eta_m", "gamma_pair", "n_steps", "n_traj", "seed", "preset", "initial_state"}


@dataclass(frozen=True)
class ExperimentPreset:
    """Fully resolved experiment: physical config plus run settings."""

    name: str
    kind: str
    raw: dict
    config: MeasurementConfig | None = None
    cascade: CascadeConfig | None = None
    n_steps: int = 1
    substeps_per_dt: int = 1
    T1: float | None = None
    initial_state: BlochVector = field(default_factory=lambda: BlochVector(1.0, 0.0, 0.0))
    n_traj: int = 1
    seed: int = 0
    window: PostSelectionWindow | None = None
    tomography: dict | None = None

    def generator(self, seed: int | None = None) -> GeneratorSettings:
        if self.config is None:
            raise ConfigError(f"preset {self.name!r} is a two-qubit cascade; no single-qubit generator")
        return GeneratorSettings(
            self.config,
            self.n_steps,
            self.seed if seed is None else seed,
            self.substeps_per_dt,
            self.T1,
            self.initial_state,
        )

    def resolved(self) -> dict:
        """JSON-ready description with every value in SI units."""
        out = {"name": self.name, "kind": self.kind, "n_steps": self.n_steps, "n_traj": self.n_traj, "seed": self.seed}
        if self.config is not None:
            out["config"] = self.config.to_dict()
            out["substeps_per_dt"] = self.substeps_per_dt
            out["T1"] = self.T1
            out["initial_state"] = list(self.initial_state)
        if self.cascade is not None:
            out["cascade"] = {
                "tau": self.cascade.tau,
                "dt": self.cascade.dt,
                "eta_m": self.cascade.eta_m,
                "gamma_pair": self.cascade.gamma_pair.tolist(),
            }
        if self.window is not None:
            w = self.window
            out["window"] = {"x_F": w.x_F, "z_F": w.z_F, "half_width": w.half_width, "t_F": w.t_F}
        if self.tomography is not None:
            out["tomography"] = self.tomography
        return out

    def config_hash(self) -> str:
        payload = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _num(raw: dict, key: str, default=None, kind=float):
    if key not in raw:
        return default
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a plain number, got {value!r}")
    return kind(value)


def _window(raw, n_steps: int, dt: float) -> PostSelectionWindow | None:
    if raw is None:
        return None
    t_F = parse_time(raw["t_F"], "window.t_F") if "t_F" in raw else n_steps * dt
    try:
        return PostSelectionWindow(float(raw["x_F"]), float(raw["z_F"]), float(raw["half_width"]), t_F)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid post-selection window {raw!r}: {exc}") from exc


def resolve(raw: dict, name: str = "custom") -> ExperimentPreset:
    """Turn a unit-suffixed config dict into an :class:`ExperimentPreset`.

    If ``raw`` names a ``preset``, its fields are the defaults.
    """
    raw = dict(raw)
    if "preset" in raw:
        base = preset_raw(raw["preset"])
        base.update({k: v for k, v in raw.items() if k != "preset"})
        name = raw["preset"] if name == "custom" else name
        raw = base
    kind = raw.get("kind", "single")
    allowed = _CASCADE_KEYS if kind == "cascade" else _SINGLE_KEYS
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys for kind {kind!r}: {sorted(unknown)}")
    if "dt" not in raw:
        raise ConfigError("config needs 'dt'")
    dt = parse_time(raw["dt"], "dt")
    n_steps = _num(raw, "n_steps", 1, int)
    n_traj = _num(raw, "n_traj", 1, int)
    seed = _num(raw, "seed", 0, int)
    eta_m = _num(raw, "eta_m", 1.0)

    if kind == "cascade":
        if "tau" not in raw:
            raise ConfigError("cascade config needs 'tau'")
        gamma_pair = raw.get("gamma_pair", "0/s")
        if isinstance(gamma_pair, dict):
            rates = {tuple(k.split(",")): parse_rate(v, f"gamma_pair[{k}]") for k, v in gamma_pair.items()}
        else:
            rates = parse_rate(gamma_pair, "gamma_pair")
        cascade = CascadeConfig(parse_time(raw["tau"], "tau"), dt, eta_m, rates)
        return ExperimentPreset(name, kind, raw, cascade=cascade, n_steps=n_steps, n_traj=n_traj, seed=seed)
    if kind != "single":
        raise ConfigError(f"unknown experiment kind {kind!r}")

    Omega = parse_angular(raw["Omega"], "Omega") if "Omega" in raw else 0.0
    T2star = parse_time(raw["T2star"], "T2star") if "T2star" in raw else math.inf
    axis = Axis.parse(raw.get("axis", "z"))
    chi_over_kappa = _num(raw, "chi_over_kappa", 0.05)
    if "nbar" in raw:
        if "kappa" not in raw:
            raise ConfigError("'nbar' needs 'kappa' as well")
        config = config_from_physical(
            chi_over_kappa, _num(raw, "nbar"), eta_m, parse_angular(raw["kappa"], "kappa"), dt, T2star, Omega, axis
        )
    else:
        if "tau" not in raw:
            raise ConfigError("config needs 'tau' (or 'nbar' and 'kappa')")
        extra = {}
        if "kappa" in raw:
            extra["kappa"] = parse_angular(raw["kappa"], "kappa")
        gamma = parse_rate(raw["gamma"], "gamma") if "gamma" in raw else None
        config = config_from_tau(
            parse_time(raw["tau"], "tau"), dt, eta_m, T2star, Omega, axis, gamma, chi_over_kappa, **extra
        )
    T1 = parse_time(raw["T1"], "T1") if "T1" in raw else None
    if T1 is not None and math.isinf(T1):
        T1 = None
    try:
        initial = BlochVector(*raw.get("initial_state", (1.0, 0.0, 0.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid initial_state: {exc}") from exc
    substeps = _num(raw, "substeps_per_dt", 1, int)
    window = _window(raw.get("window"), n_steps, dt)
    preset = ExperimentPreset(
        name,
        kind,
        raw,
        config=config,
        n_steps=n_steps,
        substeps_per_dt=substeps,
        T1=T1,
        initial_state=initial,
        n_traj=n_traj,
        seed=seed,
        window=window,
        tomography=raw.get("tomography"),
    )
    preset.generator()  # validate generator invariants early
    return preset


def preset_raw(name: str) -> dict:
    try:
        return copy.deepcopy(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def get_preset(name: str) -> ExperimentPreset:
    return resolve(preset_raw(name), name)
