"""Command-line front end.

Exit codes: 0 success, 1 other library error, 2 invalid configuration,
3 I/O failure, 4 insufficient or degenerate statistics. Errors are printed
to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import ConfigError, HermitianMatrix2, InsufficientStatisticsError, QTrajError, StatisticsError
from .past_state import guessing_game, smooth
from .presets import ExperimentPreset, PRESETS, preset_raw, resolve
from .records import generate_record
from .serialization import read_csv, read_json, write_csv, write_json
from .tomography import MatchingWindow, RecordWindow, conditional_tomography, simulate_shots
from .trajectory import (
    COMPONENTS,
    MAX_STEP_ANGLE,
    PostSelectionWindow,
    ensemble_mean,
    histogram,
    post_select,
    reconstruct_array,
    run_ensemble,
)
from .two_qubit import BRANCHES, ODD_PAIR, TwoQubitBayesState, branch_counts, cascade_ensemble

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_STATS = 4

METADATA = "metadata.json"
CASCADE_STARTS = {"product": TwoQubitBayesState.product_superposition, "bell_odd": TwoQubitBayesState.bell_odd}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _report("config", message)
        raise SystemExit(EXIT_CONFIG)


def _report(kind: str, message: str, **extra):
    print(json.dumps({"error": kind, "message": message, **extra}), file=sys.stderr)


def _parse_window(text: str) -> tuple[float, float, float]:
    try:
        x, z, eps = (float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"--window expects x,z,eps; got {text!r}") from None
    return x, z, eps


def load_experiment(args, input_meta: dict | None = None) -> ExperimentPreset:
    """Resolve preset, config file and command-line overrides, in that order of precedence (last wins)."""
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        if args.preset:
            raw = {**preset_raw(args.preset), **raw}
            raw.pop("preset", None)
        name = raw.get("preset", args.preset or "custom")
    elif args.preset:
        raw, name = preset_raw(args.preset), args.preset
    elif input_meta is not None:
        raw, name = dict(input_meta["raw"]), input_meta["name"]
    else:
        raise ConfigError("give --preset, --config, or an --input directory with metadata")
    if args.seed is not None:
        raw["seed"] = args.seed
    if getattr(args, "n", None) is not None:
        raw["n_traj"] = args.n
    if getattr(args, "axis", None) is not None:
        raw["axis"] = args.axis
    return resolve(raw, name)


def _metadata(exp: ExperimentPreset, command: str, **extra) -> dict:
    return {"command": command, "name": exp.name, "raw": exp.raw, "resolved": exp.resolved(), **extra}


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _state_rows(states: np.ndarray, times: np.ndarray) -> np.ndarray:
    n, steps, _ = states.shape
    traj = np.repeat(np.arange(n), steps)
    t = np.tile(times, n)
    return np.column_stack([traj, t, states.reshape(-1, 3)])


def _load_records(input_dir: Path) -> tuple[dict, np.ndarray]:
    meta = read_json(input_dir / METADATA)
    _, columns, data = read_csv(input_dir / "records.csv")
    if columns != ["traj", "k", "t", "r"]:
        raise QTrajError(f"unexpected record columns {columns}")
    n_traj = int(data[:, 0].max()) + 1 if data.size else 0
    n_steps = int(data[:, 1].max()) + 1 if data.size else 0
    if n_traj * n_steps != data.shape[0]:
        raise QTrajError("records.csv is not a complete (traj, k) grid")
    return meta, data[:, 3].reshape(n_traj, n_steps)


def cmd_generate(args) -> int:
    exp = load_experiment(args)
    gen = exp.generator()
    n = exp.n_traj
    reconstructable = exp.config.Omega * exp.config.dt <= MAX_STEP_ANGLE
    ens = run_ensemble(n, gen, threads=args.threads, reconstruct_records=False)
    out = _out_dir(args)
    h, seed = exp.config_hash(), gen.seed
    steps = ens.records.shape[1]
    rows = np.column_stack(
        [np.repeat(np.arange(n), steps), np.tile(np.arange(steps), n), np.tile(ens.dt * np.arange(steps), n),
         ens.records.ravel()]
    )
    write_csv(out / "records.csv", ["traj", "k", "t", "r"], rows, h, seed, int_columns=2)
    write_csv(out / "truth.csv", ["traj", "t", "x", "y", "z"], _state_rows(ens.truth, ens.times), h, seed, 1)
    write_json(out / METADATA, _metadata(exp, "generate", reconstructable=reconstructable), h, seed)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    input_dir = Path(args.input)
    meta, records = _load_records(input_dir)
    exp = load_experiment(args, meta)
    q0 = exp.initial_state.to_array()
    states = reconstruct_array(records, exp.config, q0)
    times = exp.config.dt * np.arange(states.shape[1])
    out = _out_dir(args)
    h, seed = exp.config_hash(), exp.seed
    write_csv(out / "trajectories.csv", ["traj", "t", "x", "y", "z"], _state_rows(states, times), h, seed, 1)
    write_json(out / "reconstruct.json", _metadata(exp, "reconstruct", input=str(input_dir)), h, seed)
    return EXIT_OK


def _write_histograms(out: Path, prefix: str, ens, h: str, seed: int):
    for comp in COMPONENTS:
        hist = histogram(ens, comp)
        n_t, n_b = hist.counts.shape
        rows = np.column_stack(
            [np.repeat(hist.time_bins, n_b), np.tile(hist.value_bins, n_t), hist.counts.ravel()]
        )
        write_csv(out / f"{prefix}hist_{comp}.csv", ["t", comp, "density"], rows, h, seed)
    mean, se = ensemble_mean(ens)
    write_csv(
        out / f"{prefix}means.csv",
        ["t", "x", "y", "z", "se_x", "se_y", "se_z"],
        np.column_stack([ens.times, mean, se]),
        h,
        seed,
    )


def cmd_ensemble(args) -> int:
    exp = load_experiment(args)
    gen = exp.generator()
    reconstructable = exp.config.Omega * exp.config.dt <= MAX_STEP_ANGLE
    ens = run_ensemble(exp.n_traj, gen, threads=args.threads, reconstruct_records=reconstructable)
    out = _out_dir(args)
    h, seed = exp.config_hash(), gen.seed
    _write_histograms(out, "", ens, h, seed)
    summary = {"n_traj": len(ens), "states": "reconstructed" if reconstructable else "generator truth"}
    window = exp.window
    if args.window:
        x, z, eps = _parse_window(args.window)
        t_F = window.t_F if window is not None else float(ens.times[-1])
        window = PostSelectionWindow(x, z, eps, t_F)
    if window is not None:
        selected = post_select(ens, window)
        if len(selected) < 2:
            raise InsufficientStatisticsError(f"post-selection kept {len(selected)} trajectories", len(selected))
        _write_histograms(out, "postselected_", selected, h, seed)
        summary["post_selection"] = {
            "x_F": window.x_F, "z_F": window.z_F, "half_width": window.half_width, "t_F": window.t_F,
            "n_selected": len(selected),
        }
    write_json(out / "ensemble.json", _metadata(exp, "ensemble", summary=summary), h, seed)
    return EXIT_OK


def _estimate_entry(est, prediction, tol_extra: float) -> dict:
    entry = est.to_dict()
    prediction = np.asarray(prediction, dtype=float)
    entry["prediction"] = prediction.tolist()
    entry["within_tolerance"] = bool(np.all(np.abs(est.mean - prediction) <= tol_extra + 3 * est.stderr))
    return entry


def cmd_tomo(args) -> int:
    exp = load_experiment(args)
    gen = exp.generator()
    config = exp.config
    settings = dict(exp.tomography or {"mode": "matching", "eps": 0.05, "n_shots": 100000, "check_every": 10})
    n_shots = args.n if args.n is not None else int(settings.get("n_shots", 100000))
    q0 = exp.initial_state.to_array()
    results = {"mode": settings["mode"], "n_shots": n_shots, "conditioned": [], "unconditioned": []}

    if args.window:
        x, z, eps = _parse_window(args.window)
        table = simulate_shots(gen, n_shots, chunk=1)[gen.n_steps]
        est = conditional_tomography(table, MatchingWindow(x, z, eps), config, q0)
        results["mode"] = "window"
        results["conditioned"].append({"step": gen.n_steps, **_estimate_entry(est, [x, 0.0, z], eps)})
    elif settings["mode"] == "record":
        eps = float(settings.get("eps", 0.05))
        table = simulate_shots(gen, n_shots, chunk=1)[gen.n_steps]
        for c in settings.get("centers", [0.0]):
            est = conditional_tomography(table, RecordWindow(float(c), eps), config, q0)
            pred = reconstruct_array(np.full((1, gen.n_steps), float(c)), config, q0)[0, -1]
            results["conditioned"].append({"center": float(c), **_estimate_entry(est, pred, est.eps)})
        results["unconditioned"].append(_unconditioned(table, gen.n_steps))
    else:
        eps = float(settings.get("eps", 0.05))
        every = int(settings.get("check_every", 10))
        steps = list(range(every, gen.n_steps + 1, every)) or [gen.n_steps]
        _, reference = generate_record(gen)
        tables = simulate_shots(gen, n_shots, steps, chunk=1)
        for k in steps:
            target = reference.states[k]
            cond = MatchingWindow(float(target[0]), float(target[2]), eps)
            try:
                est = conditional_tomography(tables[k], cond, config, q0)
                entry = _estimate_entry(est, target, eps)
            except InsufficientStatisticsError as exc:
                entry = {"error": str(exc), "prediction": target.tolist()}
            results["conditioned"].append({"step": k, "t": k * config.dt, **entry})
            results["unconditioned"].append(_unconditioned(tables[k], k))
    out = _out_dir(args)
    write_json(out / "tomography.json", _metadata(exp, "tomo", tomography=results), exp.config_hash(), gen.seed)
    return EXIT_OK


def _unconditioned(table, step: int) -> dict:
    est = conditional_tomography(table)
    truth = table.truth
    mean = truth.mean(axis=0)
    se = np.sqrt(est.stderr**2 + truth.var(axis=0, ddof=1) / truth.shape[0])
    return {
        "step": step,
        **est.to_dict(),
        "ensemble_mean": mean.tolist(),
        "within_tolerance": bool(np.all(np.abs(est.mean - mean) <= 3 * se)),
    }


def _hidden_step(fraction: float, n_steps: int) -> int:
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"--hidden-at is a fraction of the record in [0, 1], got {fraction}")
    return int(round(fraction * n_steps))


def cmd_smooth(args) -> int:
    out = _out_dir(args)
    if args.input:
        meta, records = _load_records(Path(args.input))
        exp = load_experiment(args, meta)
        k = _hidden_step(args.hidden_at, records.shape[1])
        res = smooth(records, exp.config, k, HermitianMatrix2.from_bloch(exp.initial_state))
        rows = np.column_stack([np.arange(records.shape[0]), res["forward"], res["smoothed"]])
        summary = {"hidden_step": k, "t_hidden": k * exp.config.dt, "n_records": records.shape[0]}
    else:
        exp = load_experiment(args)
        k = _hidden_step(args.hidden_at, exp.n_steps)
        game = guessing_game(exp.config, exp.n_traj, k, exp.n_steps - k, exp.seed, exp.initial_state.to_array())
        fwd, smo = game.forward_prob, game.smoothed_prob
        rows = np.column_stack([np.arange(fwd.size), fwd, 1 - fwd, smo, 1 - smo, game.hidden])
        summary = {"hidden_step": k, "t_hidden": k * exp.config.dt, **game.to_dict()}
    columns = ["traj", "P_forward_plus", "P_forward_minus", "P_past_plus", "P_past_minus"]
    if not args.input:
        columns.append("hidden")
    h = exp.config_hash()
    write_csv(out / "smoothing.csv", columns, rows, h, exp.seed, int_columns=1)
    write_json(out / "smoothing.json", _metadata(exp, "smooth", summary=summary), h, exp.seed)
    return EXIT_OK


def cmd_cascade(args) -> int:
    exp = load_experiment(args)
    if exp.cascade is None:
        raise ConfigError(f"preset {exp.name!r} is not a two-qubit cascade")
    start = exp.raw.get("initial_state", "product")
    if start not in CASCADE_STARTS:
        raise ConfigError(f"cascade initial_state must be one of {sorted(CASCADE_STARTS)}, got {start!r}")
    initial = CASCADE_STARTS[start]()
    ens = cascade_ensemble(initial, exp.n_steps, exp.n_traj, exp.cascade, exp.seed)
    out = _out_dir(args)
    h = exp.config_hash()
    n, steps = ens.p.shape[:2]
    rows = np.column_stack(
        [
            np.repeat(np.arange(n), steps),
            np.tile(ens.times, n),
            ens.p.reshape(-1, 4),
            ens.m[..., ODD_PAIR].ravel(),
            ens.C.ravel(),
        ]
    )
    write_csv(out / "cascade.csv", ["traj", "t", "p00", "p01", "p10", "p11", "m_01_10", "C"], rows, h, exp.seed, 1)
    counts = branch_counts(ens)
    final_C = ens.C[:, -1]
    branches = ens.branches()
    summary = {
        "branch_counts": {b: int(c) for b, c in zip(BRANCHES, counts)},
        "mean_final_C": {b: float(final_C[branches == i].mean()) if counts[i] else None for i, b in enumerate(BRANCHES)},
    }
    write_json(out / "cascade.json", _metadata(exp, "cascade", summary=summary), h, exp.seed)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qtraj", description="Quantum trajectory simulation and reconstruction.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, n_help="number of trajectories"):
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--config", help="JSON config with unit-suffixed values")
        p.add_argument("--seed", type=int)
        p.add_argument("--n", type=int, help=n_help)
        p.add_argument("--out-dir", default="out")
        return p

    p = common(sub.add_parser("generate", help="simulate measurement records and true trajectories"))
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--axis", choices=["z", "phi"])
    p.set_defaults(func=cmd_generate)

    p = common(sub.add_parser("reconstruct", help="reconstruct trajectories from generated records"))
    p.add_argument("--input", required=True, help="directory written by 'generate'")
    p.add_argument("--axis", choices=["z", "phi"])
    p.set_defaults(func=cmd_reconstruct)

    p = common(sub.add_parser("ensemble", help="histograms, means and post-selection"))
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--window", help="post-selection window x,z,eps at the final time")
    p.add_argument("--axis", choices=["z", "phi"])
    p.set_defaults(func=cmd_ensemble)

    p = common(sub.add_parser("tomo", help="emulated conditional tomography"), "number of tomography shots")
    p.add_argument("--window", help="matching window x,z,eps at the final step")
    p.set_defaults(func=cmd_tomo)

    p = common(sub.add_parser("smooth", help="past-state prediction of a hidden z measurement"), "number of games")
    p.add_argument("--input", help="directory written by 'generate'; otherwise play the guessing game")
    p.add_argument("--hidden-at", type=float, default=0.5, help="fraction of the record before the hidden measurement")
    p.set_defaults(func=cmd_smooth)

    p = common(sub.add_parser("cascade", help="two-qubit half-parity cascade"))
    p.set_defaults(func=cmd_cascade)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "threads", 1) < 1:
        _report("config", "--threads must be at least 1")
        return EXIT_CONFIG
    try:
        return args.func(args)
    except StatisticsError as exc:
        _report("statistics", str(exc))
        return EXIT_STATS
    except (ConfigError, ValueError) as exc:
        _report("config", str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _report("io", str(exc))
        return EXIT_IO
    except QTrajError as exc:
        _report("error", str(exc))
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
