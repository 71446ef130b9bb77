import json
import math

import numpy as np
import pytest

from qtraj.core import ConfigError, QTrajError
from qtraj.presets import PRESETS, get_preset, resolve
from qtraj.serialization import read_csv, read_json, write_csv, write_json
from qtraj.units import format_time, parse_angular, parse_rate, parse_time


@pytest.mark.parametrize(
    "text,seconds",
    [("400ns", 400e-9), ("1.28us", 1.28e-6), ("20 µs", 20e-6), ("2ms", 2e-3), (".5s", 0.5), ("inf", math.inf)],
)
def test_parse_time(text, seconds):
    assert parse_time(text) == pytest.approx(seconds, rel=1e-15)


@pytest.mark.parametrize(
    "text,rate", [("1.3e6/s", 1.3e6), ("1.3/us", 1.3e6), ("2.7e-7 s^-1", 2.7e-7), ("5 /ns", 5e9), ("1kHz", 1e3)]
)
def test_parse_rate(text, rate):
    assert parse_rate(text) == pytest.approx(rate, rel=1e-15)


def test_parse_angular():
    assert parse_angular("0.4MHz") == pytest.approx(2 * math.pi * 0.4e6, rel=1e-15)
    assert parse_angular("2.5e6rad/s") == 2.5e6
    assert parse_angular("1rad/us") == pytest.approx(1e6)


@pytest.mark.parametrize("bad", [400, 1.5, True, None, "400", "400 parsecs", "fast"])
def test_rejects_bare_or_unknown(bad):
    with pytest.raises(ConfigError):
        parse_time(bad)


def test_rate_and_angular_reject_wrong_units():
    with pytest.raises(ConfigError):
        parse_rate("3ns")
    with pytest.raises(ConfigError):
        parse_angular("3ns")


def test_format_time_roundtrip():
    for t in (20e-9, 1.28e-6, math.inf):
        assert parse_time(format_time(t)) == t


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_resolve(name):
    preset = get_preset(name)
    assert len(preset.config_hash()) == 16
    json.dumps(preset.resolved(), allow_nan=True)


def test_fig3_preset_values():
    cfg = get_preset("fig3").config
    assert cfg.tau == pytest.approx(600e-9)
    assert cfg.dt == pytest.approx(400e-9)
    assert cfg.gamma == pytest.approx(1.3e6, rel=1e-12)


def test_fig5_window():
    preset = get_preset("fig5")
    w = preset.window
    assert (w.x_F, w.z_F, w.half_width) == (0.1, 0.55, 0.08)
    assert w.t_F == pytest.approx(2e-6)
    assert preset.config.Omega == pytest.approx(2 * math.pi * 0.4e6)


def test_cascade_preset():
    preset = get_preset("fig6")
    assert preset.config is None
    assert preset.cascade.tau == pytest.approx(0.75e-6)
    with pytest.raises(ConfigError):
        preset.generator()


def test_preset_override_and_hash_changes():
    base = get_preset("fig4b")
    changed = resolve({"preset": "fig4b", "eta_m": 0.5})
    assert changed.name == "fig4b"
    assert changed.config.eta_m == 0.5
    assert changed.config_hash() != base.config_hash()
    assert get_preset("fig4").resolved()["config"] == base.resolved()["config"]


@pytest.mark.parametrize(
    "raw",
    [
        {"tau": "1us"},
        {"dt": "20ns"},
        {"tau": "1us", "dt": "20ns", "colour": "blue"},
        {"tau": "1us", "dt": "20ns", "eta_m": "0.5"},
        {"tau": "1us", "dt": "20ns", "kind": "triple"},
        {"tau": "1us", "dt": "20ns", "initial_state": [1, 1, 0]},
        {"tau": "1us", "dt": "20ns", "nbar": 1.0},
        {"preset": "fig99"},
        {"tau": "1us", "dt": 2e-8},
        {"tau": "1us", "dt": "20ns", "Omega": "50MHz"},
    ],
)
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        resolve(raw)


def test_physical_config_path():
    preset = resolve({"dt": "20ns", "nbar": 1.0, "kappa": "10MHz", "chi_over_kappa": 0.05})
    assert preset.config.nbar == 1.0


def test_csv_roundtrip(tmp_path):
    data = np.array([[0, 1.0 / 3, -2.5e-300], [1, math.pi, 1e300]])
    path = tmp_path / "a.csv"
    write_csv(path, ["i", "a", "b"], data, "abc", 7, int_columns=1)
    header, cols, back = read_csv(path)
    assert header == {"config_hash": "abc", "seed": 7}
    assert cols == ["i", "a", "b"]
    np.testing.assert_array_equal(back, data)
    with pytest.raises(ValueError):
        write_csv(path, ["i"], data, "abc", 7)
    (tmp_path / "bad.csv").write_text("hello\n")
    with pytest.raises(QTrajError):
        read_csv(tmp_path / "bad.csv")


def test_json_is_strict_and_deterministic(tmp_path):
    payload = {"T2": math.inf, "x": np.float64(0.5), "n": np.int64(3), "arr": np.arange(2.0)}
    write_json(tmp_path / "a.json", payload, "h", 1)
    write_json(tmp_path / "b.json", payload, "h", 1)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    text = (tmp_path / "a.json").read_text()
    json.loads(text, parse_constant=lambda c: pytest.fail(f"non-strict constant {c}"))
    back = read_json(tmp_path / "a.json")
    assert back["T2"] == "inf" and back["n"] == 3 and back["config_hash"] == "h"
