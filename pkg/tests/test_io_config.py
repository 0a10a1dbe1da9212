import numpy as np
import pytest

from closurekit.closure_data import extract_closure
from closurekit.config import load_config, parse_config, preset, preset_names
from closurekit.errors import ConfigError
from closurekit.io import (dataset_to_csv, read_table, read_trajectory, trajectory_from_bytes,
                           trajectory_to_bytes, write_json, write_table, write_trajectory_binary,
                           write_trajectory_csv)
from closurekit.systems import (StateTrajectory, default_partition, resolved_rhs, simulate,
                                van_der_pol)

# ---------------------------------------------------------------- io


@pytest.mark.parametrize("complex_", [False, True])
def test_binary_trajectory_round_trip_is_exact(tmp_path, complex_):
    rng = np.random.default_rng(0)
    snaps = rng.normal(size=(7, 3))
    if complex_:
        snaps = snaps + 1j * rng.normal(size=(7, 3))
    traj = StateTrajectory(snaps, 0.125, 2.5)
    back = trajectory_from_bytes(trajectory_to_bytes(traj))
    np.testing.assert_array_equal(back.snapshots, traj.snapshots)
    assert (back.dt, back.t0) == (0.125, 2.5)
    path = tmp_path / "t.cftr"
    write_trajectory_binary(path, traj)
    np.testing.assert_array_equal(read_trajectory(path).snapshots, snaps)
    with pytest.raises(ValueError):
        trajectory_from_bytes(b"XXXXX" + trajectory_to_bytes(traj)[5:])


@pytest.mark.parametrize("complex_", [False, True])
def test_csv_trajectory_round_trip(tmp_path, complex_):
    snaps = np.arange(12.0).reshape(4, 3) / 7.0
    if complex_:
        snaps = snaps - 1j * snaps ** 2
    traj = StateTrajectory(snaps, 0.1, 1.0)
    path = tmp_path / "t.csv"
    write_trajectory_csv(path, traj)
    back = read_trajectory(path)
    # repr floats round-trip exactly
    np.testing.assert_array_equal(back.snapshots, snaps)
    assert back.dt == pytest.approx(0.1) and back.t0 == 1.0


def test_tables_and_json(tmp_path):
    path = tmp_path / "sub" / "table.csv"
    write_table(path, ["a", "b"], [[1.0, 2.0], [0.1, 1e-300]])
    header, data = read_table(path)
    assert header == ["a", "b"]
    np.testing.assert_array_equal(data, [[1.0, 0.1], [2.0, 1e-300]])
    write_json(tmp_path / "x.json", {"b": 1, "a": [1.5]})
    assert (tmp_path / "x.json").read_text() == '{\n  "a": [\n    1.5\n  ],\n  "b": 1\n}\n'
    assert not [p for p in (tmp_path / "sub").iterdir() if p.name.startswith(".tmp-")]


def test_dataset_csv_columns():
    spec = van_der_pol()
    traj = simulate(spec, [1.0, 0.0], 0.01, 20)
    part = default_partition(spec)
    ds = extract_closure(traj, part, resolved_rhs(spec, part))
    lines = dataset_to_csv(ds).splitlines()
    assert lines[0] == "x0,d0,delta0" and len(lines) == 21

# ---------------------------------------------------------------- config


@pytest.mark.parametrize("name", preset_names())
def test_every_preset_round_trips_through_toml(name):
    cfg = preset(name)
    again = parse_config(cfg.to_toml())
    assert again.to_dict() == cfg.to_dict()


def test_presets_cover_the_benchmarks():
    names = set(preset_names())
    assert {"linear3d", "vanderpol", "duffing", "lorenz_chaotic", "lorenz_nonchaotic",
            "burgers_nn", "burgers_poly"} <= names
    with pytest.raises(ConfigError, match="unknown preset"):
        preset("nope")


MINIMAL = """
name = "t"
[system]
kind = "vanderpol"
[simulation]
dt = 0.01
n_steps = 100
x0 = [1.0, 0.0]
"""


def test_minimal_config_gets_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.seed == 0 and cfg.model.type in ("poly", "nn")


@pytest.mark.parametrize("patch,where", [
    (("dt = 0.01", "dt = -1.0"), "simulation.dt"),
    (("n_steps = 100", "n_steps = 1.5"), "simulation.n_steps"),
    (("x0 = [1.0, 0.0]", "x0 = [1.0]"), "simulation.x0"),
    (('kind = "vanderpol"', 'kind = "pendulum"'), "system.kind"),
    (("[simulation]", "[simulation]\nbogus = 1"), "simulation"),
])
def test_errors_name_the_dotted_path(patch, where):
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL.replace(*patch))
    assert str(exc.value).startswith(where)


def test_nested_model_errors_and_syntax_errors(tmp_path):
    text = MINIMAL + '[model]\ntype = "nn"\n[model.nn]\nhidden = [8, 0]\n'
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert "model.nn.hidden[1]" in str(exc.value)
    with pytest.raises(ConfigError, match="TOML syntax error"):
        parse_config("name = ")
    path = tmp_path / "bad.toml"
    path.write_text("name = ")
    with pytest.raises(ConfigError, match="bad.toml"):
        load_config(path)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml")


def test_duffing_requires_unit_step():
    cfg = preset("duffing").to_dict()
    cfg["simulation"]["dt"] = 0.5
    from closurekit.config import ExperimentConfig
    with pytest.raises(ConfigError, match="simulation.dt"):
        ExperimentConfig.from_dict(cfg)
