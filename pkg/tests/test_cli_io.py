import json
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest
from matplotlib.path import Path as MplPath

from ecpsim import cli_io, scenarios, simulator
from ecpsim.errors import IntegrityError, PreconditionError, StepError
from ecpsim.cli_io import ConfigError, parse_config, serialize_config


# -- configuration ----------------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(scenarios.CATALOG))
def test_config_round_trip(name):
    sc = scenarios.get_scenario(name)
    text = serialize_config(sc)
    back = parse_config(text)
    assert back == sc
    assert serialize_config(back) == text


def test_round_tripped_desk_simulates_identically():
    sc = scenarios.desk_push()
    sc.duration = 0.05
    back = parse_config(serialize_config(sc))
    for a, b in zip(simulator.run(sc), simulator.run(back)):
        assert a.state == b.state


def _cube_text():
    return serialize_config(scenarios.resting_cube())


@pytest.mark.parametrize(
    "old,new,field,line",
    [
        ("  mass: 1.0\n", "", "body.mass", 4),
        ("h: 0.01", "h: -0.01", "integration.h", 18),
        ("  offset: 0.0\n", "  offset: 0.0\n  colour: red\n", "support.colour", 16),
        ("schema_version: 1", "schema_version: 2", "schema_version", 1),
        ("mu: 0.22", "mu: abc", "friction.mu", 16),
    ],
)
def test_config_errors_locate_the_field(old, new, field, line):
    text = _cube_text()
    assert old in text
    with pytest.raises(ConfigError) as info:
        parse_config(text.replace(old, new, 1))
    err = info.value
    assert err.field == field and err.line == line
    assert f"line {line}" in str(err) and field in str(err)


def test_config_yaml_syntax_error():
    with pytest.raises(ConfigError) as info:
        parse_config("a: [1,")
    assert info.value.line == 1


def test_auto_inertia_matches_box_formula():
    text = _cube_text()
    start = text.index("  inertia:")
    end = text.index("support:")
    sc = parse_config(text[:start] + "  inertia: auto\n" + text[end:])
    np.testing.assert_allclose(sc.inertia_matrix, scenarios.box_inertia(1.0, (0.2, 0.2, 0.2)), rtol=1e-12)


def test_load_config_from_file(tmp_path):
    p = tmp_path / "cube.yaml"
    p.write_text(_cube_text())
    assert cli_io.load_config(p) == scenarios.resting_cube()


# -- trajectories -----------------------------------------------------------------------


def test_csv_layout_and_round_trip(tmp_path, catalog_run):
    sc, recs = catalog_run("desk_push")
    path = tmp_path / "desk.csv"
    cli_io.write_trajectory(recs, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 401
    assert tuple(lines[0].split(",")) == cli_io.CSV_COLUMNS
    cols = cli_io.read_trajectory(path)
    assert cols["t"].shape == (400,)
    np.testing.assert_array_equal(cols["vx"], [r.state.linear_velocity[0] for r in recs])
    np.testing.assert_array_equal(cols["pn"], [r.contact.p_n for r in recs])
    assert cols["converged"].dtype.kind == "i" and np.all(cols["converged"] == 1)
    # rewriting what was read gives the same bytes
    rows = [",".join(cli_io.trajectory_row(r)) for r in recs]
    assert lines[1:] == rows


def test_resting_cube_csv_normal_impulse(tmp_path, catalog_run):
    sc, recs = catalog_run("resting_cube")
    path = tmp_path / "cube.csv"
    cli_io.write_trajectory(recs, path)
    pn = cli_io.read_trajectory(path)["pn"]
    np.testing.assert_allclose(pn, sc.mass * 9.8 * sc.h, rtol=1e-9)


def test_read_rejects_foreign_csv(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(scenarios.ConfigurationError):
        cli_io.read_trajectory(p)


# -- plots --------------------------------------------------------------------------------


def test_plots_are_well_formed_svg(tmp_path, catalog_run):
    sc, recs = catalog_run("desk_push")
    paths = cli_io.emit_plots(recs[:50], tmp_path / "desk", sc.body)
    assert [Path(p).name for p in paths] == [f"desk_{n}.svg" for n in cli_io.PLOT_NAMES]
    for p in paths:
        root = ET.parse(p).getroot()
        assert root.tag.endswith("svg")


def test_body_frame_contact_points_inside_footprint(catalog_run):
    sc, recs = catalog_run("desk_push")
    outline = cli_io.hull_footprint(sc.body)
    np.testing.assert_allclose(np.abs(outline), 0.25, atol=1e-12)
    xy = cli_io.ecp_body_xy(recs)
    assert len(xy) == 400
    assert MplPath(outline).contains_points(xy, radius=1e-8).all()


def test_empty_trajectory_cannot_be_plotted(tmp_path):
    with pytest.raises(PreconditionError):
        cli_io.emit_plots([], tmp_path / "x")


# -- command line --------------------------------------------------------------------------


def test_cli_runs_a_scenario(tmp_path):
    out = tmp_path / "cube.csv"
    seeds = tmp_path / "seed.jsonl"
    echo = tmp_path / "echo.yaml"
    code = cli_io.main([
        "run", "--scenario", "resting_cube", "--duration", "0.1", "--out", str(out),
        "--plots", "--seed-log", str(seeds), "--echo-config", str(echo),
    ])
    assert code == 0
    assert len(out.read_text().splitlines()) == 11
    entries = [json.loads(line) for line in seeds.read_text().splitlines()]
    assert len(entries) == 10 and entries[0]["retried"] is False
    assert cli_io.load_config(echo).duration == 0.1
    for name in cli_io.PLOT_NAMES:
        assert (tmp_path / f"cube_{name}.svg").exists()


def test_cli_runs_a_config(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(serialize_config(scenarios.free_fall()))
    out = tmp_path / "f.csv"
    assert cli_io.main(["run", "--config", str(cfg), "--out", str(out), "--h", "0.02"]) == 0
    assert len(out.read_text().splitlines()) == 16


def test_cli_usage_errors(tmp_path, capsys):
    assert cli_io.main(["run", "--scenario", "nope"]) == 1
    err = capsys.readouterr().err
    assert "desk_push" in err and "t_bar" in err
    assert cli_io.main(["run"]) == 1
    assert cli_io.main([]) == 1
    assert cli_io.main(["run", "--config", str(tmp_path / "missing.yaml")]) == 1
    assert cli_io.main(["--help"]) == 0


def test_cli_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(_cube_text().replace("h: 0.01", "h: -0.01"))
    assert cli_io.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == 1
    assert "integration.h" in capsys.readouterr().err


def _failing_run(exc):
    def fake(scenario, on_record=None, **kw):
        rec = simulator.step(scenario.initial, scenario)[1]
        on_record(rec)
        raise exc
    return fake


@pytest.mark.parametrize("exc,code", [(StepError("boom"), 2), (IntegrityError("pen"), 3)])
def test_cli_failure_exit_codes_keep_partial_csv(tmp_path, monkeypatch, exc, code):
    monkeypatch.setattr(simulator, "run", _failing_run(exc))
    out = tmp_path / "p.csv"
    assert cli_io.main(["run", "--scenario", "resting_cube", "--out", str(out)]) == code
    assert len(out.read_text().splitlines()) == 2
