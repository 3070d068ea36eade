import csv
import json
import logging
import shutil

import numpy as np
import pytest

from mfg_grid import cli
from mfg_grid.grid_model import NetworkError, format_network
from mfg_grid.metrics import metric_series
from mfg_grid.persist import (RunManifest, ScenarioError, _data_path, emit_results,
                              format_load_shape, load_run, load_scenario, parse_load_shape,
                              scenario_from_dict)
from mfg_grid.simulate import run_simulation

FAST = {"days": 1, "agents_per_node": 6, "soc_points": 11}
TABLES = ["lmp.csv", "belief_error.csv", "imv.csv", "daily_cost.csv", "profiles.csv",
          "shocks.csv"]


def test_baseline_loads_without_warnings(caplog):
    with caplog.at_level(logging.WARNING):
        sc = load_scenario("ieee14_baseline")
    assert not [r for r in caplog.records if r.levelno >= logging.WARNING]
    net, types, cfg = sc
    assert net.n_buses == 14 and len(types) == 28
    assert cfg.days == 100 and cfg.agents_per_node == 3000


def test_presets_set_mode():
    assert load_scenario("no-learning").config.mode == "no_learning_no_battery"
    assert load_scenario("mf-no-shock-info").config.mode == "mf_without_shock_info"
    with pytest.raises(ScenarioError):
        load_scenario("no-such-preset")


def test_malformed_ptdf_row_cites_row(ieee14):
    text = format_network(ieee14, include_ptdf=True).splitlines()
    i = text.index("[ptdf]") + 3
    text[i] = " ".join(text[i].split()[:-1])
    with pytest.raises(NetworkError, match="ptdf row 3 has 13 entries"):
        scenario_from_dict({"network_text": "\n".join(text),
                            "load_shape": "load_shape.csv"}, _data_path(""))


def test_load_shape_round_trip_and_errors(load_shape):
    g, n = load_shape
    g2, n2 = parse_load_shape(format_load_shape(g, n))
    np.testing.assert_array_equal(g, g2)
    np.testing.assert_array_equal(n, n2)
    bad = format_load_shape(g, n).splitlines()
    with pytest.raises(ValueError, match="line 3: hour 1 repeated"):
        parse_load_shape("\n".join(bad[:2] + [bad[1]] + bad[3:]))
    with pytest.raises(ValueError, match="average 1"):
        parse_load_shape(format_load_shape(g * 1.1, n))


def test_override_reaches_manifest(tmp_path):
    sc = load_scenario("mf-shock-info", {**FAST, "agents_per_node": 200, "days": 0})
    lg = run_simulation(*sc)
    man = emit_results(lg, metric_series(lg), tmp_path, sc)
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert doc["config"]["agents_per_node"] == 200
    assert doc["config_hash"] == man.config_hash and "threads" not in doc["config"]


def test_empty_horizon_tables_have_headers_only(tmp_path):
    sc = load_scenario(None, {**FAST, "days": 0})
    lg = run_simulation(*sc)
    emit_results(lg, metric_series(lg), tmp_path, sc)
    for name in TABLES:
        rows = list(csv.reader(open(tmp_path / name)))
        assert len(rows) == 1 and rows[0][0] in ("day", "bus", "kind")


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    sc = load_scenario("mf-shock-info", FAST)
    lg = run_simulation(*sc)
    man = emit_results(lg, metric_series(lg), out, sc)
    return out, man, lg, sc


def test_manifest_checksums_verify(run_dir, tmp_path):
    out, man, _, _ = run_dir
    assert man.verify(out) == []
    copy = tmp_path / "copy"
    shutil.copytree(out, copy)
    with open(copy / "lmp.csv", "a") as fh:
        fh.write("\n")
    assert man.verify(copy) == ["lmp.csv"]
    assert isinstance(man, RunManifest)


def test_tables_parse_and_use_17_digits(run_dir):
    out, _, lg, _ = run_dir
    rows = list(csv.reader(open(out / "lmp.csv")))
    vals = np.array(rows[1:], dtype=float)
    np.testing.assert_array_equal(vals[:, 2:-1], lg.lmp.reshape(-1, 14))


def test_echo_round_trip(run_dir):
    out, _, lg, sc = run_dir
    lg2, sc2 = load_run(out)
    assert sc2.echo() == sc.echo()
    assert sc2.config.agents_per_node == 6
    np.testing.assert_array_equal(lg2.lmp, lg.lmp)
    assert lg2.shocks == lg.shocks
    np.testing.assert_array_equal(sc2.network.ptdf, sc.network.ptdf)


def test_same_seed_is_byte_identical(run_dir, tmp_path):
    out, _, _, _ = run_dir
    sc = load_scenario("mf-shock-info", {**FAST, "threads": 2, "chunk_size": 8})
    lg = run_simulation(*sc)
    emit_results(lg, metric_series(lg), tmp_path, sc)
    for name in TABLES + ["config.json", "log.npz", "summary.json"]:
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes(), name


# --------------------------------------------------------------------- CLI ----

def test_cli_run_and_metrics(tmp_path, capsys):
    args = ["run", "--days", "1", "--agents-per-node", "6", "--outdir", str(tmp_path)]
    assert cli.main(args) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 0
    assert cli.main(["metrics", str(tmp_path), "--window", "1", "--deviation", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["bus"] == 3 and out["deviation"][0]["gain"] >= 0


def test_cli_validate(capsys):
    assert cli.main(["validate", "--scenario", "no-learning"]) == 0
    assert "14 buses" in capsys.readouterr().out


def test_cli_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"network": "x.net",\n "load_shape": 3,,}')
    assert cli.main(["validate", "--scenario", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err
    assert cli.main(["validate", "--beta", "1.5"]) == 2


def test_cli_env_threads(monkeypatch):
    monkeypatch.setenv("MFG_GRID_THREADS", "zero")
    assert cli.main(["validate"]) == 2


def test_cli_solver_failure(monkeypatch, tmp_path):
    from mfg_grid import simulate
    from mfg_grid.dispatch import SolverFailure

    def boom(*a, **k):
        raise SolverFailure("pivot limit reached")
    monkeypatch.setattr(simulate, "solve_ed", boom)
    assert cli.main(["run", "--days", "1", "--agents-per-node", "4",
                     "--outdir", str(tmp_path)]) == 3


def test_cli_oracle(capsys):
    assert cli.main(["oracle", "--cases", "5"]) == 0
    assert cli.main(["oracle", "--cases", "5", "--tol", "-1"]) == 3


def test_cli_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["run", "--days", "0", "--agents-per-node", "4",
                     "--outdir", str(blocker / "sub")]) == 4
    assert cli.main(["metrics", str(tmp_path / "missing")]) == 4


def test_cli_sweep(tmp_path):
    assert cli.main(["sweep", "--scenario", "no-learning", "--seeds", "2", "--days", "1",
                     "--agents-per-node", "4", "--outdir", str(tmp_path)]) == 0
    rows = list(csv.reader(open(tmp_path / "sweep_summary.csv")))
    assert [r[1] for r in rows[1:]] == ["0", "1"]
    assert (tmp_path / "no-learning" / "seed_1" / "manifest.json").exists()
