import csv
import json

import pytest

from lindthermo import cli
from lindthermo.config import ConfigError, from_dict, load


def write(path, text):
    path.write_text(text)
    return str(path)


FAST_EXCESS = """
[protocol]
shape = "exponential"
omega0 = 0.2
omega_tau = 5.0
tau = 20.0
[numerics]
n_samples = 101
"""


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


def test_unknown_key_is_rejected(tmp_path):
    bad = write(tmp_path / "c.toml", "scenario = \"evolve\"\n[model]\nbeta = 1.0\nkapa = 2.0\n")
    with pytest.raises(ConfigError, match="kapa"):
        load(bad)
    assert cli.main(["evolve", "--config", bad, "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("raw", [
    {"scenario": "evolve", "numerics": {"rtol": -1e-9}},
    {"scenario": "evolve", "model": {"beta": float("inf")}},
    {"scenario": "evolve", "model": {"dim": 2.5}},
    {"scenario": "evolve", "extras": {}},
    {"scenario": "teleport"},
    {"scenario": "geodesic", "model": {"kind": "qubit"}},
    {"scenario": "sweep", "sweep": {"axes": {"a.b": [1], "model.beta": [1.0]}}},
    {"scenario": "sweep", "sweep": {"axes": {"model.beta": [1.0], "model.m": [1.0],
                                            "model.kappa": [1.0], "protocol.tau": [1.0]}}},
])
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        from_dict(raw)


def test_toml_syntax_error_reports_line(tmp_path):
    bad = write(tmp_path / "c.toml", "[model]\nbeta = = 1\n")
    with pytest.raises(ConfigError, match="line 2"):
        load(bad)


def test_conflicting_scenario_is_rejected(tmp_path):
    cfg = write(tmp_path / "c.toml", 'scenario = "fcs"\n')
    assert cli.main(["evolve", "--config", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG


def test_flag_overrides_are_validated(tmp_path):
    assert cli.main(["evolve", "--rtol", "-1", "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG


def test_runs_are_byte_identical(tmp_path):
    cfg = write(tmp_path / "c.toml", FAST_EXCESS)
    for name in ("a", "b"):
        assert cli.main(["excess-work", "--config", cfg, "--out", str(tmp_path / name)]) == cli.EXIT_OK
    a, b = files(tmp_path / "a"), files(tmp_path / "b")
    assert a == b and set(a) == {"excess_work.json", "manifest.json", "moments.csv"}


def test_manifest_records_hash_and_files(tmp_path):
    cfg = write(tmp_path / "c.toml", FAST_EXCESS)
    cli.main(["excess-work", "--config", cfg, "--out", str(tmp_path / "o")])
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    raw = man["config"]
    assert from_dict(raw).digest() == man["config_sha256"]
    assert man["files"] == ["excess_work.json", "moments.csv"]
    assert {"dim", "omega_ref", "top_level_population"} <= set(man["truncation"])
    assert man["tolerances"]["rtol"] == 1e-10


def test_validate_scenarios(tmp_path):
    assert cli.main(["validate", "--out", str(tmp_path / "q")]) == cli.EXIT_OK
    rep = json.loads((tmp_path / "q" / "validate.json").read_text())
    assert rep["passed"] and rep["checks"]["steady_state_trace_distance"] <= 1e-6
    qubit = write(tmp_path / "c.toml", '[model]\nkind = "qubit"\ngammas = [1.0, 0.5]\nbetas = [1.0, 2.0]\n')
    assert cli.main(["validate", "--config", qubit, "--out", str(tmp_path / "b")]) == cli.EXIT_OK
    rep = json.loads((tmp_path / "b" / "validate.json").read_text())
    assert "steady_state_trace_distance" not in rep["checks"]
    assert rep["checks"]["detailed_balance_bath1"] <= 1e-8


def test_evolve_outputs(tmp_path):
    cfg = write(tmp_path / "c.toml", '[model]\ndim = 30\n[protocol]\ntau = 5.0\n[numerics]\nn_samples = 11\n')
    assert cli.main(["evolve", "--config", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_OK
    head = (tmp_path / "o" / "trajectory.csv").read_text().splitlines()[0]
    assert head == "t,tr_rho,min_eig,<x2>,<xp>,<p2>,energy"
    summary = json.loads((tmp_path / "o" / "evolve.json").read_text())
    assert summary["moment_ode_deviation"] <= 1e-6


def test_balanced_basis_option(tmp_path):
    cfg = write(tmp_path / "c.toml",
                '[model]\ndim = 40\n[protocol]\ntau = 5.0\n[numerics]\nn_samples = 11\nbasis = "balanced"\n')
    assert cli.main(["evolve", "--config", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_OK
    assert json.loads((tmp_path / "o" / "evolve.json").read_text())["moment_ode_deviation"] <= 1e-6


def test_geodesic_outputs_and_bad_endpoints(tmp_path):
    assert cli.main(["geodesic", "--out", str(tmp_path / "o")]) == cli.EXIT_OK
    rows = list(csv.reader(open(tmp_path / "o" / "metric.csv")))
    assert rows[0] == ["omega", "g", "sqrt_g"]
    rows = list(csv.reader(open(tmp_path / "o" / "protocol.csv")))
    assert rows[0] == ["s", "omega_opt", "omega_table1_case"]
    same = write(tmp_path / "c.toml", '[protocol]\nshape = "optimal"\nomega0 = 1.0\nomega_tau = 1.0\n')
    assert cli.main(["geodesic", "--config", same, "--out", str(tmp_path / "x")]) == cli.EXIT_CONFIG


def test_qubit_heat_exchange_fcs(tmp_path):
    cfg = write(tmp_path / "c.toml", """
[model]
kind = "qubit"
gammas = [1.0, 0.5]
betas = [1.0, 2.0]
[protocol]
shape = "static"
omega0 = 1.0
tau = 5.0
[fcs]
mode = "heat_exchange"
u_min = 0.0
u_max = 0.0
n_u = 1
""")
    assert cli.main(["fcs", "--config", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_OK
    out = json.loads((tmp_path / "o" / "fcs.json").read_text())
    assert out["ft_satisfied"] and out["ft_deviation"] <= 1e-5
    rows = list(csv.reader(open(tmp_path / "o" / "chi.csv")))
    assert rows[0] == ["u", "Re_chi", "Im_chi"] and float(rows[1][1]) == pytest.approx(1.0, abs=1e-10)


def test_empty_sweep_equals_single_run(tmp_path):
    cfg = write(tmp_path / "c.toml", FAST_EXCESS + '[sweep]\nscenario = "excess-work"\n')
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "s")]) == cli.EXIT_OK
    single = write(tmp_path / "d.toml", FAST_EXCESS + '[sweep]\nscenario = "excess-work"\n')
    assert cli.main(["excess-work", "--config", single, "--out", str(tmp_path / "r")]) == cli.EXIT_OK
    assert files(tmp_path / "s" / "point_000") == files(tmp_path / "r")


def test_sweep_isolates_failures(tmp_path):
    cfg = write(tmp_path / "c.toml", """
[protocol]
shape = "optimal"
omega0 = 1.0
tau = 20.0
[sweep]
scenario = "geodesic"
[sweep.axes]
"protocol.omega_tau" = [2.0, 1.0, 3.0]
""")
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "s"), "--workers", "2"]) == cli.EXIT_PARTIAL
    rows = list(csv.DictReader(open(tmp_path / "s" / "aggregate.csv")))
    assert [r["status"] for r in rows] == ["ok", "failed", "ok"]
    report = json.loads((tmp_path / "s" / "sweep.json").read_text())
    assert [f["point"] for f in report["failed"]] == [1]


def test_tau_sweep_aggregate(tmp_path):
    cfg = write(tmp_path / "c.toml", """
[protocol]
omega0 = 0.2
omega_tau = 5.0
[excess_work]
compare = true
[sweep]
scenario = "excess-work"
[sweep.axes]
"protocol.tau" = [25.0, 50.0]
""")
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "s")]) == cli.EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "s" / "aggregate.csv")))
    assert {"tau", "W_ex_opt", "W_ex_exp", "L2_over_tau"} <= set(rows[0])
    for r in rows:
        assert float(r["W_ex_opt"]) <= float(r["W_ex_exp"])


def test_dim_sweep_reports_convergence(tmp_path):
    cfg = write(tmp_path / "c.toml", """
[protocol]
omega0 = 1.0
omega_tau = 2.0
tau = 5.0
[fcs]
u_min = -1.0
u_max = -1.0
n_u = 1
moment_order = 1
[sweep]
scenario = "fcs"
[sweep.axes]
"model.dim" = [10, 20, 40]
""")
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "s")]) == cli.EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "s" / "aggregate.csv")))
    change = [float(r["chi_change_to_next_dim"]) for r in rows[:2]]
    assert change[0] > change[1]
