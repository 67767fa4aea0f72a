import csv
import json
import math

import numpy as np
import pytest

from homlab import cli, harness
from homlab.domain import plain_mesh
from homlab.harness import CaseError, ConfigError, SweepConfig, emit, run_case, run_sweep, selftest
from homlab.singular import make_source, solve_semilinear


def test_config_defaults_and_validation(tmp_path):
    cfg = SweepConfig()
    assert cfg.epsilon_list == [0.5, 1 / 3, 0.25] and cfg.test_modes == [[1, 1], [2, 1], [1, 2]]
    for bad in ({"epsilon_list": []}, {"epsilon_list": [0.25, 0.5]}, {"nope": 1}, {"mesh": {"h": 0.1}},
                {"solver": {"damping": 2.0}}, {"source": {"kind": "power", "gamma": -1}},
                {"coefficient": {"kind": "weird"}}, {"z_pairing": "x"}):
        with pytest.raises(ConfigError):
            SweepConfig.from_dict(bad)
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"epsilon_list": [0.5], "source": {"kind": "power", "h": 1.0, "gamma": 2.0}}))
    cfg = SweepConfig.from_json(p)
    assert cfg.make_source().kind == "power"
    assert SweepConfig.from_dict(cfg.to_dict()) == cfg


def test_run_case_smoke():
    case = run_case(0.5, SweepConfig())
    d = case.diagnostics
    assert d["n_holes"] == 1 and d["sandwich_violation"] == 0.0
    assert harness._finite({k: v for k, v in d.items() if k != "mu_deviation"})


def test_geometry_stage_error(tmp_path):
    cfg = SweepConfig(epsilon_list=[0.9], c0=0.01, output_dir=str(tmp_path))
    with pytest.raises(CaseError) as err:
        run_case(0.9, cfg)
    assert err.value.stage == "geometry"


def test_no_holes_matches_plain_solve():
    cfg = SweepConfig(epsilon_list=[0.9])  # cell side exceeds the domain: no holes
    case = run_case(0.9, cfg)
    assert case.diagnostics["n_holes"] == 0
    mesh = plain_mesh(target_h=0.05)
    u, _ = solve_semilinear(mesh, source=make_source("constant", f=1.0))
    assert case.mesh.nv == mesh.nv and np.allclose(case.u, u, atol=1e-12)


def test_failed_case_is_isolated(tmp_path):
    cfg = SweepConfig(epsilon_list=[0.95, 0.9], c0=0.01, output_dir=str(tmp_path))
    report = run_sweep(cfg)
    assert set(report.failures) == {0.95, 0.9}
    assert all(r["status"] == "failed" for r in report.rows)
    assert not report.verdicts["all_cases_completed"]


def test_linear_sweep_report(linear_report):
    rep = linear_report
    assert len(rep.rows) == 3 and all(r["status"] == "ok" for r in rep.rows)
    assert rep.rows[-1]["e_l2_meas"] < rep.rows[0]["e_l2_meas"]
    assert rep.verdicts["cauchy_schwarz"] and rep.verdicts["sandwich"]
    assert rep.mu_analytic == pytest.approx(math.pi / 2)
    for c in rep.cases:
        for key in ("energy_residual", "apriori", "zdelta", "sandwich_violation", "removed_measure"):
            assert key in c.diagnostics


def test_emit_formats(linear_report, tmp_path):
    paths = emit(linear_report, "csv,json,gnuplot", tmp_path)
    assert {p.name for p in paths} == {"sweep.csv", "report.json", "sweep.dat", "sweep.gp"}
    rows = list(csv.reader(open(tmp_path / "sweep.csv")))
    assert rows[0] == harness.CSV_COLUMNS and len(rows) - 1 == 3
    data = json.loads((tmp_path / "report.json").read_text())
    assert json.loads(json.dumps(data)) == data
    assert len(data["rows"]) == 3 and data["verdicts"] == linear_report.verdicts
    dat = np.loadtxt(tmp_path / "sweep.dat")
    assert dat.shape == (3, len(harness.GNUPLOT_COLUMNS))
    assert (tmp_path / "sweep.dat").read_text().startswith("# epsilon e_l2 p1 p2 p3 mu_deviation z_minus_w")
    with pytest.raises(ValueError):
        emit(linear_report, "xml", tmp_path)


def test_png_figures(linear_report, tmp_path):
    paths = emit(linear_report, ["png"], tmp_path)
    assert len(paths) == 4
    for p in paths:
        assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_csv_bit_stable(linear_report, tmp_path, monkeypatch):
    monkeypatch.setenv("HOMLAB_DETERMINISTIC", "1")
    again = run_sweep(SweepConfig())
    emit(linear_report, "csv", tmp_path / "a")
    emit(again, "csv", tmp_path / "b")
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()


def test_trend_helpers():
    assert harness.nonincreasing([1.0, 1.05, 0.5])
    assert not harness.nonincreasing([1.0, 1.2])
    assert harness.strictly_decreasing([3, 2, 1]) and not harness.strictly_decreasing([0.0, 0.0])


def test_selftest_and_fault():
    res = selftest()
    assert res.elapsed < 60
    names = [c[0] for c in res.checks]
    assert names == ["truncate", "fem", "corrector", "analytic_mu", "geometry", "solver"]
    assert all(ok for name, ok, _ in res.checks if name != "truncate")
    bad = selftest(faults=["quadrature"])
    assert "fem" in bad.failed
    with pytest.raises(ValueError):
        selftest(faults=["gremlins"])


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["mesh", "--eps", "0.5", "--out", str(tmp_path / "m.txt")]) == 0
    assert (tmp_path / "m.txt").exists()
    assert cli.main(["corrector", "--eps", "0.5", "--out-dir", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "mu.csv").exists()
    assert cli.main(["solve", "--eps", "0.5", "--out-dir", str(tmp_path / "s")]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text('{"typo": 1}')
    assert cli.main(["solve", "--config", str(bad), "--eps", "0.5"]) == 2
    with pytest.raises(SystemExit) as ex:
        cli.main(["frobnicate"])
    assert ex.value.code == 2
    cfg = tmp_path / "geo.json"
    cfg.write_text('{"c0": 0.01, "epsilon_list": [0.9]}')
    assert cli.main(["solve", "--config", str(cfg), "--eps", "0.9"]) == 1
    assert cli.main(["selftest", "--fault", "quadrature"]) == 1
    out = capsys.readouterr().out
    assert "FAIL fem" in out
