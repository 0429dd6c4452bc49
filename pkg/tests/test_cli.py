import csv
import io
import json

import numpy as np
import pytest

from divctl import __version__, cli
from divctl.model import ModelParams, solve_barrier

REF = dict(mu=0.5, sigma=1.0, rho=0.25, K=0.2, Delta=0.05)


def run(tmp_path, command, cfg, *extra):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / f"{command}.out"
    code = cli.main([command, "--config", str(path), "--out", str(out), *extra])
    text = out.read_text() if out.exists() else ""
    return code, text


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


@pytest.mark.parametrize(
    "cfg",
    [
        {k: v for k, v in REF.items() if k != "K"},
        dict(REF, sigma=-1.0),
        dict(REF, Delta=0.0),
        dict(REF, bogus=3),
        dict(REF, grid=0),
    ],
)
def test_invalid_input_exit_code(tmp_path, cfg):
    code, _ = run(tmp_path, "value", cfg)
    assert code == cli.EXIT_INVALID


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["thresholds", "--config", str(bad)]) == cli.EXIT_INVALID
    assert cli.main(["thresholds", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_INVALID


def test_solver_failure_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("no convergence")

    monkeypatch.setitem(cli.COMMANDS, "thresholds", boom)
    code, _ = run(tmp_path, "thresholds", REF)
    assert code == cli.EXIT_SOLVER


def test_thresholds_output(tmp_path):
    code, text = run(tmp_path, "thresholds", REF)
    doc = json.loads(text)
    assert code == 0
    assert doc["command"] == "thresholds" and doc["version"] == __version__
    assert doc["config"]["params"] == REF
    res = doc["result"]
    assert res["regime"] == "TwoThreshold"
    assert abs(res["fixed_point_residual"]) <= 1e-8
    assert 0 < res["u1"] < res["u2"] < res["u0"]


def test_barrier_only_reports_zero_lower_threshold(tmp_path):
    cfg = dict(REF, K=REF["mu"] / REF["rho"] + 0.5)
    code, text = run(tmp_path, "thresholds", cfg)
    res = json.loads(text)["result"]
    assert code == 0 and res["regime"] == "BarrierOnly"
    assert res["u1"] == 0.0
    assert res["u2"] == pytest.approx(solve_barrier(ModelParams(**cfg)).u0, rel=1e-14)


def test_value_csv(tmp_path):
    code, text = run(tmp_path, "value", dict(REF, grid=101), "--format", "csv")
    assert code == 0
    lines = text.splitlines()
    assert lines[0].startswith("# ")
    meta = json.loads(lines[0][2:])
    assert meta["config"]["options"]["grid"] == 101
    rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
    assert rows[0] == ["x", "V", "dV", "MV", "AV"]
    data = np.array(rows[1:], dtype=float)
    x, v, dv, mv = data[:, 0], data[:, 1], data[:, 2], data[:, 3]
    thr = json.loads(run(tmp_path, "thresholds", REF)[1])["result"]
    assert x[0] == 0.0 and v[0] == pytest.approx(0.0, abs=1e-12)
    assert np.all(dv[x > thr["u2"]] == 1.0)
    assert np.all(mv <= v + 1e-9)
    assert thr["u1"] in x and thr["u2"] in x


def test_verify_passes(tmp_path, capsys):
    code, text = run(tmp_path, "verify", REF)
    assert code == 0
    doc = json.loads(text)
    assert doc["result"]["summary"] == "PASS"
    assert "PASS" in capsys.readouterr().err
    assert max(doc["result"]["residuals"].values()) <= 1e-6 * REF["mu"] / REF["rho"]


def test_simulate_zero_paths_rejected(tmp_path):
    code, _ = run(tmp_path, "simulate", REF, "--paths", "0")
    assert code == cli.EXIT_INVALID


def test_simulate_runs_are_bit_exact(tmp_path):
    trace = tmp_path / "trace.csv"
    cfg = dict(REF, trace=str(trace))
    a = run(tmp_path, "simulate", cfg, "--paths", "2000", "--seed", "9")
    first = trace.read_text()
    b = run(tmp_path, "simulate", cfg, "--paths", "2000", "--seed", "9")
    assert a == b and a[0] == 0
    assert trace.read_text() == first and first.startswith("t,X,L,N")
    res = json.loads(a[1])["result"]
    assert abs(res["z_score"]) <= 3
    assert res["estimate"]["mean"] <= res["value"] + 3 * res["estimate"]["std_error"]


def test_asymptotics_columns(tmp_path):
    code, text = run(tmp_path, "asymptotics", dict(REF, deltas=[1e-2, 1e-3]), "--format", "csv")
    assert code == 0
    lines = text.splitlines()
    rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
    assert rows[0] == ["delta", "u1", "u2", "scale", "u1_ratio", "u2_ratio", "regime"]
    assert [float(r[0]) for r in rows[1:]] == [1e-2, 1e-3]


def test_heatlab_small_run(tmp_path):
    code, text = run(tmp_path, "heatlab", dict(REF, trials=2, grid=128, samples=4, t_end=0.5))
    doc = json.loads(text)
    assert code == 0 and doc["result"]["passed"]
    checks = {r[0] for r in doc["result"]["rows"]}
    assert checks == {"order_p", "single_crossing", "nondegenerate", "interval_positivity", "touch_curvature"}
