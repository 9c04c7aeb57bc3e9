import io
import json

import pytest

from srp.cli import EXIT_CAPACITY, EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from srp.report import CheckResult, SuiteReport
from srp.runner import code_hash, read_csv, resolve_config, stream_id
from srp import suites


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


def body(text):
    return text.split("\n", 1)[1]


def test_alpha0_command():
    code, out = run("alpha0", "--log-mu", "1.0")
    assert code == EXIT_OK
    d = json.loads(out)
    assert d["alpha0"] < 1.0 and d["residual"] < 1e-12


def test_invalid_parameters_exit_2():
    assert run("alpha0", "--log-mu", "-1")[0] == EXIT_USAGE
    assert run("constants", "--alpha", "0.5")[0] == EXIT_USAGE
    assert run("verify", "no-such-suite")[0] == EXIT_USAGE
    assert run()[0] == EXIT_USAGE


def test_bad_config_file_exit_2(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"alpha": "high"}))
    assert run("tails", "--config", str(p))[0] == EXIT_USAGE
    assert run("tails", "--config", str(tmp_path / "missing.json"))[0] == EXIT_USAGE


def test_capacity_exit_3():
    assert run("census", "--n", "200", "--d", "3", "--n-max", "2")[0] == EXIT_CAPACITY


def test_failed_suite_exit_1(monkeypatch):
    def failing():
        return SuiteReport("demo", [CheckResult("x", {}, 1, 0, -1.0, False)])
    monkeypatch.setitem(suites.SUITES, "enumeration", failing)
    code, out = run("verify", "enumeration")
    assert code == EXIT_FAIL
    assert "FAIL" in out


def test_verify_writes_reports(tmp_path):
    junit, js = tmp_path / "r.xml", tmp_path / "r.json"
    code, out = run("verify", "enumeration", "--junit", str(junit), "--json", str(js))
    assert code == EXIT_OK
    assert "13/13" in out
    assert "<testsuite" in junit.read_text()
    assert json.loads(js.read_text())


def test_tails_csv_is_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["tails", "--rows", "4", "--cols", "4", "--alpha", "1.5", "--samples", "300", "--seed", "9",
            "--ell-max", "6"]
    assert run(*args, "--csv", str(a))[0] == EXIT_OK
    assert run(*args, "--csv", str(b))[0] == EXIT_OK
    assert body(a.read_text()) == body(b.read_text())
    header, rows = read_csv(a.read_text())
    assert header["code_hash"] == code_hash()
    assert header["config"]["seed"] == 9
    assert len(rows) == 7


def test_tails_exact_path_on_small_grid():
    code, out = run("tails", "--rows", "2", "--cols", "3", "--alpha", "1.0", "--ell-max", "4")
    header, rows = read_csv(out)
    assert header["runs"][0]["method"] == "exact"
    assert [float(r["tail"]) for r in rows] == sorted((float(r["tail"]) for r in rows), reverse=True)


def test_tails_warns_when_overlay_is_infeasible(capsys):
    code, out = run("tails", "--rows", "2", "--cols", "2", "--alpha", "0.5", "--ell-max", "3")
    assert code == EXIT_OK
    assert "overlay omitted" in capsys.readouterr().err
    _, rows = read_csv(out)
    assert all(r["overlay"] == "" for r in rows)


def test_regen_and_detail(tmp_path):
    d = tmp_path / "d.csv"
    code, out = run("regen", "--n", "4", "--width", "3", "--alpha", "2", "--samples", "60", "--detail", str(d))
    assert code == EXIT_OK
    header, rows = read_csv(out)
    stats = {r["statistic"] for r in rows}
    assert {"quantile", "exceed", "increment_mean", "increment_ci_low", "increment_ci_high"} <= stats
    _, detail = read_csv(d.read_text())
    assert len(detail) == 60


def test_constants_sample_census():
    code, out = run("constants", "--alpha", "1.5")
    assert code == EXIT_OK and json.loads(out)["C_delta"] == 1.0
    code, out = run("sample", "--rows", "3", "--cols", "3", "--samples", "5")
    assert code == EXIT_OK and len(read_csv(out)[1]) == 5
    code, out = run("sample", "--n", "3", "--width", "3", "--samples", "4", "--model", "open")
    assert code == EXIT_OK and len(read_csv(out)[1]) == 4
    code, out = run("census", "--rows", "9", "--cols", "9", "--origin", "40", "--n-max", "4")
    _, rows = read_csv(out)
    assert [int(r["saw_count"]) for r in rows] == [1, 4, 12, 36, 100]


def test_config_merge_and_stream_ids(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"geometry": {"kind": "cylinder", "n": 5}, "alpha": 2.0}))
    cfg = resolve_config(str(p), {"sampler": {"samples": 7}})
    assert cfg["geometry"] == {"kind": "cylinder", "n": 5}
    assert cfg["sampler"]["samples"] == 7 and cfg["sampler"]["sweeps_per_sample"] == 10
    other = resolve_config(str(p), {"sampler": {"samples": 7}, "output": {"csv": "x.csv"}})
    assert stream_id(cfg, 2.0, 0) == stream_id(other, 2.0, 0)
    assert stream_id(cfg, 2.0, 0) != stream_id(cfg, 2.0, 1)
