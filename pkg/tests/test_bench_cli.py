import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from ilaplace import bench, cli
from ilaplace.bench import (RunRecord, brute_force_integral, bench_gompertz, bench_skewt,
                            cell_seed, convergence_slopes, csv_text, rerun, run_method,
                            sample_sizes)
from ilaplace.engine import EngineOptions
from ilaplace.errors import DimensionTooLarge, NoConvergence, ToleranceNotMet
from ilaplace.models import gaussian, quadratic
from ilaplace.optimize import minimize

LOG_2PI = math.log(2 * math.pi)


# -- brute force -------------------------------------------------------------


def test_brute_force_closed_forms():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    for obj, expected in [(gaussian(2), LOG_2PI), (quadratic(A), LOG_2PI - 0.5 * math.log(3))]:
        assert brute_force_integral(obj, minimize(obj, [0.4, 0.4])) == pytest.approx(expected,
                                                                                   abs=1e-10)


def test_brute_force_three_dimensions():
    obj = gaussian(3)
    assert brute_force_integral(obj, minimize(obj, [0.3] * 3), 1e-6) == pytest.approx(
        1.5 * LOG_2PI, abs=1e-8)


def test_brute_force_skewt_truth():
    rec = run_method("skew-t", {"dim": 2, "a": 1.5, "c": 1.5, "nu": 3}, "bruteforce")
    assert abs(rec.log_I) <= 1e-5


def test_brute_force_gompertz_against_scipy(frozen):
    rec = run_method("gompertz-posterior", {"n": 20, "seed": 1}, "bruteforce")
    assert rec.log_I == pytest.approx(frozen["gompertz_n20_seed1_log_integral"], abs=1e-8)


def test_brute_force_rejects_large_dimension():
    obj = gaussian(4)
    with pytest.raises(DimensionTooLarge):
        brute_force_integral(obj, minimize(obj, np.zeros(4)))


@pytest.mark.xfail(strict=True, reason="measured |delta log I| is 2.9e-3 on this dataset; "
                                       "see the decisions ledger")
def test_gompertz_n20_improved_within_1e3_of_cubature(frozen):
    rec = run_method("gompertz-posterior", {"n": 20, "seed": 1}, "ilaplace-exact")
    assert abs(rec.log_I - frozen["gompertz_n20_seed1_log_integral"]) <= 1e-3


def test_gompertz_n20_improved_beats_laplace(frozen):
    truth = frozen["gompertz_n20_seed1_log_integral"]
    il = run_method("gompertz-posterior", {"n": 20, "seed": 1}, "ilaplace-exact").log_I
    lap = run_method("gompertz-posterior", {"n": 20, "seed": 1}, "laplace").log_I
    assert abs(il - truth) < abs(lap - truth) / 100


# -- single runs -------------------------------------------------------------


def test_run_method_examples():
    rec = run_method("gaussian", {"dim": 2}, "ilaplace-exact")
    assert rec.log_I == pytest.approx(LOG_2PI, abs=1e-12)
    assert len(rec.log_c_q) == 2 and rec.strategy == "exact"
    lap = run_method("skew-t", {"dim": 10, "a": 4, "c": 1, "nu": 3}, "laplace")
    assert math.exp(lap.log_I) == pytest.approx(0.013, abs=1e-3)
    assert lap.log_c_q == []
    with pytest.raises(ValueError):
        run_method("gaussian", {}, "mcmc")


def test_record_round_trip_and_rerun():
    opts = EngineOptions(strategy="approximate", permutation=(2, 0, 1), quad_rel_tol=1e-9)
    rec = run_method("skew-t", {"dim": 3, "a": 12, "c": 0.5, "nu": 5}, "ilaplace-approx", opts)
    text = rec.to_json()
    assert "\n" not in text
    back = RunRecord.from_json(text)
    assert back == rec
    again = rerun(back)
    assert again.log_I == pytest.approx(rec.log_I, abs=1e-12)
    assert again.permutation == [2, 0, 1] and again.strategy == "approximate"
    assert json.loads(text)["quad_rel_tol"] == 1e-9


def test_method_name_overrides_strategy():
    rec = run_method("gaussian", {"dim": 2}, "ilaplace-approx", EngineOptions(strategy="exact"))
    assert rec.strategy == "approximate"


# -- sweeps ------------------------------------------------------------------


def test_bench_skewt_rows_and_order():
    rows = bench_skewt(dims=(2, 3), nus=(5,), scenarios=((12.0, 0.5), (1.5, 1.5)),
                       methods=("laplace", "ilaplace-exact"))
    assert len(rows) == 8
    keys = [(r["a"], r["d"], r["method"]) for r in rows]
    assert keys[0] == (1.5, 2, "laplace") and keys[1] == (1.5, 2, "ilaplace-exact")
    for r in rows:
        assert r["truth_log_I"] == 0.0 and r.get("error") is None
        assert r["abs_log_error"] == abs(r["log_I"])


def test_bench_skewt_gaussian_limit():
    rows = bench_skewt(dims=(5,), nus=(200.0,), scenarios=((100.0, 100.0),),
                       methods=("ilaplace-exact",))
    assert abs(rows[0]["log_I"]) <= 5e-3


def test_bench_skewt_reference_cell():
    rows = bench_skewt(dims=(10,), nus=(3,), scenarios=((4.0, 1.0),), methods=("ilaplace-exact",))
    assert 0.988 <= math.exp(rows[0]["log_I"]) <= 1.008


def test_bench_skewt_records_failures(monkeypatch):
    real = bench.run_method

    def flaky(model, params, method, opts=None):
        if params["dim"] == 3:
            raise NoConvergence("stuck")
        return real(model, params, method, opts)

    monkeypatch.setattr(bench, "run_method", flaky)
    rows = bench_skewt(dims=(2, 3), nus=(5,), scenarios=((1.5, 1.5),), methods=("laplace",))
    assert rows[0].get("error") is None
    assert rows[1]["error"] == "NoConvergence: stuck" and "log_I" not in rows[1]
    text = csv_text(bench.SKEWT_COLUMNS, rows)
    assert text.splitlines()[2].endswith(",NoConvergence: stuck")


def test_sample_sizes():
    assert sample_sizes(20, 4) == [20, 26, 33, 40]
    assert len(sample_sizes(20, 15)) == 15
    with pytest.raises(ValueError):
        sample_sizes(1, 3)
    with pytest.raises(ValueError):
        sample_sizes(20, 0)


def test_cell_seed_is_deterministic_and_distinct():
    assert cell_seed(0, 20, 1) == cell_seed(0, 20, 1)
    assert len({cell_seed(0, n, r) for n in (20, 26) for r in range(5)}) == 10


def test_bench_gompertz_one_cell():
    rows, slopes = bench_gompertz(n_start=20, steps=1, reps=1, seed=0)
    assert [r["method"] for r in rows] == list(bench.GOMPERTZ_METHODS)
    assert rows[-1]["rel_error"] == 0.0
    text = csv_text(bench.GOMPERTZ_COLUMNS, rows)
    assert len(text.splitlines()) == 1 + len(bench.GOMPERTZ_METHODS)
    assert all(math.isnan(s["slope"]) for s in slopes)


def test_convergence_slopes_on_synthetic_errors():
    rows = []
    for n in (10, 20, 40, 80):
        for rep, jitter in enumerate((0.5, 1.5)):
            rows.append({"n": n, "method": "laplace", "rel_error": jitter * 3.0 / n})
            rows.append({"n": n, "method": "ilaplace-exact", "rel_error": jitter * n ** -1.5})
    rows.append({"n": 10, "method": "laplace", "error": "boom"})
    slopes = {s["method"]: s for s in convergence_slopes(rows)}
    assert slopes["laplace"]["slope"] == pytest.approx(-1.0, abs=1e-12)
    assert slopes["laplace"]["intercept"] == pytest.approx(math.log(3.0), abs=1e-12)
    assert slopes["ilaplace-exact"]["slope"] == pytest.approx(-1.5, abs=1e-12)
    assert slopes["laplace"]["n_cells"] == 8 and slopes["laplace"]["n_sizes"] == 4


def test_csv_text_format():
    text = csv_text(["a", "b", "c"], [{"a": 0.1, "b": None, "c": "x"}])
    assert text == "a,b,c\n0.1,,x\n"


# -- command line ------------------------------------------------------------


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_approx_gaussian(capsys):
    code, out, _ = run_cli(capsys, "approx", "--model", "gaussian", "--dim", "2",
                           "--method", "ilaplace-exact")
    assert code == 0
    rec = json.loads(out)
    assert rec["log_I"] == pytest.approx(LOG_2PI, abs=1e-12)
    assert out.count("\n") == 1


def test_cli_approx_options(capsys):
    code, out, _ = run_cli(capsys, "approx", "--model", "skew-t", "--dim", "3", "-p", "a=12",
                           "-p", "c=0.5", "--strategy", "approx", "--permutation", "2,1,0",
                           "--grad-tol", "1e-9")
    rec = json.loads(out)
    assert code == 0 and rec["method"] == "ilaplace-approx" and rec["permutation"] == [2, 1, 0]
    assert rec["params"]["a"] == 12.0 and rec["grad_tol"] == 1e-9
    code, out, _ = run_cli(capsys, "approx", "--model", "glmm-binary", "--dim", "4", "--seed",
                           "3", "--method", "laplace")
    assert code == 0 and json.loads(out)["params"]["n"] == 4


def test_cli_parameter_errors(capsys):
    assert run_cli(capsys, "approx", "--model", "bod2")[0] == 2
    assert run_cli(capsys, "approx", "--model", "skew-t", "-p", "nu=-2")[0] == 2
    assert run_cli(capsys, "approx", "--model", "gompertz-posterior", "--dim", "3")[0] == 2
    assert run_cli(capsys, "approx", "--model", "gaussian", "--dim", "2",
                   "--permutation", "0,0")[0] == 2
    assert run_cli(capsys, "approx", "--model", "gaussian", "--dim", "4",
                   "--method", "bruteforce")[0] == 2
    code, _, err = run_cli(capsys, "approx", "--model", "gaussian", "--threads", "0")
    assert code == 2 and "threads" in err
    with pytest.raises(SystemExit) as info:
        cli.main(["approx", "--model", "gaussian", "--strategy", "fast"])
    assert info.value.code == 2


@pytest.mark.parametrize("err, code", [(NoConvergence("stuck"), 3), (ToleranceNotMet("panels"), 4)])
def test_cli_failure_exit_codes(capsys, monkeypatch, err, code):
    def fail(*args, **kwargs):
        raise err

    monkeypatch.setattr(bench, "run_method", fail)
    got, out, stderr = run_cli(capsys, "approx", "--model", "gaussian")
    assert got == code and out == "" and type(err).__name__ in stderr


def test_cli_threads_from_environment(monkeypatch):
    seen = {}

    def spy(model, params, method, opts):
        seen["parallelism"] = opts.parallelism
        return RunRecord(model, params, method, 0.0)

    monkeypatch.setattr(bench, "run_method", spy)
    monkeypatch.setenv("ILAPLACE_THREADS", "6")
    cli.main(["approx", "--model", "gaussian"])
    assert seen["parallelism"] == 6
    cli.main(["approx", "--model", "gaussian", "--threads", "2"])
    assert seen["parallelism"] == 2
    monkeypatch.setenv("ILAPLACE_THREADS", "zero")
    with pytest.raises(SystemExit):
        cli.main(["approx", "--model", "gaussian"])


def test_cli_bench_skewt_to_file(tmp_path, capsys):
    out = tmp_path / "grid.csv"
    code, stdout, _ = run_cli(capsys, "bench-skewt", "--dims", "2", "--nus", "5", "--a", "1.5",
                              "--c", "1.5", "--methods", "laplace,ilaplace-exact", "--out",
                              str(out))
    assert code == 0 and stdout == ""
    raw = out.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == ",".join(bench.SKEWT_COLUMNS) and len(lines) == 3
    assert run_cli(capsys, "bench-skewt", "--a", "1.5")[0] == 2
    assert run_cli(capsys, "bench-skewt", "--methods", "mcmc")[0] == 2


def test_cli_bench_gompertz_writes_slopes(tmp_path, capsys):
    out = tmp_path / "gompertz.csv"
    code, stdout, _ = run_cli(capsys, "bench-gompertz", "--steps", "2", "--reps", "1",
                              "--out", str(out))
    assert code == 0
    assert len(out.read_text().splitlines()) == 1 + 2 * len(bench.GOMPERTZ_METHODS)
    slopes = cli.slopes_path(out)
    assert slopes.name == "gompertz_slopes.csv"
    assert slopes.read_text() == stdout
    assert stdout.splitlines()[0] == ",".join(bench.SLOPE_COLUMNS)


def test_console_entry_point_runs():
    env = dict(os.environ, LC_ALL="de_DE.UTF-8")
    res = subprocess.run([sys.executable, "-m", "ilaplace.cli", "approx", "--model", "quadratic",
                          "-p", "matrix=2,1;1,2", "--method", "laplace"],
                         capture_output=True, text=True, env=env)
    assert res.returncode == 0
    assert json.loads(res.stdout)["log_I"] == pytest.approx(LOG_2PI - 0.5 * math.log(3),
                                                            abs=1e-12)
