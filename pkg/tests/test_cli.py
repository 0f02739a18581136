import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate

from gaussconstraint.cli import KL_HEADER, SIM_FIELDS, TRACE_FIELDS, main, read_table, write_table


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def parse_pairs(text):
    return {k: float(v) for k, v in (ln.split() for ln in text.strip().splitlines())}


def test_truncate_one_sided(capsys):
    code, out, _ = run(capsys, "truncate", "--lower-mu", "-2", "--lower-sigma", "0.5")
    assert code == 0
    vals = parse_pairs(out)
    assert abs(vals["delta_mean"]) < 1e-8 and abs(vals["delta_variance"]) < 1e-8


def test_truncate_hard_limit(capsys):
    code, out, _ = run(capsys, "truncate", "--lower-mu", "0", "--lower-sigma", "1e-9")
    assert code == 0
    assert_allclose(parse_pairs(out)["approx_mean"], math.sqrt(2 / math.pi), atol=1e-6)


def test_truncate_interval_and_curve(capsys, tmp_path):
    curve = tmp_path / "curve.csv"
    code, out, _ = run(capsys, "truncate", "--lower-mu", "-2", "--lower-sigma", "0.5",
                       "--upper-mu", "2", "--upper-sigma", "1", "--curve", str(curve))
    assert code == 0
    vals = parse_pairs(out)
    assert_allclose(vals["gamma"], 8 / 3, rtol=1e-12)
    assert_allclose(vals["approx_mean"], vals["surrogate_oracle_mean"], atol=1e-8)
    rows = read_table(curve.open())
    assert list(rows[0]) == ["zeta", "actual", "approx"]
    zeta = np.array([r["zeta"] for r in rows])
    assert abs(integrate.trapezoid([r["actual"] for r in rows], zeta) - 1) < 1e-3


@pytest.mark.parametrize("argv", [
    ["truncate"],
    ["truncate", "--lower-sigma", "1"],
    ["truncate", "--lower-mu", "1", "--upper-mu", "0"],
    ["truncate", "--lower-mu", "0", "--lower-sigma", "-1"],
    ["klscan", "--gamma", ""],
    ["klscan", "--gamma", "-1"],
    ["simulate", "--sigma-s", "-5"],
    ["simulate", "--runs", "0"],
    ["trace", "--runs", "2"],
    ["trace", "--sigma-s", "5,10"],
])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2


def test_exit_codes_from_process(tmp_path):
    def code(*argv):
        return subprocess.run([sys.executable, "-m", "gaussconstraint", *argv], capture_output=True).returncode
    assert code("truncate") == 2
    assert code("truncate", "--lower-mu", "0") == 0
    assert code("klscan", "--gamma", "1", "--delta", "0", "-o", str(tmp_path / "no" / "such" / "dir.csv")) == 1


def test_klscan(capsys):
    code, out, _ = run(capsys, "klscan", "--gamma", "0.5,3,10", "--delta", "0,0.3")
    assert code == 0
    assert out.splitlines()[0] == KL_HEADER
    rows = read_table(io.StringIO(out))
    assert [(r["gamma"], r["delta"]) for r in rows] == [(0.5, 0.0), (0.5, 0.3), (3.0, 0.0), (3.0, 0.3),
                                                         (10.0, 0.0), (10.0, 0.3)]
    kl = {(r["gamma"], r["delta"]): r["kl"] for r in rows}
    assert kl[(10.0, 0.0)] < 1e-8
    assert kl[(3.0, 0.3)] < kl[(0.5, 0.3)]


def test_simulate_deterministic_csv(capsys, tmp_path):
    argv = ["simulate", "--robot", "B", "--sigma-s", "0,15", "--runs", "3", "--seed", "4"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    imp = tmp_path / "imp.csv"
    assert main(argv + ["-o", str(a), "--improvements", str(imp)]) == 0
    assert main(argv + ["-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = read_table(a.open())
    assert len(rows) == 6 and tuple(rows[0]) == SIM_FIELDS
    assert {r["method"] for r in rows} == {"unconstrained", "hard", "soft"}
    assert all(r["robot"] == "B" and r["n_runs"] == 3 and r["seed"] == 4 for r in rows)
    # round trip: parse(emit(x)) == x
    buf = io.StringIO()
    write_table(rows, SIM_FIELDS, buf)
    assert read_table(io.StringIO(buf.getvalue())) == rows
    imps = read_table(imp.open())
    assert all(math.isfinite(r["improvement_pct"]) for r in imps)


def test_simulate_json_mirrors_csv(capsys, tmp_path):
    argv = ["simulate", "--sigma-s", "10", "--runs", "2", "--sigma-a", "0.8", "--sigma-v", "2"]
    main(argv + ["-o", str(tmp_path / "r.csv")])
    main(argv + ["-o", str(tmp_path / "r.json"), "--format", "json"])
    rows = read_table((tmp_path / "r.csv").open())
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["rmse"] == rows
    assert rows[0]["robot"] == "custom"
    assert {r["baseline"] for r in data["improvements"]} >= {"unconstrained"}


def _trace(tmp_path, *extra):
    path = tmp_path / "trace.csv"
    assert main(["trace", "--robot", "B", "--sigma-s", "15", "-o", str(path), *extra]) == 0
    return read_table(path.open())


def test_trace(tmp_path):
    rows = _trace(tmp_path)
    assert tuple(rows[0]) == TRACE_FIELDS
    assert rows[0]["feedback"] == "no_feedback"
    truth = np.array([r["truth_m"] for r in rows])
    hard = np.array([r["hard_mean_m"] for r in rows])
    hard_sd = np.array([r["hard_std_m"] for r in rows])
    # the hard-constrained band is overconfident somewhere along this run
    assert np.any(np.abs(truth - hard) > 3 * hard_sd)
    fb = _trace(tmp_path, "--feedback")
    assert fb[0]["feedback"] == "truncated_feedback"
    assert np.mean([r["soft_std_m"] for r in fb]) < np.mean([r["soft_std_m"] for r in rows])
