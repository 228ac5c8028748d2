import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from entlogdet import SparseSymMatrix, exact_logdet, synth_wishart_identity, write_matrix_market
from entlogdet.cli import (
    COMPARE_HEADER,
    ESTIMATE_HEADER,
    GMRF_BENCH_HEADER,
    GMRF_SWEEP_HEADER,
    SWEEP_N_HEADER,
    derived_seed,
    main,
)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    rows = list(csv.reader(io.StringIO(out.out)))
    return code, rows, out.err


@pytest.fixture
def id100(tmp_path):
    p = tmp_path / "id100.mtx"
    write_matrix_market(SparseSymMatrix.identity(100), p)
    return p


def test_estimate_identity(id100, capsys):
    code, rows, _ = run(["estimate", "--matrix", str(id100)], capsys)
    assert code == 0
    assert rows[0] == ESTIMATE_HEADER
    rec = dict(zip(rows[0], rows[1]))
    assert abs(float(rec["estimate"])) < 1e-6
    assert rec["method"] == "maxent" and rec["matvecs"] == "300"


def test_estimate_synthetic_against_oracle(capsys):
    code, rows, _ = run(["estimate", "--synthetic", "n=1000", "--seed", "7", "--exact"], capsys)
    assert code == 0
    rec = dict(zip(rows[0], rows[1]))
    assert float(rec["relative_error"]) < 0.05
    assert float(rec["exact"]) == pytest.approx(exact_logdet(synth_wishart_identity(1000, 7)), rel=1e-12)


def test_estimate_exact_value_and_sidecar(tmp_path, capsys):
    p = tmp_path / "d.mtx"
    write_matrix_market(SparseSymMatrix.diagonal_matrix(np.tile([1.0, 0.5], 50)), p)
    _, rows, _ = run(["estimate", "--matrix", str(p), "--exact", "-34.657359"], capsys)
    assert float(rows[1][ESTIMATE_HEADER.index("exact")]) == -34.657359
    (tmp_path / "d.mtx.exact").write_text("-34.65735902799726\n")
    _, rows, _ = run(["estimate", "--matrix", str(p)], capsys)
    rec = dict(zip(rows[0], rows[1]))
    assert float(rec["exact"]) == pytest.approx(50 * np.log(0.5))
    assert float(rec["relative_error"]) < 0.05


@pytest.mark.parametrize("method", ["taylor", "chebyshev", "exact"])
def test_estimate_other_methods(id100, capsys, method):
    code, rows, _ = run(["estimate", "--matrix", str(id100), "--method", method], capsys)
    assert code == 0 and rows[1][0] == method
    assert abs(float(rows[1][ESTIMATE_HEADER.index("estimate")])) < 1e-10


def test_estimate_lattice(capsys):
    code, rows, _ = run(["estimate", "--lattice", "8x8", "--exact"], capsys)
    assert code == 0
    assert float(rows[1][ESTIMATE_HEADER.index("relative_error")]) < 0.05


def test_missing_file_exit_2(tmp_path, capsys):
    code, _, err = run(["estimate", "--matrix", str(tmp_path / "nope.mtx")], capsys)
    assert code == 2 and "error" in err


def test_malformed_file_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.mtx"
    p.write_text("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 1 oops\n")
    code, _, err = run(["estimate", "--matrix", str(p)], capsys)
    assert code == 2 and "line 3" in err


def test_two_sources_exit_2(id100, capsys):
    code, _, _ = run(["estimate", "--matrix", str(id100), "--synthetic", "n=10"], capsys)
    assert code == 2


def test_bad_synthetic_spec_exit_2(capsys):
    assert run(["estimate", "--synthetic", "m=10"], capsys)[0] == 2
    assert run(["estimate", "--lattice", "8by8"], capsys)[0] == 2


def test_not_pd_exit_3(tmp_path, capsys):
    p = tmp_path / "indef.mtx"
    write_matrix_market(SparseSymMatrix.diagonal_matrix([1.0, -2.0, 3.0]), p)
    code, _, err = run(["estimate", "--matrix", str(p), "--method", "exact"], capsys)
    assert code == 3 and "pivot 1" in err


def test_compare(capsys):
    code, rows, _ = run(["compare", "--synthetic", "n=120", "--budgets", "5,10", "--probes", "8"], capsys)
    assert code == 0 and rows[0] == COMPARE_HEADER
    body = rows[1:]
    assert len(body) == 6
    assert {r[0] for r in body} == {"maxent", "taylor", "chebyshev"}
    for r in body:
        rec = dict(zip(COMPARE_HEADER, r))
        assert int(rec["matvecs"]) == int(rec["k"]) * 8
        assert float(rec["relative_error"]) >= 0


def test_sweep_n(capsys):
    code, rows, _ = run(["sweep-n", "--sizes", "40,80", "--repeats", "4", "--probes", "5"], capsys)
    assert code == 0 and rows[0] == SWEEP_N_HEADER
    assert [r[0] for r in rows[1:]] == ["40", "80"]
    for r in rows[1:]:
        p = [float(v) for v in r[2:]]
        assert p == sorted(p)


def test_gmrf_bench_with_nugget(capsys):
    code, rows, _ = run(["gmrf-bench", "--sides", "8,12", "--nugget", "0.1"], capsys)
    assert code == 0 and rows[0] == GMRF_BENCH_HEADER
    assert len(rows) == 1 + 2 * 2 * 2
    assert {r[2] for r in rows[1:]} == {"cholesky", "maxent"}
    assert {r[3] for r in rows[1:]} == {"0.0", "0.1"}


def test_gmrf_sweep(capsys):
    code, rows, _ = run(["gmrf-sweep", "--lattice", "10x10", "--grid", "0.05,0.1,0.2"], capsys)
    assert code == 0 and rows[0] == GMRF_SWEEP_HEADER
    assert [r[1] for r in rows[1:]] == ["0.05", "0.1", "0.2"]
    for r in rows[1:]:
        assert float(r[4]) == pytest.approx(float(r[3]) - float(r[2]))


def test_gmrf_sweep_tau(capsys):
    code, rows, _ = run(["gmrf-sweep", "--lattice", "6x6", "--param", "tau", "--grid", "0.5,1.0"], capsys)
    assert code == 0 and {r[0] for r in rows[1:]} == {"tau"}


def test_out_file(tmp_path, id100, capsys):
    out = tmp_path / "res.csv"
    assert main(["estimate", "--matrix", str(id100), "--out", str(out)]) == 0
    assert capsys.readouterr().out == ""
    assert out.read_text().splitlines()[0] == ",".join(ESTIMATE_HEADER)


def _cli(args, env_threads):
    import os

    env = dict(os.environ, ENTLOGDET_THREADS=str(env_threads))
    return subprocess.run(
        [sys.executable, "-m", "entlogdet.cli", *args], capture_output=True, env=env, check=True
    ).stdout


@pytest.mark.parametrize(
    "args",
    [
        ["compare", "--synthetic", "n=80", "--budgets", "5,10", "--omit-timing"],
        ["sweep-n", "--sizes", "30,60", "--repeats", "3", "--omit-timing"],
        ["gmrf-sweep", "--lattice", "8x8", "--grid", "0.1,0.2", "--omit-timing"],
    ],
)
def test_byte_identical_across_runs_and_threads(args):
    first = _cli(args, 1)
    assert first == _cli(args, 1)
    assert first == _cli(args, 3)


def test_derived_seed_depends_only_on_keys():
    assert derived_seed(0, 100, 3) == derived_seed(0, 100, 3)
    assert derived_seed(0, 100, 3) != derived_seed(0, 100, 4)
