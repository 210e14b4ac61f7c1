import numpy as np
import pytest

from gridadvice.bench import (
    BenchReport,
    BenchRow,
    MissingModelError,
    run_benchmark,
    write_report,
)
from gridadvice.cli import main


@pytest.fixture(scope="module")
def small_report():
    return run_benchmark(domains=("taxi",), sizes=(10,), runs=2, seed=1,
                         lime_budgets={10: 50})


def test_row_layout(small_report):
    assert len(small_report.rows) == 2  # one per explainer
    explainers = {r.explainer for r in small_report.rows}
    assert explainers == {"composed", "baseline"}
    assert small_report.errors == []


def test_sizes_are_deterministic(small_report):
    again = run_benchmark(domains=("taxi",), sizes=(10,), runs=2, seed=99,
                          lime_budgets={10: 50})
    by_key = {(r.domain, r.grid_size, r.explainer): r.size for r in again.rows}
    for r in small_report.rows:
        assert by_key[(r.domain, r.grid_size, r.explainer)] == r.size


def test_expected_sizes(small_report):
    by_explainer = {r.explainer: r.size for r in small_report.rows}
    assert by_explainer["composed"] == 240
    assert by_explainer["baseline"] == 713


def test_csv_round_trip(small_report, tmp_path):
    out = tmp_path / "report.csv"
    write_report(small_report, out)
    twin = BenchReport.from_csv(out.read_text())
    assert twin.rows == small_report.rows
    assert out.with_suffix(".json").exists()


def test_missing_model_error(tmp_path):
    with pytest.raises(MissingModelError, match="checkpoint not found"):
        run_benchmark(domains=("taxi",), sizes=(10,), runs=1, model_dir=tmp_path)


def test_table_rendering(small_report):
    table = small_report.table()
    assert "taxi" in table and "composed" in table


def test_cli_bench_exit_code(tmp_path, capsys):
    code = main([
        "bench", "--domains", "taxi", "--sizes", "10", "--runs", "1",
        "--seed", "0", "--out", str(tmp_path / "r.csv"),
    ])
    assert code == 0
    assert (tmp_path / "r.csv").exists()
    out = capsys.readouterr().out
    assert "composed" in out


def test_cli_bench_rejects_unknown_domain(tmp_path):
    assert main(["bench", "--domains", "submarine", "--sizes", "10",
                 "--out", str(tmp_path / "r.csv")]) == 2


def test_cli_explain(tmp_path):
    code = main([
        "explain", "--domain", "wildfire", "--size", "10", "--seed", "3",
        "--out", str(tmp_path / "exp"),
    ])
    assert code == 0
    svg = (tmp_path / "exp.svg").read_text()
    assert svg.startswith("<svg")
    assert (tmp_path / "exp.json").exists()
