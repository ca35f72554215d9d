import math

import pytest

from footprint.errors import ParameterError
from footprint.ingest import TRAITS
from footprint.metrics import AccuracyScore, metric_for
from footprint.report import (
    EvalReport, emit_report, read_report_csv, render_comparison, render_report,
)


def scores(offset=0.0):
    # deliberately out of table order
    names = list(reversed(TRAITS))
    return [AccuracyScore(t, metric_for(t), 0.1 * i + offset) for i, t in enumerate(names)]


def test_text_report_rows_in_table_order():
    rep = EvalReport.from_scores("regression", 50, "folds=10", scores())
    lines = render_report(rep, "text").splitlines()
    trait_rows = lines[3:11]
    assert [ln.split()[-3] for ln in trait_rows] == list(TRAITS)
    assert lines[11].split()[0] == "Mean" and len(lines) == 12


def test_mean_is_arithmetic_mean():
    rep = EvalReport.from_scores("snn", 50, "", scores(0.013))
    assert abs(rep.mean - math.fsum(s.value for s in scores(0.013)) / 8) <= 1e-12


def test_percentages_two_decimals():
    rep = EvalReport.from_scores("regression", 50, "", [AccuracyScore("gender", "auc", 0.93654)])
    assert "93.65%" in render_report(rep)
    assert ",93.65," in render_report(rep, "csv")


def test_csv_roundtrip_and_flags():
    rep = EvalReport.from_scores("dnn3", 10, "hidden=4", scores(), stage="train-nn", config_hash="abc",
                                 flags=["overfitting: x"])
    back = read_report_csv(render_report(rep, "csv"))
    assert back.flags == ["overfitting: x"] and back.config_hash == "abc"
    assert sorted(back.rows, key=lambda r: r.trait) == sorted(rep.rows, key=lambda r: r.trait)
    assert "WARNING: overfitting: x" in render_report(rep)


def test_emit_twice_byte_identical(tmp_path):
    rep = EvalReport.from_scores("regression", 50, "", scores())
    emit_report(rep, tmp_path / "a.txt")
    emit_report(rep, tmp_path / "b.txt")
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


def test_emit_unwritable(tmp_path):
    rep = EvalReport.from_scores("regression", 50, "", scores())
    with pytest.raises(OSError):
        emit_report(rep, tmp_path / "missing_dir" / "r.txt")


def test_empty_and_bad_inputs():
    with pytest.raises(ParameterError):
        render_report(EvalReport([]))
    with pytest.raises(ParameterError):
        EvalReport.from_scores("svm", 5, "", scores())
    with pytest.raises(ParameterError):
        render_report(EvalReport.from_scores("snn", 5, "", scores()), "xml")


def test_comparison_layout():
    a = EvalReport.from_scores("regression", 50, "", scores(), stage="regress", config_hash="h1")
    b = EvalReport.from_scores("snn", 50, "", scores(0.05), stage="train-nn", config_hash="h2")
    csv_text = render_comparison([a, b], "csv")
    lines = csv_text.splitlines()
    assert lines[0].startswith("trait,variable,regression K=50,snn K=50")
    assert [ln.split(",")[1] for ln in lines[1:9]] == list(TRAITS)
    assert lines[9].startswith("Mean,")
    assert lines[-1] == "config_hash,,h1,h2"
    assert "(stage regress, config h1)" in render_comparison([a, b])
