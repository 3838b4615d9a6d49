import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualnews.evaluation import (
    ConfusionCounts, auc, auc_pairwise, build_report, confusion, metrics, roc, write_report, write_roc_csv,
)
from tests.oracles import recount


def test_metrics_worked_example():
    m = metrics(ConfusionCounts(tp=3, fp=1, tn=4, fn=2))
    assert m["accuracy"] == pytest.approx(0.7)
    assert m["precision"] == pytest.approx(0.75)
    assert m["recall"] == pytest.approx(0.6)
    assert m["f1"] == pytest.approx(2 / 3)
    assert not m["degenerate"]


def test_no_predicted_positives_is_degenerate():
    m = metrics(ConfusionCounts(tp=0, fp=0, tn=5, fn=5))
    assert m["precision"] == 0.0 and m["f1"] == 0.0
    assert m["degenerate"]


def test_empty_counts_rejected():
    with pytest.raises(ValueError):
        metrics(ConfusionCounts())


def test_threshold_is_inclusive_and_strings_accepted():
    c = confusion([0.5, 0.49], ["fake", "real"])
    assert c == ConfusionCounts(tp=1, fp=0, tn=1, fn=0)


def test_auc_fixture_exact():
    scores, labels = [0.9, 0.4, 0.6, 0.2], ["fake", "fake", "real", "real"]
    assert auc(roc(scores, labels)) == 0.75
    assert auc_pairwise(scores, labels) == 0.75


def test_roc_shape():
    curve = roc([0.9, 0.9, 0.1], [1, 0, 0])
    assert math.isinf(curve[0].threshold) and (curve[0].fpr, curve[0].tpr) == (0.0, 0.0)
    assert (curve[-1].fpr, curve[-1].tpr) == (1.0, 1.0)
    assert len(curve) == 3  # inf + two distinct scores


def test_roc_needs_both_classes():
    with pytest.raises(ValueError):
        roc([0.1, 0.2], [1, 1])


def test_ties_count_half():
    assert auc_pairwise([0.5, 0.5], [1, 0]) == 0.5
    assert auc(roc([0.5, 0.5], [1, 0])) == 0.5


@st.composite
def prediction_sets(draw):
    n = draw(st.integers(2, 60))
    labels = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    grid = draw(st.booleans())
    elem = st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]) if grid else st.floats(0, 1)
    scores = draw(st.lists(elem, min_size=n, max_size=n))
    return scores, labels


@settings(max_examples=200, deadline=None)
@given(prediction_sets())
def test_metrics_match_recount(data):
    scores, labels = data
    (tp, fp, tn, fn), expected = recount(scores, labels)
    c = confusion(scores, labels)
    assert (c.tp, c.fp, c.tn, c.fn) == (tp, fp, tn, fn)
    m = metrics(c)
    assert (m["accuracy"], m["precision"], m["recall"], m["f1"]) == expected


@settings(max_examples=200, deadline=None)
@given(prediction_sets())
def test_trapezoid_matches_pairwise(data):
    scores, labels = data
    if len(set(labels)) < 2:
        return
    curve = roc(scores, labels)
    assert abs(auc(curve) - auc_pairwise(scores, labels)) < 1e-9
    fprs = [p.fpr for p in curve]
    tprs = [p.tpr for p in curve]
    assert fprs == sorted(fprs) and tprs == sorted(tprs)


def test_report_files(tmp_path):
    report, curve = build_report("dual", [0.9, 0.4, 0.6, 0.2], [1, 1, 0, 0])
    write_report(tmp_path / "r.json", report)
    write_roc_csv(tmp_path / "roc.csv", curve)
    data = json.loads((tmp_path / "r.json").read_text())
    assert {"accuracy", "precision", "recall", "f1", "auc"} <= set(data)
    assert data["model"] == "dual" and data["auc"] == 0.75
    rows = list(csv.reader((tmp_path / "roc.csv").open()))
    assert rows[0] == ["threshold", "fpr", "tpr"]
    assert rows[1] == ["inf", "0.0", "0.0"]
    assert rows[-1][1:] == ["1.0", "1.0"]


def test_single_class_report_has_no_auc():
    report, curve = build_report("x", [0.9, 0.8], [1, 1])
    assert report.auc is None and report.degenerate and curve == []
    json.dumps(report.to_dict(), allow_nan=False)
