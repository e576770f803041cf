import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mammopos.decision import ADEQUATE, INADEQUATE, INDETERMINATE
from mammopos.evaluation import (ConfusionMatrix, EvaluationError, confusion, detection_rate,
                                 endpoint_errors, percent, write_histogram_csv, write_metrics,
                                 write_metrics_csv)
from mammopos.predictor import EndpointVector


def ev(*v):
    return EndpointVector(tuple(float(x) for x in v))


BASE = ev(10, 0, 0, 100, 50, 50, 5, 40)


def test_identical_vectors_have_zero_error():
    res = endpoint_errors([BASE, BASE], [BASE, BASE])
    assert res.errors.shape == (2, 4)
    assert not res.errors.any()
    assert res.mean == 0.0


def test_three_four_five():
    shifted = ev(13, 4, 0, 100, 50, 50, 5, 40)
    res = endpoint_errors([shifted], [BASE])
    assert res.errors[0].tolist() == [5.0, 0.0, 0.0, 0.0]
    s = res.per_endpoint()["pec_p0"]
    assert s.mean == 5.0 and s.max == 5.0
    assert res.overall().median == 0.0


def test_endpoint_error_errors():
    with pytest.raises(EvaluationError):
        endpoint_errors([BASE], [BASE, BASE])
    with pytest.raises(EvaluationError):
        endpoint_errors([], [])


def test_error_summary_percentiles():
    preds = [ev(10 + k, 0, 0, 100, 50, 50, 5, 40) for k in range(101)]
    s = endpoint_errors(preds, [BASE] * 101).per_endpoint()["pec_p0"]
    assert s.percentiles == {5: 5.0, 25: 25.0, 50: 50.0, 75: 75.0, 95: 95.0}
    assert s.mean == 50.0 and s.median == 50.0


def test_histogram_csv(tmp_path):
    preds = [ev(13, 4, 0, 100, 50, 50, 5, 40), BASE]
    p = tmp_path / "h.csv"
    write_histogram_csv(endpoint_errors(preds, [BASE, BASE]), p, bin_width=2.0)
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["bin_lo", "bin_hi", "pec_p0", "pec_p1", "pnl_p0", "pnl_p1"]
    counts = np.array([[int(c) for c in r[2:]] for r in rows[1:]])
    assert counts.sum(axis=0).tolist() == [2, 2, 2, 2]
    assert rows[3][:3] == ["4.0", "6.0", "1"]


# -- confusion ---------------------------------------------------------------------

def test_reference_confusion_counts():
    cm = ConfusionMatrix(243, 23, 36, 30)
    assert percent(cm.tpr) == 91.35
    assert percent(cm.tnr) == 45.45
    assert cm.total == 332


def test_cc_reference_counts():
    assert percent(ConfusionMatrix(214, 11, 0, 0).tpr) == 95.11


def test_all_correct():
    labels = [ADEQUATE] * 6 + [INADEQUATE] * 4
    cm = confusion(labels, labels)
    assert (cm.tp, cm.fn, cm.fp, cm.tn) == (6, 0, 0, 4)
    assert cm.tpr == 1.0 and cm.tnr == 1.0


def test_confusion_counts_and_exclusions():
    d = [ADEQUATE, INADEQUATE, ADEQUATE, INADEQUATE, INDETERMINATE, ADEQUATE]
    y = [ADEQUATE, ADEQUATE, INADEQUATE, INADEQUATE, ADEQUATE, INDETERMINATE]
    cm = confusion(d, y)
    assert (cm.tp, cm.fn, cm.fp, cm.tn, cm.excluded) == (1, 1, 1, 1, 2)


def test_confusion_errors():
    with pytest.raises(EvaluationError):
        confusion([ADEQUATE], [])
    with pytest.raises(EvaluationError):
        confusion(["Maybe"], [ADEQUATE])
    with pytest.raises(EvaluationError):
        ConfusionMatrix(-1, 0, 0, 0)


def test_empty_class_rate_is_nan():
    assert math.isnan(ConfusionMatrix(0, 0, 3, 4).tpr)


verdicts = st.sampled_from([ADEQUATE, INADEQUATE, INDETERMINATE])


@given(st.lists(st.tuples(verdicts, verdicts), max_size=40), st.randoms())
def test_confusion_sums_and_permutation(pairs, rnd):
    d = [p[0] for p in pairs]
    y = [p[1] for p in pairs]
    cm = confusion(d, y)
    assert cm.total + cm.excluded == len(pairs)
    shuffled = pairs[:]
    rnd.shuffle(shuffled)
    assert confusion([p[0] for p in shuffled], [p[1] for p in shuffled]) == cm


# -- detection rate ----------------------------------------------------------------

def test_detection_rate_examples():
    assert percent(detection_rate(225, 266)) == 84.59
    assert detection_rate(0, 7) == 0.0
    assert percent(detection_rate(199, 200)) == 99.5


def test_detection_rate_errors():
    with pytest.raises(EvaluationError):
        detection_rate(0, 0)
    with pytest.raises(EvaluationError):
        detection_rate(5, 4)


# -- writers -----------------------------------------------------------------------

def test_metrics_files(tmp_path):
    mats = {"mlo": ConfusionMatrix(243, 23, 36, 30), "cc": ConfusionMatrix(214, 11, 0, 0)}
    write_metrics(tmp_path / "m.txt", mats, {"bb_detection": (225, 266)}, {"cases": 332})
    text = (tmp_path / "m.txt").read_text()
    assert "TPR = 91.35%" in text and "TNR = 45.45%" in text
    assert "bb_detection = 225/266 = 84.59%" in text
    assert "TNR = nan" in text
    assert text.endswith("cases = 332\n")
    write_metrics_csv(tmp_path / "m.csv", mats)
    rows = list(csv.DictReader((tmp_path / "m.csv").open()))
    assert rows[0]["tpr_pct"] == "91.35" and rows[1]["tpr_pct"] == "95.11"
