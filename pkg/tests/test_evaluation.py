import math

import numpy as np
import pytest

from stratify import evaluation as ev
from stratify.errors import EvaluationError

import oracles


def test_confusion_hand_count():
    cm = ev.confusion([1, 1, 0, 0], [1, 0, 0, 1])
    assert (cm.tp, cm.fn, cm.tn, cm.fp) == (1, 1, 1, 1)


def test_confusion_perfect_and_errors():
    cm = ev.confusion([1, 0, 1], [1, 0, 1])
    assert cm.fp == 0 and cm.fn == 0
    with pytest.raises(EvaluationError):
        ev.confusion([], [])
    with pytest.raises(EvaluationError):
        ev.confusion([1, 0], [1])
    with pytest.raises(EvaluationError):
        ev.confusion([1, 2], [1, 0])


def test_metric_set_hand_arithmetic():
    m = ev.metric_set(ev.ConfusionMatrix(tp=3, fp=1, fn=2, tn=4))
    assert m.accuracy == pytest.approx(0.7)
    assert m.precision == pytest.approx(0.75)
    assert m.recall == pytest.approx(0.6)
    assert m.f1 == pytest.approx(2 * 0.45 / 1.35)
    assert m.undefined == ()


def test_metric_set_degenerate_flags():
    m = ev.metric_set(ev.ConfusionMatrix(tp=0, fp=0, fn=0, tn=5))
    assert m.accuracy == 1.0
    assert set(m.undefined) >= {"precision", "recall", "f1"}
    assert m.precision == 0.0 and m.recall == 0.0


def test_metric_set_perfect():
    m = ev.metric_set(ev.ConfusionMatrix(tp=4, fp=0, fn=0, tn=6))
    assert (m.accuracy, m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0, 1.0)


def test_weighted_recall_equals_accuracy_randomized(rng):
    for _ in range(300):
        tp, fp, fn, tn = [int(v) for v in rng.integers(0, 40, 4)]
        if tp + fp + fn + tn == 0:
            continue
        cm = ev.ConfusionMatrix(tp, fp, fn, tn)
        w = ev.weighted_metric_set(cm)
        assert w.recall == pytest.approx(w.accuracy, abs=1e-12)


def test_weighted_symmetric_cm_precision_equals_recall():
    cm = ev.ConfusionMatrix(tp=6, fp=2, fn=2, tn=6)
    w = ev.weighted_metric_set(cm)
    assert w.precision == pytest.approx(w.recall, abs=1e-12)


def test_weighted_perfect():
    w = ev.weighted_metric_set(ev.ConfusionMatrix(5, 0, 0, 5))
    assert (w.accuracy, w.precision, w.recall, w.f1) == (1.0, 1.0, 1.0, 1.0)


def test_roc_auc_examples():
    assert ev.roc_auc([1, 1, 0, 0], [0.9, 0.8, 0.2, 0.1]).auc == pytest.approx(1.0)
    assert ev.roc_auc([1, 1, 0, 0], [0.1, 0.2, 0.8, 0.9]).auc == pytest.approx(0.0)
    assert ev.roc_auc([1, 0, 1, 0], [0.9, 0.8, 0.8, 0.1]).auc == pytest.approx(0.875)


def test_roc_curve_shape_and_monotonicity(rng):
    for _ in range(30):
        n = int(rng.integers(4, 50))
        y = rng.integers(0, 2, n)
        y[0], y[1] = 0, 1
        s = np.round(rng.random(n), 2)  # coarse scores force ties
        roc = ev.roc_auc(y, s)
        assert roc.fpr[0] == 0.0 and roc.tpr[0] == 0.0
        assert roc.fpr[-1] == 1.0 and roc.tpr[-1] == 1.0
        assert np.all(np.diff(roc.fpr) >= 0) and np.all(np.diff(roc.tpr) >= 0)


def test_auc_matches_pair_counting(rng):
    for _ in range(100):
        n = int(rng.integers(4, 50))
        y = rng.integers(0, 2, n)
        y[0], y[1] = 0, 1
        s = np.round(rng.random(n), 1)
        got = ev.roc_auc(y, s).auc
        want = oracles.mann_whitney_auc(y.tolist(), s.tolist())
        assert abs(got - want) <= 1e-12


def test_auc_invariant_under_monotone_transform(rng):
    y = rng.integers(0, 2, 30)
    y[0], y[1] = 0, 1
    s = rng.random(30)
    base = ev.roc_auc(y, s).auc
    assert ev.roc_auc(y, 1 / (1 + np.exp(-7 * s + 2))).auc == pytest.approx(base, abs=1e-12)
    assert ev.roc_auc(y, s ** 3).auc == pytest.approx(base, abs=1e-12)


def test_roc_single_class_errors():
    with pytest.raises(EvaluationError):
        ev.roc_auc([1, 1], [0.2, 0.4])


def test_bootstrap_trivial_distributions():
    y = np.array([1, 1, 0, 0, 0])
    perfect = ev.bootstrap_rate_distributions(y, y, 200, seed=0)
    assert np.all(perfect.tpr_samples == 1.0) and np.all(perfect.fpr_samples == 0.0)
    nothing = ev.bootstrap_rate_distributions(y, np.zeros(5, dtype=int), 50, seed=0)
    assert np.all(nothing.tpr_samples == 0.0)


def test_bootstrap_deterministic_and_summary():
    y = np.array([1, 0, 1, 0, 1, 0, 1, 1])
    pred = np.array([1, 0, 0, 0, 1, 1, 1, 1])
    a = ev.bootstrap_rate_distributions(y, pred, 100, seed=5)
    b = ev.bootstrap_rate_distributions(y, pred, 100, seed=5)
    assert a.fpr_samples.tobytes() == b.fpr_samples.tobytes()
    assert set(a.summary) == {"fpr", "tpr"}
    assert 0.0 <= a.summary["tpr"]["q1"] <= a.summary["tpr"]["median"] \
           <= a.summary["tpr"]["q3"] <= 1.0


def test_bootstrap_concentrates_around_point_estimate():
    rng = np.random.default_rng(3)
    y = rng.integers(0, 2, 400)
    pred = np.where(rng.random(400) < 0.8, y, 1 - y)
    dist = ev.bootstrap_rate_distributions(y, pred, 2000, seed=1)
    cm = ev.confusion(y, pred)
    point_tpr = cm.tp / (cm.tp + cm.fn)
    se = dist.tpr_samples.std() / math.sqrt(len(dist.tpr_samples))
    assert abs(dist.tpr_samples.mean() - point_tpr) <= 3 * se + 1e-9


def test_bootstrap_requires_both_classes():
    with pytest.raises(EvaluationError):
        ev.bootstrap_rate_distributions(np.ones(5, dtype=int), np.ones(5, dtype=int), 10, 0)


def test_chi_square_examples():
    flat = ev.ContingencyTable2x2(10, 10, 10, 10)
    chi2, df, p = ev.chi_square_2x2(flat)
    assert chi2 == 0.0 and df == 1 and p == pytest.approx(1.0)

    chi2, _, p = ev.chi_square_2x2(ev.ContingencyTable2x2(20, 10, 10, 20))
    assert chi2 == pytest.approx(60 * 300 ** 2 / 30 ** 4)
    assert chi2 == pytest.approx(6.6667, abs=1e-4)
    assert 0.0 < p < 0.05


def test_chi_square_yates_and_errors():
    t = ev.ContingencyTable2x2(20, 10, 10, 20)
    plain, _, _ = ev.chi_square_2x2(t)
    corrected, _, _ = ev.chi_square_2x2(t, yates=True)
    assert corrected < plain
    with pytest.raises(EvaluationError):
        ev.chi_square_2x2(ev.ContingencyTable2x2(0, 0, 5, 5))


def test_chi_square_p_matches_erfc_identity(rng):
    for chi2 in (0.5, 1.0, 3.84, 10.0):
        t = None
        p = math.erfc(math.sqrt(chi2 / 2))
        # survival function of chi2(1) evaluated through the normal tail
        z = math.sqrt(chi2)
        p2 = 2 * (1 - 0.5 * (1 + math.erf(z / math.sqrt(2))))
        assert p == pytest.approx(p2, abs=1e-12)


def test_cramers_v_paper_anchors():
    assert ev.cramers_v(23.42, 92722, 2, 2) == pytest.approx(0.016, abs=0.001)
    assert ev.cramers_v(75.66, 92722, 2, 2) == pytest.approx(0.029, abs=0.001)
    assert ev.cramers_v(0.0, 100, 2, 2) == 0.0


def test_cramers_v_guards():
    with pytest.raises(EvaluationError):
        ev.cramers_v(1.0, 0, 2, 2)
    with pytest.raises(EvaluationError):
        ev.cramers_v(1.0, 10, 1, 5)
