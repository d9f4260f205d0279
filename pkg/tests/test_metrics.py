import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from fundcat import metrics as M


def onehot_scores(y_pred, C):
    s = np.zeros((len(y_pred), C))
    s[np.arange(len(y_pred)), y_pred] = 1.0
    return s


def random_instance(rng, n=None, C=None):
    C = C or int(rng.integers(2, 7))
    n = n or int(rng.integers(2, 51))
    y = rng.integers(0, C, n)
    raw = rng.random((n, C))
    # Coarse scores give plenty of ties.
    raw = np.round(raw, 1) + 1e-3
    return y, raw / raw.sum(axis=1, keepdims=True)


@st.composite
def instances(draw):
    C = draw(st.integers(2, 6))
    n = draw(st.integers(2, 50))
    y = np.array(draw(st.lists(st.integers(0, C - 1), min_size=n, max_size=n)))
    raw = np.array(draw(st.lists(st.integers(1, 5), min_size=n * C, max_size=n * C)), dtype=float)
    raw = raw.reshape(n, C)
    return y, raw / raw.sum(axis=1, keepdims=True)


# -- hand-worked values -------------------------------------------------------

def test_confusion_small_example():
    cm = M.confusion(M.PredictionSet([0, 1, 1], onehot_scores([0, 1, 0], 2)))
    assert cm.counts.tolist() == [[1, 0], [1, 1]]
    assert cm.normalized.tolist() == [[1.0, 0.0], [0.5, 0.5]]


def test_zero_support_row_stays_zero():
    cm = M.confusion(M.PredictionSet([0, 0], onehot_scores([0, 2], 3)))
    assert cm.normalized[1].tolist() == [0.0, 0.0, 0.0]
    assert cm.normalized[2].tolist() == [0.0, 0.0, 0.0]


def test_accuracy_examples():
    pred = M.PredictionSet([0, 0, 1, 1], onehot_scores([0, 1, 1, 1], 2))
    assert M.accuracy_scores(pred) == (0.75, 0.75)
    y = [0] * 90 + [1] * 10
    pred = M.PredictionSet(y, onehot_scores([0] * 100, 2))
    acc, bal = M.accuracy_scores(pred)
    assert acc == pytest.approx(0.9, abs=1e-15) and bal == 0.5


def test_f1_example():
    pred = M.PredictionSet([0, 0, 1, 1], onehot_scores([0, 1, 1, 1], 2))
    micro, macro, weighted, stats = M.f1_scores(pred)
    assert stats.f1 == pytest.approx([2 / 3, 4 / 5], abs=1e-15)
    assert macro == pytest.approx(0.7333333333333333, abs=1e-12)
    assert weighted == pytest.approx(0.7333333333333333, abs=1e-12)
    assert micro == 0.75


def test_recall_undefined_without_support():
    pred = M.PredictionSet([0, 0, 1], onehot_scores([0, 2, 1], 3))
    stats = M.per_class_stats(pred)
    assert math.isnan(stats.recall[2]) and math.isnan(stats.f1[2])
    assert stats.precision[2] == 0.0
    _, macro, _, _ = M.f1_scores(pred)
    assert macro == pytest.approx((2 / 3 + 1.0) / 2)


def test_roc_examples():
    assert M.roc_curve([1, 0, 1, 0], [0.9, 0.8, 0.7, 0.1]).auc == 0.75
    assert M.roc_curve([1, 1, 0, 0], [0.9, 0.8, 0.2, 0.1]).auc == 1.0
    assert M.roc_curve([0, 0, 1, 1], [0.9, 0.8, 0.2, 0.1]).auc == 0.0


def test_roc_ties_form_one_step():
    r = M.roc_curve([1, 0, 1, 0], [0.5, 0.5, 0.5, 0.5])
    assert r.fpr.tolist() == [0.0, 1.0] and r.tpr.tolist() == [0.0, 1.0]
    assert r.auc == 0.5


def test_roc_undefined():
    with pytest.raises(ValueError, match="undefined ROC"):
        M.roc_curve([1, 1], [0.2, 0.3])


def test_two_category_macro_auc_equals_either_side(rng):
    y = rng.integers(0, 2, 40)
    p = rng.random(40)
    s = np.column_stack([p, 1 - p])
    summary = M.aggregate_roc(M.PredictionSet(y, s))
    assert summary.auc_macro == pytest.approx(summary.per_class[0].auc, abs=1e-15)
    assert summary.per_class[0].auc == pytest.approx(summary.per_class[1].auc, abs=1e-15)


def test_perfect_predictions():
    y = [0, 1, 2, 2, 1]
    rep = M.evaluate(y, onehot_scores(y, 3))
    assert rep.accuracy == rep.balanced_accuracy == 1.0
    assert rep.f1_micro == rep.f1_macro == rep.f1_weighted == 1.0
    assert rep.auc_micro == rep.auc_macro == 1.0


def test_unsupported_category_skipped_in_roc():
    y = [0, 1, 0, 1]
    s = np.array([[0.6, 0.3, 0.1], [0.2, 0.7, 0.1], [0.5, 0.4, 0.1], [0.3, 0.5, 0.2]])
    summary = M.aggregate_roc(M.PredictionSet(y, s))
    assert summary.skipped == (2,)
    assert summary.per_class[2] is None


def test_top_k_examples():
    y = [0, 1, 2]
    s = np.array([[0.5, 0.3, 0.2], [0.5, 0.3, 0.2], [0.5, 0.3, 0.2]])
    pred = M.PredictionSet(y, s)
    assert M.top_k_accuracy(pred, 1) == pytest.approx(1 / 3)
    assert M.top_k_accuracy(pred, 2) == pytest.approx(2 / 3)
    assert M.top_k_accuracy(pred, 3) == 1.0
    with pytest.raises(ValueError):
        M.top_k_accuracy(pred, 4)


def test_top_k_ties_go_to_lowest_index():
    s = np.array([[0.25, 0.25, 0.25, 0.25]])
    assert M.top_k_accuracy(M.PredictionSet([1], s), 1) == 0.0
    assert M.top_k_accuracy(M.PredictionSet([1], s), 2) == 1.0
    assert M.ranked_categories(s).tolist() == [[0, 1, 2, 3]]


def test_prediction_set_validation():
    with pytest.raises(ValueError, match="sum to 1"):
        M.PredictionSet([0], np.array([[0.5, 0.4]]))
    with pytest.raises(ValueError, match="out of range"):
        M.PredictionSet([2], np.array([[0.5, 0.5]]))


def test_score_predictions_names():
    y = [0, 0, 1, 1]
    s = onehot_scores([0, 1, 1, 1], 2)
    assert M.score_predictions("accuracy", y, s) == 0.75
    assert M.score_predictions("f1_macro", y, s) == pytest.approx(11 / 15)
    with pytest.raises(ValueError, match="unknown score"):
        M.score_predictions("auc", y, s)


def test_report_scalars_in_unit_interval(rng):
    y, s = random_instance(rng, n=40, C=4)
    rep = M.evaluate(y, s)
    for k, v in rep.scalars().items():
        if isinstance(v, float):
            assert 0.0 <= v <= 1.0, k


# -- oracle equivalence -------------------------------------------------------

@settings(max_examples=150, deadline=None)
@given(instances())
def test_matches_bruteforce_oracle(inst):
    y, s = inst
    C = s.shape[1]
    rep = M.evaluate(y, s)
    y_pred = [oracles.argmax_low(row) for row in s.tolist()]
    assert rep.confusion.counts.tolist() == oracles.confusion_counts(y.tolist(), y_pred, C)
    micro, macro, weighted = oracles.f1_family(y.tolist(), y_pred, C)
    assert rep.f1_micro == pytest.approx(micro, abs=1e-9)
    assert rep.f1_macro == pytest.approx(macro, abs=1e-9)
    assert rep.f1_weighted == pytest.approx(weighted, abs=1e-9)
    assert rep.balanced_accuracy == pytest.approx(oracles.balanced_accuracy(y.tolist(), y_pred, C), abs=1e-9)
    aucs = []
    for c in range(C):
        lab = (y == c).tolist()
        if 0 < sum(lab) < len(lab):
            a = float(oracles.pairwise_auc(lab, s[:, c].tolist()))
            assert rep.roc.per_class[c].auc == pytest.approx(a, abs=1e-12)
            aucs.append(a)
    if aucs:
        assert rep.auc_macro == pytest.approx(sum(aucs) / len(aucs), abs=1e-12)
    truth = np.zeros_like(s, dtype=bool)
    truth[np.arange(len(y)), y] = True
    assert rep.auc_micro == pytest.approx(float(oracles.pairwise_auc(truth.ravel().tolist(), s.ravel().tolist())),
                                          abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(instances())
def test_micro_f1_equals_accuracy_exactly(inst):
    y, s = inst
    rep = M.evaluate(y, s)
    assert rep.f1_micro == rep.accuracy


@settings(max_examples=100, deadline=None)
@given(instances())
def test_trapezoid_area_matches_stored_auc(inst):
    y, s = inst
    for c in range(s.shape[1]):
        lab = y == c
        if 0 < lab.sum() < lab.size:
            r = M.roc_curve(lab, s[:, c])
            area = float(np.sum(np.diff(r.fpr) * (r.tpr[1:] + r.tpr[:-1]) / 2))
            assert r.auc == pytest.approx(area, abs=1e-12)
            assert r.fpr[0] == r.tpr[0] == 0.0 and r.fpr[-1] == r.tpr[-1] == 1.0
            assert np.all(np.diff(r.fpr) >= 0) and np.all(np.diff(r.tpr) >= 0)
            assert np.all(np.diff(r.thresholds) < 0)


@settings(max_examples=100, deadline=None)
@given(instances())
def test_confusion_and_balanced_identities(inst):
    y, s = inst
    rep = M.evaluate(y, s)
    cm = rep.confusion
    assert cm.counts.sum() == len(y)
    assert np.trace(cm.counts) / len(y) == pytest.approx(rep.accuracy, abs=1e-15)
    supported = cm.counts.sum(axis=1) > 0
    assert rep.balanced_accuracy == pytest.approx(np.mean(np.diag(cm.normalized)[supported]), abs=1e-12)
    for row, ok in zip(cm.normalized, supported):
        assert row.sum() == pytest.approx(1.0 if ok else 0.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(instances())
def test_top_k_monotone_and_consistent(inst):
    y, s = inst
    pred = M.PredictionSet(y, s)
    vals = [M.top_k_accuracy(pred, k) for k in range(1, s.shape[1] + 1)]
    assert vals[0] == M.accuracy_scores(pred)[0]
    assert vals[-1] == 1.0
    assert all(a <= b for a, b in zip(vals, vals[1:]))


@settings(max_examples=60, deadline=None)
@given(instances(), st.randoms(use_true_random=False))
def test_invariant_under_category_relabeling(inst, rnd):
    y, s = inst
    C = s.shape[1]
    perm = list(range(C))
    rnd.shuffle(perm)
    perm = np.array(perm)
    inv = np.argsort(perm)
    # Category c becomes perm[c] and its score column moves with it. Tied
    # argmaxes resolve by index, which relabeling changes, so skip those.
    if (np.sum(s == s.max(axis=1, keepdims=True), axis=1) > 1).any():
        return
    a = M.evaluate(y, s)
    b = M.evaluate(perm[y], s[:, inv])
    for k in ("accuracy", "balanced_accuracy", "f1_micro", "f1_macro", "f1_weighted"):
        assert getattr(a, k) == pytest.approx(getattr(b, k), abs=1e-12)
    assert a.auc_micro == pytest.approx(b.auc_micro, abs=1e-12, nan_ok=True)
    assert a.auc_macro == pytest.approx(b.auc_macro, abs=1e-12, nan_ok=True)


def test_agrees_with_scikit_learn(rng):
    skm = pytest.importorskip("sklearn.metrics")
    for _ in range(20):
        C = int(rng.integers(3, 6))
        y = np.r_[np.arange(C), rng.integers(0, C, 40)]
        raw = rng.random((y.size, C))
        s = raw / raw.sum(axis=1, keepdims=True)
        rep = M.evaluate(y, s)
        yp = s.argmax(axis=1)
        assert rep.f1_macro == pytest.approx(skm.f1_score(y, yp, average="macro"), abs=1e-12)
        assert rep.f1_weighted == pytest.approx(skm.f1_score(y, yp, average="weighted"), abs=1e-12)
        assert rep.balanced_accuracy == pytest.approx(skm.balanced_accuracy_score(y, yp), abs=1e-12)
        assert rep.auc_macro == pytest.approx(skm.roc_auc_score(y, s, multi_class="ovr", average="macro"), abs=1e-12)
        onehot = np.eye(C)[y]
        assert rep.auc_micro == pytest.approx(skm.roc_auc_score(onehot, s, average="micro"), abs=1e-12)
