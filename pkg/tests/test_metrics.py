import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import best_matching_tp, count_accuracy, edit_oracle, levenshtein_recursive, runs
from partseg.metrics import edit_score, evaluate, f1_at, f1_from_counts, frame_accuracy, levenshtein

GT = [0] * 10 + [1] * 10
PRED = [0] * 10 + [1] * 5 + [0] * 5


def random_labels(rng, T, K, max_run=15):
    out = []
    while len(out) < T:
        out += [int(rng.integers(0, K))] * int(rng.integers(1, max_run))
    return np.array(out[:T])


labels_st = st.integers(1, 40).flatmap(
    lambda T: st.tuples(st.lists(st.integers(0, 3), min_size=T, max_size=T),
                        st.lists(st.integers(0, 3), min_size=T, max_size=T)))


def test_accuracy_examples():
    assert frame_accuracy([1, 2, 3], [1, 2, 3]) == 100.0
    assert frame_accuracy([0, 0, 1, 1], [0, 1, 1, 1]) == 75.0
    assert frame_accuracy([0, 1, 1, 0], [1, 0, 0, 1]) == 0.0
    with pytest.raises(ValueError):
        frame_accuracy([0, 1], [0])


def test_edit_examples():
    assert edit_score(GT, GT) == 100.0
    assert round(edit_score(PRED, GT), 2) == 66.67
    with pytest.raises(ValueError):
        edit_score([], [])


def test_f1_worked_example():
    r = f1_at(PRED, GT, 0.5)
    assert (r.tp, r.fp, r.fn) == (2, 1, 0)
    assert round(r.precision, 2) == 66.67
    assert round(r.recall, 2) == 100.0
    assert round(r.f1, 2) == 80.0


def test_f1_perfect_and_bad_tau():
    for tau in (0.1, 0.25, 0.5, 1.0):
        r = f1_at(GT, GT, tau)
        assert r.precision == r.recall == r.f1 == 100.0
    for tau in (0.0, 1.5, -0.1):
        with pytest.raises(ValueError):
            f1_at(GT, GT, tau)


def test_greedy_can_undercount():
    # the first A prediction prefers the long A segment, leaving the second A prediction unmatched
    pred = [0] * 7 + [1] * 6 + [0] * 10
    gt = [0] + [1] * 2 + [0] * 14 + [1] * 6
    assert f1_at(pred, gt, 0.1, matching="greedy").tp == 1
    assert f1_at(pred, gt, 0.1).tp == 2
    assert best_matching_tp(pred, gt, 0.1)[0] == 2


def test_levenshtein():
    assert levenshtein("kitten", "sitting") == 3
    assert levenshtein([], [1, 2]) == 2
    assert levenshtein([0, 1], [1, 0]) == 2


def test_oracles_500_random_pairs():
    rng = np.random.default_rng(123)
    checked_f1 = 0
    for _ in range(500):
        T, K = int(rng.integers(1, 61)), int(rng.integers(1, 6))
        p, g = random_labels(rng, T, K), random_labels(rng, T, K)
        assert edit_score(p, g) == pytest.approx(edit_oracle(p, g), abs=1e-9)
        assert frame_accuracy(p, g) == pytest.approx(count_accuracy(p, g), abs=1e-9)
        if len(runs(p)) <= 6 and len(runs(g)) <= 6:
            checked_f1 += 1
            for tau in (0.1, 0.25, 0.5):
                tp, nP, nG = best_matching_tp(p, g, tau)
                r = f1_at(p, g, tau)
                assert (r.tp, r.fp, r.fn) == (tp, nP - tp, nG - tp)
    assert checked_f1 > 100


@settings(max_examples=200, deadline=None)
@given(labels_st)
def test_metric_invariants(pair):
    p, g = (np.array(x) for x in pair)
    assert 0 <= frame_accuracy(p, g) <= 100
    assert frame_accuracy(p, g) == frame_accuracy(g, p)
    assert 0 <= edit_score(p, g) <= 100
    f1s = [f1_at(p, g, t).f1 for t in (0.1, 0.25, 0.5, 0.75, 1.0)]
    assert all(0 <= f <= 100 for f in f1s)
    assert all(a >= b for a, b in zip(f1s, f1s[1:]))
    n = 3
    assert edit_score(np.repeat(p, n), np.repeat(g, n)) == pytest.approx(edit_score(p, g))
    for t in (0.1, 0.5):
        a, b = f1_at(np.repeat(p, n), np.repeat(g, n), t), f1_at(p, g, t)
        assert (a.tp, a.fp, a.fn) == (b.tp, b.fp, b.fn)


def test_levenshtein_matches_recursive():
    rng = np.random.default_rng(5)
    for _ in range(200):
        a = rng.integers(0, 3, int(rng.integers(0, 9))).tolist()
        b = rng.integers(0, 3, int(rng.integers(0, 9))).tolist()
        assert levenshtein(a, b) == levenshtein_recursive(a, b)


def test_evaluate():
    r = evaluate([(GT, GT)])
    assert r.acc == r.edit == 100.0 and all(v == 100.0 for v in r.f1.values())
    seq_a = [0, 1] * 3  # 6 frames, perfect
    seq_b = [0, 0, 1, 1]  # 4 frames, complement
    r = evaluate([(seq_a, seq_a), ([1, 1, 0, 0], seq_b)])
    assert r.acc == pytest.approx(100 * 6 / 10)
    assert r.edit == pytest.approx((100.0 + 0.0) / 2)
    for t, (tp, fp, fn) in r.counts.items():
        assert r.f1[t] == pytest.approx(f1_from_counts(tp, fp, fn)[2])
    assert len(r.per_sequence) == 2
    with pytest.raises(ValueError):
        evaluate([])


def test_evaluate_exclude():
    gt = [0, 0, 2, 2, 1, 1]
    pred = [0, 0, 1, 1, 1, 1]
    r = evaluate([(pred, gt)], exclude=[2])
    assert r.acc == 100.0
    assert r.f1[0.1] == pytest.approx(f1_from_counts(*r.counts[0.1])[2])


def test_report_json_and_table():
    r = evaluate([(PRED, GT)])
    js = r.to_json()
    assert set(js["f1"]) == {"0.1", "0.25", "0.5"}
    assert js["counts"]["0.5"] == {"tp": 2, "fp": 1, "fn": 0}
    assert "F1@0.5" in r.table()
