import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccml import flipping, grouplasso, swap
from ccml.bce import bce
from ccml.errors import ValidationError


def scores(p, y):
    return grouplasso.lasso(p, y).class_scores


# --- candidate selection ----------------------------------------------------

def test_no_agreement_no_candidates():
    pf = np.array([[0.9, 0.1, 0.8]])
    pg = np.array([[0.1, 0.9, 0.2]])
    y = np.array([[0, 0, 1]])
    assert flipping.select_candidates(pf, pg, y, np.ones((1, 3)), np.ones((1, 3))) == []


def test_single_agreed_missing_label():
    p = np.array([[0.9, 0.95]])
    y = np.array([[0, 1]])
    cands = flipping.select_candidates(p, p, y, scores(p, y), scores(p, y))
    assert len(cands) == 1
    assert (cands[0].row, cands[0].cls, cands[0].direction) == (0, 0, "0to1")


def test_disagreeing_pair_is_not_candidate():
    y = np.array([[0, 1]])
    pf = np.array([[0.9, 0.9]])
    pg = np.array([[0.2, 0.9]])
    assert flipping.select_candidates(pf, pg, y, scores(pf, y), scores(pg, y)) == []


def test_candidates_sorted_and_tie_broken():
    p = np.array([[0.9, 0.9], [0.9, 0.9]])
    y = np.array([[0, 1], [0, 1]])
    s = np.array([[1.0, 0.0], [1.0, 0.0]])
    cands = flipping.select_candidates(p, p, y, s, s, sample_ids=[17, 3])
    assert [c.sample for c in cands] == [3, 17]
    s2 = np.array([[0.5, 0.0], [2.0, 0.0]])
    cands = flipping.select_candidates(p, p, y, s2, s2, sample_ids=[17, 3])
    assert [c.score for c in cands] == [4.0, 1.0]


def test_locked_cells_skipped():
    p = np.array([[0.9, 0.95]])
    y = np.array([[0, 1]])
    locked = np.array([[True, False]])
    assert flipping.select_candidates(p, p, y, scores(p, y), scores(p, y), locked=locked) == []


def test_select_shape_mismatch():
    with pytest.raises(ValidationError):
        flipping.select_candidates(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 3)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(2, 6), st.integers(0, 10_000))
def test_candidates_always_agree_and_contradict(n, v, seed):
    rng = np.random.default_rng(seed)
    pf, pg = rng.uniform(size=(n, v)), rng.uniform(size=(n, v))
    y = rng.integers(0, 2, size=(n, v))
    for c in flipping.select_candidates(pf, pg, y, scores(pf, y), scores(pg, y)):
        a, b = int(pf[c.row, c.cls] >= 0.5), int(pg[c.row, c.cls] >= 0.5)
        assert a == b != y[c.row, c.cls]
        assert c.score > 0


# --- flipping -----------------------------------------------------------------

def _cand(row, cls, score, direction="0to1"):
    return flipping.FlipCandidate(row, row, cls, score, direction)


def test_flip_budget_two_candidates():
    y = np.array([[0, 0, 1]])
    cands = [_cand(0, 1, 3.0), _cand(0, 0, 1.0)]
    new, log = flipping.flip(y, cands, 0.05)
    assert log.budget == 1 == math.ceil(0.05 * 2)
    assert new.tolist() == [[0, 1, 1]]
    assert y.tolist() == [[0, 0, 1]]


def test_flip_empty_and_full():
    y = np.array([[0, 1], [1, 0]])
    new, log = flipping.flip(y, [])
    assert np.array_equal(new, y) and log.budget == 0
    cands = [_cand(0, 0, 2.0), _cand(1, 1, 1.0)]
    new, log = flipping.flip(y, cands, 1.0)
    assert new.tolist() == [[1, 1], [1, 1]]
    assert len(log.flipped) == 2


def test_flip_log_records():
    y = np.array([[1, 0]])
    _, log = flipping.flip(y, [flipping.FlipCandidate(0, 42, 0, 1.5, "1to0")], 1.0, epoch=9, batch=2)
    assert log.records() == [{"epoch": 9, "batch": 2, "sample": 42, "class": 0, "direction": "1to0", "score": 1.5}]


def test_recompute_without_flip_is_identity():
    rng = np.random.default_rng(0)
    pf, pg = rng.uniform(0.05, 0.95, size=(4, 3)), rng.uniform(0.05, 0.95, size=(4, 3))
    y = rng.integers(0, 2, size=(4, 3))
    out = flipping.recompute_after_flip(pf, pg, y)
    assert np.array_equal(out.bce_f, bce(pf, y).loss)
    assert np.array_equal(out.lasso_g.total, grouplasso.lasso(pg, y).total)


def test_flipping_agreed_missing_label_lowers_bce():
    pf = np.array([[0.85, 0.9, 0.2]])
    pg = np.array([[0.8, 0.7, 0.1]])
    y = np.array([[0, 1, 0]])
    cands = flipping.select_candidates(pf, pg, y, scores(pf, y), scores(pg, y))
    new, _ = flipping.flip(y, cands, 1.0)
    after = flipping.recompute_after_flip(pf, pg, new)
    assert after.bce_f[0] < bce(pf, y).loss[0]
    assert after.bce_g[0] < bce(pg, y).loss[0]


def test_ranking_errors_for_corrected_class_do_not_grow():
    # class 0 was a missing label both nets predict; correcting it moves it to the assigned side
    p = np.array([[0.9, 0.8, 0.1, 0.3]])
    y = np.array([[0, 1, 0, 0]])
    before = grouplasso.pair_errors(p, y)[0]
    after = grouplasso.pair_errors(p, np.array([[1, 1, 0, 0]]))[0]
    for ch in (2, 3):
        assert after[0, ch] <= before[1, 0] + 1e-15
        assert after[0, ch] == 0.0
    assert after[1, 0] == 0.0


# --- swap -------------------------------------------------------------------

def test_swapping_loss():
    assert swap.swapping_loss([0.2], [0.8], 0.5).tolist() == pytest.approx([0.6])
    b = np.array([0.1, 0.7])
    assert np.array_equal(swap.swapping_loss(b, [5.0, 9.0], 0.0), b)
    assert swap.swapping_loss(np.zeros(3), np.zeros(3), 2.0).tolist() == [0, 0, 0]
    with pytest.raises(ValidationError):
        swap.swapping_loss([1.0, 2.0], [1.0], 1.0)


def test_select_order_statistics():
    d = swap.select_and_swap(np.zeros(4), [0.1, 0.5, 0.2, 0.9], 0.75)
    assert d.R == 3
    assert set(d.selected_for_f.tolist()) == {0, 2, 1}
    assert d.excluded_for_f.tolist() == [3]


def test_select_full_retention_and_symmetry():
    B = np.array([0.3, 0.1, 0.2])
    d = swap.select_and_swap(B, B[::-1], 1.0)
    assert d.selected_for_f.tolist() == d.selected_for_g.tolist() == [0, 1, 2]
    d = swap.select_and_swap(B, B, 0.5)
    assert np.array_equal(d.selected_for_f, d.selected_for_g)


def test_select_ceiling_rule():
    d = swap.select_and_swap(np.arange(8.0), np.arange(8.0), 0.75)
    assert d.R == 6 == len(d.selected_for_f) == len(d.selected_for_g)
    assert swap.select_and_swap([1.0], [1.0], 0.01).R == 1


def test_select_ties_prefer_low_index():
    d = swap.select_and_swap(np.zeros(4), np.zeros(4), 0.5)
    assert d.selected_for_f.tolist() == [0, 1]


def test_select_validation():
    with pytest.raises(ValidationError):
        swap.select_and_swap([], [], 0.5)
    with pytest.raises(ValidationError):
        swap.select_and_swap([1.0], [1.0], 0.0)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 40), st.floats(0.05, 1.0), st.integers(0, 10_000))
def test_selection_properties(n, frac, seed):
    rng = np.random.default_rng(seed)
    B_f, B_g = rng.uniform(size=n), rng.uniform(size=n)
    d = swap.select_and_swap(B_f, B_g, frac)
    R = math.ceil(frac * n)
    assert d.R == R
    for sel, exc, B in ((d.selected_for_f, d.excluded_for_f, B_g), (d.selected_for_g, d.excluded_for_g, B_f)):
        assert len(sel) + len(exc) == n
        assert len(set(sel.tolist()) | set(exc.tolist())) == n
        if len(exc):
            assert B[exc].min() >= B[sel].max()

    # cross-assignment: f's set depends only on g's losses
    other = swap.select_and_swap(rng.uniform(size=n), B_g, frac)
    assert np.array_equal(other.selected_for_f, d.selected_for_f)

    perm = rng.permutation(n)
    dp = swap.select_and_swap(B_f[perm], B_g[perm], frac)
    assert sorted(perm[dp.selected_for_f].tolist()) == d.selected_for_f.tolist()
