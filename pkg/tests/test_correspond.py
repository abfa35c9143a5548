import numpy as np
import pytest

from motionkit import synth
from motionkit.correspond import (
    METHOD_HUNGARIAN,
    METHOD_NN_FALLBACK,
    CorrespondenceMap,
    brute_force_assignment,
    build_correspondence,
    feature_cost,
    foreground_indices,
    hungarian,
)
from motionkit.tensorio import GridShape


def test_feature_cost_identical_orthogonal_antiparallel():
    mask = np.ones((1, 3), dtype=np.uint8)
    feats = np.zeros((1, 3, 3))
    feats[0, 0] = [1, 0, 0]
    feats[0, 1] = [0, 1, 0]
    feats[0, 2] = [-1, 0, 0]
    cost = feature_cost(feats, feats, mask, mask)
    assert cost[0, 0] == 0.0 and cost[1, 1] == 0.0
    assert cost[0, 1] == pytest.approx(1.0)
    assert cost[0, 2] == pytest.approx(2.0)


def test_feature_cost_zero_norm_gets_cost_one():
    mask = np.ones((1, 2), dtype=np.uint8)
    tgt = np.zeros((1, 2, 2))
    tgt[0, 1] = [1, 0]
    ref = np.zeros((1, 2, 2))
    ref[0, 0] = [1, 0]
    ref[0, 1] = [0, 1]
    cost = feature_cost(tgt, ref, mask, mask)
    assert cost[0, 0] == pytest.approx(1.0)
    assert cost[0, 1] == pytest.approx(1.0)


def test_feature_cost_errors():
    mask = np.ones((1, 2), dtype=np.uint8)
    empty = np.zeros((1, 2), dtype=np.uint8)
    feats2 = np.zeros((1, 2, 2))
    feats3 = np.zeros((1, 2, 3))
    with pytest.raises(ValueError, match="dims differ"):
        feature_cost(feats2, feats3, mask, mask)
    with pytest.raises(ValueError, match="nonempty"):
        feature_cost(feats2, feats2, empty, mask)


def test_hungarian_diagonal_dominant():
    rows, cols, total = hungarian([[1.0, 2.0], [2.0, 1.0]])
    assert list(rows) == [0, 1] and list(cols) == [0, 1]
    assert total == 2.0


def test_hungarian_diagonal_zeros():
    big = 1e6
    rows, cols, total = hungarian([[0.0, big], [big, 0.0]])
    assert list(cols) == [0, 1]
    assert total == 0.0


def test_hungarian_worked_3x3():
    rows, cols, total = hungarian([[4, 1, 3], [2, 0, 5], [3, 2, 2]])
    assert list(rows) == [0, 1, 2]
    assert list(cols) == [1, 0, 2]
    assert total == 5.0


def test_hungarian_input_validation():
    with pytest.raises(ValueError):
        hungarian(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        hungarian([[1.0, -0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        hungarian([[np.inf, 1.0], [0.0, 1.0]])


def test_hungarian_all_equal_ties_break_lexicographically():
    rows, cols, _ = hungarian(np.ones((4, 4)))
    assert list(rows) == [0, 1, 2, 3]
    assert list(cols) == [0, 1, 2, 3]


def test_hungarian_tie_blocks_prefer_smaller_columns():
    # two optimal assignments; the lexicographically smaller one keeps row 0
    # on column 0
    cost = np.array([[0.0, 0.0], [0.0, 0.0]])
    rows, cols, total = hungarian(cost)
    assert list(cols) == [0, 1]
    assert total == 0.0


def test_brute_force_1x1_and_2x2():
    rows, cols, total = brute_force_assignment([[3.5]])
    assert list(rows) == [0] and list(cols) == [0] and total == 3.5
    c = np.array([[1.0, 5.0], [2.0, 1.5]])
    rows, cols, total = brute_force_assignment(c)
    # direct comparison of the two possible assignments
    assert total == min(c[0, 0] + c[1, 1], c[0, 1] + c[1, 0])


def test_brute_force_limit():
    with pytest.raises(ValueError, match="limited"):
        brute_force_assignment(np.ones((9, 9)))


@pytest.mark.parametrize("seed", range(4))
def test_hungarian_matches_brute_force_rectangular(seed):
    rng = np.random.default_rng(seed)
    for _ in range(30):
        n = int(rng.integers(1, 8))
        m = int(rng.integers(1, 8))
        cost = rng.random((n, m))
        r1, c1, t1 = hungarian(cost)
        r2, c2, t2 = brute_force_assignment(cost)
        assert t1 == t2
        assert np.array_equal(r1, r2) and np.array_equal(c1, c2)


def test_hungarian_assignment_invariant_under_row_shift():
    rng = np.random.default_rng(12)
    for _ in range(20):
        cost = rng.random((6, 6))
        _, cols_a, _ = hungarian(cost)
        shifted = cost.copy()
        shifted[3] += 0.75
        _, cols_b, _ = hungarian(shifted)
        assert np.array_equal(cols_a, cols_b)


def test_build_correspondence_identity():
    shape = GridShape(1, 2, 3)
    mask = np.ones((2, 3), dtype=np.uint8)
    rng = np.random.default_rng(4)
    feats = rng.normal(size=(2, 3, 5))
    cmap = build_correspondence(feats, feats, mask, mask)
    assert np.array_equal(cmap.tgt_index, np.arange(6))
    assert np.array_equal(cmap.ref_index, np.arange(6))
    assert np.all(cmap.method == METHOD_HUNGARIAN)
    assert np.allclose(cmap.cost, 0.0, atol=1e-9)


def test_build_correspondence_recovers_permutation():
    shape = GridShape(1, 2, 3)
    mask = np.zeros((2, 3), dtype=np.uint8)
    mask.reshape(-1)[[0, 2, 3, 4, 5]] = 1
    fg = foreground_indices(mask)
    rng = np.random.default_rng(8)
    perm = {int(a): int(b) for a, b in zip(fg, rng.permutation(fg))}
    feat_ref, feat_tgt, expected = synth.features_with_permutation(shape, 5, perm, mask, mask)
    cmap = build_correspondence(feat_tgt, feat_ref, mask, mask)
    assert np.array_equal(cmap.tgt_index, expected.tgt_index)
    assert np.array_equal(cmap.ref_index, expected.ref_index)
    assert np.all(cmap.cost == 0.0)
    # brute force over the 5! assignments agrees
    cost = feature_cost(feat_tgt, feat_ref, mask, mask)
    rows, cols, total = brute_force_assignment(cost)
    assert total == 0.0
    assert [int(fg[c]) for c in cols] == [perm[int(fg[r])] for r in rows]


def test_build_correspondence_overflow_targets_fall_back():
    mask_tgt = np.array([[1, 1, 1]], dtype=np.uint8)
    mask_ref = np.array([[1, 1, 0]], dtype=np.uint8)
    tgt = np.zeros((1, 3, 2))
    tgt[0, 0] = [1, 0]
    tgt[0, 1] = [0, 1]
    tgt[0, 2] = [1, 0]
    ref = np.zeros((1, 3, 2))
    ref[0, 0] = [1, 0]
    ref[0, 1] = [0, 1]
    cmap = build_correspondence(tgt, ref, mask_tgt, mask_ref)
    assert len(cmap) == 3
    assert (cmap.method == METHOD_HUNGARIAN).sum() == 2
    assert (cmap.method == METHOD_NN_FALLBACK).sum() == 1
    fallback = cmap.ref_index[cmap.method == METHOD_NN_FALLBACK]
    assert list(fallback) == [0]  # nearest neighbor of [1, 0]


def test_correspondence_map_sorted_and_injective():
    rng = np.random.default_rng(10)
    mask = np.ones((3, 3), dtype=np.uint8)
    feats_t = rng.normal(size=(3, 3, 4))
    feats_r = rng.normal(size=(3, 3, 4))
    cmap = build_correspondence(feats_t, feats_r, mask, mask)
    assert np.all(np.diff(cmap.tgt_index) > 0)
    hung = cmap.ref_index[cmap.method == METHOD_HUNGARIAN]
    assert len(np.unique(hung)) == len(hung)
    cmap.validate()


def test_correspondence_records_roundtrip():
    cmap = CorrespondenceMap(
        tgt_index=np.array([0, 2, 5]),
        ref_index=np.array([1, 0, 4]),
        cost=np.array([0.0, 0.25, 1.0]),
        method=np.array([0, 0, 1], dtype=np.uint8),
    )
    table, method = cmap.to_records()
    back = CorrespondenceMap.from_records(table, method)
    assert np.array_equal(back.tgt_index, cmap.tgt_index)
    assert np.array_equal(back.ref_index, cmap.ref_index)
    assert np.allclose(back.cost, cmap.cost)
    assert np.array_equal(back.method, cmap.method)


def test_foreground_indices_validates_mask():
    with pytest.raises(ValueError):
        foreground_indices(np.array([[0, 2]]))
