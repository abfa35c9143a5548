import numpy as np
import pytest

from motionkit import synth
from motionkit.correspond import brute_force_assignment, build_correspondence, feature_cost
from motionkit.extraction import ExtractionConfig, extract_all_pairs
from motionkit.tensorio import GridShape

HARD1 = ExtractionConfig(k=1, mode="hard")


def test_onehot_zero_flow_is_block_identity():
    shape = GridShape(2, 2, 2)
    zero = np.zeros((2, 2, 2))
    attn = synth.onehot_attention_from_flow({(0, 1): zero, (1, 0): zero}, shape)
    hw = 4
    for i in range(2):
        for j in range(2):
            block = attn[i * hw : (i + 1) * hw, j * hw : (j + 1) * hw]
            assert np.array_equal(block, np.eye(hw, dtype=np.float32))


def test_onehot_constant_flow_with_border_clip():
    shape = GridShape(2, 1, 3)
    flow = np.zeros((1, 3, 2))
    flow[0, :2, 0] = 1.0  # last column clipped to itself
    attn = synth.onehot_attention_from_flow({(0, 1): flow}, shape)
    block = attn[0:3, 3:6]
    expected = np.zeros((3, 3))
    expected[0, 1] = 1
    expected[1, 2] = 1
    expected[2, 2] = 1
    assert np.array_equal(block, expected)


def test_onehot_rejects_fractional_and_out_of_grid():
    shape = GridShape(2, 1, 3)
    frac = np.zeros((1, 3, 2))
    frac[0, 0, 0] = 0.5
    with pytest.raises(ValueError, match="not integers"):
        synth.onehot_attention_from_flow({(0, 1): frac}, shape)
    escape = np.zeros((1, 3, 2))
    escape[0, 2, 0] = 1.0
    with pytest.raises(ValueError, match="leave the grid"):
        synth.onehot_attention_from_flow({(0, 1): escape}, shape)


def test_onehot_extraction_roundtrip():
    shape = GridShape(3, 3, 4)
    spec = synth.FlowSpec("random", shape, bound=2, seed=1)
    flows, _ = synth.generate_flow(spec)
    attn = synth.onehot_attention_from_flow(flows, shape)
    fields = extract_all_pairs(attn, shape, HARD1)
    for key in flows:
        assert np.array_equal(fields[key], flows[key])


def test_soft_attention_rows_sum_to_one():
    shape = GridShape(3, 2, 3)
    flows, _ = synth.generate_flow(synth.FlowSpec("constant", shape, dx=1.0))
    for beta in (1e-6, 1.0, 50.0):
        attn = synth.soft_attention_from_flow(flows, shape, beta)
        assert np.allclose(attn.sum(axis=1), 1.0, atol=1e-6)
        assert (attn >= 0).all()


def test_soft_attention_beta50_recovers_integer_flow():
    shape = GridShape(3, 4, 4)
    flows, _ = synth.generate_flow(synth.FlowSpec("random", shape, bound=1, seed=2))
    attn = synth.soft_attention_from_flow(flows, shape, 50.0)
    hard = extract_all_pairs(attn, shape, HARD1)
    soft = extract_all_pairs(attn, shape, ExtractionConfig(mode="soft"))
    for key in flows:
        assert np.array_equal(hard[key], flows[key])
        assert np.abs(soft[key] - flows[key]).max() <= 0.05


def test_soft_attention_small_beta_near_centroid():
    shape = GridShape(2, 2, 2)
    zero = np.zeros((2, 2, 2))
    attn = synth.soft_attention_from_flow({(0, 1): zero, (1, 0): zero}, shape, 1e-6)
    fields = extract_all_pairs(attn, shape, ExtractionConfig(mode="soft"))
    centroid = np.array([0.5, 0.5])
    for py in range(2):
        for px in range(2):
            assert fields[(0, 1)][py, px] == pytest.approx(
                centroid - [px, py], abs=1e-3
            )


def test_soft_attention_validates_beta():
    with pytest.raises(ValueError):
        synth.soft_attention_from_flow({}, GridShape(1, 2, 2), 0.0)


# ------------------------------------------------------------------- features


def _mask(h, w, flats):
    m = np.zeros(h * w, dtype=np.uint8)
    m[list(flats)] = 1
    return m.reshape(h, w)


def test_features_identity_permutation():
    shape = GridShape(1, 2, 3)
    mask = _mask(2, 3, [0, 1, 4])
    perm = {0: 0, 1: 1, 4: 4}
    feat_ref, feat_tgt, expected = synth.features_with_permutation(shape, 3, perm, mask, mask)
    cmap = build_correspondence(feat_tgt, feat_ref, mask, mask)
    assert np.array_equal(cmap.tgt_index, expected.tgt_index)
    assert np.array_equal(cmap.ref_index, expected.ref_index)


def test_features_five_cycle_recovered_and_brute_force_agrees():
    shape = GridShape(1, 2, 3)
    mask = _mask(2, 3, [0, 1, 2, 3, 4])
    cycle = {0: 1, 1: 2, 2: 3, 3: 4, 4: 0}
    feat_ref, feat_tgt, expected = synth.features_with_permutation(shape, 5, cycle, mask, mask)
    cmap = build_correspondence(feat_tgt, feat_ref, mask, mask)
    assert [int(x) for x in cmap.ref_index] == [cycle[int(a)] for a in cmap.tgt_index]
    cost = feature_cost(feat_tgt, feat_ref, mask, mask)
    _, cols, total = brute_force_assignment(cost)
    assert total == 0.0
    fg = np.flatnonzero(mask.reshape(-1))
    assert [int(fg[c]) for c in cols] == [cycle[int(a)] for a in fg]


def test_features_separation_margin():
    shape = GridShape(1, 2, 3)
    mask = _mask(2, 3, [0, 2, 3, 5])
    perm = {0: 2, 2: 0, 3: 5, 5: 3}
    feat_ref, feat_tgt, _ = synth.features_with_permutation(shape, 2, perm, mask, mask)
    cost = feature_cost(feat_tgt, feat_ref, mask, mask)
    fg = np.flatnonzero(mask.reshape(-1))
    for a_pos, a in enumerate(fg):
        for b_pos, b in enumerate(fg):
            if perm[int(a)] == int(b):
                assert cost[a_pos, b_pos] == 0.0
            else:
                assert cost[a_pos, b_pos] >= 0.5


def test_features_validation():
    shape = GridShape(1, 2, 3)
    mask = _mask(2, 3, [0, 1])
    with pytest.raises(ValueError, match="exactly the target foreground"):
        synth.features_with_permutation(shape, 3, {0: 0}, mask, mask)
    big = _mask(2, 3, range(6))
    with pytest.raises(ValueError, match="capacity"):
        synth.features_with_permutation(shape, 2, {i: i for i in range(6)}, big, big)
    with pytest.raises(ValueError, match=">= 2"):
        synth.features_with_permutation(shape, 1, {0: 0, 1: 1}, mask, mask)


# ----------------------------------------------------------------------- flow


def test_constant_flow_cumulative_pairs():
    shape = GridShape(3, 1, 8)
    flows, clips = synth.generate_flow(synth.FlowSpec("constant", shape, dx=1.0))
    assert flows[(0, 2)][0, 0] == pytest.approx([2.0, 0.0])
    assert flows[(2, 0)][0, 7] == pytest.approx([-2.0, 0.0])
    assert clips[(0, 2)][0, 6] and clips[(0, 2)][0, 7]
    assert not clips[(0, 2)][0, 0]


def test_rotation_90_corner():
    shape = GridShape(2, 3, 3)
    flows, _ = synth.generate_flow(synth.FlowSpec("rotation", shape, omega_deg=90.0))
    assert flows[(0, 1)][0, 0] == pytest.approx([2.0, 0.0])
    # backward pair is the inverse rotation
    assert flows[(1, 0)][0, 2] == pytest.approx([-2.0, 0.0])


def test_zoom_identity_rate():
    shape = GridShape(3, 4, 4)
    flows, clips = synth.generate_flow(synth.FlowSpec("zoom", shape, rate=1.0))
    for key, field in flows.items():
        assert np.abs(field).max() == 0.0
        assert not clips[key].any()


def test_random_flow_integer_in_grid_and_composed():
    shape = GridShape(4, 5, 6)
    flows, _ = synth.generate_flow(synth.FlowSpec("random", shape, bound=2, seed=9))
    u, v = np.meshgrid(np.arange(6, dtype=float), np.arange(5, dtype=float))
    for (i, j), field in flows.items():
        assert np.array_equal(field, np.rint(field))
        du, dv = u + field[..., 0], v + field[..., 1]
        assert du.min() >= 0 and du.max() <= 5 and dv.min() >= 0 and dv.max() <= 4
    # forward cumulative pairs compose the adjacent step maps
    def as_map(field):
        dest_u = (u + field[..., 0]).astype(int)
        dest_v = (v + field[..., 1]).astype(int)
        return (dest_v * 6 + dest_u).reshape(-1)

    m01, m12, m02 = as_map(flows[(0, 1)]), as_map(flows[(1, 2)]), as_map(flows[(0, 2)])
    assert np.array_equal(m02, m12[m01])


def test_flow_spec_validation():
    with pytest.raises(ValueError):
        synth.FlowSpec("spiral", GridShape(2, 2, 2))
    with pytest.raises(ValueError):
        synth.FlowSpec("zoom", GridShape(2, 2, 2), rate=0.0)
    with pytest.raises(ValueError):
        synth.FlowSpec("random", GridShape(2, 2, 2), bound=-1)


def test_random_flow_deterministic_per_seed():
    shape = GridShape(3, 3, 3)
    a, _ = synth.generate_flow(synth.FlowSpec("random", shape, bound=1, seed=5))
    b, _ = synth.generate_flow(synth.FlowSpec("random", shape, bound=1, seed=5))
    c, _ = synth.generate_flow(synth.FlowSpec("random", shape, bound=1, seed=6))
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert any(not np.array_equal(a[k], c[k]) for k in a)
