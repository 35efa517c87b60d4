import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gluetrees.exact_laws import dn_iid_sampler, mean_dn_exact
from gluetrees.glue_tree import (
    GluedTree,
    MarkedPoint,
    TreeCorruptionError,
    lazy_depths,
    new_keys,
    sample_points,
    sample_tree_depths,
    sample_tree_marks,
    segment_uniforms,
)
from gluetrees.mc_stats import ks_distance
from gluetrees.rng import make_rng
from gluetrees.sequences import LengthSequence

POW1 = LengthSequence.power(1.0)
CONST1 = LengthSequence.constant(1.0)


def fixture_tree():
    # b_2 glued at 0.25 on b_1, b_3 glued at 0.5 on b_2 (all unit length)
    return GluedTree.from_arrays(CONST1, [1, 2], [0.25, 0.5])


def test_hand_fixture_depths():
    t = fixture_tree()
    np.testing.assert_array_equal(t.base_depth[1:], [0.0, 0.25, 0.75])
    np.testing.assert_array_equal(t.leaf_depths()[1:], [1.0, 1.25, 1.75])
    assert t.height() == 1.75
    p = t.point_at(0.9, 0.5)  # u=0.9 of total length 3 -> segment 3
    assert p.segment == 3 and p.offset == 0.5 and p.depth == 1.25
    assert t.depth_naive(p) == 1.25
    assert t.depth_naive(MarkedPoint(1, 0.3, 0.3)) == 0.3


def test_hand_fixture_projection_and_branch():
    t = fixture_tree()
    p = MarkedPoint(3, 0.5, 1.25)
    assert t.projection_depths(p, [1, 2, 3]) == [0.25, 0.75, 1.25]
    q = MarkedPoint(2, 0.75, 1.0)
    s, d = t.branch_point(p, q)
    # both paths run along b_2; p leaves it at offset 0.5
    assert s == 2 and d == 0.75
    # a point on the root path of the other point is the branch point
    r = MarkedPoint(1, 0.1, 0.1)
    assert t.branch_point(p, r) == (1, 0.1)
    with pytest.raises(ValueError):
        t.projection_depths(p, [0])
    with pytest.raises(ValueError):
        t.projection_depths(p, [4])


def test_from_arrays_validation():
    with pytest.raises(ValueError):
        GluedTree.from_arrays(CONST1, [2], [0.1])
    with pytest.raises(ValueError):
        GluedTree.from_arrays(CONST1, [1], [1.0])


def test_corrupted_parent_chain_detected():
    t = fixture_tree()
    t._parent[2] = 3  # 2 -> 3 -> 2
    with pytest.raises(TreeCorruptionError):
        t.depth_naive(MarkedPoint(3, 0.1, 0.0))


def test_single_segment_tree():
    seq = LengthSequence.power(2.0)
    t = GluedTree.build(seq, 1, key=3)
    assert t.height() == 1.0
    assert t.total_length == 1.0
    rng = make_rng(0)
    d = [t.sample_uniform_point(rng).depth for _ in range(2000)]
    assert 0.0 <= min(d) and max(d) < 1.0
    parent, U = t.genealogy()
    assert list(parent) == [0, 0] and t.genealogy_path_lengths()[1] == 0.0
    m = t.mark_many(2, rng)
    assert m.splitting_index == 1
    assert m.max_branch_depth == min(p.offset for p in m.points)


def test_build_equals_grow_bitwise():
    key = 987654321
    built = GluedTree.build(POW1, 3000, key=key)
    grown = GluedTree.build(POW1, 1, key=key)
    for _ in range(2999):
        grown.grow()
    np.testing.assert_array_equal(built.parent, grown.parent)
    np.testing.assert_array_equal(built.attach_offset, grown.attach_offset)
    np.testing.assert_array_equal(built.base_depth, grown.base_depth)


def test_tree_invariants():
    rng = make_rng(11)
    for seq in (POW1, CONST1, LengthSequence.logpower(-2.0), LengthSequence.power(0.5)):
        t = GluedTree.build(seq, 1000, rng)
        assert t.total_length == pytest.approx(seq.prefix_sums(1000)[1000], rel=1e-12)
        assert np.all(t.attach_offset[2:] < t.lengths[t.parent[2:]])
        assert np.all(t.parent[2:] < np.arange(2, 1001))
        H = t.height()
        for _ in range(200):
            p = t.sample_uniform_point(rng)
            assert p.depth == pytest.approx(t.depth_naive(p), rel=1e-12)
            assert p.depth <= H
            proj = t.projection_depths(p, [1, 10, 100, 500, 1000])
            assert all(a <= b for a, b in zip(proj, proj[1:]))
            assert proj[-1] == p.depth


def test_height_is_max_over_brute_force_points():
    t = GluedTree.build(CONST1, 60, key=5)
    tips = [t.depth_naive(MarkedPoint(i, float(t.lengths[i]), 0.0)) for i in range(1, 61)]
    assert t.height() == pytest.approx(max(tips), rel=1e-14)
    h = t.heights_along_growth()
    assert np.all(np.diff(h[1:]) >= 0) and h[60] == t.height()


def test_third_segment_attachment_law():
    # power(1): b_3 attaches to b_1 w.p. 1/3 and to b_2 w.p. 2/3
    keys = new_keys(make_rng(2), 60_000)
    u, _ = segment_uniforms(keys, 3)
    from gluetrees.glue_tree import glue_choices
    parent, _ = glue_choices(POW1, keys, np.full(keys.size, 3))
    frac = float(np.mean(parent == 1))
    assert abs(frac - 1 / 3) < 4 * math.sqrt(2 / 9 / keys.size)


def test_second_segment_base_uniform():
    keys = new_keys(make_rng(3), 40_000)
    _, v = segment_uniforms(keys, 2)
    assert abs(float(np.mean(v <= 0.5)) - 0.5) < 4 * 0.5 / math.sqrt(keys.size)


def test_lazy_depths_match_materialized_tree():
    rng = make_rng(8)
    key = new_keys(rng)
    t = GluedTree.build(POW1, 2000, key=key)
    s, off, d = t.sample_uniform_points(rng, 500)
    lazy, proj = lazy_depths(POW1, np.full(500, key), s, off, ks=[1, 100, 2000])
    np.testing.assert_allclose(lazy, d, rtol=1e-12)
    for j, k in enumerate([1, 100, 2000]):
        want = [t.projection_depths(MarkedPoint(int(a), float(b), 0.0), [k])[0] for a, b in zip(s, off)]
        np.testing.assert_allclose(proj[j], want, rtol=1e-12, atol=1e-12)


def test_lazy_marks_match_mark_many():
    rng = make_rng(9)
    key = new_keys(rng)
    t = GluedTree.build(POW1, 500, key=key)
    pts = [t.sample_uniform_point(rng) for _ in range(2)]
    from gluetrees.glue_tree import _lazy_pair
    s, bd, d1, d2 = _lazy_pair(POW1, np.array([key]), np.array([pts[0].segment]), np.array([pts[0].offset]),
                               np.array([pts[1].segment]), np.array([pts[1].offset]))
    seg, depth = t.branch_point(*pts)
    assert s[0] == seg and bd[0] == pytest.approx(depth, rel=1e-12)
    assert d1[0] == pytest.approx(pts[0].depth, rel=1e-12)


def test_mark_many_structure():
    t = GluedTree.build(POW1, 300, key=1)
    m = t.mark_many(4, make_rng(1))
    assert m.branch_depths.shape == (4, 4)
    np.testing.assert_array_equal(np.diag(m.branch_depths), [p.depth for p in m.points])
    off = m.branch_depths[~np.eye(4, dtype=bool)]
    assert m.max_branch_depth == off.max()
    assert m.splitting_index is None
    single = t.mark_many(1, make_rng(1))
    assert single.max_branch_depth is None
    with pytest.raises(ValueError):
        t.mark_many(0, make_rng(1))


def test_uniform_depth_mean_matches_exact():
    n, N = 10_000, 100_000
    d = sample_tree_depths(CONST1, n, make_rng(21), N)
    se = d.std(ddof=1) / math.sqrt(N)
    assert abs(d.mean() - mean_dn_exact(CONST1, n)) < 3 * se


def test_projection_law_matches_partial_iid_sum():
    n, k, N = 500, 250, 100_000
    _, proj = sample_tree_depths(POW1, n, make_rng(22), N, ks=[k])
    _, cut = dn_iid_sampler(POW1, n, make_rng(23), N, upto=[k])
    assert ks_distance(proj[0] / n, cut[0] / n) < 0.02


def test_two_marks_exchangeable():
    depths, _, _ = sample_tree_marks(POW1, 300, make_rng(24), 100_000, 2)
    assert ks_distance(depths[0], depths[1]) < 0.02


def test_genealogy_identity_and_graph_depths():
    t = GluedTree.build(CONST1, 100_000, make_rng(25))
    gap = np.abs(t.leaf_depths()[1:] - (t.genealogy_path_lengths()[1:] + 1.0))
    assert gap.max() <= 1e-12
    g = t.graph_depths()
    ln = math.log(t.n)
    # depth of the last vertex ~ ln n, max depth ~ e ln n (wide bands)
    assert 0.5 < g[t.n] / ln < 1.6
    assert 2.0 < g.max() / ln < 3.2
    parent, U = t.genealogy()
    assert np.all((U[2:] >= 0) & (U[2:] < 1))


def test_csv_dumps_column_order():
    t = fixture_tree()
    buf = io.StringIO()
    t.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "index,parent,attach_offset,base_depth,length"
    assert lines[3] == "3,2,0.5,0.75,1.0"
    buf = io.StringIO()
    t.write_genealogy_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "vertex,parent,edge_length_U"
    assert lines[1:] == ["1,0,0.0", "2,1,0.25", "3,2,0.5"]


def test_same_key_same_tree_and_samples():
    a = sample_tree_depths(POW1, 5000, make_rng(4, 1), 1000)
    b = sample_tree_depths(POW1, 5000, make_rng(4, 1), 1000)
    np.testing.assert_array_equal(a, b)


def test_prefix_uniform_points():
    t = GluedTree.build(POW1, 1000, key=77)
    s, off, d = t.sample_uniform_points(make_rng(5), 1000, upto=10)
    assert s.max() <= 10
    with pytest.raises(ValueError):
        t.sample_uniform_points(make_rng(5), 1, upto=1001)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=400), st.integers(min_value=0, max_value=2**64 - 1))
def test_depth_oracle_property(n, key):
    t = GluedTree.build(LengthSequence.power(0.7), n, key=key)
    rng = make_rng(key % 1000)
    for _ in range(5):
        p = t.sample_uniform_point(rng)
        assert p.depth == pytest.approx(t.depth_naive(p), rel=1e-12, abs=1e-15)
        assert p.depth <= t.height()
    s, off = sample_points(t.seq, n, make_rng(1), 20)
    np.testing.assert_allclose(lazy_depths(t.seq, np.full(20, t.key), s, off), t.base_depth[s] + off,
                               rtol=1e-12, atol=1e-15)
