import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gluetrees import exact_laws as ex
from gluetrees.glue_tree import sample_tree_marks
from gluetrees.limit_laws import phi_alpha
from gluetrees.mc_stats import ks_distance
from gluetrees.rng import make_rng
from gluetrees.sequences import LengthSequence

POW1 = LengthSequence.power(1.0)
CONST1 = LengthSequence.constant(1.0)
KINDS = [POW1, CONST1, LengthSequence.power(2.0), LengthSequence.logpower(-2.0), LengthSequence.logpower(1.5)]


def test_g_minus_one_branches_agree():
    x = np.array([-1e-4 * 1.0001, -0.99e-4, 0.99e-4, 1.0001e-4])
    exact = np.array([math.expm1(v) / v - 1.0 for v in x])
    np.testing.assert_allclose(ex.g_minus_one(x), exact, rtol=1e-9)
    assert ex.g_minus_one(0.0) == 0.0


def test_laplace_at_zero_is_one():
    for seq in KINDS:
        assert ex.laplace_dn_exact(seq, 1000, 0.0) == 1.0


def test_laplace_hand_product():
    g1 = math.e - 1.0
    assert ex.laplace_dn_exact(CONST1, 2, 1.0) == pytest.approx(g1 * (0.5 + 0.5 * g1), rel=1e-14)


def test_laplace_overflow_reported():
    with pytest.raises(OverflowError):
        ex.laplace_dn_exact(CONST1, 10, 5000.0)


def test_mean_examples():
    assert ex.mean_dn_exact(POW1, 1) == 0.5
    assert ex.mean_dn_exact(LengthSequence.power(3.0), 1) == 0.5
    assert ex.mean_dn_exact(CONST1, 2) == 0.75


@pytest.mark.parametrize("seq", [POW1, CONST1])
def test_mean_is_laplace_derivative(seq):
    n, h = 100_000, 1e-5
    an = float(seq.values(n)[n])
    deriv = (ex.laplace_dn_exact(seq, n, h) - ex.laplace_dn_exact(seq, n, -h)) / (2 * h)
    assert deriv * an == pytest.approx(ex.mean_dn_exact(seq, n), rel=1e-4)


def test_laplace_converges_to_limit():
    for lam in (-1.0, 0.5, 1.0):
        assert abs(ex.log_laplace_dn_exact(POW1, 10**6, lam) - phi_alpha(1.0, lam)) < 0.01


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_exponential_bound(lam):
    c, alpha = 1.5, 1.0
    assert ex.laplace_dn_exact(POW1, 100_000, lam) <= math.exp(c * (1 + 1 / alpha) * lam * math.exp(c * lam))


def test_increment_edge_cases():
    assert ex.laplace_increment_exact(POW1, 1000, 0.3, 0.3, 1.0) == 1.0
    assert ex.laplace_increment_exact(POW1, 1000, 0.0, 1.0, 0.7) == ex.laplace_dn_exact(POW1, 1000, 0.7)
    with pytest.raises(ValueError):
        ex.laplace_increment_exact(POW1, 1000, 0.6, 0.5, 1.0)


@pytest.mark.parametrize("seq", KINDS)
def test_splitting_pmf_normalized(seq):
    for n in (1, 2, 100, 10_000, 1_000_000):
        pmf = ex.splitting_index_pmf(seq, n)
        assert pmf.probabilities.size == n
        assert np.all(pmf.probabilities >= 0)
        assert abs(math.fsum(pmf.probabilities) - 1.0) < 1e-10
    assert ex.splitting_index_pmf(seq, 1).probabilities[0] == 1.0


def test_splitting_pmf_matches_direct_formula():
    n = 30
    a, A = POW1.values(n), POW1.prefix_sums(n)
    r = a / np.where(A > 0, A, 1)
    want = [r[k] ** 2 * math.prod(1 - r[i] ** 2 for i in range(k + 1, n + 1)) for k in range(1, n + 1)]
    np.testing.assert_allclose(ex.splitting_index_pmf(POW1, n).probabilities, want, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=2, max_value=10_000), st.sampled_from(KINDS))
def test_pair_law_identities(i, seq):
    law = ex.bernoulli_pair_law(seq, i)
    assert law.p11 == 0.0 and law.p10 == law.p01
    assert abs(law.p10 + law.p01 + law.p00 - 1.0) < 1e-12
    r = float(seq.values(i)[i] / seq.prefix_sums(i)[i])
    assert abs(law.conditional_given_other_zero() - r) < 1e-12
    for ell in (1, 2, 5):
        single, zero = ex.uplet_masses(seq, i, ell)
        assert abs(ell * single + zero - 1.0) < 1e-12


def test_iid_sampler_first_segment_only():
    x = ex.dn_iid_sampler(LengthSequence.power(2.0), 1, make_rng(1), 50_000)
    assert ks_distance(x, lambda v: np.clip(v, 0, 1)) < 0.01


def test_iid_sampler_mean_and_laplace():
    n, N = 10_000, 100_000
    x = ex.dn_iid_sampler(CONST1, n, make_rng(2), N)
    assert abs(x.mean() - ex.mean_dn_exact(CONST1, n)) < 3 * x.std(ddof=1) / math.sqrt(N)
    y = ex.dn_iid_sampler(POW1, n, make_rng(3), N) / n
    e = np.exp(0.5 * y)
    assert abs(e.mean() - ex.laplace_dn_exact(POW1, n, 0.5)) < 3 * e.std(ddof=1) / math.sqrt(N)


def test_iid_sampler_projections_monotone():
    full, cut = ex.dn_iid_sampler(POW1, 300, make_rng(4), 1000, upto=[10, 100, 300])
    assert np.all(np.diff(cut, axis=0) >= 0)
    np.testing.assert_allclose(cut[-1], full)
    with pytest.raises(ValueError):
        ex.dn_iid_sampler(POW1, 300, make_rng(4), 10, upto=[301])


def test_two_point_single_segment():
    kappa, d1, d2 = ex.two_point_joint_sampler(POW1, 1, make_rng(5), 20_000)
    assert np.all(kappa == 1)
    assert ks_distance(d1, lambda v: np.clip(v, 0, 1)) < 0.02
    assert abs(np.corrcoef(d1, d2)[0, 1]) < 0.03


def test_two_point_marginals_and_joint():
    n, N = 200, 100_000
    kappa, d1, d2 = ex.two_point_joint_sampler(POW1, n, make_rng(6), N)
    iid = ex.dn_iid_sampler(POW1, n, make_rng(7), N)
    assert ks_distance(d1, iid) < 0.02
    assert ks_distance(d2, iid) < 0.02
    depths, _, split = sample_tree_marks(POW1, n, make_rng(8), N, 2)
    thr = float(np.median(iid))
    p_exact = np.mean((d1 > thr) & (d2 > thr))
    p_tree = np.mean((depths[0] > thr) & (depths[1] > thr))
    se = math.sqrt(p_exact * (1 - p_exact) / N + p_tree * (1 - p_tree) / N)
    assert abs(p_exact - p_tree) < 3 * se
    # splitting index agrees with the simulator
    pe = np.bincount(kappa, minlength=n + 1)[1:] / N
    pt = np.bincount(split, minlength=n + 1)[1:] / N
    assert 0.5 * np.abs(pe - pt).sum() < 0.02


def test_two_point_cut_projection():
    kappa, d1, d2, c1, c2 = ex.two_point_joint_sampler(POW1, 400, make_rng(9), 50_000, c=0.5)
    assert np.all(c1 <= d1 + 1e-12) and np.all(c2 <= d2 + 1e-12)
    _, cut = ex.dn_iid_sampler(POW1, 400, make_rng(10), 50_000, upto=[200])
    assert ks_distance(c1, cut[0]) < 0.02


def test_ell_point_base_case_and_errors():
    np.testing.assert_array_equal(ex.ell_point_conditional_sampler(POW1, 11, 3, 10, make_rng(1), 5), 0.0)
    for ell, k, n in ((0, 1, 5), (2, 5, 5), (2, 0, 5)):
        with pytest.raises(ValueError):
            ex.ell_point_conditional_sampler(POW1, n, ell, k, make_rng(1), 5)


def test_ell_point_reading_reduces_to_product_for_one_point():
    n, k = 5000, 10
    lhs = ex.log_laplace_conditional_exact(POW1, n, 1, k, [0.8])
    a, r = POW1.values(n), POW1.ratios(n)
    i = np.arange(k + 2, n + 1)
    rhs = math.fsum(np.log1p(r[i] * ex.g_minus_one(0.8 * a[i] / a[n])))
    assert lhs == pytest.approx(rhs, rel=1e-13)


def test_ell_point_sampler_against_exact_laplace():
    n, ell, k, N = 10_000, 2, 10, 100_000
    x = ex.ell_point_conditional_sampler(POW1, n, ell, k, make_rng(11), N) / n
    lams = [0.5, -0.7]
    e = np.exp(lams[0] * x[0] + lams[1] * x[1])
    want = math.exp(ex.log_laplace_conditional_exact(POW1, n, ell, k, lams))
    assert abs(e.mean() - want) < 3 * e.std(ddof=1) / math.sqrt(N)
    # each coordinate has the exact finite-n mean, which is already close to the limit mean 1
    a, A = POW1.values(n), POW1.prefix_sums(n)
    i = np.arange(k + 2, n + 1)
    mean_exact = math.fsum(a[i] ** 2 / (A[i - 1] + ell * a[i])) / (2 * n)
    assert abs(mean_exact - 1.0) < 0.01
    for c in range(ell):
        assert abs(x[c].mean() - mean_exact) < 3 * x[c].std(ddof=1) / math.sqrt(N)


def test_d_infinity_mean_summable():
    seq = LengthSequence.logpower(-2.0)
    m, tail = ex.d_infinity_mean(seq, 10_000)
    assert m == pytest.approx(ex.mean_dn_exact(seq, 10_000))
    assert 0 < tail < m


def test_d_infinity_sampler():
    seq = LengthSequence.logpower(-2.0)
    x, tail = ex.d_infinity_sampler(seq, make_rng(12), 50_000, horizon=10_000)
    assert abs(x.mean() - ex.mean_dn_exact(seq, 10_000)) < 3 * x.std(ddof=1) / math.sqrt(x.size)
    assert tail > 0
