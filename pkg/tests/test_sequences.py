import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gluetrees.sequences import (
    LengthSequence,
    SequenceError,
    a_value,
    harmonic_weighted_sum,
    prefix_sum,
    rv_index_estimate,
)
from gluetrees.rng import check_seed, make_rng


def test_a_value_examples():
    assert a_value(LengthSequence.power(1.0), 7) == 7.0
    assert a_value(LengthSequence.constant(1.0), 10**6) == 1.0
    assert a_value(LengthSequence.logpower(1.0), 1) == pytest.approx(math.log(2.0), rel=1e-15)
    assert a_value(LengthSequence.power(2.5), 1) == 1.0


def test_a_value_errors():
    with pytest.raises(SequenceError):
        a_value(LengthSequence.power(1.0), 0)
    with pytest.raises(SequenceError):
        LengthSequence.custom([1.0, 0.0, 2.0])
    with pytest.raises(SequenceError):
        LengthSequence.custom([1.0, -1.0])
    seq = LengthSequence.custom([1.0, 2.0, 3.0])
    assert a_value(seq, 3) == 3.0
    with pytest.raises(SequenceError):
        a_value(seq, 4)


def test_prefix_sum_examples():
    assert prefix_sum(LengthSequence.power(1.0), 4) == 10.0
    for seq in (LengthSequence.power(1.0), LengthSequence.constant(2.0), LengthSequence.logpower(-2.0)):
        assert prefix_sum(seq, 0) == 0.0
    assert prefix_sum(LengthSequence.constant(1.0), 100) == 100.0


def test_prefix_sum_is_exact_for_integer_powers():
    # 1 + ... + n = n(n+1)/2 is exact in float64 at this size
    n = 10**7
    assert prefix_sum(LengthSequence.power(1.0), n) == n * (n + 1) / 2


def test_prefix_consistency_and_monotonicity():
    for seq in (LengthSequence.power(0.5), LengthSequence.logpower(3.0), LengthSequence.logpower(-2.0)):
        A = seq.prefix_sums(5000)
        a = seq.values(5000)
        assert np.all(np.diff(A) > 0)
        np.testing.assert_allclose(np.diff(A), a[1:], rtol=1e-12)


def test_harmonic_weighted_sum():
    assert harmonic_weighted_sum(LengthSequence.constant(1.0), 2) == 1.5
    assert harmonic_weighted_sum(LengthSequence.power(1.0), 5) == 5.0
    seq = LengthSequence.logpower(-2.0)
    direct = math.fsum(math.log(i + 1.0) ** -2 / i for i in range(1, 10**6 + 1))
    assert harmonic_weighted_sum(seq, 10**6) == pytest.approx(direct, rel=1e-12)


def test_rv_index_estimate():
    assert rv_index_estimate(LengthSequence.power(1.0), 10**6) == pytest.approx(1.0, rel=0.01)
    assert rv_index_estimate(LengthSequence.power(2.0), 10**6) == pytest.approx(2.0, rel=0.01)
    c = rv_index_estimate(LengthSequence.constant(1.0), 10**6)
    assert c == pytest.approx(1.0 / math.log(10**6), rel=0.05)
    assert c < rv_index_estimate(LengthSequence.constant(1.0), 10**3)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_rv_index_estimate_converges(alpha):
    seq = LengthSequence.power(alpha)
    errs = [abs(rv_index_estimate(seq, 10**k) - alpha) for k in (3, 4, 5, 6)]
    assert all(b <= a for a, b in zip(errs, errs[1:]))


def test_config_round_trip():
    for spec in ({"kind": "power", "alpha": 1.5}, {"kind": "constant", "c": 2.0},
                 {"kind": "logpower", "gamma": -2.0}, {"kind": "custom", "table": [1.0, 2.0], "rv_index": 0.0}):
        seq = LengthSequence.from_config(spec)
        again = LengthSequence.from_config(seq.to_config())
        np.testing.assert_array_equal(seq.values(2), again.values(2))
    with pytest.raises(SequenceError):
        LengthSequence.from_config({"kind": "spline"})


def test_concurrent_cache_growth():
    seq = LengthSequence.power(1.0)
    results = []

    def work(n):
        results.append(prefix_sum(seq, n) == n * (n + 1) / 2)

    threads = [threading.Thread(target=work, args=(1000 * 7**k,)) for k in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(results) and len(results) == 6


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=1e-6, max_value=1e6), min_size=1, max_size=200))
def test_custom_prefix_matches_fsum(table):
    seq = LengthSequence.custom(table)
    n = len(table)
    assert prefix_sum(seq, n) == pytest.approx(math.fsum(table), rel=1e-15)
    assert np.all(seq.values(n)[1:] > 0)


def test_seed_checks_and_streams():
    assert check_seed(0) == 0
    for bad in (-1, 2**64, 1.5, True, "3"):
        with pytest.raises(ValueError):
            check_seed(bad)
    a = make_rng(5, 1, 2).random(4)
    np.testing.assert_array_equal(a, make_rng(5, 1, 2).random(4))
    assert not np.array_equal(a, make_rng(5, 1, 3).random(4))
