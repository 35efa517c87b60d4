"""Closed-form finite-n laws and direct samplers built on the independent-sum
representation of the depth of a uniform point.

With r_i = a_i / A_i and i.i.d. uniforms U_i, V_i,

    D_n(k) = sum_{i <= k} a_i V_i 1{U_i <= r_i}.

The samplers never materialize the n x size Bernoulli matrix.  Hits of an
independent Bernoulli sequence with success probabilities p_i are generated
by inverting the cumulative hazard L_m = -sum_{i <= m} log(1 - p_i): the
first hit after index j is the smallest m with L_m > L_j + E, E ~ Exp(1).
That costs O(number of hits) per sample instead of O(n).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .sequences import LengthSequence

# exp() overflows a float64 beyond this log value
_MAX_LOG = 709.78


def g_minus_one(x) -> np.ndarray:
    """(e^x - 1)/x - 1, with the value 0 at x = 0."""
    x = np.asarray(x, dtype=np.float64)
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    with np.errstate(over="ignore"):  # inf propagates to the overflow check of the callers
        big = (np.expm1(safe) - safe) / safe
    series = x * (0.5 + x * (1.0 / 6.0 + x / 24.0))
    return np.where(small, series, big)


def _check_n(seq: LengthSequence, n: int) -> int:
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    seq.values(int(n))
    return int(n)


def _log_factor_sum(seq: LengthSequence, n: int, lam: float, lo: int, hi: int) -> float:
    """sum over lo < i <= hi of log E[exp(lam a_i V 1{U <= r_i} / a_n)]."""
    if hi <= lo:
        return 0.0
    a, r = seq.values(n), seq.ratios(n)
    i = slice(lo + 1, hi + 1)
    terms = np.log1p(r[i] * g_minus_one(lam * a[i] / a[n]))
    return math.fsum(terms)


def _checked_exp(logval: float) -> float:
    if logval > _MAX_LOG:
        raise OverflowError(f"Laplace transform out of float range (log value {logval:.4g})")
    return math.exp(logval)


def log_laplace_dn_exact(seq: LengthSequence, n: int, lam: float) -> float:
    n = _check_n(seq, n)
    return _log_factor_sum(seq, n, lam, 0, n)


def laplace_dn_exact(seq: LengthSequence, n: int, lam: float) -> float:
    """E[exp(lam D_n / a_n)] from the finite product formula."""
    return _checked_exp(log_laplace_dn_exact(seq, n, lam))


def laplace_increment_exact(seq: LengthSequence, n: int, s: float, t: float, lam: float) -> float:
    """E[exp(lam (xi_n(t) - xi_n(s)))] with xi_n(t) = D_n(floor(n t)) / a_n."""
    n = _check_n(seq, n)
    if not 0.0 <= s <= 1.0 or not 0.0 <= t <= 1.0:
        raise ValueError("s and t must lie in [0, 1]")
    if s > t:
        raise ValueError("need s <= t")
    lo, hi = math.floor(n * s), math.floor(n * t)
    return _checked_exp(_log_factor_sum(seq, n, lam, lo, hi))


def mean_dn_exact(seq: LengthSequence, n: int) -> float:
    """E[D_n] = (1/2) sum a_i^2 / A_i."""
    n = _check_n(seq, n)
    a, A = seq.values(n)[1:], seq.prefix_sums(n)[1:]
    return 0.5 * math.fsum(a * a / A)


@dataclass(frozen=True)
class SplittingPmf:
    """Law of the splitting index S_n(2); ``probabilities[k-1] = P(S = k)``."""

    n: int
    probabilities: np.ndarray

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probabilities)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        cdf = self.cdf()
        k = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right") + 1
        return np.minimum(k, self.n)


def splitting_index_pmf(seq: LengthSequence, n: int) -> SplittingPmf:
    """P(S = k) = r_k^2 prod_{k < i <= n} (1 - r_i^2)."""
    n = _check_n(seq, n)
    r = seq.ratios(n)
    logs = np.zeros(n + 2)
    # logs[k] = sum_{i > k} log(1 - r_i^2); r_1 = 1 never enters
    if n >= 2:
        tail = np.log1p(-(r[2:] ** 2))
        logs[1 : n] = np.cumsum(tail[::-1])[::-1]
    p = r[1:] ** 2 * np.exp(logs[1 : n + 1])
    return SplittingPmf(n, p)


@dataclass(frozen=True)
class BernoulliPairLaw:
    """Joint law of the pair (B^(i,1), B^(i,2)) used above the splitting index."""

    i: int
    p10: float
    p01: float
    p00: float
    p11: float = 0.0

    def conditional_given_other_zero(self) -> float:
        """P(B^(i,1) = 1 | B^(i,2) = 0)."""
        return self.p10 / (self.p10 + self.p00)


def bernoulli_pair_law(seq: LengthSequence, i: int) -> BernoulliPairLaw:
    i = _check_n(seq, i)
    a = float(seq.values(i)[i])
    A = seq.prefix_sums(i)
    denom = float(A[i]) + a
    q = a / denom
    return BernoulliPairLaw(i, q, q, float(A[i - 1]) / denom)


def uplet_masses(seq: LengthSequence, i: int, ell: int) -> Tuple[float, float]:
    """(mass of each single-1 configuration, mass of all zeros) of the l-uplet at index i."""
    i = _check_n(seq, i)
    a = float(seq.values(i)[i])
    prev = float(seq.prefix_sums(i)[i - 1])
    denom = prev + ell * a
    return a / denom, prev / denom


# -- samplers ---------------------------------------------------------------


def _hazard(p: np.ndarray, lo: int) -> np.ndarray:
    """Cumulative hazard L with L[j] = -sum_{lo <= i <= j} log(1 - p_i), 0 below lo."""
    L = np.zeros(p.size)
    if lo < p.size:
        L[lo:] = np.cumsum(-np.log1p(-p[lo:]))
    return L


def _bernoulli_hits(L: np.ndarray, start: np.ndarray, stop, rng: np.random.Generator):
    """Hit indices of independent Bernoullis on (start, stop] per sample.

    Yields ``(sample_ids, indices)`` batches in a fixed order.
    """
    cur = np.asarray(start, dtype=np.int64).copy()
    stop = np.broadcast_to(np.asarray(stop, dtype=np.int64), cur.shape)
    ids = np.nonzero(cur < stop)[0]
    while ids.size:
        target = L[cur[ids]] + rng.standard_exponential(ids.size)
        m = np.searchsorted(L, target, side="right")
        ok = m <= stop[ids]
        ids, m = ids[ok], m[ok]
        if ids.size:
            yield ids, m
        cur[ids] = m
        ids = ids[m < stop[ids]]


def _add_hits(out: np.ndarray, ids: np.ndarray, idx: np.ndarray, a: np.ndarray,
              rng: np.random.Generator, cuts=None, cut_out=None) -> None:
    contrib = a[idx] * rng.random(ids.size)
    np.add.at(out, ids, contrib)
    if cuts is not None:
        for j, k in enumerate(cuts):
            sel = idx <= k
            np.add.at(cut_out[j], ids[sel], contrib[sel])


def dn_iid_sampler(seq: LengthSequence, n: int, rng: np.random.Generator, size: int,
                   upto: Optional[Sequence[int]] = None):
    """Samples of D_n from the independent-sum representation.

    With ``upto`` also returns D_n(k) for each requested k, shape (len(upto), size).
    """
    n = _check_n(seq, n)
    a, r = seq.values(n), seq.ratios(n)
    ks = [] if upto is None else [int(k) for k in upto]
    if any(not 1 <= k <= n for k in ks):
        raise ValueError("projection indices must lie in [1, n]")
    out = np.zeros(size)
    cut_out = np.zeros((len(ks), size))
    # r_1 = 1: the first index always contributes
    first = a[1] * rng.random(size)
    out += first
    cut_out += first
    L = _hazard(r, 2)
    for ids, idx in _bernoulli_hits(L, np.ones(size, dtype=np.int64), n, rng):
        _add_hits(out, ids, idx, a, rng, ks, cut_out)
    if upto is None:
        return out
    return out, cut_out


def two_point_joint_sampler(seq: LengthSequence, n: int, rng: np.random.Generator, size: int,
                            c: Optional[float] = None):
    """Joint depths of two uniform points built around their splitting index.

    Returns ``(kappa, d1, d2)`` and, when a cut fraction ``c`` is given, also the
    projected depths at k = floor(n c) as ``(kappa, d1, d2, d1_cut, d2_cut)``.
    """
    n = _check_n(seq, n)
    a, A, r = seq.values(n), seq.prefix_sums(n), seq.ratios(n)
    kappa = splitting_index_pmf(seq, n).sample(rng, size)
    cut = None if c is None else math.floor(n * c)
    cuts = None if cut is None else [cut]
    shared = np.zeros(size)
    shared_cut = np.zeros((1, size))
    # shared path below kappa
    first = a[1] * rng.random(size)
    below = kappa > 1
    shared[below] += first[below]
    if cut is not None and cut >= 1:
        shared_cut[:, below] += first[below]
    L = _hazard(r, 2)
    for ids, idx in _bernoulli_hits(L, np.ones(size, dtype=np.int64), kappa - 1, rng):
        _add_hits(shared, ids, idx, a, rng, cuts, shared_cut)
    d = [shared.copy(), shared.copy()]
    d_cut = [shared_cut[0].copy(), shared_cut[0].copy()]
    # two independent uniforms on the splitting segment
    for j in range(2):
        contrib = a[kappa] * rng.random(size)
        d[j] += contrib
        if cut is not None:
            d_cut[j] += np.where(kappa <= cut, contrib, 0.0)
    # above kappa: at most one of the two paths picks up segment i
    q2 = np.zeros(n + 1)
    q2[2:] = 2.0 * a[2:] / (A[2:] + a[2:])
    L2 = _hazard(q2, 2)
    for ids, idx in _bernoulli_hits(L2, kappa, n, rng):
        which = rng.random(ids.size) < 0.5
        contrib = a[idx] * rng.random(ids.size)
        for j, sel in enumerate((which, ~which)):
            np.add.at(d[j], ids[sel], contrib[sel])
            if cut is not None:
                keep = sel & (idx <= cut)
                np.add.at(d_cut[j], ids[keep], contrib[keep])
    if cut is None:
        return kappa, d[0], d[1]
    return kappa, d[0], d[1], d_cut[0], d_cut[1]


def ell_point_conditional_sampler(seq: LengthSequence, n: int, ell: int, k: int,
                                  rng: np.random.Generator, size: int) -> np.ndarray:
    """Tail increments sum_{i=k+2}^n a_i V_i^(j) B^(i,j), j = 1..ell, shape (ell, size).

    This is the law of (D_n^(j) - D_n^(j)(k+1))_j given that the deepest
    pairwise branch point lies in T_k.
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    if not (int(k) == k and 1 <= k < n):
        raise ValueError("need 1 <= k < n")
    n = _check_n(seq, n)
    a, A = seq.values(n), seq.prefix_sums(n)
    out = np.zeros((ell, size))
    if n == k + 1:
        return out
    p = np.zeros(n + 1)
    i = np.arange(k + 2, n + 1)
    p[i] = ell * a[i] / (A[i - 1] + ell * a[i])
    L = _hazard(p, k + 2)
    for ids, idx in _bernoulli_hits(L, np.full(size, k + 1, dtype=np.int64), n, rng):
        which = rng.integers(0, ell, ids.size)
        contrib = a[idx] * rng.random(ids.size)
        np.add.at(out, (which, ids), contrib)
    return out


def log_laplace_conditional_exact(seq: LengthSequence, n: int, ell: int, k: int,
                                  lambdas: Sequence[float]) -> float:
    """log E[exp(sum_j lambda_j (D_n^(j) - D_n^(j)(k+1)) / a_n) | B_n(ell) in T_k].

    Per index j in [k+2, n] the factor is 1 + w_j sum_i (g(lambda_i a_j / a_n) - 1)
    with w_j = a_j / (A_{j-1} + ell a_j).
    """
    if len(lambdas) != ell:
        raise ValueError("need one lambda per marked point")
    n = _check_n(seq, n)
    if n <= k + 1:
        return 0.0
    a, A = seq.values(n), seq.prefix_sums(n)
    j = np.arange(k + 2, n + 1)
    w = a[j] / (A[j - 1] + ell * a[j])
    total = np.zeros(j.size)
    for lam in lambdas:
        total += g_minus_one(lam * a[j] / a[n])
    return math.fsum(np.log1p(w * total))


def d_infinity_mean(seq: LengthSequence, n: int, horizon: Optional[int] = None) -> Tuple[float, float]:
    """Truncated mean of D_infinity and the mean-series tail between n and ``horizon``.

    Meaningful in the summable regime, where D_n increases to a finite limit;
    ``horizon`` defaults to 10 n (capped by a custom table).
    """
    m = mean_dn_exact(seq, n)
    horizon = 10 * n if horizon is None else horizon
    if seq.max_index is not None:
        horizon = min(horizon, seq.max_index)
    tail = mean_dn_exact(seq, horizon) - m if horizon > n else 0.0
    return m, tail


def d_infinity_sampler(seq: LengthSequence, rng: np.random.Generator, size: int,
                       horizon: int = 1_000_000) -> Tuple[np.ndarray, float]:
    """Samples of D_horizon as a stand-in for D_infinity, with the mean of the neglected part.

    In the summable regime D_n increases to D_infinity; the returned bound is
    E[D_{10 horizon}] - E[D_horizon], an estimate of the truncation error in mean.
    """
    _, tail = d_infinity_mean(seq, horizon)
    return dn_iid_sampler(seq, horizon, rng, size), tail
