"""Limit objects for the rescaled depths and heights.

``phi_alpha`` is the Laplace exponent of xi_(alpha),

    phi(lam) = (alpha + 1)/alpha * sum_{k >= 1} lam^k / ((k + 1)! k),

whose cumulants are kappa_k = (alpha + 1) / (alpha k (k + 1)).  The process
xi_(alpha)(t) is the sum of the v-coordinates of a Poisson point process with
intensity (alpha + 1) t^(-alpha-1) 1{v <= t^alpha} dt dv.  It is simulated
after discarding the atoms with t <= eps, whose total has mean
(alpha + 1) eps^alpha / (2 alpha).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import integrate, optimize

from .exact_laws import g_minus_one
from .sequences import LengthSequence, harmonic_weighted_sum, rv_index_estimate

SERIES_TOL = 1e-12
AGREEMENT_TOL = 1e-10


class NumericalError(ArithmeticError):
    """A quadrature, root-finder or optimizer did not meet its tolerance."""


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not alpha > 0 or not math.isfinite(alpha):
        raise ValueError(f"alpha must be a finite positive number, got {alpha}")
    return alpha


def phi_series(alpha: float, lam: float) -> float:
    alpha = _check_alpha(alpha)
    total = 0.0
    term = 1.0  # lam^k / (k+1)!
    k = 0
    while True:
        k += 1
        term *= lam / (k + 1)
        piece = term / k
        total += piece
        # terms shrink geometrically once k > |lam|
        if k > abs(lam) + 1 and abs(piece) <= SERIES_TOL * max(1.0, abs(total)) * 1e-3:
            break
    return (alpha + 1.0) / alpha * total


def phi_quadrature(alpha: float, lam: float) -> float:
    alpha = _check_alpha(alpha)

    def integrand(u):
        if u == 0.0:
            return lam
        return math.expm1(lam * u) * (1.0 - u) / u

    val, err = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    if not err < 1e-11 * max(1.0, abs(val)):
        raise NumericalError(f"quadrature for phi did not converge (error estimate {err:.3g})")
    return (alpha + 1.0) / alpha * val


def phi_alpha(alpha: float, lam: float) -> float:
    """Laplace exponent: log E[exp(lam xi_(alpha))].

    Evaluated by the power series and checked against direct quadrature.
    """
    s = phi_series(alpha, lam)
    q = phi_quadrature(alpha, lam)
    if abs(s - q) > AGREEMENT_TOL * max(1.0, abs(s)):
        raise NumericalError(f"series {s!r} and quadrature {q!r} disagree for phi({alpha}, {lam})")
    return s


def xi_cumulant(alpha: float, k: int) -> float:
    alpha = _check_alpha(alpha)
    if k < 1:
        raise ValueError("cumulant order starts at 1")
    return (alpha + 1.0) / (alpha * k * (k + 1))


def xi_moments(alpha: float, order: int) -> np.ndarray:
    """Raw moments E[xi^j], j = 0..order, from the cumulants."""
    kap = [0.0] + [xi_cumulant(alpha, k) for k in range(1, order + 1)]
    m = np.zeros(order + 1)
    m[0] = 1.0
    for j in range(1, order + 1):
        m[j] = sum(math.comb(j - 1, i - 1) * kap[i] * m[j - i] for i in range(1, j + 1))
    return m


# -- Poisson sampler -------------------------------------------------------


@dataclass(frozen=True)
class LimitModel:
    """alpha together with the truncation used by the Poisson sampler."""

    alpha: float
    tol: float = 1e-4
    eps: float = field(init=False)

    def __post_init__(self):
        _check_alpha(self.alpha)
        if not 0 < self.tol < 1:
            raise ValueError("truncation tolerance must lie in (0, 1)")
        a = self.alpha
        eps = (2.0 * a * self.tol / (a + 1.0)) ** (1.0 / a)
        if not 0 < eps < 1:
            raise ValueError(f"truncation level {eps} outside (0, 1); lower tol")
        object.__setattr__(self, "eps", eps)

    @property
    def discarded_mean(self) -> float:
        """Mean of the total mass carried by the discarded atoms t <= eps."""
        a = self.alpha
        return (a + 1.0) * self.eps**a / (2.0 * a)

    @property
    def atom_rate(self) -> float:
        return (self.alpha + 1.0) * math.log(1.0 / self.eps)

    def phi(self, lam: float) -> float:
        return phi_alpha(self.alpha, lam)

    def mean(self) -> float:
        return (self.alpha + 1.0) / (2.0 * self.alpha)


@dataclass(frozen=True)
class XiPath:
    """A realization of xi_(alpha) on [0, 1] as atoms (t_i, v_i), sorted by t."""

    t: np.ndarray
    v: np.ndarray

    def __call__(self, s):
        s = np.asarray(s, dtype=np.float64)
        csum = np.concatenate(([0.0], np.cumsum(self.v)))
        return csum[np.searchsorted(self.t, s, side="right")]


def _atoms(model: LimitModel, rng: np.random.Generator, size: int):
    counts = rng.poisson(model.atom_rate, size)
    total = int(counts.sum())
    # density proportional to 1/t on (eps, 1]
    t = model.eps ** rng.random(total)
    v = t**model.alpha * rng.random(total)
    owner = np.repeat(np.arange(size), counts)
    return owner, t, v


def xi_sampler(model: LimitModel, rng: np.random.Generator, size: int) -> np.ndarray:
    """Samples of xi_(alpha)(1)."""
    owner, _, v = _atoms(model, rng, size)
    return np.bincount(owner, weights=v, minlength=size)


def xi_at_times(model: LimitModel, rng: np.random.Generator, size: int, times) -> np.ndarray:
    """Samples of (xi(s) for s in times), shape (len(times), size), from shared paths."""
    owner, t, v = _atoms(model, rng, size)
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    return np.stack([np.bincount(owner, weights=np.where(t <= s, v, 0.0), minlength=size) for s in times])


def xi_process_sampler(model: LimitModel, rng: np.random.Generator) -> XiPath:
    _, t, v = _atoms(model, rng, 1)
    order = np.argsort(t, kind="stable")
    return XiPath(t[order], v[order])


# -- finite-dimensional laws ------------------------------------------------


def log_limit_laplace_increment(alpha: float, s: float, t: float, lam: float) -> float:
    """log E[exp(lam (xi(t) - xi(s)))] = (alpha+1) int_s^t (g(lam x^alpha) - 1) / x dx."""
    alpha = _check_alpha(alpha)
    if not 0.0 <= s <= t <= 1.0:
        raise ValueError("need 0 <= s <= t <= 1")
    if s == t:
        return 0.0

    def integrand(x):
        if x == 0.0:
            return 0.0
        return float(g_minus_one(lam * x**alpha)) / x

    val, err = integrate.quad(integrand, s, t, epsabs=1e-13, epsrel=1e-12, limit=200)
    if not err < 1e-10 * max(1.0, abs(val)):
        raise NumericalError(f"increment quadrature did not converge (error estimate {err:.3g})")
    return (alpha + 1.0) * val


def limit_laplace_increment(alpha: float, s: float, t: float, lam: float) -> float:
    return math.exp(log_limit_laplace_increment(alpha, s, t, lam))


# -- uniform leaf ------------------------------------------------------------


def uniform_leaf_limit(model: LimitModel, rng: np.random.Generator, size: int) -> np.ndarray:
    """Samples of (1 + xi) U^alpha, the rescaled depth of a uniform leaf."""
    xi = xi_sampler(model, rng, size)
    return (1.0 + xi) * rng.random(size) ** model.alpha


def uniform_leaf_moment(alpha: float, p: float, rng: Optional[np.random.Generator] = None,
                        size: int = 100_000) -> float:
    """E[((1 + xi) U^alpha)^p] = E[(1 + xi)^p] / (alpha p + 1).

    Exact for integer p (moments from cumulants); Monte Carlo otherwise, which
    needs ``rng``.
    """
    alpha = _check_alpha(alpha)
    if p < 0:
        raise ValueError("p must be >= 0")
    if float(p).is_integer():
        p = int(p)
        m = xi_moments(alpha, p)
        one_plus = sum(math.comb(p, j) * m[j] for j in range(p + 1))
    else:
        if rng is None:
            raise ValueError("non-integer moments are estimated by Monte Carlo; pass an rng")
        xi = xi_sampler(LimitModel(alpha), rng, size)
        one_plus = float(np.mean((1.0 + xi) ** p))
    return one_plus / (alpha * p + 1.0)


# -- regimes ---------------------------------------------------------------


@dataclass(frozen=True)
class Regime:
    """Which limit the typical depth divided by sum a_i / i follows."""

    kind: str  # alpha_positive | zero_index_divergent | zero_index_summable
    alpha: float
    limit: str

    def to_dict(self) -> dict:
        return {"regime": self.kind, "alpha": self.alpha, "limit": self.limit}


def _regime(alpha: float, summable: bool) -> Regime:
    if alpha > 0:
        return Regime("alpha_positive", alpha, f"{alpha:g} * xi_({alpha:g}) in distribution")
    if summable:
        return Regime("zero_index_summable", 0.0, "D_infinity (D_n converges, finite mean)")
    return Regime("zero_index_divergent", 0.0, "1/2 in probability")


def classify_regime(seq: LengthSequence, horizon: Optional[int] = None,
                    summable_threshold: float = 0.02, index_threshold: float = 0.1) -> Regime:
    """Classify ``seq`` into one of the three regimes for the typical depth.

    Built-in kinds are classified from their parameters.  Custom tables need a
    declared index; when that index is 0 (or undeclared), a ``horizon`` is
    required and two finite-horizon heuristics decide:

    * the index is estimated by a_h / sum_{i <= h} a_i / i
      (positive if above ``index_threshold``);
    * the sum of a_i / i is deemed summable when its last decade
      (h/10, h] contributes less than ``summable_threshold`` of the total.
    """
    if seq.kind == "power":
        return _regime(seq.param, False)
    if seq.kind == "constant":
        return _regime(0.0, False)
    if seq.kind == "logpower":
        return _regime(0.0, seq.param < -1.0)
    declared = seq.rv_index
    if declared is not None and declared > 0:
        return _regime(declared, False)
    if horizon is None:
        raise ValueError("custom sequence without a positive declared index needs a horizon")
    h = min(int(horizon), seq.max_index)
    if h < 10:
        raise ValueError("horizon too short for the divergence test")
    if declared is None:
        est = rv_index_estimate(seq, h)
        if est > index_threshold:
            return _regime(est, False)
    total = harmonic_weighted_sum(seq, h)
    last_decade = total - harmonic_weighted_sum(seq, h // 10)
    return _regime(0.0, last_decade < summable_threshold * total)


# -- height constants for a_n = 1 -----------------------------------------


def _beta_equation(beta: float) -> float:
    return 2.0 * math.expm1(beta) - beta * math.exp(beta)


def solve_beta_star() -> Tuple[float, float]:
    """Positive root of 2(e^b - 1) = b e^b and the height constant e^b / (2b)."""
    beta = optimize.brentq(_beta_equation, 1.0, 2.0, xtol=1e-15, rtol=1e-15, maxiter=200)
    if abs(_beta_equation(beta)) >= 1e-12:
        raise NumericalError("beta* residual above 1e-12")
    return beta, math.exp(beta) / (2.0 * beta)


def h_fun(u: float) -> float:
    """h(u) = 1 + (e^u - 1)/u, h(0) = 2."""
    return 2.0 + float(g_minus_one(u))


def h_log_derivative(u: float) -> float:
    """h'(u) / h(u); equals 1/4 at u = 0."""
    if abs(u) < 1e-4:
        # g'(u) = 1/2 + u/3 + u^2/8 + ...
        gp = 0.5 + u / 3.0 + u * u / 8.0
    else:
        gp = (u * math.exp(u) - math.expm1(u)) / (u * u)
    return gp / h_fun(u)


def lambda_of(t: float) -> float:
    """Inverse of u -> h'(u)/h(u), an increasing bijection R -> (0, 1)."""
    if not 0.0 < t < 1.0:
        raise ValueError("t must lie in (0, 1)")
    if t == 0.25:
        return 0.0
    f = lambda u: h_log_derivative(u) - t
    lo, hi = (0.0, 1.0) if t > 0.25 else (-1.0, 0.0)
    while f(hi) < 0:
        lo, hi = hi, 2.0 * hi
        if hi > 700:
            raise NumericalError("lambda(t) bracket overflow")
    while f(lo) > 0:
        lo, hi = 2.0 * lo, lo
        if lo < -1e6:
            raise NumericalError("lambda(t) bracket underflow")
    return optimize.brentq(f, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)


def rate_z(t: float) -> float:
    """Legendre transform of log E[e^{tZ}], Z ~ (delta_0 + Unif[0,1]) / 2, on (0, 1)."""
    lam = lambda_of(t)
    return t * lam - math.log(h_fun(lam)) + math.log(2.0)


def rate_e(t: float) -> float:
    """Legendre transform for a standard exponential (t > 0); the curve uses t in (0, 1)."""
    if not t > 0.0:
        raise ValueError("t must be > 0")
    return t - 1.0 - math.log(t)


def _rho_on_curve(a: float) -> float:
    target = math.log(2.0) - rate_z(a)
    if target <= 0:
        return 1.0
    return optimize.brentq(lambda r: rate_e(r) - target, 1e-300, 1.0 - 1e-16, xtol=1e-16, rtol=1e-15, maxiter=500)


def bd_constant_via_curve() -> float:
    """Maximum of a/rho along rate_z(a) + rate_e(rho) = ln 2, 1/4 <= a < 1, 0 < rho < 1."""
    ln2 = math.log(2.0)
    # right end of the curve: rate_z reaches ln 2 there and rho -> 1
    a_hi = optimize.brentq(lambda a: rate_z(a) - ln2, 0.25 + 1e-12, 0.99, xtol=1e-15)
    res = optimize.minimize_scalar(lambda a: -a / _rho_on_curve(a), bounds=(0.25, a_hi),
                                   method="bounded", options={"xatol": 1e-12, "maxiter": 500})
    if not res.success:
        raise NumericalError(f"curve maximization failed: {res.message}")
    return float(-res.fun)
