"""Registered cross-checks run by ``gluetrees verify``.

Each suite takes a :class:`SuiteContext` and returns ComparisonReports.  Every
Monte Carlo draw goes through :func:`mc_stats.collect_replicas` under a
namespace unique to the check, so suites can run in any order or alone and
still reproduce the same numbers.
"""
from __future__ import annotations

import math
import time
import zlib
from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from . import exact_laws as ex
from . import limit_laws as ll
from .glue_tree import GluedTree, sample_tree_depths, sample_tree_marks
from .mc_stats import (
    KS_TOL,
    TV_TOL,
    Z_TOL,
    ComparisonReport,
    EmpiricalSummary,
    collect_replicas,
    compare,
    compare_band,
    compare_ks,
    compare_tv,
    empirical_pmf,
    moment_compare,
)
from .sequences import LengthSequence

PUBLISHED_BETA = 1.594
PUBLISHED_C = 1.544
ROUND3 = 5e-4  # "matches to 3 decimals"
RESIDUAL_TOL = 1e-12
CURVE_TOL = 1e-8
LOG_DIFF_TOL = 0.01
PMF_SUM_TOL = 1e-10
IDENTITY_TOL = 1e-12
AN1_BAND = (0.45, 0.55)
AN1_HEIGHT_BAND = (1.30, 1.80)
ALPHA_HEIGHT_BAND = (0.6, 1.5)
BRANCH_TOL = 0.05
HEIGHT_TREES = 20


@dataclass(frozen=True)
class SuiteContext:
    seed: int
    workers: int = 1
    replicas: int = 100_000  # N for the sample-based checks


def _ns(*names: str) -> tuple:
    """Stream namespace for a check: a stable integer per name."""
    return tuple(zlib.crc32(s.encode()) for s in names)


def _collect(ctx: SuiteContext, sampler, N: int, *names: str, block: int = 8192) -> np.ndarray:
    return collect_replicas(sampler, N, ctx.seed, ctx.workers, block, _ns(*names))


# -- suites ---------------------------------------------------------------


def suite_constants(ctx: SuiteContext) -> List[ComparisonReport]:
    beta, c = ll.solve_beta_star()
    resid = abs(2.0 * math.expm1(beta) - beta * math.exp(beta))
    curve = ll.bd_constant_via_curve()
    return [
        compare("constants.beta_star", "abs", abs(beta - PUBLISHED_BETA), ROUND3, empirical=beta,
                reference=PUBLISHED_BETA, provenance="published value, 3 decimals"),
        compare("constants.height_constant", "abs", abs(c - PUBLISHED_C), ROUND3, empirical=c,
                reference=PUBLISHED_C, provenance="published value, 3 decimals"),
        compare("constants.beta_residual", "abs", resid, RESIDUAL_TOL, empirical=resid, reference=0.0,
                provenance="defining equation 2(e^b - 1) = b e^b"),
        compare("constants.curve_vs_root", "abs", abs(curve - c), CURVE_TOL, empirical=curve, reference=c,
                provenance="exact formula: e^b/(2b) from the root"),
    ]


def suite_mean(ctx: SuiteContext) -> List[ComparisonReport]:
    out = []
    for seq in (LengthSequence.constant(1.0), LengthSequence.power(1.0)):
        for n in (100, 10_000):
            x = _collect(ctx, lambda rng, size: sample_tree_depths(seq, n, rng, size), ctx.replicas,
                         "mean", seq.label, str(n))
            out.append(moment_compare(EmpiricalSummary.from_samples(x), ex.mean_dn_exact(seq, n), Z_TOL,
                                      f"mean.{seq.label}.n{n}", "exact formula: 1/2 sum a_i^2/A_i"))
    return out


def suite_representation(ctx: SuiteContext) -> List[ComparisonReport]:
    seq, n = LengthSequence.power(1.0), 1000
    tree = _collect(ctx, lambda rng, size: sample_tree_depths(seq, n, rng, size), ctx.replicas, "repr", "tree")
    iid = _collect(ctx, lambda rng, size: ex.dn_iid_sampler(seq, n, rng, size), ctx.replicas, "repr", "iid")
    return [compare_ks(f"representation.{seq.label}.n{n}", tree, iid, KS_TOL,
                       "other sampler: independent-sum representation")]


def suite_laplace(ctx: SuiteContext) -> List[ComparisonReport]:
    seq, n = LengthSequence.power(1.0), 1_000_000
    out = []
    for lam in (-1.0, 0.5, 1.0):
        fin = ex.log_laplace_dn_exact(seq, n, lam)
        lim = ll.phi_alpha(1.0, lam)
        out.append(compare(f"laplace.{seq.label}.n{n}.lam{lam:g}", "log_diff", abs(fin - lim), LOG_DIFF_TOL,
                           empirical=fin, reference=lim, provenance="limit formula: phi_alpha series"))
    return out


def suite_splitting(ctx: SuiteContext) -> List[ComparisonReport]:
    seq, n = LengthSequence.power(1.0), 100
    split = _collect(ctx, lambda rng, size: sample_tree_marks(seq, n, rng, size, 2)[2], ctx.replicas, "split")
    pmf = ex.splitting_index_pmf(seq, n).probabilities
    out = [compare_tv(f"splitting.{seq.label}.n{n}", empirical_pmf(split, n), pmf, TV_TOL,
                      "exact formula: splitting-index pmf")]
    for m in (100, 10_000, 1_000_000):
        s = math.fsum(ex.splitting_index_pmf(seq, m).probabilities)
        out.append(compare(f"splitting.pmf_sum.n{m}", "abs", abs(s - 1.0), PMF_SUM_TOL, empirical=s,
                           reference=1.0, provenance="normalization"))
    return out


def suite_xi(ctx: SuiteContext) -> List[ComparisonReport]:
    model = ll.LimitModel(1.0)
    xi = _collect(ctx, lambda rng, size: ll.xi_sampler(model, rng, size), ctx.replicas, "xi", "one")
    out = [moment_compare(EmpiricalSummary.from_samples(xi), model.mean(), Z_TOL, "xi.mean",
                          "exact formula: (alpha+1)/(2 alpha)")]
    e = np.exp(xi)
    m = float(e.mean())
    se = float(e.std(ddof=1)) / math.sqrt(e.size) / m  # delta method on the log
    emp = math.log(m)
    ref = model.phi(1.0)
    out.append(compare("xi.log_mgf.lam1", "z", abs(emp - ref) / se, Z_TOL, empirical=emp, se=se,
                       reference=ref, provenance="limit formula: phi_alpha(1)"))
    half = _collect(ctx, lambda rng, size: ll.xi_at_times(model, rng, size, [0.5])[0], ctx.replicas, "xi", "half")
    out.append(compare_ks("xi.self_similarity", half, 0.5 * xi, KS_TOL,
                          "self-similarity: xi(1/2) vs (1/2)^alpha xi(1)"))
    return out


def suite_functional(ctx: SuiteContext) -> List[ComparisonReport]:
    seq, n = LengthSequence.power(1.0), 100_000
    out = []
    for s, t in ((0.0, 0.5), (0.25, 0.75), (0.5, 1.0)):
        fin = math.log(ex.laplace_increment_exact(seq, n, s, t, 1.0))
        lim = ll.log_limit_laplace_increment(1.0, s, t, 1.0)
        out.append(compare(f"functional.s{s:g}.t{t:g}", "log_diff", abs(fin - lim), LOG_DIFF_TOL,
                           empirical=fin, reference=lim, provenance="limit formula: increment quadrature"))
    return out


def _an1_tree_stats(rng, size, n):
    seq = LengthSequence.constant(1.0)
    out = np.empty((2, size))
    for j in range(size):
        tree = GluedTree.build(seq, n, rng)
        out[0, j] = tree.sample_uniform_point(rng).depth
        leaves = tree.leaf_depths()[1:]
        out[1, j] = float(np.max(np.abs(leaves - (tree.genealogy_path_lengths()[1:] + 1.0))))
    return out


def _height_stats(rng, size, seq, n, with_small=None):
    out = np.empty((2, size))
    for j in range(size):
        h = GluedTree.build(seq, n, rng).heights_along_growth()
        out[0, j] = h[n]
        out[1, j] = h[with_small] if with_small else np.nan
    return out


def suite_an1(ctx: SuiteContext) -> List[ComparisonReport]:
    n, trees = 100_000, 100
    stats = _collect(ctx, lambda rng, size: _an1_tree_stats(rng, size, n), trees, "an1", "depth", block=1)
    ratio = float(stats[0].mean()) / math.log(n)
    worst = float(stats[1].max())
    nh, htrees = 1_000_000, HEIGHT_TREES
    hs = _collect(ctx, lambda rng, size: _height_stats(rng, size, LengthSequence.constant(1.0), nh),
                  htrees, "an1", "height", block=1)[0]
    h = float(hs.mean())
    c = ll.solve_beta_star()[1]
    return [
        compare_band("an1.depth_over_log_n", ratio, *AN1_BAND, "limit: 1/2 in probability",
                     n=n, trees=trees, se=float(stats[0].std(ddof=1)) / math.sqrt(trees) / math.log(n)),
        compare("an1.genealogy_identity", "abs", worst, IDENTITY_TOL, empirical=worst, reference=0.0,
                provenance="exact identity: leaf depth = genealogy path length + 1", details={"trees": trees}),
        compare_band("an1.height_over_log_n", h / math.log(nh), *AN1_HEIGHT_BAND,
                     f"limit constant e^b/(2b) = {c:.6f}, slow convergence", n=nh, trees=htrees,
                     se=float(hs.std(ddof=1)) / math.sqrt(htrees) / math.log(nh)),
    ]


def _alpha_stat(h, seq, n):
    return h * math.log(math.log(n)) / (float(seq.values(n)[n]) * math.log(n))


def suite_alpha_height(ctx: SuiteContext) -> List[ComparisonReport]:
    seq, n, small, trees = LengthSequence.power(1.0), 1_000_000, 1000, HEIGHT_TREES
    hs = _collect(ctx, lambda rng, size: _height_stats(rng, size, seq, n, small), trees, "aheight", block=1)
    big = float(np.mean([_alpha_stat(h, seq, n) for h in hs[0]]))
    little = float(np.mean([_alpha_stat(h, seq, small) for h in hs[1]]))
    trend = abs(big - 1.0) - abs(little - 1.0)
    return [
        compare_band("alpha_height.stat_n1e6", big, *ALPHA_HEIGHT_BAND, "limit 1 (slow: lnln n ~ 2.6)",
                     trees=trees),
        ComparisonReport("alpha_height.trend", "trend", trend, 0.0, bool(trend < 0.0), empirical=big,
                         reference=1.0, provenance="closer to the limit 1 at n=10^6 than at n=10^3",
                         details={"stat_n1e3": little, "stat_n1e6": big}),
    ]


def suite_ell_point(ctx: SuiteContext) -> List[ComparisonReport]:
    seq, n, ell, k = LengthSequence.power(1.0), 10_000, 3, 10
    an = float(seq.values(n)[n])
    x = _collect(ctx, lambda rng, size: ex.ell_point_conditional_sampler(seq, n, ell, k, rng, size) / an,
                 ctx.replicas, "ellpt", "cond")
    a, A = seq.values(n), seq.prefix_sums(n)
    j = np.arange(k + 2, n + 1)
    exact = math.fsum(a[j] ** 2 / (A[j - 1] + ell * a[j])) / (2.0 * an)
    out = []
    for c in range(ell):
        summ = EmpiricalSummary.from_samples(x[c])
        out.append(moment_compare(summ, 1.0, Z_TOL, f"ell_point.coord{c + 1}", "limit formula: mean of xi_(1)"))
        out.append(moment_compare(summ, exact, None, f"ell_point.coord{c + 1}.finite_n",
                                  "exact formula: finite-n conditional mean (diagnostic)"))
    trees = min(ctx.replicas, 10_000)
    mb = _collect(ctx, lambda rng, size: sample_tree_marks(seq, n, rng, size, ell)[1], trees, "ellpt", "branch")
    val = float(mb.mean()) / an
    out.append(compare("ell_point.max_branch_over_an", "abs", val, BRANCH_TOL, empirical=val, reference=0.0,
                       se=float(mb.std(ddof=1)) / math.sqrt(trees) / an,
                       provenance="limit: deepest branch point / a_n -> 0", details={"trees": trees}))
    return out


def suite_moments(ctx: SuiteContext) -> List[ComparisonReport]:
    """Diagnostic: D_n/a_n moments against the limit moments of xi_(1)."""
    seq, n = LengthSequence.power(1.0), 100_000
    an = float(seq.values(n)[n])
    x = _collect(ctx, lambda rng, size: sample_tree_depths(seq, n, rng, size), ctx.replicas, "moments") / an
    m = ll.xi_moments(1.0, 2)
    return [moment_compare(EmpiricalSummary.from_samples(x ** p), float(m[p]), None, f"moments.p{p}",
                           "limit formula: moments from the cumulants of phi_alpha") for p in (1, 2)]


SUITES: Dict[str, Callable[[SuiteContext], List[ComparisonReport]]] = {
    "constants": suite_constants,
    "mean": suite_mean,
    "representation": suite_representation,
    "laplace": suite_laplace,
    "splitting": suite_splitting,
    "xi": suite_xi,
    "functional": suite_functional,
    "an1": suite_an1,
    "alpha_height": suite_alpha_height,
    "ell_point": suite_ell_point,
    "moments": suite_moments,
}


def run_suites(names, ctx: SuiteContext) -> List[ComparisonReport]:
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}")
    out = []
    for name in names:
        t0 = time.perf_counter()
        reps = SUITES[name](ctx)
        dt = time.perf_counter() - t0
        for r in reps:
            r.runtime = dt / len(reps)
        out.extend(reps)
    return out
