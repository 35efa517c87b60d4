"""Monte Carlo replicas and the comparison metrics used by the verify suites.

Samples are produced in fixed-size blocks.  Block ``b`` always draws from
stream ``(seed, *namespace, b)`` and blocks are merged in index order, so
the result never depends on how many workers ran them.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence, Union

import numpy as np
from scipy import stats

from .rng import make_rng

DEFAULT_BLOCK = 8192
# sorted samples kept for the ECDF up to this many values
ECDF_CAP = 1_000_000

KS_TOL = 0.02
TV_TOL = 0.02
Z_TOL = 3.0

Sampler = Callable[[np.random.Generator, int], np.ndarray]


def collect_replicas(sampler: Sampler, N: int, seed: int, workers: int = 1,
                     block: int = DEFAULT_BLOCK, namespace: Sequence[int] = ()) -> np.ndarray:
    """Raw samples from ``sampler(rng, size)``, concatenated along the last axis."""
    if N < 1:
        raise ValueError("need at least one replica")
    if workers < 1:
        raise ValueError("need at least one worker")
    sizes = [min(block, N - lo) for lo in range(0, N, block)]

    def run(b: int) -> np.ndarray:
        return np.asarray(sampler(make_rng(seed, *namespace, b), sizes[b]))

    if workers == 1 or len(sizes) == 1:
        parts = [run(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    return np.concatenate(parts, axis=-1)


@dataclass
class EmpiricalSummary:
    n_samples: int
    mean: float
    variance: float  # unbiased
    m2: float  # central moments
    m3: float
    m4: float
    se: float
    sorted_samples: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def from_samples(cls, x, cap: int = ECDF_CAP) -> "EmpiricalSummary":
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size == 0:
            raise ValueError("empty sample")
        n = x.size
        mean = float(np.mean(x))
        d = x - mean
        m2 = float(np.mean(d * d))
        m3 = float(np.mean(d**3))
        m4 = float(np.mean(d**4))
        var = m2 * n / (n - 1) if n > 1 else 0.0
        return cls(n, mean, var, m2, m3, m4, math.sqrt(var / n),
                   np.sort(x) if n <= cap else None)

    def ecdf(self, x) -> np.ndarray:
        if self.sorted_samples is None:
            raise ValueError("sample too large; ECDF was not kept")
        return np.searchsorted(self.sorted_samples, x, side="right") / self.n_samples

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("sorted_samples")
        return d


def run_replicas(sampler: Sampler, N: int, seed: int, workers: int = 1,
                 block: int = DEFAULT_BLOCK, namespace: Sequence[int] = ()) -> EmpiricalSummary:
    return EmpiricalSummary.from_samples(collect_replicas(sampler, N, seed, workers, block, namespace))


def ks_distance(a, b: Union[np.ndarray, Callable]) -> float:
    """Sup distance between the ECDF of ``a`` and the ECDF of ``b`` (or the CDF ``b``)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.size == 0:
        raise ValueError("empty sample")
    if callable(b):
        return float(stats.kstest(a, b).statistic)
    b = np.asarray(b, dtype=np.float64).ravel()
    if b.size == 0:
        raise ValueError("empty sample")
    return float(stats.ks_2samp(a, b).statistic)


def tv_distance(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"pmfs on different supports: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def empirical_pmf(values, support_size: int) -> np.ndarray:
    """pmf of integer ``values`` on 1..support_size."""
    counts = np.bincount(np.asarray(values, dtype=np.int64), minlength=support_size + 1)
    if counts.size > support_size + 1:
        raise ValueError("values outside the support")
    return counts[1:] / counts.sum()


@dataclass
class ComparisonReport:
    name: str
    metric: str  # ks | tv | z | abs | rel | log_diff | band | value
    distance: float
    tolerance: Optional[float]
    passed: Optional[bool]  # None for diagnostics
    empirical: Optional[float] = None
    se: Optional[float] = None
    reference: Optional[float] = None
    provenance: str = ""
    details: Dict[str, Any] = field(default_factory=dict)
    runtime: float = 0.0

    def to_dict(self, with_runtime: bool = False) -> dict:
        d = asdict(self)
        if not with_runtime:
            d.pop("runtime")
        return d

    def line(self) -> str:
        status = "DIAG" if self.passed is None else ("PASS" if self.passed else "FAIL")
        tol = "" if self.tolerance is None else f" tol={self.tolerance:.4g}"
        return f"[{status}] {self.name}: {self.metric}={self.distance:.6g}{tol}"


def _judge(distance: float, tolerance: Optional[float]) -> Optional[bool]:
    if tolerance is None:
        return None
    return bool(distance <= tolerance)


def compare(name: str, metric: str, distance: float, tolerance: Optional[float], **kw) -> ComparisonReport:
    return ComparisonReport(name, metric, float(distance), tolerance, _judge(distance, tolerance), **kw)


def moment_compare(summary: EmpiricalSummary, reference: float, k_sigma: Optional[float] = Z_TOL,
                   name: str = "mean", provenance: str = "") -> ComparisonReport:
    """z-score of the sample mean against ``reference``; ``k_sigma=None`` reports only."""
    if not math.isfinite(reference):
        raise ValueError("reference must be finite")
    diff = abs(summary.mean - reference)
    details = {}
    if summary.se > 0:
        z = diff / summary.se
    elif diff == 0:
        z = 0.0
    else:
        z = math.inf
        details["flag"] = "zero standard error with mismatched values"
    return compare(name, "z", z, k_sigma, empirical=summary.mean, se=summary.se,
                   reference=reference, provenance=provenance, details=details)


def compare_ks(name: str, a, b, tolerance: Optional[float] = KS_TOL, provenance: str = "") -> ComparisonReport:
    return compare(name, "ks", ks_distance(a, b), tolerance, provenance=provenance,
                   details={"n_a": int(np.size(a)), "n_b": None if callable(b) else int(np.size(b))})


def compare_tv(name: str, p, q, tolerance: Optional[float] = TV_TOL, provenance: str = "") -> ComparisonReport:
    return compare(name, "tv", tv_distance(p, q), tolerance, provenance=provenance)


def compare_band(name: str, value: float, lo: float, hi: float, provenance: str = "", **details) -> ComparisonReport:
    """Pass iff lo <= value <= hi; distance is how far outside the band the value falls."""
    outside = max(lo - value, value - hi, 0.0)
    return ComparisonReport(name, "band", outside, 0.0, bool(lo <= value <= hi), empirical=value,
                            provenance=provenance, details={"band": [lo, hi], **details})
