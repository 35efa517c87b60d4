"""Length sequences (a_n) and their prefix sums.

Four kinds are built in:

* ``constant(c)``   a_n = c
* ``power(alpha)``  a_n = n**alpha
* ``logpower(gamma)`` a_n = ln(n + 1)**gamma
* ``custom(table)`` a finite table of positive values

The logarithmic kind is shifted by one (``ln(n + 1)`` rather than ``ln n``)
so that a_1 > 0 for every gamma; the shift does not change the index of
regular variation, which stays 0.

Values and prefix sums are cached in float64 arrays.  The prefix sums are
accumulated in extended precision (``np.longdouble``) and rounded once, and
the cache is always rebuilt from index 1 when it grows, so the values seen by
callers never depend on the order in which sizes were requested.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

KINDS = ("constant", "power", "logpower", "custom")

_MIN_CAPACITY = 1024


class SequenceError(ValueError):
    """Raised for invalid sequence parameters or out-of-range indices."""


@dataclass(frozen=True, eq=False)
class LengthSequence:
    kind: str
    param: float = 1.0
    table: Optional[tuple] = None
    rv_index: Optional[float] = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _lock: Any = field(default_factory=threading.Lock, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SequenceError(f"unknown sequence kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "constant" and not self.param > 0:
            raise SequenceError("constant sequence needs c > 0")
        if self.kind == "power" and not (self.param >= 0 and math.isfinite(self.param)):
            raise SequenceError("power sequence needs a finite alpha >= 0")
        if self.kind == "logpower" and not math.isfinite(self.param):
            raise SequenceError("logpower sequence needs a finite gamma")
        if self.kind == "custom":
            if self.table is None or len(self.table) == 0:
                raise SequenceError("custom sequence needs a non-empty table")
            arr = np.asarray(self.table, dtype=np.float64)
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise SequenceError("custom table entries must be finite and > 0")
        if self.rv_index is not None and not self.rv_index >= 0:
            raise SequenceError("declared rv_index must be >= 0")

    # -- constructors ---------------------------------------------------
    @classmethod
    def constant(cls, c: float = 1.0) -> "LengthSequence":
        return cls("constant", float(c))

    @classmethod
    def power(cls, alpha: float) -> "LengthSequence":
        return cls("power", float(alpha))

    @classmethod
    def logpower(cls, gamma: float) -> "LengthSequence":
        return cls("logpower", float(gamma))

    @classmethod
    def custom(cls, table: Sequence[float], rv_index: Optional[float] = None) -> "LengthSequence":
        return cls("custom", table=tuple(float(x) for x in table), rv_index=rv_index)

    @classmethod
    def from_config(cls, spec: Mapping[str, Any]) -> "LengthSequence":
        """Build from a config mapping such as ``{"kind": "power", "alpha": 1.0}``."""
        if not isinstance(spec, Mapping) or "kind" not in spec:
            raise SequenceError("sequence spec must be an object with a 'kind' field")
        kind = spec["kind"]
        if kind == "constant":
            return cls.constant(spec.get("c", 1.0))
        if kind == "power":
            return cls.power(spec["alpha"])
        if kind == "logpower":
            return cls.logpower(spec["gamma"])
        if kind == "custom":
            return cls.custom(spec["table"], spec.get("rv_index"))
        raise SequenceError(f"unknown sequence kind {kind!r}")

    def to_config(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "c": self.param}
        if self.kind == "power":
            return {"kind": "power", "alpha": self.param}
        if self.kind == "logpower":
            return {"kind": "logpower", "gamma": self.param}
        out = {"kind": "custom", "table": list(self.table)}
        if self.rv_index is not None:
            out["rv_index"] = self.rv_index
        return out

    @property
    def label(self) -> str:
        if self.kind == "custom":
            return f"custom[{len(self.table)}]"
        return f"{self.kind}({self.param:g})"

    @property
    def max_index(self) -> Optional[int]:
        return len(self.table) if self.kind == "custom" else None

    @property
    def declared_index(self) -> Optional[float]:
        """Index of regular variation when it is known from the kind."""
        if self.kind == "power":
            return self.param
        if self.kind in ("constant", "logpower"):
            return 0.0
        return self.rv_index

    # -- raw values -----------------------------------------------------
    def _raw(self, idx: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.full(idx.shape, self.param, dtype=np.float64)
        if self.kind == "power":
            return idx.astype(np.float64) ** self.param
        if self.kind == "logpower":
            return np.log1p(idx.astype(np.float64)) ** self.param
        return np.asarray(self.table, dtype=np.float64)[idx - 1]

    def _ensure(self, n: int) -> dict:
        cache = self._cache
        if cache.get("size", -1) >= n:
            return cache
        with self._lock:
            if cache.get("size", -1) >= n:
                return cache
            cap = max(n, _MIN_CAPACITY, 2 * cache.get("size", 0))
            if self.max_index is not None:
                cap = min(cap, self.max_index)
            a = np.empty(cap + 1)
            a[0] = 0.0
            a[1:] = self._raw(np.arange(1, cap + 1))
            A = np.empty(cap + 1)
            A[:] = np.cumsum(a.astype(np.longdouble))
            a.setflags(write=False)
            A.setflags(write=False)
            cache["a"], cache["A"] = a, A
            cache["size"] = cap
        return cache

    def _check(self, n: int, lo: int) -> int:
        if isinstance(n, (bool, np.bool_)) or int(n) != n:
            raise SequenceError(f"index must be an integer, got {n!r}")
        n = int(n)
        if n < lo:
            raise SequenceError(f"index must be >= {lo}, got {n}")
        if self.max_index is not None and n > self.max_index:
            raise SequenceError(f"index {n} beyond custom table of length {self.max_index}")
        return n

    def values(self, n: int) -> np.ndarray:
        """Read-only array ``[0, a_1, ..., a_n]`` (slot 0 is padding)."""
        n = self._check(n, 0)
        return self._ensure(n)["a"][: n + 1]

    def prefix_sums(self, n: int) -> np.ndarray:
        """Read-only array ``[A_0, A_1, ..., A_n]`` with A_0 = 0."""
        n = self._check(n, 0)
        return self._ensure(n)["A"][: n + 1]

    def ratios(self, n: int) -> np.ndarray:
        """``[0, a_1/A_1, ..., a_n/A_n]``."""
        a, A = self.values(n), self.prefix_sums(n)
        r = np.zeros(n + 1)
        r[1:] = a[1:] / A[1:]
        return r


def a_value(seq: LengthSequence, n: int) -> float:
    n = seq._check(n, 1)
    return float(seq.values(n)[n])


def prefix_sum(seq: LengthSequence, n: int) -> float:
    n = seq._check(n, 0)
    return float(seq.prefix_sums(n)[n])


def harmonic_weighted_sum(seq: LengthSequence, n: int) -> float:
    """Sum of a_i / i for i = 1..n."""
    n = seq._check(n, 1)
    a = seq.values(n)[1:]
    return math.fsum(a / np.arange(1, n + 1))


def rv_index_estimate(seq: LengthSequence, n: int) -> float:
    """a_n divided by the sum of a_i / i; tends to the index of regular variation."""
    return a_value(seq, n) / harmonic_weighted_sum(seq, n)
