"""Exact simulator of the glued-segment tree T_n.

Segment ``b_m`` (length a_m) is glued at a point of T_{m-1} chosen by length:
segment i is picked with probability a_i / A_{m-1} and the gluing point is
uniform on it.  The root is the offset-0 end of ``b_1``.

Randomness is counter-based.  A tree is identified by a 64-bit key, and the
two uniforms used to glue segment m are a hash of ``(key, m)``:

* lane 0, ``u``: picks the parent as the lowest index i with A_i > u * A_{m-1}
* lane 1, ``v``: the gluing offset ``v * a_parent``

Since the lengths are deterministic, the parent of m never depends on the
rest of the tree, so the same tree can be either materialized
(:class:`GluedTree`) or walked lazily along the ancestor chains of a few
marked points (the ``sample_*`` functions below).  Both views see the same
parents and offsets bit for bit; only the order of the depth summations
differs.
"""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .sequences import LengthSequence

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(11)
_ONE = np.uint64(1)
_TO_UNIT = 2.0**-53

PathLike = Union[str, os.PathLike]


class TreeCorruptionError(RuntimeError):
    """Parent pointers do not lead back to the root segment."""


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def segment_uniforms(keys, m) -> Tuple[np.ndarray, np.ndarray]:
    """The gluing uniforms ``(u, v)`` of segment ``m`` in the tree ``keys``.

    ``keys`` and ``m`` broadcast against each other.  Values lie in [0, 1).
    """
    keys = np.asarray(keys, dtype=np.uint64)
    ctr = np.asarray(m, dtype=np.uint64) << _ONE
    with np.errstate(over="ignore"):  # arithmetic is mod 2^64 by design
        base = keys + ctr * _GOLDEN
        u = (_mix64(base + _GOLDEN) >> _S11).astype(np.float64) * _TO_UNIT
        v = (_mix64(base + _GOLDEN + _GOLDEN) >> _S11).astype(np.float64) * _TO_UNIT
    return u, v


def new_keys(rng: np.random.Generator, size=None):
    return rng.integers(0, 2**64, size=size, dtype=np.uint64, endpoint=False)


def _pick_segments(A: np.ndarray, u: np.ndarray, upto: np.ndarray) -> np.ndarray:
    """Lowest i <= upto with A_i > u * A_upto."""
    x = u * A[upto]
    i = np.searchsorted(A, x, side="right")
    return np.clip(i, 1, upto)


def glue_choices(seq: LengthSequence, keys, m) -> Tuple[np.ndarray, np.ndarray]:
    """Parent index and gluing offset of segment(s) ``m >= 2``."""
    m = np.asarray(m, dtype=np.int64)
    top = int(m.max()) if m.size else 1
    a, A = seq.values(top), seq.prefix_sums(top)
    u, v = segment_uniforms(keys, m)
    parent = _pick_segments(A, u, m - 1)
    return parent, v * a[parent]


@dataclass(frozen=True)
class MarkedPoint:
    segment: int
    offset: float
    depth: float


@dataclass
class MarkResult:
    points: List[MarkedPoint]
    branch_depths: np.ndarray  # (l, l); diagonal holds the point depths
    splitting_index: Optional[int]  # only for l == 2
    max_branch_depth: Optional[float]  # None when l == 1


class GluedTree:
    """A materialized tree T_n.

    Arrays are indexed by segment number; slot 0 is padding.  ``parent[1]`` is
    0 and ``attach_offset[1] = base_depth[1] = 0``.
    """

    def __init__(self, seq: LengthSequence, key: int):
        self.seq = seq
        self.key = np.uint64(key)
        self.n = 1
        cap = 16
        self._parent = np.zeros(cap, dtype=np.int64)
        self._offset = np.zeros(cap)
        self._base = np.zeros(cap)
        seq.values(1)

    # -- construction -----------------------------------------------------
    @classmethod
    def build(cls, seq: LengthSequence, n: int, rng: Optional[np.random.Generator] = None,
              key: Optional[int] = None) -> "GluedTree":
        """Grow T_n in one pass.  Draws the tree key from ``rng`` unless given."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if key is None:
            if rng is None:
                raise ValueError("need an rng or an explicit key")
            key = new_keys(rng)
        tree = cls(seq, key)
        parent = np.zeros(n + 1, dtype=np.int64)
        offset = np.zeros(n + 1)
        if n >= 2:
            m = np.arange(2, n + 1)
            parent[2:], offset[2:] = glue_choices(seq, tree.key, m)
        tree._parent, tree._offset = parent, offset
        tree._base = _base_depths(parent, offset)
        tree.n = n
        return tree

    @classmethod
    def from_arrays(cls, seq: LengthSequence, parents: Sequence[int],
                    offsets: Sequence[float]) -> "GluedTree":
        """Tree with hand-placed gluing.  ``parents``/``offsets`` list segments 2..n."""
        n = len(parents) + 1
        parent = np.zeros(n + 1, dtype=np.int64)
        offset = np.zeros(n + 1)
        parent[2:] = parents
        offset[2:] = offsets
        a = seq.values(n)
        for m in range(2, n + 1):
            p = parent[m]
            if not 1 <= p < m:
                raise ValueError(f"segment {m} must glue onto an earlier segment, got {p}")
            if not 0 <= offset[m] < a[p]:
                raise ValueError(f"offset of segment {m} outside its parent")
        tree = cls(seq, 0)
        tree._parent, tree._offset = parent, offset
        tree._base = _base_depths(parent, offset)
        tree.n = n
        return tree

    def grow(self) -> "GluedTree":
        """Glue segment n+1; same result as building T_{n+1} directly."""
        m = self.n + 1
        if m >= self._parent.size:
            cap = 2 * self._parent.size
            self._parent = np.resize(self._parent, cap)
            self._offset = np.resize(self._offset, cap)
            self._base = np.resize(self._base, cap)
        p, off = glue_choices(self.seq, self.key, np.array([m]))
        p, off = int(p[0]), float(off[0])
        self._parent[m] = p
        self._offset[m] = off
        self._base[m] = self._base[p] + off
        self.n = m
        return self

    # -- views ------------------------------------------------------------
    @property
    def parent(self) -> np.ndarray:
        return self._parent[: self.n + 1]

    @property
    def attach_offset(self) -> np.ndarray:
        return self._offset[: self.n + 1]

    @property
    def base_depth(self) -> np.ndarray:
        return self._base[: self.n + 1]

    @property
    def lengths(self) -> np.ndarray:
        return self.seq.values(self.n)

    @property
    def total_length(self) -> float:
        return float(self.seq.prefix_sums(self.n)[self.n])

    # -- points -----------------------------------------------------------
    def point_at(self, u: float, v: float) -> MarkedPoint:
        """The point selected by the uniforms ``u`` (segment) and ``v`` (offset)."""
        s = int(_pick_segments(self.seq.prefix_sums(self.n), np.array([u]), np.array([self.n]))[0])
        off = float(v) * float(self.lengths[s])
        return MarkedPoint(s, off, float(self._base[s] + off))

    def sample_uniform_point(self, rng: np.random.Generator) -> MarkedPoint:
        u, v = rng.random(2)
        return self.point_at(u, v)

    def sample_uniform_points(self, rng: np.random.Generator, size: int,
                              upto: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized sampling: ``(segments, offsets, depths)``.

        With ``upto = k`` the points are uniform in the subtree T_k.
        """
        k = self.n if upto is None else int(upto)
        if not 1 <= k <= self.n:
            raise ValueError(f"subtree index {k} outside [1, {self.n}]")
        uv = rng.random((size, 2))
        A = self.seq.prefix_sums(self.n)
        s = _pick_segments(A, uv[:, 0], np.full(size, k))
        off = uv[:, 1] * self.lengths[s]
        return s, off, self._base[s] + off

    def depth_naive(self, point: MarkedPoint) -> float:
        """Depth recomputed by walking parent pointers, without cached depths."""
        d = point.offset
        s = point.segment
        steps = 0
        while s != 1:
            d += self._offset[s]
            s = int(self._parent[s])
            steps += 1
            if steps > self.n or s < 1:
                raise TreeCorruptionError(f"parent chain from {point.segment} does not reach b_1")
        return float(d)

    def _chain(self, segment: int, offset: float) -> List[Tuple[int, float]]:
        out = [(segment, offset)]
        while segment != 1:
            offset = float(self._offset[segment])
            segment = int(self._parent[segment])
            out.append((segment, offset))
        return out

    def projection_depths(self, point: MarkedPoint, ks: Iterable[int]) -> List[float]:
        """Depth of the projection of ``point`` onto T_k for each k."""
        chain = self._chain(point.segment, point.offset)
        out = []
        for k in ks:
            if k < 1:
                raise ValueError("projection index must be >= 1")
            if k > self.n:
                raise ValueError(f"projection index {k} exceeds tree size {self.n}")
            for s, off in chain:
                if s <= k:
                    out.append(float(self._base[s] + off))
                    break
        return out

    def branch_point(self, p: MarkedPoint, q: MarkedPoint) -> Tuple[int, float]:
        """Common segment of the two root paths and the depth where they separate."""
        s1, o1, s2, o2 = p.segment, p.offset, q.segment, q.offset
        while s1 != s2:
            if s1 > s2:
                s1, o1 = int(self._parent[s1]), float(self._offset[s1])
            else:
                s2, o2 = int(self._parent[s2]), float(self._offset[s2])
        return s1, float(self._base[s1] + min(o1, o2))

    def mark_many(self, ell: int, rng: np.random.Generator) -> MarkResult:
        if ell < 1:
            raise ValueError("need at least one marked point")
        pts = [self.sample_uniform_point(rng) for _ in range(ell)]
        bd = np.diag([p.depth for p in pts]).astype(float)
        split = None
        for i in range(ell):
            for j in range(i + 1, ell):
                s, d = self.branch_point(pts[i], pts[j])
                bd[i, j] = bd[j, i] = d
                if ell == 2:
                    split = s
        mx = None if ell == 1 else float(max(bd[i, j] for i in range(ell) for j in range(ell) if i != j))
        return MarkResult(pts, bd, split, mx)

    # -- global statistics ------------------------------------------------
    def leaf_depths(self) -> np.ndarray:
        """Depth of leaf L_i (free end of b_i) for i = 1..n, at index i."""
        out = self._base[: self.n + 1] + self.lengths
        out[0] = 0.0
        return out

    def height(self) -> float:
        return float(self.leaf_depths()[1:].max())

    def heights_along_growth(self) -> np.ndarray:
        """``H_k`` for k = 1..n at index k (T_k is a subtree of T_n)."""
        out = np.maximum.accumulate(self.leaf_depths())
        return out

    def genealogy(self) -> Tuple[np.ndarray, np.ndarray]:
        """Parent array and edge lengths U_i = offset / a_parent of the genealogical tree."""
        parent = self.parent.copy()
        U = np.zeros(self.n + 1)
        if self.n >= 2:
            U[2:] = self.attach_offset[2:] / self.lengths[parent[2:]]
        return parent, U

    def genealogy_path_lengths(self) -> np.ndarray:
        """Weighted distance from vertex i to vertex 1 in the genealogical tree."""
        parent, U = self.genealogy()
        return _base_depths(parent, U)

    def graph_depths(self) -> np.ndarray:
        """Graph distance from vertex i to vertex 1 in the genealogical tree."""
        return _generations(self.parent)

    # -- dumps ------------------------------------------------------------
    def write_csv(self, dest: Union[PathLike, io.TextIOBase]) -> None:
        rows = (
            (i, int(self._parent[i]), repr(float(self._offset[i])), repr(float(self._base[i])),
             repr(float(self.lengths[i])))
            for i in range(1, self.n + 1)
        )
        _write_rows(dest, ("index", "parent", "attach_offset", "base_depth", "length"), rows)

    def write_genealogy_csv(self, dest: Union[PathLike, io.TextIOBase]) -> None:
        parent, U = self.genealogy()
        rows = ((i, int(parent[i]), repr(float(U[i]))) for i in range(1, self.n + 1))
        _write_rows(dest, ("vertex", "parent", "edge_length_U"), rows)


def _write_rows(dest, header, rows) -> None:
    if hasattr(dest, "write"):
        w = csv.writer(dest, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        _write_rows(fh, header, rows)


def _generations(parent: np.ndarray) -> np.ndarray:
    """Number of edges from each vertex to vertex 1, by pointer jumping."""
    n = parent.size - 1
    gen = (parent != 0).astype(np.int64)
    gen[0] = 0
    nxt = parent.copy()
    nxt[0] = 0
    rounds = 0
    while np.any(nxt[1:] != 0):
        gen = gen + gen[nxt]
        nxt = nxt[nxt]
        rounds += 1
        if rounds > 2 + n.bit_length():
            raise TreeCorruptionError("parent pointers contain a cycle")
    return gen


def _base_depths(parent: np.ndarray, offset: np.ndarray) -> np.ndarray:
    """base[m] = base[parent[m]] + offset[m], computed generation by generation.

    Every entry is produced by exactly that one addition once its parent is
    final, so the result is bit-identical to the sequential recursion.
    """
    gen = _generations(parent)
    base = np.zeros(parent.size)
    if parent.size <= 2:
        return base
    order = np.argsort(gen[2:], kind="stable") + 2
    bounds = np.searchsorted(gen[order], np.arange(1, int(gen.max()) + 2))
    for g in range(1, bounds.size):
        idx = order[bounds[g - 1]: bounds[g]]
        base[idx] = base[parent[idx]] + offset[idx]
    return base


# -- lazily evaluated trees --------------------------------------------------
#
# The functions below treat ``keys`` as a batch of independent trees (one
# per sample) and only evaluate the segments on the ancestor chains they
# need.  They return exactly what GluedTree.build(...) followed by the
# corresponding method would return, up to summation order.


def _ascend_one(seq, keys, seg, mask):
    """Move the entries ``mask`` one step up: returns (parent, attach offset)."""
    p, off = glue_choices(seq, keys[mask], seg[mask])
    return p, off


def lazy_depths(seq: LengthSequence, keys: np.ndarray, seg: np.ndarray, off: np.ndarray,
                ks: Optional[Sequence[int]] = None) -> Union[np.ndarray, Tuple[np.ndarray, np.ndarray]]:
    """Depths of points ``(seg, off)`` in trees ``keys``.

    With ``ks``, also returns the projection depths D(k), shape (len(ks), size).
    """
    seg = np.array(seg, dtype=np.int64)
    below = np.zeros(seg.size)
    cur = np.array(off, dtype=np.float64)
    ks = [] if ks is None else [int(k) for k in ks]
    below_at = np.zeros((len(ks), seg.size))
    pending = np.ones((len(ks), seg.size), dtype=bool)
    for j, k in enumerate(ks):
        hit = seg <= k
        below_at[j, hit] = 0.0
        pending[j, hit] = False
    active = seg > 1
    while active.any():
        p, o = _ascend_one(seq, keys, seg, active)
        below[active] += cur[active]
        seg[active] = p
        cur[active] = o
        for j, k in enumerate(ks):
            hit = pending[j] & (seg <= k)
            below_at[j, hit] = below[hit]
            pending[j, hit] = False
        active = seg > 1
    depth = below + cur
    if ks:
        return depth, depth[None, :] - below_at
    return depth


def sample_points(seq: LengthSequence, n: int, rng: np.random.Generator, size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Uniform points of T_n, as (segment, offset), using the same draws as GluedTree."""
    uv = rng.random((size, 2))
    A = seq.prefix_sums(n)
    s = _pick_segments(A, uv[:, 0], np.full(size, n))
    return s, uv[:, 1] * seq.values(n)[s]


def sample_tree_depths(seq: LengthSequence, n: int, rng: np.random.Generator, size: int,
                       ks: Optional[Sequence[int]] = None):
    """Depth of one uniform point in each of ``size`` independent trees T_n.

    Draw order per call: ``size`` tree keys, then the points.
    """
    keys = new_keys(rng, size)
    s, off = sample_points(seq, n, rng, size)
    return lazy_depths(seq, keys, s, off, ks)


def _lazy_pair(seq, keys, s1, o1, s2, o2):
    """Splitting segment, branch depth and both depths for pairs in trees ``keys``."""
    s1, s2 = s1.copy(), s2.copy()
    o1, o2 = o1.astype(float), o2.astype(float)
    b1, b2 = np.zeros(s1.size), np.zeros(s1.size)
    while True:
        up1 = s1 > s2
        up2 = s2 > s1
        if not (up1.any() or up2.any()):
            break
        if up1.any():
            p, o = _ascend_one(seq, keys, s1, up1)
            b1[up1] += o1[up1]
            s1[up1], o1[up1] = p, o
        if up2.any():
            p, o = _ascend_one(seq, keys, s2, up2)
            b2[up2] += o2[up2]
            s2[up2], o2[up2] = p, o
    rest = lazy_depths(seq, keys, s1, np.zeros(s1.size))
    return s1, np.minimum(o1, o2) + rest, b1 + o1 + rest, b2 + o2 + rest


def sample_tree_marks(seq: LengthSequence, n: int, rng: np.random.Generator, size: int, ell: int = 2):
    """Mark ``ell`` uniform points in each of ``size`` independent trees T_n.

    Returns ``(depths, max_branch, split)``: depths has shape (ell, size);
    max_branch is the deepest pairwise branch point (zeros for ell = 1);
    split is the splitting index S_n(2) of points 1 and 2 (None for ell = 1).
    """
    if ell < 1:
        raise ValueError("need at least one marked point")
    keys = new_keys(rng, size)
    pts = [sample_points(seq, n, rng, size) for _ in range(ell)]
    depths = np.empty((ell, size))
    max_branch = np.zeros(size)
    split = None
    if ell == 1:
        depths[0] = lazy_depths(seq, keys, *pts[0])
        return depths, max_branch, split
    for i in range(ell):
        for j in range(i + 1, ell):
            s, bd, d1, d2 = _lazy_pair(seq, keys, pts[i][0], pts[i][1], pts[j][0], pts[j][1])
            depths[i], depths[j] = d1, d2
            np.maximum(max_branch, bd, out=max_branch)
            if i == 0 and j == 1:
                split = s
    return depths, max_branch, split
