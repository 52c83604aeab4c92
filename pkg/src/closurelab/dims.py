"""Exact VC, Littlestone and threshold dimensions of finite classes.

Subsets of a class (version spaces) are bitmasks over member indices, so a
restriction ``H|x<-b`` is a single AND with the column mask of ``x``.
"""
from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from .errors import InputError, ResourceError
from .hclass import HypothesisClass

MAX_MEMBERS = 1 << 20
MAX_MEMO_ENTRIES = 1 << 20


def floor_log2(x: int) -> int:
    """``floor(log2 x)`` for ``x >= 1``; 0 for ``x <= 1`` (vacuous bound)."""
    return max(int(x).bit_length() - 1, 0)


# --------------------------------------------------------------------------
# Mistake trees


@dataclass(frozen=True)
class MistakeTree:
    """Complete binary tree; internal nodes carry a point, leaves carry ``None``.

    ``left`` is the subtree followed when the node's point is labelled 0.
    """

    point: Optional[int] = None
    left: Optional["MistakeTree"] = None
    right: Optional["MistakeTree"] = None

    @property
    def is_leaf(self) -> bool:
        return self.point is None

    @property
    def depth(self) -> int:
        return 0 if self.is_leaf else 1 + max(self.left.depth, self.right.depth)

    def is_complete(self) -> bool:
        if self.is_leaf:
            return True
        return (self.left.depth == self.right.depth and self.left.is_complete()
                and self.right.is_complete())

    def paths(self):
        """Yield every root-to-leaf path as a tuple of ``(point, label)``."""
        if self.is_leaf:
            yield ()
            return
        for y, child in ((0, self.left), (1, self.right)):
            for rest in child.paths():
                yield ((self.point, y),) + rest

    def to_json(self):
        return [] if self.is_leaf else [self.point, self.left.to_json(), self.right.to_json()]

    @classmethod
    def from_json(cls, obj) -> "MistakeTree":
        if not obj:
            return cls()
        x, left, right = obj
        return cls(int(x), cls.from_json(left), cls.from_json(right))


LEAF = MistakeTree()


class LdimSolver:
    """Memoized Littlestone recursion for one class.

    ``value(mask)`` is Ldim of the members selected by ``mask`` (-1 for the
    empty set).  The memo is a pure function of the class, so a solver may be
    shared between learners; insertion is guarded by a lock.
    """

    def __init__(self, H: HypothesisClass, max_entries: int = MAX_MEMO_ENTRIES):
        if len(H) > MAX_MEMBERS:
            raise ResourceError(f"class has {len(H)} members; exact Ldim is capped at {MAX_MEMBERS}")
        self.H = H
        self.cols = H.column_masks
        self.full = (1 << len(H)) - 1
        self.max_entries = max_entries
        self._memo: dict[int, tuple[int, Optional[int]]] = {}
        self._lock = threading.Lock()

    def value(self, mask: int) -> int:
        if mask == 0:
            return -1
        c = mask.bit_count()
        if c == 1:
            return 0
        hit = self._memo.get(mask)
        if hit is not None:
            return hit[0]
        cap = floor_log2(c)
        best, arg = 0, None
        seen = set()
        for x, col in enumerate(self.cols):
            one = mask & col
            if one == 0 or one == mask or one in seen:
                continue
            seen.add(one)
            zero = mask ^ one
            small, large = (zero, one) if zero.bit_count() <= one.bit_count() else (one, zero)
            if 1 + floor_log2(small.bit_count()) <= best:
                continue
            vs = self.value(small)
            if 1 + vs <= best:
                continue
            v = 1 + min(vs, self.value(large))
            if v > best:
                best, arg = v, x
                if best == cap:
                    break
        with self._lock:
            if len(self._memo) >= self.max_entries:
                raise ResourceError(f"Ldim memo exceeded {self.max_entries} entries")
            self._memo[mask] = (best, arg)
        return best

    def argpoint(self, mask: int) -> Optional[int]:
        self.value(mask)
        hit = self._memo.get(mask)
        return None if hit is None else hit[1]

    def tree(self, mask: int, depth: int) -> MistakeTree:
        """A complete tree of the given depth shattered by ``mask``'s members."""
        if depth == 0:
            return LEAF
        x = self.argpoint(mask)
        one = mask & self.cols[x]
        return MistakeTree(x, self.tree(mask ^ one, depth - 1), self.tree(one, depth - 1))

    def restrict(self, mask: int, x: int, y: int) -> int:
        return mask & self.cols[x] if y else mask & ~self.cols[x]


def littlestone_dimension(H: HypothesisClass, solver: Optional[LdimSolver] = None) -> tuple[int, MistakeTree]:
    if len(H) == 0:
        raise InputError("Littlestone dimension of the empty class is undefined here")
    solver = solver or LdimSolver(H)
    d = solver.value(solver.full)
    return d, solver.tree(solver.full, d)


def verify_shattered_tree(H: HypothesisClass, T: MistakeTree) -> bool:
    if not T.is_complete():
        return False
    for path in T.paths():
        if not any(all(((h >> x) & 1) == y for x, y in path) for h in H.members):
            return False
    return True


# --------------------------------------------------------------------------
# Threshold dimension


@dataclass(frozen=True)
class ThresholdWitness:
    points: tuple[int, ...]
    hyps: tuple[int, ...]  # member indices into the class

    def __post_init__(self):
        if len(self.points) != len(self.hyps):
            raise InputError("witness points and hyps must have equal length")

    def __len__(self) -> int:
        return len(self.points)

    def to_json(self):
        return {"points": list(self.points), "hyps": list(self.hyps)}


def verify_threshold_witness(H: HypothesisClass, w: ThresholdWitness) -> bool:
    for i, hi in enumerate(w.hyps):
        h = H.members[hi]
        for j, x in enumerate(w.points):
            if ((h >> x) & 1) != (1 if i <= j else 0):
                return False
    return True


def _greedy_threshold(H: HypothesisClass) -> int:
    """Cheap incumbent: greedily extend a staircase from the smallest indices."""
    cols = H.column_masks
    best = 0
    for start in range(H.n):
        rows = []
        pts: list[int] = []
        zero_on_chosen = (1 << len(H)) - 1
        for x in range(start, H.n):
            new_rows = [r & cols[x] for r in rows]
            new_row = zero_on_chosen & cols[x]
            if all(new_rows) and new_row:
                rows = new_rows + [new_row]
                pts.append(x)
                zero_on_chosen &= ~cols[x]
        best = max(best, len(pts))
    return best


def threshold_dimension(H: HypothesisClass) -> tuple[int, ThresholdWitness]:
    """Longest threshold-shattered point sequence, by branch and bound.

    The search runs over point sequences; row ``i`` keeps the mask of members
    realizing ``h_i(x_j) = [i <= j]`` on the points chosen so far.  A row's
    hypothesis can be any surviving member, so the witness takes the smallest
    index in each row.  DFS order makes the first maximal sequence found the
    lexicographically smallest one.
    """
    if len(H) == 0:
        raise InputError("threshold dimension of the empty class is undefined here")
    cols = H.column_masks
    n = H.n
    allmask = (1 << len(H)) - 1
    best_len = 0
    best: tuple[tuple[int, ...], tuple[int, ...]] = ((), ())
    incumbent = _greedy_threshold(H)

    def dfs(pts: list[int], rows: list[int], zero_on_chosen: int, used: int):
        nonlocal best_len, best
        t = len(pts)
        if t > best_len:
            best_len = t
            best = (tuple(pts), tuple((r & -r).bit_length() - 1 for r in rows))
        cands = []
        for x in range(n):
            if (used >> x) & 1:
                continue
            if zero_on_chosen & cols[x] == 0:
                continue
            if any(r & cols[x] == 0 for r in rows):
                continue
            cands.append(x)
        # future rows are members that are zero on every chosen point
        bound = t + min(len(cands), zero_on_chosen.bit_count())
        # a branch that cannot reach the greedy length cannot hold a maximum
        if bound <= best_len or bound < incumbent:
            return
        for x in cands:
            new_rows = [r & cols[x] for r in rows]
            new_rows.append(zero_on_chosen & cols[x])
            pts.append(x)
            dfs(pts, new_rows, zero_on_chosen & ~cols[x], used | (1 << x))
            pts.pop()

    dfs([], [], allmask, 0)
    return best_len, ThresholdWitness(*best)


# --------------------------------------------------------------------------
# VC dimension


def _shatters(H: HypothesisClass, pts: tuple[int, ...]) -> bool:
    mask = 0
    for p in pts:
        mask |= 1 << p
    return len({h & mask for h in H.members}) == 1 << len(pts)


def vc_dimension(H: HypothesisClass) -> tuple[int, tuple[int, ...]]:
    """Largest shattered set, grown level by level from shattered sets only."""
    if len(H) == 0:
        raise InputError("VC dimension of the empty class is undefined here")
    level: list[tuple[int, ...]] = [()]
    level_set = {()}
    best: tuple[int, ...] = ()
    while level:
        size = len(level[0]) + 1
        if 1 << size > len(H):
            break
        nxt = []
        for s in level:
            for x in range(s[-1] + 1 if s else 0, H.n):
                cand = s + (x,)
                # every subset of a shattered set is shattered
                if any(cand[:i] + cand[i + 1:] not in level_set for i in range(size - 1)):
                    continue
                if _shatters(H, cand):
                    nxt.append(cand)
        if not nxt:
            break
        best = min(nxt)
        level, level_set = nxt, set(nxt)
    return len(best), best


def sauer_bound(vc: int, m: int) -> float:
    """``(e m / vc)^vc``; 1 when ``vc == 0``."""
    if vc == 0:
        return 1.0
    if vc < 0 or m < vc:
        raise InputError("need vc >= 1 and m >= vc")
    return (math.e * m / vc) ** vc


# --------------------------------------------------------------------------
# Reports


@dataclass
class DimReport:
    vc: int
    ldim: int
    tdim: int
    vc_witness: tuple[int, ...]
    tree: MistakeTree
    threshold: ThresholdWitness
    timing: dict = field(default_factory=dict)

    def to_dict(self, with_timing: bool = True) -> dict:
        out = {
            "vc": self.vc,
            "ldim": self.ldim,
            "tdim": self.tdim,
            "certificates": {
                "vc": list(self.vc_witness),
                "tree": self.tree.to_json(),
                "threshold": self.threshold.to_json(),
            },
        }
        if with_timing:
            out["timing"] = self.timing
        return out

    def to_json(self, with_timing: bool = True) -> str:
        return json.dumps(self.to_dict(with_timing), sort_keys=True)


def dim_report(H: HypothesisClass) -> DimReport:
    timing = {}
    t0 = time.perf_counter()
    vc, wvc = vc_dimension(H)
    timing["vc_s"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    ld, tree = littlestone_dimension(H)
    timing["ldim_s"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    td, wt = threshold_dimension(H)
    timing["tdim_s"] = time.perf_counter() - t0
    return DimReport(vc, ld, td, wvc, tree, wt, timing)
