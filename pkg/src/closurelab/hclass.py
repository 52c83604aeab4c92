"""Finite hypothesis classes and the class-level constructions built on them.

A hypothesis over a domain of ``n`` points is stored as a Python int whose
bit ``j`` is the label of point ``j``.  Classes are deduplicated and kept in
canonical order: members sorted lexicographically by their bit-string
``h(x_0) h(x_1) ... h(x_{n-1})``.
"""
from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

from .errors import InputError, ResourceError

DEFAULT_COMPOSE_CAP = 10**7
DEFAULT_ARITY_CAP = 16

Hypothesis = int
RowLike = Union[str, Sequence[int], int]


def _full(n: int) -> int:
    return (1 << n) - 1


def bits_to_str(h: int, n: int) -> str:
    """Render ``h`` as ``'h(x_0)h(x_1)...'``."""
    return format(h, f"0{n}b")[::-1] if n else ""


def str_to_bits(s: str) -> int:
    if any(c not in "01" for c in s):
        raise InputError(f"non-binary character in row {s!r}")
    return int(s[::-1], 2) if s else 0


def _lex_key(h: int, n: int) -> int:
    # Integer whose binary expansion is the row string, so int order == lex order.
    return int(bits_to_str(h, n), 2) if n else 0


def _row_to_int(row: RowLike, n: int) -> int:
    if isinstance(row, str):
        if len(row) != n:
            raise InputError(f"row {row!r} has length {len(row)}, expected {n}")
        return str_to_bits(row)
    if isinstance(row, (int, np.integer)):
        row = int(row)
        if row < 0 or row >> n:
            raise InputError(f"row {row} does not fit in {n} bits")
        return row
    vals = [int(v) for v in row]
    if len(vals) != n:
        raise InputError(f"row has length {len(vals)}, expected {n}")
    if any(v not in (0, 1) for v in vals):
        raise InputError("row entries must be 0 or 1")
    return sum(v << j for j, v in enumerate(vals))


@dataclass(frozen=True)
class Domain:
    size: int

    def __post_init__(self):
        if self.size < 1:
            raise InputError("domain size must be >= 1")


@dataclass(frozen=True)
class HypothesisClass:
    """A deduplicated, canonically ordered set of boolean functions on ``n`` points.

    Use :func:`class_from_matrix` or :meth:`from_ints` rather than the raw
    constructor, which trusts its input to be canonical already.
    """

    n: int
    members: tuple[int, ...]

    @classmethod
    def from_ints(cls, n: int, hyps: Iterable[int]) -> "HypothesisClass":
        if n < 0:
            raise InputError("domain size must be non-negative")
        full = _full(n)
        uniq = set()
        for h in hyps:
            h = int(h)
            if h < 0 or h & ~full:
                raise InputError(f"hypothesis {h} does not fit a domain of size {n}")
            uniq.add(h)
        return cls(n, tuple(sorted(uniq, key=lambda h: _lex_key(h, n))))

    @property
    def domain(self) -> Domain:
        return Domain(self.n)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[int]:
        return iter(self.members)

    def __contains__(self, h: object) -> bool:
        return h in self._member_set

    @cached_property
    def _member_set(self) -> frozenset:
        return frozenset(self.members)

    def index(self, h: int) -> int:
        return self._index[h]

    @cached_property
    def _index(self) -> dict:
        return {h: i for i, h in enumerate(self.members)}

    def rows(self) -> list[str]:
        return [bits_to_str(h, self.n) for h in self.members]

    @cached_property
    def matrix(self) -> np.ndarray:
        """``len(self) x n`` uint8 label matrix in canonical member order."""
        m = np.zeros((len(self.members), self.n), dtype=np.uint8)
        for i, h in enumerate(self.members):
            for j in range(self.n):
                m[i, j] = (h >> j) & 1
        m.setflags(write=False)
        return m

    @cached_property
    def column_masks(self) -> tuple[int, ...]:
        """For each point, the bitmask over member indices labelling it 1."""
        cols = [0] * self.n
        for i, h in enumerate(self.members):
            for j in range(self.n):
                if (h >> j) & 1:
                    cols[j] |= 1 << i
        return tuple(cols)

    @cached_property
    def key(self) -> str:
        """Stable content hash of the canonical form."""
        payload = f"{self.n} {len(self.members)}\n" + "\n".join(self.rows())
        return hashlib.sha256(payload.encode()).hexdigest()

    def subclass(self, mask: int) -> "HypothesisClass":
        """Members whose index bit is set in ``mask`` (order preserved)."""
        return HypothesisClass(self.n, tuple(h for i, h in enumerate(self.members) if (mask >> i) & 1))

    def issubset(self, other: "HypothesisClass") -> bool:
        return self.n == other.n and self._member_set <= other._member_set

    def __repr__(self) -> str:
        shown = ", ".join(self.rows()[:8])
        more = ", ..." if len(self) > 8 else ""
        return f"HypothesisClass(n={self.n}, |H|={len(self)}: {{{shown}{more}}})"


def class_from_matrix(domain: Domain | int, rows: Iterable[RowLike]) -> HypothesisClass:
    n = domain.size if isinstance(domain, Domain) else int(domain)
    return HypothesisClass.from_ints(n, (_row_to_int(r, n) for r in rows))


def full_cube(n: int) -> HypothesisClass:
    return HypothesisClass.from_ints(n, range(1 << n))


def project(H: HypothesisClass, points: Sequence[int]) -> HypothesisClass:
    """Restrictions of ``H`` to ``points``; point ``points[i]`` becomes index ``i``."""
    points = list(points)
    if len(set(points)) != len(points):
        raise InputError("projection points must be distinct")
    for p in points:
        if not 0 <= p < H.n:
            raise InputError(f"point {p} outside domain of size {H.n}")
    out = set()
    for h in H.members:
        r = 0
        for i, p in enumerate(points):
            r |= ((h >> p) & 1) << i
        out.add(r)
    return HypothesisClass.from_ints(len(points), out)


def union(H1: HypothesisClass, H2: HypothesisClass) -> HypothesisClass:
    if H1.n != H2.n:
        raise InputError(f"domain mismatch: {H1.n} vs {H2.n}")
    return HypothesisClass.from_ints(H1.n, itertools.chain(H1.members, H2.members))


def negate(H: HypothesisClass) -> HypothesisClass:
    full = _full(H.n)
    return HypothesisClass.from_ints(H.n, (h ^ full for h in H.members))


def random_class(rng: np.random.Generator, max_domain: int = 6, max_members: int = 16,
                 min_domain: int = 1) -> HypothesisClass:
    """A random nonempty class: domain size and member count drawn uniformly."""
    n = int(rng.integers(min_domain, max_domain + 1))
    count = int(rng.integers(1, min(max_members, 1 << n) + 1))
    picked = rng.choice(1 << n, size=count, replace=False)
    return HypothesisClass.from_ints(n, (int(h) for h in picked))


# --------------------------------------------------------------------------
# Aggregators and majority formulas


@dataclass(frozen=True)
class Aggregator:
    """A boolean rule ``G: {0,1}^k -> {0,1}`` given by its truth table.

    Entry ``idx`` of ``table`` is ``G(b_1..b_k)`` where ``idx`` has ``b_1`` as
    its most significant bit.
    """

    arity: int
    table: tuple[int, ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if not 1 <= self.arity <= DEFAULT_ARITY_CAP:
            raise InputError(f"arity must be in [1, {DEFAULT_ARITY_CAP}], got {self.arity}")
        if len(self.table) != 1 << self.arity:
            raise InputError(f"truth table must have {1 << self.arity} entries")
        if any(v not in (0, 1) for v in self.table):
            raise InputError("truth table entries must be 0 or 1")

    @staticmethod
    def index_of(bits: Sequence[int]) -> int:
        idx = 0
        for b in bits:
            idx = (idx << 1) | int(b)
        return idx

    def __call__(self, *bits: int) -> int:
        if len(bits) == 1 and not isinstance(bits[0], (int, np.integer)):
            bits = tuple(bits[0])
        if len(bits) != self.arity:
            raise InputError(f"expected {self.arity} inputs, got {len(bits)}")
        return self.table[self.index_of(bits)]

    @classmethod
    def from_function(cls, arity: int, fn, name: str = "") -> "Aggregator":
        table = tuple(int(bool(fn(*inp))) for inp in itertools.product((0, 1), repeat=arity))
        return cls(arity, table, name)

    @classmethod
    def from_index(cls, arity: int, number: int) -> "Aggregator":
        """The aggregator whose truth-table entry ``idx`` is bit ``idx`` of ``number``."""
        return cls(arity, tuple((number >> i) & 1 for i in range(1 << arity)))

    def table_str(self) -> str:
        return "".join(map(str, self.table))


def AND(k: int = 2) -> Aggregator:
    return Aggregator.from_function(k, lambda *b: all(b), f"AND{k}")


def OR(k: int = 2) -> Aggregator:
    return Aggregator.from_function(k, lambda *b: any(b), f"OR{k}")


def XOR(k: int = 2) -> Aggregator:
    return Aggregator.from_function(k, lambda *b: sum(b) % 2, f"XOR{k}")


def MAJ(k: int = 3) -> Aggregator:
    if k % 2 == 0:
        raise InputError("majority needs odd arity")
    return Aggregator.from_function(k, lambda *b: 2 * sum(b) > k, f"MAJ{k}")


def DICTATOR(k: int, i: int) -> Aggregator:
    """Projection onto input ``i`` (0-based)."""
    return Aggregator.from_function(k, lambda *b: b[i], f"DICT{k}_{i}")


def IDENTITY() -> Aggregator:
    return DICTATOR(1, 0)


def compose(G: Aggregator, classes: Sequence[HypothesisClass],
            cap: int = DEFAULT_COMPOSE_CAP) -> HypothesisClass:
    """``G(H_1..H_k) = {G(h_1..h_k) : h_i in H_i}``, deduplicated."""
    k = G.arity
    if len(classes) != k:
        raise InputError(f"aggregator arity {k} but {len(classes)} classes given")
    n = classes[0].n
    if any(H.n != n for H in classes):
        raise InputError("all classes must share one domain")
    total = 1
    for H in classes:
        total *= len(H)
    if total > cap:
        raise ResourceError(f"composition would enumerate {total} tuples (cap {cap})")
    if total == 0:
        return HypothesisClass(n, ())

    table = np.array(G.table, dtype=np.uint8)
    mats = [H.matrix for H in classes]
    out: set[int] = set()
    # chunk over the first class to bound memory
    rest = 1
    for H in classes[1:]:
        rest *= len(H)
    chunk = max(1, min(len(classes[0]), 2_000_000 // max(rest, 1)))
    for start in range(0, len(classes[0]), chunk):
        blocks = [mats[0][start:start + chunk]] + mats[1:]
        shape = tuple(b.shape[0] for b in blocks)
        acc = np.zeros(shape, dtype=object) if n > 62 else np.zeros(shape, dtype=np.int64)
        for j in range(n):
            idx = np.zeros(shape, dtype=np.int64)
            for i, b in enumerate(blocks):
                view = [1] * k
                view[i] = shape[i]
                idx = (idx << 1) | b[:, j].astype(np.int64).reshape(view)
            col = table[idx].astype(acc.dtype)
            acc |= col << j
        out.update(int(v) for v in acc.ravel())
    return HypothesisClass.from_ints(n, out)


@dataclass(frozen=True)
class Lit:
    index: int
    negated: bool = False


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Maj:
    children: tuple

    def __post_init__(self):
        if len(self.children) % 2 == 0:
            raise InputError("MAJ gate needs odd fan-in")


Formula = Union[Lit, Const, Maj]


@dataclass(frozen=True)
class MajorityFormula:
    arity: int
    root: Formula

    def __call__(self, bits: Sequence[int]) -> int:
        return eval_formula(self, bits)

    def truth_table(self) -> tuple[int, ...]:
        return tuple(eval_formula(self, inp) for inp in itertools.product((0, 1), repeat=self.arity))

    def gates(self) -> Iterator[Formula]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if isinstance(node, Maj):
                stack.extend(node.children)


def _eval(node: Formula, bits: Sequence[int]) -> int:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Lit):
        return int(bits[node.index]) ^ int(node.negated)
    ones = sum(_eval(c, bits) for c in node.children)
    return int(2 * ones > len(node.children))


def eval_formula(f: MajorityFormula, bits: Sequence[int]) -> int:
    if len(bits) != f.arity:
        raise InputError(f"formula has arity {f.arity}, input has length {len(bits)}")
    return _eval(f.root, bits)


def dnf_majority_decompose(G: Aggregator, arity_cap: int = DEFAULT_ARITY_CAP) -> MajorityFormula:
    """Rewrite ``G`` as a formula of MAJ gates over literals and constants.

    Each DNF term (one per satisfying input) is an AND of ``k`` literals,
    written as MAJ over those literals plus ``k-1`` zeros; the disjunction of
    ``m`` terms is MAJ over the terms plus ``m-1`` ones.
    """
    k = G.arity
    if k > arity_cap:
        raise ResourceError(f"arity {k} exceeds decomposition cap {arity_cap}")
    minterms = [idx for idx, v in enumerate(G.table) if v]
    if not minterms:
        return MajorityFormula(k, Const(0))
    if len(minterms) == len(G.table):
        return MajorityFormula(k, Const(1))
    terms = []
    for idx in minterms:
        lits = tuple(Lit(j, negated=not (idx >> (k - 1 - j)) & 1) for j in range(k))
        terms.append(Maj(lits + (Const(0),) * (k - 1)))
    m = len(terms)
    return MajorityFormula(k, Maj(tuple(terms) + (Const(1),) * (m - 1)))


# --------------------------------------------------------------------------
# Constructions


def make_threshold_chain(t: int) -> HypothesisClass:
    """``h_i(j) = 1`` iff ``i <= j`` on ``t`` points."""
    if t < 1:
        raise InputError("chain length must be >= 1")
    return HypothesisClass.from_ints(t, (_full(t) & ~((1 << i) - 1) for i in range(t)))


def make_threshold_union_tight(t1: int, t2: int) -> tuple[HypothesisClass, HypothesisClass]:
    """Split the ``t1+t2`` chain into its first ``t1`` and last ``t2`` members."""
    if t1 < 1 or t2 < 1:
        raise InputError("t1 and t2 must be >= 1")
    n = t1 + t2
    chain = [_full(n) & ~((1 << i) - 1) for i in range(n)]
    return HypothesisClass.from_ints(n, chain[:t1]), HypothesisClass.from_ints(n, chain[t1:])


def make_union_tight(d1: int, d2: int, n: int) -> tuple[HypothesisClass, HypothesisClass]:
    """``H1`` = at most ``d1`` ones, ``H2`` = at most ``d2`` zeros, on ``n`` points."""
    if min(d1, d2) < 0:
        raise InputError("d1, d2 must be non-negative")
    if n < d1 + d2 + 1:
        raise InputError(f"need n >= d1 + d2 + 1 = {d1 + d2 + 1}, got {n}")
    if n > 20:
        raise ResourceError("union tightness construction limited to n <= 20")
    H1 = HypothesisClass.from_ints(n, (h for h in range(1 << n) if h.bit_count() <= d1))
    H2 = HypothesisClass.from_ints(n, (h for h in range(1 << n) if n - h.bit_count() <= d2))
    return H1, H2


def make_multiunion_lower(H: HypothesisClass, k: int) -> HypothesisClass:
    """Extend ``H`` by ``floor(log2 k)`` fresh points labelled in every possible way."""
    if k < 1:
        raise InputError("k must be >= 1")
    r = k.bit_length() - 1
    return HypothesisClass.from_ints(H.n + r, (h | (p << H.n) for h in H.members for p in range(1 << r)))


def multiunion_parts(H: HypothesisClass, k: int) -> list[HypothesisClass]:
    """The ``2^floor(log2 k)`` copies of ``H`` whose union is :func:`make_multiunion_lower`."""
    r = k.bit_length() - 1
    return [HypothesisClass.from_ints(H.n + r, (h | (p << H.n) for h in H.members)) for p in range(1 << r)]


@dataclass(frozen=True)
class OrBlowup:
    """Random pairs ``f_i, g_i`` on ``m`` points, kept exactly as generated.

    ``f_i(j) = g_i(j) = 0`` for ``j > i``; for ``j <= i`` exactly one of the
    two is 1, so ``f_i | g_i`` is the prefix indicator of ``0..i``.
    """

    t: int
    m: int
    f: tuple[int, ...]
    g: tuple[int, ...]

    @property
    def functions(self) -> tuple[int, ...]:
        return self.f + self.g

    @cached_property
    def hclass(self) -> HypothesisClass:
        return HypothesisClass.from_ints(self.m, self.functions)


def make_random_or_blowup(t: int, rng: np.random.Generator) -> OrBlowup:
    if t < 5:
        raise InputError("t must be >= 5")
    m = 1 << (t // 5)
    f, g = [], []
    for i in range(m):
        coins = rng.integers(0, 2, size=i + 1)
        fi = sum(int(c) << j for j, c in enumerate(coins))
        gi = fi ^ _full(i + 1)
        f.append(fi)
        g.append(gi)
    return OrBlowup(t, m, tuple(f), tuple(g))


# --------------------------------------------------------------------------
# Labeled samples


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """An ordered multiset of ``(point, label)`` pairs backed by numpy arrays."""

    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1)
        lab = np.asarray(self.labels, dtype=np.int8).reshape(-1)
        if pts.shape != lab.shape:
            raise InputError("points and labels must have equal length")
        if lab.size and not np.isin(lab, (0, 1)).all():
            raise InputError("labels must be 0 or 1")
        if pts.size and pts.min() < 0:
            raise InputError("point indices must be non-negative")
        pts.setflags(write=False)
        lab.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]]) -> "LabeledSample":
        pairs = list(pairs)
        if not pairs:
            return cls.empty()
        pts, labs = zip(*pairs)
        return cls(np.array(pts), np.array(labs))

    @classmethod
    def empty(cls) -> "LabeledSample":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int8))

    @property
    def items(self) -> list[tuple[int, int]]:
        return list(zip(self.points.tolist(), self.labels.tolist()))

    def __len__(self) -> int:
        return int(self.points.size)

    def __add__(self, other: "LabeledSample") -> "LabeledSample":
        return LabeledSample(np.concatenate([self.points, other.points]),
                             np.concatenate([self.labels, other.labels]))

    def __getitem__(self, sl) -> "LabeledSample":
        """Slice, or gather by an integer index array (repeats allowed)."""
        if isinstance(sl, (int, np.integer)):
            raise TypeError("index with a slice or an array; use .items for pairs")
        return LabeledSample(self.points[sl], self.labels[sl])

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, LabeledSample) and np.array_equal(self.points, other.points)
                and np.array_equal(self.labels, other.labels))

    def __hash__(self) -> int:
        return hash((self.points.tobytes(), self.labels.tobytes()))

    def __repr__(self) -> str:
        return f"LabeledSample({self.items})"

    def check_domain(self, n: int) -> None:
        if self.points.size and self.points.max() >= n:
            raise InputError(f"sample point {int(self.points.max())} outside domain of size {n}")

    def distinct_points(self) -> list[int]:
        """Distinct points in order of first appearance."""
        _, first = np.unique(self.points, return_index=True)
        return self.points[np.sort(first)].tolist()

    def relabel(self, labels: np.ndarray) -> "LabeledSample":
        return LabeledSample(self.points, labels)
