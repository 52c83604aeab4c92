"""Differentially private selection, relabeling, and the learners built on them.

Candidates handed to the exponential mechanism are :class:`Labeling` values:
total functions on the domain, or partial patterns with ``-1`` off their
support.  Scores are integer counts so that sensitivity bookkeeping is exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import InputError, ResourceError
from .hclass import DEFAULT_COMPOSE_CAP, Aggregator, HypothesisClass, LabeledSample, project

UNDEFINED = -1
EXTENDED_SUM_THRESHOLD = 10**4


# --------------------------------------------------------------------------
# Budgets and predicates


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if self.epsilon < 0 or not 0 <= self.delta <= 1:
            raise InputError("need epsilon >= 0 and 0 <= delta <= 1")


@dataclass(frozen=True)
class AccuracyTarget:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (0 < self.alpha < 1 and 0 < self.beta < 1):
            raise InputError("alpha and beta must lie in (0, 1)")


@dataclass(frozen=True)
class Labeling:
    """Values over the whole domain; ``-1`` marks points off a pattern's support."""

    values: tuple[int, ...]

    @classmethod
    def from_bits(cls, h: int, n: int) -> "Labeling":
        return cls(tuple((h >> j) & 1 for j in range(n)))

    @classmethod
    def from_array(cls, arr) -> "Labeling":
        return cls(tuple(int(v) for v in np.asarray(arr).tolist()))

    @classmethod
    def pattern(cls, n: int, points: Sequence[int], bits: Sequence[int]) -> "Labeling":
        vals = [UNDEFINED] * n
        for x, b in zip(points, bits):
            vals[x] = int(b)
        return cls(tuple(vals))

    @property
    def n(self) -> int:
        return len(self.values)

    @cached_property
    def table(self) -> np.ndarray:
        t = np.array(self.values, dtype=np.int8)
        t.setflags(write=False)
        return t

    @property
    def is_total(self) -> bool:
        return UNDEFINED not in self.values

    def __call__(self, x: int) -> int:
        return self.values[x]

    def evaluate(self, points) -> np.ndarray:
        return self.table[np.asarray(points, dtype=np.int64)]

    def to_bits(self) -> int:
        if not self.is_total:
            raise InputError("partial pattern has no bit encoding")
        return sum(v << j for j, v in enumerate(self.values))

    def to_str(self) -> str:
        return "".join("*" if v == UNDEFINED else str(v) for v in self.values)


def labelings_of(H: HypothesisClass) -> list[Labeling]:
    return [Labeling.from_array(row) for row in H.matrix]


def _candidate_matrix(cands: Union[HypothesisClass, Sequence[Labeling]]) -> np.ndarray:
    if isinstance(cands, HypothesisClass):
        return cands.matrix.astype(np.int8)
    return np.stack([c.table for c in cands]) if cands else np.zeros((0, 0), dtype=np.int8)


def _as_labelings(cands: Union[HypothesisClass, Sequence[Labeling]]) -> Sequence[Labeling]:
    return labelings_of(cands) if isinstance(cands, HypothesisClass) else cands


# --------------------------------------------------------------------------
# Scores


@dataclass(frozen=True)
class ScoreFunction:
    """``q(S, h)``; lower is better.  ``batch`` scores a candidate matrix at once."""

    fn: Callable[[LabeledSample, Labeling], float]
    sensitivity: float = 1.0
    name: str = "custom"
    batch: Optional[Callable[[LabeledSample, np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.sensitivity < 0:
            raise InputError("declared sensitivity must be non-negative")

    def __call__(self, S: LabeledSample, h: Labeling) -> float:
        return self.fn(S, h)

    def scores(self, S: LabeledSample, M: np.ndarray) -> np.ndarray:
        if self.batch is not None:
            return np.asarray(self.batch(S, M), dtype=np.float64)
        return np.array([self.fn(S, Labeling.from_array(row)) for row in M], dtype=np.float64)


def _error_count_batch(S: LabeledSample, M: np.ndarray) -> np.ndarray:
    if len(S) == 0:
        return np.zeros(M.shape[0], dtype=np.int64)
    return (M[:, S.points] != S.labels[None, :]).sum(axis=1)


def _error_count(S: LabeledSample, h: Labeling) -> int:
    return int(_error_count_batch(S, h.table[None, :])[0])


ERROR_COUNT = ScoreFunction(_error_count, 1.0, "error_count", _error_count_batch)


def scaled_score(q: ScoreFunction, factor: float) -> ScoreFunction:
    """``factor * q``; its true sensitivity scales by ``|factor|``."""
    batch = None if q.batch is None else (lambda S, M: factor * q.batch(S, M))
    return ScoreFunction(lambda S, h: factor * q.fn(S, h), abs(factor) * q.sensitivity,
                         f"{factor}*{q.name}", batch)


def constant_score(value: float = 0.0) -> ScoreFunction:
    return ScoreFunction(lambda S, h: value, 0.0, "constant",
                         lambda S, M: np.full(M.shape[0], value, dtype=np.float64))


def check_matched_sensitivity(q: ScoreFunction, trials: int, rng: np.random.Generator,
                              domain: int = 5, max_len: int = 6) -> float:
    """Largest ``|q(S+(x,y), h) - q(S+(x',y'), h')|`` found by random search.

    ``h'`` copies ``h`` on the points of ``S`` and is random elsewhere, so the
    pair always agrees on ``S`` as the definition requires.
    """
    worst = 0.0
    for _ in range(trials):
        m = int(rng.integers(0, max_len + 1))
        S = LabeledSample(rng.integers(0, domain, m), rng.integers(0, 2, m))
        h = rng.integers(0, 2, domain)
        h2 = rng.integers(0, 2, domain)
        h2[S.points] = h[S.points]
        x, x2 = rng.integers(0, domain, 2)
        y, y2 = rng.integers(0, 2, 2)
        a = q(S + LabeledSample([x], [y]), Labeling.from_array(h))
        b = q(S + LabeledSample([x2], [y2]), Labeling.from_array(h2))
        worst = max(worst, abs(a - b))
    return worst


# --------------------------------------------------------------------------
# Exponential mechanism


def em_probabilities(eps: float, scores: np.ndarray) -> np.ndarray:
    """Normalized ``exp(-eps * q / 2)`` weights, shifted by the minimum score."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise InputError("exponential mechanism needs at least one candidate")
    w = np.exp(-eps * (scores - scores.min()) / 2.0)
    total = math.fsum(w.tolist()) if w.size > EXTENDED_SUM_THRESHOLD else float(w.sum())
    return w / total


def _draw(probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(probs)
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(i, probs.size - 1)


def exp_mech_output_distribution(eps: float, H, S: LabeledSample,
                                 q: ScoreFunction) -> list[tuple[Labeling, float]]:
    cands = _as_labelings(H)
    if len(cands) == 0:
        raise InputError("exponential mechanism needs at least one candidate")
    probs = em_probabilities(eps, q.scores(S, _candidate_matrix(H)))
    return list(zip(cands, probs.tolist()))


def exponential_mechanism(eps: float, H, S: LabeledSample, q: ScoreFunction,
                          rng: np.random.Generator) -> Labeling:
    cands = _as_labelings(H)
    if len(cands) == 0:
        raise InputError("exponential mechanism needs at least one candidate")
    probs = em_probabilities(eps, q.scores(S, _candidate_matrix(H)))
    return cands[_draw(probs, rng)]


# --------------------------------------------------------------------------
# Learners


@dataclass(frozen=True)
class LearnerSpec:
    """A (possibly private) learner: ``learn(sample, rng) -> Labeling``."""

    learn: Callable[[LabeledSample, np.random.Generator], Labeling]
    proper: bool
    budget: PrivacyBudget
    sample_complexity: Optional[Callable[[float, float], int]] = None
    name: str = "learner"
    hclass: Optional[HypothesisClass] = None

    def __call__(self, S: LabeledSample, rng: np.random.Generator) -> Labeling:
        return self.learn(S, rng)


def generic_sample_complexity(size: int, alpha: float, beta: float, eps: float) -> int:
    """Empirical-accuracy size for the mechanism over a finite class.

    From the tail ``|H| exp(-eps * alpha * m / 2) <= beta``: with this many
    examples the output errs on at most an ``alpha`` fraction of a realizable
    sample with probability at least ``1 - beta``.
    """
    return max(1, math.ceil(2.0 * math.log(size / beta) / (eps * alpha)))


def generic_private_learner(H: HypothesisClass, budget: PrivacyBudget) -> LearnerSpec:
    """Proper learner: the exponential mechanism over all of ``H`` scored by error count."""
    if len(H) == 0:
        raise InputError("class must be nonempty")
    if budget.epsilon <= 0:
        raise InputError("epsilon must be positive")
    M = H.matrix.astype(np.int8)
    cands = labelings_of(H)
    eps = budget.epsilon

    def learn(S: LabeledSample, rng: np.random.Generator) -> Labeling:
        return cands[_draw(em_probabilities(eps, _error_count_batch(S, M)), rng)]

    def m(alpha: float, beta: float) -> int:
        return generic_sample_complexity(len(H), alpha, beta, eps)

    return LearnerSpec(learn, True, budget, m, "generic_private", H)


def echo_learner(H: HypothesisClass) -> LearnerSpec:
    """Non-private helper that returns the first member consistent with the sample."""
    cands = labelings_of(H)
    M = H.matrix.astype(np.int8)

    def learn(S: LabeledSample, rng: np.random.Generator) -> Labeling:
        err = _error_count_batch(S, M)
        return cands[int(np.argmin(err))]

    return LearnerSpec(learn, True, PrivacyBudget(math.inf, 1.0), None, "echo", H)


# --------------------------------------------------------------------------
# Relabeling and the pipelines built on it


def subsample_with_replacement(S: LabeledSample, m: int, rng: np.random.Generator) -> LabeledSample:
    if len(S) == 0:
        raise InputError("cannot subsample an empty sample")
    if m < 0:
        raise InputError("subsample size must be non-negative")
    return S[rng.integers(0, len(S), m)]


def pattern_candidates(H: HypothesisClass, points: Sequence[int]) -> np.ndarray:
    """Patterns of ``H`` on ``points`` as rows over the full domain (``-1`` elsewhere)."""
    proj = project(H, points)
    M = np.full((len(proj), H.n), UNDEFINED, dtype=np.int8)
    if points:
        M[:, list(points)] = proj.matrix
    return M


def relabel(D: LabeledSample, T: LabeledSample, H: HypothesisClass, q: ScoreFunction,
            rng: np.random.Generator) -> tuple[LabeledSample, LabeledSample, Labeling]:
    """Relabel ``D`` and ``T`` with a pattern of ``H`` chosen privately on ``D``.

    The chosen pattern is returned for testing and auditing; it is not part
    of the private output.
    """
    if len(H) == 0:
        raise InputError("class must be nonempty")
    S = D + T
    S.check_domain(H.n)
    P = sorted(S.distinct_points())
    M = pattern_candidates(H, P)
    probs = em_probabilities(1.0, q.scores(D, M))
    row = M[_draw(probs, rng)]
    return D.relabel(row[D.points]), T.relabel(row[T.points]), Labeling.from_array(row)


def first_consistent(H: HypothesisClass, S: LabeledSample) -> Labeling:
    """Canonically first member of ``H`` consistent with ``S``."""
    err = _error_count_batch(S, H.matrix.astype(np.int8))
    hits = np.flatnonzero(err == 0)
    if hits.size == 0:
        raise InputError("no member of the class is consistent with the sample")
    return Labeling.from_array(H.matrix[hits[0]])


def relabel_and_learn(D: LabeledSample, V: LabeledSample, W: LabeledSample, H: HypothesisClass,
                      q: ScoreFunction, A: LearnerSpec, rng: np.random.Generator):
    """Returns ``(A(relabeled D∘V∘W), relabeled V, first member consistent with it)``."""
    mech_rng, learn_rng = rng.spawn(2)
    Dt, VWt, _ = relabel(D, V + W, H, q, mech_rng)
    Vt, Wt = VWt[:len(V)], VWt[len(V):]
    hbar = first_consistent(H, Vt)
    return A.learn(Dt + Vt + Wt, learn_rng), Vt, hbar


def private_agnostic(S: LabeledSample, H: HypothesisClass, A: LearnerSpec,
                     rng: np.random.Generator) -> Labeling:
    """Relabel the first half by an error-count pattern, then learn from a ninth of it."""
    if len(S) < 2 or len(S) % 2:
        raise InputError("sample size must be even and at least 2")
    half = len(S) // 2
    D, T = S[:half], S[half:]
    m = half // 9
    if m == 0:
        raise InputError(f"sample of size {len(S)} is too small: |D|/9 rounds to 0")
    mech_rng, sub_rng, learn_rng = rng.spawn(3)
    Dt, _, _ = relabel(D, T, H, ERROR_COUNT, mech_rng)
    return A.learn(subsample_with_replacement(Dt, m, sub_rng), learn_rng)


def _values_at(h, points: np.ndarray) -> np.ndarray:
    if isinstance(h, Labeling):
        return h.table[points]
    return np.array([h(int(x)) for x in points], dtype=np.int8)


def completion_score(Si: LabeledSample, prefix: Sequence, z: Labeling, G: Aggregator,
                     suffix_classes: Sequence[HypothesisClass], cap: int = DEFAULT_COMPOSE_CAP,
                     chunk: int = 4096) -> int:
    """Fewest errors on ``Si`` of ``G(prefix, z, c...)`` over completions ``c`` from the suffix.

    Completions range over the patterns of each suffix class on the points
    of ``Si``, which is all that the error count can see.
    """
    k = len(prefix) + 1 + len(suffix_classes)
    if k != G.arity:
        raise InputError(f"aggregator arity {G.arity} but {k} inputs supplied")
    if len(Si) == 0:
        return 0
    pts = Si.points
    base = np.zeros(len(Si), dtype=np.int64)
    for i, h in enumerate(list(prefix) + [z]):
        vals = _values_at(h, pts).astype(np.int64)
        if (vals < 0).any():
            raise InputError("prefix hypotheses and pattern must be defined on the sample")
        base |= vals << (k - 1 - i)
    table = np.asarray(G.table, dtype=np.int8)
    if not suffix_classes:
        return int((table[base] != Si.labels).sum())
    P = sorted(Si.distinct_points())
    pos = np.searchsorted(P, pts)
    shift0 = len(suffix_classes) - 1
    mats = []
    for j, Hj in enumerate(suffix_classes):
        proj = project(Hj, P).matrix.astype(np.int64)
        mats.append(proj[:, pos] << (shift0 - j))
    shape = tuple(m.shape[0] for m in mats)
    total = math.prod(shape)
    if total > cap:
        raise ResourceError(f"{total} completions exceed the cap of {cap}")
    best = len(Si)
    for start in range(0, total, chunk):
        ids = np.arange(start, min(start + chunk, total))
        idx = np.unravel_index(ids, shape)
        contrib = base[None, :].copy()
        for m, ix in zip(mats, idx):
            contrib = contrib | m[ix]
        err = (table[contrib] != Si.labels[None, :]).sum(axis=1)
        best = min(best, int(err.min()))
        if best == 0:
            break
    return best


def completion_score_function(prefix: Sequence, G: Aggregator, suffix_classes: Sequence[HypothesisClass],
                              cap: int = DEFAULT_COMPOSE_CAP) -> ScoreFunction:
    def fn(S: LabeledSample, z: Labeling) -> int:
        return completion_score(S, prefix, z, G, suffix_classes, cap)
    return ScoreFunction(fn, 1.0, "completion")


def partition_blocks(n: int, k: int, sizes: Optional[Sequence[int]] = None) -> list[range]:
    """Contiguous blocks covering ``range(n)``; the remainder goes to the last block."""
    if sizes is not None:
        if len(sizes) != k or sum(sizes) != n or min(sizes) < 0:
            raise InputError("block sizes must be k non-negative numbers summing to |S|")
    else:
        sizes = [n // k] * k
        sizes[-1] += n - sum(sizes)
    out, start = [], 0
    for s in sizes:
        out.append(range(start, start + s))
        start += s
    return out


def compose_labelings(G: Aggregator, parts: Sequence[Labeling]) -> Labeling:
    if len(parts) != G.arity:
        raise InputError("aggregator arity does not match the number of parts")
    idx = np.zeros(parts[0].n, dtype=np.int64)
    for i, h in enumerate(parts):
        idx |= h.table.astype(np.int64) << (G.arity - 1 - i)
    return Labeling.from_array(np.asarray(G.table, dtype=np.int8)[idx])


def closure_learn(S: LabeledSample, G: Aggregator, classes: Sequence[HypothesisClass],
                  learners: Sequence[LearnerSpec], rng: np.random.Generator,
                  block_sizes: Optional[Sequence[int]] = None,
                  cap: int = DEFAULT_COMPOSE_CAP) -> Labeling:
    """Learn ``G(H_1, ..., H_k)`` one coordinate at a time on disjoint blocks."""
    k = len(classes)
    if k != G.arity or len(learners) != k:
        raise InputError("need one class and one learner per aggregator input")
    if len({H.n for H in classes}) != 1:
        raise InputError("classes must share a domain")
    blocks = partition_blocks(len(S), k, block_sizes)
    if min(len(b) for b in blocks) < 18:
        raise InputError("every block needs at least 18 records")
    parts: list[Labeling] = []
    for i, (block, Hi, Ai) in enumerate(zip(blocks, classes, learners)):
        Si = S[block.start:block.stop]
        half = len(Si) // 2
        D, T = Si[:half], Si[half:]
        q = completion_score_function(parts, G, classes[i + 1:], cap)
        mech_rng, sub_rng, learn_rng = rng.spawn(3)
        Dt, _, _ = relabel(D, T, Hi, q, mech_rng)
        Q = subsample_with_replacement(Dt, half // 9, sub_rng)
        parts.append(Ai.learn(Q, learn_rng))
    return compose_labelings(G, parts)


# --------------------------------------------------------------------------
# Sample-size formulas


@dataclass(frozen=True)
class SizeReport:
    kind: str
    value: float
    formula: str
    heuristic: bool
    params: dict

    @property
    def size(self) -> int:
        return math.ceil(self.value)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value, "size": self.size,
                "formula": self.formula, "heuristic": self.heuristic, "params": self.params}


def _need(params: dict, *names: str) -> list:
    missing = [n for n in names if n not in params]
    if missing:
        raise InputError(f"missing parameters: {', '.join(missing)}")
    return [params[n] for n in names]


def sample_size_bounds(kind: str, **params) -> SizeReport:
    """Sample sizes from the realizable, agnostic and relabeling bounds.

    ``agnostic_total`` and ``closure_total`` carry unspecified constants; they
    use ``constant`` (default 1) and are flagged heuristic.
    """
    if kind == "vc_realizable":
        vc, a, b = _need(params, "vc", "alpha", "beta")
        val = 80.0 / a * (vc * math.log(16.0 / a) + math.log(2.0 / b))
        return SizeReport(kind, val, "(80/a)(vc ln(16/a) + ln(2/b))", False, params)
    if kind == "vc_agnostic":
        vc, a, b = _need(params, "vc", "alpha", "beta")
        gamma = params.get("gamma", 1.0)
        val = gamma * (vc + math.log(1.0 / b)) / a**2
        return SizeReport(kind, val, "gamma (vc + ln(1/b)) / a^2", False, params)
    if kind == "relabel_utility":
        vc, a, b = _need(params, "vc", "alpha", "beta")
        val = 4.0 / a * math.log(1.0 / b) + 10.0 * vc / a * math.log(20.0 * math.e / a)
        return SizeReport(kind, val, "(4/a) ln(1/b) + (10 vc/a) ln(20e/a)", False, params)
    if kind == "agnostic_total":
        vc, a, b, m = _need(params, "vc", "alpha", "beta", "m")
        c = params.get("constant", 1.0)
        val = c * (m + (vc + math.log(1.0 / b)) / a**2)
        return SizeReport(kind, val, "C (m + (vc + ln(1/b)) / a^2)", True, params)
    if kind == "closure_total":
        vc, k, a, b, ms = _need(params, "vc", "k", "alpha", "beta", "m")
        c = params.get("constant", 1.0)
        ms = list(ms) if isinstance(ms, (list, tuple)) else [ms] * k
        val = c * ((k**3 * vc + k**2 * math.log(k / b)) / a**2 + sum(ms))
        return SizeReport(kind, val, "C ((k^3 vc + k^2 ln(k/b)) / a^2 + sum m_i)", True, params)
    raise InputError(f"unknown bound kind {kind!r}")
