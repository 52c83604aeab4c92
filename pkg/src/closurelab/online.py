"""Realizable online learning: SOA, Weighted Majority, and adversary search."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

from .dims import LdimSolver
from .errors import InputError, RealizabilityError, ResourceError
from .hclass import HypothesisClass

DEFAULT_NODE_BUDGET = 10**6


class OnlineLearner(Protocol):
    def predict(self, x: int) -> int: ...

    def update(self, x: int, y: int) -> None: ...

    def clone(self) -> "OnlineLearner": ...

    def state_key(self): ...


class SOALearner:
    """Standard Optimal Algorithm over a version space of ``H``.

    Predicts the label whose consistent subset has the larger Littlestone
    dimension (ties go to 1).  With ``strict=False`` an emptied version space
    is tolerated and the learner keeps predicting 1; this is how it behaves
    as an expert inside weighted majority.
    """

    def __init__(self, H: HypothesisClass, solver: Optional[LdimSolver] = None, strict: bool = True):
        if len(H) == 0:
            raise InputError("SOA needs a nonempty class")
        self.H = H
        self.solver = solver or LdimSolver(H)
        self.version = self.solver.full
        self.strict = strict

    def predict(self, x: int) -> int:
        v0 = self.solver.value(self.solver.restrict(self.version, x, 0))
        v1 = self.solver.value(self.solver.restrict(self.version, x, 1))
        return 1 if v1 >= v0 else 0

    def update(self, x: int, y: int) -> None:
        nxt = self.solver.restrict(self.version, x, y)
        if nxt == 0 and self.version and self.strict:
            raise RealizabilityError(f"label {y} at point {x} empties the version space")
        self.version = nxt

    @property
    def violated(self) -> bool:
        return self.version == 0

    def clone(self) -> "SOALearner":
        c = SOALearner.__new__(SOALearner)
        c.H, c.solver, c.version, c.strict = self.H, self.solver, self.version, self.strict
        return c

    def state_key(self):
        return self.version


class WeightedMajority:
    """Deterministic weighted majority over expert learners.

    Weight of expert ``i`` is ``beta ** mistakes_i``.  Mass comparisons are
    done relative to the smallest mistake count so long runs never underflow.
    """

    def __init__(self, experts: Sequence[OnlineLearner], beta: float):
        if not 0 < beta < 1:
            raise InputError("beta must lie in (0, 1)")
        if not experts:
            raise InputError("need at least one expert")
        self.experts = list(experts)
        self.beta = beta
        self.mistakes = [0] * len(self.experts)
        self._last: Optional[tuple[int, list[int]]] = None

    def _masses(self, votes: Sequence[int]) -> tuple[float, float]:
        base = min(self.mistakes)
        mass = [0.0, 0.0]
        for v, c in zip(votes, self.mistakes):
            mass[v] += self.beta ** (c - base)
        return mass[0], mass[1]

    def predict(self, x: int) -> int:
        votes = [e.predict(x) for e in self.experts]
        self._last = (x, votes)
        m0, m1 = self._masses(votes)
        return 1 if m1 >= m0 else 0

    def update(self, x: int, y: int) -> None:
        if self._last is not None and self._last[0] == x:
            votes = self._last[1]
        else:
            votes = [e.predict(x) for e in self.experts]
        for i, (e, v) in enumerate(zip(self.experts, votes)):
            if v != y:
                self.mistakes[i] += 1
            e.update(x, y)
        self._last = None

    @property
    def weights(self) -> list[float]:
        return [self.beta ** c for c in self.mistakes]

    def clone(self) -> "WeightedMajority":
        c = WeightedMajority.__new__(WeightedMajority)
        c.experts = [e.clone() for e in self.experts]
        c.beta = self.beta
        c.mistakes = list(self.mistakes)
        c._last = None
        return c

    def state_key(self):
        return (tuple(self.mistakes), tuple(e.state_key() for e in self.experts))


def soa_learner(H: HypothesisClass) -> SOALearner:
    return SOALearner(H)


def weighted_majority(experts: Sequence[OnlineLearner], beta: float) -> WeightedMajority:
    return WeightedMajority(experts, beta)


def union_learner(classes: Sequence[HypothesisClass]) -> WeightedMajority:
    """Weighted majority with beta = 1/2 over one SOA per class."""
    if not classes:
        raise InputError("need at least one class")
    n = classes[0].n
    if any(H.n != n for H in classes):
        raise InputError("classes must share a domain")
    return WeightedMajority([SOALearner(H, strict=False) for H in classes], 0.5)


def wm_mistake_bound(k: int, d: float, beta: float) -> float:
    """``(log k + d log(1/beta)) / log(2/(1+beta))`` in base 2."""
    if k < 1 or not 0 < beta < 1:
        raise InputError("need k >= 1 and 0 < beta < 1")
    return (math.log2(k) + d * math.log2(1 / beta)) / math.log2(2 / (1 + beta))


@dataclass
class MistakeLog:
    rounds: list[tuple[int, int, int]] = field(default_factory=list)  # (point, prediction, truth)
    bound_claimed: Optional[float] = None

    @property
    def mistake_count(self) -> int:
        return sum(p != y for _, p, y in self.rounds)

    def to_dict(self) -> dict:
        return {"rounds": [list(r) for r in self.rounds], "mistake_count": self.mistake_count,
                "bound_claimed": self.bound_claimed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def consistent_members(H: HypothesisClass, seq: Sequence[tuple[int, int]]) -> list[int]:
    return [h for h in H.members if all(((h >> x) & 1) == y for x, y in seq)]


def run_realizable_game(H: HypothesisClass, learner: OnlineLearner,
                        seq: Sequence[tuple[int, int]], bound: Optional[float] = None) -> MistakeLog:
    for x, y in seq:
        if not 0 <= x < H.n or y not in (0, 1):
            raise InputError(f"bad round ({x}, {y})")
    if not consistent_members(H, seq):
        raise RealizabilityError("sequence is not realizable by the class")
    log = MistakeLog(bound_claimed=bound)
    for x, y in seq:
        p = learner.predict(x)
        learner.update(x, y)
        log.rounds.append((x, p, y))
    return log


def worst_case_adversary(H: HypothesisClass, learner: OnlineLearner, horizon: int,
                         node_budget: int = DEFAULT_NODE_BUDGET) -> tuple[list[tuple[int, int]], int]:
    """Exhaustive minimax over realizable sequences of length <= ``horizon``.

    Returns the lexicographically smallest sequence among those forcing the
    most mistakes.  Rounds that change neither the version space nor the
    learner's state and cost no mistake are skipped; they only burn horizon.
    """
    solver = LdimSolver(H)
    cols = H.column_masks
    memo: dict = {}
    nodes = 0

    def best(version: int, lrn: OnlineLearner, left: int):
        nonlocal nodes
        if left == 0:
            return 0, ()
        key = (version, lrn.state_key(), left)
        hit = memo.get(key)
        if hit is not None:
            return hit
        nodes += 1
        if nodes > node_budget:
            raise ResourceError(f"adversary search exceeded {node_budget} nodes")
        top, top_seq = 0, ()
        skey = lrn.state_key()
        for x in range(H.n):
            p = lrn.predict(x)
            for y in (0, 1):
                nxt = version & cols[x] if y else version & ~cols[x]
                if nxt == 0:
                    continue
                child = lrn.clone()
                child.update(x, y)
                gain = int(p != y)
                if not gain and nxt == version and child.state_key() == skey:
                    continue
                val, rest = best(nxt, child, left - 1)
                if gain + val > top:
                    top, top_seq = gain + val, ((x, y),) + rest
        memo[key] = (top, top_seq)
        return top, top_seq

    value, seq = best(solver.full, learner.clone(), horizon)
    return list(seq), value
