"""Exact and Monte-Carlo privacy audits, utility checks and dimension surveys."""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator, Mapping, Optional, Sequence

import numpy as np
from scipy.stats import beta as beta_dist

from . import dp
from .classio import canonical_json, config_hash, resolve_aggregator, resolve_class
from .dims import floor_log2, littlestone_dimension, threshold_dimension, vc_dimension
from .errors import InputError
from .hclass import OR, Aggregator, HypothesisClass, LabeledSample, compose, make_random_or_blowup

SCHEMA_VERSION = 1
PASS, FAIL, INCONCLUSIVE = "PASS", "FAIL", "INCONCLUSIVE"
MAX_SINGLETON_EVENTS = 64


def _plain(obj):
    """Convert numpy scalars and containers into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


# --------------------------------------------------------------------------
# Reports


@dataclass
class ExperimentReport:
    """Config echo, per-record rows, aggregates, bounds and verdicts.

    ``meta`` holds wall-clock data and is left out of comparison artifacts.
    """

    name: str
    config: dict = field(default_factory=dict)
    records: list[dict] = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    bounds: list[dict] = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add_bound(self, name: str, value: float, source: str) -> None:
        self.bounds.append({"name": name, "value": value, "source": source})

    @property
    def verdict(self) -> str:
        vals = set(self.verdicts.values())
        if FAIL in vals:
            return FAIL
        if vals <= {PASS}:
            return PASS
        return INCONCLUSIVE

    @property
    def failed(self) -> bool:
        return self.verdict == FAIL

    def to_dict(self, with_meta: bool = True) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "config": self.config,
            "config_hash": config_hash(_plain(self.config)),
            "records": self.records,
            "stats": self.stats,
            "bounds": self.bounds,
            "verdicts": self.verdicts,
            "verdict": self.verdict,
            "seeds": self.seeds,
        }
        if with_meta:
            out["meta"] = self.meta
        return _plain(out)

    def to_json(self, with_meta: bool = True) -> str:
        return json.dumps(self.to_dict(with_meta), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        """One row per record; columns sorted, schema version first."""
        cols = sorted({k for r in self.records for k in r})
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["schema_version", *cols])
        for r in self.records:
            w.writerow([SCHEMA_VERSION, *(_csv_cell(r.get(c)) for c in cols)])
        return buf.getvalue()


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(_plain(v), sort_keys=True)
    return _plain(v)


# --------------------------------------------------------------------------
# Exact privacy


@dataclass(frozen=True)
class NeighborPair:
    S1: LabeledSample
    S2: LabeledSample
    index: int

    def __post_init__(self):
        if len(self.S1) != len(self.S2):
            raise InputError("neighbors must have equal length")
        diff = [i for i, (a, b) in enumerate(zip(self.S1.items, self.S2.items)) if a != b]
        if diff != [self.index]:
            raise InputError(f"samples must differ exactly at index {self.index}, differ at {diff}")

    def swapped(self) -> "NeighborPair":
        return NeighborPair(self.S2, self.S1, self.index)


def all_samples(n_points: int, length: int) -> Iterator[LabeledSample]:
    items = [(x, y) for x in range(n_points) for y in (0, 1)]
    for combo in itertools.product(items, repeat=length):
        yield LabeledSample.from_pairs(combo)


def neighbor_pairs(n_points: int, length: int) -> Iterator[NeighborPair]:
    """Every ordered pair of samples of the given length differing in one entry."""
    items = [(x, y) for x in range(n_points) for y in (0, 1)]
    for combo in itertools.product(items, repeat=length):
        S1 = LabeledSample.from_pairs(combo)
        for i in range(length):
            for alt in items:
                if alt == combo[i]:
                    continue
                S2 = LabeledSample.from_pairs(combo[:i] + (alt,) + combo[i + 1:])
                yield NeighborPair(S1, S2, i)


def _as_dist(P) -> dict:
    if isinstance(P, Mapping):
        return dict(P)
    out: dict = {}
    for o, p in P:
        out[o] = out.get(o, 0.0) + p
    return out


def exact_dp_delta(P1, P2, eps: float) -> float:
    """Smallest ``delta`` with ``P1(F) <= e^eps P2(F) + delta`` for every event ``F``."""
    a, b = _as_dist(P1), _as_dist(P2)
    scale = math.exp(eps)
    return math.fsum(max(0.0, p - scale * b.get(o, 0.0)) for o, p in a.items())


def exact_em_max_delta(eps: float, H, q: dp.ScoreFunction, n_points: int, length: int) -> float:
    """Worst exact delta of the exponential mechanism over all neighbors of a given length."""
    M = dp._candidate_matrix(H)
    worst = 0.0
    cache: dict = {}

    def probs(S: LabeledSample) -> np.ndarray:
        key = S
        if key not in cache:
            cache[key] = dp.em_probabilities(eps, q.scores(S, M))
        return cache[key]

    scale = math.exp(eps)
    for pair in neighbor_pairs(n_points, length):
        p1, p2 = probs(pair.S1), probs(pair.S2)
        worst = max(worst, float(np.maximum(0.0, p1 - scale * p2).sum()))
    return worst


# --------------------------------------------------------------------------
# Monte-Carlo privacy audit


def clopper_pearson(k: int, n: int, alpha: float) -> tuple[float, float]:
    """Two-sided exact binomial interval at level ``1 - alpha``."""
    lo = 0.0 if k == 0 else float(beta_dist.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta_dist.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


def _sample_outputs(mechanism, S: LabeledSample, trials: int, rng: np.random.Generator) -> list:
    batch = getattr(mechanism, "batch", None)
    if batch is not None:
        return list(batch(S, trials, rng))
    return [mechanism(S, rng) for _ in range(trials)]


def default_events(outputs: Sequence, domain: Optional[int] = None) -> list[tuple[str, Callable]]:
    """Singleton events when few outcomes appear, else "output labels x as b"."""
    seen = sorted(set(outputs), key=repr)
    if len(seen) <= MAX_SINGLETON_EVENTS:
        return [(f"out={_describe(o)}", (lambda v: lambda o: o == v)(o)) for o in seen]
    if all(isinstance(o, dp.Labeling) for o in seen):
        n = domain or seen[0].n
        return [(f"h({x})={b}", (lambda x, b: lambda o: o(x) == b)(x, b)) for x in range(n) for b in (0, 1)]
    top = [o for o, _ in Counter(outputs).most_common(MAX_SINGLETON_EVENTS)]
    return [(f"out={_describe(o)}", (lambda v: lambda o: o == v)(o)) for o in top]


def _describe(o) -> str:
    return o.to_str() if isinstance(o, dp.Labeling) else repr(o)


def mc_dp_audit(mechanism, pair: NeighborPair, events: Optional[Sequence[tuple[str, Callable]]] = None,
                trials: int = 10_000, eps_claimed: float = 1.0, delta_claimed: float = 0.0,
                rng: Optional[np.random.Generator] = None, confidence: float = 0.99) -> ExperimentReport:
    """One-sided audit: FAIL only when confidence intervals separate beyond the claim.

    Intervals are Clopper-Pearson with a Bonferroni split of ``1 - confidence``
    over every interval computed (two per event).
    """
    if trials <= 0:
        raise InputError("trials must be positive")
    rng = rng if rng is not None else np.random.default_rng()
    r1, r2 = rng.spawn(2)
    t0 = time.perf_counter()
    out1 = _sample_outputs(mechanism, pair.S1, trials, r1)
    out2 = _sample_outputs(mechanism, pair.S2, trials, r2)
    if events is None:
        events = default_events(out1 + out2)
    alpha = (1 - confidence) / max(1, 2 * len(events))
    scale = math.exp(eps_claimed)
    report = ExperimentReport("mc_dp_audit", {"trials": trials, "eps": eps_claimed, "delta": delta_claimed,
                                             "confidence": confidence, "events": len(events)})
    fails, eps_lb = 0, 0.0
    for name, pred in events:
        k1 = sum(1 for o in out1 if pred(o))
        k2 = sum(1 for o in out2 if pred(o))
        lo1, hi1 = clopper_pearson(k1, trials, alpha)
        lo2, hi2 = clopper_pearson(k2, trials, alpha)
        bad = lo1 > scale * hi2 + delta_claimed or lo2 > scale * hi1 + delta_claimed
        fails += bad
        for lo, hi in ((lo1, hi2), (lo2, hi1)):
            if lo - delta_claimed > 0 and hi > 0:
                eps_lb = max(eps_lb, math.log((lo - delta_claimed) / hi))
            elif lo - delta_claimed > 0:
                eps_lb = math.inf
        report.records.append({"event": name, "count1": k1, "count2": k2, "ci1": [lo1, hi1],
                               "ci2": [lo2, hi2], "violation": bool(bad)})
    report.stats = {"events": len(events), "violations": fails, "eps_lower_bound": eps_lb,
                    "distinct_outputs": len(set(out1) | set(out2))}
    report.add_bound("claimed_eps", eps_claimed, "privacy claim")
    report.add_bound("claimed_delta", delta_claimed, "privacy claim")
    report.verdicts["privacy"] = FAIL if fails else PASS
    report.meta["runtime_s"] = time.perf_counter() - t0
    return report


class ConstantMechanism:
    def __init__(self, value=0):
        self.value = value

    def __call__(self, S, rng):
        return self.value


class EchoMechanism:
    """Deliberately non-private: publishes the label of one record."""

    def __init__(self, index: int = 0):
        self.index = index

    def __call__(self, S: LabeledSample, rng) -> int:
        return int(S.labels[self.index])


class RelabelLearnMechanism:
    """``A(relabel(D, T))`` with ``D, T`` the halves of the input and ``A`` the
    exponential mechanism over ``H`` scored by error count.

    ``__call__`` runs the pipeline once.  ``batch`` draws the relabeling
    pattern for every run first and then the learner's output per pattern,
    which is the same two-stage distribution sampled in bulk.
    """

    def __init__(self, H: HypothesisClass, learner_eps: float = 1.0):
        self.H = H
        self.learner = dp.generic_private_learner(H, dp.PrivacyBudget(learner_eps))
        self.learner_eps = learner_eps
        self._cands = dp.labelings_of(H)
        self._M = H.matrix.astype(np.int8)

    @staticmethod
    def _halves(S: LabeledSample):
        half = len(S) // 2
        return S[:half], S[half:]

    def __call__(self, S: LabeledSample, rng: np.random.Generator) -> dp.Labeling:
        D, T = self._halves(S)
        mech_rng, learn_rng = rng.spawn(2)
        Dt, Tt, _ = dp.relabel(D, T, self.H, dp.ERROR_COUNT, mech_rng)
        return self.learner.learn(Dt + Tt, learn_rng)

    def _stages(self, S: LabeledSample):
        D, T = self._halves(S)
        P = sorted(S.distinct_points())
        pats = dp.pattern_candidates(self.H, P)
        p_pat = dp.em_probabilities(1.0, dp.ERROR_COUNT.scores(D, pats))
        learned = []
        for row in pats:
            St = S.relabel(row[S.points])
            learned.append(dp.em_probabilities(self.learner_eps, dp.ERROR_COUNT.scores(St, self._M)))
        return p_pat, learned

    def exact_distribution(self, S: LabeledSample) -> dict:
        p_pat, learned = self._stages(S)
        mix = sum(p * l for p, l in zip(p_pat, learned))
        return {c: float(p) for c, p in zip(self._cands, mix)}

    def batch(self, S: LabeledSample, trials: int, rng: np.random.Generator) -> list:
        p_pat, learned = self._stages(S)
        pat_rng, learn_rng = rng.spawn(2)
        counts = pat_rng.multinomial(trials, p_pat)
        idx = np.concatenate([learn_rng.choice(len(self._cands), size=c, p=l)
                              for c, l in zip(counts, learned) if c])
        pat_rng.shuffle(idx)
        return [self._cands[i] for i in idx]


class ClosureMechanism:
    """The full closure learner as a mechanism returning the composed labeling."""

    def __init__(self, G: Aggregator, classes: Sequence[HypothesisClass], learners: Sequence[dp.LearnerSpec]):
        self.G, self.classes, self.learners = G, list(classes), list(learners)

    def __call__(self, S: LabeledSample, rng: np.random.Generator) -> dp.Labeling:
        return dp.closure_learn(S, self.G, self.classes, self.learners, rng)


# --------------------------------------------------------------------------
# Utility


def exp_mech_utility_check(eps: float, H, S: LabeledSample, q: dp.ScoreFunction, Delta: float,
                           trials: int, rng: np.random.Generator, m: Optional[int] = None) -> ExperimentReport:
    """Tail ``Pr[q(S,h) >= min q + Delta m]`` exact, sampled and against ``|H| exp(-eps Delta m / 2)``.

    The Monte-Carlo band is three binomial standard deviations plus one count.
    """
    m = len(S) if m is None else m
    scores = q.scores(S, dp._candidate_matrix(H))
    probs = dp.em_probabilities(eps, scores)
    tail_mask = scores >= scores.min() + Delta * m
    exact = float(probs[tail_mask].sum())
    bound = len(scores) * math.exp(-eps * Delta * m / 2)
    draws = rng.choice(len(scores), size=trials, p=probs) if trials else np.zeros(0, dtype=int)
    emp = float(tail_mask[draws].mean()) if trials else 0.0
    sigma = math.sqrt(exact * (1 - exact) / trials) if trials else 0.0
    band = 3 * sigma + (1.0 / trials if trials else 0.0)
    rep = ExperimentReport("exp_mech_utility", {"eps": eps, "Delta": Delta, "m": m, "size": len(scores),
                                                "trials": trials})
    rep.stats = {"exact_tail": exact, "empirical_tail": emp, "sigma": sigma}
    rep.add_bound("tail_bound", bound, "|H| exp(-eps Delta m / 2)")
    rep.verdicts["bound_holds"] = PASS if exact <= bound + 1e-12 else FAIL
    if trials:
        rep.verdicts["mc_matches_exact"] = PASS if abs(emp - exact) <= band else FAIL
    return rep


def relabel_utility_check(H: HypothesisClass, alpha: float, beta: float, trials: int,
                          rng: np.random.Generator, size: Optional[int] = None,
                          noise: float = 0.5) -> ExperimentReport:
    """How often the relabeling pattern's error count exceeds the optimum by ``alpha |D|``.

    Each trial draws fresh ``D`` and ``T`` of equal size: uniform points, labels
    from a random member flipped with probability ``noise``.
    """
    vc, _ = vc_dimension(H)
    if size is None:
        size = dp.sample_size_bounds("relabel_utility", vc=max(vc, 1), alpha=alpha, beta=beta).size
    rep = ExperimentReport("relabel_utility", {"alpha": alpha, "beta": beta, "size": size, "trials": trials,
                                               "noise": noise, "class": H.key})
    M = H.matrix
    bad = 0
    for t in range(trials):
        data_rng, mech_rng = rng.spawn(2)
        f = M[data_rng.integers(len(H))]
        pts = data_rng.integers(0, H.n, 2 * size)
        labels = f[pts] ^ (data_rng.random(2 * size) < noise)
        S = LabeledSample(pts, labels)
        D, T = S[:size], S[size:]
        _, _, pat = dp.relabel(D, T, H, dp.ERROR_COUNT, mech_rng)
        opt = int(dp._error_count_batch(D, M.astype(np.int8)).min())
        got = dp.ERROR_COUNT(D, pat)
        bad += got > opt + alpha * size
    freq = bad / trials
    sigma = math.sqrt(beta * (1 - beta) / trials)
    rep.stats = {"exceed_frequency": freq, "sigma": sigma, "exceed_count": bad}
    rep.add_bound("size", size, "(4/a) ln(1/b) + (10 vc/a) ln(20e/a)")
    rep.add_bound("allowed_frequency", beta + 3 * sigma, "beta + 3 sigma")
    rep.verdicts["relabel_utility"] = PASS if freq <= beta + 3 * sigma else FAIL
    return rep


# --------------------------------------------------------------------------
# Dimension surveys


def closure_ldim_bound(k: int, d: int, constant: float = 1.0) -> float:
    """``C 2^(2k) k^2 d``."""
    return constant * 4**k * k * k * d


def closure_tdim_log2_bound(k: int, t: int) -> float:
    """``log2`` of ``2^(4k 4^k t)``."""
    return 4.0 * k * 4**k * t


def closure_dim_survey(G: Aggregator, classes: Sequence[HypothesisClass], constant: float = 1.0) -> ExperimentReport:
    k = G.arity
    rep = ExperimentReport("closure_dim_survey", {"aggregator": G.table_str(), "arity": k,
                                                  "classes": [H.key for H in classes], "constant": constant})
    ds, ts = [], []
    for i, H in enumerate(classes):
        d, _ = littlestone_dimension(H)
        t, _ = threshold_dimension(H)
        ds.append(d)
        ts.append(t)
        rep.records.append({"part": i, "members": len(H), "ldim": d, "tdim": t})
    C = compose(G, classes)
    dc, _ = littlestone_dimension(C)
    tc, _ = threshold_dimension(C)
    d, t = max(ds), max(ts)
    lb = closure_ldim_bound(k, d, constant)
    tb = closure_tdim_log2_bound(k, t)
    rep.records.append({"part": "composed", "members": len(C), "ldim": dc, "tdim": tc})
    rep.stats = {"ldim": dc, "tdim": tc, "max_part_ldim": d, "max_part_tdim": t}
    rep.add_bound("ldim_bound", lb, "C 2^(2k) k^2 d")
    rep.add_bound("tdim_log2_bound", tb, "log2 2^(4k 4^k t)")
    rep.verdicts["ldim"] = PASS if dc <= lb else FAIL
    rep.verdicts["tdim"] = PASS if (tc == 0 or math.log2(tc) <= tb) else FAIL
    return rep


def or_blowup_check(t: int, rng: np.random.Generator) -> ExperimentReport:
    """``T(h1 | h2 : h1, h2 in H) >= 2^floor(t/5)`` for the random construction."""
    B = make_random_or_blowup(t, rng)
    C = compose(OR(2), [B.hclass, B.hclass])
    tc, w = threshold_dimension(C)
    rep = ExperimentReport("or_blowup", {"t": t, "m": B.m})
    rep.stats = {"tdim_or": tc, "members": len(B.hclass), "witness": w.to_json()}
    rep.add_bound("required", B.m, "2^floor(t/5)")
    rep.verdicts["or_blowup"] = PASS if tc >= B.m else FAIL
    return rep


def shelah_check(H: HypothesisClass) -> ExperimentReport:
    """``T >= floor(log2 Ldim)`` and ``Ldim >= floor(log2 T)``, each vacuous at 0."""
    d, _ = littlestone_dimension(H)
    t, _ = threshold_dimension(H)
    ok1 = d == 0 or t >= floor_log2(d)
    ok2 = t == 0 or d >= floor_log2(t)
    rep = ExperimentReport("shelah", {"class": H.key})
    rep.stats = {"ldim": d, "tdim": t}
    rep.verdicts["tdim_vs_ldim"] = PASS if ok1 else FAIL
    rep.verdicts["ldim_vs_tdim"] = PASS if ok2 else FAIL
    return rep


def no_biclique_check(H: HypothesisClass, k: int, node_budget: int = 10**6) -> Optional[bool]:
    """True iff no ``k`` points and ``k`` members form an all-ones submatrix.

    Returns ``None`` (inconclusive) when the search exceeds ``node_budget``.
    Points are chosen in increasing order while tracking the members that are
    1 on all of them; a branch dies once fewer than ``k`` such members remain.
    """
    if k < 1:
        raise InputError("k must be >= 1")
    cols = H.column_masks
    n = H.n
    nodes = 0

    class _Budget(Exception):
        pass

    def dfs(start: int, chosen: int, rows: int) -> bool:
        nonlocal nodes
        if chosen == k:
            return True
        nodes += 1
        if nodes > node_budget:
            raise _Budget
        for x in range(start, n - (k - chosen) + 1):
            r = rows & cols[x]
            if r.bit_count() >= k and dfs(x + 1, chosen + 1, r):
                return True
        return False

    full = (1 << len(H)) - 1
    if len(H) < k or n < k:
        return True
    try:
        return not dfs(0, 0, full)
    except _Budget:
        return None


# --------------------------------------------------------------------------
# End-to-end generalization


def true_error(h: dp.Labeling, f: np.ndarray, weights: np.ndarray, noise: float) -> float:
    """Exact error of ``h`` when labels are ``f`` flipped with probability ``noise``."""
    agree = h.table == f
    return float(np.sum(weights * np.where(agree, noise, 1.0 - noise)))


def _weights(spec, n: int) -> np.ndarray:
    if spec in (None, "uniform"):
        return np.full(n, 1.0 / n)
    w = np.asarray(spec, dtype=np.float64)
    if w.shape != (n,) or (w < 0).any() or w.sum() <= 0:
        raise InputError("distribution must be 'uniform' or n non-negative weights")
    return w / w.sum()


@dataclass
class _Setup:
    algorithm: str
    classes: list
    G: Optional[Aggregator]
    target: np.ndarray
    weights: np.ndarray
    noise: float
    size: int
    learners: list
    reference: HypothesisClass
    sizing: dict


def _setup(config: dict) -> _Setup:
    algo = config.get("algorithm", "agnostic")
    classes = [resolve_class(c) for c in config["classes"]]
    n = classes[0].n
    if any(H.n != n for H in classes):
        raise InputError("classes must share a domain")
    a, b = float(config["alpha"]), float(config["beta"])
    eps = float(config.get("epsilon", 1.0))
    C = float(config.get("constant", 1.0))
    learners = [dp.generic_private_learner(H, dp.PrivacyBudget(eps, float(config.get("delta", 0.0))))
                for H in classes]
    tgt = config.get("target", {})
    if algo == "agnostic":
        if len(classes) != 1:
            raise InputError("the agnostic experiment takes one class")
        G = None
        H = classes[0]
        target = H.matrix[int(tgt.get("member", 0))].astype(np.int8)
        reference = H
        m = learners[0].sample_complexity(a, b)
        vc, _ = vc_dimension(H)
        rep = dp.sample_size_bounds("agnostic_total", vc=vc, alpha=a, beta=b, m=m, constant=C)
        floor_size = 18 * m
    elif algo == "closure":
        G = resolve_aggregator(config["aggregator"])
        k = G.arity
        if len(classes) != k:
            raise InputError("need one class per aggregator input")
        members = tgt.get("members", [0] * k)
        parts = [dp.Labeling.from_array(H.matrix[int(i)]) for H, i in zip(classes, members)]
        target = dp.compose_labelings(G, parts).table.copy()
        reference = compose(G, classes)
        ms = [L.sample_complexity(a / k, b / k) for L in learners]
        vc, _ = vc_dimension(reference)
        rep = dp.sample_size_bounds("closure_total", vc=vc, k=k, alpha=a, beta=b, m=ms, constant=C)
        floor_size = k * 18 * max(ms)
    else:
        raise InputError(f"unknown algorithm {algo!r}")
    size = config.get("size", "auto")
    if size == "auto":
        size = max(rep.size, floor_size)
        size += size % 2
    size = int(size)
    sizing = {"formula": rep.to_dict(), "subsample_floor": floor_size, "size": size}
    return _Setup(algo, classes, G, target, _weights(config.get("distribution"), n),
                  float(config.get("noise", 0.0)), size, learners, reference, sizing)


@lru_cache(maxsize=8)
def _cached_setup(key: str) -> _Setup:
    return _setup(json.loads(key))


def _run_trial(config_key: str, trial: int) -> dict:
    cfg = json.loads(config_key)
    st = _cached_setup(config_key)
    ss = np.random.SeedSequence(int(cfg["seed"])).spawn(int(cfg["trials"]))[trial]
    data_rng, algo_rng = [np.random.default_rng(s) for s in ss.spawn(2)]
    n = len(st.weights)
    pts = data_rng.choice(n, size=st.size, p=st.weights)
    flips = data_rng.random(st.size) < st.noise
    S = LabeledSample(pts, st.target[pts] ^ flips)
    if st.algorithm == "agnostic":
        h = dp.private_agnostic(S, st.classes[0], st.learners[0], algo_rng)
    else:
        h = dp.closure_learn(S, st.G, st.classes, st.learners, algo_rng)
    err = true_error(h, st.target, st.weights, st.noise)
    best = min(true_error(dp.Labeling.from_array(r), st.target, st.weights, st.noise)
               for r in st.reference.matrix)
    return {"trial": trial, "true_error": err, "empirical_error": dp.ERROR_COUNT(S, h) / len(S),
            "best_in_class": best, "excess": err - best, "output": h.to_str()}


def generalization_experiment(config: dict, jobs: int = 1) -> ExperimentReport:
    """Run the agnostic or closure learner end to end on a finite synthetic distribution.

    Config keys: ``algorithm`` ("agnostic" | "closure"), ``classes``,
    ``aggregator`` (closure only), ``target``, ``distribution``, ``noise``,
    ``alpha``, ``beta``, ``epsilon``, ``constant``, ``multiplier``, ``size``,
    ``trials``, ``seed``.
    """
    for key in ("classes", "alpha", "beta", "trials", "seed"):
        if key not in config:
            raise InputError(f"config is missing {key!r}")
    key = canonical_json(config)
    t0 = time.perf_counter()
    st = _cached_setup(key)
    trials = int(config["trials"])
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            records = list(ex.map(_run_trial, [key] * trials, range(trials)))
    else:
        records = [_run_trial(key, i) for i in range(trials)]
    mult = float(config.get("multiplier", 4.0))
    a, b = float(config["alpha"]), float(config["beta"])
    for r in records:
        r["success"] = bool(r["excess"] <= mult * a)
    succ = sum(r["success"] for r in records) / trials
    excess = np.array([r["excess"] for r in records])
    rep = ExperimentReport("generalization", dict(config), records)
    rep.seeds = {"seed": int(config["seed"])}
    rep.stats = {"success_rate": succ, "median_excess": float(np.median(excess)),
                 "mean_excess": float(excess.mean()), "max_excess": float(excess.max()),
                 "mean_true_error": float(np.mean([r["true_error"] for r in records])),
                 "sizing": st.sizing}
    rep.add_bound("excess_allowed", mult * a, "multiplier * alpha")
    rep.add_bound("success_required", 1 - mult * b, "1 - multiplier * beta")
    rep.verdicts["utility"] = PASS if succ >= 1 - mult * b else FAIL
    rep.meta["runtime_s"] = time.perf_counter() - t0
    return rep
