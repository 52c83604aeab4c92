"""Acceptance criteria 1-15 at their stated sizes, tolerances and time limits."""
import itertools
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from closurelab import audit, dp
from closurelab.cli import run
from closurelab.dims import littlestone_dimension, threshold_dimension, vc_dimension
from closurelab.hclass import (AND, OR, Aggregator, Const, HypothesisClass, LabeledSample, Lit, Maj,
                               class_from_matrix, compose, dnf_majority_decompose, full_cube,
                               make_multiunion_lower, make_random_or_blowup, make_threshold_chain,
                               make_threshold_union_tight, make_union_tight, multiunion_parts, random_class, union)
from closurelab.online import SOALearner, union_learner, worst_case_adversary
from oracles import ldim_bruteforce, maj_eval, tdim_bruteforce

GOLDENS = Path(__file__).parent / "goldens"


def random_classes(seed, count, max_domain=6, max_members=16):
    rng = np.random.default_rng(seed)
    return [random_class(rng, max_domain, max_members) for _ in range(count)]


def random_pairs(seed, count, max_domain=6, max_members=16):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(1, max_domain + 1))
        out.append(tuple(random_class(rng, n, max_members, min_domain=n) for _ in range(2)))
    return out


def constructions():
    yield make_threshold_chain(8)
    yield full_cube(4)
    for d1, d2 in itertools.product(range(3), repeat=2):
        yield union(*make_union_tight(d1, d2, d1 + d2 + 1))
    for t1, t2 in itertools.product((1, 2, 3), repeat=2):
        yield union(*make_threshold_union_tight(t1, t2))
    for k in (2, 4, 8):
        yield make_multiunion_lower(full_cube(2), k)
    for t in (5, 10, 15):
        B = make_random_or_blowup(t, np.random.default_rng(t))
        yield B.hclass
        yield compose(OR(2), [B.hclass, B.hclass])


@pytest.mark.criterion(1, "recursive Ldim equals brute-force tree enumeration on 500 random classes")
def test_c01_ldim_oracle_equivalence():
    t0 = time.perf_counter()
    mismatches = [H for H in random_classes(1, 500)
                  if littlestone_dimension(H)[0] != ldim_bruteforce(H.rows(), H.n, max_depth=H.n)]
    assert not mismatches
    assert time.perf_counter() - t0 < 60


@pytest.mark.criterion(2, "union bounds on 500 pairs, tightness for (d1,d2) in {0,1,2}^2")
def test_c02_union_bounds_and_tightness():
    violations = 0
    for H1, H2 in random_pairs(2, 500):
        U = union(H1, H2)
        violations += littlestone_dimension(U)[0] > littlestone_dimension(H1)[0] + littlestone_dimension(H2)[0] + 1
        violations += threshold_dimension(U)[0] > threshold_dimension(H1)[0] + threshold_dimension(H2)[0]
    assert violations == 0
    for d1, d2 in itertools.product(range(3), repeat=2):
        n = d1 + d2 + 1
        H1, H2 = make_union_tight(d1, d2, n)
        assert ldim_bruteforce(H1.rows(), n, n) == d1 and ldim_bruteforce(H2.rows(), n, n) == d2
        assert ldim_bruteforce(union(H1, H2).rows(), n, n) == d1 + d2 + 1
    for t1, t2 in itertools.product((1, 2), repeat=2):
        H1, H2 = make_threshold_union_tight(t1, t2)
        n = t1 + t2
        assert tdim_bruteforce(H1.rows(), n) == t1 and tdim_bruteforce(H2.rows(), n) == t2
        assert tdim_bruteforce(union(H1, H2).rows(), n) == t1 + t2


@pytest.mark.criterion(3, "large unions: Ldim >= d + floor(log2 k); union learner <= ceil(3d + 3 log2 k)")
def test_c03_large_unions():
    bases = {0: class_from_matrix(1, ["0"]), 1: full_cube(1), 2: full_cube(2)}
    for d, base in bases.items():
        assert littlestone_dimension(base)[0] == d
        for k in (2, 4, 8):
            U = make_multiunion_lower(base, k)
            assert ldim_bruteforce(U.rows(), U.n, U.n) >= d + int(math.log2(k))
            bound = math.ceil(3 * d + 3 * math.log2(k))
            _, forced = worst_case_adversary(U, union_learner(multiunion_parts(base, k)), bound + 2,
                                             node_budget=10**7)
            assert forced <= bound


@pytest.mark.criterion(4, "both floor-log inequalities between Ldim and T, zero violations")
def test_c04_shelah():
    classes = random_classes(4, 500) + list(constructions())
    bad = [H for H in classes if audit.shelah_check(H).failed]
    assert not bad


@pytest.mark.criterion(5, "closure Ldim survey within C 2^(2k) k^2 d (C=1), matches goldens")
def test_c05_closure_survey():
    golden = json.loads((GOLDENS / "closure_survey.json").read_text())
    bases = {name: class_from_matrix(golden["domain"], rows) for name, rows in golden["bases"].items()}
    for e in golden["entries"]:
        G = Aggregator(e["k"], tuple(int(c) for c in e["table"]), e["op"])
        rep = audit.closure_dim_survey(G, [bases[p] for p in e["parts"]], constant=1.0)
        assert (rep.stats["ldim"], rep.stats["tdim"]) == (e["ldim"], e["tdim"]), e
        assert rep.stats["max_part_ldim"] == e["max_part_ldim"]
        assert rep.bounds[0]["value"] == e["bound"]
        assert rep.verdict == audit.PASS, e
    ops = {(e["op"], e["k"]) for e in golden["entries"]}
    assert ops == {("AND", 2), ("OR", 2), ("XOR", 2), ("AND", 3), ("OR", 3), ("XOR", 3), ("MAJ", 3)}


@pytest.mark.criterion(6, "OR-blowup T >= 2^floor(t/5); no k x k all-ones block at m=16 on some seed")
def test_c06_or_blowup():
    t0 = time.perf_counter()
    for t in (5, 10, 15):
        for seed in range(3):
            rep = audit.or_blowup_check(t, np.random.default_rng(seed))
            assert rep.stats["tdim_or"] >= 2 ** (t // 5)
    t = 20
    k = 2 * (t // 5) + 1
    certified = []
    for seed in range(20):
        B = make_random_or_blowup(t, np.random.default_rng(seed))
        assert B.m == 16
        ok = audit.no_biclique_check(B.hclass, k)
        if ok:
            certified.append(seed)
            # the certificate implies T(H) <= 2k
            assert threshold_dimension(B.hclass)[0] <= 2 * k
    assert certified
    assert time.perf_counter() - t0 < 300


def _eval_independent(node, bits):
    if isinstance(node, Lit):
        return 1 - bits[node.index] if node.negated else bits[node.index]
    if isinstance(node, Const):
        return node.value
    assert isinstance(node, Maj)
    return maj_eval([_eval_independent(c, bits) for c in node.children])


def _matches(G):
    F = dnf_majority_decompose(G)
    return all(_eval_independent(F.root, bits) == G(bits)
               for bits in itertools.product((0, 1), repeat=G.arity))


@pytest.mark.criterion(7, "DNF-majority decomposition: all aggregators k<=3 and 1000 random at k=4")
def test_c07_dnf_majority():
    t0 = time.perf_counter()
    exhaustive = [Aggregator.from_index(k, i) for k in (1, 2, 3) for i in range(2 ** (2**k))]
    assert len(exhaustive) == 4 + 16 + 256
    rng = np.random.default_rng(7)
    sampled = [Aggregator.from_index(4, int(i)) for i in rng.integers(0, 2**16, 1000)]
    mismatches = [G for G in exhaustive + sampled if not _matches(G)]
    assert not mismatches
    assert time.perf_counter() - t0 < 30


@pytest.mark.criterion(8, "adversary forces exactly Ldim mistakes against SOA on 100 random classes")
def test_c08_soa_minimax():
    for H in random_classes(8, 100, max_domain=5, max_members=12):
        d, _ = littlestone_dimension(H)
        _, forced = worst_case_adversary(H, SOALearner(H), d + 2)
        assert forced == d


@pytest.mark.criterion(9, "exponential mechanism exact delta <= 1e-9 at eps=1 over all neighbors, 4 points")
def test_c09_exact_em_privacy():
    t0 = time.perf_counter()
    classes = [full_cube(4), make_threshold_chain(4)] + random_classes(9, 10, max_domain=4, max_members=16)
    classes = [H if H.n == 4 else HypothesisClass.from_ints(4, H.members) for H in classes]
    worst = max(audit.exact_em_max_delta(1.0, H, dp.ERROR_COUNT, 4, length)
                for H in classes for length in (1, 2, 3))
    assert worst <= 1e-9
    assert time.perf_counter() - t0 < 60


@pytest.mark.criterion(10, "tail <= |H| exp(-eps Delta m / 2); Monte-Carlo within 3 sigma at 1e5 draws")
def test_c10_em_tail():
    rng = np.random.default_rng(10)
    for size, m, Delta, eps in itertools.product((2, 8, 32), (1, 8, 64), (0.05, 0.1, 0.25, 0.5), (0.5, 1.0)):
        H = HypothesisClass.from_ints(5, rng.choice(32, size=size, replace=False).tolist())
        target = int(rng.integers(32))
        pts = rng.integers(0, 5, m)
        labels = ((target >> pts) & 1) ^ (rng.random(m) < 0.2)
        S = LabeledSample(pts, labels)
        rep = audit.exp_mech_utility_check(eps, H, S, dp.ERROR_COUNT, Delta, 100_000, rng)
        s = rep.stats
        assert rep.verdicts["bound_holds"] == audit.PASS
        assert abs(s["empirical_tail"] - s["exact_tail"]) <= 3 * s["sigma"], (size, m, Delta, eps, s)


@pytest.mark.criterion(11, "relabel pattern exceeds optimum + alpha|D| in <= beta + 3 sigma of 1e4 trials")
def test_c11_relabel_utility():
    for t in (4, 8):
        H = make_threshold_chain(t)
        assert vc_dimension(H)[0] == 1
        rep = audit.relabel_utility_check(H, 0.2, 0.2, 10_000, np.random.default_rng(11 + t))
        assert rep.config["size"] == dp.sample_size_bounds("relabel_utility", vc=1, alpha=0.2, beta=0.2).size
        assert rep.verdict == audit.PASS, rep.stats


def _sample(pairs):
    return LabeledSample.from_pairs(pairs)


@pytest.mark.criterion(12, "relabel+learn MC audit at (4, 4e delta) passes; echo control fails")
def test_c12_relabel_learn_audit():
    H = make_threshold_chain(3)
    mech = audit.RelabelLearnMechanism(H)
    base = [(0, 1), (2, 0), (1, 1), (2, 1)]
    rng = np.random.default_rng(12)
    delta = 0.0  # the generic learner is pure
    for i, alt in [(0, (0, 0)), (1, (1, 1)), (2, (0, 0)), (3, (2, 0))]:
        S2 = list(base)
        S2[i] = alt
        pair = audit.NeighborPair(_sample(base), _sample(S2), i)
        rep = audit.mc_dp_audit(mech, pair, trials=100_000, eps_claimed=4.0,
                                delta_claimed=4 * math.e * delta, rng=rng)
        assert rep.verdict != audit.FAIL, rep.records
    control = audit.mc_dp_audit(audit.EchoMechanism(0), audit.NeighborPair(_sample(base), _sample(
        [(0, 0)] + base[1:]), 0), trials=100_000, eps_claimed=4.0, delta_claimed=0.0, rng=rng)
    assert control.verdict == audit.FAIL


AGNOSTIC_CONFIG = {"algorithm": "agnostic", "classes": [{"construction": "chain", "t": 8}],
                   "target": {"member": 3}, "noise": 0.1, "alpha": 0.1, "beta": 0.1, "epsilon": 1.0,
                   "constant": 4.0, "multiplier": 4.0, "size": "auto", "trials": 200, "seed": 13}

CLOSURE_CONFIG = {"algorithm": "closure", "aggregator": "AND",
                  "classes": [{"construction": "chain", "t": 6}, {"construction": "chain", "t": 6}],
                  "target": {"members": [1, 4]}, "noise": 0.0, "alpha": 0.1, "beta": 0.1, "epsilon": 1.0,
                  "constant": 4.0, "multiplier": 4.0, "size": "auto", "trials": 200, "seed": 14}


@pytest.mark.criterion(13, "private agnostic learner: excess <= 4 alpha in >= 1 - 4 beta of 200 trials")
def test_c13_agnostic_end_to_end():
    t0 = time.perf_counter()
    rep = audit.generalization_experiment(AGNOSTIC_CONFIG)
    assert len(rep.records) == 200
    assert rep.stats["sizing"]["size"] >= rep.stats["sizing"]["formula"]["value"]
    assert rep.stats["success_rate"] >= 1 - 4 * 0.1, rep.stats
    assert rep.verdict == audit.PASS
    assert time.perf_counter() - t0 < 600


@pytest.mark.criterion(14, "closure learner: error <= 4 alpha in >= 1 - 4 beta; MC privacy audit passes")
def test_c14_closure_end_to_end():
    t0 = time.perf_counter()
    rep = audit.generalization_experiment(CLOSURE_CONFIG)
    assert len(rep.records) == 200
    # realizable: the best-in-class error is zero, so excess is the true error
    assert all(r["best_in_class"] == 0 for r in rep.records)
    assert rep.stats["success_rate"] >= 1 - 4 * 0.1, rep.stats
    H = make_threshold_chain(3)
    A = dp.generic_private_learner(H, dp.PrivacyBudget(1.0))
    mech = audit.ClosureMechanism(AND(2), [H, H], [A, A])
    base = [(x % 3, int(x % 3 == 2)) for x in range(36)]
    rng = np.random.default_rng(14)
    for i in (0, 27):  # one change in each block
        S2 = list(base)
        S2[i] = (0, 1)
        pair = audit.NeighborPair(_sample(base), _sample(S2), i)
        rep = audit.mc_dp_audit(mech, pair, trials=20_000, eps_claimed=4.0, delta_claimed=0.0, rng=rng)
        assert rep.verdict != audit.FAIL, rep.records
    assert time.perf_counter() - t0 < 900


@pytest.mark.filterwarnings("ignore:.*duplicate rows")  # blowup functions may coincide as rows
@pytest.mark.criterion(15, "identical config and seed give byte-identical comparison artifacts")
def test_c15_reproducibility(tmp_path):
    small = dict(AGNOSTIC_CONFIG, trials=10)
    closure = dict(CLOSURE_CONFIG, trials=5)
    for name, cfg in (("agnostic", small), ("closure", closure)):
        (tmp_path / f"{name}.json").write_text(json.dumps(cfg))
    runs = []
    for attempt in ("a", "b"):
        out = tmp_path / attempt
        out.mkdir()
        codes = [
            run(["experiment", "--config", str(tmp_path / "agnostic.json"), "--out", str(out / "agn")]),
            run(["experiment", "--config", str(tmp_path / "closure.json"), "--out", str(out / "clo")]),
            run(["construct", "or-blowup", "--t", "10", "--seed", "3", "--out", str(out / "ob.txt")]),
            run(["audit", "relabel", "--class", str(out / "ob.txt"), "--trials", "50", "--seed", "4",
                 "--out", str(out / "relabel.json")]),
            run(["audit", "or-blowup", "--t", "10", "--seed", "5", "--out", str(out / "orb.json")]),
            run(["dims", "--class", str(out / "ob.txt"), "--out", str(out / "dims.json")]),
        ]
        assert codes == [0] * len(codes)
        runs.append(out)
    artifacts = ["agn/report.json", "agn/trials.csv", "clo/report.json", "clo/trials.csv", "ob.txt", "ob.json",
                 "relabel.json", "orb.json", "dims.json"]
    for name in artifacts:
        assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes(), name
    rng_reports = [audit.mc_dp_audit(audit.RelabelLearnMechanism(make_threshold_chain(3)),
                                     audit.NeighborPair(_sample([(0, 1), (1, 0)]), _sample([(0, 0), (1, 0)]), 0),
                                     trials=2000, eps_claimed=4.0, rng=np.random.default_rng(15))
                   for _ in range(2)]
    assert rng_reports[0].to_json(with_meta=False) == rng_reports[1].to_json(with_meta=False)
