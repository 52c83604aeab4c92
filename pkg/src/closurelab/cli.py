"""``closurelab`` command line: dims, compose, construct, online, dp-learn, audit, experiment."""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import audit, dp
from . import hclass as hc
from .classio import (atomic_write, config_hash, format_class, format_rows, parse_aggregator_file,
                      parse_class_file, aggregator_by_name)
from .dims import dim_report
from .errors import ClosureLabError, InputError
from .online import SOALearner, run_realizable_game, union_learner, worst_case_adversary, wm_mistake_bound

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write_artifact(path: Path, payload: dict, meta: Optional[dict] = None) -> None:
    """Comparison artifact at ``path``; timestamps go to a sibling ``.meta.json``."""
    atomic_write(path, _dump(payload))
    m = {"written_at": _dt.datetime.now(_dt.timezone.utc).isoformat()}
    m.update(meta or {})
    atomic_write(path.with_suffix(".meta.json"), _dump(m))


def _provenance(args: argparse.Namespace, **extra) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "jobs")}
    cfg = json.loads(json.dumps(cfg, default=str))
    out = {"command": args.command, "config": cfg, "config_hash": config_hash(cfg)}
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    out.update(extra)
    return out


def _load_classes(paths: Sequence[str]) -> list[hc.HypothesisClass]:
    return [parse_class_file(p) for p in paths]


# --------------------------------------------------------------------------
# dims


def _cache_path(H: hc.HypothesisClass) -> Optional[Path]:
    root = os.environ.get("CLOSURELAB_CACHE")
    return Path(root) / f"dims-{H.key}.json" if root else None


def cmd_dims(args) -> int:
    H = parse_class_file(args.cls)
    cache = _cache_path(H)
    if cache is not None and cache.exists():
        data = json.loads(cache.read_text())
        meta = {"cache": "hit"}
    else:
        t0 = time.perf_counter()
        rep = dim_report(H)
        data = rep.to_dict(with_timing=False)
        meta = {"cache": "miss" if cache else "off", "timing": rep.timing, "runtime_s": time.perf_counter() - t0}
        if cache is not None:
            atomic_write(cache, _dump(data))
    print(f"vc={data['vc']} ldim={data['ldim']} tdim={data['tdim']} members={len(H)} domain={H.n}")
    if args.out:
        payload = dict(data, class_hash=H.key)
        _write_artifact(Path(args.out), payload, meta)
    return EXIT_OK


# --------------------------------------------------------------------------
# compose / construct


def cmd_compose(args) -> int:
    classes = _load_classes(args.cls)
    G = parse_aggregator_file(args.agg) if args.agg else aggregator_by_name(args.op, len(classes))
    C = hc.compose(G, classes, cap=args.cap)
    print(f"composed class: {len(C)} members over {C.n} points")
    if args.out:
        atomic_write(Path(args.out), format_class(C))
    else:
        sys.stdout.write(format_class(C))
    return EXIT_OK


def cmd_construct(args) -> int:
    kind = args.kind
    extra: dict = {}
    if kind == "chain":
        text = format_class(hc.make_threshold_chain(args.t))
    elif kind == "cube":
        text = format_class(hc.full_cube(args.n))
    elif kind == "union-tight":
        H1, H2 = hc.make_union_tight(args.d1, args.d2, args.n)
        text = format_class(hc.union(H1, H2))
        extra["parts"] = [format_class(H1), format_class(H2)]
    elif kind == "threshold-union":
        H1, H2 = hc.make_threshold_union_tight(args.t, args.t2)
        text = format_class(hc.union(H1, H2))
        extra["parts"] = [format_class(H1), format_class(H2)]
    elif kind == "multiunion":
        H = parse_class_file(args.base) if args.base else hc.make_threshold_chain(args.t)
        text = format_class(hc.make_multiunion_lower(H, args.k))
    elif kind == "or-blowup":
        if args.seed is None:
            raise InputError("--seed is required for randomized constructions")
        B = hc.make_random_or_blowup(args.t, np.random.default_rng(args.seed))
        text = format_rows(B.m, B.functions)
        extra.update(m=B.m, f=[hc.bits_to_str(h, B.m) for h in B.f], g=[hc.bits_to_str(h, B.m) for h in B.g])
    else:  # pragma: no cover - argparse restricts choices
        raise InputError(f"unknown construction {kind}")
    out = Path(args.out)
    atomic_write(out, text)
    _write_artifact(out.with_suffix(".json"), _provenance(args, **extra))
    print(f"wrote {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# online


def cmd_online(args) -> int:
    classes = _load_classes(args.cls)
    H = classes[0]
    for other in classes[1:]:
        H = hc.union(H, other)
    learner = SOALearner(H) if len(classes) == 1 else union_learner(classes)
    if args.sequence:
        seq = [tuple(p) for p in json.loads(Path(args.sequence).read_text())]
        log = run_realizable_game(H, learner, seq)
        payload = log.to_dict()
    else:
        seq, forced = worst_case_adversary(H, learner, args.horizon, node_budget=args.node_budget)
        log = run_realizable_game(H, learner.clone(), seq)
        payload = dict(log.to_dict(), forced=forced, horizon=args.horizon)
    if len(classes) > 1:
        from .dims import littlestone_dimension
        d = max(littlestone_dimension(C)[0] for C in classes)
        payload["bound_claimed"] = wm_mistake_bound(len(classes), d, 0.5)
    print(f"mistakes={payload['mistake_count']} rounds={len(payload['rounds'])}")
    if args.out:
        _write_artifact(Path(args.out), payload)
    return EXIT_OK


# --------------------------------------------------------------------------
# dp-learn


def _parse_sample(path: str) -> hc.LabeledSample:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2 or not all(p.isdigit() for p in parts):
            raise InputError(f"{path}:{lineno}: expected '<point> <label>'")
        pairs.append((int(parts[0]), int(parts[1])))
    return hc.LabeledSample.from_pairs(pairs)


def cmd_dp_learn(args) -> int:
    classes = _load_classes(args.cls)
    S = _parse_sample(args.sample)
    rng = np.random.default_rng(args.seed)
    budget = dp.PrivacyBudget(args.eps, args.delta)
    learners = [dp.generic_private_learner(H, budget) for H in classes]
    for H in classes:
        S.check_domain(H.n)
    if args.algorithm == "generic":
        h = learners[0].learn(S, rng)
    elif args.algorithm == "agnostic":
        h = dp.private_agnostic(S, classes[0], learners[0], rng)
    else:
        G = parse_aggregator_file(args.agg) if args.agg else aggregator_by_name(args.op, len(classes))
        h = dp.closure_learn(S, G, classes, learners, rng)
    err = dp.ERROR_COUNT(S, h)
    print(f"hypothesis={h.to_str()} empirical_errors={err}/{len(S)}")
    if args.out:
        _write_artifact(Path(args.out), _provenance(args, hypothesis=h.to_str(), empirical_errors=err))
    return EXIT_OK


# --------------------------------------------------------------------------
# audit


def cmd_audit(args) -> int:
    kind = args.kind
    if kind == "exp-mech":
        H = parse_class_file(args.cls)
        q = dp.ERROR_COUNT if args.score == "error" else dp.scaled_score(dp.ERROR_COUNT, 2.0)
        worst = max(audit.exact_em_max_delta(args.eps, H, q, H.n, m) for m in range(args.length + 1))
        rep = audit.ExperimentReport("exp_mech_exact", {"eps": args.eps, "length": args.length,
                                                        "score": args.score, "class": H.key})
        rep.stats = {"max_delta": worst}
        rep.add_bound("delta_tolerance", 1e-9, "numerical tolerance")
        rep.verdicts["privacy"] = audit.PASS if worst <= 1e-9 else audit.FAIL
    elif kind == "shelah":
        rep = audit.shelah_check(parse_class_file(args.cls))
    elif kind == "closure-dims":
        classes = _load_classes(args.cls)
        G = parse_aggregator_file(args.agg) if args.agg else aggregator_by_name(args.op, len(classes))
        rep = audit.closure_dim_survey(G, classes, args.constant)
    elif kind == "or-blowup":
        if args.seed is None:
            raise InputError("--seed is required for randomized audits")
        rep = audit.or_blowup_check(args.t, np.random.default_rng(args.seed))
    elif kind == "relabel":
        if args.seed is None:
            raise InputError("--seed is required for randomized audits")
        H = parse_class_file(args.cls)
        rep = audit.relabel_utility_check(H, args.alpha, args.beta, args.trials, np.random.default_rng(args.seed))
    else:  # pragma: no cover
        raise InputError(f"unknown audit {kind}")
    rep.seeds = {"seed": args.seed} if args.seed is not None else {}
    print(f"{rep.name}: {rep.verdict} {json.dumps(audit._plain(rep.stats), sort_keys=True)}")
    if args.out:
        _write_artifact(Path(args.out), rep.to_dict(with_meta=False), rep.meta)
    return EXIT_FAIL if rep.failed else EXIT_OK


# --------------------------------------------------------------------------
# experiment


def cmd_experiment(args) -> int:
    config = json.loads(Path(args.config).read_text())
    if args.seed is not None:
        config["seed"] = args.seed
    if "seed" not in config:
        raise InputError("--seed is required (or set 'seed' in the config)")
    rep = audit.generalization_experiment(config, jobs=args.jobs)
    out = Path(args.out)
    _write_artifact(out / "report.json", rep.to_dict(with_meta=False), rep.meta)
    atomic_write(out / "trials.csv", rep.to_csv())
    s = rep.stats
    print(f"{'trials':>8} {'success':>8} {'median excess':>14} {'verdict':>8}")
    print(f"{len(rep.records):>8} {s['success_rate']:>8.3f} {s['median_excess']:>14.4f} {rep.verdict:>8}")
    return EXIT_FAIL if rep.failed else EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="closurelab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("dims", help="exact VC, Littlestone and threshold dimensions")
    s.add_argument("--class", dest="cls", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_dims)

    s = sub.add_parser("compose", help="compose classes through an aggregator")
    s.add_argument("--class", dest="cls", action="append", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--agg", help="aggregator file")
    g.add_argument("--op", help="AND, OR, XOR, MAJ")
    s.add_argument("--cap", type=int, default=hc.DEFAULT_COMPOSE_CAP)
    s.add_argument("--out")
    s.set_defaults(func=cmd_compose)

    s = sub.add_parser("construct", help="write a named construction as a class file")
    s.add_argument("kind", choices=["chain", "cube", "union-tight", "threshold-union", "multiunion", "or-blowup"])
    s.add_argument("--t", type=int, default=4)
    s.add_argument("--t2", type=int, default=1)
    s.add_argument("--n", type=int, default=3)
    s.add_argument("--d1", type=int, default=1)
    s.add_argument("--d2", type=int, default=1)
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--base", help="base class file for multiunion")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_construct)

    s = sub.add_parser("online", help="adversary search or replay against SOA / union learner")
    s.add_argument("--class", dest="cls", action="append", required=True)
    s.add_argument("--horizon", type=int, default=4)
    s.add_argument("--sequence", help="JSON file of [point, label] pairs to replay")
    s.add_argument("--node-budget", type=int, default=10**6)
    s.add_argument("--out")
    s.set_defaults(func=cmd_online)

    s = sub.add_parser("dp-learn", help="run a private learner on a sample file")
    s.add_argument("--class", dest="cls", action="append", required=True)
    s.add_argument("--sample", required=True, help="lines of '<point> <label>'")
    s.add_argument("--algorithm", choices=["generic", "agnostic", "closure"], default="generic")
    s.add_argument("--agg")
    s.add_argument("--op", default="AND")
    s.add_argument("--eps", type=float, default=1.0)
    s.add_argument("--delta", type=float, default=0.0)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_dp_learn)

    s = sub.add_parser("audit", help="privacy, utility and dimension audits")
    s.add_argument("kind", choices=["exp-mech", "shelah", "closure-dims", "or-blowup", "relabel"])
    s.add_argument("--class", dest="cls", action="append")
    s.add_argument("--agg")
    s.add_argument("--op", default="AND")
    s.add_argument("--eps", type=float, default=1.0)
    s.add_argument("--length", type=int, default=2)
    s.add_argument("--score", choices=["error", "double-error"], default="error")
    s.add_argument("--constant", type=float, default=1.0)
    s.add_argument("--t", type=int, default=10)
    s.add_argument("--alpha", type=float, default=0.2)
    s.add_argument("--beta", type=float, default=0.2)
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_audit)

    s = sub.add_parser("experiment", help="end-to-end generalization experiment from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_experiment)
    return p


def _single(args) -> None:
    # subcommands taking one class accept --class once
    if args.command in ("dims",) or (args.command == "audit" and args.kind in ("exp-mech", "shelah", "relabel")):
        if isinstance(args.cls, list):
            if len(args.cls) != 1:
                raise InputError("this command takes exactly one --class")
            args.cls = args.cls[0]
        if args.cls is None:
            raise InputError("--class is required")


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _single(args)
        return args.func(args)
    except (ClosureLabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
