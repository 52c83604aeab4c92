"""Text formats for classes and aggregators, atomic writes, and named constructions."""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
import warnings
from pathlib import Path
from typing import Union

import numpy as np

from . import hclass as hc
from .errors import InputError

PathLike = Union[str, Path]


def parse_class_text(text: str, source: str = "<string>") -> hc.HypothesisClass:
    """Parse ``<domain_size> <member_count>`` followed by one 0/1 row per member."""
    lines = text.splitlines()
    if not lines:
        raise InputError(f"{source}:1: missing header")
    head = lines[0].split()
    if len(head) != 2 or not all(tok.isdigit() for tok in head):
        raise InputError(f"{source}:1: header must be '<domain_size> <member_count>'")
    n, count = int(head[0]), int(head[1])
    if n < 1:
        raise InputError(f"{source}:1: domain size must be at least 1")
    rows = [(i + 2, ln.strip()) for i, ln in enumerate(lines[1:]) if ln.strip()]
    if len(rows) != count:
        raise InputError(f"{source}:1: header declares {count} members but {len(rows)} rows follow")
    members = []
    for lineno, row in rows:
        if len(row) != n:
            raise InputError(f"{source}:{lineno}: row has length {len(row)}, expected {n}")
        bad = set(row) - {"0", "1"}
        if bad:
            raise InputError(f"{source}:{lineno}: invalid character {sorted(bad)[0]!r}")
        members.append(hc.str_to_bits(row))
    H = hc.HypothesisClass.from_ints(n, members)
    if len(H) < len(members):
        warnings.warn(f"{source}: {len(members) - len(H)} duplicate rows removed", stacklevel=2)
    return H


def parse_class_file(path: PathLike) -> hc.HypothesisClass:
    return parse_class_text(Path(path).read_text(encoding="utf-8"), str(path))


def format_class(H: hc.HypothesisClass) -> str:
    return f"{H.n} {len(H)}\n" + "".join(r + "\n" for r in H.rows())


def format_rows(n: int, hyps) -> str:
    """Class-file text for a raw member list, duplicates kept."""
    hyps = list(hyps)
    return f"{n} {len(hyps)}\n" + "".join(hc.bits_to_str(h, n) + "\n" for h in hyps)


def parse_aggregator_text(text: str, source: str = "<string>") -> hc.Aggregator:
    lines = [ln.strip() for ln in text.splitlines()]
    if len(lines) < 2 or not lines[0].isdigit():
        raise InputError(f"{source}:1: expected arity line then truth-table line")
    k, table = int(lines[0]), lines[1]
    if len(table) != 1 << k:
        raise InputError(f"{source}:2: truth table has length {len(table)}, expected {1 << k}")
    if set(table) - {"0", "1"}:
        raise InputError(f"{source}:2: truth table must be over 0/1")
    return hc.Aggregator(k, tuple(int(c) for c in table))


def parse_aggregator_file(path: PathLike) -> hc.Aggregator:
    return parse_aggregator_text(Path(path).read_text(encoding="utf-8"), str(path))


def format_aggregator(G: hc.Aggregator) -> str:
    return f"{G.arity}\n{G.table_str()}\n"


def atomic_write(path: PathLike, data: str) -> None:
    """Write via a temp file in the same directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


# --------------------------------------------------------------------------
# Named constructions


def aggregator_by_name(name: str, k: int = 2) -> hc.Aggregator:
    name = name.upper()
    if name == "AND":
        return hc.AND(k)
    if name == "OR":
        return hc.OR(k)
    if name == "XOR":
        return hc.XOR(k)
    if name in ("MAJ", "MAJORITY"):
        return hc.MAJ(k)
    if name in ("ID", "IDENTITY"):
        return hc.IDENTITY()
    if name.startswith("DICT"):
        return hc.DICTATOR(k, 0)
    raise InputError(f"unknown aggregator {name!r}")


def resolve_aggregator(spec) -> hc.Aggregator:
    if isinstance(spec, hc.Aggregator):
        return spec
    if isinstance(spec, str):
        return aggregator_by_name(spec)
    if "file" in spec:
        return parse_aggregator_file(spec["file"])
    if "table" in spec:
        return parse_aggregator_text(f"{spec['arity']}\n{spec['table']}\n")
    return aggregator_by_name(spec["name"], int(spec.get("k", 2)))


def resolve_class(spec) -> hc.HypothesisClass:
    """Build a class from ``{"file": path}``, ``{"rows": [...]}`` or ``{"construction": ...}``."""
    if isinstance(spec, hc.HypothesisClass):
        return spec
    if "file" in spec:
        return parse_class_file(spec["file"])
    if "rows" in spec:
        rows = spec["rows"]
        return hc.class_from_matrix(len(rows[0]) if rows else int(spec["n"]), rows)
    kind = spec.get("construction")
    if kind == "chain":
        return hc.make_threshold_chain(int(spec["t"]))
    if kind == "cube":
        return hc.full_cube(int(spec["n"]))
    if kind == "union-tight":
        pair = hc.make_union_tight(int(spec["d1"]), int(spec["d2"]), int(spec["n"]))
        return pair[int(spec.get("part", 0))] if "part" in spec else hc.union(*pair)
    if kind == "or-blowup":
        return hc.make_random_or_blowup(int(spec["t"]), np.random.default_rng(int(spec["seed"]))).hclass
    if kind == "random":
        rng = np.random.default_rng(int(spec["seed"]))
        return hc.random_class(rng, int(spec.get("max_domain", 6)), int(spec.get("max_members", 16)))
    raise InputError(f"cannot resolve class spec {spec!r}")
