"""Relational operators over lists of records.

Shared by the physical executor and the direct GIR evaluator so that both
agree on null handling, aggregation and ordering.
"""

from __future__ import annotations

import functools
from collections import defaultdict
from typing import Any, Iterable, Mapping, Sequence

from .errors import EvaluationError
from .expr import EdgeRef, Expr, PathValue, TagRef, VertexRef, holds
from .graph import DataGraph

Record = dict


def sort_key(value: Any) -> tuple:
    """Total order over every value a record can hold; nulls sort last."""
    if value is None:
        return (9,)
    if isinstance(value, bool):
        return (1, value)
    if isinstance(value, (int, float)):
        return (2, value)
    if isinstance(value, str):
        return (3, value)
    if isinstance(value, (tuple, list)):
        return (4, tuple(sort_key(v) for v in value))
    if isinstance(value, VertexRef):
        return (5, value.id)
    if isinstance(value, EdgeRef):
        return (6, value.id)
    if isinstance(value, PathValue):
        return (7, value.vertices, value.edges)
    return (8, repr(value))


def record_key(record: Mapping[str, Any]) -> tuple:
    return tuple((k, sort_key(v)) for k, v in sorted(record.items()))


def select(records: Iterable[Record], condition: Expr, graph: DataGraph) -> list[Record]:
    return [r for r in records if holds(condition, r, graph)]


def project(records: Iterable[Record], columns: Sequence[tuple[Expr, str]], graph: DataGraph) -> list[Record]:
    out = []
    for r in records:
        new: Record = {}
        for expr, alias in columns:
            new[alias] = expr.evaluate(r, graph)
            if isinstance(expr, TagRef):
                # keep prefetched properties of a passed-through element
                prefix = expr.tag + "."
                for k, v in r.items():
                    if k.startswith(prefix):
                        new[alias + "." + k[len(prefix):]] = v
        out.append(new)
    return out


def _aggregate(func: str, values: list[Any], rows: list[Record]) -> Any:
    present = [v for v in values if v is not None]
    if func == "COUNT":
        return len(present)
    if func == "COUNT_DISTINCT":
        return len(set(present))
    if func == "SUM":
        if not present:
            return 0
        return sum(present)
    if func == "AVG":
        if not present:
            raise EvaluationError("AVG over an empty group")
        return sum(present) / len(present)
    if func == "MIN":
        return min(present, key=sort_key) if present else None
    if func == "MAX":
        return max(present, key=sort_key) if present else None
    if func == "FIRST":
        # first under the record order, so the value does not depend on the plan
        if not rows:
            return None
        pairs = sorted(zip(rows, values), key=lambda p: record_key(p[0]))
        return pairs[0][1]
    raise EvaluationError(f"unknown aggregate {func}")


def group(records: Iterable[Record], keys: Sequence[tuple[Expr, str]], aggs: Sequence, graph: DataGraph) -> list[Record]:
    """GROUP with Cypher conventions: no keys and no input still yields one row."""
    buckets: dict[tuple, list[Record]] = defaultdict(list)
    key_values: dict[tuple, tuple] = {}
    order: list[tuple] = []
    for r in records:
        kv = tuple(expr.evaluate(r, graph) for expr, _ in keys)
        hk = tuple(sort_key(v) for v in kv)
        if hk not in buckets:
            order.append(hk)
            key_values[hk] = kv
        buckets[hk].append(r)
    if not keys and not order:
        order.append(())
        key_values[()] = ()
        buckets[()] = []
    out = []
    for hk in order:
        rows = buckets[hk]
        rec: Record = {alias: v for (_, alias), v in zip(keys, key_values[hk])}
        for agg in aggs:
            values = [agg.expr.evaluate(r, graph) for r in rows]
            rec[agg.alias] = _aggregate(agg.func, values, rows)
        out.append(rec)
    return out


def order(records: Iterable[Record], keys: Sequence[tuple[Expr, bool]], graph: DataGraph) -> list[Record]:
    """Sort by the keys; ties are broken by comparing whole records."""
    decorated = []
    for r in records:
        decorated.append(([sort_key(expr.evaluate(r, graph)) for expr, _ in keys], record_key(r), r))

    def cmp(a, b) -> int:
        for (ka, kb), (_, asc) in zip(zip(a[0], b[0]), keys):
            if ka != kb:
                less = ka < kb
                return (-1 if less else 1) * (1 if asc else -1)
        if a[1] != b[1]:
            return -1 if a[1] < b[1] else 1
        return 0

    decorated.sort(key=functools.cmp_to_key(cmp))
    return [d[2] for d in decorated]


def limit(records: Sequence[Record], count: int) -> list[Record]:
    return list(records[:count])


def unfold(records: Iterable[Record], tag: str, alias: str) -> list[Record]:
    out = []
    for r in records:
        value = r.get(tag)
        if value is None:
            continue
        if isinstance(value, PathValue):
            items = [VertexRef(v) for v in value.vertices]
        elif isinstance(value, (list, tuple)):
            items = list(value)
        else:
            raise EvaluationError(f"cannot unfold {value!r}")
        for item in items:
            new = dict(r)
            new[alias] = item
            out.append(new)
    return out


def join(
    left: Sequence[Record],
    right: Sequence[Record],
    keys: Sequence[str],
    join_type: str,
    left_columns: Iterable[str] = (),
    right_columns: Iterable[str] = (),
) -> list[Record]:
    """Hash join on equal key values; null keys never match."""

    def kv(r: Record) -> tuple | None:
        values = tuple(r.get(k) for k in keys)
        if any(v is None for v in values):
            return None
        return values

    table: dict[tuple, list[int]] = defaultdict(list)
    for i, r in enumerate(right):
        k = kv(r)
        if k is not None:
            table[k].append(i)
    right_pad = {c: None for c in right_columns if c not in keys}
    left_pad = {c: None for c in left_columns if c not in keys}
    out: list[Record] = []
    matched_right: set[int] = set()
    for lr in left:
        k = kv(lr)
        hits = table.get(k, []) if k is not None else []
        if join_type == "SEMI":
            if hits:
                out.append(dict(lr))
            continue
        if join_type == "ANTI":
            if not hits:
                out.append(dict(lr))
            continue
        for i in hits:
            matched_right.add(i)
            merged = dict(right[i])
            merged.update(lr)
            out.append(merged)
        if not hits and join_type in ("LEFT_OUTER", "FULL_OUTER"):
            merged = dict(right_pad)
            merged.update(lr)
            out.append(merged)
    if join_type in ("RIGHT_OUTER", "FULL_OUTER"):
        for i, rr in enumerate(right):
            if i not in matched_right:
                merged = dict(left_pad)
                merged.update(rr)
                out.append(merged)
    return out


def union(left: Sequence[Record], right: Sequence[Record]) -> list[Record]:
    return [dict(r) for r in left] + [dict(r) for r in right]


def edge_distinct(records: Iterable[Record], edges: Sequence[str]) -> list[Record]:
    """Drop records that bind one data edge more than once.

    ``edges`` may name edge aliases or path aliases; a path contributes
    every edge it traverses.
    """
    out = []
    for r in records:
        ids = []
        for a in edges:
            v = r.get(a)
            if isinstance(v, EdgeRef):
                ids.append(v.id)
            elif isinstance(v, PathValue):
                ids.extend(v.edges)
        if len(ids) == len(set(ids)):
            out.append(r)
    return out


def restrict(records: Iterable[Record], columns: Sequence[str]) -> list[Record]:
    """Keep only the named output columns."""
    return [{c: r.get(c) for c in columns} for r in records]
