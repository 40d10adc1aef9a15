"""Exhaustive homomorphism matching: the ground truth for every optimized plan."""

from __future__ import annotations

from collections import Counter
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import ExecutionError
from .expr import EdgeRef, PathValue, VertexRef, holds
from .gir import EDGE_DISTINCT, HOMOMORPHISM, PatternGraph
from .graph import DataGraph
from .kernels import run_matches

MAX_PATTERN_VERTICES = 6
MAX_GRAPH_VERTICES = 100


def element_masks(pattern: PatternGraph, graph: DataGraph) -> tuple[list[str], list[str], np.ndarray, np.ndarray]:
    """Candidate masks per pattern element: type constraint and predicate."""
    arrays = graph.arrays
    valiases = list(pattern.vertices)
    ealiases = list(pattern.edges)
    vmask = np.zeros((len(valiases), len(arrays.vertex_ids)), dtype=np.uint8)
    emask = np.zeros((len(ealiases), len(arrays.edge_ids)), dtype=np.uint8)
    for i, alias in enumerate(valiases):
        pv = pattern.vertices[alias]
        for x, vid in enumerate(arrays.vertex_ids.tolist()):
            v = graph.vertices[vid]
            if pv.types.names is not None and v.type not in pv.types.names:
                continue
            if pv.predicate is not None and not holds(pv.predicate, {alias: VertexRef(vid)}, graph):
                continue
            vmask[i, x] = 1
    for j, alias in enumerate(ealiases):
        pe = pattern.edges[alias]
        for y, eid in enumerate(arrays.edge_ids.tolist()):
            e = graph.edges[eid]
            if pe.types.names is not None and e.type not in pe.types.names:
                continue
            if pe.predicate is not None and not holds(pe.predicate, {alias: EdgeRef(eid)}, graph):
                continue
            emask[j, y] = 1
    return valiases, ealiases, vmask, emask


def count_matches(pattern: PatternGraph, graph: DataGraph, backend: str | None = None) -> int:
    """Number of homomorphisms of ``pattern`` into ``graph`` (no size guard)."""
    if not graph.vertices:
        return 0
    valiases, ealiases, vmask, emask = element_masks(pattern, graph)
    vpos = {a: i for i, a in enumerate(valiases)}
    edges = [(vpos[pattern.edges[a].src], vpos[pattern.edges[a].dst], pattern.edges[a].both) for a in ealiases]
    return int(run_matches(graph.arrays, vmask, emask, edges, True, backend))


def oracle_match(
    pattern: PatternGraph,
    graph: DataGraph,
    semantics: str = HOMOMORPHISM,
    guard: bool = True,
    backend: str | None = None,
) -> list[dict[str, Any]]:
    """All matches of ``pattern`` as records binding every pattern alias.

    Path aliases are bound to :class:`PathValue` and SIMPLE / TRAIL options
    are enforced; EDGE_DISTINCT drops matches binding one data edge twice.
    """
    if guard and (len(pattern.vertices) > MAX_PATTERN_VERTICES or len(graph.vertices) > MAX_GRAPH_VERTICES):
        raise ExecutionError(
            f"oracle size guard exceeded ({len(pattern.vertices)} pattern vertices, {len(graph.vertices)} graph vertices)"
        )
    if not graph.vertices:
        return []
    valiases, ealiases, vmask, emask = element_masks(pattern, graph)
    vpos = {a: i for i, a in enumerate(valiases)}
    edges = [(vpos[pattern.edges[a].src], vpos[pattern.edges[a].dst], pattern.edges[a].both) for a in ealiases]
    rows = run_matches(graph.arrays, vmask, emask, edges, False, backend)
    vids = graph.arrays.vertex_ids.tolist()
    eids = graph.arrays.edge_ids.tolist()
    nv = len(valiases)
    records = []
    for row in rows.tolist():
        rec: dict[str, Any] = {}
        for i, alias in enumerate(valiases):
            rec[alias] = VertexRef(vids[row[i]])
        for j, alias in enumerate(ealiases):
            rec[alias] = EdgeRef(eids[row[nv + j]])
        if not _paths_ok(pattern, rec):
            continue
        if semantics == EDGE_DISTINCT:
            bound = [rec[a].id for a in ealiases]
            if len(set(bound)) != len(bound):
                continue
        records.append(rec)
    return records


def _paths_ok(pattern: PatternGraph, rec: dict[str, Any]) -> bool:
    for path in pattern.paths:
        vs = tuple(rec[a].id for a in path.vertices)
        es = tuple(rec[a].id for a in path.edges)
        if path.opt == "SIMPLE" and len(set(vs)) != len(vs):
            return False
        if path.opt == "TRAIL" and len(set(es)) != len(es):
            return False
        rec[path.alias] = PathValue(vs, es)
    return True


def result_multiset(records: Iterable[Mapping[str, Any]], columns: Iterable[str] | None = None) -> Counter:
    """Order-insensitive view of a result for equality checks."""
    cols = None if columns is None else list(columns)
    out: Counter = Counter()
    for rec in records:
        keys = cols if cols is not None else sorted(k for k in rec if "." not in k)
        out[tuple((k, _freeze(rec.get(k))) for k in keys)] += 1
    return out


def _freeze(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    if isinstance(value, float):
        # float aggregates depend on summation order
        return float(f"{value:.10g}")
    return value
