"""Reference in-memory engine for physical plans.

Every operator is fully materialized so that per-operator output counts are
exact. :func:`evaluate_gir` is the independent reference: it matches each
pattern with the brute-force oracle and applies relational operators
directly to the logical plan.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from . import relational as rel
from .errors import EvaluationError, ExecutionError
from .expr import EdgeRef, PathValue, VertexRef, holds
from .gir import (
    EDGE_DISTINCT,
    GirPlan,
    Group,
    Join,
    Limit,
    MatchPattern,
    Order,
    Project,
    Select,
    Union,
    Unfold,
    available_aliases,
    output_columns,
    to_pattern_graph,
)
from .graph import DataGraph
from .oracle import oracle_match
from .physical import PhysicalPlan, PhysOp


@dataclass
class ExecStats:
    rows: dict[int, int] = field(default_factory=dict)
    kinds: dict[int, str] = field(default_factory=dict)
    sink: int = -1
    fetched: int = 0

    @property
    def total(self) -> int:
        """Intermediate results: every operator's output except the sink's."""
        return sum(n for i, n in self.rows.items() if i != self.sink)

    def to_json(self) -> dict:
        return {
            "operators": [
                {"id": i, "kind": self.kinds[i], "rows": self.rows[i]} for i in sorted(self.rows)
            ],
            "total_intermediate": self.total,
            "result_rows": self.rows.get(self.sink, 0),
            "fetched_properties": self.fetched,
        }


def _vertex_ok(graph: DataGraph, vid: int, alias: str, types, predicate, rec: dict) -> bool:
    if types is not None and graph.vertices[vid].type not in types:
        return False
    if predicate is not None and not holds(predicate, {alias: VertexRef(vid)}, graph):
        return False
    return True


def _edge_ok(graph: DataGraph, eid: int, alias: str | None, types, predicate) -> bool:
    if types is not None and graph.edges[eid].type not in types:
        return False
    if predicate is not None and not holds(predicate, {alias: EdgeRef(eid)}, graph):
        return False
    return True


def _incident(graph: DataGraph, vid: int, direction: str) -> list[tuple[int, int]]:
    """(edge id, neighbour id) pairs; BOTH lists a self-loop once."""
    out = []
    if direction in ("OUT", "BOTH"):
        out.extend((eid, graph.edges[eid].dst) for eid in graph.out_adj[vid])
    if direction in ("IN", "BOTH"):
        for eid in graph.in_adj[vid]:
            e = graph.edges[eid]
            if direction == "BOTH" and e.src == e.dst:
                continue
            out.append((eid, e.src))
    return out


class _Run:
    def __init__(self, plan: PhysicalPlan, graph: DataGraph):
        self.plan = plan
        self.graph = graph
        self.stats = ExecStats(sink=plan.sink)
        self.results: dict[int, list[dict]] = {}

    def fetch(self, rec: dict, alias: str, target: Any, props) -> None:
        if not props:
            return
        if isinstance(target, VertexRef):
            source = self.graph.vertices[target.id].props
        elif isinstance(target, EdgeRef):
            source = self.graph.edges[target.id].props
        else:
            return
        for p in props:
            if p in source:
                rec[f"{alias}.{p}"] = source[p]
                self.stats.fetched += 1

    def run(self, nid: int) -> list[dict]:
        if nid in self.results:
            return self.results[nid]
        op = self.plan.ops[nid]
        inputs = [self.run(i) for i in op.inputs]
        handler = getattr(self, "op_" + op.kind, None)
        if handler is None:
            raise ExecutionError(f"unknown physical operator {op.kind}")
        out = handler(op.params, *inputs)
        self.results[nid] = out
        self.stats.rows[nid] = len(out)
        self.stats.kinds[nid] = op.kind
        return out

    # -- pattern operators ----------------------------------------------
    def op_Scan(self, p):
        g = self.graph
        alias = p["alias"]
        out = []
        ids = sorted(g.vertices) if p["types"] is None else sorted(
            vid for t in p["types"] for vid in g.vertices_by_type.get(t, [])
        )
        for vid in ids:
            if _vertex_ok(g, vid, alias, p["types"], p["predicate"], {}):
                rec = {alias: VertexRef(vid)}
                self.fetch(rec, alias, rec[alias], p["fetch"])
                out.append(rec)
        return out

    def op_IndexScan(self, p):
        g = self.graph
        alias = p["alias"]
        index = _pk_index(g, tuple(p["types"]), p["key"])
        out = []
        for vid in index.get(p["value"], []):
            if _vertex_ok(g, vid, alias, p["types"], p["residual"], {}):
                rec = {alias: VertexRef(vid)}
                self.fetch(rec, alias, rec[alias], p["fetch"])
                out.append(rec)
        return out

    def op_Filter(self, p, records):
        g = self.graph
        alias = p["alias"]
        out = []
        for r in records:
            v = r.get(alias)
            if isinstance(v, VertexRef) and _vertex_ok(g, v.id, alias, p["types"], p["predicate"], r):
                out.append(r)
        return out

    def op_Expand(self, p, records):
        g = self.graph
        out = []
        for r in records:
            src = r[p["src"]]
            for eid, nbr in _incident(g, src.id, p["direction"]):
                if not _edge_ok(g, eid, p["edge"], p["edge_types"], p["edge_predicate"]):
                    continue
                if p["fused"]:
                    if not _vertex_ok(g, nbr, p["alias"], p.get("types"), None, r):
                        continue
                    rec = dict(r)
                    rec[p["alias"]] = VertexRef(nbr)
                    self.fetch(rec, p["alias"], rec[p["alias"]], p.get("fetch", []))
                else:
                    rec = dict(r)
                    rec[p["edge"]] = EdgeRef(eid)
                    self.fetch(rec, p["edge"], rec[p["edge"]], p["edge_fetch"])
                out.append(rec)
        return out

    def op_GetV(self, p, records):
        g = self.graph
        alias = p["alias"]
        out = []
        for r in records:
            e = g.edges[r[p["edge"]].id]
            src = r[p["src"]].id
            if p["direction"] == "OUT":
                target = e.dst
            elif p["direction"] == "IN":
                target = e.src
            else:
                target = e.dst if e.src == src else e.src
            if _vertex_ok(g, target, alias, p["types"], p["predicate"], r):
                rec = dict(r)
                rec[alias] = VertexRef(target)
                self.fetch(rec, alias, rec[alias], p["fetch"])
                out.append(rec)
        return out

    def op_ExpandInto(self, p, records):
        g = self.graph
        out = []
        for r in records:
            src, dst = r[p["src"]].id, r[p["dst"]].id
            for eid, nbr in _incident(g, src, p["direction"]):
                if nbr != dst or not _edge_ok(g, eid, p["edge"], p["edge_types"], p["edge_predicate"]):
                    continue
                rec = dict(r)
                if p["edge"] is not None:
                    rec[p["edge"]] = EdgeRef(eid)
                    self.fetch(rec, p["edge"], rec[p["edge"]], p["edge_fetch"])
                out.append(rec)
        return out

    def op_ExpandIntersect(self, p, records):
        g = self.graph
        alias = p["alias"]
        out = []
        for r in records:
            candidates: dict[int, list[list[int]]] | None = None
            for k, spec in enumerate(p["edges"]):
                by_nbr: dict[int, list[int]] = defaultdict(list)
                for eid, nbr in _incident(g, r[spec["src"]].id, spec["direction"]):
                    if _edge_ok(g, eid, spec["edge"], spec["edge_types"], spec["edge_predicate"]):
                        by_nbr[nbr].append(eid)
                if candidates is None:
                    candidates = {n: [es] for n, es in by_nbr.items()}
                else:
                    candidates = {n: lists + [by_nbr[n]] for n, lists in candidates.items() if n in by_nbr}
                if not candidates:
                    break
            for nbr in sorted(candidates or {}):
                if not _vertex_ok(g, nbr, alias, p["types"], p["predicate"], r):
                    continue
                combos: list[list[int]] = [[]]
                for es in candidates[nbr]:
                    combos = [c + [e] for c in combos for e in es]
                for combo in combos:
                    rec = dict(r)
                    rec[alias] = VertexRef(nbr)
                    self.fetch(rec, alias, rec[alias], p["fetch"])
                    for spec, eid in zip(p["edges"], combo):
                        rec[spec["edge"]] = EdgeRef(eid)
                        self.fetch(rec, spec["edge"], rec[spec["edge"]], spec["edge_fetch"])
                    out.append(rec)
        return out

    def op_ExpandDegree(self, p, records):
        g = self.graph
        seen: set[int] = set()
        out = []
        for r in records:
            src = r[p["src"]]
            if src is None or src.id in seen:
                continue
            seen.add(src.id)
            nbrs = set()
            for eid, nbr in _incident(g, src.id, p["direction"]):
                if _edge_ok(g, eid, None, p["edge_types"], None) and _vertex_ok(g, nbr, "", p["types"], None, r):
                    nbrs.add(nbr)
            if nbrs:
                out.append({p["key_alias"]: src, p["count_alias"]: len(nbrs)})
        return out

    def op_EdgeDistinctFilter(self, p, records):
        return rel.edge_distinct(records, p["edges"])

    def op_PathAssemble(self, p, records):
        out = []
        internal = set()
        for path in p["paths"]:
            internal |= {a for a in path["vertices"][1:-1]} | set(path["edges"])
        for r in records:
            rec = dict(r)
            ok = True
            for path in p["paths"]:
                vs = tuple(r[a].id for a in path["vertices"])
                es = tuple(r[a].id for a in path["edges"])
                if path["opt"] == "SIMPLE" and len(set(vs)) != len(vs):
                    ok = False
                if path["opt"] == "TRAIL" and len(set(es)) != len(es):
                    ok = False
                rec[path["alias"]] = PathValue(vs, es)
            if not ok:
                continue
            for a in internal:
                if a.startswith("_"):
                    rec.pop(a, None)
            out.append(rec)
        return out

    def op_Fetch(self, p, records):
        out = []
        for r in records:
            rec = dict(r)
            missing = [x for x in p["props"] if f"{p['alias']}.{x}" not in rec]
            self.fetch(rec, p["alias"], rec.get(p["alias"]), missing)
            out.append(rec)
        return out

    # -- relational operators -------------------------------------------
    def op_Select(self, p, records):
        return rel.select(records, p["condition"], self.graph)

    def op_Project(self, p, records):
        return rel.project(records, p["columns"], self.graph)

    def op_Group(self, p, records):
        return rel.group(records, p["keys"], p["aggs"], self.graph)

    def op_Order(self, p, records):
        return rel.order(records, p["keys"], self.graph)

    def op_Limit(self, p, records):
        return rel.limit(records, p["count"])

    def op_Unfold(self, p, records):
        return rel.unfold(records, p["tag"], p["alias"])

    def op_HashJoin(self, p, left, right):
        return rel.join(left, right, p["keys"], p["join_type"], p["left_columns"], p["right_columns"])

    def op_Union(self, p, left, right):
        return rel.union(left, right)


_PK_CACHE: dict[tuple[int, tuple[str, ...], str], dict[Any, list[int]]] = {}


def _pk_index(graph: DataGraph, types: tuple[str, ...], key: str) -> dict[Any, list[int]]:
    ck = (id(graph), types, key)
    index = _PK_CACHE.get(ck)
    if index is None:
        index = defaultdict(list)
        for t in types:
            for vid in graph.vertices_by_type.get(t, []):
                value = graph.vertices[vid].props.get(key)
                if value is not None:
                    index[value].append(vid)
        index = {k: sorted(v) for k, v in index.items()}
        _PK_CACHE.clear()
        _PK_CACHE[ck] = index
    return index


def execute(plan: PhysicalPlan, graph: DataGraph) -> tuple[list[dict], ExecStats]:
    """Run a physical plan; results carry only the plan's output columns."""
    run = _Run(plan, graph)
    try:
        records = run.run(plan.sink)
    except EvaluationError:
        raise
    except (KeyError, AttributeError) as exc:
        raise ExecutionError(f"alias unresolved during execution: {exc}") from exc
    return rel.restrict(records, plan.columns), run.stats


def evaluate_gir(plan: GirPlan, graph: DataGraph) -> list[dict]:
    """Direct reference evaluation of a logical plan."""
    results: dict[int, list[dict]] = {}
    for nid in plan.topo_order():
        node = plan.nodes[nid]
        op = node.op
        ins = [results[i] for i in node.inputs]
        if isinstance(op, MatchPattern):
            pattern = to_pattern_graph(op)
            matches = oracle_match(pattern, graph, plan.semantics, guard=False)
            if node.inputs:
                anchors = sorted(set(pattern.vertices) & available_aliases(plan, node.inputs[0]))
                joined = rel.join(ins[0], matches, anchors, "INNER")
                if plan.semantics == EDGE_DISTINCT and op.inherited_edges:
                    joined = rel.edge_distinct(joined, list(op.inherited_edges) + list(pattern.edges))
                matches = joined
            _drop_path_internals(pattern, matches)
            results[nid] = matches
        elif isinstance(op, Select):
            results[nid] = rel.select(ins[0], op.condition, graph)
        elif isinstance(op, Project):
            results[nid] = rel.project(ins[0], op.columns, graph)
        elif isinstance(op, Group):
            results[nid] = rel.group(ins[0], op.keys, op.aggs, graph)
        elif isinstance(op, Order):
            results[nid] = rel.order(ins[0], op.keys, graph)
        elif isinstance(op, Limit):
            results[nid] = rel.limit(ins[0], op.count)
        elif isinstance(op, Unfold):
            results[nid] = rel.unfold(ins[0], op.tag, op.alias)
        elif isinstance(op, Join):
            results[nid] = rel.join(
                ins[0],
                ins[1],
                op.keys,
                op.join_type,
                available_aliases(plan, node.inputs[0]),
                available_aliases(plan, node.inputs[1]),
            )
        elif isinstance(op, Union):
            results[nid] = rel.union(ins[0], ins[1])
        else:
            raise ExecutionError(f"cannot evaluate {type(op).__name__}")
    return rel.restrict(results[plan.sink], output_columns(plan, plan.sink))


def _drop_path_internals(pattern, records: Iterable[dict]) -> None:
    internal = set()
    for path in pattern.paths:
        internal |= set(path.vertices[1:-1]) | set(path.edges)
    internal = {a for a in internal if a.startswith("_")}
    if not internal:
        return
    for r in records:
        for a in internal:
            r.pop(a, None)
