"""Physical plans and lowering from GIR.

A :class:`PhysicalPlan` is a DAG of :class:`PhysOp` nodes. Pattern sections
are lowered from a pattern-plan tree (``ScanStep`` / ``ExpandStep`` /
``JoinStep``) chosen by the cost-based optimizer, or from a fixed
declaration-order tree when no statistics are available.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .errors import PlanError
from .expr import Expr
from .gir import (
    EDGE_DISTINCT,
    HOMOMORPHISM,
    GirPlan,
    Group,
    Join,
    Limit,
    MatchPattern,
    Order,
    PatternGraph,
    Project,
    Select,
    Union,
    Unfold,
    available_aliases,
    output_columns,
    to_pattern_graph,
)
from .graph import TypeConstraint

# ---------------------------------------------------------------------------
# pattern-plan trees


@dataclass(frozen=True)
class ScanStep:
    vertex: str
    loops: tuple[str, ...] = ()
    freq: float = field(default=0.0, compare=False)
    cost: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class ExpandStep:
    child: "PatternStep"
    vertex: str
    edges: tuple[str, ...]  # non-loop edges in application order, then loops
    freq: float = field(default=0.0, compare=False)
    cost: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class JoinStep:
    left: "PatternStep"
    right: "PatternStep"
    keys: tuple[str, ...]
    freq: float = field(default=0.0, compare=False)
    cost: float = field(default=0.0, compare=False)


PatternStep = ScanStep | ExpandStep | JoinStep


def step_signature(step: PatternStep) -> Any:
    """Nested structure used for deterministic tie-breaking and plan equality."""
    if isinstance(step, ScanStep):
        return ["scan", step.vertex, list(step.loops)]
    if isinstance(step, ExpandStep):
        return ["expand", step.vertex, list(step.edges), step_signature(step.child)]
    return ["join", list(step.keys), step_signature(step.left), step_signature(step.right)]


def step_text(step: PatternStep) -> str:
    return json.dumps(step_signature(step), separators=(",", ":"))


def step_json(step: PatternStep) -> dict:
    out: dict[str, Any]
    if isinstance(step, ScanStep):
        out = {"step": "Scan", "vertex": step.vertex, "loops": list(step.loops)}
    elif isinstance(step, ExpandStep):
        out = {"step": "Expand", "vertex": step.vertex, "edges": list(step.edges), "input": step_json(step.child)}
    else:
        out = {"step": "Join", "keys": list(step.keys), "left": step_json(step.left), "right": step_json(step.right)}
    out["est_freq"] = round(step.freq, 6)
    out["cost"] = round(step.cost, 6)
    return out


def step_elements(step: PatternStep, pattern: PatternGraph) -> tuple[frozenset[str], frozenset[str]]:
    if isinstance(step, ScanStep):
        return frozenset([step.vertex]), frozenset(step.loops)
    if isinstance(step, ExpandStep):
        vs, es = step_elements(step.child, pattern)
        return vs | {step.vertex}, es | set(step.edges)
    lv, le = step_elements(step.left, pattern)
    rv, re_ = step_elements(step.right, pattern)
    return lv | rv, le | re_


def expansion_order(pattern: PatternGraph, bound: Iterable[str]) -> tuple[list[str], list[tuple[str, tuple[str, ...]]]]:
    """Declaration-order plan from a bound vertex set.

    Returns edges closing among the bound vertices, then one
    ``(vertex, edges)`` expansion per remaining vertex.
    """
    bound = set(bound)
    done: set[str] = set()
    closing = [a for a, e in pattern.edges.items() if e.src in bound and e.dst in bound]
    done.update(closing)
    steps = []
    order = list(pattern.vertices)
    while len(bound) < len(pattern.vertices):
        for v in order:
            if v in bound:
                continue
            edges = [
                a
                for a, e in pattern.edges.items()
                if a not in done and v in (e.src, e.dst) and (e.src in bound or e.dst in bound)
            ]
            if edges:
                loops = [a for a, e in pattern.edges.items() if e.src == e.dst == v]
                steps.append((v, tuple(edges + loops)))
                bound.add(v)
                done.update(edges + loops)
                break
        else:
            raise PlanError("pattern is not connected to its bound vertices")
    return closing, steps


def naive_step(pattern: PatternGraph) -> PatternStep:
    """Pattern tree following declaration order, used without statistics.

    Disconnected patterns become a cross product of their components.
    """
    result: PatternStep | None = None
    remaining = list(pattern.vertices)
    while remaining:
        first = remaining[0]
        comp = _component(pattern, first)
        sub = pattern.subpattern(comp, [a for a, e in pattern.edges.items() if e.src in comp])
        loops = tuple(a for a, e in sub.edges.items() if e.src == e.dst == first)
        step: PatternStep = ScanStep(first, loops)
        _, expansions = expansion_order(sub, [first])
        for v, edges in expansions:
            step = ExpandStep(step, v, edges)
        result = step if result is None else JoinStep(result, step, ())
        remaining = [v for v in remaining if v not in comp]
    if result is None:
        raise PlanError("pattern has no vertices")
    return result


def _component(pattern: PatternGraph, start: str) -> set[str]:
    comp, stack = {start}, [start]
    while stack:
        x = stack.pop()
        for e in pattern.edges.values():
            for a, b in ((e.src, e.dst), (e.dst, e.src)):
                if a == x and b not in comp:
                    comp.add(b)
                    stack.append(b)
    return comp


# ---------------------------------------------------------------------------
# physical plans


@dataclass(frozen=True)
class PhysOp:
    kind: str
    params: Mapping[str, Any]
    inputs: tuple[int, ...] = ()


@dataclass
class PhysicalPlan:
    ops: dict[int, PhysOp]
    sink: int
    columns: list[str]
    semantics: str = HOMOMORPHISM
    alias_types: dict[str, frozenset[str] | None] = field(default_factory=dict)

    def consumers(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {i: [] for i in self.ops}
        for i, op in self.ops.items():
            for j in op.inputs:
                out[j].append(i)
        return out

    def topo_order(self) -> list[int]:
        seen: set[int] = set()
        order: list[int] = []

        def visit(i: int) -> None:
            if i in seen:
                return
            seen.add(i)
            for j in self.ops[i].inputs:
                visit(j)
            order.append(i)

        visit(self.sink)
        return order

    def kinds(self) -> list[str]:
        return [self.ops[i].kind for i in self.topo_order()]

    def next_id(self) -> int:
        return max(self.ops, default=-1) + 1

    def replace_inputs(self, old: int, new: int) -> None:
        for i, op in list(self.ops.items()):
            if old in op.inputs:
                self.ops[i] = PhysOp(op.kind, op.params, tuple(new if x == old else x for x in op.inputs))
        if self.sink == old:
            self.sink = new

    def compact(self) -> PhysicalPlan:
        keep = set(self.topo_order())
        self.ops = {i: op for i, op in self.ops.items() if i in keep}
        return self

    def copy(self) -> PhysicalPlan:
        return PhysicalPlan(dict(self.ops), self.sink, list(self.columns), self.semantics, dict(self.alias_types))

    def to_json(self) -> dict:
        return {
            "semantics": self.semantics,
            "columns": list(self.columns),
            "ops": [
                {"id": i, "kind": self.ops[i].kind, "params": _params_json(self.ops[i].params), "inputs": list(self.ops[i].inputs)}
                for i in self.topo_order()
            ],
            "sink": self.sink,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


def _params_json(value: Any) -> Any:
    if isinstance(value, Expr):
        return value.to_json()
    if isinstance(value, Mapping):
        return {k: _params_json(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_params_json(v) for v in value]
    if isinstance(value, (frozenset, set)):
        return sorted(value)
    if hasattr(value, "func") and hasattr(value, "alias"):  # AggCall
        return {"func": value.func, "expr": _params_json(value.expr), "alias": value.alias}
    return value


def expr_refs(value: Any) -> set[str]:
    """Aliases read by the expressions nested in a params value."""
    if isinstance(value, Expr):
        return value.tags()
    if isinstance(value, Mapping):
        return set().union(*(expr_refs(v) for v in value.values())) if value else set()
    if isinstance(value, (list, tuple)):
        return set().union(*(expr_refs(v) for v in value)) if value else set()
    if hasattr(value, "func") and hasattr(value, "alias") and hasattr(value, "expr"):
        return value.expr.tags()
    return set()


def op_reads(op: PhysOp) -> set[str]:
    """Aliases an operator reads from its input records (beyond what it binds)."""
    p = op.params
    reads = expr_refs({k: v for k, v in p.items() if k not in ("predicate", "edge_predicate", "residual")})
    if op.kind in ("Expand", "GetV", "ExpandInto", "ExpandDegree"):
        reads.add(p["src"])
    if op.kind == "GetV":
        reads.add(p["edge"])
    if op.kind == "ExpandInto":
        reads.add(p["dst"])
    if op.kind == "ExpandIntersect":
        reads |= {spec["src"] for spec in p["edges"]}
    if op.kind == "HashJoin":
        reads |= set(p["keys"])
    if op.kind == "EdgeDistinctFilter":
        reads |= set(p["edges"])
    if op.kind == "PathAssemble":
        for path in p["paths"]:
            reads |= set(path["vertices"]) | set(path["edges"])
    if op.kind == "Unfold":
        reads.add(p["tag"])
    if op.kind == "Filter":
        reads.add(p["alias"])
    if op.kind == "Fetch":
        reads.add(p["alias"])
    return reads


def prop_reads(op: PhysOp) -> set[tuple[str, str]]:
    """(alias, property) pairs read by the operator's expressions."""
    out: set[tuple[str, str]] = set()

    def walk(value: Any) -> None:
        if isinstance(value, Expr):
            out.update(value.properties())
        elif isinstance(value, Mapping):
            for v in value.values():
                walk(v)
        elif isinstance(value, (list, tuple)):
            for v in value:
                walk(v)
        elif hasattr(value, "func") and hasattr(value, "expr"):
            walk(value.expr)

    walk(dict(op.params))
    return out


# ---------------------------------------------------------------------------
# lowering


def _types(tc: TypeConstraint) -> list[str] | None:
    return None if tc.names is None else sorted(tc.names)


def _fetch(columns: frozenset[str] | None) -> list[str]:
    return sorted(columns) if columns else []


class _Builder:
    def __init__(self) -> None:
        self.ops: dict[int, PhysOp] = {}

    def add(self, kind: str, params: Mapping[str, Any], inputs: Sequence[int] = ()) -> int:
        nid = len(self.ops)
        self.ops[nid] = PhysOp(kind, dict(params), tuple(inputs))
        return nid


def _direction_from(pattern: PatternGraph, edge: str, bound: str) -> str:
    e = pattern.edges[edge]
    if e.both:
        return "BOTH"
    return "OUT" if e.src == bound else "IN"


def _edge_params(pattern: PatternGraph, edge: str) -> dict:
    e = pattern.edges[edge]
    return {"edge": edge, "edge_types": _types(e.types), "edge_predicate": e.predicate, "edge_fetch": _fetch(e.columns)}


def _close(b: _Builder, cur: int, pattern: PatternGraph, edge: str, bound_src: str) -> int:
    e = pattern.edges[edge]
    dst = e.dst if e.src == bound_src else e.src
    params = {"src": bound_src, "dst": dst, "direction": _direction_from(pattern, edge, bound_src)}
    params.update(_edge_params(pattern, edge))
    return b.add("ExpandInto", params, [cur])


def _expand_vertex(b: _Builder, cur: int, pattern: PatternGraph, v: str, edges: Sequence[str], expand_impl: str) -> int:
    pv = pattern.vertices[v]
    nonloop = [a for a in edges if pattern.edges[a].src != pattern.edges[a].dst]
    loops = [a for a in edges if pattern.edges[a].src == pattern.edges[a].dst]
    if expand_impl == "intersect" and len(nonloop) >= 2:
        specs = []
        for a in nonloop:
            e = pattern.edges[a]
            src = e.dst if e.src == v else e.src
            spec = {"src": src, "direction": _direction_from(pattern, a, src)}
            spec.update(_edge_params(pattern, a))
            specs.append(spec)
        cur = b.add(
            "ExpandIntersect",
            {"alias": v, "types": _types(pv.types), "predicate": pv.predicate, "fetch": _fetch(pv.columns), "edges": specs},
            [cur],
        )
        rest: list[str] = []
    else:
        first, rest = nonloop[0], nonloop[1:]
        e = pattern.edges[first]
        src = e.dst if e.src == v else e.src
        params = {
            "src": src,
            "src_types": _types(pattern.vertices[src].types),
            "direction": _direction_from(pattern, first, src),
            "fused": False,
        }
        params.update(_edge_params(pattern, first))
        cur = b.add("Expand", params, [cur])
        cur = b.add(
            "GetV",
            {
                "edge": first,
                "src": src,
                "alias": v,
                "direction": params["direction"],
                "types": _types(pv.types),
                "predicate": pv.predicate,
                "fetch": _fetch(pv.columns),
            },
            [cur],
        )
    for a in rest:
        e = pattern.edges[a]
        other = e.dst if e.src == v else e.src
        cur = _close(b, cur, pattern, a, other)
    for a in loops:
        cur = _close(b, cur, pattern, a, v)
    return cur


def _scan(b: _Builder, pattern: PatternGraph, v: str, loops: Sequence[str]) -> int:
    pv = pattern.vertices[v]
    cur = b.add("Scan", {"alias": v, "types": _types(pv.types), "predicate": pv.predicate, "fetch": _fetch(pv.columns)})
    for a in loops:
        cur = _close(b, cur, pattern, a, v)
    return cur


def lower_step(b: _Builder, pattern: PatternGraph, step: PatternStep, expand_impl: str) -> int:
    if isinstance(step, ScanStep):
        return _scan(b, pattern, step.vertex, step.loops)
    if isinstance(step, ExpandStep):
        cur = lower_step(b, pattern, step.child, expand_impl)
        return _expand_vertex(b, cur, pattern, step.vertex, step.edges, expand_impl)
    left = lower_step(b, pattern, step.left, expand_impl)
    right = lower_step(b, pattern, step.right, expand_impl)
    return b.add("HashJoin", {"keys": list(step.keys), "join_type": "INNER", "left_columns": [], "right_columns": []}, [left, right])


def _lower_anchored(b: _Builder, pattern: PatternGraph, cur: int, anchors: set[str], expand_impl: str) -> int:
    for a in pattern.vertices:
        if a in anchors:
            pv = pattern.vertices[a]
            if pv.types.names is not None or pv.predicate is not None:
                cur = b.add("Filter", {"alias": a, "types": _types(pv.types), "predicate": pv.predicate}, [cur])
    closing, steps = expansion_order(pattern, anchors)
    for a in closing:
        cur = _close(b, cur, pattern, a, pattern.edges[a].src)
    for v, edges in steps:
        cur = _expand_vertex(b, cur, pattern, v, edges, expand_impl)
    return cur


def lower(
    plan: GirPlan,
    patterns: Mapping[int, PatternGraph] | None = None,
    steps: Mapping[int, PatternStep] | None = None,
    expand_impl: str = "into",
) -> PhysicalPlan:
    """Lower a GIR plan; ``patterns`` holds type-inferred pattern graphs by node id."""
    patterns = dict(patterns or {})
    steps = dict(steps or {})
    b = _Builder()
    mapping: dict[int, int] = {}
    alias_types: dict[str, frozenset[str] | None] = {}
    for nid in plan.topo_order():
        node = plan.nodes[nid]
        op = node.op
        ins = [mapping[i] for i in node.inputs]
        if isinstance(op, MatchPattern):
            pattern = patterns.get(nid) or to_pattern_graph(op)
            for a, v in pattern.vertices.items():
                alias_types[a] = v.types.names
            for a, e in pattern.edges.items():
                alias_types[a] = e.types.names
            if node.inputs:
                anchors = set(pattern.vertices) & available_aliases(plan, node.inputs[0])
                cur = _lower_anchored(b, pattern, ins[0], anchors, expand_impl)
            else:
                step = steps.get(nid) or naive_step(pattern)
                cur = lower_step(b, pattern, step, expand_impl)
            if plan.semantics == EDGE_DISTINCT:
                cur = b.add(
                    "EdgeDistinctFilter",
                    {"edges": list(pattern.edges) + list(op.inherited_edges)},
                    [cur],
                )
            if pattern.paths:
                cur = b.add(
                    "PathAssemble",
                    {
                        "paths": [
                            {"alias": p.alias, "vertices": list(p.vertices), "edges": list(p.edges), "opt": p.opt}
                            for p in pattern.paths
                        ]
                    },
                    [cur],
                )
            mapping[nid] = cur
        elif isinstance(op, Select):
            mapping[nid] = b.add("Select", {"condition": op.condition}, ins)
        elif isinstance(op, Project):
            mapping[nid] = b.add("Project", {"columns": list(op.columns)}, ins)
        elif isinstance(op, Group):
            mapping[nid] = b.add("Group", {"keys": list(op.keys), "aggs": list(op.aggs)}, ins)
        elif isinstance(op, Order):
            mapping[nid] = b.add("Order", {"keys": list(op.keys)}, ins)
        elif isinstance(op, Limit):
            mapping[nid] = b.add("Limit", {"count": op.count}, ins)
        elif isinstance(op, Unfold):
            mapping[nid] = b.add("Unfold", {"tag": op.tag, "alias": op.alias}, ins)
        elif isinstance(op, Join):
            mapping[nid] = b.add(
                "HashJoin",
                {
                    "keys": list(op.keys),
                    "join_type": op.join_type,
                    "left_columns": sorted(available_aliases(plan, node.inputs[0])),
                    "right_columns": sorted(available_aliases(plan, node.inputs[1])),
                },
                ins,
            )
        elif isinstance(op, Union):
            mapping[nid] = b.add("Union", {}, ins)
        else:
            raise PlanError(f"cannot lower {type(op).__name__}")
    return PhysicalPlan(b.ops, mapping[plan.sink], output_columns(plan, plan.sink), plan.semantics, alias_types)
