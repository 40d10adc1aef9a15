"""Logical rewrite rules over GIR plans.

Each ``*_step`` function performs one rewrite and returns the new plan, or
``None`` when the rule has nothing left to do.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import replace
from typing import Iterable

from ..expr import Expr, PropAccess, TagRef, conjoin, conjuncts
from ..gir import (
    ExpandPath,
    GirPlan,
    Group,
    Join,
    Limit,
    MatchPattern,
    Order,
    PatternGraph,
    PlanNode,
    Project,
    Select,
    Union,
    Unfold,
    available_aliases,
    is_hidden,
    output_columns,
    pattern_from_graph,
    to_pattern_graph,
)
from .engine import RuleContext, has_trimming_consumer

Live = dict[int, dict[str, set[str]]]


def _rebuild(plan: GirPlan, nodes: dict[int, PlanNode], sink: int | None = None) -> GirPlan:
    return GirPlan(nodes, plan.sink if sink is None else sink, plan.semantics).compact()


def _single_consumer(plan: GirPlan, nid: int, consumers=None) -> bool:
    consumers = consumers or plan.consumers()
    return len(consumers.get(nid, [])) == 1


def _pattern_elements(op: MatchPattern) -> tuple[PatternGraph, set[str]]:
    """Pattern graph and every alias it binds (hidden path internals included)."""
    pattern = to_pattern_graph(op)
    return pattern, set(pattern.vertices) | set(pattern.edges) | {p.alias for p in pattern.paths}


def _bound_aliases(op: MatchPattern) -> list[str]:
    """Aliases present in records after the pattern (path internals are dropped)."""
    pattern = to_pattern_graph(op)
    internal = set()
    for p in pattern.paths:
        internal |= {a for a in p.vertices[1:-1] + p.edges if is_hidden(a)}
    return [a for a in list(pattern.vertices) + list(pattern.edges) + [p.alias for p in pattern.paths] if a not in internal]


# ---------------------------------------------------------------------------
# liveness


def liveness(plan: GirPlan) -> Live:
    """Aliases (with the properties read from them) each node must produce."""
    req: Live = defaultdict(dict)

    def need(nid: int, alias: str, props: Iterable[str] = ()) -> None:
        req[nid].setdefault(alias, set()).update(props)

    def use(nid: int, expr: Expr) -> None:
        for t in expr.tags():
            need(nid, t)
        for t, p in expr.properties():
            need(nid, t, [p])

    for c in output_columns(plan, plan.sink):
        need(plan.sink, c)
    for nid in reversed(plan.topo_order()):
        node = plan.nodes[nid]
        op = node.op
        r = req[nid]
        if isinstance(op, (Select, Order, Limit)):
            child = node.inputs[0]
            for a, props in r.items():
                need(child, a, props)
            if isinstance(op, Select):
                use(child, op.condition)
            elif isinstance(op, Order):
                for e, _ in op.keys:
                    use(child, e)
        elif isinstance(op, (Project, Group)):
            child = node.inputs[0]
            cols = op.columns if isinstance(op, Project) else op.keys
            for e, alias in cols:
                use(child, e)
                if isinstance(e, TagRef):
                    need(child, e.tag, r.get(alias, ()))
            if isinstance(op, Group):
                for agg in op.aggs:
                    use(child, agg.expr)
        elif isinstance(op, Unfold):
            child = node.inputs[0]
            for a, props in r.items():
                if a != op.alias:
                    need(child, a, props)
            need(child, op.tag)
        elif isinstance(op, Join):
            left, right = node.inputs
            la, ra = available_aliases(plan, left), available_aliases(plan, right)
            for a, props in r.items():
                if a in la:
                    need(left, a, props)
                if a in ra and op.join_type not in ("SEMI", "ANTI"):
                    need(right, a, props)
            for k in op.keys:
                need(left, k)
                need(right, k)
        elif isinstance(op, Union):
            for child in node.inputs:
                avail = available_aliases(plan, child)
                for a, props in r.items():
                    if a in avail:
                        need(child, a, props)
        elif isinstance(op, MatchPattern) and node.inputs:
            child = node.inputs[0]
            avail = available_aliases(plan, child)
            pattern = to_pattern_graph(op)
            for a, props in r.items():
                if a in avail:
                    need(child, a, props)
            for a in pattern.vertices:
                if a in avail:
                    need(child, a)
            for e in op.inherited_edges:
                need(child, e)
    return req


def needs_trim(plan: GirPlan, nid: int, live: Live, consumers=None) -> bool:
    """True when a pattern emits aliases nobody downstream reads."""
    if nid == plan.sink:
        return False
    consumers = consumers or plan.consumers()
    if has_trimming_consumer(plan, consumers, nid):
        return False
    op = plan.nodes[nid].op
    bound = set(_bound_aliases(op))
    if plan.nodes[nid].inputs:
        bound |= available_aliases(plan, plan.nodes[nid].inputs[0])
    keep = bound & set(live.get(nid, {}))
    return bool(keep) and keep != bound


# ---------------------------------------------------------------------------
# FilterIntoJoin


def _side_for(op: Join, tags: set[str], la: set[str], ra: set[str]) -> int | None:
    """Input index a conjunct over ``tags`` may be pushed to, if any."""
    if not tags:
        return None
    sides = []
    if op.join_type in ("INNER", "LEFT_OUTER", "SEMI", "ANTI") and tags <= la:
        sides.append(0)
    if op.join_type in ("INNER", "RIGHT_OUTER") and tags <= ra:
        sides.append(1)
    return sides[0] if sides else None


def filter_into_join_step(plan: GirPlan, ctx: RuleContext) -> GirPlan | None:
    """Move SELECT conjuncts that read one join side below the join."""
    consumers = plan.consumers()
    for nid, node in plan:
        if not isinstance(node.op, Select):
            continue
        jid = node.inputs[0]
        join = plan.nodes[jid]
        if not isinstance(join.op, Join) or not _single_consumer(plan, jid, consumers):
            continue
        la = available_aliases(plan, join.inputs[0])
        ra = available_aliases(plan, join.inputs[1])
        moved: dict[int, list[Expr]] = {0: [], 1: []}
        kept = []
        for c in conjuncts(node.op.condition):
            side = _side_for(join.op, c.tags(), la, ra)
            if side is None:
                kept.append(c)
            else:
                moved[side].append(c)
        if not moved[0] and not moved[1]:
            continue
        nodes = dict(plan.nodes)
        nxt = plan.next_id()
        inputs = list(join.inputs)
        for side in (0, 1):
            if moved[side]:
                nodes[nxt] = PlanNode(Select(conjoin(moved[side])), (inputs[side],))
                inputs[side] = nxt
                nxt += 1
        nodes[jid] = PlanNode(join.op, tuple(inputs))
        rest = conjoin(kept)
        if rest is None:
            return _replace_node(plan, nodes, nid, jid)
        nodes[nid] = PlanNode(Select(rest), (jid,))
        return _rebuild(plan, nodes)
    return None


def _replace_node(plan: GirPlan, nodes: dict[int, PlanNode], old: int, new: int) -> GirPlan:
    """Drop node ``old`` and route its consumers to ``new``."""
    del nodes[old]
    for k, n in list(nodes.items()):
        if old in n.inputs:
            nodes[k] = PlanNode(n.op, tuple(new if i == old else i for i in n.inputs))
    return _rebuild(plan, nodes, new if plan.sink == old else plan.sink)


# ---------------------------------------------------------------------------
# FilterIntoPattern


def filter_into_pattern_step(plan: GirPlan, ctx: RuleContext) -> GirPlan | None:
    """Attach single-element SELECT conjuncts to the pattern element they test."""
    consumers = plan.consumers()
    for nid, node in plan:
        if not isinstance(node.op, Select):
            continue
        pid = node.inputs[0]
        pnode = plan.nodes[pid]
        if not isinstance(pnode.op, MatchPattern) or not _single_consumer(plan, pid, consumers):
            continue
        pattern = to_pattern_graph(pnode.op)
        elements = set(pattern.vertices) | set(pattern.edges)
        preds = dict(pnode.op.preds)
        kept = []
        moved = False
        for c in conjuncts(node.op.condition):
            tags = c.tags()
            if len(tags) == 1 and next(iter(tags)) in elements:
                (alias,) = tags
                preds[alias] = conjoin([preds.get(alias), c])
                moved = True
            else:
                kept.append(c)
        if not moved:
            continue
        nodes = dict(plan.nodes)
        nodes[pid] = PlanNode(replace(pnode.op, preds=preds), pnode.inputs)
        rest = conjoin(kept)
        if rest is None:
            return _replace_node(plan, nodes, nid, pid)
        nodes[nid] = PlanNode(Select(rest), (pid,))
        return _rebuild(plan, nodes)
    return None


# ---------------------------------------------------------------------------
# FieldTrim


def field_trim_step(plan: GirPlan, ctx: RuleContext) -> GirPlan | None:
    """Record per-element retained properties and project away dead aliases."""
    live = liveness(plan)
    consumers = plan.consumers()
    nodes = dict(plan.nodes)
    nxt = plan.next_id()
    changed = False
    for nid, node in plan:
        op = node.op
        if not isinstance(op, MatchPattern):
            continue
        _, elements = _pattern_elements(op)
        vs_es = [a for a in elements if a not in {p.alias for p in to_pattern_graph(op).paths}]
        columns = {}
        r = live.get(nid, {})
        for a in sorted(vs_es):
            if a not in set(_bound_aliases(op)):
                continue
            props = set(r.get(a, ()))
            pred = op.preds.get(a)
            if pred is not None:
                props |= {p for t, p in pred.properties() if t == a}
            columns[a] = frozenset(props)
        if columns != dict(op.columns):
            op = replace(op, columns=columns)
            nodes[nid] = PlanNode(op, node.inputs)
            changed = True
        if needs_trim(plan, nid, live, consumers):
            bound = _bound_aliases(plan.nodes[nid].op)
            order = output_columns(plan, nid) + [a for a in bound if is_hidden(a)]
            if node.inputs:
                order += sorted(a for a in available_aliases(plan, node.inputs[0]) if a not in order)
            keep = [a for a in dict.fromkeys(order) if a in r]
            nodes[nxt] = PlanNode(Project(tuple((TagRef(a), a) for a in keep)), (nid,))
            for c in consumers[nid]:
                cn = nodes[c]
                nodes[c] = PlanNode(cn.op, tuple(nxt if i == nid else i for i in cn.inputs))
            nxt += 1
            changed = True
    if not changed:
        return None
    return _rebuild(plan, nodes)


# ---------------------------------------------------------------------------
# JoinToPattern


def _passthrough(op) -> bool:
    return isinstance(op, Project) and all(isinstance(e, TagRef) and e.tag == a for e, a in op.columns)


def _pattern_side(plan: GirPlan, nid: int, consumers) -> tuple[int, int | None] | None:
    """(pattern node, projection node) feeding one join side, if it is a bare pattern."""
    proj = None
    node = plan.nodes[nid]
    if _passthrough(node.op) and _single_consumer(plan, nid, consumers):
        proj = nid
        nid = node.inputs[0]
        node = plan.nodes[nid]
    if isinstance(node.op, MatchPattern) and not node.inputs and _single_consumer(plan, nid, consumers):
        return nid, proj
    return None


def _merge_columns(a: MatchPattern, b: MatchPattern, shared: set[str]) -> dict[str, frozenset[str]]:
    out = {}
    for x in (a, b):
        for alias, cols in x.columns.items():
            if alias not in shared:
                out[alias] = cols
    for alias in shared:
        if alias in a.columns and alias in b.columns:
            out[alias] = a.columns[alias] | b.columns[alias]
    return out


def join_to_pattern_step(plan: GirPlan, ctx: RuleContext) -> GirPlan | None:
    """Merge an INNER join of two patterns on shared vertices into one pattern."""
    consumers = plan.consumers()
    for nid, node in plan:
        op = node.op
        if not isinstance(op, Join) or op.join_type != "INNER" or not op.keys:
            continue
        left = _pattern_side(plan, node.inputs[0], consumers)
        right = _pattern_side(plan, node.inputs[1], consumers)
        if left is None or right is None:
            continue
        lop, rop = plan.nodes[left[0]].op, plan.nodes[right[0]].op
        lp, lel = _pattern_elements(lop)
        rp, rel_ = _pattern_elements(rop)
        keys = set(op.keys)
        if lel & rel_ != keys or not keys <= (set(lp.vertices) & set(rp.vertices)):
            continue
        merged = MatchPattern(
            lop.expand_base + rop.expand_base,
            {a: conjoin([lop.preds.get(a), rop.preds.get(a)]) for a in set(lop.preds) | set(rop.preds)},
            _merge_columns(lop, rop, keys),
        )
        nodes = {k: v for k, v in plan.nodes.items() if k not in (left[0], right[0], left[1], right[1])}
        if left[1] is None and right[1] is None:
            nodes[nid] = PlanNode(merged)
        else:
            cols: list[str] = []
            for (pid, proj), pop in ((left, lop), (right, rop)):
                if proj is not None:
                    cols += [a for _, a in plan.nodes[proj].op.columns]
                else:
                    cols += _bound_aliases(pop)
            cols = list(dict.fromkeys(cols))
            # join keys kept only for the join itself are dead once it is gone
            live = liveness(plan).get(nid, {})
            cols = [a for a in cols if a in live] or cols
            mid = plan.next_id()
            nodes[mid] = PlanNode(merged)
            nodes[nid] = PlanNode(Project(tuple((TagRef(a), a) for a in cols)), (mid,))
        return _rebuild(plan, nodes)
    return None


# ---------------------------------------------------------------------------
# ComSubPattern


def _common_subpattern(p1: PatternGraph, p2: PatternGraph) -> tuple[set[str], set[str]] | None:
    """Largest connected set of identically defined elements shared by alias."""
    def same_v(a: str) -> bool:
        x, y = p1.vertices[a], p2.vertices[a]
        return x.types == y.types and x.predicate == y.predicate

    cv = {a for a in set(p1.vertices) & set(p2.vertices) if same_v(a)}
    ce = set()
    for a in set(p1.edges) & set(p2.edges):
        x, y = p1.edges[a], p2.edges[a]
        if (x.src, x.dst, x.types, x.both, x.predicate) == (y.src, y.dst, y.types, y.both, y.predicate):
            if x.src in cv and x.dst in cv:
                ce.add(a)
    best = None
    remaining = {v for a in ce for v in (p1.edges[a].src, p1.edges[a].dst)}
    while remaining:
        start = min(remaining)
        comp, stack = {start}, [start]
        while stack:
            x = stack.pop()
            for a in ce:
                e = p1.edges[a]
                for s, d in ((e.src, e.dst), (e.dst, e.src)):
                    if s == x and d not in comp:
                        comp.add(d)
                        stack.append(d)
        remaining -= comp
        edges = {a for a in ce if p1.edges[a].src in comp}
        key = (len(edges), len(comp), [-ord(c) for c in min(comp)])
        if best is None or key > best[0]:
            best = (key, comp, edges)
    if best is None:
        return None
    return best[1], best[2]


def _rest_pattern(p: PatternGraph, hv: set[str], he: set[str]) -> PatternGraph | None:
    """Elements of ``p`` outside the hoisted part, anchored on hoisted vertices."""
    edges = {a: e for a, e in p.edges.items() if a not in he}
    vs = {v for e in edges.values() for v in (e.src, e.dst)} | (set(p.vertices) - hv)
    if not edges and vs <= hv:
        return None
    vertices = {}
    for a in p.vertices:
        if a in vs:
            v = p.vertices[a]
            if a in hv:
                from ..graph import TypeConstraint

                v = replace(v, types=TypeConstraint.all(), predicate=None, columns=frozenset())
            vertices[a] = v
    return PatternGraph(vertices, edges)


def _has_paths(op: MatchPattern) -> bool:
    return any(isinstance(g, ExpandPath) for g in op.expand_base)


def _hoisted_columns(ops: list[MatchPattern], aliases: set[str]) -> dict[str, frozenset[str]]:
    out = {}
    for a in aliases:
        cols = [o.columns.get(a) for o in ops]
        if all(c is not None for c in cols):
            out[a] = frozenset().union(*cols)
    return out


def _vertex_provenance(plan: GirPlan, nid: int, alias: str) -> bool:
    """True when ``alias`` in the output of ``nid`` always holds a matched vertex."""
    node = plan.nodes[nid]
    op = node.op
    if isinstance(op, MatchPattern):
        if alias in to_pattern_graph(op).vertices:
            return True
        return bool(node.inputs) and _vertex_provenance(plan, node.inputs[0], alias)
    if isinstance(op, (Select, Order, Limit)):
        return _vertex_provenance(plan, node.inputs[0], alias)
    if isinstance(op, (Project, Group)):
        cols = op.columns if isinstance(op, Project) else op.keys
        for e, a in cols:
            if a == alias:
                return isinstance(e, TagRef) and _vertex_provenance(plan, node.inputs[0], e.tag)
        return False
    if isinstance(op, Unfold):
        return alias != op.alias and _vertex_provenance(plan, node.inputs[0], alias)
    if isinstance(op, Join) and op.join_type == "INNER":
        for i in node.inputs:
            if alias in available_aliases(plan, i):
                return _vertex_provenance(plan, i, alias)
    return False


def com_sub_pattern_step(plan: GirPlan, ctx: RuleContext) -> GirPlan | None:
    """Match a subpattern shared by two branches once, or expand a joined
    pattern directly from the vertices its left input already binds."""
    consumers = plan.consumers()
    for nid, node in plan:
        op = node.op
        if not isinstance(op, (Union, Join)):
            continue
        a, b = node.inputs
        na, nb = plan.nodes[a], plan.nodes[b]
        both_patterns = (
            a != b
            and all(isinstance(n.op, MatchPattern) and not n.inputs and not _has_paths(n.op) for n in (na, nb))
            and _single_consumer(plan, a, consumers)
            and _single_consumer(plan, b, consumers)
        )
        if both_patterns:
            new = _hoist(plan, nid, a, b)
            if new is not None:
                return new
        if isinstance(op, Join) and op.join_type == "INNER" and op.keys:
            new = _anchor_right(plan, nid, consumers)
            if new is not None:
                return new
    return None


def _hoist(plan: GirPlan, nid: int, a: int, b: int) -> GirPlan | None:
    ops = [plan.nodes[a].op, plan.nodes[b].op]
    graphs = [to_pattern_graph(o) for o in ops]
    common = _common_subpattern(graphs[0], graphs[1])
    if common is None:
        return None
    hv, he = common
    rests = [_rest_pattern(g, hv, he) for g in graphs]
    if any(r is not None and not r.is_connected() for r in rests):
        return None
    nodes = dict(plan.nodes)
    hid = plan.next_id()
    hoisted = pattern_from_graph(graphs[0].subpattern(hv, he))
    hoisted = replace(hoisted, columns=_hoisted_columns(ops, hv | he))
    nodes[hid] = PlanNode(hoisted)
    inputs = []
    for old, op, rest in zip((a, b), ops, rests):
        del nodes[old]
        if rest is None:
            inputs.append(hid)
            continue
        mp = pattern_from_graph(rest)
        cols = {k: v for k, v in op.columns.items() if k in set(rest.vertices) | set(rest.edges) and k not in hv}
        mp = replace(mp, columns=cols, inherited_edges=tuple(sorted(he)) if plan.semantics == "edge_distinct" else ())
        nodes[old] = PlanNode(mp, (hid,))
        inputs.append(old)
    if inputs[0] == inputs[1] == hid and isinstance(plan.nodes[nid].op, Union):
        pass  # UNION of two identical patterns still reads the shared node twice
    nodes[nid] = PlanNode(plan.nodes[nid].op, tuple(inputs))
    return _rebuild(plan, nodes)


def _anchor_right(plan: GirPlan, nid: int, consumers) -> GirPlan | None:
    node = plan.nodes[nid]
    left, right = node.inputs
    rnode = plan.nodes[right]
    if not isinstance(rnode.op, MatchPattern) or rnode.inputs or not _single_consumer(plan, right, consumers):
        return None
    keys = set(node.op.keys)
    pattern, elements = _pattern_elements(rnode.op)
    if not keys <= set(pattern.vertices):
        return None
    if elements & available_aliases(plan, left) != keys:
        return None
    if not all(_vertex_provenance(plan, left, k) for k in keys):
        return None
    nodes = dict(plan.nodes)
    del nodes[right]
    nodes[nid] = PlanNode(rnode.op, (left,))
    return _rebuild(plan, nodes)
