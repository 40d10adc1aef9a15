"""Physical rewrite rules over lowered plans.

Each ``*_step`` returns a new :class:`PhysicalPlan` after one rewrite, or
``None`` when nothing applies.
"""

from __future__ import annotations

from typing import Any, Iterable

from ..expr import Compare, Expr, Literal, PropAccess, TagRef, conjoin, conjuncts
from ..physical import PhysicalPlan, PhysOp, op_reads, prop_reads
from .engine import RuleContext

PRED_KEYS = ("predicate", "edge_predicate", "residual")


def _with(op: PhysOp, inputs=None, **params) -> PhysOp:
    p = dict(op.params)
    p.update(params)
    return PhysOp(op.kind, p, op.inputs if inputs is None else tuple(inputs))


def _passthrough(op: PhysOp) -> bool:
    return op.kind == "Project" and all(isinstance(e, TagRef) and e.tag == a for e, a in op.params["columns"])


# ---------------------------------------------------------------------------
# EVFusion


def _reachable_types(schema, src_types, edge_types, direction) -> set[str]:
    out = set()
    for s, e, d in schema.edge_triplets:
        if edge_types is not None and e not in edge_types:
            continue
        if direction in ("OUT", "BOTH") and (src_types is None or s in src_types):
            out.add(d)
        if direction in ("IN", "BOTH") and (src_types is None or d in src_types):
            out.add(s)
    return out


def ev_fusion_step(plan: PhysicalPlan, ctx: RuleContext) -> PhysicalPlan | None:
    """Fuse an edge expansion with the following vertex step when the edge
    itself is never observed and the vertex types are implied by the schema."""
    consumers = plan.consumers()
    for i in plan.topo_order():
        op = plan.ops[i]
        if op.kind != "Expand" or op.params["fused"] or len(consumers[i]) != 1:
            continue
        p = op.params
        gid = consumers[i][0]
        g = plan.ops[gid]
        if g.kind != "GetV" or g.params["edge"] != p["edge"] or g.params["src"] != p["src"]:
            continue
        if p["edge_predicate"] is not None or p["edge_fetch"] or g.params["predicate"] is not None or g.params["fetch"]:
            continue
        edge = p["edge"]
        if edge in plan.columns or any(edge in op_reads(o) for k, o in plan.ops.items() if k != gid):
            continue
        if g.params["types"] is not None:
            if ctx.schema is None:
                continue
            reach = _reachable_types(ctx.schema, p.get("src_types"), p["edge_types"], p["direction"])
            if not reach <= set(g.params["types"]):
                continue
        fused = _with(op, alias=g.params["alias"], types=None, fetch=[], fused=True)
        new = plan.copy()
        new.ops[i] = fused
        new.replace_inputs(gid, i)
        del new.ops[gid]
        return new.compact()
    return None


# ---------------------------------------------------------------------------
# DegFusion


def _degree_group(op: PhysOp) -> tuple[str, str, str, str] | None:
    """(src, key alias, dst, count alias) of a GROUP src, COUNT(DISTINCT dst)."""
    keys, aggs = op.params["keys"], op.params["aggs"]
    if len(keys) != 1 or len(aggs) != 1:
        return None
    (kexpr, kalias), agg = keys[0], aggs[0]
    if not isinstance(kexpr, TagRef) or agg.func != "COUNT_DISTINCT" or not isinstance(agg.expr, TagRef):
        return None
    if kalias == agg.alias:
        return None
    return kexpr.tag, kalias, agg.expr.tag, agg.alias


def deg_fusion_step(plan: PhysicalPlan, ctx: RuleContext) -> PhysicalPlan | None:
    """Replace expand-then-count-distinct-neighbours with a degree lookup."""
    consumers = plan.consumers()
    for i in plan.topo_order():
        op = plan.ops[i]
        if op.kind != "Group":
            continue
        shape = _degree_group(op)
        if shape is None:
            continue
        src, kalias, dst, calias = shape
        below = op.inputs[0]
        if _passthrough(plan.ops[below]) and len(consumers[below]) == 1:
            below = plan.ops[below].inputs[0]
        ex = plan.ops[below]
        if ex.kind != "Expand" or not ex.params["fused"] or len(consumers[below]) != 1:
            continue
        if ex.params["src"] != src or ex.params["alias"] != dst or ex.params["edge_predicate"] is not None:
            continue
        new = plan.copy()
        new.ops[i] = PhysOp(
            "ExpandDegree",
            {
                "src": src,
                "key_alias": kalias,
                "count_alias": calias,
                "direction": ex.params["direction"],
                "edge_types": ex.params["edge_types"],
                "types": ex.params["types"],
            },
            ex.inputs,
        )
        return new.compact()
    return None


# ---------------------------------------------------------------------------
# PKIndex


def _pk_for(ctx: RuleContext, types: Iterable[str]) -> str | None:
    keys = dict(getattr(ctx.profile, "primary_keys", {}) or {})
    found = {keys.get(t, keys.get("*")) for t in types}
    if len(found) != 1:
        return None
    return found.pop()


def indexable(op: PhysOp, ctx: RuleContext) -> dict | None:
    """IndexScan params for a scan with a primary-key equality, else ``None``."""
    if op.kind != "Scan" or op.params["predicate"] is None:
        return None
    types = op.params["types"]
    if types is None:
        if ctx.schema is None:
            return None
        types = sorted(ctx.schema.vertex_types)
    key = _pk_for(ctx, types)
    if key is None:
        return None
    alias = op.params["alias"]
    parts = conjuncts(op.params["predicate"])
    for k, c in enumerate(parts):
        if not isinstance(c, Compare) or c.op != "=":
            continue
        for a, b in ((c.left, c.right), (c.right, c.left)):
            if isinstance(a, PropAccess) and a.tag == alias and a.prop == key and isinstance(b, Literal):
                return {
                    "alias": alias,
                    "types": list(types),
                    "key": key,
                    "value": b.value,
                    "residual": conjoin(parts[:k] + parts[k + 1 :]),
                    "fetch": list(op.params["fetch"]),
                }
    return None


def pk_index_step(plan: PhysicalPlan, ctx: RuleContext) -> PhysicalPlan | None:
    """Turn a full scan with a primary-key equality into an index lookup."""
    for i in plan.topo_order():
        params = indexable(plan.ops[i], ctx)
        if params is not None:
            new = plan.copy()
            new.ops[i] = PhysOp("IndexScan", params, ())
            return new
    return None


# ---------------------------------------------------------------------------
# LateProject

EAGER = ("Scan", "IndexScan", "GetV", "Expand", "ExpandInto", "ExpandIntersect")


def eager_fetches(op: PhysOp) -> list[tuple[str, list[str]]]:
    """(alias, props) pairs an operator loads while producing its bindings."""
    p = op.params
    out = []
    if op.kind not in EAGER:
        return out
    if op.kind in ("Scan", "IndexScan", "GetV", "ExpandIntersect") or (op.kind == "Expand" and p["fused"]):
        if p.get("fetch"):
            out.append((p["alias"], list(p["fetch"])))
    if op.kind in ("Expand", "ExpandInto") and p.get("edge_fetch"):
        out.append((p["edge"], list(p["edge_fetch"])))
    if op.kind == "ExpandIntersect":
        for spec in p["edges"]:
            if spec.get("edge_fetch"):
                out.append((spec["edge"], list(spec["edge_fetch"])))
    return out


def _own_reads(op: PhysOp, alias: str) -> set[str]:
    out = set()
    for key in PRED_KEYS:
        e = op.params.get(key)
        if isinstance(e, Expr):
            out |= {p for t, p in e.properties() if t == alias}
    for spec in op.params.get("edges", []) if op.kind == "ExpandIntersect" else []:
        e = spec.get("edge_predicate")
        if isinstance(e, Expr):
            out |= {p for t, p in e.properties() if t == alias}
    return out


def _set_fetch(op: PhysOp, alias: str, props: list[str]) -> PhysOp:
    p = dict(op.params)
    if p.get("alias") == alias and "fetch" in p and (op.kind != "Expand" or p["fused"]):
        p["fetch"] = props
    elif p.get("edge") == alias and "edge_fetch" in p:
        p["edge_fetch"] = props
    elif op.kind == "ExpandIntersect":
        p["edges"] = [dict(s, edge_fetch=props) if s["edge"] == alias else s for s in p["edges"]]
    return PhysOp(op.kind, p, op.inputs)


def _tag_refs(value: Any) -> set[str]:
    out: set[str] = set()

    def walk(v: Any) -> None:
        if isinstance(v, TagRef):
            out.add(v.tag)
        elif isinstance(v, Expr):
            for f in vars(v).values():
                walk(f)
        elif isinstance(v, dict):
            for x in v.values():
                walk(x)
        elif isinstance(v, (list, tuple)):
            for x in v:
                walk(x)
        elif hasattr(v, "func") and hasattr(v, "expr"):
            walk(v.expr)

    walk(value)
    return out


def _drops(op: PhysOp, alias: str) -> bool:
    """True when ``op`` emits records that no longer carry ``alias``."""
    if op.kind == "Project":
        return alias not in {a for _, a in op.params["columns"]}
    if op.kind == "Group":
        return alias not in {a for _, a in op.params["keys"]} | {g.alias for g in op.params["aggs"]}
    return op.kind == "ExpandDegree"


def _defer(plan: PhysicalPlan, start: int, alias: str, props: list[str]) -> list[tuple[int, list[str]]]:
    """Where to load ``props`` of ``alias``: (op to insert a Fetch above, props) pairs.

    Walks the single-consumer chain from ``start`` and loads each property
    right before the first operator reading it.
    """
    consumers = plan.consumers()
    remaining = list(props)
    cur = start
    out = []
    while remaining:
        cons = consumers[cur]
        if cur == plan.sink or not cons:
            break
        if len(cons) > 1:
            out.append((cur, remaining))
            break
        nxt = cons[0]
        nop = plan.ops[nxt]
        if alias in _tag_refs(dict(nop.params)) and not _drops_silently(nop, alias):
            out.append((cur, remaining))
            break
        reads = sorted({p for a, p in prop_reads(nop) if a == alias} & set(remaining))
        if reads:
            out.append((cur, reads))
            remaining = [p for p in remaining if p not in reads]
        if _drops(nop, alias):
            break
        cur = nxt
    return out


def _drops_silently(op: PhysOp, alias: str) -> bool:
    # a Group counting a vertex never needs its properties
    if op.kind != "Group":
        return False
    return all(not (isinstance(e, TagRef) and e.tag == alias) for e, _ in op.params["keys"])


def late_project_step(plan: PhysicalPlan, ctx: RuleContext) -> PhysicalPlan | None:
    """Postpone property loads to just before the operators that read them."""
    if ctx.profile is not None and not ctx.profile.late_project:
        return None
    for i in plan.topo_order():
        op = plan.ops[i]
        for alias, props in eager_fetches(op):
            own = _own_reads(op, alias)
            movable = [p for p in props if p not in own]
            if not movable:
                continue
            places = _defer(plan, i, alias, movable)
            if places == [(i, movable)]:
                continue  # the next operator needs everything anyway
            new = plan.copy()
            new.ops[i] = _set_fetch(op, alias, [p for p in props if p in own])
            for at, fetch in places:
                fid = new.next_id()
                new.replace_inputs(at, fid)
                new.ops[fid] = PhysOp("Fetch", {"alias": alias, "props": fetch}, (at,))
            return new.compact()
    return None
