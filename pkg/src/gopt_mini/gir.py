"""Graph intermediate representation: logical operators, plan DAG, builder.

A plan is a DAG of :class:`PlanNode` values keyed by integer id. Graph
operators (GET_VERTEX, EXPAND_EDGE, EXPAND_PATH) live inside a
:class:`MatchPattern` node as its ``expand_base``; relational operators are
ordinary nodes. Plans are immutable: rewrites build new plans.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Iterator, Mapping

from .errors import PlanError
from .expr import Expr, TagRef, conjoin, expr_from_json
from .graph import TypeConstraint

HOMOMORPHISM = "homomorphism"
EDGE_DISTINCT = "edge_distinct"
SEMANTICS = (HOMOMORPHISM, EDGE_DISTINCT)

DIRECTIONS = ("OUT", "IN", "BOTH")
VERTEX_OPTS = ("SRC", "DST", "OTHER")
PATH_OPTS = ("ARBITRARY", "SIMPLE", "TRAIL")
JOIN_TYPES = ("INNER", "LEFT_OUTER", "RIGHT_OUTER", "FULL_OUTER", "SEMI", "ANTI")
AGG_FUNCS = ("COUNT", "COUNT_DISTINCT", "SUM", "AVG", "MIN", "MAX", "FIRST")


def is_hidden(alias: str) -> bool:
    """Generated aliases start with an underscore and are not query output."""
    return alias.startswith("_")


# ---------------------------------------------------------------------------
# graph operators


@dataclass(frozen=True)
class GetVertex:
    alias: str
    types: TypeConstraint = TypeConstraint.all()
    tag: str | None = None
    opt: str | None = None  # None: standalone start/anchor of a sentence

    kind = "GET_VERTEX"


@dataclass(frozen=True)
class ExpandEdge:
    alias: str
    tag: str
    types: TypeConstraint = TypeConstraint.all()
    direction: str = "OUT"

    kind = "EXPAND_EDGE"


@dataclass(frozen=True)
class ExpandPath:
    alias: str
    tag: str
    length: int
    types: TypeConstraint = TypeConstraint.all()
    direction: str = "OUT"
    opt: str = "ARBITRARY"

    kind = "EXPAND_PATH"


GraphOp = GetVertex | ExpandEdge | ExpandPath


# ---------------------------------------------------------------------------
# plan operators


@dataclass(frozen=True)
class MatchPattern:
    """A pattern section.

    ``preds`` and ``columns`` annotate pattern elements by alias: pushed-down
    predicates and the property names retained for them. ``columns`` missing
    an alias means every property is retained. A MATCH_PATTERN with one input
    extends each input record; aliases bound in the input act as anchors and
    ``inherited_edges`` names input edges that take part in edge-distinctness.
    """

    expand_base: tuple[GraphOp, ...]
    preds: Mapping[str, Expr] = field(default_factory=dict)
    columns: Mapping[str, frozenset[str]] = field(default_factory=dict)
    inherited_edges: tuple[str, ...] = ()

    kind = "MATCH_PATTERN"

    def __hash__(self) -> int:
        return hash((self.expand_base, tuple(sorted(self.preds)), self.inherited_edges))


@dataclass(frozen=True)
class Project:
    columns: tuple[tuple[Expr, str], ...]

    kind = "PROJECT"


@dataclass(frozen=True)
class Select:
    condition: Expr

    kind = "SELECT"


@dataclass(frozen=True)
class Order:
    keys: tuple[tuple[Expr, bool], ...]  # (expr, ascending)

    kind = "ORDER"


@dataclass(frozen=True)
class Limit:
    count: int

    kind = "LIMIT"


@dataclass(frozen=True)
class AggCall:
    func: str
    expr: Expr
    alias: str


@dataclass(frozen=True)
class Group:
    keys: tuple[tuple[Expr, str], ...]
    aggs: tuple[AggCall, ...]

    kind = "GROUP"


@dataclass(frozen=True)
class Unfold:
    tag: str
    alias: str

    kind = "UNFOLD"


@dataclass(frozen=True)
class Join:
    keys: tuple[str, ...]
    join_type: str = "INNER"

    kind = "JOIN"


@dataclass(frozen=True)
class Union:
    kind = "UNION"


PlanOp = MatchPattern | Project | Select | Order | Limit | Group | Unfold | Join | Union


@dataclass(frozen=True)
class PlanNode:
    op: PlanOp
    inputs: tuple[int, ...] = ()


@dataclass(frozen=True)
class GirPlan:
    nodes: Mapping[int, PlanNode]
    sink: int
    semantics: str = HOMOMORPHISM

    def __post_init__(self) -> None:
        if self.semantics not in SEMANTICS:
            raise PlanError(f"unknown semantics {self.semantics!r}")

    def node(self, nid: int) -> PlanNode:
        return self.nodes[nid]

    def consumers(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {nid: [] for nid in self.nodes}
        for nid, node in self.nodes.items():
            for child in node.inputs:
                out.setdefault(child, []).append(nid)
        return out

    def topo_order(self) -> list[int]:
        """Inputs before consumers; raises on cycles."""
        order: list[int] = []
        state: dict[int, int] = {}

        def visit(nid: int) -> None:
            mark = state.get(nid, 0)
            if mark == 1:
                raise PlanError(f"cycle through node {nid}")
            if mark == 2:
                return
            state[nid] = 1
            for child in self.nodes[nid].inputs:
                visit(child)
            state[nid] = 2
            order.append(nid)

        visit(self.sink)
        return order

    def reachable(self) -> list[int]:
        return self.topo_order()

    def with_nodes(self, nodes: Mapping[int, PlanNode], sink: int | None = None) -> GirPlan:
        plan = GirPlan(dict(nodes), self.sink if sink is None else sink, self.semantics)
        return plan.compact()

    def compact(self) -> GirPlan:
        """Drop nodes unreachable from the sink."""
        live = set(self.topo_order())
        if live == set(self.nodes):
            return self
        return GirPlan({k: v for k, v in self.nodes.items() if k in live}, self.sink, self.semantics)

    def next_id(self) -> int:
        return max(self.nodes, default=-1) + 1

    def output_columns(self, nid: int | None = None) -> list[str]:
        return output_columns(self, self.sink if nid is None else nid)

    def op_count(self) -> int:
        return len(self.nodes)

    def __iter__(self) -> Iterator[tuple[int, PlanNode]]:
        for nid in self.topo_order():
            yield nid, self.nodes[nid]


# ---------------------------------------------------------------------------
# aliases / columns


def pattern_aliases(op: MatchPattern) -> tuple[list[str], list[str], list[str]]:
    """(vertex aliases, edge aliases, path aliases) in declaration order."""
    vertices: list[str] = []
    edges: list[str] = []
    paths: list[str] = []
    for g in op.expand_base:
        if isinstance(g, GetVertex):
            if g.alias not in vertices:
                vertices.append(g.alias)
        elif isinstance(g, ExpandEdge):
            edges.append(g.alias)
        else:
            paths.append(g.alias)
    return vertices, edges, paths


def output_columns(plan: GirPlan, nid: int) -> list[str]:
    node = plan.nodes[nid]
    op = node.op
    if isinstance(op, MatchPattern):
        base = output_columns(plan, node.inputs[0]) if node.inputs else []
        vs, es, ps = pattern_aliases(op)
        return _merge(base, [a for a in vs + es + ps if not is_hidden(a)])
    if isinstance(op, Project):
        return [alias for _, alias in op.columns]
    if isinstance(op, Group):
        return [alias for _, alias in op.keys] + [a.alias for a in op.aggs]
    if isinstance(op, Join):
        left = output_columns(plan, node.inputs[0])
        if op.join_type in ("SEMI", "ANTI"):
            return left
        return _merge(left, output_columns(plan, node.inputs[1]))
    if isinstance(op, Unfold):
        return _merge(output_columns(plan, node.inputs[0]), [op.alias])
    if isinstance(op, Union):
        return output_columns(plan, node.inputs[0])
    return output_columns(plan, node.inputs[0])


def _merge(a: list[str], b: Iterable[str]) -> list[str]:
    out = list(a)
    for x in b:
        if x not in out:
            out.append(x)
    return out


def available_aliases(plan: GirPlan, nid: int) -> set[str]:
    """Every alias bound in records produced by ``nid`` (hidden ones included)."""
    node = plan.nodes[nid]
    op = node.op
    if isinstance(op, MatchPattern):
        base = available_aliases(plan, node.inputs[0]) if node.inputs else set()
        vs, es, ps = pattern_aliases(op)
        return base | set(vs) | set(es) | set(ps)
    if isinstance(op, (Project, Group)):
        return set(output_columns(plan, nid))
    if isinstance(op, Join):
        left = available_aliases(plan, node.inputs[0])
        if op.join_type in ("SEMI", "ANTI"):
            return left
        return left | available_aliases(plan, node.inputs[1])
    if isinstance(op, Unfold):
        return available_aliases(plan, node.inputs[0]) | {op.alias}
    if isinstance(op, Union):
        return available_aliases(plan, node.inputs[0]) & available_aliases(plan, node.inputs[1])
    return available_aliases(plan, node.inputs[0])


def referenced_tags(op: PlanOp) -> set[str]:
    """Aliases an operator reads from its input records."""
    if isinstance(op, Project):
        return set().union(*(e.tags() for e, _ in op.columns)) if op.columns else set()
    if isinstance(op, Select):
        return op.condition.tags()
    if isinstance(op, Order):
        return set().union(*(e.tags() for e, _ in op.keys)) if op.keys else set()
    if isinstance(op, Group):
        tags: set[str] = set()
        for e, _ in op.keys:
            tags |= e.tags()
        for a in op.aggs:
            tags |= a.expr.tags()
        return tags
    if isinstance(op, Unfold):
        return {op.tag}
    if isinstance(op, Join):
        return set(op.keys)
    return set()


# ---------------------------------------------------------------------------
# builder


class GirBuilder:
    """Fluent construction of GIR plans.

    >>> b = GirBuilder()
    >>> p = b.pattern_start().get_v("a").expand_e("a", "e", direction="OUT").get_v("e", "b", opt="DST").pattern_end()
    >>> plan = p.build()
    >>> plan.nodes[plan.sink].op.kind
    'MATCH_PATTERN'
    """

    def __init__(self, semantics: str = HOMOMORPHISM):
        self.semantics = semantics
        self._nodes: dict[int, PlanNode] = {}

    def _add(self, op: PlanOp, inputs: tuple[int, ...] = ()) -> PlanHandle:
        nid = len(self._nodes)
        self._nodes[nid] = PlanNode(op, inputs)
        return PlanHandle(self, nid)

    def pattern_start(self, input: PlanHandle | None = None) -> PatternBuilder:
        return PatternBuilder(self, input)

    def join(self, left: PlanHandle, right: PlanHandle, keys: Iterable[str], join_type: str = "INNER") -> PlanHandle:
        if join_type not in JOIN_TYPES:
            raise PlanError(f"unknown join type {join_type!r}")
        keys = tuple(keys)
        plan = self._snapshot(left.nid)
        left_cols = available_aliases(plan, left.nid)
        right_cols = available_aliases(self._snapshot(right.nid), right.nid)
        for key in keys:
            if key not in left_cols or key not in right_cols:
                raise PlanError(f"unknown tag {key!r} in join keys")
        return self._add(Join(keys, join_type), (left.nid, right.nid))

    def union(self, left: PlanHandle, right: PlanHandle) -> PlanHandle:
        return self._add(Union(), (left.nid, right.nid))

    def _snapshot(self, sink: int) -> GirPlan:
        return GirPlan(dict(self._nodes), sink, self.semantics)


class PlanHandle:
    """A node under construction; relational operators chain off it."""

    def __init__(self, builder: GirBuilder, nid: int):
        self.builder = builder
        self.nid = nid

    def _check_tags(self, tags: Iterable[str]) -> None:
        avail = available_aliases(self.builder._snapshot(self.nid), self.nid)
        for tag in tags:
            if tag not in avail:
                raise PlanError(f"unknown tag {tag!r}")

    def _then(self, op: PlanOp) -> PlanHandle:
        self._check_tags(referenced_tags(op))
        return self.builder._add(op, (self.nid,))

    def select(self, condition: Expr) -> PlanHandle:
        return self._then(Select(condition))

    def project(self, columns: Iterable[tuple[Expr, str] | str]) -> PlanHandle:
        cols = tuple((TagRef(c), c) if isinstance(c, str) else c for c in columns)
        _unique([a for _, a in cols])
        return self._then(Project(cols))

    def group(self, keys: Iterable[tuple[Expr, str] | str], aggs: Iterable[AggCall]) -> PlanHandle:
        keys = tuple((TagRef(k), k) if isinstance(k, str) else k for k in keys)
        aggs = tuple(aggs)
        for a in aggs:
            if a.func not in AGG_FUNCS:
                raise PlanError(f"unknown aggregate {a.func!r}")
        _unique([a for _, a in keys] + [a.alias for a in aggs])
        return self._then(Group(keys, aggs))

    def order(self, keys: Iterable[tuple[Expr, bool] | str]) -> PlanHandle:
        keys = tuple((TagRef(k), True) if isinstance(k, str) else k for k in keys)
        return self._then(Order(keys))

    def limit(self, count: int) -> PlanHandle:
        if count < 0:
            raise PlanError("LIMIT must be nonnegative")
        return self._then(Limit(count))

    def unfold(self, tag: str, alias: str) -> PlanHandle:
        return self._then(Unfold(tag, alias))

    def build(self) -> GirPlan:
        plan = self.builder._snapshot(self.nid).compact()
        diags = validate(plan)
        if diags:
            raise PlanError("; ".join(diags))
        return plan


def _unique(aliases: list[str]) -> None:
    seen = set()
    for a in aliases:
        if a in seen:
            raise PlanError(f"alias collision on {a!r}")
        seen.add(a)


class PatternBuilder:
    """Collects graph operators between pattern_start and pattern_end."""

    def __init__(self, builder: GirBuilder, input: PlanHandle | None):
        self.builder = builder
        self.input = input
        self.ops: list[GraphOp] = []
        self.preds: dict[str, Expr] = {}
        self.kinds: dict[str, str] = {}
        self.anchored: set[str] = set()
        if input is not None:
            plan = builder._snapshot(input.nid)
            self.anchored = available_aliases(plan, input.nid)

    def _last(self) -> GraphOp:
        if not self.ops:
            raise PlanError("empty tag with no preceding operator")
        return self.ops[-1]

    def _declare(self, alias: str, kind: str) -> None:
        prior = self.kinds.get(alias)
        if prior is not None and (prior != kind or kind != "vertex"):
            raise PlanError(f"alias collision on {alias!r}")
        self.kinds[alias] = kind

    def get_v(
        self,
        tag: str | None = None,
        alias: str | None = None,
        types: TypeConstraint = TypeConstraint.all(),
        opt: str | None = None,
        predicate: Expr | None = None,
    ) -> PatternBuilder:
        # get_v("a") starts a sentence at vertex a
        if alias is None and opt is None:
            tag, alias = None, tag
        if alias is None:
            raise PlanError("GET_VERTEX needs an alias")
        if opt is not None:
            if opt not in VERTEX_OPTS:
                raise PlanError(f"unknown GET_VERTEX opt {opt!r}")
            if tag is None:
                tag = self._last().alias
            if self.kinds.get(tag) not in ("edge", "path"):
                raise PlanError(f"unknown tag {tag!r}")
            src = next(g for g in self.ops if g.alias == tag)
            if opt == "OTHER" and src.direction != "BOTH":
                raise PlanError("GET_VERTEX opt=OTHER is only legal after a BOTH expansion")
            if src.direction == "BOTH" and opt != "OTHER":
                raise PlanError("a BOTH expansion must be closed with opt=OTHER")
            if (src.direction, opt) in (("OUT", "SRC"), ("IN", "DST")):
                raise PlanError(f"GET_VERTEX opt={opt} would rebind the expansion source")
        elif tag is not None:
            raise PlanError("a tagged GET_VERTEX needs opt")
        self._declare(alias, "vertex")
        self.ops.append(GetVertex(alias, types, tag, opt))
        if predicate is not None:
            self.preds[alias] = conjoin([self.preds.get(alias), predicate])
        return self

    def expand_e(
        self,
        tag: str | None,
        alias: str,
        types: TypeConstraint = TypeConstraint.all(),
        direction: str = "OUT",
        predicate: Expr | None = None,
    ) -> PatternBuilder:
        if direction not in DIRECTIONS:
            raise PlanError(f"unknown direction {direction!r}")
        tag = self._vertex_tag(tag)
        self._check_closed()
        self._declare(alias, "edge")
        self.ops.append(ExpandEdge(alias, tag, types, direction))
        if predicate is not None:
            self.preds[alias] = predicate
        return self

    def expand_path(
        self,
        tag: str | None,
        alias: str,
        length: int,
        types: TypeConstraint = TypeConstraint.all(),
        direction: str = "OUT",
        opt: str = "ARBITRARY",
    ) -> PatternBuilder:
        if length < 1:
            raise PlanError("EXPAND_PATH length must be at least 1")
        if opt not in PATH_OPTS:
            raise PlanError(f"unknown path option {opt!r}")
        if direction not in DIRECTIONS:
            raise PlanError(f"unknown direction {direction!r}")
        tag = self._vertex_tag(tag)
        self._check_closed()
        self._declare(alias, "path")
        self.ops.append(ExpandPath(alias, tag, length, types, direction, opt))
        return self

    def _vertex_tag(self, tag: str | None) -> str:
        if tag is None:
            last = self._last()
            if not isinstance(last, GetVertex):
                raise PlanError("empty tag must follow a GET_VERTEX")
            return last.alias
        if self.kinds.get(tag) != "vertex":
            raise PlanError(f"unknown tag {tag!r}")
        return tag

    def _check_closed(self) -> None:
        if self.ops and not isinstance(self.ops[-1], GetVertex):
            raise PlanError(f"expansion {self.ops[-1].alias!r} was never closed by GET_VERTEX")

    def pattern_end(self) -> PlanHandle:
        if not self.ops:
            raise PlanError("empty pattern")
        self._check_closed()
        op = MatchPattern(tuple(self.ops), dict(self.preds))
        inputs = (self.input.nid,) if self.input is not None else ()
        pattern = to_pattern_graph(op)  # raises on disconnection
        if self.input is not None and not (set(pattern.vertices) & self.anchored):
            raise PlanError("an anchored pattern must share a vertex with its input")
        return self.builder._add(op, inputs)


# ---------------------------------------------------------------------------
# pattern graph view


@dataclass(frozen=True)
class PatternVertex:
    alias: str
    types: TypeConstraint = TypeConstraint.all()
    predicate: Expr | None = None
    columns: frozenset[str] | None = None


@dataclass(frozen=True)
class PatternEdge:
    alias: str
    src: str
    dst: str
    types: TypeConstraint = TypeConstraint.all()
    both: bool = False  # BOTH-direction edge: either orientation matches
    predicate: Expr | None = None
    columns: frozenset[str] | None = None


@dataclass(frozen=True)
class PathInfo:
    alias: str
    start: str
    end: str
    vertices: tuple[str, ...]
    edges: tuple[str, ...]
    opt: str


@dataclass(frozen=True)
class PatternGraph:
    vertices: Mapping[str, PatternVertex]
    edges: Mapping[str, PatternEdge]
    paths: tuple[PathInfo, ...] = ()

    def __hash__(self) -> int:
        return hash((tuple(sorted(self.vertices.items())), tuple(sorted(self.edges.items()))))

    def incident(self, alias: str) -> list[PatternEdge]:
        return [e for e in self.edges.values() if alias in (e.src, e.dst)]

    def neighbors(self, alias: str) -> set[str]:
        out = set()
        for e in self.incident(alias):
            out.add(e.dst if e.src == alias else e.src)
        return out

    def is_connected(self, vertices: Iterable[str] | None = None, edges: Iterable[str] | None = None) -> bool:
        vs = set(self.vertices if vertices is None else vertices)
        es = [self.edges[a] for a in (self.edges if edges is None else edges)]
        if not vs:
            return False
        adj: dict[str, set[str]] = {v: set() for v in vs}
        for e in es:
            if e.src in adj and e.dst in adj:
                adj[e.src].add(e.dst)
                adj[e.dst].add(e.src)
        start = min(vs)
        seen = {start}
        stack = [start]
        while stack:
            for n in adj[stack.pop()]:
                if n not in seen:
                    seen.add(n)
                    stack.append(n)
        return seen == vs

    def subpattern(self, vertices: Iterable[str], edges: Iterable[str]) -> PatternGraph:
        vs = set(vertices)
        return PatternGraph(
            {a: v for a, v in self.vertices.items() if a in vs},
            {a: e for a, e in self.edges.items() if a in set(edges)},
        )

    def with_types(self, vtypes: Mapping[str, TypeConstraint], etypes: Mapping[str, TypeConstraint]) -> PatternGraph:
        return PatternGraph(
            {a: replace(v, types=vtypes.get(a, v.types)) for a, v in self.vertices.items()},
            {a: replace(e, types=etypes.get(a, e.types)) for a, e in self.edges.items()},
            self.paths,
        )

    def to_json(self) -> dict:
        return {
            "vertices": [
                {
                    "alias": v.alias,
                    "types": v.types.to_json(),
                    **({"predicate": v.predicate.to_json()} if v.predicate is not None else {}),
                }
                for v in sorted(self.vertices.values(), key=lambda v: v.alias)
            ],
            "edges": [
                {
                    "alias": e.alias,
                    "src": e.src,
                    "dst": e.dst,
                    "types": e.types.to_json(),
                    "direction": "BOTH" if e.both else "OUT",
                    **({"predicate": e.predicate.to_json()} if e.predicate is not None else {}),
                }
                for e in sorted(self.edges.values(), key=lambda e: e.alias)
            ],
        }


def path_vertex(path: str, i: int) -> str:
    return f"_{path}{i}"


def path_edge(path: str, i: int) -> str:
    return f"_{path}_e{i}"


def to_pattern_graph(op: MatchPattern) -> PatternGraph:
    """Graph view of a MATCH_PATTERN; EXPAND_PATH unrolls into single hops."""
    if not isinstance(op, MatchPattern):
        raise PlanError("to_pattern_graph expects a MATCH_PATTERN")
    vtypes: dict[str, TypeConstraint] = {}
    order: list[str] = []
    edges: dict[str, PatternEdge] = {}
    paths: list[PathInfo] = []
    pending: dict[str, GraphOp] = {}

    def add_vertex(alias: str, types: TypeConstraint) -> None:
        if alias not in vtypes:
            vtypes[alias] = types
            order.append(alias)
        else:
            vtypes[alias] = _meet(vtypes[alias], types)

    for g in op.expand_base:
        if isinstance(g, GetVertex):
            add_vertex(g.alias, g.types)
            if g.tag is None:
                continue
            exp = pending.pop(g.tag, None)
            if exp is None:
                raise PlanError(f"unknown tag {g.tag!r}")
            if isinstance(exp, ExpandEdge):
                edges[exp.alias] = _orient(exp.alias, exp.tag, g.alias, exp.direction, exp.types, g.opt)
            else:
                hops = [exp.tag] + [path_vertex(exp.alias, i) for i in range(exp.length - 1)] + [g.alias]
                for mid in hops[1:-1]:
                    add_vertex(mid, TypeConstraint.all())
                hop_edges = []
                for i in range(exp.length):
                    ealias = path_edge(exp.alias, i)
                    edges[ealias] = _orient(ealias, hops[i], hops[i + 1], exp.direction, exp.types, g.opt)
                    hop_edges.append(ealias)
                paths.append(PathInfo(exp.alias, exp.tag, g.alias, tuple(hops), tuple(hop_edges), exp.opt))
        else:
            if g.tag not in vtypes:
                raise PlanError(f"unknown tag {g.tag!r}")
            pending[g.alias] = g
    if pending:
        raise PlanError(f"expansions never closed: {sorted(pending)}")

    vertices = {
        a: PatternVertex(a, vtypes[a], op.preds.get(a), op.columns.get(a)) for a in order
    }
    edges = {
        a: replace(e, predicate=op.preds.get(a), columns=op.columns.get(a)) for a, e in edges.items()
    }
    pattern = PatternGraph(vertices, edges, tuple(paths))
    if not pattern.is_connected():
        raise PlanError("pattern is not connected; use an explicit JOIN for Cartesian products")
    return pattern


def _orient(alias: str, base: str, other: str, direction: str, types: TypeConstraint, opt: str | None) -> PatternEdge:
    if direction == "BOTH":
        return PatternEdge(alias, base, other, types, both=True)
    if direction == "OUT":
        return PatternEdge(alias, base, other, types)
    return PatternEdge(alias, other, base, types)


def _meet(a: TypeConstraint, b: TypeConstraint) -> TypeConstraint:
    if a.is_all:
        return b
    if b.is_all:
        return a
    both = a.names & b.names
    if not both:
        # keep an explicit empty constraint; inference reports it as INVALID
        return TypeConstraint(frozenset())
    return TypeConstraint(both)


def pattern_from_graph(pattern: PatternGraph) -> MatchPattern:
    """Rebuild a MATCH_PATTERN from a pattern graph (paths are not re-folded)."""
    ops: list[GraphOp] = []
    declared: set[str] = set()
    preds: dict[str, Expr] = {}
    columns: dict[str, frozenset[str]] = {}
    for v in pattern.vertices.values():
        if v.predicate is not None:
            preds[v.alias] = v.predicate
        if v.columns is not None:
            columns[v.alias] = v.columns
    for e in pattern.edges.values():
        if e.predicate is not None:
            preds[e.alias] = e.predicate
        if e.columns is not None:
            columns[e.alias] = e.columns
    for e in pattern.edges.values():
        if e.src not in declared:
            ops.append(GetVertex(e.src, pattern.vertices[e.src].types))
            declared.add(e.src)
        else:
            ops.append(GetVertex(e.src, TypeConstraint.all()))
        ops.append(ExpandEdge(e.alias, e.src, e.types, "BOTH" if e.both else "OUT"))
        vt = pattern.vertices[e.dst].types if e.dst not in declared else TypeConstraint.all()
        ops.append(GetVertex(e.dst, vt, e.alias, "OTHER" if e.both else "DST"))
        declared.add(e.dst)
    for a, v in pattern.vertices.items():
        if a not in declared:
            ops.append(GetVertex(a, v.types))
    return MatchPattern(tuple(ops), preds, columns)


# ---------------------------------------------------------------------------
# validation


def validate(plan: GirPlan) -> list[str]:
    """Check plan invariants; returns diagnostics (empty when valid)."""
    diags: list[str] = []
    try:
        order = plan.topo_order()
    except PlanError as exc:
        return [str(exc)]
    except KeyError as exc:
        return [f"dangling input reference {exc}"]
    consumers = plan.consumers()
    for nid in order:
        if nid != plan.sink and not consumers.get(nid):
            diags.append(f"node {nid} has no consumer (multiple sinks)")
    if consumers.get(plan.sink):
        diags.append("sink node has consumers")
    for nid in order:
        node = plan.nodes[nid]
        op = node.op
        expected = {Join: 2, Union: 2, MatchPattern: None}.get(type(op), 1)
        if expected is None:
            if len(node.inputs) > 1:
                diags.append(f"node {nid}: MATCH_PATTERN takes at most one input")
        elif len(node.inputs) != expected:
            diags.append(f"node {nid}: {op.kind} expects {expected} input(s), got {len(node.inputs)}")
            continue
        if isinstance(op, MatchPattern):
            diags.extend(_validate_pattern(plan, nid, op))
            continue
        avail = available_aliases(plan, node.inputs[0])
        if isinstance(op, Join):
            right = available_aliases(plan, node.inputs[1])
            for key in op.keys:
                if key not in avail or key not in right:
                    diags.append(f"node {nid}: join key {key!r} not produced by both inputs")
            shared = (set(output_columns(plan, node.inputs[0])) & set(output_columns(plan, node.inputs[1]))) - set(op.keys)
            if shared and op.join_type not in ("SEMI", "ANTI"):
                diags.append(f"node {nid}: aliases {sorted(shared)} appear on both join sides but are not keys")
            continue
        if isinstance(op, Union):
            left_cols = set(output_columns(plan, node.inputs[0]))
            right_cols = set(output_columns(plan, node.inputs[1]))
            if left_cols != right_cols:
                diags.append(f"node {nid}: UNION inputs have different columns")
            continue
        for tag in sorted(referenced_tags(op)):
            if tag not in avail:
                diags.append(f"node {nid}: {op.kind} references unknown tag {tag!r}")
        if isinstance(op, (Project, Group)):
            aliases = [a for _, a in op.columns] if isinstance(op, Project) else (
                [a for _, a in op.keys] + [a.alias for a in op.aggs]
            )
            seen: set[str] = set()
            for a in aliases:
                if a in seen:
                    diags.append(f"node {nid}: duplicate output alias {a!r}")
                seen.add(a)
        if isinstance(op, Unfold) and op.alias in avail:
            diags.append(f"node {nid}: UNFOLD alias {op.alias!r} already bound")
        if isinstance(op, Limit) and op.count < 0:
            diags.append(f"node {nid}: negative LIMIT")
    return diags


def _validate_pattern(plan: GirPlan, nid: int, op: MatchPattern) -> list[str]:
    diags: list[str] = []
    kinds: dict[str, str] = {}
    for g in op.expand_base:
        kind = "vertex" if isinstance(g, GetVertex) else ("edge" if isinstance(g, ExpandEdge) else "path")
        prior = kinds.get(g.alias)
        if prior is not None and (prior != kind or kind != "vertex"):
            diags.append(f"node {nid}: duplicate alias {g.alias!r} in pattern")
        kinds[g.alias] = kind
        if isinstance(g, ExpandPath) and g.length < 1:
            diags.append(f"node {nid}: EXPAND_PATH {g.alias!r} has length {g.length}")
        if isinstance(g, GetVertex) and g.opt == "OTHER":
            src = next((x for x in op.expand_base if x.alias == g.tag), None)
            if src is None or getattr(src, "direction", None) != "BOTH":
                diags.append(f"node {nid}: opt=OTHER on {g.alias!r} without a BOTH expansion")
    if diags:
        return diags
    try:
        pattern = to_pattern_graph(op)
    except PlanError as exc:
        return [f"node {nid}: {exc}"]
    aliases = set(pattern.vertices) | set(pattern.edges) | {p.alias for p in pattern.paths}
    for alias, pred in op.preds.items():
        if alias not in aliases:
            diags.append(f"node {nid}: predicate on unknown element {alias!r}")
        elif pred.tags() - {alias}:
            diags.append(f"node {nid}: element predicate on {alias!r} reads other tags")
    if plan.nodes[nid].inputs:
        base = available_aliases(plan, plan.nodes[nid].inputs[0])
        if not set(pattern.vertices) & base:
            diags.append(f"node {nid}: anchored pattern shares no vertex with its input")
        clash = (set(pattern.edges) | {p.alias for p in pattern.paths}) & base
        if clash:
            diags.append(f"node {nid}: aliases {sorted(clash)} already bound by the input")
        for e in op.inherited_edges:
            if e not in base:
                diags.append(f"node {nid}: inherited edge {e!r} not bound by the input")
    return diags


# ---------------------------------------------------------------------------
# plan JSON


def _tc(data: Any) -> TypeConstraint:
    return TypeConstraint.from_json(data)


def _graph_op_json(g: GraphOp) -> dict:
    if isinstance(g, GetVertex):
        return {"kind": "GET_VERTEX", "alias": g.alias, "types": g.types.to_json(), "tag": g.tag, "opt": g.opt}
    if isinstance(g, ExpandEdge):
        return {"kind": "EXPAND_EDGE", "alias": g.alias, "tag": g.tag, "types": g.types.to_json(), "direction": g.direction}
    return {
        "kind": "EXPAND_PATH",
        "alias": g.alias,
        "tag": g.tag,
        "types": g.types.to_json(),
        "direction": g.direction,
        "length": g.length,
        "opt": g.opt,
    }


def _graph_op_from_json(d: Mapping) -> GraphOp:
    if d["kind"] == "GET_VERTEX":
        return GetVertex(d["alias"], _tc(d["types"]), d.get("tag"), d.get("opt"))
    if d["kind"] == "EXPAND_EDGE":
        return ExpandEdge(d["alias"], d["tag"], _tc(d["types"]), d["direction"])
    return ExpandPath(d["alias"], d["tag"], d["length"], _tc(d["types"]), d["direction"], d["opt"])


def op_params(op: PlanOp) -> dict:
    if isinstance(op, MatchPattern):
        params: dict[str, Any] = {"expand_base": [_graph_op_json(g) for g in op.expand_base]}
        if op.preds:
            params["preds"] = {a: e.to_json() for a, e in sorted(op.preds.items())}
        if op.columns:
            params["columns"] = {a: sorted(c) for a, c in sorted(op.columns.items())}
        if op.inherited_edges:
            params["inherited_edges"] = list(op.inherited_edges)
        return params
    if isinstance(op, Project):
        return {"columns": [[e.to_json(), a] for e, a in op.columns]}
    if isinstance(op, Select):
        return {"condition": op.condition.to_json()}
    if isinstance(op, Order):
        return {"keys": [[e.to_json(), "ASC" if asc else "DESC"] for e, asc in op.keys]}
    if isinstance(op, Limit):
        return {"count": op.count}
    if isinstance(op, Group):
        return {
            "keys": [[e.to_json(), a] for e, a in op.keys],
            "aggs": [[a.func, a.expr.to_json(), a.alias] for a in op.aggs],
        }
    if isinstance(op, Unfold):
        return {"tag": op.tag, "alias": op.alias}
    if isinstance(op, Join):
        return {"keys": list(op.keys), "join_type": op.join_type}
    return {}


def op_from_json(kind: str, p: Mapping) -> PlanOp:
    if kind == "MATCH_PATTERN":
        return MatchPattern(
            tuple(_graph_op_from_json(g) for g in p["expand_base"]),
            {a: expr_from_json(e) for a, e in p.get("preds", {}).items()},
            {a: frozenset(c) for a, c in p.get("columns", {}).items()},
            tuple(p.get("inherited_edges", ())),
        )
    if kind == "PROJECT":
        return Project(tuple((expr_from_json(e), a) for e, a in p["columns"]))
    if kind == "SELECT":
        return Select(expr_from_json(p["condition"]))
    if kind == "ORDER":
        return Order(tuple((expr_from_json(e), d == "ASC") for e, d in p["keys"]))
    if kind == "LIMIT":
        return Limit(p["count"])
    if kind == "GROUP":
        return Group(
            tuple((expr_from_json(e), a) for e, a in p["keys"]),
            tuple(AggCall(f, expr_from_json(e), a) for f, e, a in p["aggs"]),
        )
    if kind == "UNFOLD":
        return Unfold(p["tag"], p["alias"])
    if kind == "JOIN":
        return Join(tuple(p["keys"]), p["join_type"])
    if kind == "UNION":
        return Union()
    raise PlanError(f"unknown operator kind {kind!r}")


def plan_to_json(plan: GirPlan) -> dict:
    return {
        "semantics": plan.semantics,
        "ops": [
            {"id": nid, "kind": node.op.kind, "params": op_params(node.op), "inputs": list(node.inputs)}
            for nid, node in sorted(plan.nodes.items())
        ],
        "sink": plan.sink,
    }


def plan_from_json(data: Mapping) -> GirPlan:
    nodes = {
        int(o["id"]): PlanNode(op_from_json(o["kind"], o.get("params", {})), tuple(o.get("inputs", ())))
        for o in data["ops"]
    }
    return GirPlan(nodes, int(data["sink"]), data.get("semantics", HOMOMORPHISM))


def dumps(plan: GirPlan) -> str:
    return json.dumps(plan_to_json(plan), sort_keys=True)


def structurally_equal(a: GirPlan, b: GirPlan) -> bool:
    """Equality up to node renumbering."""
    return canonical_form(a) == canonical_form(b)


def canonical_form(plan: GirPlan) -> Any:
    memo: dict[int, Any] = {}

    def walk(nid: int) -> Any:
        if nid not in memo:
            node = plan.nodes[nid]
            memo[nid] = (node.op.kind, json.dumps(op_params(node.op), sort_keys=True), tuple(walk(i) for i in node.inputs))
        return memo[nid]

    return (plan.semantics, walk(plan.sink))
