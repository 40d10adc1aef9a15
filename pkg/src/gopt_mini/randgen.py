"""Random schemas, conforming graphs, patterns and plans for property tests."""

from __future__ import annotations

import random
from typing import Sequence

from .expr import BoolOp, Compare, Literal, PropAccess, TagRef
from .gir import AggCall, GirBuilder, GirPlan, PatternEdge, PatternGraph, PatternVertex
from .graph import DataGraph, Edge, GraphSchema, TypeConstraint, Vertex

NAMES = ("a", "b", "c", "d")


def random_schema(rng: random.Random, n_vtypes: int = 3, n_etypes: int = 3) -> GraphSchema:
    vtypes = [f"V{i}" for i in range(n_vtypes)]
    triplets = set()
    etypes = [f"E{i}" for i in range(n_etypes)]
    for et in etypes:
        for _ in range(rng.randint(1, 2)):
            triplets.add((rng.choice(vtypes), et, rng.choice(vtypes)))
    return GraphSchema(
        frozenset(vtypes),
        frozenset(triplets),
        {t: {"id": "int", "x": "int", "name": "string"} for t in vtypes},
        {t: {"w": "int"} for t in etypes},
    )


def random_graph(
    rng: random.Random,
    schema: GraphSchema,
    n_vertices: int = 20,
    n_edges: int = 40,
    loops: bool = True,
) -> DataGraph:
    """Graph conforming to ``schema``; may contain parallel edges and self-loops."""
    vtypes = sorted(schema.vertex_types)
    vertices = []
    by_type: dict[str, list[int]] = {t: [] for t in vtypes}
    for i in range(n_vertices):
        t = vtypes[i % len(vtypes)] if i < len(vtypes) else rng.choice(vtypes)
        vertices.append(Vertex(i, t, {"id": i, "x": rng.randint(0, 4), "name": rng.choice(NAMES)}))
        by_type[t].append(i)
    triplets = [t for t in sorted(schema.edge_triplets) if by_type[t[0]] and by_type[t[2]]]
    edges = []
    if triplets:
        for j in range(n_edges):
            src_t, et, dst_t = rng.choice(triplets)
            s = rng.choice(by_type[src_t])
            d = rng.choice(by_type[dst_t])
            if s == d and not loops:
                continue
            edges.append(Edge(len(edges), s, d, et, {"w": rng.randint(0, 4)}))
    return DataGraph(vertices, edges)


def _constraint(rng: random.Random, names: Sequence[str]) -> TypeConstraint:
    r = rng.random()
    if r < 0.4 or len(names) < 2:
        return TypeConstraint.all() if r < 0.2 else TypeConstraint.basic(rng.choice(names))
    if r < 0.7:
        return TypeConstraint.union(rng.sample(list(names), rng.randint(2, len(names))))
    return TypeConstraint.basic(rng.choice(names))


def random_predicate(rng: random.Random, alias: str, vertex: bool):
    if vertex:
        if rng.random() < 0.15:
            return Compare("=", PropAccess(alias, "id"), Literal(rng.randint(0, 19)))
        if rng.random() < 0.5:
            return Compare("=", PropAccess(alias, "name"), Literal(rng.choice(NAMES)))
        return Compare(rng.choice(["<", ">=", "="]), PropAccess(alias, "x"), Literal(rng.randint(0, 4)))
    return Compare(rng.choice(["<", ">="]), PropAccess(alias, "w"), Literal(rng.randint(1, 3)))


def random_pattern(
    rng: random.Random,
    schema: GraphSchema,
    max_vertices: int = 4,
    extra_edges: int = 2,
    both_prob: float = 0.15,
    pred_prob: float = 0.0,
    loop_prob: float = 0.05,
    min_vertices: int = 1,
) -> PatternGraph:
    """Connected pattern: a random spanning tree plus a few extra edges."""
    n = rng.randint(min_vertices, max_vertices)
    vnames = sorted(schema.vertex_types)
    enames = sorted(schema.edge_types)
    aliases = [f"v{i}" for i in range(n)]
    vertices = {}
    for a in aliases:
        pred = random_predicate(rng, a, True) if rng.random() < pred_prob else None
        vertices[a] = PatternVertex(a, _constraint(rng, vnames), pred)
    pairs = []
    for i in range(1, n):
        j = rng.randrange(i)
        pairs.append((aliases[j], aliases[i]) if rng.random() < 0.5 else (aliases[i], aliases[j]))
    for _ in range(rng.randint(0, extra_edges)):
        if rng.random() < loop_prob:
            a = rng.choice(aliases)
            pairs.append((a, a))
        elif n >= 2:
            a, b = rng.sample(aliases, 2)
            pairs.append((a, b))
    edges = {}
    for k, (s, d) in enumerate(pairs):
        alias = f"e{k}"
        pred = random_predicate(rng, alias, False) if rng.random() < pred_prob else None
        both = rng.random() < both_prob
        edges[alias] = PatternEdge(alias, s, d, _constraint(rng, enames), both, pred)
    return PatternGraph(vertices, edges)


def basic_pattern(rng: random.Random, graph_types: Sequence[str], edge_types: Sequence[str], n: int, extra: int) -> PatternGraph:
    """Connected pattern whose elements all carry basic types."""
    aliases = [f"v{i}" for i in range(n)]
    vertices = {a: PatternVertex(a, TypeConstraint.basic(rng.choice(graph_types))) for a in aliases}
    pairs = []
    for i in range(1, n):
        j = rng.randrange(i)
        pairs.append((aliases[j], aliases[i]) if rng.random() < 0.5 else (aliases[i], aliases[j]))
    for _ in range(extra):
        if n >= 2:
            a, b = rng.sample(aliases, 2)
            pairs.append((a, b))
    edges = {f"e{k}": PatternEdge(f"e{k}", s, d, TypeConstraint.basic(rng.choice(edge_types))) for k, (s, d) in enumerate(pairs)}
    return PatternGraph(vertices, edges)


def pattern_plan(pattern: PatternGraph, semantics: str):
    """(builder, handle) for a plan holding one MATCH_PATTERN of ``pattern``."""
    b = GirBuilder(semantics)
    pb = b.pattern_start()
    declared: set[str] = set()
    for e in pattern.edges.values():
        if e.src not in declared:
            v = pattern.vertices[e.src]
            pb.get_v(e.src, types=v.types, predicate=v.predicate)
            declared.add(e.src)
        else:
            pb.get_v(e.src)
        pb.expand_e(e.src, e.alias, e.types, "BOTH" if e.both else "OUT", e.predicate)
        v = pattern.vertices[e.dst]
        first = e.dst not in declared
        pb.get_v(
            e.alias,
            e.dst,
            v.types if first else TypeConstraint.all(),
            "OTHER" if e.both else "DST",
            v.predicate if first else None,
        )
        declared.add(e.dst)
    for a, v in pattern.vertices.items():
        if a not in declared:
            pb.get_v(a, types=v.types, predicate=v.predicate)
    return b, pb.pattern_end()


def random_query(rng: random.Random, schema: GraphSchema, semantics: str, max_vertices: int = 4) -> GirPlan:
    """A pattern followed by a random relational tail.

    Predicates are applied as SELECT over the pattern so rewrite rules have
    something to push, and some plans split the pattern into a JOIN of two
    MATCH_PATTERNs sharing vertices.
    """
    pattern = random_pattern(rng, schema, max_vertices, pred_prob=0.0)
    aliases = sorted(pattern.vertices)
    shape = rng.random()
    if shape < 0.3 and len(pattern.edges) >= 2:
        handle, b = _split_join(rng, pattern, semantics)
    else:
        b, handle = pattern_plan(pattern, semantics)
    if rng.random() < 0.7:
        conds = [random_predicate(rng, a, True) for a in rng.sample(aliases, min(len(aliases), rng.randint(1, 2)))]
        if pattern.edges and rng.random() < 0.4:
            conds.append(random_predicate(rng, rng.choice(sorted(pattern.edges)), False))
        if len(aliases) >= 2 and rng.random() < 0.3:
            x, y = rng.sample(aliases, 2)
            conds.append(Compare("<=", PropAccess(x, "x"), PropAccess(y, "x")))
        handle = handle.select(conds[0] if len(conds) == 1 else BoolOp("AND", tuple(conds)))
    tail = rng.random()
    if tail < 0.3:
        key = rng.choice(aliases)
        other = rng.choice(aliases)
        if pattern.edges and rng.random() < 0.5:
            # neighbour count shape: group an edge's source, count its targets
            e = pattern.edges[rng.choice(sorted(pattern.edges))]
            key, other = e.src, e.dst
        func = rng.choice(["COUNT", "COUNT_DISTINCT"])
        handle = handle.group([key], [AggCall(func, TagRef(other), "cnt")])
        if rng.random() < 0.5:
            handle = handle.order([(TagRef("cnt"), False), (TagRef(key), True)]).limit(rng.randint(0, 5))
    elif tail < 0.6:
        cols = rng.sample(aliases, rng.randint(1, len(aliases)))
        handle = handle.project([(TagRef(c), c) for c in cols] + [(PropAccess(cols[0], "name"), "nm")])
    elif tail < 0.75:
        handle = handle.order([(PropAccess(aliases[0], "x"), rng.random() < 0.5)]).limit(rng.randint(1, 8))
    return handle.build()


def _split_join(rng: random.Random, pattern: PatternGraph, semantics: str):
    """Split the edges into two connected halves and JOIN them on shared vertices."""
    edges = sorted(pattern.edges)
    for _ in range(20):
        k = rng.randint(1, len(edges) - 1)
        left = set(rng.sample(edges, k))
        right = set(edges) - left
        lv = {x for a in left for x in (pattern.edges[a].src, pattern.edges[a].dst)}
        rv = {x for a in right for x in (pattern.edges[a].src, pattern.edges[a].dst)}
        if lv | rv != set(pattern.vertices) or not (lv & rv):
            continue
        if not (pattern.is_connected(lv, left) and pattern.is_connected(rv, right)):
            continue
        b = GirBuilder(semantics)
        handles = []
        for vs, es in ((lv, left), (rv, right)):
            sub = pattern.subpattern(vs, es)
            _, h = pattern_plan(sub, semantics)
            # replay into the shared builder
            handles.append(_copy_into(b, h))
        return b.join(handles[0], handles[1], sorted(lv & rv)), b
    b, h = pattern_plan(pattern, semantics)
    return h, b


def _copy_into(b: GirBuilder, handle):
    src = handle.builder._nodes[handle.nid].op
    return b._add(src)
