from __future__ import annotations

import itertools
import random

import pytest
from conftest import cardinality_graph, self_loop_graph
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import naive_count

from gopt_mini import randgen
from gopt_mini.errors import StatisticsError
from gopt_mini.gir import MatchPattern, PatternEdge, PatternGraph, PatternVertex, to_pattern_graph
from gopt_mini.glogue import Glogue, GlogueQuery, build_glogue, canonicalize
from gopt_mini.graph import DataGraph, Edge, TypeConstraint, Vertex
from gopt_mini.parser import parse

T = TypeConstraint


def pattern_of(text: str, ret: str = "v1") -> PatternGraph:
    plan = parse(f"MATCH {text} RETURN {ret}")
    (op,) = [n.op for _, n in plan if isinstance(n.op, MatchPattern)]
    return to_pattern_graph(op)


def simple(vertices: dict, edges: list) -> PatternGraph:
    pv = {a: PatternVertex(a, T.basic(t)) for a, t in vertices.items()}
    pe = {f"e{i}": PatternEdge(f"e{i}", s, d, T.basic(t)) for i, (s, t, d) in enumerate(edges)}
    return PatternGraph(pv, pe)


GOLDEN = (
    "(v1:Person)-[e1:Knows|Purchase]->(v2:Person|Product)-[e2:LocatedIn|ProducedIn]->(v3:Place), "
    "(v1)-[e3:LocatedIn]->(v3)"
)


@pytest.fixture(scope="module")
def card_query():
    g = cardinality_graph()
    return GlogueQuery(build_glogue(g, 3)), g


def test_cardinality_graph_type_counts(card_query):
    gq, _ = card_query
    tf = gq.glogue.type_freq
    assert tf.vertex_counts == {"Person": 5, "Product": 5, "Place": 2}
    per_type = {}
    for (_, t, _), n in tf.triplet_counts.items():
        per_type[t] = per_type.get(t, 0) + n
    assert per_type == {"Knows": 30, "Purchase": 40, "LocatedIn": 2, "ProducedIn": 8}


def test_expand_ratio_golden(card_query):
    gq, _ = card_query
    p = pattern_of(GOLDEN)
    assert gq.expand_ratio(p, "e2", "v3", False) == pytest.approx(1.0)
    assert gq.expand_ratio(p, "e3", "v3", True) == pytest.approx(0.2)


def test_expand_frequency_golden(card_query):
    gq, _ = card_query
    p = pattern_of(GOLDEN)
    base = pattern_of("(v1:Person)-[e1:Knows|Purchase]->(v2:Person|Product)")
    assert gq.get_freq(base) == pytest.approx(70)
    assert gq.expand_frequency(p, ["v1", "v2"], ["e2", "e3"]) == pytest.approx(14)


def test_all_type_vertex_and_edge(card_query):
    gq, g = card_query
    assert gq.get_freq(pattern_of("(v1)")) == len(g.vertices)
    assert gq.edge_freq(gq.edge_universe, gq.vertex_universe, gq.vertex_universe) == len(g.edges)


def test_single_edge_graph():
    g = DataGraph([Vertex(1, "Person", {}), Vertex(2, "Person", {})], [Edge(1, 1, 2, "Knows", {})])
    gl = build_glogue(g, 3)
    code = canonicalize(simple({"a": "Person", "b": "Person"}, [("a", "Knows", "b")]))
    assert gl.lookup(code) == 1


def test_self_loop_counts_are_homomorphisms():
    g = self_loop_graph()
    gl = build_glogue(g, 3)
    one_edge = simple({"a": "Person", "b": "Person"}, [("a", "Knows", "b")])
    two_path = simple({"a": "Person", "b": "Person", "c": "Person"}, [("a", "Knows", "b"), ("b", "Knows", "c")])
    triangle = simple({"a": "Person", "b": "Person", "c": "Person"}, [("a", "Knows", "b"), ("b", "Knows", "c"), ("c", "Knows", "a")])
    assert gl.lookup(canonicalize(one_edge)) == 1
    assert gl.lookup(canonicalize(two_path)) == 1
    # every vertex maps onto the loop vertex, so the triangle also has one homomorphism
    assert gl.lookup(canonicalize(triangle)) == naive_count(triangle, g) == 1


def test_empty_graph_has_no_patterns():
    assert len(build_glogue(DataGraph([], []), 3)) == 0


def test_k_out_of_range():
    with pytest.raises(StatisticsError):
        build_glogue(self_loop_graph(), 5)


def test_canonical_codes():
    tri1 = simple({"a": "A", "b": "A", "c": "B"}, [("a", "E", "b"), ("b", "E", "c"), ("c", "E", "a")])
    tri2 = simple({"x": "B", "y": "A", "z": "A"}, [("y", "E", "z"), ("z", "E", "x"), ("x", "E", "y")])
    assert canonicalize(tri1) == canonicalize(tri2)
    p = simple({"a": "A", "b": "B", "c": "C"}, [("a", "E", "b"), ("b", "E", "c")])
    r = simple({"a": "A", "b": "B", "c": "C"}, [("b", "E", "a"), ("c", "E", "b")])
    assert canonicalize(p) != canonicalize(r)
    with pytest.raises(StatisticsError):
        canonicalize(PatternGraph({"a": PatternVertex("a", T.union(["A", "B"]))}, {}))


def _two_vertex_patterns(vtypes, etypes):
    """Every simple pattern on two vertices: each ordered pair carries at most one edge per type."""
    slots = [("a", e, "b") for e in etypes] + [("b", e, "a") for e in etypes]
    for ta, tb in itertools.product(vtypes, repeat=2):
        for r in range(1, len(slots) + 1):
            for chosen in itertools.combinations(slots, r):
                yield ta, tb, chosen


def test_two_vertex_codes_distinct_up_to_isomorphism():
    def swap(chosen):
        return frozenset(("b" if s == "a" else "a", t, "b" if d == "a" else "a") for s, t, d in chosen)

    seen = {}
    for ta, tb, chosen in _two_vertex_patterns(["A", "B"], ["E", "F"]):
        # a pattern and its vertex-swapped form are the same pattern
        key = min(repr((ta, tb, sorted(chosen))), repr((tb, ta, sorted(swap(chosen)))))
        code = canonicalize(simple({"a": ta, "b": tb}, list(chosen)))
        assert seen.setdefault(code, key) == key


def test_save_load_roundtrip(tmp_path, card_query):
    gq, _ = card_query
    path = tmp_path / "stats.json"
    gq.glogue.save(path)
    again = Glogue.load(path)
    assert again.to_json() == gq.glogue.to_json()
    assert Glogue.from_json(gq.glogue.to_json()).to_json() == gq.glogue.to_json()


def test_union_consistency_two_vertices(card_query):
    gq, g = card_query
    vt, et = ["Person", "Product", "Place"], ["Knows", "Purchase", "LocatedIn", "ProducedIn"]
    for sa, sb, se in [(vt[:2], vt[1:], et), (["Person"], vt, et[:2]), (vt, ["Place"], et[2:])]:
        union = PatternGraph(
            {"a": PatternVertex("a", T.union(sa)), "b": PatternVertex("b", T.union(sb))},
            {"e": PatternEdge("e", "a", "b", T.union(se))},
        )
        total = sum(
            gq.get_freq(simple({"a": x, "b": y}, [("a", t, "b")])) for x in sa for y in sb for t in se
        )
        assert gq.get_freq(union) == pytest.approx(total)


def test_predicate_selectivity(card_query):
    gq, _ = card_query
    base = gq.get_freq(pattern_of("(v1:Person)-[e1:Knows]->(v2)"))
    filtered = gq.get_freq(pattern_of("(v1:Person {id: 1})-[e1:Knows]->(v2)"))
    assert filtered == pytest.approx(base * 0.1)


def test_memo_is_permutation_invariant(card_query):
    gq, _ = card_query
    a = pattern_of("(v1:Person)-[e1:Knows]->(v2:Person)-[e2:Purchase]->(v3:Product)-[e4:ProducedIn]->(v4:Place)")
    b = pattern_of("(x4:Place)<-[f4:ProducedIn]-(x3:Product)<-[f2:Purchase]-(x2:Person)<-[f1:Knows]-(x1:Person)", "x4")
    assert gq.get_freq(a) == gq.get_freq(b) == gq.get_freq(a)


def test_zero_type_gives_zero(card_query):
    gq, _ = card_query
    # Place has no outgoing edges in this graph
    assert gq.get_freq(pattern_of("(v1:Place)-[e:Knows]->(v2:Person)")) == 0


def is_simple(p: PatternGraph) -> bool:
    pairs = [frozenset((e.src, e.dst)) for e in p.edges.values()]
    return all(len(x) == 2 for x in pairs) and len(set(pairs)) == len(pairs)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1_000_000))
def test_exact_within_k(seed):
    rng = random.Random(seed)
    schema = randgen.random_schema(rng, rng.randint(1, 3), rng.randint(1, 3))
    g = randgen.random_graph(rng, schema, rng.randint(2, 20), rng.randint(0, 40))
    gq = GlogueQuery(build_glogue(g, 3), schema.vertex_types, schema.edge_types)
    for _ in range(6):
        p = randgen.random_pattern(rng, schema, 3, both_prob=0.0)
        if not is_simple(p):
            continue
        assert gq.get_freq(p) == pytest.approx(naive_count(p, g))
