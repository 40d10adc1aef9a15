from __future__ import annotations

import random

import pytest
from conftest import TRIANGLE_QUERY, cardinality_graph, divergence_graph
from hypothesis import given, settings
from hypothesis import strategies as st

from gopt_mini import randgen
from gopt_mini.cbo import (
    PROFILES,
    BackendProfile,
    BinaryJoin,
    Optimizer,
    VertexExpansion,
    cost_expand_intersect,
    cost_expand_into,
    cost_join,
    get_cands,
    greedy_initial,
    optimize_pattern,
)
from gopt_mini.errors import OptimizerError
from gopt_mini.executor import execute
from gopt_mini.gir import MatchPattern, PatternGraph, to_pattern_graph
from gopt_mini.glogue import GlogueQuery, build_glogue
from gopt_mini.graph import DataGraph, Edge, Vertex
from gopt_mini.parser import parse
from gopt_mini.physical import ExpandStep, JoinStep, ScanStep, lower, step_text

INTO, INTERSECT = PROFILES["into"], PROFILES["intersect"]


def parsed(text: str):
    plan = parse(text)
    (nid,) = [i for i, n in plan if isinstance(n.op, MatchPattern)]
    return plan, nid, to_pattern_graph(plan.nodes[nid].op)


def pattern_of(text: str) -> PatternGraph:
    return parsed(text)[2]


def innermost_scan(step):
    while not isinstance(step, ScanStep):
        step = step.child if hasattr(step, "child") else step.left
    return step.vertex


@pytest.fixture(scope="module")
def card_gq():
    return GlogueQuery(build_glogue(cardinality_graph(), 3))


def test_triangle_candidates(card_gq):
    cands = get_cands(pattern_of("MATCH (a)-[e1]->(b), (b)-[e2]->(c), (a)-[e3]->(c) RETURN a"), card_gq)
    ves = [t for t in cands if isinstance(t, VertexExpansion)]
    joins = [t for t in cands if isinstance(t, BinaryJoin)]
    assert sorted(t.vertex for t in ves) == ["a", "b", "c"]
    assert all(len(t.edges) == 2 for t in ves)
    assert len(joins) == 3
    assert all(sorted([len(t.left[1]), len(t.right[1])]) == [1, 2] for t in joins)


def test_single_edge_candidates(card_gq):
    cands = get_cands(pattern_of("MATCH (a)-[e]->(b) RETURN a"), card_gq)
    assert len(cands) == 2 and all(isinstance(t, VertexExpansion) for t in cands)


def test_path_candidates_include_middle_split(card_gq):
    p = pattern_of("MATCH (v0)-[e1]->(v1)-[e2]->(v2)-[e3]->(v3)-[e4]->(v4)-[e5]->(v5) RETURN v0")
    joins = [t for t in get_cands(p, card_gq) if isinstance(t, BinaryJoin)]
    assert {t.keys for t in joins} == {("v1",), ("v2",), ("v3",), ("v4",)}
    sizes = {tuple(sorted((len(t.left[1]), len(t.right[1])))) for t in joins}
    assert (2, 3) in sizes


def test_disconnected_rejected(card_gq):
    p = pattern_of("MATCH (a)-[e]->(b) RETURN a")
    bad = PatternGraph({**p.vertices, **pattern_of("MATCH (c) RETURN c").vertices}, p.edges)
    with pytest.raises(OptimizerError):
        get_cands(bad, card_gq)


def test_cost_formulas():
    assert cost_join(10, 20, INTO) == 30
    assert cost_join(10, 20, INTO.with_options(alpha={"join": 2.0})) == 60
    assert cost_expand_intersect(2, 70, INTERSECT) == 140
    assert cost_expand_intersect(1, 70, INTERSECT) == 70
    assert cost_expand_into([5, 7], INTO) == 12
    with pytest.raises(OptimizerError):
        INTO.with_options(alpha={"join": -1.0}).a("join")


def test_expand_into_single_edge_cost(card_gq):
    p = pattern_of("MATCH (v1:Person)-[e1:Knows]->(v2:Person) RETURN v1")
    opt = Optimizer(p, card_gq, INTO)
    (t,) = [c for c in opt.space.candidates(opt.space.full()) if c.vertex == "v2"]
    assert opt.model.local(t, opt.space.full()) == pytest.approx(card_gq.get_freq(p))


def test_into_cost_matches_executed_rows():
    g = divergence_graph()
    gq = GlogueQuery(build_glogue(g, 3))
    plan, nid, p = parsed(TRIANGLE_QUERY)
    opt = Optimizer(p, gq, INTO)
    full = opt.space.full()
    (t,) = [c for c in opt.space.candidates(full) if isinstance(c, VertexExpansion) and c.vertex == "c"]
    cost = opt.model.local(t, full)
    # scan a, expand to b, then close c with the two edges edge by edge
    step = ExpandStep(ExpandStep(ScanStep("a", ()), "b", ("e1",)), "c", t.edges)
    phys = lower(plan, {nid: p}, {nid: step}, "into")
    _, stats = execute(phys, g)
    order = phys.topo_order()
    last_getv = max(i for i in order if phys.ops[i].kind == "GetV")
    close = [i for i in order if phys.ops[i].kind == "ExpandInto"]
    assert len(close) == 1
    # rows after the first edge to c plus rows after closing the second edge
    assert cost == pytest.approx(stats.rows[last_getv] + stats.rows[close[0]])


def test_greedy_single_vertex(card_gq):
    step, cost = greedy_initial(pattern_of("MATCH (v:Person) RETURN v"), card_gq, INTO)
    assert isinstance(step, ScanStep) and cost == 5


def test_greedy_starts_at_rare_vertex():
    rng = random.Random(1)
    vs = [Vertex(0, "R", {})] + [Vertex(i, "A", {}) for i in range(1, 31)]
    es = [Edge(i - 1, 0, i, "E", {}) for i in range(1, 31)]
    for _ in range(200):
        es.append(Edge(len(es), rng.randint(1, 30), rng.randint(1, 30), "E", {}))
    gq = GlogueQuery(build_glogue(DataGraph(vs, es), 3))
    p = pattern_of("MATCH (a:A)-[e1:E]->(b:A), (z:R)-[e2:E]->(a), (z)-[e3:E]->(b) RETURN a")
    for prof in PROFILES.values():
        step, _ = greedy_initial(p, gq, prof)
        assert innermost_scan(step) == "z"


def test_backends_choose_different_plans():
    g = divergence_graph()
    gq = GlogueQuery(build_glogue(g, 3))
    _, _, p = parsed(TRIANGLE_QUERY)
    into = optimize_pattern(p, gq, INTO).step
    inter = optimize_pattern(p, gq, INTERSECT).step
    assert isinstance(into, JoinStep)
    assert not isinstance(inter, JoinStep) and len(inter.edges) == 2


def test_off_center_path_join():
    rng = random.Random(0)
    nm = 20
    vs = [Vertex(0, "S", {})] + [Vertex(i, "M", {}) for i in range(1, nm + 1)]
    vs += [Vertex(100 + i, "T", {}) for i in range(rng.choice([5, 50]))]
    es = [Edge(k, 0, rng.randint(1, nm), "E", {}) for k in range(rng.choice([2, 5]))]
    for _ in range(rng.choice([40, 80, 150])):
        es.append(Edge(len(es), rng.randint(1, nm), rng.randint(1, nm), "E", {}))
    for v in vs[nm + 1:]:
        es.append(Edge(len(es), rng.randint(1, nm), v.id, "F", {}))
    gq = GlogueQuery(build_glogue(DataGraph(vs, es), 3))
    p = pattern_of("MATCH (s:S)-[e1:E]->(a:M)-[e2:E]->(b:M)-[e3:E]->(c:M)-[e4:E]->(d:M)-[e5:F]->(t:T) RETURN s")
    step = optimize_pattern(p, gq, INTO).step
    assert isinstance(step, JoinStep)
    assert step.keys not in (("b",), ("c",))  # the two central cut vertices


def test_distributed_adds_communication(card_gq):
    p = pattern_of("MATCH (v1:Person)-[e1:Knows]->(v2:Person)-[e2:Purchase]->(v3:Product) RETURN v1")
    local = optimize_pattern(p, card_gq, INTO).cost
    dist = optimize_pattern(p, card_gq, INTO.with_options(distributed=True)).cost
    assert dist > local


def test_ties_are_deterministic(card_gq):
    p = pattern_of("MATCH (a:Person)-[e1:Knows]->(b:Person), (b)-[e2:Knows]->(c:Person) RETURN a")
    texts = {step_text(optimize_pattern(p, card_gq, INTO).step) for _ in range(3)}
    assert len(texts) == 1


def _random_case(seed: int):
    rng = random.Random(seed)
    schema = randgen.random_schema(rng, rng.randint(1, 3), rng.randint(1, 3))
    g = randgen.random_graph(rng, schema, rng.randint(5, 30), rng.randint(10, 80))
    gq = GlogueQuery(build_glogue(g, 3), schema.vertex_types, schema.edge_types)
    p = randgen.random_pattern(rng, schema, rng.randint(1, 5))
    prof = rng.choice([INTO, INTERSECT, INTO.with_options(distributed=True)])
    return gq, p, prof, g


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 1_000_000))
def test_pruning_safe_and_greedy_bound(seed):
    gq, p, prof, _ = _random_case(seed)
    pruned = optimize_pattern(p, gq, prof, True)
    full = optimize_pattern(p, gq, prof, False)
    assert pruned.cost == pytest.approx(full.cost, rel=1e-9)
    assert pruned.cost <= pruned.greedy_cost * (1 + 1e-9)
    assert pruned.explored <= full.explored


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1_000_000))
def test_memo_entries_optimal(seed):
    gq, p, prof, _ = _random_case(seed)
    opt = Optimizer(p, gq, prof, pruning=False)
    opt.seed()
    opt.solve(opt.space.full())
    for sub, (cost, _) in opt.memo.items():
        alone = optimize_pattern(p.subpattern(*sub), gq, prof, False).cost
        assert cost == pytest.approx(alone, rel=1e-9)


def test_profile_is_frozen():
    assert isinstance(INTO, BackendProfile) and INTO.expand == "into" and INTERSECT.expand == "intersect"


def test_divergence_rows_favour_own_plan():
    g = divergence_graph()
    gq = GlogueQuery(build_glogue(g, 3))
    plan, nid, p = parsed(TRIANGLE_QUERY)
    steps = {k: optimize_pattern(p, gq, PROFILES[k]).step for k in PROFILES}
    rows = {}
    for chosen, step in steps.items():
        for engine in PROFILES:
            _, stats = execute(lower(plan, {nid: p}, {nid: step}, engine), g)
            rows[chosen, engine] = stats.total
    assert rows["into", "into"] < rows["intersect", "into"]
    assert rows["intersect", "intersect"] < rows["into", "intersect"]
