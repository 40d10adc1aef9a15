"""Generated cases for rule soundness checks.

Each rule gets a plan generator biased towards plans the rule can rewrite, and
``check_rule`` compares the rewritten plan's results with the original's.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from gopt_mini import randgen, rbo
from gopt_mini.cbo import PROFILES
from gopt_mini.executor import evaluate_gir, execute
from gopt_mini.expr import BoolOp, Compare, Literal, PropAccess, TagRef
from gopt_mini.gir import AggCall, GirBuilder, PatternEdge, PatternGraph, PatternVertex, output_columns
from gopt_mini.graph import TypeConstraint
from gopt_mini.oracle import result_multiset
from gopt_mini.physical import lower

LOGICAL_RULES = rbo.RULE_NAMES[:5]
PHYSICAL_RULES = rbo.RULE_NAMES[5:]


@dataclass
class RuleCase:
    plan: object
    schema: object
    graph: object
    profile: str


@dataclass
class Outcome:
    ok: bool
    fired: bool
    rows_before: int = 0
    rows_after: int = 0
    detail: str = ""


def _degree_query(rng: random.Random, schema, semantics: str):
    """One hop grouped by its source, counting distinct neighbours."""
    s, et, d = rng.choice(sorted(schema.edge_triplets))
    out = rng.random() < 0.7
    src_types = TypeConstraint.basic(s if out else d) if rng.random() < 0.7 else TypeConstraint.all()
    pb = GirBuilder(semantics).pattern_start().get_v("a", types=src_types)
    pb = pb.expand_e("a", "e", TypeConstraint.basic(et), "OUT" if out else "IN")
    h = pb.get_v("e", "b", TypeConstraint.all(), "DST" if out else "SRC").pattern_end()
    if rng.random() < 0.4:
        h = h.select(randgen.random_predicate(rng, "a", True))
    func = "COUNT_DISTINCT" if rng.random() < 0.85 else "COUNT"
    h = h.group(["a"], [AggCall(func, TagRef("b"), "cnt")])
    if rng.random() < 0.5:
        h = h.order([(TagRef("cnt"), False), (TagRef("a"), True)]).limit(rng.randint(1, 5))
    return h.build()


def _pk_query(rng: random.Random, schema, semantics: str):
    """A pattern whose first vertex is pinned by an id equality."""
    pattern = randgen.random_pattern(rng, schema, 3)
    _, h = randgen.pattern_plan(pattern, semantics)
    first = next(iter(pattern.vertices))
    lhs, rhs = PropAccess(first, "id"), Literal(rng.randint(0, 19))
    cond = Compare("=", lhs, rhs) if rng.random() < 0.7 else Compare("=", rhs, lhs)
    if rng.random() < 0.3:
        cond = BoolOp("AND", (cond, randgen.random_predicate(rng, first, True)))
    h = h.select(cond)
    if rng.random() < 0.5:
        aliases = sorted(pattern.vertices)
        h = h.project([(TagRef(a), a) for a in aliases] + [(PropAccess(first, "name"), "nm")])
    return h.build()


def _union_query(rng: random.Random, schema, semantics: str):
    """UNION of two patterns sharing a prefix and differing in one appended hop."""
    prefix = randgen.random_pattern(rng, schema, 3, extra_edges=1, both_prob=0.0, loop_prob=0.0)
    anchor = rng.choice(sorted(prefix.vertices))
    vnames = sorted(schema.vertex_types)
    enames = sorted(schema.edge_types)
    b = GirBuilder(semantics)
    branches = []
    for _ in range(2):
        src, dst = (anchor, "vx") if rng.random() < 0.5 else ("vx", anchor)
        vx = PatternVertex("vx", TypeConstraint.basic(rng.choice(vnames)))
        ex = PatternEdge("ex", src, dst, TypeConstraint.basic(rng.choice(enames)))
        branch = PatternGraph({**prefix.vertices, "vx": vx}, {**prefix.edges, "ex": ex})
        _, h = randgen.pattern_plan(branch, semantics)
        branches.append(b._add(h.builder._nodes[h.nid].op))
    h = b.union(branches[0], branches[1])
    if rng.random() < 0.5:
        h = h.group([anchor], [AggCall("COUNT", TagRef("vx"), "cnt")])
    return h.build()


def _join_query(rng: random.Random, schema, semantics: str):
    """Two patterns joined on shared vertices, filtered above the join."""
    pattern = randgen.random_pattern(rng, schema, 4, min_vertices=3, loop_prob=0.0)
    if len(pattern.edges) < 2:
        return randgen.random_query(rng, schema, semantics)
    h, _ = randgen._split_join(rng, pattern, semantics)
    aliases = sorted(pattern.vertices)
    conds = [randgen.random_predicate(rng, a, True) for a in rng.sample(aliases, rng.randint(1, 2))]
    if rng.random() < 0.3:
        conds.append(randgen.random_predicate(rng, rng.choice(sorted(pattern.edges)), False))
    h = h.select(conds[0] if len(conds) == 1 else BoolOp("AND", tuple(conds)))
    if rng.random() < 0.5:
        cols = rng.sample(aliases, rng.randint(1, len(aliases)))
        h = h.project([(TagRef(c), c) for c in cols])
    return h.build()


def _generic_query(rng: random.Random, schema, semantics: str):
    return randgen.random_query(rng, schema, semantics)


GENERATORS = {
    "FilterIntoJoin": [_join_query],
    "FilterIntoPattern": [_generic_query],
    "FieldTrim": [_generic_query],
    "JoinToPattern": [_join_query],
    "ComSubPattern": [_union_query, _join_query],
    "EVFusion": [_generic_query, _degree_query],
    "DegFusion": [_degree_query],
    "PKIndex": [_pk_query],
    "LateProject": [_generic_query, _pk_query],
}


def make_case(rule: str, seed: int) -> RuleCase:
    rng = random.Random(seed)
    schema = randgen.random_schema(rng)
    graph = randgen.random_graph(rng, schema, rng.randint(5, 25), rng.randint(5, 50))
    gated = rbo.RULES_BY_NAME[rule].semantics
    semantics = rng.choice(sorted(gated))
    gen = rng.choice(GENERATORS[rule])
    plan = gen(rng, schema, semantics)
    profile = "into" if rule in ("PKIndex", "LateProject") else rng.choice(["into", "intersect"])
    return RuleCase(plan, schema, graph, profile)


def _prepare(rule: str, case: RuleCase, ctx):
    """Plan in the state the rule sees inside the default pipeline."""
    if rule in LOGICAL_RULES:
        return case.plan
    logical = rbo.apply(case.plan, rbo.default_dag(LOGICAL_RULES), ctx)
    phys = lower(logical, expand_impl=PROFILES[case.profile].expand)
    before = PHYSICAL_RULES[: PHYSICAL_RULES.index(rule)]
    return rbo.apply(phys, rbo.default_dag(before), ctx) if before else phys


def check_rule(rule: str, case: RuleCase) -> Outcome:
    """Run ``rule`` to its fixpoint and compare results with the unrewritten plan."""
    ctx = rbo.RuleContext(case.schema, PROFILES[case.profile])
    columns = output_columns(case.plan, case.plan.sink)
    expected = result_multiset(evaluate_gir(case.plan, case.graph), columns)
    before = _prepare(rule, case, ctx)
    trace: list = []
    after = rbo.apply(before, rbo.default_dag([rule]), ctx, trace)
    fired = bool(trace)
    if rule in LOGICAL_RULES:
        if result_multiset(evaluate_gir(after, case.graph), columns) != expected:
            return Outcome(False, fired, detail="reference evaluation differs")
        before_phys = lower(before, expand_impl=PROFILES[case.profile].expand)
        after_phys = lower(after, expand_impl=PROFILES[case.profile].expand)
    else:
        before_phys, after_phys = before, after
    recs_before, stats_before = execute(before_phys, case.graph)
    recs_after, stats_after = execute(after_phys, case.graph)
    ok = result_multiset(recs_after, columns) == expected and result_multiset(recs_before, columns) == expected
    return Outcome(ok, fired, stats_before.total, stats_after.total, "" if ok else "executed results differ")
