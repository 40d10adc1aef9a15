"""Rule-based optimization: rule registry, default strategy graph, and
one function per rule that applies it to a fixpoint."""

from __future__ import annotations

from ..gir import SEMANTICS
from .engine import (
    LOGICAL,
    PHYSICAL,
    Rule,
    RuleContext,
    Strategy,
    StrategyDag,
    TraceEntry,
    apply,
    logical_measure,
    parse_rule_list,
    physical_measure,
    single_rule,
)
from .logical import (
    com_sub_pattern_step,
    field_trim_step,
    filter_into_join_step,
    filter_into_pattern_step,
    join_to_pattern_step,
    liveness,
)
from .physical import deg_fusion_step, eager_fetches, ev_fusion_step, indexable, late_project_step, pk_index_step

HOMOMORPHISM_ONLY = frozenset({"homomorphism"})
ALL = frozenset(SEMANTICS)

FILTER_INTO_JOIN = Rule("FilterIntoJoin", LOGICAL, filter_into_join_step)
FILTER_INTO_PATTERN = Rule("FilterIntoPattern", LOGICAL, filter_into_pattern_step)
FIELD_TRIM = Rule("FieldTrim", LOGICAL, field_trim_step)
# merging two patterns changes which edges must be distinct from each other
JOIN_TO_PATTERN = Rule("JoinToPattern", LOGICAL, join_to_pattern_step, HOMOMORPHISM_ONLY)
COM_SUB_PATTERN = Rule("ComSubPattern", LOGICAL, com_sub_pattern_step)
# a fused expansion no longer binds the edge the distinctness filter needs
EV_FUSION = Rule("EVFusion", PHYSICAL, ev_fusion_step, HOMOMORPHISM_ONLY)
DEG_FUSION = Rule("DegFusion", PHYSICAL, deg_fusion_step)
PK_INDEX = Rule("PKIndex", PHYSICAL, pk_index_step)
LATE_PROJECT = Rule("LateProject", PHYSICAL, late_project_step)

RULES = (
    FILTER_INTO_JOIN,
    FILTER_INTO_PATTERN,
    FIELD_TRIM,
    JOIN_TO_PATTERN,
    COM_SUB_PATTERN,
    EV_FUSION,
    DEG_FUSION,
    PK_INDEX,
    LATE_PROJECT,
)
RULE_NAMES = tuple(r.name for r in RULES)
RULES_BY_NAME = {r.name: r for r in RULES}
CBO_MARKER = "PlanSelection"


def default_dag(enabled=None) -> StrategyDag:
    """Linear default order with the cost-based planner between the stages."""
    dag = StrategyDag()
    prev: list[str] = []
    chain = [
        Strategy(r.name, (r,), r.stage) for r in RULES[:5]
    ] + [Strategy(CBO_MARKER, (), "cbo")] + [Strategy(r.name, (r,), r.stage) for r in RULES[5:]]
    for s in chain:
        dag.add(s, prev)
        prev = [s.name]
    return dag if enabled is None else dag.restricted(enabled)


filter_into_join = single_rule(FILTER_INTO_JOIN)
filter_into_pattern = single_rule(FILTER_INTO_PATTERN)
field_trim = single_rule(FIELD_TRIM)
join_to_pattern = single_rule(JOIN_TO_PATTERN)
com_sub_pattern = single_rule(COM_SUB_PATTERN)
ev_fusion = single_rule(EV_FUSION)
deg_fusion = single_rule(DEG_FUSION)
pk_index = single_rule(PK_INDEX)
late_project = single_rule(LATE_PROJECT)

__all__ = [
    "ALL",
    "CBO_MARKER",
    "RULES",
    "RULE_NAMES",
    "RULES_BY_NAME",
    "Rule",
    "RuleContext",
    "Strategy",
    "StrategyDag",
    "TraceEntry",
    "apply",
    "com_sub_pattern",
    "deg_fusion",
    "default_dag",
    "eager_fetches",
    "ev_fusion",
    "field_trim",
    "filter_into_join",
    "filter_into_pattern",
    "indexable",
    "join_to_pattern",
    "late_project",
    "liveness",
    "logical_measure",
    "parse_rule_list",
    "physical_measure",
    "pk_index",
]
