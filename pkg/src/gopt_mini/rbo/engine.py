"""Rule and strategy machinery.

A :class:`Rule` rewrites one locus of a plan per call and returns ``None``
when it no longer applies. A :class:`StrategyDag` orders strategies (sets of
rules); :func:`apply` runs each strategy to a fixpoint in topological order,
checking after every step that the termination measure did not grow.
"""

from __future__ import annotations

import graphlib
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

from ..errors import RuleError
from ..expr import conjuncts
from ..gir import SEMANTICS, GirPlan, Join, MatchPattern, Project, Group, Select, Union, validate
from ..graph import GraphSchema
from ..physical import PhysicalPlan

LOGICAL = "logical"
PHYSICAL = "physical"
MAX_STEPS = 10_000
EDGE_WEIGHT = 4


@dataclass
class RuleContext:
    schema: GraphSchema | None = None
    profile: Any = None  # cbo.BackendProfile


@dataclass(frozen=True)
class Rule:
    name: str
    stage: str
    action: Callable[[Any, RuleContext], Any]
    semantics: frozenset[str] = frozenset(SEMANTICS)

    def applies_to(self, semantics: str) -> bool:
        return semantics in self.semantics

    def step(self, plan, ctx: RuleContext):
        if not self.applies_to(plan.semantics):
            return None
        return self.action(plan, ctx)


@dataclass(frozen=True)
class Strategy:
    name: str
    rules: tuple[Rule, ...]
    stage: str  # LOGICAL, PHYSICAL, or "cbo" for the plan-selection marker


@dataclass
class StrategyDag:
    strategies: dict[str, Strategy] = field(default_factory=dict)
    deps: dict[str, set[str]] = field(default_factory=dict)  # strategy -> predecessors

    def add(self, strategy: Strategy, after: Iterable[str] = ()) -> StrategyDag:
        self.strategies[strategy.name] = strategy
        self.deps.setdefault(strategy.name, set()).update(after)
        return self

    def order(self) -> list[Strategy]:
        ts = graphlib.TopologicalSorter({k: sorted(v) for k, v in self.deps.items()})
        try:
            names = list(ts.static_order())
        except graphlib.CycleError as exc:
            raise RuleError(f"strategy graph has a cycle: {exc.args[1]}") from exc
        return [self.strategies[n] for n in names if n in self.strategies]

    def rule_names(self) -> list[str]:
        return [r.name for s in self.order() for r in s.rules]

    def restricted(self, enabled: Iterable[str]) -> StrategyDag:
        """Same ordering with only the named rules kept."""
        enabled = set(enabled)
        out = StrategyDag()
        for name, s in self.strategies.items():
            out.add(Strategy(s.name, tuple(r for r in s.rules if r.name in enabled), s.stage), self.deps.get(name, ()))
        return out


@dataclass
class TraceEntry:
    rule: str
    stage: str
    measure_before: int
    measure_after: int


# ---------------------------------------------------------------------------
# termination measures


def _joins_below(plan: GirPlan, nid: int, memo: dict[int, int]) -> int:
    if nid not in memo:
        node = plan.nodes[nid]
        own = 1 if isinstance(node.op, (Join, Union)) else 0
        memo[nid] = own + sum(_joins_below(plan, i, memo) for i in node.inputs)
    return memo[nid]


def logical_measure(plan: GirPlan) -> int:
    """Operators plus weighted pattern edges, plus unpushed predicates weighted
    by the joins they sit above, plus patterns whose output still carries dead
    aliases.

    Edges weigh more than operators so that matching a shared edge once pays
    for the extra pattern node and trims a hoist introduces.
    """
    from .logical import liveness, needs_trim

    memo: dict[int, int] = {}
    total = 0
    live = liveness(plan)
    for nid, node in plan:
        total += 1
        if isinstance(node.op, MatchPattern):
            from ..gir import to_pattern_graph

            total += EDGE_WEIGHT * len(to_pattern_graph(node.op).edges)
            if needs_trim(plan, nid, live):
                total += 1
        elif isinstance(node.op, Select):
            below = _joins_below(plan, node.inputs[0], memo)
            total += len(conjuncts(node.op.condition)) * (1 + below)
    return total


def physical_measure(plan: PhysicalPlan, ctx: RuleContext) -> int:
    """Operators plus eagerly fetched properties plus indexable scans."""
    from .physical import eager_fetches, indexable

    total = 0
    for i in plan.topo_order():
        op = plan.ops[i]
        total += 1
        total += sum(len(props) for _, props in eager_fetches(op))
        if op.kind == "Scan" and indexable(op, ctx) is not None:
            total += 1
    return total


def _measure(plan, ctx: RuleContext) -> int:
    if isinstance(plan, GirPlan):
        return logical_measure(plan)
    return physical_measure(plan, ctx)


# ---------------------------------------------------------------------------
# driver


def run_strategy(plan, strategy: Strategy, ctx: RuleContext, trace: list[TraceEntry]):
    steps = 0
    measure = _measure(plan, ctx)
    while True:
        fired = False
        for rule in strategy.rules:
            new = rule.step(plan, ctx)
            if new is None:
                continue
            steps += 1
            if steps > MAX_STEPS:
                raise RuleError(f"strategy {strategy.name} did not reach a fixpoint")
            if isinstance(new, GirPlan):
                diags = validate(new)
                if diags:
                    raise RuleError(f"{rule.name} produced an invalid plan: {'; '.join(diags)}")
            after = _measure(new, ctx)
            if after > measure:
                raise RuleError(f"{rule.name} increased the termination measure ({measure} -> {after})")
            trace.append(TraceEntry(rule.name, rule.stage, measure, after))
            plan, measure = new, after
            fired = True
            break
        if not fired:
            return plan


def apply(plan, dag: StrategyDag, ctx: RuleContext | None = None, trace: list[TraceEntry] | None = None):
    """Apply every strategy of the plan's stage in topological order."""
    ctx = ctx or RuleContext()
    trace = trace if trace is not None else []
    stage = LOGICAL if isinstance(plan, GirPlan) else PHYSICAL
    for strategy in dag.order():
        if strategy.stage == stage and strategy.rules:
            plan = run_strategy(plan, strategy, ctx, trace)
    return plan


def single_rule(rule: Rule) -> Callable:
    """Fixpoint application of one rule, as a plan-to-plan function."""

    def run(plan, ctx: RuleContext | None = None):
        return run_strategy(plan, Strategy(rule.name, (rule,), rule.stage), ctx or RuleContext(), [])

    run.__name__ = rule.name
    run.__doc__ = rule.action.__doc__
    return run


def parse_rule_list(spec: str | None, known: Sequence[str]) -> list[str]:
    """Rule selection for ablation.

    ``None`` keeps every rule; ``""`` keeps none; ``"A,B"`` keeps exactly the
    named rules; ``"-A,-B"`` keeps all but the named rules. Names are
    case-insensitive.
    """
    if spec is None:
        return list(known)
    items = [x.strip() for x in spec.split(",") if x.strip()]
    if not items:
        return []
    lookup = {k.lower(): k for k in known}
    negative = all(x.startswith("-") for x in items)
    if not negative and any(x.startswith("-") for x in items):
        raise RuleError("rule list mixes enabled and disabled names")
    names = []
    for x in items:
        key = x.lstrip("-").lower()
        if key not in lookup:
            raise RuleError(f"unknown rule {x.lstrip('-')!r}; known rules: {', '.join(known)}")
        names.append(lookup[key])
    if negative:
        return [k for k in known if k not in names]
    return [k for k in known if k in names]


def has_trimming_consumer(plan: GirPlan, consumers: Mapping[int, list[int]], nid: int) -> bool:
    cons = consumers.get(nid, [])
    return bool(cons) and all(isinstance(plan.nodes[c].op, (Project, Group)) for c in cons)
