"""End-to-end driver: rewrite, type inference, pattern planning, lowering,
physical rewrites and execution."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from . import rbo
from .cbo import PROFILES, BackendProfile, OptimizeResult, optimize_pattern
from .errors import GoptError, StatisticsError
from .executor import ExecStats, execute
from .gir import GirPlan, Group, Join, MatchPattern, PatternGraph, Union, plan_to_json, to_pattern_graph
from .glogue import Glogue, GlogueQuery
from .graph import DataGraph, GraphSchema
from .physical import PhysicalPlan, lower, naive_step, step_json
from .typeinfer import Invalid, infer_types


@dataclass
class RunOptions:
    backend: str | BackendProfile = "into"
    semantics: str | None = None  # overrides the plan's semantics when set
    rules: Iterable[str] | None = None  # None enables every rule
    prune: bool = True
    distributed: bool | None = None
    stats: Glogue | None = None

    def profile(self) -> BackendProfile:
        if isinstance(self.backend, BackendProfile):
            prof = self.backend
        else:
            try:
                prof = PROFILES[self.backend]
            except KeyError:
                raise GoptError(f"unknown backend {self.backend!r}; choose from {', '.join(PROFILES)}") from None
        if self.distributed is not None:
            prof = prof.with_options(distributed=self.distributed)
        return prof


@dataclass
class Optimized:
    logical: GirPlan
    physical: PhysicalPlan | None
    trace: list[rbo.TraceEntry] = field(default_factory=list)
    patterns: dict[int, PatternGraph] = field(default_factory=dict)
    searches: dict[int, OptimizeResult] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)
    unsatisfiable: bool = False

    def explain(self) -> dict:
        """Plan report: logical and physical plans, pattern steps, rule trace."""
        steps = {}
        for nid, pattern in sorted(self.patterns.items()):
            entry = {"aliases": sorted(pattern.vertices) + sorted(pattern.edges)}
            res = self.searches.get(nid)
            if res is not None:
                entry.update(
                    plan=step_json(res.step),
                    cost=round(res.cost, 6),
                    greedy_cost=round(res.greedy_cost, 6),
                    explored=res.explored,
                )
            steps[str(nid)] = entry
        return {
            "semantics": self.logical.semantics,
            "unsatisfiable": self.unsatisfiable,
            "diagnostics": list(self.diagnostics),
            "logical": plan_to_json(self.logical),
            "patterns": steps,
            "physical": self.physical.to_json() if self.physical is not None else None,
            "trace": [{"rule": t.rule, "stage": t.stage, "measure": [t.measure_before, t.measure_after]} for t in self.trace],
        }


def _empty_propagates(plan: GirPlan, empty: set[int]) -> bool:
    """True when the sink is empty given that the nodes in ``empty`` are."""
    dead: set[int] = set()
    for nid in plan.topo_order():
        node = plan.nodes[nid]
        op = node.op
        ins = [i in dead for i in node.inputs]
        if nid in empty:
            dead.add(nid)
        elif isinstance(op, Union):
            if all(ins):
                dead.add(nid)
        elif isinstance(op, Join):
            if op.join_type in ("INNER", "SEMI") and any(ins):
                dead.add(nid)
            elif op.join_type in ("LEFT_OUTER", "ANTI") and ins[0]:
                dead.add(nid)
            elif op.join_type == "RIGHT_OUTER" and ins[1]:
                dead.add(nid)
            elif op.join_type == "FULL_OUTER" and all(ins):
                dead.add(nid)
        elif isinstance(op, Group) and not op.keys:
            pass  # a global aggregate still emits one row
        elif ins and any(ins):
            dead.add(nid)
    return plan.sink in dead


def optimize(plan: GirPlan, schema: GraphSchema | None, options: RunOptions | None = None) -> Optimized:
    options = options or RunOptions()
    if options.semantics is not None and options.semantics != plan.semantics:
        plan = GirPlan(dict(plan.nodes), plan.sink, options.semantics)
    profile = options.profile()
    enabled = rbo.RULE_NAMES if options.rules is None else list(options.rules)
    dag = rbo.default_dag(enabled)
    ctx = rbo.RuleContext(schema, profile)
    trace: list[rbo.TraceEntry] = []
    logical = rbo.apply(plan, dag, ctx, trace)
    out = Optimized(logical, None, trace)

    invalid = set()
    for nid, node in logical:
        if not isinstance(node.op, MatchPattern):
            continue
        pattern = to_pattern_graph(node.op)
        if schema is not None:
            res = infer_types(pattern, schema)
            if isinstance(res, Invalid):
                out.diagnostics.append(f"pattern {nid} is unsatisfiable: {res.alias}: {res.reason}")
                invalid.add(nid)
            else:
                pattern = res.pattern
        out.patterns[nid] = pattern
    if invalid and _empty_propagates(logical, invalid):
        out.unsatisfiable = True
        out.diagnostics.append("unsatisfiable: the query has no results on any graph of this schema")
        return out

    steps = {}
    if options.stats is not None:
        vu = schema.vertex_types if schema is not None else None
        eu = schema.edge_types if schema is not None else None
        gq = GlogueQuery(options.stats, vu, eu)
        for nid, pattern in out.patterns.items():
            if logical.nodes[nid].inputs or nid in invalid:
                continue
            if not pattern.is_connected(set(pattern.vertices), set(pattern.edges)):
                out.diagnostics.append(f"pattern {nid} is disconnected; planned as a cross product")
                continue
            res = optimize_pattern(pattern, gq, profile, options.prune)
            out.searches[nid] = res
            steps[nid] = res.step
        out.diagnostics.extend(dict.fromkeys(gq.diagnostics))
    else:
        out.diagnostics.append("no statistics: patterns follow declaration order")
        for nid, pattern in out.patterns.items():
            if not logical.nodes[nid].inputs:
                steps[nid] = naive_step(pattern)

    physical = lower(logical, out.patterns, steps, profile.expand)
    out.physical = rbo.apply(physical, dag, ctx, trace)
    return out


def run_gir(
    plan: GirPlan,
    graph: DataGraph,
    schema: GraphSchema | None,
    options: RunOptions | None = None,
) -> tuple[list[dict], ExecStats, Optimized]:
    """Optimize and execute; an unsatisfiable query returns no rows unexecuted."""
    opt = optimize(plan, schema, options)
    if opt.unsatisfiable:
        return [], ExecStats(), opt
    records, stats = execute(opt.physical, graph)
    return records, stats, opt


def load_stats(path) -> Glogue:
    try:
        return Glogue.load(path)
    except OSError as exc:
        raise StatisticsError(f"cannot read statistics {path}: {exc}") from exc
