"""Cost-based pattern optimization.

The search space consists of two transformations that shrink a pattern:

* vertex expansion: the pattern is its subpattern without one vertex, grown
  back by that vertex through all of its edges;
* binary join: the pattern is the join of two connected subpatterns whose
  edge sets partition its edges, joined on their common vertices.

Costs follow the backend profile. A top-down memoized search with
lower-bound pruning, seeded by a greedy plan, returns the cheapest plan.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import OptimizerError
from .gir import PatternGraph
from .glogue import GlogueQuery
from .physical import ExpandStep, JoinStep, PatternStep, ScanStep, step_text

INTO = "into"
INTERSECT = "intersect"
REL_TOL = 1e-9


@dataclass(frozen=True)
class BackendProfile:
    name: str
    expand: str = INTO  # INTO flattens edge by edge; INTERSECT intersects candidate sets
    distributed: bool = False
    alpha: Mapping[str, float] = field(default_factory=dict)
    primary_keys: Mapping[str, str] = field(default_factory=dict)  # vertex type -> property
    late_project: bool = False

    def a(self, op: str) -> float:
        value = self.alpha.get(op, 1.0)
        if value < 0:
            raise OptimizerError(f"cost factor for {op} must be nonnegative")
        return value

    def with_options(self, **changes) -> BackendProfile:
        data = {
            "name": self.name,
            "expand": self.expand,
            "distributed": self.distributed,
            "alpha": dict(self.alpha),
            "primary_keys": dict(self.primary_keys),
            "late_project": self.late_project,
        }
        data.update(changes)
        return BackendProfile(**data)


PROFILES = {
    "into": BackendProfile("into", INTO, distributed=False, primary_keys={"*": "id"}, late_project=True),
    "intersect": BackendProfile("intersect", INTERSECT, distributed=True, late_project=False),
}


# ---------------------------------------------------------------------------
# transformations


Sub = tuple[frozenset[str], frozenset[str]]  # (vertex aliases, edge aliases)


@dataclass(frozen=True)
class VertexExpansion:
    source: Sub
    vertex: str
    edges: tuple[str, ...]  # non-loop edges, then loops on the new vertex


@dataclass(frozen=True)
class BinaryJoin:
    left: Sub
    right: Sub
    keys: tuple[str, ...]


Transformation = VertexExpansion | BinaryJoin


@dataclass
class OptimizeResult:
    step: PatternStep
    cost: float
    explored: int = 0
    evaluated: int = 0
    greedy_cost: float = math.inf


class PatternSpace:
    """Subpatterns of one pattern, with frequency lookups cached by element set."""

    def __init__(self, pattern: PatternGraph, gq: GlogueQuery):
        self.pattern = pattern
        self.gq = gq
        self.freqs: dict[Sub, float] = {}
        self.loops = {v: tuple(sorted(a for a, e in pattern.edges.items() if e.src == e.dst == v)) for v in pattern.vertices}

    def full(self) -> Sub:
        return frozenset(self.pattern.vertices), frozenset(self.pattern.edges)

    def freq(self, sub: Sub) -> float:
        hit = self.freqs.get(sub)
        if hit is None:
            hit = self.gq.get_freq(self.pattern.subpattern(*sub))
            self.freqs[sub] = hit
        return hit

    def connected(self, sub: Sub) -> bool:
        return self.pattern.is_connected(sub[0], sub[1])

    def ends(self, edge: str) -> tuple[str, str]:
        e = self.pattern.edges[edge]
        return e.src, e.dst

    def sigma(self, sub: Sub, vertex: str, edge: str) -> float:
        return self.gq.expand_ratio(self.pattern.subpattern(*sub), edge, vertex, False)

    def candidates(self, sub: Sub) -> list[Transformation]:
        """Every vertex expansion and connected binary join of ``sub``."""
        vs, es = sub
        out: list[Transformation] = []
        if len(vs) == 1:
            return out
        for v in sorted(vs):
            inc = [a for a in es if v in self.ends(a)]
            nonloop = [a for a in inc if self.ends(a)[0] != self.ends(a)[1]]
            if not nonloop:
                continue
            src = (vs - {v}, es - set(inc))
            if not self.connected(src):
                continue
            loops = sorted(a for a in inc if a not in nonloop)
            order = sorted(nonloop, key=lambda a: (self.sigma(sub, v, a), a))
            out.append(VertexExpansion(src, v, tuple(order + loops)))
        edges = sorted(es)
        if len(edges) >= 2:
            first, rest = edges[0], edges[1:]
            for r in range(0, len(rest)):
                for combo in itertools.combinations(rest, r):
                    e1 = frozenset((first,) + combo)
                    e2 = es - e1
                    v1 = frozenset(x for a in e1 for x in self.ends(a))
                    v2 = frozenset(x for a in e2 for x in self.ends(a))
                    if v1 | v2 != vs:
                        continue
                    left, right = (v1, e1), (v2, e2)
                    if not (self.connected(left) and self.connected(right)):
                        continue
                    keys = tuple(sorted(v1 & v2))
                    if not keys:
                        continue
                    out.append(BinaryJoin(left, right, keys))
        return out


def get_cands(pattern: PatternGraph, gq: GlogueQuery) -> list[Transformation]:
    space = PatternSpace(pattern, gq)
    if not space.connected(space.full()):
        raise OptimizerError("pattern is not connected")
    return space.candidates(space.full())


# ---------------------------------------------------------------------------
# costs


def cost_join(freq1: float, freq2: float, profile: BackendProfile) -> float:
    return profile.a("join") * (freq1 + freq2)


def cost_expand_into(intermediate_freqs: Iterable[float], profile: BackendProfile) -> float:
    return profile.a("expand_into") * sum(intermediate_freqs)


def cost_expand_intersect(n_edges: int, source_freq: float, profile: BackendProfile) -> float:
    return profile.a("expand_intersect") * n_edges * source_freq


class CostModel:
    def __init__(self, space: PatternSpace, profile: BackendProfile):
        self.space = space
        self.profile = profile

    def scan(self, v: str) -> float:
        return self.profile.a("scan") * self.space.freq((frozenset([v]), frozenset()))

    def loops(self, v: str, loops: Iterable[str]) -> float:
        steps = []
        acc: set[str] = set()
        for a in loops:
            acc.add(a)
            steps.append(self.space.freq((frozenset([v]), frozenset(acc))))
        return cost_expand_into(steps, self.profile)

    def expansion(self, t: VertexExpansion) -> float:
        """Computation cost of a vertex expansion (without the child's cost)."""
        vs, es = t.source
        if self.profile.expand == INTERSECT:
            return cost_expand_intersect(len(t.edges), self.space.freq(t.source), self.profile)
        steps = []
        acc = set(es)
        for a in t.edges:
            acc.add(a)
            steps.append(self.space.freq((vs | {t.vertex}, frozenset(acc))))
        return cost_expand_into(steps, self.profile)

    def join(self, t: BinaryJoin) -> float:
        return cost_join(self.space.freq(t.left), self.space.freq(t.right), self.profile)

    def local(self, t: Transformation, target: Sub) -> float:
        """Noncumulative cost: computation plus communication when distributed."""
        compute = self.expansion(t) if isinstance(t, VertexExpansion) else self.join(t)
        comm = self.space.freq(target) if self.profile.distributed else 0.0
        return compute + comm


def _better(cost: float, text: str, best_cost: float, best_text: str | None) -> bool:
    if best_text is None:
        return True
    if math.isclose(cost, best_cost, rel_tol=REL_TOL, abs_tol=1e-12):
        return text < best_text
    return cost < best_cost


class Optimizer:
    def __init__(self, pattern: PatternGraph, gq: GlogueQuery, profile: BackendProfile, pruning: bool = True):
        self.space = PatternSpace(pattern, gq)
        self.model = CostModel(self.space, profile)
        self.pruning = pruning
        self.memo: dict[Sub, tuple[float, PatternStep]] = {}
        self.explored = 0
        self.evaluated = 0

    # -- base cases -----------------------------------------------------
    def single(self, sub: Sub) -> tuple[float, PatternStep]:
        (v,) = sub[0]
        loops = tuple(sorted(sub[1]))
        cost = self.model.scan(v) + self.model.loops(v, loops)
        return cost, ScanStep(v, loops, self.space.freq(sub), cost)

    def build(self, t: Transformation, target: Sub, children: list[tuple[float, PatternStep]], local: float) -> tuple[float, PatternStep]:
        cost = local + sum(c for c, _ in children)
        freq = self.space.freq(target)
        if isinstance(t, VertexExpansion):
            return cost, ExpandStep(children[0][1], t.vertex, t.edges, freq, cost)
        return cost, JoinStep(children[0][1], children[1][1], t.keys, freq, cost)

    def children_of(self, t: Transformation) -> list[Sub]:
        return [t.source] if isinstance(t, VertexExpansion) else [t.left, t.right]

    # -- exact search ---------------------------------------------------
    def solve(self, sub: Sub, incumbent: float = math.inf) -> tuple[float, PatternStep]:
        hit = self.memo.get(sub)
        if hit is not None:
            return hit
        self.explored += 1
        if len(sub[0]) == 1:
            result = self.single(sub)
            self.memo[sub] = result
            return result
        best: tuple[float, PatternStep] | None = None
        best_text: str | None = None
        bound = incumbent
        for t in self.space.candidates(sub):
            local = self.model.local(t, sub)
            if self.pruning:
                known = sum(self.memo[c][0] for c in self.children_of(t) if c in self.memo)
                if local + known > bound * (1 + REL_TOL) + 1e-12:
                    continue
            self.evaluated += 1
            children = [self.solve(c) for c in self.children_of(t)]
            cost, step = self.build(t, sub, children, local)
            text = step_text(step)
            if _better(cost, text, best[0] if best else math.inf, best_text):
                best, best_text = (cost, step), text
                if self.pruning:
                    bound = min(bound, cost)
        if best is None:
            raise OptimizerError("search exhausted without a plan; incumbent bound was below the optimum")
        self.memo[sub] = best
        return best

    def seed(self) -> None:
        """Precompute the optimal plans of all one- and two-vertex subpatterns."""
        for v in sorted(self.space.pattern.vertices):
            self.solve((frozenset([v]), frozenset()))
        for a, e in sorted(self.space.pattern.edges.items()):
            if e.src != e.dst:
                self.solve((frozenset([e.src, e.dst]), frozenset([a])))

    # -- greedy ---------------------------------------------------------
    def greedy(self, sub: Sub) -> tuple[float, PatternStep]:
        if len(sub[0]) == 1:
            return self.single(sub)
        cands = self.space.candidates(sub)
        if not cands:
            raise OptimizerError("no transformation applies to a multi-vertex pattern")
        # equal local costs fall back to the smaller inputs, so a lone edge
        # is grown from its rarer endpoint
        scored = [
            (self.model.local(t, sub), sum(self.space.freq(c) for c in self.children_of(t)), i, t)
            for i, t in enumerate(cands)
        ]
        local, _, _, t = min(scored, key=lambda x: x[:3])
        children = [self.greedy(c) for c in self.children_of(t)]
        return self.build(t, sub, children, local)


def greedy_initial(pattern: PatternGraph, gq: GlogueQuery, profile: BackendProfile) -> tuple[PatternStep, float]:
    opt = Optimizer(pattern, gq, profile)
    cost, step = opt.greedy(opt.space.full())
    return step, cost


def optimize_pattern(
    pattern: PatternGraph,
    gq: GlogueQuery,
    profile: BackendProfile,
    pruning: bool = True,
) -> OptimizeResult:
    """Cheapest pattern plan under ``profile``.

    With pruning, a candidate is skipped when its noncumulative cost plus the
    already-known costs of its children exceeds the incumbent; the incumbent
    starts at the greedy plan's cost. Pruning never changes the result.
    """
    opt = Optimizer(pattern, gq, profile, pruning)
    full = opt.space.full()
    if not opt.space.connected(full):
        raise OptimizerError("pattern is not connected")
    greedy_cost, greedy_step = opt.greedy(full)
    opt.seed()
    cost, step = opt.solve(full, greedy_cost if pruning else math.inf)
    return OptimizeResult(step, cost, opt.explored, opt.evaluated, greedy_cost)
