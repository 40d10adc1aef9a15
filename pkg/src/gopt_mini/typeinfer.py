"""Type inference and validation of pattern graphs against a graph schema.

Vertices are processed from a worklist ordered by ascending candidate-set
size (alias order breaks ties). Popping a vertex filters the schema triplets
of every incident pattern edge against the current endpoint and edge sets,
then narrows the vertex, the edge and the opposite endpoint to what survives.
A neighbour whose set shrank goes back on the worklist. Any empty set makes the
pattern unsatisfiable.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import OptimizerError
from .gir import PatternEdge, PatternGraph
from .graph import GraphSchema, TypeConstraint


@dataclass(frozen=True)
class Valid:
    pattern: PatternGraph
    iterations: int = 0

    ok = True


@dataclass(frozen=True)
class Invalid:
    alias: str
    reason: str = ""

    ok = False


InferenceResult = Valid | Invalid


def _as_constraint(types: frozenset[str]) -> TypeConstraint:
    return TypeConstraint(frozenset(types))


def _edge_triplets(schema: GraphSchema, e: PatternEdge, vt: dict, et: dict) -> list[tuple[str, str, str, bool]]:
    """Schema triplets an edge may bind; the flag marks reversed orientation."""
    out = []
    src_t, dst_t, etypes = vt[e.src], vt[e.dst], et[e.alias]
    for s, name, d in schema.edge_triplets:
        if name not in etypes:
            continue
        if s in src_t and d in dst_t:
            out.append((s, name, d, False))
        if e.both and s in dst_t and d in src_t:
            out.append((s, name, d, True))
    return out


def infer_types(pattern: PatternGraph, schema: GraphSchema) -> InferenceResult:
    vt: dict[str, frozenset[str]] = {}
    et: dict[str, frozenset[str]] = {}
    for alias, v in pattern.vertices.items():
        if v.types.names is not None:
            unknown = v.types.names - schema.vertex_types
            if unknown or not v.types.names:
                return Invalid(alias, f"unknown vertex types {sorted(unknown)}" if unknown else "empty constraint")
        vt[alias] = v.types.resolve(schema.vertex_types)
        if not vt[alias]:
            return Invalid(alias, "schema has no vertex types")
    for alias, e in pattern.edges.items():
        if e.types.names is not None:
            unknown = e.types.names - schema.edge_types
            if unknown or not e.types.names:
                return Invalid(alias, f"unknown edge types {sorted(unknown)}" if unknown else "empty constraint")
        et[alias] = e.types.resolve(schema.edge_types)
        if not et[alias]:
            return Invalid(alias, "schema has no edge types")

    incident: dict[str, list[PatternEdge]] = {a: [] for a in pattern.vertices}
    for e in pattern.edges.values():
        incident[e.src].append(e)
        if e.dst != e.src:
            incident[e.dst].append(e)

    queue = set(pattern.vertices)
    cap = len(pattern.vertices) * (len(schema.vertex_types) + 1) + 1
    iterations = 0
    while queue:
        u = min(queue, key=lambda a: (len(vt[a]), a))
        queue.discard(u)
        iterations += 1
        if iterations > cap:
            raise OptimizerError(f"type inference exceeded its iteration bound ({cap})")
        for e in incident[u]:
            trips = _edge_triplets(schema, e, vt, et)
            new_src: set[str] = set()
            new_dst: set[str] = set()
            for s, _, d, reversed_ in trips:
                if reversed_:
                    new_src.add(d)
                    new_dst.add(s)
                else:
                    new_src.add(s)
                    new_dst.add(d)
            new_e = frozenset(t[1] for t in trips)
            if not new_e:
                return Invalid(e.alias, f"no schema edge connects {e.src} and {e.dst}")
            et[e.alias] = new_e
            for end, allowed in ((e.src, new_src), (e.dst, new_dst)):
                narrowed = vt[end] & allowed
                if not narrowed:
                    return Invalid(end, f"no type of {end} fits edge {e.alias}")
                if narrowed != vt[end]:
                    vt[end] = frozenset(narrowed)
                    if end != u:
                        queue.add(end)
                    else:
                        queue.add(u)
    narrowed_v = {a: _as_constraint(t) for a, t in vt.items()}
    narrowed_e = {a: _as_constraint(t) for a, t in et.items()}
    return Valid(pattern.with_types(narrowed_v, narrowed_e), iterations)
