"""High-order pattern statistics and cardinality estimation.

A :class:`Glogue` stores exact homomorphism counts of every connected
basic-type motif with at most ``k`` vertices that occurs in the data graph.
Motifs are simple directed patterns: no self-loops and at most one edge per
vertex pair. :class:`GlogueQuery` estimates the frequency of arbitrary
patterns (union/all types, BOTH edges, predicates, more than ``k`` vertices)
from those counts.
"""

from __future__ import annotations

import base64
import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import StatisticsError
from .gir import PatternEdge, PatternGraph, PatternVertex
from .graph import DataGraph, TypeConstraint, TypeFrequencyTable, type_frequencies
from .kernels import run_matches

log = logging.getLogger(__name__)

MAX_K = 4
FILTER_SELECTIVITY = 0.1
MAX_INSTANTIATIONS = 512


# ---------------------------------------------------------------------------
# canonical codes


def canonical_string(
    labels: Mapping[str, str],
    edges: Iterable[tuple[str, str, str, bool]],
) -> tuple[str, tuple[str, ...]]:
    """Minimal encoding of a labelled pattern over all vertex orders.

    ``edges`` holds ``(src, dst, label, both)``. Vertices are first split
    into cells by an order-independent signature, so only orders consistent
    with the sorted cells are tried. Returns the code and the vertex order
    that produced it.
    """
    edges = list(edges)
    aliases = sorted(labels)
    sig: dict[str, tuple] = {}
    for a in aliases:
        outs = sorted(lab for s, d, lab, both in edges if s == a and not both and d != a)
        ins = sorted(lab for s, d, lab, both in edges if d == a and not both and s != a)
        boths = sorted(lab for s, d, lab, both in edges if both and a in (s, d) and s != d)
        loops = sorted(f"{lab}{'~' if both else '>'}" for s, d, lab, both in edges if s == d == a)
        sig[a] = (labels[a], tuple(outs), tuple(ins), tuple(boths), tuple(loops))
    cells: dict[tuple, list[str]] = {}
    for a in aliases:
        cells.setdefault(sig[a], []).append(a)
    ordered_cells = [cells[key] for key in sorted(cells)]
    best: tuple[str, tuple[str, ...]] | None = None
    for combo in itertools.product(*(itertools.permutations(c) for c in ordered_cells)):
        order = tuple(a for cell in combo for a in cell)
        pos = {a: i for i, a in enumerate(order)}
        parts = []
        for s, d, lab, both in edges:
            i, j = pos[s], pos[d]
            if both:
                i, j = min(i, j), max(i, j)
                parts.append(f"{i}~{j}:{lab}")
            else:
                parts.append(f"{i}>{j}:{lab}")
        code = "V:" + ",".join(labels[a] for a in order) + ";E:" + ",".join(sorted(parts))
        if best is None or code < best[0]:
            best = (code, order)
    assert best is not None
    return best


def canonicalize(pattern: PatternGraph) -> bytes:
    """Canonical code of a basic-type pattern, invariant under isomorphism."""
    labels = {}
    for a, v in pattern.vertices.items():
        if v.types.kind != "basic":
            raise StatisticsError(f"canonicalize needs basic types; {a} is {v.types.kind}")
        labels[a] = next(iter(v.types.names))
    edges = []
    for a, e in pattern.edges.items():
        if e.types.kind != "basic":
            raise StatisticsError(f"canonicalize needs basic types; {a} is {e.types.kind}")
        edges.append((e.src, e.dst, next(iter(e.types.names)), e.both))
    return canonical_string(labels, edges)[0].encode()


# ---------------------------------------------------------------------------
# motifs


@dataclass(frozen=True)
class Motif:
    """A basic-type simple pattern over vertex positions 0..n-1."""

    labels: tuple[str, ...]
    edges: frozenset[tuple[int, int, str]]

    def code(self) -> bytes:
        names = {f"m{i}": lab for i, lab in enumerate(self.labels)}
        return canonical_string(names, [(f"m{s}", f"m{d}", lab, False) for s, d, lab in self.edges])[0].encode()

    def pairs(self) -> set[frozenset[int]]:
        return {frozenset((s, d)) for s, d, _ in self.edges}

    def to_pattern(self) -> PatternGraph:
        vertices = {f"m{i}": PatternVertex(f"m{i}", TypeConstraint.basic(lab)) for i, lab in enumerate(self.labels)}
        edges = {}
        for n, (s, d, lab) in enumerate(sorted(self.edges)):
            edges[f"f{n}"] = PatternEdge(f"f{n}", f"m{s}", f"m{d}", TypeConstraint.basic(lab))
        return PatternGraph(vertices, edges)


def count_motif(motif: Motif, graph: DataGraph, backend: str | None = None) -> int:
    arrays = graph.arrays
    vtypes = np.asarray([graph.vertices[v].type for v in arrays.vertex_ids.tolist()], dtype=object)
    etypes = np.asarray([graph.edges[e].type for e in arrays.edge_ids.tolist()], dtype=object)
    vmask = np.stack([(vtypes == lab) for lab in motif.labels]).astype(np.uint8) if len(vtypes) else np.zeros((len(motif.labels), 0), np.uint8)
    edge_list = sorted(motif.edges)
    if edge_list:
        emask = np.stack([(etypes == lab) for _, _, lab in edge_list]).astype(np.uint8) if len(etypes) else np.zeros((len(edge_list), 0), np.uint8)
    else:
        emask = np.zeros((0, len(etypes)), dtype=np.uint8)
    return int(run_matches(arrays, vmask, emask, [(s, d, False) for s, d, _ in edge_list], True, backend))


class Glogue:
    def __init__(self, k: int, counts: Mapping[bytes, int], type_freq: TypeFrequencyTable):
        self.k = k
        self.counts = dict(counts)
        self.type_freq = type_freq

    def __len__(self) -> int:
        return len(self.counts)

    def lookup(self, code: bytes) -> int:
        return self.counts.get(code, 0)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "type_freq": self.type_freq.to_json(),
            "patterns": [
                {"code": base64.b64encode(code).decode(), "freq": freq}
                for code, freq in sorted(self.counts.items())
            ],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> Glogue:
        return cls(
            int(data["k"]),
            {base64.b64decode(p["code"]): int(p["freq"]) for p in data["patterns"]},
            TypeFrequencyTable.from_json(data["type_freq"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> Glogue:
        try:
            return cls.from_json(json.loads(Path(path).read_text()))
        except (json.JSONDecodeError, KeyError) as exc:
            raise StatisticsError(f"{path}: not a statistics file ({exc})") from exc


def build_glogue(graph: DataGraph, k: int = 3, backend: str | None = None) -> Glogue:
    """Exact counts of all occurring motifs with up to ``k`` vertices.

    Motifs grow one edge at a time from single vertices; a motif with zero
    matches is not extended since every extension has zero matches too.
    """
    if not 1 <= k <= MAX_K:
        raise StatisticsError(f"k must be in [1, {MAX_K}], got {k}")
    tf = type_frequencies(graph)
    triplets = sorted(tf.triplet_counts)
    counts: dict[bytes, int] = {}
    frontier: list[Motif] = []
    for vtype, n in sorted(tf.vertex_counts.items()):
        if n > 0:
            m = Motif((vtype,), frozenset())
            counts[m.code()] = n
            frontier.append(m)
    seen = set(counts)
    while frontier:
        nxt: list[Motif] = []
        for m in frontier:
            for child in _grow(m, triplets, k):
                code = child.code()
                if code in seen:
                    continue
                seen.add(code)
                freq = count_motif(child, graph, backend)
                if freq > 0:
                    counts[code] = freq
                    nxt.append(child)
        frontier = nxt
    return Glogue(k, counts, tf)


def _grow(m: Motif, triplets: Sequence[tuple[str, str, str]], k: int) -> Iterable[Motif]:
    n = len(m.labels)
    pairs = m.pairs()
    for i in range(n):
        for j in range(n):
            if i == j or frozenset((i, j)) in pairs:
                continue
            for s, lab, d in triplets:
                if s == m.labels[i] and d == m.labels[j]:
                    yield Motif(m.labels, m.edges | {(i, j, lab)})
    if n < k:
        for i in range(n):
            for s, lab, d in triplets:
                if s == m.labels[i]:
                    yield Motif(m.labels + (d,), m.edges | {(i, n, lab)})
                if d == m.labels[i]:
                    yield Motif(m.labels + (s,), m.edges | {(n, i, lab)})


# ---------------------------------------------------------------------------
# estimation


@dataclass
class _Shape:
    """Pattern reduced to what estimation needs: resolved type sets."""

    vt: dict[str, frozenset[str]]
    edges: dict[str, tuple[str, str, frozenset[str], bool]]  # alias -> (src, dst, types, both)

    def key(self) -> str:
        labels = {a: "|".join(sorted(t)) for a, t in self.vt.items()}
        return canonical_string(labels, [(s, d, "|".join(sorted(t)), b) for s, d, t, b in self.edges.values()])[0]

    def sub(self, vertices: Iterable[str], edges: Iterable[str]) -> _Shape:
        vs = set(vertices)
        return _Shape({a: t for a, t in self.vt.items() if a in vs}, {a: self.edges[a] for a in edges})

    def incident(self, v: str) -> list[str]:
        return sorted(a for a, (s, d, _, _) in self.edges.items() if v in (s, d))

    def connected(self, vertices: set[str], edges: Iterable[str]) -> bool:
        if not vertices:
            return False
        adj = {v: set() for v in vertices}
        for a in edges:
            s, d, _, _ = self.edges[a]
            if s in adj and d in adj:
                adj[s].add(d)
                adj[d].add(s)
        start = min(vertices)
        seen, stack = {start}, [start]
        while stack:
            for n in adj[stack.pop()]:
                if n not in seen:
                    seen.add(n)
                    stack.append(n)
        return seen == vertices

    def is_simple(self) -> bool:
        pairs = set()
        for s, d, _, _ in self.edges.values():
            if s == d:
                return False
            pair = frozenset((s, d))
            if pair in pairs:
                return False
            pairs.add(pair)
        return True


class GlogueQuery:
    """Frequency estimates for arbitrary patterns, memoized by canonical code."""

    def __init__(self, glogue: Glogue, vertex_universe: Iterable[str] | None = None, edge_universe: Iterable[str] | None = None):
        self.glogue = glogue
        tf = glogue.type_freq
        self.vertex_universe = frozenset(vertex_universe) if vertex_universe is not None else frozenset(tf.vertex_counts)
        self.edge_universe = (
            frozenset(edge_universe) if edge_universe is not None else frozenset(t[1] for t in tf.triplet_counts)
        )
        self.memo: dict[str, float] = {}
        self.diagnostics: list[str] = []

    # -- single elements ------------------------------------------------
    def vertex_freq(self, types: Iterable[str]) -> int:
        return self.glogue.type_freq.vertex_freq(types)

    def edge_freq(self, etypes: Iterable[str], src_types: Iterable[str], dst_types: Iterable[str], both: bool = False) -> int:
        tf = self.glogue.type_freq
        n = tf.edge_freq(etypes, src_types, dst_types)
        if both:
            n += tf.edge_freq(etypes, dst_types, src_types)
        return n

    # -- public API -----------------------------------------------------
    def _shape(self, pattern: PatternGraph) -> _Shape:
        vt = {}
        for a, v in pattern.vertices.items():
            vt[a] = v.types.resolve(self.vertex_universe)
            if not vt[a]:
                raise StatisticsError(f"empty type constraint on {a}; run type inference first")
        edges = {}
        for a, e in pattern.edges.items():
            types = e.types.resolve(self.edge_universe)
            if not types:
                raise StatisticsError(f"empty type constraint on {a}; run type inference first")
            edges[a] = (e.src, e.dst, types, e.both)
        return _Shape(vt, edges)

    def get_freq(self, pattern: PatternGraph) -> float:
        """Estimated number of homomorphisms of ``pattern``."""
        shape = self._shape(pattern)
        npred = sum(v.predicate is not None for v in pattern.vertices.values()) + sum(
            e.predicate is not None for e in pattern.edges.values()
        )
        return self._freq(shape) * FILTER_SELECTIVITY**npred

    def expand_ratio(self, pattern: PatternGraph, edge: str, new_vertex: str, v_in_pi: bool) -> float:
        """Change in frequency when ``edge`` is appended towards ``new_vertex``.

        ``v_in_pi`` is true when the new vertex is already part of the
        intermediate pattern (a closing edge).
        """
        num, den = self._ratio(self._shape(pattern), edge, new_vertex, v_in_pi)
        if den == 0:
            return 0.0
        return num / den

    def expand_frequency(self, pattern: PatternGraph, source: Iterable[str], edge_order: Sequence[str]) -> float:
        """Frequency of ``pattern`` grown from the subpattern on ``source`` by one vertex."""
        shape = self._shape(pattern)
        src = set(source)
        (new_vertex,) = set(shape.vt) - src
        base = shape.sub(src, [a for a, (s, d, _, _) in shape.edges.items() if s in src and d in src])
        return self._expand(self._freq(base), shape, new_vertex, list(edge_order))

    def join_frequency(self, p1: PatternGraph, p2: PatternGraph) -> float:
        """Frequency of the union of two overlapping subpatterns."""
        s1, s2 = self._shape(p1), self._shape(p2)
        return self._join(s1, s2)

    # -- internals ------------------------------------------------------
    def _ratio(self, shape: _Shape, edge: str, new_vertex: str, v_in_pi: bool) -> tuple[int, int]:
        s, d, etypes, both = shape.edges[edge]
        num = self.edge_freq(etypes, shape.vt[s], shape.vt[d], both and s != d)
        other = d if s == new_vertex else s
        den = self.vertex_freq(shape.vt[other])
        if v_in_pi:
            den *= self.vertex_freq(shape.vt[new_vertex])
        return num, den

    def _expand(self, base: float, shape: _Shape, new_vertex: str, order: Sequence[str]) -> float:
        num, den = base, 1
        present = False
        for edge in order:
            s, d, _, _ = shape.edges[edge]
            if s == d:
                n, m = self._ratio(shape, edge, new_vertex, True)
            else:
                n, m = self._ratio(shape, edge, new_vertex, present)
                present = True
            if m == 0:
                self._diag(f"zero denominator expanding {edge}; estimate is 0")
                return 0.0
            num *= n
            den *= m
        return num / den

    def _join(self, s1: _Shape, s2: _Shape) -> float:
        common_v = set(s1.vt) & set(s2.vt)
        common_e = set(s1.edges) & set(s2.edges)
        f1, f2 = self._freq(s1), self._freq(s2)
        if not common_v:
            return f1 * f2
        inter = s1.sub(common_v, common_e)
        fi = 1.0
        for comp_v, comp_e in _components(inter):
            fi *= self._freq(inter.sub(comp_v, comp_e))
        if fi == 0:
            self._diag("zero-frequency join intersection; estimate is 0")
            return 0.0
        return f1 * f2 / fi

    def _diag(self, message: str) -> None:
        log.debug(message)
        self.diagnostics.append(message)

    def _freq(self, shape: _Shape) -> float:
        if not shape.edges and len(shape.vt) == 1:
            (types,) = shape.vt.values()
            return float(self.vertex_freq(types))
        key = shape.key()
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        value = self._compute(shape)
        self.memo[key] = value
        return value

    def _direct(self, shape: _Shape) -> float | None:
        """Exact value from the motif store, or None when out of its range."""
        if len(shape.vt) > self.glogue.k or not shape.is_simple():
            return None
        sizes = [len(t) for t in shape.vt.values()] + [
            len(t) * (2 if both else 1) for _, _, t, both in shape.edges.values()
        ]
        total = 1
        for n in sizes:
            total *= n
            if total > MAX_INSTANTIATIONS:
                return None
        valiases = sorted(shape.vt)
        ealiases = sorted(shape.edges)
        pos = {a: i for i, a in enumerate(valiases)}
        tf = self.glogue.type_freq
        acc = 0
        for vchoice in itertools.product(*(sorted(shape.vt[a]) for a in valiases)):
            options = []
            for a in ealiases:
                s, d, types, both = shape.edges[a]
                opts = []
                for t in sorted(types):
                    for rev in ((False, True) if both else (False,)):
                        i, j = (pos[d], pos[s]) if rev else (pos[s], pos[d])
                        if tf.triplet_counts.get((vchoice[i], t, vchoice[j]), 0):
                            opts.append((i, j, t))
                if not opts:
                    break
                options.append(opts)
            else:
                for echoice in itertools.product(*options):
                    acc += self.glogue.lookup(Motif(tuple(vchoice), frozenset(echoice)).code())
        return float(acc)

    def _compute(self, shape: _Shape) -> float:
        direct = self._direct(shape)
        if direct is not None:
            return direct
        if len(shape.vt) == 1:
            # a lone vertex carrying self-loops: every loop is a closing edge
            (v,) = shape.vt
            return self._expand(float(self.vertex_freq(shape.vt[v])), shape, v, sorted(shape.edges))
        split = self._cut_split(shape)
        if split is not None:
            return self._join(*split)
        v = self._peel_vertex(shape)
        rest_v = set(shape.vt) - {v}
        rest_e = [a for a in shape.edges if v not in shape.edges[a][:2]]
        base = self._freq(shape.sub(rest_v, rest_e))
        inc = shape.incident(v)
        order = [a for a in inc if shape.edges[a][0] != shape.edges[a][1]] + [
            a for a in inc if shape.edges[a][0] == shape.edges[a][1]
        ]
        return self._expand(base, shape, v, order)

    def _cut_split(self, shape: _Shape) -> tuple[_Shape, _Shape] | None:
        """Split at a cut vertex when both halves are answered by the motif store."""
        for c in sorted(shape.vt):
            rest = set(shape.vt) - {c}
            comps = _components(shape.sub(rest, [a for a in shape.edges if c not in shape.edges[a][:2]]))
            if len(comps) < 2:
                continue
            first_v = set(comps[0][0])
            side1_v = first_v | {c}
            side1_e = [a for a, (s, d, _, _) in shape.edges.items() if {s, d} <= side1_v]
            side2_v = (set(shape.vt) - first_v)
            side2_e = [a for a in shape.edges if a not in side1_e]
            s1, s2 = shape.sub(side1_v, side1_e), shape.sub(side2_v, side2_e)
            if self._direct_ok(s1) and self._direct_ok(s2):
                return s1, s2
        return None

    def _direct_ok(self, shape: _Shape) -> bool:
        return len(shape.vt) <= self.glogue.k and shape.is_simple()

    def _peel_vertex(self, shape: _Shape) -> str:
        candidates = []
        for v in shape.vt:
            rest = set(shape.vt) - {v}
            rest_e = [a for a in shape.edges if v not in shape.edges[a][:2]]
            if shape.connected(rest, rest_e):
                degree = len(shape.incident(v))
                candidates.append((degree, v))
        if not candidates:
            raise StatisticsError("no peelable vertex; pattern is not connected")
        # minimal degree first; among equals the last alias, which keeps the
        # earliest-declared vertices in the remaining subpattern
        best_degree = min(d for d, _ in candidates)
        return max(v for d, v in candidates if d == best_degree)


def _components(shape: _Shape) -> list[tuple[set[str], list[str]]]:
    remaining = set(shape.vt)
    out = []
    while remaining:
        start = min(remaining)
        comp = {start}
        stack = [start]
        while stack:
            x = stack.pop()
            for s, d, _, _ in shape.edges.values():
                for a, b in ((s, d), (d, s)):
                    if a == x and b in remaining and b not in comp:
                        comp.add(b)
                        stack.append(b)
        remaining -= comp
        edges = [a for a, (s, d, _, _) in shape.edges.items() if s in comp]
        out.append((comp, edges))
    return sorted(out, key=lambda c: min(c[0]))
