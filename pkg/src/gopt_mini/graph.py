"""Property-graph storage, graph schema and type constraints."""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import GraphFormatError, IntegrityError, PropertyTypeError, SchemaError

VARIANTS = ("int", "float", "string", "bool", "list")


def variant_of(value: Any) -> str:
    """Name the PropertyValue variant of a Python value."""
    # bool must be tested before int: bool is an int subclass
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "string"
    if isinstance(value, (list, tuple)):
        return "list"
    raise PropertyTypeError(f"unsupported property value {value!r}")


def check_value(value: Any) -> Any:
    """Validate a property value and normalise lists to tuples (hashable)."""
    kind = variant_of(value)
    if kind != "list":
        return value
    items = tuple(check_value(v) for v in value)
    kinds = {variant_of(v) for v in items}
    if len(kinds) > 1:
        raise PropertyTypeError(f"heterogeneous list {value!r}")
    return items


# ---------------------------------------------------------------------------
# type constraints


@dataclass(frozen=True)
class TypeConstraint:
    """BasicType, UnionType or AllType over vertex or edge type names.

    ``names`` is ``None`` for AllType.
    """

    names: frozenset[str] | None = None

    @classmethod
    def basic(cls, name: str) -> TypeConstraint:
        return cls(frozenset([name]))

    @classmethod
    def union(cls, names: Iterable[str]) -> TypeConstraint:
        names = frozenset(names)
        if not names:
            raise SchemaError("a union type constraint needs at least one type")
        return cls(names)

    @classmethod
    def all(cls) -> TypeConstraint:
        return cls(None)

    @property
    def kind(self) -> str:
        if self.names is None:
            return "all"
        return "basic" if len(self.names) == 1 else "union"

    @property
    def is_all(self) -> bool:
        return self.names is None

    def resolve(self, universe: Iterable[str]) -> frozenset[str]:
        if self.names is None:
            return frozenset(universe)
        return self.names

    def to_json(self) -> Any:
        if self.names is None:
            return "*"
        return sorted(self.names)

    @classmethod
    def from_json(cls, data: Any) -> TypeConstraint:
        if data == "*" or data is None:
            return cls.all()
        if isinstance(data, str):
            return cls.basic(data)
        return cls.union(data)

    def __str__(self) -> str:
        if self.names is None:
            return "*"
        return "|".join(sorted(self.names))


# ---------------------------------------------------------------------------
# schema


@dataclass(frozen=True)
class GraphSchema:
    vertex_types: frozenset[str] = frozenset()
    edge_triplets: frozenset[tuple[str, str, str]] = frozenset()
    vertex_props: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    edge_props: Mapping[str, Mapping[str, str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for src, etype, dst in self.edge_triplets:
            for end in (src, dst):
                if end not in self.vertex_types:
                    raise SchemaError(
                        f"triplet ({src},{etype},{dst}) references unknown vertex type {end!r}"
                    )
        clash = self.vertex_types & self.edge_types
        if clash:
            raise SchemaError(f"names used for both vertex and edge types: {sorted(clash)}")

    @cached_property
    def edge_types(self) -> frozenset[str]:
        return frozenset(t[1] for t in self.edge_triplets)

    @cached_property
    def _out(self) -> dict[str, list[tuple[str, str, str]]]:
        out: dict[str, list[tuple[str, str, str]]] = defaultdict(list)
        for trip in sorted(self.edge_triplets):
            out[trip[0]].append(trip)
        return out

    @cached_property
    def _in(self) -> dict[str, list[tuple[str, str, str]]]:
        inc: dict[str, list[tuple[str, str, str]]] = defaultdict(list)
        for trip in sorted(self.edge_triplets):
            inc[trip[2]].append(trip)
        return inc

    def triplets_from(self, vtype: str) -> list[tuple[str, str, str]]:
        return self._out.get(vtype, [])

    def triplets_into(self, vtype: str) -> list[tuple[str, str, str]]:
        return self._in.get(vtype, [])

    def to_json(self) -> dict:
        edges = []
        for src, etype, dst in sorted(self.edge_triplets):
            entry = {"name": etype, "src": src, "dst": dst}
            if self.edge_props.get(etype):
                entry["props"] = dict(self.edge_props[etype])
            edges.append(entry)
        return {
            "vertex_types": [
                {"name": name, "props": dict(self.vertex_props.get(name, {}))}
                for name in sorted(self.vertex_types)
            ],
            "edge_types": edges,
        }


def schema_from_json(data: Mapping) -> GraphSchema:
    if not isinstance(data, Mapping):
        raise GraphFormatError("schema JSON must be an object")
    vtypes: list[str] = []
    vprops: dict[str, dict[str, str]] = {}
    for entry in data.get("vertex_types", []):
        name = entry["name"] if isinstance(entry, Mapping) else entry
        if name in vprops:
            raise SchemaError(f"duplicate vertex type {name!r}")
        props = dict(entry.get("props", {})) if isinstance(entry, Mapping) else {}
        _check_decls(props, name)
        vtypes.append(name)
        vprops[name] = props
    triplets: set[tuple[str, str, str]] = set()
    eprops: dict[str, dict[str, str]] = {}
    for entry in data.get("edge_types", []):
        try:
            trip = (entry["src"], entry["name"], entry["dst"])
        except (KeyError, TypeError) as exc:
            raise GraphFormatError(f"bad edge type entry {entry!r}") from exc
        if trip in triplets:
            raise SchemaError(f"duplicate edge triplet {trip}")
        triplets.add(trip)
        props = dict(entry.get("props", {}))
        _check_decls(props, entry["name"])
        merged = eprops.setdefault(entry["name"], {})
        for pname, kind in props.items():
            if merged.get(pname, kind) != kind:
                raise SchemaError(f"conflicting declarations for {entry['name']}.{pname}")
            merged[pname] = kind
    return GraphSchema(frozenset(vtypes), frozenset(triplets), vprops, eprops)


def _check_decls(props: Mapping[str, str], owner: str) -> None:
    for pname, kind in props.items():
        if kind not in VARIANTS:
            raise SchemaError(f"{owner}.{pname}: unknown property variant {kind!r}")


def load_schema(path: str | Path) -> GraphSchema:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"{path}: {exc}") from exc
    return schema_from_json(data)


def schema_adjacent_types(
    schema: GraphSchema, vtype: str, direction: str
) -> tuple[frozenset[str], frozenset[tuple[str, str, str]]]:
    """Vertex types and triplets reachable from ``vtype`` in one schema hop."""
    if vtype not in schema.vertex_types:
        raise SchemaError(f"unknown vertex type {vtype!r}")
    if direction == "OUT":
        trips = schema.triplets_from(vtype)
        return frozenset(t[2] for t in trips), frozenset(trips)
    if direction == "IN":
        trips = schema.triplets_into(vtype)
        return frozenset(t[0] for t in trips), frozenset(trips)
    raise ValueError(f"direction must be OUT or IN, got {direction!r}")


# ---------------------------------------------------------------------------
# data graph


@dataclass(frozen=True)
class Vertex:
    id: int
    type: str
    props: Mapping[str, Any]


@dataclass(frozen=True)
class Edge:
    id: int
    src: int
    dst: int
    type: str
    props: Mapping[str, Any]


class DataGraph:
    """In-memory directed property graph. Treat as immutable after construction."""

    def __init__(self, vertices: Iterable[Vertex], edges: Iterable[Edge]):
        self.vertices: dict[int, Vertex] = {}
        for v in vertices:
            if v.id in self.vertices:
                raise IntegrityError(f"duplicate vertex id {v.id}")
            self.vertices[v.id] = v
        self.edges: dict[int, Edge] = {}
        out_adj: dict[int, list[int]] = {vid: [] for vid in self.vertices}
        in_adj: dict[int, list[int]] = {vid: [] for vid in self.vertices}
        for e in sorted(edges, key=lambda e: e.id):
            if e.id in self.edges:
                raise IntegrityError(f"duplicate edge id {e.id}")
            for end in (e.src, e.dst):
                if end not in self.vertices:
                    raise IntegrityError(f"edge {e.id} references missing vertex {end}")
            self.edges[e.id] = e
            out_adj[e.src].append(e.id)
            in_adj[e.dst].append(e.id)
        self.out_adj = out_adj
        self.in_adj = in_adj

    def __len__(self) -> int:
        return len(self.vertices)

    @cached_property
    def vertices_by_type(self) -> dict[str, list[int]]:
        by_type: dict[str, list[int]] = defaultdict(list)
        for vid in sorted(self.vertices):
            by_type[self.vertices[vid].type].append(vid)
        return dict(by_type)

    def validate(self) -> None:
        """Cross-check adjacency lists against the edge table."""
        seen_out: Counter[int] = Counter()
        seen_in: Counter[int] = Counter()
        for vid, eids in self.out_adj.items():
            for eid in eids:
                if self.edges[eid].src != vid:
                    raise IntegrityError(f"edge {eid} misplaced in OUT list of {vid}")
                seen_out[eid] += 1
        for vid, eids in self.in_adj.items():
            for eid in eids:
                if self.edges[eid].dst != vid:
                    raise IntegrityError(f"edge {eid} misplaced in IN list of {vid}")
                seen_in[eid] += 1
        for eid in self.edges:
            if seen_out[eid] != 1 or seen_in[eid] != 1:
                raise IntegrityError(f"edge {eid} not listed exactly once per direction")

    def check_against(self, schema: GraphSchema) -> None:
        """Raise if the graph uses types, triplets or property variants the schema lacks."""
        for v in self.vertices.values():
            if v.type not in schema.vertex_types:
                raise SchemaError(f"vertex {v.id} has undeclared type {v.type!r}")
            _check_props(v.props, schema.vertex_props.get(v.type, {}), f"vertex {v.id}")
        for e in self.edges.values():
            trip = (self.vertices[e.src].type, e.type, self.vertices[e.dst].type)
            if trip not in schema.edge_triplets:
                raise SchemaError(f"edge {e.id} has undeclared triplet {trip}")
            _check_props(e.props, schema.edge_props.get(e.type, {}), f"edge {e.id}")

    @cached_property
    def arrays(self):
        from .kernels import GraphArrays

        return GraphArrays.from_graph(self)

    def to_json(self) -> dict:
        return {
            "vertices": [
                {"id": v.id, "type": v.type, "props": _props_json(v.props)}
                for v in sorted(self.vertices.values(), key=lambda v: v.id)
            ],
            "edges": [
                {"id": e.id, "src": e.src, "dst": e.dst, "type": e.type, "props": _props_json(e.props)}
                for e in sorted(self.edges.values(), key=lambda e: e.id)
            ],
        }


def _props_json(props: Mapping[str, Any]) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in props.items()}


def _check_props(props: Mapping[str, Any], decls: Mapping[str, str], owner: str) -> None:
    for name, value in props.items():
        kind = decls.get(name)
        if kind is not None and variant_of(value) != kind:
            raise PropertyTypeError(f"{owner}: property {name!r} should be {kind}, got {value!r}")


def graph_from_json(data: Mapping, schema: GraphSchema | None = None) -> DataGraph:
    if not isinstance(data, Mapping) or "vertices" not in data or "edges" not in data:
        raise GraphFormatError("graph JSON needs 'vertices' and 'edges' arrays")
    try:
        vertices = [
            Vertex(int(v["id"]), str(v["type"]), _load_props(v.get("props", {})))
            for v in data["vertices"]
        ]
        edges = [
            Edge(int(e["id"]), int(e["src"]), int(e["dst"]), str(e["type"]), _load_props(e.get("props", {})))
            for e in data["edges"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphFormatError(f"malformed graph entry: {exc}") from exc
    graph = DataGraph(vertices, edges)
    graph.validate()
    if schema is not None:
        graph.check_against(schema)
    return graph


def _load_props(props: Mapping[str, Any]) -> dict[str, Any]:
    if not isinstance(props, Mapping):
        raise GraphFormatError(f"props must be an object, got {props!r}")
    return {str(k): check_value(v) for k, v in props.items()}


def load_graph(path: str | Path, schema: GraphSchema | None = None) -> DataGraph:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"{path}: {exc}") from exc
    return graph_from_json(data, schema)


def extract_schema(graph: DataGraph) -> GraphSchema:
    """Schema induced by the types actually present in ``graph``."""
    vtypes = frozenset(v.type for v in graph.vertices.values())
    triplets = frozenset(
        (graph.vertices[e.src].type, e.type, graph.vertices[e.dst].type) for e in graph.edges.values()
    )
    return GraphSchema(vtypes, triplets)


# ---------------------------------------------------------------------------
# type frequencies


@dataclass(frozen=True)
class TypeFrequencyTable:
    vertex_counts: Mapping[str, int] = field(default_factory=dict)
    triplet_counts: Mapping[tuple[str, str, str], int] = field(default_factory=dict)

    def vertex_freq(self, types: Iterable[str]) -> int:
        return sum(self.vertex_counts.get(t, 0) for t in types)

    def edge_freq(self, etypes: Iterable[str], src_types: Iterable[str], dst_types: Iterable[str]) -> int:
        etypes, src_types, dst_types = set(etypes), set(src_types), set(dst_types)
        return sum(
            n
            for (s, e, d), n in self.triplet_counts.items()
            if e in etypes and s in src_types and d in dst_types
        )

    @property
    def total_vertices(self) -> int:
        return sum(self.vertex_counts.values())

    @property
    def total_edges(self) -> int:
        return sum(self.triplet_counts.values())

    def to_json(self) -> dict:
        return {
            "vertices": dict(sorted(self.vertex_counts.items())),
            "edges": [[s, e, d, n] for (s, e, d), n in sorted(self.triplet_counts.items())],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> TypeFrequencyTable:
        return cls(
            dict(data.get("vertices", {})),
            {(s, e, d): int(n) for s, e, d, n in data.get("edges", [])},
        )


def type_frequencies(graph: DataGraph) -> TypeFrequencyTable:
    vcounts = Counter(v.type for v in graph.vertices.values())
    tcounts = Counter(
        (graph.vertices[e.src].type, e.type, graph.vertices[e.dst].type) for e in graph.edges.values()
    )
    return TypeFrequencyTable(dict(vcounts), dict(tcounts))
