from __future__ import annotations

import json
import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gopt_mini.graph import DataGraph, Edge, Vertex, schema_from_json  # noqa: E402

SHOP_SCHEMA_JSON = {
    "vertex_types": [
        {"name": "Person", "props": {"id": "int", "name": "string", "age": "int"}},
        {"name": "Product", "props": {"id": "int", "name": "string"}},
        {"name": "Place", "props": {"id": "int", "name": "string"}},
    ],
    "edge_types": [
        {"name": "Knows", "src": "Person", "dst": "Person", "props": {"since": "int"}},
        {"name": "Purchase", "src": "Person", "dst": "Product", "props": {}},
        {"name": "LocatedIn", "src": "Person", "dst": "Place", "props": {}},
        {"name": "ProducedIn", "src": "Product", "dst": "Place", "props": {}},
    ],
}

# triangle with a Place corner, filtered by place name, top entries by count
RUNNING_QUERY = (
    "MATCH (v1)-[e1]->(v2), (v2)-[e2]->(v3:Place) "
    "MATCH (v1)-[e3]->(v3) "
    "WHERE v3.name = 'China' "
    "RETURN v1, COUNT(v2) AS cnt ORDER BY cnt DESC, v1 LIMIT 10"
)


def shop_schema():
    return schema_from_json(SHOP_SCHEMA_JSON)


def running_graph() -> DataGraph:
    """Ten vertices over the shop schema, with a few triangles on each place."""
    vertices = [Vertex(i, "Person", {"id": i, "name": f"p{i}", "age": 20 + i}) for i in range(5)]
    vertices += [Vertex(5 + i, "Product", {"id": 5 + i, "name": f"prod{i}"}) for i in range(3)]
    vertices += [Vertex(8, "Place", {"id": 8, "name": "China"}), Vertex(9, "Place", {"id": 9, "name": "India"})]
    pairs = [
        (0, "Knows", 1), (1, "Knows", 2), (2, "Knows", 0), (3, "Knows", 4), (0, "Knows", 3),
        (0, "Purchase", 5), (1, "Purchase", 6), (3, "Purchase", 7), (4, "Purchase", 5), (2, "Purchase", 6),
        (0, "LocatedIn", 8), (1, "LocatedIn", 8), (2, "LocatedIn", 9), (3, "LocatedIn", 8), (4, "LocatedIn", 9),
        (5, "ProducedIn", 8), (6, "ProducedIn", 9), (7, "ProducedIn", 8),
    ]
    edges = [Edge(k, s, d, t, {"since": 2000 + k} if t == "Knows" else {}) for k, (s, t, d) in enumerate(pairs)]
    return DataGraph(vertices, edges)


def cardinality_graph() -> DataGraph:
    """Type frequencies Person=5, Product=5, Place=2, Knows=30, Purchase=40,
    LocatedIn=2, ProducedIn=8 (parallel edges allowed)."""
    rng = random.Random(7)
    vertices = [Vertex(i, "Person", {"id": i}) for i in range(5)]
    vertices += [Vertex(5 + i, "Product", {"id": 5 + i}) for i in range(5)]
    vertices += [Vertex(10, "Place", {"id": 10}), Vertex(11, "Place", {"id": 11})]
    spec = [("Knows", range(5), range(5), 30), ("Purchase", range(5), range(5, 10), 40),
            ("LocatedIn", range(5), range(10, 12), 2), ("ProducedIn", range(5, 10), range(10, 12), 8)]
    edges = []
    for etype, srcs, dsts, n in spec:
        for _ in range(n):
            edges.append(Edge(len(edges), rng.choice(list(srcs)), rng.choice(list(dsts)), etype, {}))
    return DataGraph(vertices, edges)


TRIANGLE_QUERY = "MATCH (a:A)-[e1:X]->(b:B), (b)-[e2:Y]->(c:C), (a)-[e3:Z]->(c) RETURN a"


def divergence_graph() -> DataGraph:
    """Dense typed triangle with parallel edges: 5 A, 2 B, 1 C vertices and
    60 X, 20 Y, 20 Z edges. The two backend profiles plan it differently."""
    rng = random.Random(23)
    for _ in range(3):
        rng.randint(1, 8)  # keep the stream aligned with the search that found it
    nA, nB, nC = 5, 2, 1
    vertices = [Vertex(i, t, {}) for i, t in enumerate(["A"] * nA + ["B"] * nB + ["C"] * nC)]
    A, B, C = range(nA), range(nA, nA + nB), range(nA + nB, nA + nB + nC)
    edges = []
    for etype, srcs, dsts in (("X", A, B), ("Y", B, C), ("Z", A, C)):
        for _ in range(rng.choice([1, 2, 5, 20, 60])):
            edges.append(Edge(len(edges), rng.choice(list(srcs)), rng.choice(list(dsts)), etype, {}))
    return DataGraph(vertices, edges)


IC2_QUERY = (
    "MATCH (p:Person)-[k:Knows]-(f:Person)<-[h:HasCreator]-(m:Message) WHERE p.id = 3 "
    "RETURN f, m, m.date AS d ORDER BY d DESC, m LIMIT 20"
)


def ic2_graph(seed: int = 2, persons: int = 60, knows: int = 240, messages: int = 600) -> DataGraph:
    """Friends-and-their-messages social graph with one Knows-selective start person."""
    rng = random.Random(seed)
    vertices = [Vertex(i, "Person", {"id": i, "name": f"p{i}"}) for i in range(persons)]
    vertices += [Vertex(1000 + i, "Message", {"id": 1000 + i, "date": rng.randint(0, 100)}) for i in range(messages)]
    edges = []
    for _ in range(knows):
        a, b = rng.sample(range(persons), 2)
        edges.append(Edge(len(edges), a, b, "Knows", {}))
    for i in range(messages):
        edges.append(Edge(len(edges), 1000 + i, rng.randrange(persons), "HasCreator", {}))
    return DataGraph(vertices, edges)


def self_loop_graph() -> DataGraph:
    return DataGraph([Vertex(1, "Person", {"id": 1})], [Edge(1, 1, 1, "Knows", {})])


def write_json(path: Path, data) -> str:
    path.write_text(json.dumps(data))
    return str(path)


@pytest.fixture
def schema():
    return shop_schema()


@pytest.fixture
def graph():
    return running_graph()


@pytest.fixture
def files(tmp_path):
    """Schema, graph and running-query files on disk."""
    g = running_graph()
    return {
        "schema": write_json(tmp_path / "schema.json", SHOP_SCHEMA_JSON),
        "graph": write_json(tmp_path / "graph.json", g.to_json()),
        "query": str(_write(tmp_path / "q.cypher", RUNNING_QUERY)),
        "dir": tmp_path,
    }


def _write(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


# one line per acceptance criterion, printed after the run
ACCEPTANCE_RESULTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[n])
