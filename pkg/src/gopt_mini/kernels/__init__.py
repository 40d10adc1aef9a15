"""Hot kernels with a compiled core and a pure-Python fallback.

The compiled extension is used when it imports; setting the environment
variable ``GOPT_MINI_KERNEL=python`` forces the fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _homomorphism_py

try:
    from . import _homomorphism as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _homomorphism_py.enumerate_matches}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled.enumerate_matches

DEFAULT_BACKEND = (
    "python" if os.environ.get("GOPT_MINI_KERNEL") == "python" or _compiled is None else "compiled"
)


@dataclass(frozen=True)
class GraphArrays:
    """CSR view of a DataGraph with dense vertex and edge indices."""

    vertex_ids: np.ndarray
    edge_ids: np.ndarray
    vertex_index: dict
    edge_index: dict
    out_ptr: np.ndarray
    out_eid: np.ndarray
    out_nbr: np.ndarray
    in_ptr: np.ndarray
    in_eid: np.ndarray
    in_nbr: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray

    @classmethod
    def from_graph(cls, graph) -> GraphArrays:
        vids = sorted(graph.vertices)
        eids = sorted(graph.edges)
        vindex = {v: i for i, v in enumerate(vids)}
        eindex = {e: i for i, e in enumerate(eids)}
        n = len(vids)

        def csr(adj, other):
            ptr = np.zeros(n + 1, dtype=np.int64)
            eid_list, nbr_list = [], []
            for i, vid in enumerate(vids):
                for eid in adj[vid]:
                    eid_list.append(eindex[eid])
                    nbr_list.append(vindex[other(graph.edges[eid])])
                ptr[i + 1] = len(eid_list)
            return ptr, np.asarray(eid_list, dtype=np.int64), np.asarray(nbr_list, dtype=np.int64)

        out_ptr, out_eid, out_nbr = csr(graph.out_adj, lambda e: e.dst)
        in_ptr, in_eid, in_nbr = csr(graph.in_adj, lambda e: e.src)
        edge_src = np.asarray([vindex[graph.edges[e].src] for e in eids], dtype=np.int64)
        edge_dst = np.asarray([vindex[graph.edges[e].dst] for e in eids], dtype=np.int64)
        return cls(
            np.asarray(vids, dtype=np.int64),
            np.asarray(eids, dtype=np.int64),
            vindex,
            eindex,
            out_ptr,
            out_eid,
            out_nbr,
            in_ptr,
            in_eid,
            in_nbr,
            edge_src,
            edge_dst,
        )


def plan_steps(nv: int, edges: list[tuple[int, int, bool]], vcand: list[int]) -> tuple[int, np.ndarray]:
    """Choose a root and an edge order in which every edge touches a bound vertex.

    ``edges`` holds ``(src, dst, both)`` over pattern vertex indices; the
    pattern must be connected. Closing edges are scheduled as soon as both
    endpoints are bound; otherwise the expansion towards the vertex with the
    fewest candidates goes next.
    """
    root = min(range(nv), key=lambda i: (vcand[i], i))
    bound = {root}
    remaining = list(range(len(edges)))
    steps = []
    while remaining:
        pick = None
        for j in remaining:
            s, d, _ = edges[j]
            if s in bound and d in bound:
                pick = j
                break
        if pick is None:
            frontier = [j for j in remaining if edges[j][0] in bound or edges[j][1] in bound]
            if not frontier:
                raise ValueError("pattern is not connected")
            pick = min(
                frontier,
                key=lambda j: (vcand[edges[j][1] if edges[j][0] in bound else edges[j][0]], j),
            )
        s, d, both = edges[pick]
        if s in bound:
            a, b, mode = s, d, 0
        else:
            a, b, mode = d, s, 1
        if both:
            mode = 2
        closing = int(b in bound)
        steps.append((pick, a, b, mode, closing))
        bound.add(b)
        remaining.remove(pick)
    if len(bound) != nv:
        raise ValueError("pattern is not connected")
    return root, np.asarray(steps, dtype=np.int32).reshape(-1, 5)


def run_matches(arrays: GraphArrays, vmask: np.ndarray, emask: np.ndarray, edges, count_only: bool, backend: str | None = None):
    """Dispatch one enumeration to the selected backend."""
    fn = BACKENDS[backend or DEFAULT_BACKEND]
    nv = vmask.shape[0]
    vcand = [int(row.sum()) for row in vmask]
    root, steps = plan_steps(nv, edges, vcand)
    return fn(
        arrays.out_ptr,
        arrays.out_eid,
        arrays.out_nbr,
        arrays.in_ptr,
        arrays.in_eid,
        arrays.in_nbr,
        arrays.edge_src,
        arrays.edge_dst,
        np.ascontiguousarray(vmask, dtype=np.uint8),
        np.ascontiguousarray(emask, dtype=np.uint8),
        root,
        steps,
        count_only,
    )
