"""Pure-Python homomorphism enumeration (fallback for the compiled kernel).

Both implementations share one contract, see :func:`enumerate_matches`.
"""

import numpy as np


def enumerate_matches(
    out_ptr, out_eid, out_nbr, in_ptr, in_eid, in_nbr, edge_src, edge_dst,
    vmask, emask, root, steps, count_only,
):
    """Enumerate edge-by-edge extensions of a rooted pattern.

    ``vmask[i, x]`` / ``emask[j, y]`` say whether data vertex ``x`` / edge
    ``y`` may bind pattern vertex ``i`` / edge ``j``. Each row of ``steps`` is
    ``(edge j, bound vertex a, other vertex b, mode, closing)`` with mode 0 for
    a data edge a->b, 1 for b->a and 2 for either orientation; ``closing`` is
    set when ``b`` is already bound. Returns the match count, or an int64
    array whose rows hold vertex bindings followed by edge bindings.
    """
    nv = vmask.shape[0]
    ne = emask.shape[0]
    out_ptr = out_ptr.tolist()
    out_eid = out_eid.tolist()
    out_nbr = out_nbr.tolist()
    in_ptr = in_ptr.tolist()
    in_eid = in_eid.tolist()
    in_nbr = in_nbr.tolist()
    edge_src = edge_src.tolist()
    edge_dst = edge_dst.tolist()
    vok = [row.tolist() for row in vmask]
    eok = [row.tolist() for row in emask]
    plan = [tuple(int(x) for x in row) for row in steps]
    nsteps = len(plan)
    vbind = [-1] * nv
    ebind = [-1] * ne
    rows = []
    count = 0

    def emit():
        nonlocal count
        count += 1
        if not count_only:
            rows.append(vbind + ebind)

    def step(k):
        if k == nsteps:
            emit()
            return
        j, a, b, mode, closing = plan[k]
        ok_e = eok[j]
        x = vbind[a]
        if closing:
            y = vbind[b]
            if mode != 1:
                for p in range(out_ptr[x], out_ptr[x + 1]):
                    if out_nbr[p] == y and ok_e[out_eid[p]]:
                        ebind[j] = out_eid[p]
                        step(k + 1)
            if mode != 0:
                for p in range(in_ptr[x], in_ptr[x + 1]):
                    eid = in_eid[p]
                    if in_nbr[p] == y and ok_e[eid]:
                        if mode == 2 and edge_src[eid] == edge_dst[eid]:
                            continue
                        ebind[j] = eid
                        step(k + 1)
            ebind[j] = -1
            return
        ok_v = vok[b]
        if mode != 1:
            for p in range(out_ptr[x], out_ptr[x + 1]):
                eid = out_eid[p]
                y = out_nbr[p]
                if ok_e[eid] and ok_v[y]:
                    ebind[j] = eid
                    vbind[b] = y
                    step(k + 1)
        if mode != 0:
            for p in range(in_ptr[x], in_ptr[x + 1]):
                eid = in_eid[p]
                y = in_nbr[p]
                if ok_e[eid] and ok_v[y]:
                    if mode == 2 and edge_src[eid] == edge_dst[eid]:
                        continue
                    ebind[j] = eid
                    vbind[b] = y
                    step(k + 1)
        ebind[j] = -1
        vbind[b] = -1

    root_ok = vok[root]
    for x in range(len(root_ok)):
        if root_ok[x]:
            vbind[root] = x
            step(0)
    if count_only:
        return count
    if not rows:
        return np.zeros((0, nv + ne), dtype=np.int64)
    return np.asarray(rows, dtype=np.int64)
