# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled homomorphism enumeration; contract mirrors _homomorphism_py."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, int32_t, uint8_t
from libcpp.vector cimport vector

cnp.import_array()


cdef struct Ctx:
    const int64_t* out_ptr
    const int64_t* out_eid
    const int64_t* out_nbr
    const int64_t* in_ptr
    const int64_t* in_eid
    const int64_t* in_nbr
    const int64_t* edge_src
    const int64_t* edge_dst
    const uint8_t* vmask
    const uint8_t* emask
    Py_ssize_t n
    Py_ssize_t m
    const int32_t* steps
    int nsteps
    int nv
    int ne
    int64_t* vbind
    int64_t* ebind
    bint count_only
    int64_t count


cdef void emit(Ctx* c, vector[int64_t]* rows) noexcept nogil:
    cdef int i
    c.count += 1
    if c.count_only:
        return
    for i in range(c.nv):
        rows.push_back(c.vbind[i])
    for i in range(c.ne):
        rows.push_back(c.ebind[i])


cdef void step(Ctx* c, int k, vector[int64_t]* rows) noexcept nogil:
    cdef int j, a, b, mode, closing
    cdef int64_t x, y, p, eid
    cdef const uint8_t* ok_e
    cdef const uint8_t* ok_v
    if k == c.nsteps:
        emit(c, rows)
        return
    j = c.steps[5 * k]
    a = c.steps[5 * k + 1]
    b = c.steps[5 * k + 2]
    mode = c.steps[5 * k + 3]
    closing = c.steps[5 * k + 4]
    ok_e = c.emask + j * c.m
    x = c.vbind[a]
    if closing:
        y = c.vbind[b]
        if mode != 1:
            for p in range(c.out_ptr[x], c.out_ptr[x + 1]):
                if c.out_nbr[p] == y and ok_e[c.out_eid[p]]:
                    c.ebind[j] = c.out_eid[p]
                    step(c, k + 1, rows)
        if mode != 0:
            for p in range(c.in_ptr[x], c.in_ptr[x + 1]):
                eid = c.in_eid[p]
                if c.in_nbr[p] == y and ok_e[eid]:
                    if mode == 2 and c.edge_src[eid] == c.edge_dst[eid]:
                        continue
                    c.ebind[j] = eid
                    step(c, k + 1, rows)
        c.ebind[j] = -1
        return
    ok_v = c.vmask + b * c.n
    if mode != 1:
        for p in range(c.out_ptr[x], c.out_ptr[x + 1]):
            eid = c.out_eid[p]
            y = c.out_nbr[p]
            if ok_e[eid] and ok_v[y]:
                c.ebind[j] = eid
                c.vbind[b] = y
                step(c, k + 1, rows)
    if mode != 0:
        for p in range(c.in_ptr[x], c.in_ptr[x + 1]):
            eid = c.in_eid[p]
            y = c.in_nbr[p]
            if ok_e[eid] and ok_v[y]:
                if mode == 2 and c.edge_src[eid] == c.edge_dst[eid]:
                    continue
                c.ebind[j] = eid
                c.vbind[b] = y
                step(c, k + 1, rows)
    c.ebind[j] = -1
    c.vbind[b] = -1


def enumerate_matches(
    const int64_t[::1] out_ptr, const int64_t[::1] out_eid, const int64_t[::1] out_nbr,
    const int64_t[::1] in_ptr, const int64_t[::1] in_eid, const int64_t[::1] in_nbr,
    const int64_t[::1] edge_src, const int64_t[::1] edge_dst,
    const uint8_t[:, ::1] vmask, const uint8_t[:, ::1] emask,
    int root, const int32_t[:, ::1] steps, bint count_only,
):
    cdef Ctx c
    cdef vector[int64_t] rows
    cdef int64_t x
    cdef Py_ssize_t n = vmask.shape[1]
    cdef int nv = vmask.shape[0]
    cdef int ne = emask.shape[0]
    cdef int64_t[::1] vbind = np.full(max(nv, 1), -1, dtype=np.int64)
    cdef int64_t[::1] ebind = np.full(max(ne, 1), -1, dtype=np.int64)
    cdef uint8_t dummy_e = 0
    cdef int32_t dummy_s = 0
    cdef int64_t dummy_i = 0

    c.out_ptr = &out_ptr[0]
    c.in_ptr = &in_ptr[0]
    c.out_eid = &out_eid[0] if out_eid.shape[0] else &dummy_i
    c.out_nbr = &out_nbr[0] if out_nbr.shape[0] else &dummy_i
    c.in_eid = &in_eid[0] if in_eid.shape[0] else &dummy_i
    c.in_nbr = &in_nbr[0] if in_nbr.shape[0] else &dummy_i
    c.edge_src = &edge_src[0] if edge_src.shape[0] else &dummy_i
    c.edge_dst = &edge_dst[0] if edge_dst.shape[0] else &dummy_i
    c.vmask = &vmask[0, 0] if n else &dummy_e
    c.emask = &emask[0, 0] if (ne and emask.shape[1]) else &dummy_e
    c.n = n
    c.m = emask.shape[1]
    c.steps = &steps[0, 0] if steps.shape[0] else &dummy_s
    c.nsteps = steps.shape[0]
    c.nv = nv
    c.ne = ne
    c.vbind = &vbind[0]
    c.ebind = &ebind[0]
    c.count_only = count_only
    c.count = 0

    with nogil:
        for x in range(n):
            if c.vmask[root * n + x]:
                c.vbind[root] = x
                step(&c, 0, &rows)

    if count_only:
        return c.count
    width = nv + ne
    out = np.empty((c.count, width), dtype=np.int64)
    cdef int64_t[:, ::1] view = out
    cdef Py_ssize_t r, i
    for r in range(c.count):
        for i in range(width):
            view[r, i] = rows[r * width + i]
    return out
