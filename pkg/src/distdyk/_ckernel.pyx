# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled block sweep. Same contract as ``distdyk._pykernel.run_blocks``."""
import numpy as np

from libc.math cimport sqrt

cdef enum:
    WHOLE = 0
    HALFSPACE = 1
    BALL = 2
    BOX = 3
    CALLBACK = 4


cdef double _vertex(double[:, ::1] x, double[:, ::1] z, double[::1] sval, Py_ssize_t i,
                    int kind, double[:, ::1] p1, double[:, ::1] p2, double s0, double s1,
                    object project_cb, double[::1] s, double[::1] pt):
    cdef Py_ssize_t k, m = x.shape[1]
    cdef double lam, nd, inner, wk, moved2 = 0.0, sv = 0.0, diff
    cdef double[::1] rp, rn
    for k in range(m):
        s[k] = x[i, k] + z[i, k]
    if kind == WHOLE:
        for k in range(m):
            pt[k] = s[k]
        for k in range(m):
            diff = pt[k] - x[i, k]
            moved2 += diff * diff
            x[i, k] = pt[k]
            z[i, k] = 0.0
        sval[i] = 0.0
        return moved2
    if kind == HALFSPACE:
        lam = 0.0
        for k in range(m):
            lam += p1[i, k] * s[k]
        lam = (lam - s0) / s1
        if lam <= 0.0:
            for k in range(m):
                diff = s[k] - x[i, k]
                moved2 += diff * diff
                x[i, k] = s[k]
                z[i, k] = 0.0
            sval[i] = 0.0
            return moved2
        for k in range(m):
            wk = lam * p1[i, k]
            pt[k] = s[k] - wk
            diff = pt[k] - x[i, k]
            moved2 += diff * diff
            x[i, k] = pt[k]
            z[i, k] = wk
        sval[i] = lam * s0
        return moved2
    if kind == BALL:
        nd = 0.0
        for k in range(m):
            wk = s[k] - p1[i, k]
            nd += wk * wk
        nd = sqrt(nd)
        if nd <= s0:
            for k in range(m):
                diff = s[k] - x[i, k]
                moved2 += diff * diff
                x[i, k] = s[k]
                z[i, k] = 0.0
            sval[i] = 0.0
            return moved2
        inner = 0.0
        for k in range(m):
            wk = (s[k] - p1[i, k]) / nd
            pt[k] = p1[i, k] + s0 * wk
            if s1 > 0.0:
                wk = wk + p1[i, k] / s1
                inner += wk * wk
        if s1 > 0.0:
            inner = (s0 - s1) + 0.5 * s1 * inner
        else:
            inner = s0
        for k in range(m):
            diff = pt[k] - x[i, k]
            moved2 += diff * diff
            x[i, k] = pt[k]
            z[i, k] = s[k] - pt[k]
        sval[i] = (nd - s0) * inner
        return moved2
    if kind == BOX:
        for k in range(m):
            wk = s[k]
            if wk < p1[i, k]:
                wk = p1[i, k]
            if wk > p2[i, k]:
                wk = p2[i, k]
            pt[k] = wk
            z[i, k] = s[k] - wk
            sv += z[i, k] * wk
            diff = wk - x[i, k]
            moved2 += diff * diff
            x[i, k] = wk
        sval[i] = sv
        return moved2
    res = project_cb(i, np.asarray(s).copy())
    rp = np.ascontiguousarray(res.point, dtype=np.float64)
    rn = np.ascontiguousarray(res.normal, dtype=np.float64)
    for k in range(m):
        diff = rp[k] - x[i, k]
        moved2 += diff * diff
        x[i, k] = rp[k]
        z[i, k] = rn[k]
    sval[i] = float(res.support_value)
    return moved2


cpdef double dual_value(double[:, ::1] x, double[::1] sval):
    cdef Py_ssize_t i, k
    cdef double f = 0.0, q = 0.0
    for i in range(x.shape[0]):
        f += sval[i]
    for i in range(x.shape[0]):
        for k in range(x.shape[1]):
            q += x[i, k] * x[i, k]
    return f + 0.5 * q


def run_blocks(double[:, ::1] x, double[:, ::1] z, double[:, ::1] v, double[::1] sval,
               long long[::1] edge_i, long long[::1] edge_j,
               long long[::1] block_ptr, long long[::1] members,
               int[::1] kind, double[:, ::1] p1, double[:, ::1] p2,
               double[::1] ps0, double[::1] ps1, object project_cb, object xref,
               double[::1] f_out, double[::1] moved_out, double[::1] dist_out):
    cdef Py_ssize_t w, q, i, j, e, k, m = x.shape[1]
    cdef long long code
    cdef double moved2, ri, rj, mid, di, dj, dist, best
    cdef double[::1] s = np.empty(m)
    cdef double[::1] pt = np.empty(m)
    cdef double[:, ::1] ref
    cdef bint has_ref = xref is not None
    if has_ref:
        ref = xref
    for w in range(block_ptr.shape[0] - 1):
        moved2 = 0.0
        for q in range(block_ptr[w], block_ptr[w + 1]):
            code = members[q]
            if code >= 0:
                i = <Py_ssize_t>code
                moved2 += _vertex(x, z, sval, i, kind[i], p1, p2, ps0[i], ps1[i],
                                  project_cb, s, pt)
            else:
                e = <Py_ssize_t>(-code - 1)
                i = <Py_ssize_t>edge_i[e]
                j = <Py_ssize_t>edge_j[e]
                for k in range(m):
                    ri = x[i, k] + v[e, k]
                    rj = x[j, k] - v[e, k]
                    mid = 0.5 * (ri + rj)
                    di = mid - x[i, k]
                    dj = mid - x[j, k]
                    moved2 += di * di + dj * dj
                    x[i, k] = mid
                    x[j, k] = mid
                    v[e, k] = 0.5 * (ri - rj)
        f_out[w] = dual_value(x, sval)
        moved_out[w] = sqrt(moved2)
        if has_ref:
            best = 0.0
            for i in range(x.shape[0]):
                dist = 0.0
                for k in range(m):
                    di = x[i, k] - ref[i, k]
                    dist += di * di
                if dist > best:
                    best = dist
            dist_out[w] = sqrt(best)
