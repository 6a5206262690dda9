"""Pure-Python block sweep, the fallback for the compiled ``_ckernel``.

Both implementations share :func:`run_blocks`, which mutates the state arrays
in place. Here every vertex projection goes through ``project_cb`` (the
:mod:`distdyk.convex_sets` objects); the compiled kernel inlines the analytic
set kinds and only calls back for polyhedra.
"""
import numpy as np


def dual_value(x, sval):
    return float(sval.sum()) + 0.5 * float(np.einsum("ij,ij->", x, x))


def run_blocks(x, z, v, sval, edge_i, edge_j, block_ptr, members,
               kind, p1, p2, ps0, ps1, project_cb, xref, f_out, moved_out, dist_out):
    for w in range(len(block_ptr) - 1):
        moved2 = 0.0
        for k in range(block_ptr[w], block_ptr[w + 1]):
            code = members[k]
            if code >= 0:
                i = code
                res = project_cb(i, x[i] + z[i])
                diff = res.point - x[i]
                moved2 += float(diff @ diff)
                x[i] = res.point
                z[i] = res.normal
                sval[i] = res.support_value
            else:
                e = -code - 1
                i, j = edge_i[e], edge_j[e]
                # primal images with this edge's dual removed
                r_i = x[i] + v[e]
                r_j = x[j] - v[e]
                mid = 0.5 * (r_i + r_j)
                di, dj = mid - x[i], mid - x[j]
                moved2 += float(di @ di) + float(dj @ dj)
                x[i] = mid
                x[j] = mid
                v[e] = 0.5 * (r_i - r_j)
        f_out[w] = dual_value(x, sval)
        moved_out[w] = np.sqrt(moved2)
        if xref is not None:
            dist_out[w] = float(np.sqrt(((x - xref) ** 2).sum(axis=1).max()))
