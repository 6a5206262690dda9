"""Kernel selection and array encoding for the block sweep.

The compiled ``_ckernel`` is used when importable unless ``DISTDYK_PURE=1``;
otherwise the numpy fallback in ``_pykernel`` runs the same contract.
"""
import os

import numpy as np

from . import _pykernel
from .convex_sets import Ball, Box, Halfspace, WholeSpace
from .topology import Vertex

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

KIND_CODES = {WholeSpace: 0, Halfspace: 1, Ball: 2, Box: 3}


def available():
    names = ["python"]
    if _ckernel is not None:
        names.insert(0, "cython")
    return names


def get_kernel(name=None):
    if name is None:
        name = "python" if os.environ.get("DISTDYK_PURE") == "1" or _ckernel is None else "cython"
    if name == "cython":
        if _ckernel is None:
            raise ImportError("compiled kernel distdyk._ckernel is not built")
        return _ckernel
    if name == "python":
        return _pykernel
    raise ValueError(f"unknown kernel {name!r}")


def default_backend():
    return "cython" if get_kernel() is _ckernel and _ckernel is not None else "python"


class SetTable:
    """Per-vertex set parameters packed for the compiled kernel."""

    def __init__(self, sets, m):
        n = len(sets)
        self.kind = np.full(n, 4, dtype=np.int32)
        self.p1 = np.zeros((n, m))
        self.p2 = np.zeros((n, m))
        self.ps0 = np.zeros(n)
        self.ps1 = np.zeros(n)
        for i, c in enumerate(sets):
            code = KIND_CODES.get(type(c), 4)
            self.kind[i] = code
            if code == 1:
                self.p1[i] = c.normal
                self.ps0[i] = c.offset
                self.ps1[i] = c._nrm2
            elif code == 2:
                self.p1[i] = c.center
                self.ps0[i] = c.radius
                self.ps1[i] = c.center_norm
            elif code == 3:
                self.p1[i] = c.lower
                self.p2[i] = c.upper
        self.sets = list(sets)

    def project_cb(self, i, s):
        return self.sets[i].project(s)


def encode_blocks(graph, blocks):
    ptr = np.zeros(len(blocks) + 1, dtype=np.int64)
    codes = []
    for w, block in enumerate(blocks):
        for mem in block.members:
            codes.append(mem.i if isinstance(mem, Vertex) else -(graph.edge_index(mem.i, mem.j) + 1))
        ptr[w + 1] = len(codes)
    return ptr, np.array(codes, dtype=np.int64)
