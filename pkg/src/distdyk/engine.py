"""Distributed Dykstra sweeps as exact block minimization of the dual value.

State is kept in the sparse form: one dual ``z_i`` per vertex, one oriented
dual ``v_e`` per edge (``+v_e`` at the smaller endpoint, ``-v_e`` at the
larger), and the primal images ``x_i = anchor - z_i - sum_e sign_i(e) v_e``.
Vertex steps project ``x_i + z_i`` onto ``C_i``; edge steps average the two
endpoint images with the edge dual removed.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _backend
from .convex_sets import normal_residual
from .diagnostics import MONO_SLACK, Trace, TraceRecord, dual_value, gap_from_value
from .topology import Block, Edge, Vertex, validate_cycle

log = logging.getLogger(__name__)

DRIFT_TOL = 1e-8


class ScheduleError(ValueError):
    pass


class InvariantError(AssertionError):
    pass


def debug_enabled():
    return os.environ.get("DYKSTRA_DEBUG") == "1"


@dataclass(eq=False)
class DualState:
    instance: object
    z: np.ndarray
    v: np.ndarray
    x: np.ndarray
    sval: np.ndarray
    _table: object = field(default=None, repr=False)

    @property
    def m(self):
        return self.instance.m

    @property
    def anchor(self):
        return self.instance.anchor

    def recompute_primal(self):
        B = self.instance.graph.incidence()
        return self.anchor[None, :] - self.z - B @ self.v

    def table(self):
        if self._table is None:
            self._table = _backend.SetTable(self.instance.sets, self.m)
        return self._table

    def copy(self):
        return DualState(self.instance, self.z.copy(), self.v.copy(), self.x.copy(),
                         self.sval.copy(), self._table)


class StepReport(NamedTuple):
    block: Block
    f_before: float
    f_after: float
    moved: float


@dataclass(frozen=True)
class StopRule:
    max_cycles: int = 10_000
    gap_eps: float = 1e-8
    plateau_rtol: float = 1e-15
    plateau_window: int = 10


def init_state(instance, warm_start=None) -> DualState:
    nv, ne, m = instance.n_vertices, instance.graph.n_edges, instance.m
    if warm_start is None:
        z = np.zeros((nv, m))
        v = np.zeros((ne, m))
    else:
        z = np.array(warm_start.z, dtype=float)
        v = np.array(warm_start.v, dtype=float)
        if z.shape != (nv, m) or v.shape != (ne, m):
            raise ValueError(f"warm start shapes {z.shape}, {v.shape} do not match "
                             f"({nv}, {m}) and ({ne}, {m})")
    sval = np.array([c.support(zi) for c, zi in zip(instance.sets, z)], dtype=float)
    state = DualState(instance, z, v, np.zeros((nv, m)), sval)
    state.x = np.ascontiguousarray(state.recompute_primal())
    return state


def anchor_warm_start(instance, anchors) -> DualState:
    """Edge duals that make the primal images equal the original per-vertex anchors.

    ``instance.anchor`` must be the mean of ``anchors``; the duals encode the
    offsets ``anchor - anchors_i`` along the graph edges.
    """
    A = np.array(anchors, dtype=float).reshape(instance.n_vertices, instance.m)
    if not np.allclose(A.mean(axis=0), instance.anchor, rtol=0, atol=1e-12 * (1 + np.abs(A).max())):
        raise ValueError("instance anchor is not the mean of the given anchors")
    B = instance.graph.incidence()
    rhs = instance.anchor[None, :] - A
    v, *_ = np.linalg.lstsq(B, rhs, rcond=None)
    seed = DualState(instance, np.zeros((instance.n_vertices, instance.m)), v, A, np.zeros(len(A)))
    return init_state(instance, seed)


def _kernel(backend):
    return _backend.get_kernel(backend)


def _apply(state, ptr, codes, kernel, xref=None):
    nb = len(ptr) - 1
    f_out, moved_out, dist_out = np.empty(nb), np.empty(nb), np.empty(nb)
    t = state.table()
    ei, ej = _edge_arrays(state)
    kernel.run_blocks(state.x, state.z, state.v, state.sval, ei, ej, ptr, codes,
                      t.kind, t.p1, t.p2, t.ps0, t.ps1, t.project_cb, xref,
                      f_out, moved_out, dist_out)
    return f_out, moved_out, dist_out


def _edge_arrays(state):
    t = state.table()
    if not hasattr(t, "edge_i"):
        edges = state.instance.graph.edges
        t.edge_i = np.array([e[0] for e in edges], dtype=np.int64)
        t.edge_j = np.array([e[1] for e in edges], dtype=np.int64)
    return t.edge_i, t.edge_j


def run_block(state, block, backend=None) -> StepReport:
    hit = block.coupling()
    if hit is not None:
        raise ScheduleError(f"block {block} is coupled on coordinate {hit[0]}")
    g = state.instance.graph
    for mem in block.members:
        if isinstance(mem, Edge) and (mem.i, mem.j) not in g._index:
            raise ScheduleError(f"{mem} is not a canonical edge of the graph")
        if isinstance(mem, Vertex) and not 0 <= mem.i < g.n_vertices:
            raise ScheduleError(f"{mem} out of range")
    f_before = dual_value(state)
    ptr, codes = _backend.encode_blocks(g, [block])
    f_out, moved_out, _ = _apply(state, ptr, codes, _kernel(backend))
    return StepReport(block, f_before, float(f_out[0]), float(moved_out[0]))


def vertex_step(state, i, backend=None) -> StepReport:
    return run_block(state, Block((Vertex(int(i)),)), backend)


def edge_step(state, e, backend=None) -> StepReport:
    i, j = e
    return run_block(state, Block((Edge(min(i, j), max(i, j)),)), backend)


def _reference(instance):
    nv = instance.n_vertices
    if instance.is_normalized:
        return np.zeros((nv, instance.m))
    if instance.certificate is not None:
        return np.ascontiguousarray(np.tile(instance.certificate.x_star, (nv, 1)))
    return None


def _debug_checks(state, block, f_before, f_after):
    inst = state.instance
    for mem in block.members:
        if isinstance(mem, Vertex):
            i = mem.i
            c = inst.sets[i]
            res = normal_residual(c, state.x[i], state.z[i])
            if res > 1e-9 * (1.0 + np.abs(state.x[i]).max()):
                raise InvariantError(f"normal-cone residual {res:.3e} at vertex {i}")
            ref = c.support(state.z[i])
            if math.isfinite(ref) and abs(ref - state.sval[i]) > 1e-9 * (1.0 + abs(ref)):
                raise InvariantError(f"support value mismatch at vertex {i}: "
                                     f"{state.sval[i]!r} vs {ref!r}")
    if f_after > f_before + MONO_SLACK * (1.0 + abs(f_before)):
        raise InvariantError(f"dual value increased on block {block}: {f_before!r} -> {f_after!r}")
    balance = state.x.sum(axis=0) + state.z.sum(axis=0) - inst.n_vertices * inst.anchor
    if np.abs(balance).max() > 1e-10 * (1.0 + inst.n_vertices * np.abs(inst.anchor).max()
                                       + np.abs(state.z).sum()):
        raise InvariantError(f"edge-sum conservation violated by {np.abs(balance).max():.3e}")


def run(instance, schedule, stop=None, warm_start=None, backend=None, debug=None):
    """Run cycles of ``schedule`` until the stop rule fires.

    Returns ``(state, trace)``. Boundary records ``(n, 0)`` hold ``F(z^{n,0})``;
    block records ``(n, w)`` hold the value after block ``w`` of cycle ``n``.
    """
    stop = stop or StopRule()
    debug = debug_enabled() if debug is None else debug
    g = instance.graph
    kernel = _kernel(backend)
    state = init_state(instance, warm_start)
    _edge_arrays(state)
    xref = _reference(instance)
    normalized = instance.is_normalized
    scale = 1.0 + float(np.linalg.norm(instance.anchor))
    B = g.incidence()
    anchor = instance.anchor[None, :]

    trace = Trace(metadata={"seed": instance.seed_info.get("seed", ""),
                            "policy": schedule.policy, "warnings": []})

    def boundary(n, f):
        gap = gap_from_value(f) if normalized else None
        if xref is None:
            dist, dmax = None, None
        else:
            diff = state.x - xref
            dist = tuple(np.sqrt(np.einsum("ij,ij->i", diff, diff)).tolist())
            dmax = max(dist)
        trace.append(TraceRecord(n, 0, f, gap, dmax, 0.0, dist))

    f = dual_value(state)
    boundary(1, f)
    fs = [f]
    # repeating policies reuse one cycle object, so only re-encode on change
    prev = encoded = None
    stop_reason = None
    n_run = min(stop.max_cycles, len(schedule.cycles))
    for n in range(1, n_run + 1):
        cycle = schedule.cycles[n - 1]
        if cycle is not prev:
            # each distinct cycle is validated before any of its blocks run
            violation = validate_cycle(g, cycle, n, schedule.starts_with_all_vertices)
            if violation is not None:
                raise ScheduleError(str(violation))
            prev, encoded = cycle, _backend.encode_blocks(g, cycle)
        ptr, codes = encoded
        if debug:
            outs = []
            for w, block in enumerate(cycle):
                p1, c1 = _backend.encode_blocks(g, [block])
                f_prev = outs[-1][0][0] if outs else fs[-1]
                out = _apply(state, p1, c1, kernel, xref)
                _debug_checks(state, block, f_prev, float(out[0][0]))
                outs.append(out)
            f_out = np.concatenate([o[0] for o in outs])
            moved_out = np.concatenate([o[1] for o in outs])
            dist_out = np.concatenate([o[2] for o in outs])
        else:
            f_out, moved_out, dist_out = _apply(state, ptr, codes, kernel, xref)
        nb = len(cycle)
        fl = f_out.tolist()
        gaps = np.sqrt(2.0 * np.maximum(f_out, 0.0)).tolist() if normalized else [None] * nb
        dists = dist_out.tolist() if xref is not None else [None] * nb
        trace.records.extend(map(TraceRecord._make, zip(
            [n] * nb, range(1, nb + 1), fl, gaps, dists, moved_out.tolist(), [None] * nb)))
        fresh = anchor - state.z - B @ state.v
        drift = float(np.abs(fresh - state.x).max()) / scale
        if drift > DRIFT_TOL:
            state.x[...] = fresh
            msg = f"cycle {n}: primal drift {drift:.3e} exceeded {DRIFT_TOL}; recomputed"
            trace.metadata["warnings"].append(msg)
            log.warning(msg)
            f = dual_value(state)
        else:
            f = float(f_out[-1])
        boundary(n + 1, f)
        fs.append(f)
        if normalized:
            if 2.0 * f <= stop.gap_eps ** 2:
                stop_reason = "gap"
                break
        elif len(fs) > stop.plateau_window:
            old = fs[-1 - stop.plateau_window]
            if old - f <= stop.plateau_rtol * abs(old):
                stop_reason = "plateau"
                break
    else:
        stop_reason = "max_cycles" if n_run == stop.max_cycles else "schedule_exhausted"
    trace.metadata["cycles"] = len(fs) - 1
    trace.metadata["stop_reason"] = stop_reason
    trace.metadata["backend"] = "python" if kernel is _backend._pykernel else "cython"
    return state, trace


def step_reports(trace, schedule):
    """Rebuild the per-block ``StepReport`` sequence from a run trace."""
    prev = None
    for rec in trace.records:
        if rec.w == 0:
            prev = rec.f
            continue
        block = schedule.cycles[rec.n - 1][rec.w - 1]
        yield StepReport(block, prev, rec.f, rec.moved)
        prev = rec.f
