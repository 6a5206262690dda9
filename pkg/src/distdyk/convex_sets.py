"""Closed convex sets with exact Euclidean projections and support functions.

Every set exposes ``project``, ``support`` and ``translate``. The module-level
functions :func:`project`, :func:`support` and :func:`normal_residual` are thin
dispatchers kept for call sites that treat sets generically.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

FEAS_TOL = 1e-9
COLLINEAR_TOL = 1e-9
MAX_POLY_ROWS = 32

# condition number above which an active row subset is treated as rank deficient
_RANK_COND = 1e12


class DegenerateActiveSet(ArithmeticError):
    """The accepted polyhedral active set is numerically rank deficient."""

    def __init__(self, active):
        self.active = tuple(int(k) for k in active)
        super().__init__(f"rank-deficient active set {self.active}")


class ProjectionResult(NamedTuple):
    point: np.ndarray
    normal: np.ndarray
    support_value: float


def _vec(a, name="vector"):
    arr = np.array(a, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} must be nonempty")
    return arr


@dataclass(frozen=True, eq=False)
class WholeSpace:
    m: int
    variant = "whole_space"

    def project(self, s):
        s = np.asarray(s, dtype=float)
        return ProjectionResult(s.copy(), np.zeros_like(s), 0.0)

    def support(self, z):
        return 0.0 if not np.any(np.asarray(z)) else math.inf

    def translate(self, shift):
        return self

    def to_dict(self):
        return {"variant": self.variant, "m": self.m}


@dataclass(frozen=True, eq=False)
class Halfspace:
    """``{x : <a, x> <= b}``."""

    normal: np.ndarray
    offset: float
    variant = "halfspace"

    def __post_init__(self):
        a = _vec(self.normal, "normal")
        nrm2 = float(a @ a)
        if not nrm2 > 0.0 or not np.all(np.isfinite(a)):
            raise ValueError("halfspace normal must be finite and nonzero")
        object.__setattr__(self, "normal", a)
        object.__setattr__(self, "offset", float(self.offset))
        object.__setattr__(self, "_nrm2", nrm2)

    @property
    def m(self):
        return self.normal.size

    def project(self, s):
        s = np.asarray(s, dtype=float)
        lam = (float(self.normal @ s) - self.offset) / self._nrm2
        if lam <= 0.0:
            return ProjectionResult(s.copy(), np.zeros_like(s), 0.0)
        # normal built as lam*a keeps it exactly on the normal ray
        nv = lam * self.normal
        return ProjectionResult(s - nv, nv, lam * self.offset)

    def support(self, z):
        z = np.asarray(z, dtype=float)
        t = float(self.normal @ z) / self._nrm2
        nz = float(np.linalg.norm(z))
        if nz == 0.0:
            return 0.0
        if t < 0.0 or np.linalg.norm(z - t * self.normal) > COLLINEAR_TOL * nz:
            return math.inf
        return t * self.offset

    def translate(self, shift):
        return Halfspace(self.normal, self.offset + float(self.normal @ shift))

    def to_dict(self):
        return {"variant": self.variant, "normal": self.normal.tolist(),
                "offset": self.offset}


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float
    variant = "ball"

    def __post_init__(self):
        c = _vec(self.center, "center")
        rho = float(self.radius)
        if not rho > 0.0 or not math.isfinite(rho):
            raise ValueError("ball radius must be positive and finite")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", rho)
        object.__setattr__(self, "_cnorm", float(np.linalg.norm(c)))

    @property
    def m(self):
        return self.center.size

    @property
    def center_norm(self):
        return self._cnorm

    def project(self, s):
        s = np.asarray(s, dtype=float)
        d = s - self.center
        nd = float(np.linalg.norm(d))
        if nd <= self.radius:
            return ProjectionResult(s.copy(), np.zeros_like(s), 0.0)
        dhat = d / nd
        point = self.center + self.radius * dhat
        # <normal, point> = (nd - rho) * (rho + <dhat, c>), rewritten so that
        # a ball with 0 on its sphere gives a nonnegative value without cancellation
        if self._cnorm > 0.0:
            w = dhat + self.center / self._cnorm
            inner = (self.radius - self._cnorm) + 0.5 * self._cnorm * float(w @ w)
        else:
            inner = self.radius
        return ProjectionResult(point, s - point, (nd - self.radius) * inner)

    def support(self, z):
        z = np.asarray(z, dtype=float)
        return float(z @ self.center) + self.radius * float(np.linalg.norm(z))

    def translate(self, shift):
        return Ball(self.center + shift, self.radius)

    def to_dict(self):
        return {"variant": self.variant, "center": self.center.tolist(),
                "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray
    variant = "box"

    def __post_init__(self):
        lo, hi = _vec(self.lower, "lower"), _vec(self.upper, "upper")
        if lo.shape != hi.shape:
            raise ValueError("box bounds differ in length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
            raise ValueError("box requires lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def m(self):
        return self.lower.size

    def project(self, s):
        s = np.asarray(s, dtype=float)
        point = np.clip(s, self.lower, self.upper)
        normal = s - point
        # nonzero normal entries sit exactly on a finite bound
        return ProjectionResult(point, normal, float(normal @ point))

    def support(self, z):
        z = np.asarray(z, dtype=float)
        total = 0.0
        for zk, lk, uk in zip(z, self.lower, self.upper):
            if zk > 0.0:
                total += zk * uk
            elif zk < 0.0:
                total += zk * lk
        return total

    def translate(self, shift):
        return Box(self.lower + shift, self.upper + shift)

    def to_dict(self):
        return {"variant": self.variant, "lower": _encode_floats(self.lower),
                "upper": _encode_floats(self.upper)}


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """``{x : A x <= b}`` with at most 32 rows, projected by active-set enumeration."""

    rows: np.ndarray
    rhs: np.ndarray
    tol: float = field(default=FEAS_TOL)
    variant = "polyhedron"

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.rows, dtype=float))
        b = _vec(self.rhs, "rhs")
        if A.shape[0] != b.size:
            raise ValueError("polyhedron rows and rhs differ in length")
        if A.shape[0] > MAX_POLY_ROWS:
            raise ValueError(f"polyhedron limited to {MAX_POLY_ROWS} rows, got {A.shape[0]}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("polyhedron data must be finite")
        object.__setattr__(self, "rows", A)
        object.__setattr__(self, "rhs", b)
        try:
            self.project(np.zeros(A.shape[1]))
        except DegenerateActiveSet:
            pass
        except ValueError as exc:
            raise ValueError("polyhedron is empty") from exc

    @property
    def m(self):
        return self.rows.shape[1]

    def _subsets(self):
        k, m = self.rows.shape
        for size in range(0, min(k, m) + 1):
            yield from itertools.combinations(range(k), size)

    def project(self, s):
        s = np.asarray(s, dtype=float)
        A, b, tol = self.rows, self.rhs, self.tol
        scale = 1.0 + float(np.max(np.abs(s))) + float(np.max(np.abs(b)))
        degenerate = None
        for active in self._subsets():
            if not active:
                if np.all(A @ s <= b + tol * scale):
                    return ProjectionResult(s.copy(), np.zeros_like(s), 0.0)
                continue
            Aa = A[list(active)]
            gram = Aa @ Aa.T
            if np.linalg.cond(gram) > _RANK_COND:
                lam, *_ = np.linalg.lstsq(gram, Aa @ s - b[list(active)], rcond=None)
                x = s - Aa.T @ lam
                if (np.all(lam >= -tol * scale) and np.all(A @ x <= b + tol * scale)
                        and np.allclose(Aa @ x, b[list(active)], atol=tol * scale)):
                    degenerate = degenerate or active
                continue
            lam = np.linalg.solve(gram, Aa @ s - b[list(active)])
            if np.any(lam < -tol * scale):
                continue
            x = s - Aa.T @ lam
            if np.all(A @ x <= b + tol * scale):
                lam = np.maximum(lam, 0.0)
                normal = Aa.T @ lam
                return ProjectionResult(s - normal, normal, float(lam @ b[list(active)]))
        if degenerate is not None:
            raise DegenerateActiveSet(degenerate)
        raise ValueError("no KKT-consistent active set; polyhedron may be empty")

    def support(self, z):
        # LP duality: sup{<z,x> : Ax <= b} = min{<b,lam> : A^T lam = z, lam >= 0},
        # attained at a basic solution over linearly independent rows
        z = np.asarray(z, dtype=float)
        A, b = self.rows, self.rhs
        nz = float(np.linalg.norm(z))
        if nz == 0.0:
            return 0.0
        best = math.inf
        for active in self._subsets():
            if not active:
                continue
            At = A[list(active)].T
            if np.linalg.matrix_rank(At) < len(active):
                continue
            lam, *_ = np.linalg.lstsq(At, z, rcond=None)
            if np.linalg.norm(At @ lam - z) > COLLINEAR_TOL * nz:
                continue
            if np.any(lam < -COLLINEAR_TOL * nz):
                continue
            best = min(best, float(np.maximum(lam, 0.0) @ b[list(active)]))
        return best

    def translate(self, shift):
        return Polyhedron(self.rows, self.rhs + self.rows @ shift, self.tol)

    def to_dict(self):
        return {"variant": self.variant, "rows": self.rows.tolist(),
                "rhs": self.rhs.tolist()}


ConvexSet = WholeSpace | Halfspace | Ball | Box | Polyhedron


def project(cset, s) -> ProjectionResult:
    return cset.project(s)


def support(cset, z) -> float:
    return cset.support(z)


def normal_residual(cset, x, z) -> float:
    """Distance ``||P(x + z) - x||``; zero iff ``x`` is in the set and ``z`` is normal there."""
    x = np.asarray(x, dtype=float)
    p = cset.project(x + np.asarray(z, dtype=float)).point
    return float(np.linalg.norm(p - x))


def distance(cset, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(cset.project(x).point - x))


def _encode_floats(arr):
    out = []
    for v in arr:
        v = float(v)
        out.append(v if math.isfinite(v) else ("inf" if v > 0 else "-inf"))
    return out


def _decode_floats(seq):
    return np.array([float(v) for v in seq], dtype=float)


def set_from_dict(d, m=None) -> ConvexSet:
    variant = d.get("variant")
    if variant == "whole_space":
        dim = d.get("m", m)
        if dim is None:
            raise ValueError("whole_space set needs a dimension")
        return WholeSpace(int(dim))
    if variant == "halfspace":
        return Halfspace(_decode_floats(d["normal"]), float(d["offset"]))
    if variant == "ball":
        return Ball(_decode_floats(d["center"]), float(d["radius"]))
    if variant == "box":
        return Box(_decode_floats(d["lower"]), _decode_floats(d["upper"]))
    if variant == "polyhedron":
        return Polyhedron(np.array(d["rows"], dtype=float), _decode_floats(d["rhs"]))
    raise ValueError(f"unknown set variant {variant!r}")
