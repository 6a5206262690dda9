"""Problem instances: anchor reduction, seeded generators and normalization.

Generated instances place the optimum at the origin and carry a dual
certificate (multipliers ``z_i`` normal to ``C_i`` at the optimum with
``sum_i z_i = |V| (anchor - x_star)``).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .convex_sets import (Ball, Box, Halfspace, WholeSpace, distance, normal_residual,
                          set_from_dict)
from .topology import Graph, build_graph

KINDS = ("balls", "halfspaces", "boxes", "mixed", "consensus")
CERT_TOL = 1e-9


class InstanceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Certificate:
    x_star: np.ndarray
    multipliers: np.ndarray

    def to_dict(self):
        return {"x_star": self.x_star.tolist(), "multipliers": self.multipliers.tolist()}


@dataclass(frozen=True, eq=False)
class Instance:
    m: int
    graph: Graph
    sets: tuple
    anchor: np.ndarray
    certificate: Certificate | None = None
    seed_info: dict = field(default_factory=dict)

    def __post_init__(self):
        anchor = np.array(self.anchor, dtype=float).reshape(-1)
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "sets", tuple(self.sets))
        if anchor.size != self.m:
            raise InstanceError(f"anchor has length {anchor.size}, expected m={self.m}")
        if len(self.sets) != self.graph.n_vertices:
            raise InstanceError(f"{len(self.sets)} sets for {self.graph.n_vertices} vertices")
        for i, c in enumerate(self.sets):
            if c.m != self.m:
                raise InstanceError(f"set {i} has dimension {c.m}, expected {self.m}")
        cert = self.certificate
        if cert is not None:
            xs = np.array(cert.x_star, dtype=float).reshape(-1)
            zs = np.array(cert.multipliers, dtype=float).reshape(self.graph.n_vertices, self.m)
            object.__setattr__(self, "certificate", Certificate(xs, zs))

    @property
    def n_vertices(self):
        return self.graph.n_vertices

    @property
    def is_normalized(self):
        return self.certificate is not None and not np.any(self.certificate.x_star)

    def to_dict(self):
        return {
            "m": self.m,
            "graph": self.graph.to_dict(),
            "anchor": self.anchor.tolist(),
            "sets": [c.to_dict() for c in self.sets],
            "certificate": None if self.certificate is None else self.certificate.to_dict(),
            "seed_info": self.seed_info,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d, check=True):
        m = int(d["m"])
        graph = build_graph(d["graph"]["n"], d["graph"]["edges"])
        sets = [set_from_dict(s, m) for s in d["sets"]]
        cert = d.get("certificate")
        if cert is not None:
            cert = Certificate(np.array(cert["x_star"], dtype=float),
                               np.array(cert["multipliers"], dtype=float))
        inst = cls(m, graph, sets, d["anchor"], cert, dict(d.get("seed_info") or {}))
        if check:
            check_certificate(inst)
        return inst

    @classmethod
    def from_json(cls, text, check=True):
        return cls.from_dict(json.loads(text), check=check)


def certificate_residuals(inst):
    """Feasibility, normal-cone and balance residuals of the stored certificate."""
    cert = inst.certificate
    if cert is None:
        return None
    feas = max(distance(c, cert.x_star) for c in inst.sets)
    normal = max(normal_residual(c, cert.x_star, z) for c, z in zip(inst.sets, cert.multipliers))
    target = inst.n_vertices * (inst.anchor - cert.x_star)
    balance = float(np.linalg.norm(cert.multipliers.sum(axis=0) - target))
    return {"feasibility": feas, "normal": normal, "balance": balance}


def check_certificate(inst, tol=CERT_TOL):
    res = certificate_residuals(inst)
    if res is None:
        return
    bad = {k: v for k, v in res.items() if not v <= tol}
    if bad:
        raise InstanceError(f"certificate violates tolerance {tol}: {bad}")


def reduce_anchors(anchors):
    """Replace per-vertex anchors by their mean.

    Returns ``(a, shift)`` with ``sum_i 0.5||x - xbar_i||^2 = sum_i 0.5||x - a||^2 + shift``.
    """
    A = np.atleast_2d(np.array(anchors, dtype=float))
    if A.shape[0] == 0:
        raise ValueError("need at least one anchor")
    a = A.mean(axis=0)
    shift = 0.5 * float(np.einsum("ij,ij->", A, A)) - 0.5 * A.shape[0] * float(a @ a)
    return a, shift


def _unit(rng, m):
    while True:
        g = rng.standard_normal(m)
        n = np.linalg.norm(g)
        if n > 1e-12:
            return g / n


def _ball_through_origin(g, rho):
    center = -rho * g
    # radius equal to the stored center norm puts 0 on the sphere to the last bit
    return Ball(center, float(np.linalg.norm(center)))


def _box_through_origin(rng, g, width_range):
    m = g.size
    k = int(np.argmax(np.abs(g)))
    sign = 1.0 if g[k] > 0 else -1.0
    lower = -rng.uniform(*width_range, size=m)
    upper = rng.uniform(*width_range, size=m)
    if sign > 0:
        upper[k] = 0.0
    else:
        lower[k] = 0.0
    normal = np.zeros(m)
    normal[k] = sign
    return Box(lower, upper), normal


def generate(kind, m, graph, seed, t_range=(0.5, 2.0), rho_range=(0.5, 2.0),
             width_range=(0.5, 2.0)) -> Instance:
    if kind not in KINDS:
        raise ValueError(f"unknown instance kind {kind!r}")
    if m < 1:
        raise ValueError("dimension must be positive")
    t_lo, t_hi = map(float, t_range)
    if not 0.0 < t_lo <= t_hi:
        raise ValueError("t_range must satisfy 0 < t_lo <= t_hi")
    rho_lo, rho_hi = map(float, rho_range)
    if not 0.0 < rho_lo <= rho_hi:
        raise ValueError("rho_range must satisfy 0 < lo <= hi")
    rng = np.random.default_rng(seed)
    nv = graph.n_vertices
    info = {"kind": kind, "seed": int(seed), "t_range": [t_lo, t_hi]}
    if kind == "consensus":
        anchor = rng.standard_normal(m)
        cert = Certificate(anchor.copy(), np.zeros((nv, m)))
        inst = Instance(m, graph, [WholeSpace(m)] * nv, anchor, cert, info)
        check_certificate(inst)
        return inst
    info["rho_range"] = [rho_lo, rho_hi]
    choices = {"balls": ["ball"], "halfspaces": ["halfspace"], "boxes": ["box"],
               "mixed": ["halfspace", "ball", "box"]}[kind]
    sets, mults = [], []
    for _ in range(nv):
        variant = choices[int(rng.integers(len(choices)))] if len(choices) > 1 else choices[0]
        g = _unit(rng, m)
        t = float(rng.uniform(t_lo, t_hi))
        if variant == "halfspace":
            sets.append(Halfspace(g, 0.0))
            normal = g
        elif variant == "ball":
            sets.append(_ball_through_origin(g, float(rng.uniform(rho_lo, rho_hi))))
            normal = g
        else:
            box, normal = _box_through_origin(rng, g, width_range)
            sets.append(box)
        mults.append(t * normal)
    mults = np.array(mults)
    anchor = mults.sum(axis=0) / nv
    inst = Instance(m, graph, sets, anchor, Certificate(np.zeros(m), mults), info)
    check_certificate(inst)
    return inst


def normalize(inst: Instance, x_star) -> Instance:
    """Translate sets and anchor by ``-x_star`` so the optimum sits at the origin."""
    x_star = np.array(x_star, dtype=float).reshape(-1)
    if x_star.size != inst.m:
        raise InstanceError("x_star has the wrong dimension")
    if not np.any(x_star):
        return inst
    shift = -x_star
    sets = [c.translate(shift) for c in inst.sets]
    cert = inst.certificate
    if cert is not None:
        cert = Certificate(cert.x_star + shift, cert.multipliers.copy())
    info = dict(inst.seed_info)
    info["normalized_by"] = x_star.tolist()
    return Instance(inst.m, inst.graph, sets, inst.anchor + shift, cert, info)
