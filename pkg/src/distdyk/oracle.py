"""Centralized serial Dykstra projection, used as ground truth for the engine.

Shares the set projections with the engine but none of its state handling:
no graph, no edge duals.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .convex_sets import distance

log = logging.getLogger(__name__)


class OracleFailure(RuntimeError):
    def __init__(self, msg, result):
        super().__init__(msg)
        self.result = result


@dataclass(frozen=True, eq=False)
class OracleResult:
    x_star: np.ndarray
    iterations: int
    feasibility_residual: float
    certificate_residual: float
    corrections: np.ndarray
    converged: bool = True

    def multipliers(self):
        """Multipliers of the |V|-fold objective: ``|V|`` times the Dykstra corrections."""
        return len(self.corrections) * self.corrections

    def to_dict(self):
        return {"x_star": self.x_star.tolist(), "iterations": self.iterations,
                "feasibility_residual": self.feasibility_residual,
                "certificate_residual": self.certificate_residual,
                "converged": self.converged}


def centralized_dykstra(sets, xbar, max_iter=100_000, tol=1e-12, certify_samples=0, seed=0,
                        raise_on_failure=True) -> OracleResult:
    """Project ``xbar`` onto the intersection of ``sets``.

    Stops when a full pass moves the iterate and every correction vector by at
    most ``tol`` (squared sum). With a single set this is one projection.
    """
    sets = list(sets)
    if not sets:
        raise ValueError("need at least one set")
    x = np.array(xbar, dtype=float).reshape(-1)
    p = np.zeros((len(sets), x.size))
    it = 0
    converged = False
    if len(sets) == 1:
        res = sets[0].project(x)
        x, p[0] = res.point, res.normal
        it, converged = 1, True
    else:
        while it < max_iter:
            it += 1
            change = 0.0
            for k, c in enumerate(sets):
                y = x + p[k]
                xn = c.project(y).point
                pn = y - xn
                change += float((xn - x) @ (xn - x)) + float((pn - p[k]) @ (pn - p[k]))
                x, p[k] = xn, pn
            if change <= tol * tol:
                converged = True
                break
    feas = max(distance(c, x) for c in sets)
    cert = certify(sets, xbar, x, certify_samples, seed) if certify_samples else float("nan")
    result = OracleResult(x, it, feas, cert, p, converged)
    if not converged and raise_on_failure:
        raise OracleFailure(f"no convergence in {max_iter} passes (feasibility {feas:.3e})", result)
    return result


def certify(sets, xbar, x_candidate, n_samples=64, seed=0, feas_tol=1e-9) -> float:
    """Largest violation of the projection variational inequality.

    Returns the feasibility residual without sampling when the candidate lies
    outside some set by more than ``feas_tol``; otherwise samples feasible
    points ``c`` and returns ``max(0, max_c <xbar - x, c - x>)``.
    """
    sets = list(sets)
    xbar = np.asarray(xbar, dtype=float)
    x = np.asarray(x_candidate, dtype=float)
    feas = max(distance(c, x) for c in sets)
    if feas > feas_tol:
        log.warning("candidate infeasible: distance %.3e to some set", feas)
        return feas
    scale = max(1.0, float(np.linalg.norm(xbar - x)), float(np.linalg.norm(x)))
    worst = 0.0
    d = xbar - x
    for k in range(n_samples):
        sample_rng = np.random.default_rng([seed, k])
        y = x + scale * sample_rng.standard_normal(x.size)
        c = centralized_dykstra(sets, y, max_iter=20_000, tol=1e-11, raise_on_failure=False).x_star
        worst = max(worst, float(d @ (c - x)))
    return worst
