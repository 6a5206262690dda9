"""Dual objective, gap certificates, trace audit and linear-rate fitting."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

MONO_SLACK = 1e-12
GAP_SLACK = 1e-10
TRACE_KEYS = ("n", "w", "f", "gap", "dist_max", "moved")
SUMMARY_HEADER = ("seed", "policy", "cycles", "final_f", "rate", "r2", "stop_reason")


class NotNormalized(ValueError):
    pass


class TraceRecord(NamedTuple):
    n: int
    w: int
    f: float
    gap: float | None
    dist_max: float | None
    moved: float
    per_vertex_distance: tuple | None = None


@dataclass
class Trace:
    """Append-only log; ``w == 0`` rows are cycle boundaries holding ``F(z^{n,0})``."""

    records: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, rec):
        self.records.append(rec)

    def boundaries(self):
        return [r for r in self.records if r.w == 0]

    def to_jsonl(self):
        out = io.StringIO()
        for r in self.records:
            out.write(json.dumps({"n": r.n, "w": r.w, "f": r.f, "gap": r.gap,
                                  "dist_max": r.dist_max, "moved": r.moved}) + "\n")
        return out.getvalue()

    @classmethod
    def from_jsonl(cls, text):
        recs = []
        for line in text.splitlines():
            if line.strip():
                d = json.loads(line)
                recs.append(TraceRecord(int(d["n"]), int(d["w"]), float(d["f"]), d.get("gap"),
                                        d.get("dist_max"), float(d.get("moved", 0.0))))
        return cls(recs, {"source": "jsonl"})


def dual_value(state, instance=None) -> float:
    """``F = sum_i support_i(z_i) + 0.5 sum_i ||x_i||^2``; edge terms vanish by representation."""
    sv = state.sval
    if np.any(np.isinf(sv)):
        return math.inf
    return float(sv.sum()) + 0.5 * float(np.einsum("ij,ij->", state.x, state.x))


def gap_from_value(f) -> float:
    return math.sqrt(max(f, 0.0) * 2.0)


def gap_bound(state, instance) -> float:
    """Bound on ``max_i ||x_i - x*||``; valid only when the optimum is the origin."""
    if not instance.is_normalized:
        raise NotNormalized("gap bound needs a normalized instance (x* = 0 with certificate)")
    return gap_from_value(dual_value(state, instance))


@dataclass(frozen=True)
class RateFit:
    rate: float
    log_slope: float
    r_squared: float
    window: tuple
    one_cycle_ratio: float
    two_cycle_ratio: float
    n_points: int

    def passes(self, r2_min=0.9):
        return 0.0 < self.rate < 1.0 and self.r_squared >= r2_min


class TooFewPoints(ValueError):
    pass


def fit_rate(trace, tail_fraction=0.5, min_points=10) -> RateFit:
    """Least-squares fit of ``ln F(z^{n,0})`` against ``n`` on the final cycles.

    Boundary values at or below ``100 * eps * F(z^{1,0})`` are discarded
    first; the window is then the last ``tail_fraction`` of what remains.
    The one- and two-cycle ratios are the largest observed ``F_{n+1}/F_n``
    and ``F_{n+1}/F_{n-1}`` inside the window.
    """
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError("tail_fraction must lie in (0, 1]")
    recs = trace.boundaries() if isinstance(trace, Trace) else list(trace)
    if not recs:
        raise TooFewPoints("trace has no cycle-boundary records")
    f1 = recs[0].f
    floor = 1e2 * np.finfo(float).eps * abs(f1)
    usable = [(r.n, r.f) for r in recs if r.f > 0.0 and r.f > floor]
    if len(usable) < min_points:
        raise TooFewPoints(f"{len(usable)} usable cycle records, need {min_points}")
    k = max(int(math.ceil(tail_fraction * len(usable))), 2)
    n = np.array([u[0] for u in usable[-k:]], dtype=float)
    y = np.log([u[1] for u in usable[-k:]])
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        # a flat window carries no decay evidence
        slope, r2 = 0.0, 0.0
    else:
        slope, intercept = np.polyfit(n, y, 1)
        resid = y - (slope * n + intercept)
        r2 = min(max(1.0 - float((resid ** 2).sum()) / ss_tot, 0.0), 1.0)
    fv = np.exp(y)
    one = float(np.max(fv[1:] / fv[:-1]))
    two = float(np.max(fv[2:] / fv[:-2])) if len(fv) > 2 else math.nan
    return RateFit(float(math.exp(slope)), float(slope), r2, (int(n[0]), int(n[-1])),
                   one, two, len(n))


def audit(trace) -> dict:
    """Check monotone ``F``, the two-cycle comparison and gap domination.

    Every check yields ``"pass"``, ``"fail"`` or ``"skipped"``; drift
    recomputations appear as ``"warn"``.
    """
    report = {}
    recs = trace.records
    bad = None
    for k in range(1, len(recs)):
        prev, cur = recs[k - 1].f, recs[k].f
        if cur > prev + MONO_SLACK * (1.0 + abs(prev)):
            bad = k
            break
    report["monotone_f"] = {"status": "pass" if bad is None else "fail"}
    if bad is not None:
        report["monotone_f"]["record"] = bad
        report["monotone_f"]["n"] = recs[bad].n
        report["monotone_f"]["w"] = recs[bad].w

    bnd = [r.f for r in recs if r.w == 0]
    two_bad = next((k for k in range(2, len(bnd))
                    if bnd[k] > bnd[k - 2] + MONO_SLACK * (1.0 + abs(bnd[k - 2]))), None)
    report["two_cycle"] = {"status": "pass" if two_bad is None else "fail"}
    if two_bad is not None:
        report["two_cycle"]["boundary"] = two_bad

    with_dist = [r for r in recs if r.gap is not None and r.dist_max is not None]
    if not with_dist:
        report["gap_domination"] = {"status": "skipped"}
    else:
        worst = max(r.dist_max - r.gap for r in with_dist)
        report["gap_domination"] = {"status": "pass" if worst <= GAP_SLACK else "fail",
                                    "worst_excess": worst}

    if trace.metadata.get("source") == "jsonl":
        report["drift"] = {"status": "skipped"}
    else:
        warns = trace.metadata.get("warnings", [])
        report["drift"] = {"status": "warn" if warns else "pass", "count": len(warns)}
    report["ok"] = all(v["status"] != "fail" for v in report.values() if isinstance(v, dict))
    return report


def summary_row(trace, tail_fraction=0.5):
    meta = trace.metadata
    bnd = trace.boundaries()
    try:
        fit = fit_rate(trace, tail_fraction)
        rate, r2 = fit.rate, fit.r_squared
    except TooFewPoints:
        rate = r2 = ""
    return {"seed": meta.get("seed", ""), "policy": meta.get("policy", ""),
            "cycles": meta.get("cycles", len(bnd) - 1), "final_f": bnd[-1].f if bnd else "",
            "rate": rate, "r2": r2, "stop_reason": meta.get("stop_reason", "")}


def write_summary(rows, fh, header=True):
    writer = csv.DictWriter(fh, fieldnames=SUMMARY_HEADER, lineterminator="\n")
    if header:
        writer.writeheader()
    for row in rows:
        writer.writerow(row)
