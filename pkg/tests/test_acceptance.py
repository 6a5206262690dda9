"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Run alone with ``python3 tests/test_acceptance.py`` or as part of ``pytest``.
The instance sweep is computed once per session and shared by criteria 1-5.
"""
import itertools
import math
import time

import numpy as np
import pytest

from distdyk.cli import main as cli_main
from distdyk.convex_sets import Ball, Box, Halfspace, Polyhedron, WholeSpace
from distdyk.diagnostics import TooFewPoints, Trace, TraceRecord, fit_rate
from distdyk.engine import StopRule, anchor_warm_start, init_state, run, run_block
from distdyk.instances import Certificate, Instance, generate, normalize, reduce_anchors
from distdyk.oracle import centralized_dykstra
from distdyk.topology import Block, graph_from_spec, make_schedule

KINDS = ("balls", "halfspaces", "boxes", "mixed")
DIMS = (2, 3, 5)
GRAPHS = ("path", "cycle", "star")
SIZES = (3, 5, 8)
SEEDS = range(100)
BASE_POLICIES = ("cyclic_v_first", "singleton_cyclic")
LIFTED_POLICIES = ("singleton_cyclic", "random_coverage")
# the default 1e4-cycle budget is too short for ill-conditioned draws whose
# linear rate is 1 - 1e-4 or slower; the sweep allows 5e5
SWEEP_STOP = StopRule(max_cycles=500_000, gap_eps=1e-8)
ORACLE_ITERS = 100_000

MONO = 1e-12
GAP_TOL = 1e-10
AGREE_TOL = 1e-5
R2_MIN = 0.9

_verdicts = {}


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    _verdicts[number] = line
    print("\n" + line, flush=True)
    return ok


def sweep_config(seed):
    """Each seed fixes one (m, graph family, |V|) cell of the 3x3x3 grid."""
    m = DIMS[seed % 3]
    spec = f"{GRAPHS[(seed // 3) % 3]}:{SIZES[(seed // 9) % 3]}"
    return m, spec


def run_stats(inst, policy, seed, oracle_x):
    sched = make_schedule(inst.graph, policy, SWEEP_STOP.max_cycles, seed=seed)
    state, trace = run(inst, sched, SWEEP_STOP)
    recs = trace.records
    f = np.fromiter((r.f for r in recs), float, len(recs))
    w = np.fromiter((r.w for r in recs), int, len(recs))
    blk = w[1:] > 0
    excess = f[1:][blk] - f[:-1][blk] - MONO * (1 + np.abs(f[:-1][blk]))
    bnd = [r for r in recs if r.w == 0]
    gap_excess = max(r.dist_max - r.gap for r in bnd)
    all_excess = max(r.dist_max - r.gap for r in recs)
    try:
        fit = fit_rate(trace, 0.5)
        rate, r2 = fit.rate, fit.r_squared
    except TooFewPoints:
        rate = r2 = math.nan
    err0 = float(np.linalg.norm(state.x, axis=1).max())
    err_orc = float(np.linalg.norm(state.x - oracle_x, axis=1).max())
    return {"policy": policy, "stop": trace.metadata["stop_reason"],
            "cycles": trace.metadata["cycles"], "mono_excess": float(excess.max(initial=-1.0)),
            "gap_excess": gap_excess, "gap_excess_all": all_excess, "err0": err0,
            "err_oracle": err_orc, "rate": rate, "r2": r2}


@pytest.fixture(scope="session")
def sweep():
    t0 = time.perf_counter()
    rows = []
    for kind in KINDS:
        for seed in SEEDS:
            m, spec = sweep_config(seed)
            inst = generate(kind, m, graph_from_spec(spec), seed)
            orc = centralized_dykstra(inst.sets, inst.anchor, max_iter=ORACLE_ITERS,
                                      raise_on_failure=False)
            for policy in ("cyclic_v_first", "singleton_cyclic", "random_coverage"):
                row = run_stats(inst, policy, seed, orc.x_star)
                row.update(kind=kind, seed=seed, m=m, graph=spec,
                           oracle_err0=float(np.linalg.norm(orc.x_star)),
                           oracle_converged=orc.converged)
                rows.append(row)
        print(f"\nsweep: {kind} done after {time.perf_counter() - t0:.0f}s", flush=True)
    print(f"\nsweep: {len(rows)} runs in {time.perf_counter() - t0:.0f}s", flush=True)
    return rows


def tag(r):
    return f"{r['kind']}/seed{r['seed']}/m{r['m']}/{r['graph']}/{r['policy']}"


def check_1(rows):
    bad = [r for r in rows if r["mono_excess"] > 0]
    return not bad, f"{len(rows)} runs, worst slack use {max(r['mono_excess'] for r in rows):+.2e}", bad


def check_2(rows):
    bad = [r for r in rows if r["gap_excess"] > GAP_TOL]
    worst = max(r["gap_excess"] for r in rows)
    worst_all = max(r["gap_excess_all"] for r in rows)
    return (not bad, f"worst max_i|x_i| - sqrt(2F) at boundaries {worst:.2e} "
            f"(all records {worst_all:.2e})", bad)


def check_3(rows):
    bad = [r for r in rows if not (r["err0"] <= AGREE_TOL and r["err_oracle"] <= AGREE_TOL)]
    detail = (f"{len(rows) - len(bad)}/{len(rows)} runs within {AGREE_TOL:g}"
              + "".join(f"; {tag(r)} stop={r['stop']} |x|={r['err0']:.1e} "
                        f"|x-oracle|={r['err_oracle']:.1e} oracle|x*|={r['oracle_err0']:.1e}"
                        for r in bad[:6]))
    return not bad, detail, bad


def check_4_sweep(rows):
    rated = [r for r in rows if r["kind"] in ("balls", "halfspaces")]
    bad = [r for r in rated if not (0 < r["rate"] < 1 and r["r2"] >= R2_MIN)]
    r2s = [r["r2"] for r in rated if not math.isnan(r["r2"])]
    detail = (f"{len(rated) - len(bad)}/{len(rated)} ball/halfspace runs with r in (0,1) and "
              f"r2 >= {R2_MIN}; min r2 {min(r2s):.4f}, max r {max(r['rate'] for r in rated):.7f}")
    return not bad, detail, bad


def negative_control(n_cycles=1000):
    trace = Trace([TraceRecord(n, 0, 1.0 / n, None, None, 0.0) for n in range(1, n_cycles + 1)])
    return fit_rate(trace, 0.5)


def _emit(number, result):
    ok, detail, bad = result
    report(number, ok, detail)
    return ok, bad


def test_criterion_1_monotone_dual_value(sweep):
    ok, bad = _emit(1, check_1([r for r in sweep if r["policy"] in BASE_POLICIES]))
    assert ok, [tag(r) for r in bad[:10]]


def test_criterion_2_gap_certificate(sweep):
    ok, bad = _emit(2, check_2([r for r in sweep if r["policy"] in BASE_POLICIES]))
    assert ok, [tag(r) for r in bad[:10]]


def test_criterion_3_oracle_equivalence(sweep):
    ok, bad = _emit(3, check_3([r for r in sweep if r["policy"] in BASE_POLICIES]))
    assert ok, [tag(r) for r in bad[:10]]


def test_criterion_4_linear_rate(sweep):
    ok_sweep, detail, bad = check_4_sweep([r for r in sweep if r["policy"] in BASE_POLICIES])
    ctl = negative_control()
    ctl_fails = not ctl.passes(R2_MIN)
    report(4, ok_sweep and ctl_fails,
           f"sweep {'ok' if ok_sweep else 'FAIL'}: {detail}; negative control F_n=1/n "
           f"gives r={ctl.rate:.6f}, r2={ctl.r_squared:.4f} -> "
           f"{'rejected' if ctl_fails else 'NOT rejected'} by the r2 >= {R2_MIN} threshold")
    assert ok_sweep, [tag(r) for r in bad[:10]]
    assert ctl_fails, f"1/n control passes the threshold (r2={ctl.r_squared:.4f})"


def test_criterion_5_lifted_schedules(sweep):
    parts = []
    oks = []
    for policy in LIFTED_POLICIES:
        rows = [r for r in sweep if r["policy"] == policy]
        res = [check_1(rows), check_2(rows), check_3(rows), check_4_sweep(rows)]
        oks.extend(r[0] for r in res)
        parts.append(f"{policy}: c1 {'ok' if res[0][0] else 'fail'}, c2 {'ok' if res[1][0] else 'fail'}, "
                     f"c3 {'ok' if res[2][0] else 'fail'} ({len(rows) - len(res[2][2])}/{len(rows)}), "
                     f"c4-sweep {'ok' if res[3][0] else 'fail'}")
    report(5, all(oks), "; ".join(parts))
    assert all(oks)


def test_criterion_6_consensus():
    worst = 0.0
    runs = 0
    for seed in SEEDS:
        m, spec = sweep_config(seed)
        g = graph_from_spec(spec)
        rng = np.random.default_rng([6, seed])
        anchors = 3 * rng.standard_normal((g.n_vertices, m))
        a, _ = reduce_anchors(anchors)
        base = Instance(m, g, [WholeSpace(m)] * g.n_vertices, a,
                        Certificate(a.copy(), np.zeros((g.n_vertices, m))))
        inst = normalize(base, a)
        warm = anchor_warm_start(inst, anchors - a)
        for policy in BASE_POLICIES:
            state, trace = run(inst, make_schedule(g, policy, 100_000),
                               StopRule(max_cycles=100_000, gap_eps=1e-11), warm_start=warm)
            x = state.x + a
            worst = max(worst, float(np.abs(x - a).max()))
            runs += 1
            assert trace.metadata["stop_reason"] == "gap"
    ok = worst <= 1e-9
    report(6, ok, f"{runs} runs from per-vertex anchors, worst |x_i - mean| = {worst:.2e}")
    assert ok


# --- criterion 7 ------------------------------------------------------------

def _random_set(variant, rng, m):
    if variant == "whole":
        return WholeSpace(m)
    if variant == "halfspace":
        return Halfspace(rng.standard_normal(m), rng.standard_normal())
    if variant == "ball":
        return Ball(rng.standard_normal(m), rng.uniform(0.1, 3))
    if variant == "box":
        lo, up = -rng.uniform(0, 2, m), rng.uniform(0, 2, m)
        lo[rng.random(m) < 0.2] = -np.inf
        up[rng.random(m) < 0.2] = np.inf
        return Box(lo, up)
    k = int(rng.integers(1, 5))
    return Polyhedron(rng.standard_normal((k, m)), rng.uniform(0.05, 1.0, k))


def grid_projection(P, s, step=1e-3, coarse=0.02, chunk=2_000_000):
    """Nearest feasible point of a step-``step`` grid; returns ``(point, squared distance)``.

    0 is feasible for the test polyhedra, so the answer lies within ``|s|`` of
    ``s``. For m <= 2 that box is scanned densely; for m = 3 a coarse pass picks
    the region refined at full resolution.
    """
    m = s.size
    R = float(np.linalg.norm(s)) + step

    def scan(lo, hi, h):
        axes = [np.arange(a, b + h / 2, h) for a, b in zip(lo, hi)]
        last = axes[-1]
        heads = list(itertools.product(*axes[:-1]))
        per = max(1, chunk // last.size)
        best, best_d = None, math.inf
        for start in range(0, len(heads), per):
            sl = heads[start:start + per]
            hb = np.array(sl, dtype=float).reshape(len(sl), m - 1)
            pts = np.concatenate([np.repeat(hb, last.size, axis=0),
                                  np.tile(last, len(sl))[:, None]], axis=1)
            ok = np.all(pts @ P.rows.T <= P.rhs, axis=1)
            if not ok.any():
                continue
            cand = pts[ok]
            d = ((cand - s) ** 2).sum(axis=1)
            k = int(np.argmin(d))
            if d[k] < best_d:
                best, best_d = cand[k], float(d[k])
        return best, best_d

    if m <= 2:
        return scan(s - R, s + R, step)
    rough, _ = scan(s - R, s + R, coarse)
    return scan(rough - 5 * coarse, rough + 5 * coarse, step)


def test_criterion_7_convex_sets():
    rng = np.random.default_rng(7)
    worst = {"idem": 0.0, "firm": -math.inf, "moreau": 0.0, "grid": 0.0, "beaten": -math.inf}
    infinite_support = 0
    pairs = 10_000
    for variant in ("whole", "halfspace", "ball", "box", "polyhedron"):
        for k in range(pairs):
            if k % 250 == 0:
                m = int(rng.choice([1, 2, 3, 5]))
                c = _random_set(variant, rng, m)
            s, t = 3 * rng.standard_normal(m), 3 * rng.standard_normal(m)
            ps, pt = c.project(s), c.project(t)
            d = ps.point - pt.point
            worst["firm"] = max(worst["firm"], float(d @ d - d @ (s - t)))
            worst["idem"] = max(worst["idem"], float(np.abs(c.project(ps.point).point - ps.point).max()))
            sv = c.support(ps.normal)
            if not math.isfinite(sv):
                infinite_support += 1
            else:
                worst["moreau"] = max(worst["moreau"], abs(sv - ps.support_value) / (1 + abs(sv)))
    n_grid = 0
    for m in (1, 2, 3):
        for _ in range(20 if m < 3 else 10):
            k = int(rng.integers(1, 5))
            P = Polyhedron(rng.standard_normal((k, m)), rng.uniform(0.05, 1.0, k))
            s = 1.5 * rng.standard_normal(m)
            x = P.project(s).point
            g, dg = grid_projection(P, s)
            worst["grid"] = max(worst["grid"], float(np.linalg.norm(g - x)))
            # positive would mean the grid found a feasible point nearer to s
            worst["beaten"] = max(worst["beaten"], float(np.linalg.norm(x - s) - math.sqrt(dg)))
            n_grid += 1
    ok = (worst["idem"] <= 1e-12 and worst["firm"] <= 1e-10 and worst["moreau"] <= 1e-9
          and infinite_support == 0 and worst["grid"] <= 2e-3)
    report(7, ok, f"{pairs} pairs x 5 variants: idempotence {worst['idem']:.1e}, "
                  f"firm-nonexpansive excess {worst['firm']:.1e}, Moreau {worst['moreau']:.1e} "
                  f"(infinite support at a returned normal: {infinite_support}); "
                  f"{n_grid} polyhedra vs 1e-3 grid search: point gap {worst['grid']:.1e} "
                  f"(tolerance 2e-3), largest distance improvement found by the grid "
                  f"{worst['beaten']:+.1e}")
    assert ok, worst


def _random_decoupled_block(rng, graph):
    members = graph.members()
    order = rng.permutation(len(members))
    used, block = set(), []
    size = int(rng.integers(2, 6))
    for k in order:
        mem = members[k]
        if used.isdisjoint(mem.touches()):
            block.append(mem)
            used.update(mem.touches())
        if len(block) == size:
            break
    return block


def test_criterion_8_order_invariance():
    rng = np.random.default_rng(8)
    worst = 0.0
    perms = 0
    for b in range(100):
        kind = KINDS[b % 4]
        m, spec = sweep_config(b)
        inst = generate(kind, m, graph_from_spec(spec), 1000 + b)
        warm, _ = run(inst, make_schedule(inst.graph, "random_coverage", 3, seed=b),
                      StopRule(max_cycles=3))
        members = _random_decoupled_block(rng, inst.graph)
        ref = None
        for perm in itertools.permutations(members):
            st = init_state(inst, warm)
            run_block(st, Block(perm))
            if ref is None:
                ref = st.x.copy()
            worst = max(worst, float(np.abs(st.x - ref).max()))
            perms += 1
    ok = worst <= 1e-14
    report(8, ok, f"100 blocks, {perms} permutations, worst primal disagreement {worst:.1e}")
    assert ok


def test_criterion_9_determinism(tmp_path, capsys):
    configs = [
        ["--kind", "mixed", "--m", "3", "--graph", "cycle:5", "--seed", "4",
         "--schedule", "random_coverage", "--schedule-seed", "11"],
        ["--kind", "balls", "--m", "5", "--graph", "star:8", "--seed", "7",
         "--schedule", "singleton_cyclic"],
        ["--kind", "halfspaces", "--m", "2", "--graph", "path:3", "--seed", "1"],
    ]
    same = 0
    for i, cfg in enumerate(configs):
        outs = []
        for rep in range(2):
            tr, sm = tmp_path / f"{i}-{rep}.jsonl", tmp_path / f"{i}-{rep}.csv"
            cli_main(["run", *cfg, "--trace", str(tr), "--summary", str(sm)])
            outs.append((tr.read_bytes(), sm.read_bytes()))
        same += outs[0] == outs[1]
    capsys.readouterr()
    ok = same == len(configs)
    report(9, ok, f"{same}/{len(configs)} configurations byte-identical (trace and summary)")
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))
