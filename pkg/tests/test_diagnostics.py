import io
import math

import numpy as np
import pytest

from distdyk.diagnostics import (NotNormalized, TooFewPoints, Trace, TraceRecord, audit,
                                 fit_rate, gap_bound, gap_from_value, summary_row,
                                 write_summary)
from distdyk.engine import StopRule, init_state, run
from distdyk.instances import Instance, generate
from distdyk.topology import graph_from_spec, make_schedule
from distdyk.convex_sets import WholeSpace


def boundary_trace(values):
    return Trace([TraceRecord(n, 0, f, None, None, 0.0) for n, f in enumerate(values, start=1)])


def test_gap_arithmetic():
    assert gap_from_value(0.02) == pytest.approx(0.2)
    assert gap_from_value(0.0) == 0.0
    assert gap_from_value(-1e-18) == 0.0


def test_gap_bound_refuses_unnormalized():
    inst = Instance(1, graph_from_spec("path:2"), [WholeSpace(1)] * 2, [1.0])
    with pytest.raises(NotNormalized):
        gap_bound(init_state(inst), inst)


def test_gap_bound_dominates_distance():
    inst = generate("balls", 3, graph_from_spec("cycle:5"), 4)
    st = init_state(inst)
    assert np.linalg.norm(st.x, axis=1).max() <= gap_bound(st, inst) + 1e-10


def test_fit_geometric_exact():
    fit = fit_rate(boundary_trace([0.5 ** n for n in range(1, 41)]))
    assert abs(fit.rate - 0.5) <= 1e-12
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.one_cycle_ratio == pytest.approx(0.5)
    assert fit.two_cycle_ratio == pytest.approx(0.25)
    assert fit.window == (21, 40)
    assert fit.passes()


def test_fit_sublinear_worse_than_geometric():
    fit = fit_rate(boundary_trace([1.0 / n for n in range(1, 201)]))
    assert fit.r_squared < 1.0 - 1e-6
    assert fit.rate > 0.99


def test_fit_drops_floor_points():
    vals = [0.5 ** n for n in range(1, 31)] + [1e-300] * 10
    fit = fit_rate(boundary_trace(vals))
    assert fit.window[1] == 30


def test_fit_flat_window_has_no_evidence():
    fit = fit_rate(boundary_trace([1.0] * 20))
    assert fit.r_squared == 0.0 and not fit.passes()


def test_fit_errors():
    with pytest.raises(TooFewPoints):
        fit_rate(boundary_trace([1.0, 0.5]))
    with pytest.raises(ValueError):
        fit_rate(boundary_trace([1.0] * 20), tail_fraction=0.0)


def clean_trace():
    inst = generate("balls", 2, graph_from_spec("path:3"), 7)
    return run(inst, make_schedule(inst.graph, "cyclic_v_first", 10_000))[1]


def test_ball_seed7_rate():
    fit = fit_rate(clean_trace(), 0.5)
    assert 0.0 < fit.rate < 1.0 and fit.r_squared >= 0.9


def test_audit_clean():
    rep = audit(clean_trace())
    assert rep["ok"]
    assert {rep[k]["status"] for k in ("monotone_f", "two_cycle", "gap_domination", "drift")} == {"pass"}


def test_audit_flags_increment():
    tr = clean_trace()
    k = 7
    r = tr.records[k]
    tr.records[k] = r._replace(f=tr.records[k - 1].f + 1.0)
    rep = audit(tr)
    assert rep["monotone_f"]["status"] == "fail" and rep["monotone_f"]["record"] == k
    assert not rep["ok"]


def test_audit_skips_missing_distances():
    tr = Trace.from_jsonl(boundary_trace([1.0, 0.5, 0.25]).to_jsonl())
    rep = audit(tr)
    assert rep["gap_domination"]["status"] == "skipped"
    assert rep["drift"]["status"] == "skipped"
    assert rep["ok"]


def test_jsonl_round_trip():
    tr = clean_trace()
    text = tr.to_jsonl()
    first = text.splitlines()[0]
    assert list(__import__("json").loads(first)) == ["n", "w", "f", "gap", "dist_max", "moved"]
    back = Trace.from_jsonl(text)
    assert back.to_jsonl() == text


def test_summary_csv():
    tr = clean_trace()
    buf = io.StringIO()
    write_summary([summary_row(tr)], buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "seed,policy,cycles,final_f,rate,r2,stop_reason"
    assert lines[1].startswith("7,cyclic_v_first,")
    assert lines[1].endswith(",gap")


def test_two_cycle_check():
    tr = boundary_trace([4.0, 3.0, 3.5])
    assert audit(tr)["two_cycle"]["status"] == "pass"
    tr = boundary_trace([4.0, 3.0, 4.5])
    assert audit(tr)["two_cycle"]["status"] == "fail"
    assert not math.isnan(fit_rate(boundary_trace([2.0 ** -n for n in range(12)])).two_cycle_ratio)


def test_stop_rule_plateau_is_not_gap():
    inst = Instance(1, graph_from_spec("path:2"), [WholeSpace(1)] * 2, [1.0])
    _, tr = run(inst, make_schedule(inst.graph, "cyclic_v_first", 100), StopRule())
    assert tr.metadata["stop_reason"] == "plateau"
    assert all(r.gap is None for r in tr.records)
