"""Command-line front end: ``gen``, ``run``, ``oracle``, ``audit``, ``rate``, ``bench``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import _backend
from .diagnostics import Trace, TooFewPoints, audit, fit_rate, summary_row, write_summary
from .engine import StopRule, run
from .instances import KINDS, Certificate, Instance, generate
from .oracle import OracleFailure, centralized_dykstra, certify
from .topology import POLICIES, GraphError, graph_from_spec, make_schedule

log = logging.getLogger("distdyk")


class CLIError(Exception):
    pass


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _range(vals, name):
    lo, hi = vals
    if not 0 < lo <= hi:
        raise CLIError(f"{name} must satisfy 0 < lo <= hi")
    return (lo, hi)


def _generated(args):
    try:
        graph = graph_from_spec(args.graph)
    except GraphError as exc:
        raise CLIError(str(exc)) from exc
    if args.m < 1:
        raise CLIError("--m must be positive")
    inst = generate(args.kind, args.m, graph, args.seed,
                    t_range=_range(args.t_range, "--t-range"),
                    rho_range=_range(args.rho_range, "--rho-range"))
    inst.seed_info["graph"] = args.graph
    return inst


def _load_instance(args):
    if getattr(args, "instance", None):
        try:
            return Instance.from_json(Path(args.instance).read_text(encoding="utf-8"))
        except (OSError, ValueError, KeyError) as exc:
            raise CLIError(f"cannot load instance {args.instance}: {exc}") from exc
    if getattr(args, "kind", None) is None:
        raise CLIError("give --instance or a generator spec (--kind, --graph, --m, --seed)")
    return _generated(args)


def _add_generator_args(p, required):
    p.add_argument("--kind", choices=KINDS, required=required)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--graph", default="path:3", help="path:N, cycle:N, star:N, complete:N, edges:N:0-1,...")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t-range", type=float, nargs=2, default=(0.5, 2.0), metavar=("LO", "HI"))
    p.add_argument("--rho-range", type=float, nargs=2, default=(0.5, 2.0), metavar=("LO", "HI"))


def cmd_gen(args):
    inst = _generated(args)
    _write(args.out, inst.to_json())
    return 0


def _schedule(args, graph, n_cycles):
    seed = args.schedule_seed
    if args.schedule == "random_coverage" and seed is None:
        seed = 0
    return make_schedule(graph, args.schedule, n_cycles, seed=seed)


def cmd_run(args):
    inst = _load_instance(args)
    stop = StopRule(max_cycles=args.max_cycles, gap_eps=args.gap_eps)
    schedule = _schedule(args, inst.graph, stop.max_cycles)
    debug = args.debug or os.environ.get("DYKSTRA_DEBUG") == "1"
    state, trace = run(inst, schedule, stop, backend=args.backend, debug=debug)
    if args.trace:
        _write(args.trace, trace.to_jsonl())
    row = summary_row(trace, args.tail)
    if args.summary:
        path = Path(args.summary)
        append = args.append and path.exists()
        with path.open("a" if append else "w", encoding="utf-8", newline="") as fh:
            write_summary([row], fh, header=not append)
    report = audit(trace)
    out = {"stop_reason": trace.metadata["stop_reason"], "cycles": trace.metadata["cycles"],
           "final_f": row["final_f"], "rate": row["rate"], "r2": row["r2"],
           "policy": schedule.policy, "audit_ok": report["ok"],
           "x": state.x.tolist()}
    if args.compare:
        ref = json.loads(Path(args.compare).read_text(encoding="utf-8"))
        x_star = np.array(ref["x_star"], dtype=float)
        out["max_dev_from_oracle"] = float(np.linalg.norm(state.x - x_star, axis=1).max())
    if inst.certificate is not None:
        out["max_dev_from_certificate"] = float(
            np.linalg.norm(state.x - inst.certificate.x_star, axis=1).max())
    if args.state:
        _write(args.state, json.dumps({"x": state.x.tolist(), "z": state.z.tolist(),
                                       "v": state.v.tolist()}) + "\n")
    print(json.dumps(out))
    converged = trace.metadata["stop_reason"] in ("gap", "plateau")
    return 0 if converged and report["ok"] else 1


def cmd_oracle(args):
    inst = _load_instance(args)
    try:
        res = centralized_dykstra(inst.sets, inst.anchor, max_iter=args.max_iter, tol=args.tol)
    except OracleFailure as exc:
        print(json.dumps({"error": str(exc), **exc.result.to_dict()}))
        return 1
    resid = certify(inst.sets, inst.anchor, res.x_star, args.samples, args.sample_seed)
    d = res.to_dict()
    d["certificate_residual"] = resid
    _write(args.out, json.dumps(d) + "\n")
    if args.embed:
        cert = Certificate(res.x_star, res.multipliers())
        embedded = Instance(inst.m, inst.graph, inst.sets, inst.anchor, cert, inst.seed_info)
        _write(args.embed, embedded.to_json())
    ok = res.feasibility_residual <= args.feas_tol and resid <= args.cert_tol
    return 0 if ok else 1


def _load_trace(path):
    try:
        return Trace.from_jsonl(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError) as exc:
        raise CLIError(f"cannot read trace {path}: {exc}") from exc


def cmd_audit(args):
    report = audit(_load_trace(args.trace))
    print(json.dumps(report))
    return 0 if report["ok"] else 1


def cmd_rate(args):
    try:
        fit = fit_rate(_load_trace(args.trace), args.tail)
    except TooFewPoints as exc:
        print(json.dumps({"error": str(exc)}))
        return 1
    print(json.dumps({"rate": fit.rate, "r2": fit.r_squared, "window": list(fit.window),
                      "log_slope": fit.log_slope, "one_cycle_ratio": fit.one_cycle_ratio,
                      "two_cycle_ratio": fit.two_cycle_ratio}))
    if args.min_r2 is not None and not fit.passes(args.min_r2):
        return 1
    return 0


def cmd_bench(args):
    inst = _load_instance(args)
    schedule = _schedule(args, inst.graph, args.max_cycles)
    stop = StopRule(max_cycles=args.max_cycles, gap_eps=0.0, plateau_rtol=-1.0)
    results = {}
    for name in _backend.available():
        best = float("inf")
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            run(inst, schedule, stop, backend=name)
            best = min(best, time.perf_counter() - t0)
        results[name] = best
    print(json.dumps({"cycles": args.max_cycles, "seconds": results}))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="distdyk", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a generated instance as JSON")
    _add_generator_args(p, required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_gen)

    for name, func, helptext in (("run", cmd_run, "run the distributed engine"),
                                 ("bench", cmd_bench, "time compiled vs pure-Python kernels")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--instance")
        _add_generator_args(p, required=False)
        p.add_argument("--schedule", choices=POLICIES, default="cyclic_v_first")
        p.add_argument("--schedule-seed", type=int)
        p.add_argument("--max-cycles", type=int, default=10_000 if name == "run" else 2_000)
        p.set_defaults(func=func)
        if name == "bench":
            p.add_argument("--repeat", type=int, default=3)
            continue
        p.add_argument("--gap-eps", type=float, default=1e-8)
        p.add_argument("--trace")
        p.add_argument("--summary")
        p.add_argument("--append", action="store_true", help="append a row to an existing summary")
        p.add_argument("--tail", type=float, default=0.5)
        p.add_argument("--compare", metavar="ORACLE_JSON")
        p.add_argument("--state", help="write final duals and primal images as JSON")
        p.add_argument("--backend", choices=("cython", "python"))
        p.add_argument("--debug", action="store_true")

    p = sub.add_parser("oracle", help="centralized Dykstra projection with certification")
    p.add_argument("--instance")
    _add_generator_args(p, required=False)
    p.add_argument("--out", default="-")
    p.add_argument("--embed", help="write the instance with the oracle certificate embedded")
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--sample-seed", type=int, default=0)
    p.add_argument("--feas-tol", type=float, default=1e-9)
    p.add_argument("--cert-tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("audit", help="check a trace file")
    p.add_argument("--trace", required=True)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("rate", help="fit a linear rate to a trace file")
    p.add_argument("--trace", required=True)
    p.add_argument("--tail", type=float, default=0.5)
    p.add_argument("--min-r2", type=float)
    p.set_defaults(func=cmd_rate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"distdyk {args.command}: {exc}", file=sys.stderr)
        return 2
