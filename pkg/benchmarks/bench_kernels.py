"""Time the compiled and pure-Python block kernels on the same runs.

    python3 benchmarks/bench_kernels.py [--cycles 2000] [--repeat 3]

Each case runs a fixed number of cycles (stop rules disabled) and reports the
best wall time per backend plus the speedup. Final iterates are compared so a
fast but wrong kernel shows up.
"""
import argparse
import time

import numpy as np

from distdyk import _backend
from distdyk.engine import StopRule, run
from distdyk.instances import generate
from distdyk.topology import graph_from_spec, make_schedule

CASES = [
    ("balls", 2, "path:3"),
    ("halfspaces", 3, "cycle:8"),
    ("boxes", 5, "star:8"),
    ("mixed", 5, "cycle:32"),
]


def time_case(kind, m, spec, cycles, repeat):
    inst = generate(kind, m, graph_from_spec(spec), 0)
    sched = make_schedule(inst.graph, "cyclic_v_first", cycles)
    stop = StopRule(max_cycles=cycles, gap_eps=0.0, plateau_rtol=-1.0)
    best, finals = {}, {}
    for name in _backend.available():
        best[name] = np.inf
        for _ in range(repeat):
            t0 = time.perf_counter()
            state, _ = run(inst, sched, stop, backend=name)
            best[name] = min(best[name], time.perf_counter() - t0)
        finals[name] = state.x
    ref = finals["python"]
    dev = max(float(np.abs(x - ref).max()) for x in finals.values())
    return best, dev


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cycles", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    names = _backend.available()
    if "cython" not in names:
        print("compiled kernel not built; timing the pure-Python fallback only")
    print(f"{'case':<28}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}{'max |dx|':>12}")
    for kind, m, spec in CASES:
        best, dev = time_case(kind, m, spec, args.cycles, args.repeat)
        speed = best["python"] / best["cython"] if "cython" in best else 1.0
        label = f"{kind} m={m} {spec}"
        print(f"{label:<28}" + "".join(f"{best[n]:>11.3f}s" for n in names)
              + f"{speed:>9.1f}x{dev:>12.1e}")


if __name__ == "__main__":
    main()
