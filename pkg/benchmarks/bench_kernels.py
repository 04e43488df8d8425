"""Compiled vs numpy kernels.

Per-kernel timings come from calling both backend modules directly; full
flows are timed in subprocesses because the backend is chosen at import
(``MOMENTFLOW_PURE_PYTHON=1`` forces numpy).

    python benchmarks/bench_kernels.py [--sizes 3 4 5 6] [--repeat 7] [--json out.json]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from momentflow import kernels

FLOW_SNIPPET = """
import time, numpy as np
from momentflow import kernels
from momentflow.bracket_rep import Bracket, bracket_model, group_act
from momentflow.flow_engine import flow_projective
from momentflow.orbit_analyzer import random_well_conditioned
rng = np.random.default_rng(5)
cases = {{
    "heisenberg5": Bracket.from_entries(5, [(1, 2, 5, 1.0), (3, 4, 5, 1.0)]),
    "free2step3": Bracket.from_entries(6, [(1, 2, 4, 1.0), (1, 3, 5, 1.0), (2, 3, 6, 1.0)]),
    "sl2r": Bracket.from_entries(3, [(1, 2, 2, 2.0), (1, 3, 3, -2.0), (2, 3, 1, 1.0)]),
}}
out = {{"backend": kernels.BACKEND}}
for name, mu in cases.items():
    g = random_well_conditioned(mu.n, rng)
    v = group_act(g, mu).vector()
    model = bracket_model(mu.n)
    best = float("inf")
    for _ in range({repeat}):
        t0 = time.perf_counter()
        r = flow_projective(model, v, method="{method}")
        best = min(best, time.perf_counter() - t0)
    out[name] = {{"seconds": best, "steps": r.accepted_steps, "status": r.status.value}}
print(__import__("json").dumps(out))
"""


def time_call(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def kernel_table(sizes, repeat):
    mods = kernels.backends()
    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        dim = n * n * (n - 1) // 2
        v = rng.normal(size=dim)
        X = rng.normal(size=(n, n))
        g = rng.uniform(-1, 1, (n, n)) + 2 * np.eye(n)
        ginv = np.linalg.inv(g)
        calls = {
            "moment_packed": lambda m: (lambda: m.moment_packed(v, n)),
            "act_packed": lambda m: (lambda: m.act_packed(X, v, n)),
            "sphere_field": lambda m: (lambda: m.sphere_field(v, n, 1.0)),
            "transport_packed": lambda m: (lambda: m.transport_packed(g, ginv, v, n)),
        }
        for kname, make in calls.items():
            row = {"n": n, "kernel": kname}
            for bname, mod in mods.items():
                row[bname] = time_call(make(mod), repeat)
            rows.append(row)
    return rows


def flow_table(repeat, method):
    out = {}
    for label, env_value in (("cython", None), ("python", "1")):
        env = dict(os.environ)
        env.pop("MOMENTFLOW_PURE_PYTHON", None)
        if env_value:
            env["MOMENTFLOW_PURE_PYTHON"] = env_value
        code = FLOW_SNIPPET.format(repeat=repeat, method=method)
        proc = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            raise RuntimeError(proc.stderr)
        data = json.loads(proc.stdout)
        out[data.pop("backend") if label == "cython" else label] = data
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[3, 4, 5, 6])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--method", choices=("group", "direct"), default="group")
    ap.add_argument("--json", default=None, help="also write the raw numbers here")
    args = ap.parse_args(argv)

    rows = kernel_table(args.sizes, args.repeat)
    have_c = "cython" in kernels.backends()
    print(f"{'n':>2} {'kernel':<18} {'numpy [us]':>11} {'cython [us]':>12} {'speedup':>8}")
    for r in rows:
        c = r.get("cython")
        line = f"{r['n']:>2} {r['kernel']:<18} {1e6 * r['python']:>11.2f}"
        line += f" {1e6 * c:>12.2f} {r['python'] / c:>8.1f}" if c else f" {'-':>12} {'-':>8}"
        print(line)
    if not have_c:
        print("compiled extension not built; only numpy timings shown")

    flows = flow_table(min(args.repeat, 3), args.method)
    print()
    print(f"{'flow':<14} " + " ".join(f"{b + ' [s]':>12}" for b in flows) + f" {'steps':>6}")
    names = next(iter(flows.values())).keys()
    for name in names:
        cells = " ".join(f"{flows[b][name]['seconds']:>12.3f}" for b in flows)
        print(f"{name:<14} {cells} {next(iter(flows.values()))[name]['steps']:>6}")

    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"kernels": rows, "flows": flows}, fh, indent=2)


if __name__ == "__main__":
    main()
