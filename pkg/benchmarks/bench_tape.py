"""Compare the compiled and pure-Python tape kernels on a thermal-model gradient.

Usage: python3 benchmarks/bench_tape.py [--n 2000] [--repeat 20]
"""

import argparse
import time

import numpy as np

from rcbayes.autodiff import compiled_kernel, python_kernel
from rcbayes.density import build_target, default_priors
from rcbayes.io import generate_synthetic
from rcbayes.thermal_models import ThermalParams


def timeit(fn, repeat):
    fn()  # warm buffers
    best = np.inf
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeat)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--model", default="TiTe")
    args = ap.parse_args()

    flat = dict(R_ia=5.3, C_i=25.0, A_w=7.9, sigma_i=0.05, sigma_obs=0.05,
                R_ie=1.0, R_ea=4.3, C_e=50.0, sigma_e=0.05)
    kind = args.model
    params = ThermalParams.from_flat(kind, flat)
    data, _ = generate_synthetic(kind, params, args.n, 0.5, seed=0)
    target = build_target(kind, default_priors(kind), data)
    u = target.unconstrain(params.to_flat())
    prog = target.program
    print(f"{kind}, N={args.n}: tape of {len(prog)} nodes, {target.dim} inputs")

    rows = []
    for label, kern in (("compiled", compiled_kernel), ("python", python_kernel)):
        if not kern.COMPILED and label == "compiled":
            print("compiled kernel unavailable; build with `pip install -e .`")
            continue
        t_val = timeit(lambda: prog._run(u, False, kern), args.repeat)
        t_grad = timeit(lambda: prog._run(u, True, kern), args.repeat)
        v = prog.value_and_grad(u, backend=kern)
        rows.append((label, t_val, t_grad, v))
        print(f"{label:>9}: value {t_val * 1e3:8.3f} ms   value+grad {t_grad * 1e3:8.3f} ms")
    if len(rows) == 2:
        (_, _, g_c, v_c), (_, _, g_p, v_p) = rows
        print(f"speed-up (value+grad): {g_p / g_c:.1f}x")
        same = v_c.value == v_p.value and np.array_equal(v_c.gradient, v_p.gradient)
        print(f"identical results: {same}")


if __name__ == "__main__":
    main()
