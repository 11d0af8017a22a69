"""Compare the compiled and pure-Python derivative kernels.

Usage: python3 benchmarks/bench_kernels.py [--steps N] [--repeat R]

Times single derivative evaluations and fixed-step RK4 runs on the two-area
POD-PQ model, which is the configuration every acceptance simulation uses.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from gforpod.assembly import assemble
from gforpod.design import DesignSpec
from gforpod.kernels import available_backends
from gforpod.scenarios import ScenarioMatrix, build_two_area


def bench(backend: str, spec, steps: int, repeat: int) -> dict[str, float]:
    model = assemble(spec, backend=backend)
    x = model.x0.copy()
    x[model.state_index("SG1.omega")] += 1e-3
    n_f = max(1, steps // 10)
    t_f = min(timeit.repeat(lambda: model.f(x), number=n_f, repeat=repeat)) / n_f
    t_rk4 = min(timeit.repeat(lambda: model.kernel.rk4(x, 50e-6, steps, steps),
                              number=1, repeat=repeat)) / steps
    return {"f_us": 1e6 * t_f, "rk4_step_us": 1e6 * t_rk4,
            "sim_10s_s": t_rk4 * 10.0 / 50e-6}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    matrix, _ = ScenarioMatrix(build_two_area(0.1), "GFOR2").with_designs(DesignSpec())
    spec = matrix.variant("POD-PQ")
    results = {b: bench(b, spec, args.steps, args.repeat) for b in sorted(available_backends())}
    print(f"two-area POD-PQ, {assemble(spec).n} states, {args.steps} RK4 steps of 50 us")
    print(f"{'backend':<8} {'f eval [us]':>12} {'RK4 step [us]':>14} {'10 s sim [s]':>13}")
    for b, r in results.items():
        print(f"{b:<8} {r['f_us']:>12.2f} {r['rk4_step_us']:>14.2f} {r['sim_10s_s']:>13.2f}")
    if {"python", "cython"} <= results.keys():
        speed = results["python"]["rk4_step_us"] / results["cython"]["rk4_step_us"]
        print(f"compiled RK4 speed-up: {speed:.0f}x")
    # both backends must integrate the same trajectory
    ends = [assemble(spec, backend=b).kernel.rk4(assemble(spec).x0, 50e-6, 100, 100)[0][-1]
            for b in sorted(results)]
    np.testing.assert_allclose(ends[0], ends[-1], rtol=1e-9, atol=1e-12)


if __name__ == "__main__":
    main()
