"""Times the centered affine step loop: numpy kernel vs the compiled
extension, across a grid of feature dimensions.

Run from the repository root after an editable install:

    python3 benchmarks/bench_trainer.py
    python3 benchmarks/bench_trainer.py --steps 4000 --dims 8 16 32 64
"""

import argparse
import time

import numpy as np

from stagechain import _kernel_numpy


def _load_compiled():
    try:
        from stagechain import _kernel_cy
    except ImportError:
        return None
    return _kernel_cy.centered_affine_steps


def make_problem(d: int, seed: int):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d, d))
    b = rng.standard_normal((d, d))
    cx = a @ a.T / d + np.eye(d)
    cy = b @ b.T / d + np.eye(d)
    wf = np.eye(d) + 0.02 * rng.standard_normal((d, d))
    wg = np.eye(d) + 0.02 * rng.standard_normal((d, d))
    cfc = 0.1 * rng.standard_normal(d)
    cgc = 0.1 * rng.standard_normal(d)
    return wf, cfc, wg, cgc, cx, cy


def run_once(fn, steps: int, problem) -> tuple[float, np.ndarray]:
    wf, cfc, wg, cgc, cx, cy = (np.ascontiguousarray(p.copy()) for p in problem)
    t0 = time.perf_counter()
    bad = fn(steps, 1e-3, 1.0, 0.1, wf, cfc, wg, cgc, cx, cy)
    elapsed = time.perf_counter() - t0
    if bad != -1:
        raise RuntimeError(f"kernel diverged at step {bad}")
    return elapsed, np.asarray(wf)


def bench(fn, steps: int, problem, repeats: int) -> tuple[float, np.ndarray]:
    run_once(fn, 10, problem)  # warm up
    best = float("inf")
    out = None
    for _ in range(repeats):
        elapsed, wf = run_once(fn, steps, problem)
        if elapsed < best:
            best, out = elapsed, wf
    return best, out


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--dims", type=int, nargs="+", default=[4, 8, 16, 32, 64])
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    compiled = _load_compiled()
    if compiled is None:
        print("compiled extension not built; timing the numpy kernel only")

    print(f"{args.steps} steps per run, best of {args.repeats}")
    header = f"{'d':>4} {'numpy':>12} {'compiled':>12} {'speedup':>8} {'max|dW|':>10}"
    print(header)
    print("-" * len(header))
    for d in args.dims:
        problem = make_problem(d, seed=d)
        t_np, w_np = bench(_kernel_numpy.centered_affine_steps, args.steps,
                           problem, args.repeats)
        if compiled is None:
            print(f"{d:>4} {t_np:>10.4f} s {'-':>12} {'-':>8} {'-':>10}")
            continue
        t_cy, w_cy = bench(compiled, args.steps, problem, args.repeats)
        gap = float(np.abs(w_np - w_cy).max())
        print(f"{d:>4} {t_np:>10.4f} s {t_cy:>10.4f} s {t_np / t_cy:>7.1f}x "
              f"{gap:>10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
