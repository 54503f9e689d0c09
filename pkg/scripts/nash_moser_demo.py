"""Nash-Moser iteration on the circle toy: trace, audit and the solution estimate.

Usage: python scripts/nash_moser_demo.py [--theta0 4] [--seeds 10]
"""
import argparse

import numpy as np

from z2glue.nash_moser import CircleToy, audit_trace, mollifier_smoothing, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--theta0", type=float, default=4.0)
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()

    level = 0.5 * args.theta0**-4
    p = CircleToy.scaled_rhs(0, level)
    S = mollifier_smoothing(p.grid)
    x, tr = run(p, args.theta0, S)
    print(f"status {tr.status}, {len(tr.steps) - 1} steps, residual {tr.final_residual:.3e}")
    print(f"{'j':>3} {'theta':>12} {'|F|_0':>12} {'|x|_m':>12}")
    for s in tr.steps:
        print(f"{s.j:3d} {s.theta:12.5g} {s.F_norms[0]:12.4e} {s.x_norms[tr.m]:12.4e}")
    rep = audit_trace(tr)
    print(f"audit: all I {rep.all_I}, M = {rep.M:.4g}, first violation {rep.first_violation}")

    x2, _ = run(p, 2 * args.theta0, S, enforce_precondition=False)
    print(f"limit difference vs theta0 = {2 * args.theta0:g}: "
          f"{p.space.norm(x.payload - x2.payload, p.m):.3e}")
    ratios = []
    for seed in range(args.seeds):
        _, t = run(CircleToy.scaled_rhs(seed, level), args.theta0, S)
        ratios.append(t.estimate_ratio)
    print(f"|x|_m / |F(0)|_2m over {args.seeds} right-hand sides: max {np.max(ratios):.4g}")


if __name__ == "__main__":
    main()
