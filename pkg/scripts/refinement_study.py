"""Grid refinement for the flat solver and the Holder seminorm of the square-root section.

Usage: python scripts/refinement_study.py [--levels 4]
"""
import argparse

import numpy as np

from z2glue.branched_field import holder_seminorm, refinement_grid, section_from_modes
from z2glue.flat_solver import ModeSource, solve_mode


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, default=4)
    args = ap.parse_args()

    print("manufactured solution u = r^nu (1 - r)^2, mode l")
    for l in (0, 1, 3):
        nu = l + 0.5

        def rho(r):
            safe = np.where(r > 0, r, 1.0)
            return np.where(r > 0, r**nu * (2 - 2 * (2 * nu + 1) * (1 - r) / safe), 0.0)

        errs = []
        for J in 64 * 2 ** np.arange(args.levels):
            sol = solve_mode(ModeSource.from_function(l, rho, 1.0, int(J)), int(J))
            ue = sol.r**nu * (1 - sol.r) ** 2
            errs.append(np.abs(sol.u - ue).max() / np.abs(ue).max())
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        print(f"  l={l}: errors {' '.join(f'{e:.3e}' for e in errs)}; orders "
              f"{' '.join(f'{o:.3f}' for o in orders)}")

    print("C^{1/2} seminorm of Re(z^{1/2}) under refinement")
    for level in range(args.levels):
        r, n_theta = refinement_grid(level)
        s = section_from_modes([(0, 0, 1.0)], r, n_theta)
        print(f"  level {level}: {len(r)} radii x {n_theta} angles, seminorm "
              f"{holder_seminorm(s, 0.5):.6f}")


if __name__ == "__main__":
    main()
