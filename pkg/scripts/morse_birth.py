"""Birth-of-critical-points verification for several radii, plus the naive profile counterexample.

Usage: python scripts/morse_birth.py
"""
from z2glue.morse_forge import (
    BirthConfig, escape_check, find_critical_points, staggered_profile, verify_birth,
)


def main():
    for M in (3.0, 10.0, 30.0):
        cfg = BirthConfig(M)
        rep = verify_birth(cfg)
        frac, gmin = escape_check(cfg, count=100)
        print(f"M={M:g}: passed {rep.passed}, {len(rep.critical_points)} critical points, "
              f"|gamma'| M = {rep.profile_slope_times_M:.3f}, escape {frac:.2f} (min |grad f| {gmin:.3g})")
    for n, r in ((4, 1), (5, 2)):
        rep = verify_birth(BirthConfig(10.0, n, r))
        print(f"lift n={n} r={r}: indices {sorted(c['index'] for c in rep.critical_points_rn)}")
    naive = find_critical_points(BirthConfig(3.0, profile=staggered_profile(3.0)))
    print(f"equal-step profile at M=3: {len(naive)} critical points")
    for c in naive:
        print(f"  x = {c.location[0]: .6f}, index {c.index}")


if __name__ == "__main__":
    main()
