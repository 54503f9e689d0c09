"""Pre-gluing error exponents for the quadratic and cubic backgrounds.

Usage: python scripts/error_scan.py [--n-dirs 200] [--out scan.json]
"""
import argparse
import json

from z2glue.models import ModelParams
from z2glue.preglue import GlueConfig, HarmonicBackground, default_cubic, error_scan


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-dirs", type=int, default=200)
    ap.add_argument("--h", type=float, nargs=2, default=(1.0, 1.0))
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    model = ModelParams(3, tuple(args.h))
    quad = HarmonicBackground.matching(model)
    cubic = HarmonicBackground(quad.a, default_cubic(3))
    eps = [2.0**-k for k in range(4, 8)]
    out = {}
    for label, bg, sigma in (("quadratic", quad, 0.1), ("cubic", cubic, 0.45)):
        rep = error_scan(GlueConfig(3, eps[0], sigma, 1.0, 4.0), eps, bg, model, n_dirs=args.n_dirs)
        print(f"--- {label} background, sigma = {sigma}")
        header, rows = rep.table()
        print("".join(f"{h:>20}" for h in header))
        for row in rows:
            print("".join(f"{float(v):20.6e}" for v in row))
        print("".join(f"{v:>20}" for v in ["slope"] + [f"{rep.slopes[h]:.4f}" for h in header[1:]]))
        out[label] = dict(sigma=sigma, slopes=rep.slopes, predicted=rep.predicted,
                          rows=[r.__dict__ for r in rep.rows])
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(out, fh, indent=1)


if __name__ == "__main__":
    main()
