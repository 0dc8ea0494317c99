"""Ritz-value radii of corner-perturbed and unperturbed chain matrices.

Prints one CSV row per (precision, size, corner) with the expected radius
and the observed minimum and maximum modulus.
"""
import argparse
import csv
import sys

import numpy as np

from btcgoogle.arnoldi import ArnoldiConfig, ritz_values
from btcgoogle.gmatrix import DenseOperator


def chain(d, eta):
    J = np.diag(np.ones(d - 1), -1)
    J[0, d - 1] = eta
    return J


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="8,16,32")
    ap.add_argument("--etas", default="0,1e-12,1e-8")
    ap.add_argument("--precisions", default="52,128,256")
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args(argv)
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["p", "d", "eta", "expected_radius", "min_modulus", "max_modulus"])
    for p in map(int, args.precisions.split(",")):
        for d in map(int, args.sizes.split(",")):
            for eta in map(float, args.etas.split(",")):
                cfg = ArnoldiConfig(d, precision_bits=p, initial_vector="random", seed=args.seed)
                values, _ = ritz_values(DenseOperator(chain(d, eta)), cfg)
                mods = [abs(complex(z)) for z in values]
                expected = eta ** (1 / d) if eta else 2.0 ** (-p / d)
                out.writerow([p, d, eta, repr(expected), repr(min(mods)), repr(max(mods))])


if __name__ == "__main__":
    main()
