"""Count reliable core eigenvalues as the Arnoldi dimension grows."""
import argparse
import csv
import sys

from btcgoogle.arnoldi import ArnoldiConfig, reliable_spectrum
from btcgoogle.gmatrix import build_s0
from btcgoogle.ingest import aggregate, read_transactions
from btcgoogle.netgen import GeneratorConfig, generate
from btcgoogle.subspaces import CoreOperator, find_invariant_subspaces


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--input", help="transaction file; a synthetic network is generated if omitted")
    ap.add_argument("--nodes", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--dims", default="25,50,100,200,400")
    ap.add_argument("--precision-bits", type=int, default=52)
    ap.add_argument("--direction", choices=("forward", "inverted"), default="forward")
    args = ap.parse_args(argv)
    records = read_transactions(args.input) if args.input else generate(GeneratorConfig(seed=args.seed, target_nodes=args.nodes))
    m = build_s0(aggregate(records), args.direction)
    dec = find_invariant_subspaces(m)
    core = CoreOperator(m, dec.core)
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["n_arnoldi", "core_size", "breakoff", "n_reliable", "top_reliable_modulus"])
    for k in map(int, args.dims.split(",")):
        spec = reliable_spectrum(core, ArnoldiConfig(k, precision_bits=args.precision_bits))
        rel = spec.values(reliable_only=True)
        top = max((abs(z) for z in rel), default=float("nan"))
        out.writerow([k, len(dec.core), spec.breakoff_index if spec.breakoff_index is not None else "", spec.n_reliable, repr(top)])


if __name__ == "__main__":
    main()
