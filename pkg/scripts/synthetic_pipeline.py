"""Run every CLI stage on a generated network and list the files produced."""
import argparse
import sys
from pathlib import Path

from btcgoogle.cli import main as cli


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="synthetic_run")
    ap.add_argument("--nodes", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--arnoldi-dim", type=int, default=200)
    args = ap.parse_args(argv)
    root = Path(args.out)
    common = ["--nodes", str(args.nodes), "--seed", str(args.seed)]
    cli(["generate", *common, "--out", str(root / "input")])
    src = ["--input", str(root / "input" / "transactions.txt")]
    stages = [
        ["stats", *src, "--period", "all"],
        ["rank", *src, "--period", "FULL"],
        ["spectrum", *src, "--arnoldi-dim", str(args.arnoldi_dim)],
        ["spectrum", *src, "--direction", "inverted", "--arnoldi-dim", str(args.arnoldi_dim)],
        ["gini", *src, "--period", "all"],
    ]
    for i, stage in enumerate(stages):
        dest = root / f"{i}_{stage[0]}"
        code = cli([*stage, "--out", str(dest)])
        if code:
            return code
        for path in sorted(dest.rglob("*.csv")):
            print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
