"""Command-line front end: ``btcgoogle {stats,rank,spectrum,gini,generate}``.

Every option can also be set through an environment variable ``BTCGM_<OPTION>``
(upper case, dashes as underscores); command-line flags take precedence.
Each run writes ``manifest.json`` with the resolved options and input digests.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from collections import Counter
from dataclasses import asdict
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .arnoldi import ArnoldiConfig, assemble_spectrum, core_eigenvector, decay_widths, reliable_spectrum
from .gmatrix import DENSE_CAP, GoogleOperator, build_s0
from .ingest import (
    BaseUnitPolicy,
    EmptyNetworkError,
    InsufficientDataError,
    PeriodLabel,
    aggregate,
    balance_ledger,
    degree_histograms,
    format_transactions,
    log_bin,
    partner_histograms,
    periods_spanning,
    powerlaw_fit,
    read_transactions,
    slice_period,
    volume_histogram,
    Histogram,
)
from .netgen import GeneratorConfig, generate
from .precision import Execution
from .ranks import correlator, density_grid, pagerank, rank_exponent_fit
from .subspaces import CoreOperator, block_split, find_invariant_subspaces, subspace_block_spectrum
from .wealth import VARIANTS, EmptyPopulationError, gini, gini_timeline, lorenz, variant_income

ENV_PREFIX = "BTCGM_"
# desk-scale Arnoldi dimension limits (the second applies from p = 512)
MAX_DIM_MACHINE = 2000
MAX_DIM_HIGH = 200


class CommandError(RuntimeError):
    pass


# --------------------------------------------------------------------------- output helpers


def fmt(x) -> str:
    """Deterministic text for numbers: shortest round-trip floats, exact decimals for rationals."""
    if isinstance(x, Fraction):
        return fmt_fraction(x)
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x) + 0.0)
    return str(x)


def fmt_fraction(x: Fraction) -> str:
    """Exact decimal when the denominator has only factors 2 and 5, else ``num/den``."""
    den, twos, fives = x.denominator, 0, 0
    while den % 2 == 0:
        den, twos = den // 2, twos + 1
    while den % 5 == 0:
        den, fives = den // 5, fives + 1
    if den != 1:
        return f"{x.numerator}/{x.denominator}"
    k = max(twos, fives)
    if k == 0:
        return str(x.numerator)
    scaled = int(x * 10**k)
    digits = str(abs(scaled)).rjust(k + 1, "0")
    text = f"{digits[:-k]}.{digits[-k:]}".rstrip("0").rstrip(".")
    return ("-" if scaled < 0 else "") + text


def write_csv(path: Path, header, rows, comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_histogram(path: Path, hist: Histogram) -> None:
    write_csv(path, ["bin", "count"], hist.bins)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out: Path, args, command: str) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    inputs = {str(p): sha256(p) for p in (args.input or [])}
    manifest = {"command": command, "version": __version__, "config": config, "inputs": inputs}
    if not args.input:
        manifest["generator"] = asdict(generator_config(args))
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


# --------------------------------------------------------------------------- run setup


def generator_config(args) -> GeneratorConfig:
    return GeneratorConfig(
        seed=args.seed,
        target_nodes=args.nodes,
        target_link_ratio=args.link_ratio,
        degree_exponent=args.degree_exponent,
    )


def load_records(args):
    if not args.input:
        cfg = generator_config(args)
        cfg.validate()
        return generate(cfg)
    policy = BaseUnitPolicy.parse(args.base_unit)
    records = []
    for path in args.input:
        if not Path(path).exists():
            raise CommandError(f"input file {path} does not exist")
        rows = read_transactions(path, policy)
        if not rows:
            raise CommandError(f"input file {path} contains no transactions")
        records.extend(rows)
    return records


def select_periods(args, records) -> list[PeriodLabel]:
    text = args.period.strip()
    if text.lower() == "all":
        return [PeriodLabel.full()] + periods_spanning(records)
    return [PeriodLabel.parse(p) for p in text.split(",") if p.strip()]


def snapshots(args, records):
    """(period, snapshot, records in period) for every selected period with data."""
    for period in select_periods(args, records):
        rows = slice_period(records, period)
        try:
            yield period, aggregate(rows, period, args.drop_self_loops), rows
        except EmptyNetworkError:
            print(f"warning: period {period} has no transactions, skipped", file=sys.stderr)


def execution(args) -> Execution:
    return Execution(args.exec, args.shards if args.exec == "parallel" else 1)


def out_dir(args, period=None) -> Path:
    path = Path(args.out) if period is None else Path(args.out) / str(period)
    path.mkdir(parents=True, exist_ok=True)
    return path


def parse_range(text: str) -> tuple[float, float]:
    lo, hi = (float(v) for v in text.split(","))
    return lo, hi


def parse_thresholds(text: str) -> list:
    out = []
    for t in text.split(","):
        t = t.strip()
        if t:
            out.append(None if t.lower() == "none" else Fraction(t))
    return out


# --------------------------------------------------------------------------- commands


def _fit_row(name, hist, fit_range):
    try:
        beta, err = powerlaw_fit(hist, fit_range)
    except InsufficientDataError:
        beta, err = math.nan, math.nan
    return [name, beta, err, fit_range[0], fit_range[1]]


def balance_histogram(ledger, width=Fraction(1, 5)) -> Histogram:
    """Positive balances binned like transaction volumes."""
    counts = Counter(log_bin(b, width) for b in ledger.balances.values() if b > 0)
    return Histogram("log10", tuple((round(float(k * width), 12), c) for k, c in sorted(counts.items())), float(width))


def cmd_stats(args) -> None:
    records = load_records(args)
    summary = []
    fit_range = parse_range(args.fit_range)
    for period, snap, rows in snapshots(args, records):
        d = out_dir(args, period)
        summary.append([period, snap.N, snap.n_links, snap.total_volume, snap.n_records, snap.span[0], snap.span[1]])
        n_a, n_b, n_ab = degree_histograms(snap, rows)
        p_out, p_in = partner_histograms(snap)
        hists = {"out_transactions": n_a, "in_transactions": n_b, "pair_transactions": n_ab,
                 "out_partners": p_out, "in_partners": p_in, "volume": volume_histogram(rows)}
        ledger = balance_ledger(rows)
        hists["balance"] = balance_histogram(ledger)
        for name, h in hists.items():
            write_histogram(d / f"hist_{name}.csv", h)
        write_csv(d / "balances.csv", ["node", "balance"], ledger.balances.items())
        fits = [_fit_row(n, hists[n], fit_range) for n in ("out_transactions", "in_transactions", "pair_transactions", "out_partners", "in_partners")]
        write_csv(d / "fits.csv", ["histogram", "exponent", "stderr", "lo", "hi"], fits)
    if not summary:
        raise CommandError("no selected period contains transactions")
    write_csv(Path(args.out) / "summary.csv", ["period", "N", "N_links", "total_volume", "n_records", "span_start", "span_end"], summary)


def _ranks(args, snap):
    ex = execution(args)
    pr = pagerank(GoogleOperator(build_s0(snap, "forward"), args.alpha, ex), tol=args.tol, max_iter=args.max_iter)
    cr = pagerank(GoogleOperator(build_s0(snap, "inverted"), args.alpha, ex), tol=args.tol, max_iter=args.max_iter)
    return pr, cr


def cmd_rank(args) -> None:
    records = load_records(args)
    k_range = parse_range(args.rank_fit_range)
    done = False
    for period, snap, _ in snapshots(args, records):
        d = out_dir(args, period)
        ids = snap.nodes
        pr, cr = _ranks(args, snap)
        fits = []
        for rv in (pr, cr):
            write_csv(d / f"{rv.kind}.csv", ["node_id", "K", "P"], ((ids[i], rv.K[i], rv.P[i]) for i in rv.order))
            try:
                nu, err = rank_exponent_fit(rv, k_range)
            except InsufficientDataError:
                nu, err = math.nan, math.nan
            fits.append([rv.kind, nu, err, k_range[0], k_range[1], rv.iterations, rv.residual])
        write_csv(d / "rank_fits.csv", ["kind", "nu", "stderr", "K_lo", "K_hi", "iterations", "residual"], fits)
        grid = density_grid(pr.K, cr.K, args.grid_cells, args.saturation)
        G = grid.G
        W, D = grid.weights, grid.display
        write_csv(d / "density_grid.csv", ["row", "col", "weight"], ((r, c, W[r, c]) for r in range(G) for c in range(G)))
        write_csv(d / "density_display.csv", ["row", "col", "weight"], ((r, c, D[r, c]) for r in range(G) for c in range(G)))
        rep = correlator(pr, cr)
        write_csv(d / "correlator.csv", ["node_id", "kappa_i"], zip(ids, rep.components))
        write_csv(d / "correlator_summary.csv", ["N", "kappa", "underflow", "overflow"], [[snap.N, rep.kappa, rep.underflow, rep.overflow]])
        write_csv(d / "correlator_hist.csv", ["lo", "hi", "count"], zip(rep.edges[:-1], rep.edges[1:], rep.histogram))
        done = True
    if not done:
        raise CommandError("no selected period contains transactions")


def _check_dimension(args) -> None:
    limit = MAX_DIM_HIGH if args.precision_bits >= 512 else MAX_DIM_MACHINE
    if args.arnoldi_dim > limit and not args.force:
        raise CommandError(
            f"--arnoldi-dim {args.arnoldi_dim} exceeds the desk-scale limit {limit} at p={args.precision_bits}; "
            "lower it or pass --force"
        )


def cmd_spectrum(args) -> None:
    _check_dimension(args)
    records = load_records(args)
    done = False
    for period, snap, _ in snapshots(args, records):
        d = out_dir(args, period)
        ids = snap.nodes
        matrix = build_s0(snap, args.direction)
        dec = find_invariant_subspaces(matrix, args.max_subspace_fraction)
        split = block_split(matrix, dec)
        sub = subspace_block_spectrum(dec, matrix, args.precision_bits, DENSE_CAP, split)
        write_csv(d / "subsets.csv", ["subset_index", "node_id"], ((i, ids[u]) for i, s in enumerate(dec.subsets) for u in s))
        write_csv(d / "discarded_subsets.csv", ["group_index", "node_id"], ((i, ids[u]) for i, s in enumerate(dec.discarded) for u in s))
        write_csv(
            d / "subspace_spectrum.csv", ["subset_index", "re", "im", "multiplicity"],
            ((i, z.real, z.imag, m) for i, block in enumerate(sub.per_subset) for z, m in block),
        )
        core_result = None
        config = ArnoldiConfig(
            n_arnoldi=min(args.arnoldi_dim, max(len(dec.core), 1)),
            precision_bits=args.precision_bits,
            initial_vector="uniform",
            seed=args.seed,
            execution=execution(args),
        )
        core_op = CoreOperator(matrix, dec.core)
        if dec.core:
            core_result = reliable_spectrum(core_op, config, comparison_seed=args.seed + 1)
        spec = assemble_spectrum(sub, core_result)
        comment = (
            f"period={period} direction={args.direction} N={snap.N} core={len(dec.core)} subsets={len(dec.subsets)}\n"
            f"n_arnoldi={config.n_arnoldi} precision_bits={config.precision_bits} breakoff_epsilon=2^-{config.precision_bits / 2:g} "
            f"exec={config.execution.mode} shards={config.execution.shards} seed={args.seed}\n"
            f"breakoff_index={spec.breakoff_index} arnoldi_dim={spec.arnoldi_dim} dropped={spec.discarded}"
        )
        write_csv(d / "spectrum.csv", ["re", "im", "origin", "reliable"],
                  ((e.value.real, e.value.imag, e.origin, e.reliable) for e in spec.eigenvalues), comment)
        widths = decay_widths(spec) if spec.eigenvalues else None
        write_csv(d / "decay_widths.csv", ["j", "gamma"], widths.levels if widths else [])
        if args.eigenvalues:
            pr, cr = _ranks(args, snap)
            K, Ks = pr.K, cr.K
            core_ids = [ids[u] for u in dec.core]
            for i, text in enumerate(args.eigenvalues.split(";")):
                lam = complex(text.replace(" ", ""))
                prof = core_eigenvector(core_op, lam, node_ids=core_ids)
                rows = ((core_ids[j], prof.K_local[j], prof.amplitudes[j], K[dec.core[j]], Ks[dec.core[j]]) for j in prof.order)
                write_csv(d / f"eigenvector_{i}.csv", ["node_id", "K_j", "amplitude", "K", "K_star"], rows,
                          f"eigenvalue={lam.real!r}{lam.imag:+}j")
        done = True
    if not done:
        raise CommandError("no selected period contains transactions")


def cmd_gini(args) -> None:
    records = load_records(args)
    thresholds = parse_thresholds(args.thresholds)
    rows = []
    for period, snap, _ in snapshots(args, records):
        d = out_dir(args, period)
        for variant in VARIANTS:
            income = variant_income(snap, variant, args.alpha, args.tol)
            for thr in thresholds if variant.startswith("volume") else [None]:
                try:
                    curve = lorenz(income, thr, variant)
                except EmptyPopulationError as exc:
                    print(f"warning: {period} {variant}: {exc}", file=sys.stderr)
                    continue
                tag = "" if thr is None else f"_gt{fmt(thr)}"
                write_csv(d / f"lorenz_{variant}{tag}.csv", ["x", "sigma"], zip(curve.x, curve.sigma))
                rep = gini(curve, str(period))
                rows.append([rep.period, rep.variant, "none" if thr is None else thr, rep.N_effective, rep.g])
    if not rows:
        raise CommandError("no selected period contains transactions")
    write_csv(Path(args.out) / "gini.csv", ["period", "variant", "threshold", "N_effective", "g"], rows)
    quarters = periods_spanning(records)
    timeline = []
    for variant in VARIANTS:
        for thr in thresholds if variant.startswith("volume") else [None]:
            for rep in gini_timeline(records, quarters, variant, args.alpha, thr):
                timeline.append([rep.period, rep.variant, "none" if thr is None else thr, rep.N_effective, rep.g, rep.warning])
    write_csv(Path(args.out) / "gini_timeline.csv", ["period", "variant", "threshold", "N_effective", "g", "warning"], timeline)


def cmd_generate(args) -> None:
    records = generate(generator_config(args))
    out = out_dir(args)
    (out / "transactions.txt").write_text(format_transactions(records))


# --------------------------------------------------------------------------- parser

COMMANDS = {"stats": cmd_stats, "rank": cmd_rank, "spectrum": cmd_spectrum, "gini": cmd_gini, "generate": cmd_generate}


def _env_default(dest: str, default, environ):
    return environ.get(ENV_PREFIX + dest.upper(), default)


def build_parser(environ=None) -> argparse.ArgumentParser:
    env = os.environ if environ is None else environ

    def opt(p, flag, dest, default, **kw):
        p.add_argument(flag, dest=dest, default=_env_default(dest, default, env), **kw)

    common = argparse.ArgumentParser(add_help=False)
    ins = _env_default("input", None, env)
    common.add_argument("--input", action="append", default=ins.split(os.pathsep) if ins else None,
                        help="edge-list file (repeatable); the synthetic generator is used when absent")
    opt(common, "--base-unit", "base_unit", "era", help="fixed:<unit> or era[:<switch time>]")
    opt(common, "--period", "period", "FULL", help="FULL, all, or a comma list such as 2010Q2,2011Q4")
    opt(common, "--alpha", "alpha", 0.85, type=float)
    opt(common, "--precision-bits", "precision_bits", 52, type=int)
    opt(common, "--arnoldi-dim", "arnoldi_dim", 200, type=int)
    opt(common, "--tol", "tol", 1e-12, type=float)
    opt(common, "--max-iter", "max_iter", 10_000, type=int)
    opt(common, "--exec", "exec", "deterministic", choices=("deterministic", "parallel"))
    opt(common, "--shards", "shards", 4, type=int)
    opt(common, "--seed", "seed", 1, type=int)
    opt(common, "--out", "out", "out")
    common.add_argument("--drop-self-loops", action="store_true",
                        default=str(_env_default("drop_self_loops", "", env)).lower() in ("1", "true", "yes"))
    opt(common, "--nodes", "nodes", 1000, type=int, help="generator: target node count")
    opt(common, "--link-ratio", "link_ratio", 2.5, type=float, help="generator: target links per node")
    opt(common, "--degree-exponent", "degree_exponent", 2.0, type=float, help="generator: partner-count exponent")

    parser = argparse.ArgumentParser(prog="btcgoogle", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("stats", parents=[common], help="snapshot summary, histograms and power-law fits")
    opt(p, "--fit-range", "fit_range", "1,100")
    p = sub.add_parser("rank", parents=[common], help="PageRank, CheiRank, density grid and correlator")
    opt(p, "--rank-fit-range", "rank_fit_range", "10,100000")
    opt(p, "--grid-cells", "grid_cells", 100, type=int)
    opt(p, "--saturation", "saturation", 1 / 16, type=float)
    p = sub.add_parser("spectrum", parents=[common], help="invariant subspaces and reliable spectra of S")
    opt(p, "--direction", "direction", "forward", choices=("forward", "inverted"))
    opt(p, "--max-subspace-fraction", "max_subspace_fraction", 0.1, type=float)
    opt(p, "--eigenvalues", "eigenvalues", "", help="semicolon list of core eigenvalues for eigenvector profiles")
    p.add_argument("--force", action="store_true", help="allow Arnoldi dimensions above the desk-scale limit")
    p = sub.add_parser("gini", parents=[common], help="Lorenz curves and Gini coefficients")
    opt(p, "--thresholds", "thresholds", "none,0,1", help="volume thresholds in BTC (strict); 'none' keeps every node")
    sub.add_parser("generate", parents=[common], help="write a synthetic edge list")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
        write_manifest(out_dir(args), args, args.command)
    except (CommandError, ValueError, OSError, RuntimeError) as exc:
        print(f"btcgoogle {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
