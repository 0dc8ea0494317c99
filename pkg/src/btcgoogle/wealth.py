"""Lorenz curves and Gini coefficients of rank probabilities and transfer volumes.

Integer and rational incomes are handled exactly, so the closed-form cases
(g = -1/N for equal incomes, 1 - 2/N for a single holder) come out exact.
Floats are taken at their exact binary values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .gmatrix import GoogleOperator, build_s0
from .ingest import EmptyNetworkError, NetworkSnapshot, PeriodLabel, TransactionRecord, aggregate, slice_period
from .ranks import pagerank

VARIANTS = ("pagerank", "cheirank", "volume_in", "volume_out")


class EmptyPopulationError(ValueError):
    pass


@dataclass(frozen=True)
class LorenzCurve:
    variant: str
    income: tuple  # retained incomes, ascending, as given (not normalised)
    threshold: float | Fraction | None

    @property
    def N(self) -> int:
        return len(self.income)

    def scaled(self) -> tuple[list[int], int]:
        """Exact incomes as integers over a common denominator."""
        ratios = [x.as_integer_ratio() for x in self.income]
        den = math.lcm(*{d for _, d in ratios})
        return [a * (den // d) for a, d in ratios], den

    @property
    def sigma(self) -> np.ndarray:
        """Cumulative income share of the K' poorest nodes, K' = 1..N."""
        ints, _ = self.scaled()
        total = sum(ints)
        acc, out = 0, []
        for x in ints:
            acc += x
            out.append(acc / total)  # int / int is correctly rounded
        return np.array(out)

    @property
    def x(self) -> np.ndarray:
        return np.arange(1, self.N + 1) / self.N


def lorenz(income, filter_threshold=None, variant: str = "volume_in") -> LorenzCurve:
    """Ascending cumulative income shares.

    With a threshold, only nodes with income strictly above it are kept.
    """
    vals = list(income.tolist() if isinstance(income, np.ndarray) else income)
    if any(v < 0 for v in vals):
        raise ValueError("incomes must be non-negative")
    if filter_threshold is not None:
        vals = [v for v in vals if v > filter_threshold]
    if not vals or not any(v > 0 for v in vals):
        raise EmptyPopulationError(f"no node with income above {filter_threshold}")
    return LorenzCurve(variant, tuple(sorted(vals)), filter_threshold)


@dataclass(frozen=True)
class GiniReport:
    g: float
    variant: str
    threshold: float | Fraction | None
    N_effective: int
    period: str = "FULL"
    warning: str = ""


def gini_value(curve: LorenzCurve):
    """1 - (2/N) sum_K' sigma(K') as an exact Fraction."""
    n = curve.N
    ints, _ = curve.scaled()
    # sum_K' sigma(K') = sum_j (N - j) x_j / total over ascending x, j from 0
    weighted = sum((n - j) * x for j, x in enumerate(ints))
    return 1 - Fraction(2 * weighted, n * sum(ints))


def gini(curve: LorenzCurve, period: str = "FULL") -> GiniReport:
    return GiniReport(float(gini_value(curve)), curve.variant, curve.threshold, curve.N, period)


def gini_rank_form(P) -> float:
    """1 - 2 sum_K K P(K) / N with P normalised and sorted by decreasing value."""
    p = np.sort(np.asarray(P, dtype=float))[::-1]
    p = p / math.fsum(p.tolist())
    n = len(p)
    return 1.0 - 2.0 * math.fsum((np.arange(1, n + 1) * p).tolist()) / n


def node_volumes(snapshot: NetworkSnapshot) -> tuple[list[Fraction], list[Fraction]]:
    """Total received and total sent per node, in dense index order."""
    n = snapshot.N
    vin = [Fraction(0)] * n
    vout = [Fraction(0)] * n
    for (s, d), w in snapshot.edges.items():
        vout[snapshot.node_ids[s]] += w
        vin[snapshot.node_ids[d]] += w
    return vin, vout


def variant_income(snapshot: NetworkSnapshot, variant: str, alpha: float = 0.85, tol: float = 1e-12):
    if variant == "volume_in":
        return node_volumes(snapshot)[0]
    if variant == "volume_out":
        return node_volumes(snapshot)[1]
    if variant in ("pagerank", "cheirank"):
        direction = "forward" if variant == "pagerank" else "inverted"
        return pagerank(GoogleOperator(build_s0(snapshot, direction), alpha), tol=tol).P
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def gini_timeline(
    records: Sequence[TransactionRecord],
    periods: Sequence[PeriodLabel],
    variant: str,
    alpha: float = 0.85,
    threshold=None,
) -> list[GiniReport]:
    """One report per period; periods without transactions yield a warning entry with g = nan."""
    out = []
    for period in periods:
        rows = slice_period(records, period)
        try:
            snap = aggregate(rows, period)
        except EmptyNetworkError:
            out.append(GiniReport(math.nan, variant, threshold, 0, str(period), "empty period"))
            continue
        income = variant_income(snap, variant, alpha)
        try:
            out.append(gini(lorenz(income, threshold, variant), str(period)))
        except EmptyPopulationError as exc:
            out.append(GiniReport(math.nan, variant, threshold, 0, str(period), str(exc)))
    return out
