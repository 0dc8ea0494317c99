"""Transaction logs: parsing, period slicing, aggregation and descriptive statistics.

Amounts are carried as exact :class:`fractions.Fraction` values in bitcoin.
Input files store integer base units whose size depends on the era
(10^-3 BTC early on, 10^-8 BTC later), see :class:`BaseUnitPolicy`.
"""
from __future__ import annotations

import io
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from fractions import Fraction
from types import MappingProxyType
from typing import IO, Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

# 2010-03-01T00:00:00Z
DEFAULT_ERA_SWITCH = 1267401600

_SPLIT = re.compile(r"[,\s]+")


class ParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class RejectedRecordError(ParseError):
    """A syntactically valid line whose amount is not positive."""


class EmptyNetworkError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class TransactionRecord:
    src: int
    dst: int
    time: int
    amount: Fraction


@dataclass(frozen=True)
class BaseUnitPolicy:
    """Size of one integer base unit, possibly switching at a timestamp.

    ``fixed:1e-8`` and ``fixed:1e-3`` use one unit for every record;
    ``era:<t>`` uses 10^-3 BTC before unix time ``t`` and 10^-8 BTC from then on.
    """

    early_unit: Fraction = Fraction(1, 10**3)
    late_unit: Fraction = Fraction(1, 10**8)
    switch_time: int | None = DEFAULT_ERA_SWITCH

    @classmethod
    def parse(cls, text: str) -> "BaseUnitPolicy":
        kind, _, arg = text.strip().partition(":")
        if kind == "fixed" and arg:
            unit = Fraction(arg)
            if unit <= 0:
                raise ValueError(f"base unit must be positive: {text!r}")
            return cls(early_unit=unit, late_unit=unit, switch_time=None)
        if kind == "era":
            return cls(switch_time=parse_time(arg) if arg else DEFAULT_ERA_SWITCH)
        raise ValueError(f"unknown base-unit policy {text!r}")

    def unit_at(self, time: int) -> Fraction:
        if self.switch_time is None or time >= self.switch_time:
            return self.late_unit
        return self.early_unit

    def __str__(self) -> str:
        if self.switch_time is None:
            return f"fixed:{self.late_unit}"
        return f"era:{self.switch_time}"


def parse_time(text: str) -> int:
    """Unix seconds from an integer string or an ISO date (UTC assumed)."""
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def parse_transactions(
    stream: IO[bytes] | IO[str] | Iterable[bytes | str],
    policy: BaseUnitPolicy | str = BaseUnitPolicy(),
) -> list[TransactionRecord]:
    """Parse ``src dst unix_time amount`` lines (space or comma separated).

    Blank lines and lines starting with ``#`` are skipped.
    """
    if isinstance(policy, str):
        policy = BaseUnitPolicy.parse(policy)
    records = []
    for line_no, raw in enumerate(stream, start=1):
        line = raw.decode("ascii") if isinstance(raw, bytes) else raw
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = _SPLIT.split(line)
        if len(parts) != 4:
            raise ParseError(line_no, f"expected 4 fields, got {len(parts)}")
        try:
            src, dst, time, units = (int(p) for p in parts)
        except ValueError:
            raise ParseError(line_no, f"non-integer field in {line!r}") from None
        if src < 0 or dst < 0:
            raise ParseError(line_no, "node ids must be non-negative")
        if units <= 0:
            raise RejectedRecordError(line_no, f"amount must be positive, got {units}")
        records.append(TransactionRecord(src, dst, time, units * policy.unit_at(time)))
    return records


def read_transactions(path, policy: BaseUnitPolicy | str = BaseUnitPolicy()) -> list[TransactionRecord]:
    with open(path, "rb") as fh:
        return parse_transactions(fh, policy)


def format_transactions(records: Iterable[TransactionRecord], unit: Fraction = Fraction(1, 10**8)) -> str:
    """Edge-list text in integer base units of size ``unit``."""
    out = io.StringIO()
    for r in records:
        units = r.amount / unit
        if units.denominator != 1:
            raise ValueError(f"amount {r.amount} is not a multiple of the base unit {unit}")
        out.write(f"{r.src} {r.dst} {r.time} {units.numerator}\n")
    return out.getvalue()


# --------------------------------------------------------------------------- periods

_SLICES = ("H1", "H2", "Q1", "Q2", "Q3", "Q4", "FULL")
_PERIOD_RE = re.compile(r"^(?:BC)?(\d{4})(H[12]|Q[1-4])$")


@dataclass(frozen=True, order=True)
class PeriodLabel:
    year: int
    slice: str

    def __post_init__(self):
        if self.slice not in _SLICES:
            raise ValueError(f"unknown period slice {self.slice!r}")
        if self.slice == "FULL":
            return
        if self.year <= 2009 and self.slice.startswith("Q"):
            raise ValueError(f"{self.year} is split in halves (H1/H2)")
        if self.year > 2009 and self.slice.startswith("H"):
            raise ValueError(f"{self.year} is split in quarters (Q1..Q4)")

    @classmethod
    def full(cls) -> "PeriodLabel":
        return cls(0, "FULL")

    @classmethod
    def parse(cls, text: str) -> "PeriodLabel":
        """Accepts ``FULL``, ``2010Q2``, ``BC2010Q2``, ``2009H1``.

        The network names ``BC2009Q2``/``BC2009Q4`` denote the two 2009 halves
        and are mapped to ``2009H1``/``2009H2``.
        """
        text = text.strip().upper()
        if text == "FULL":
            return cls.full()
        m = _PERIOD_RE.match(text)
        if not m:
            raise ValueError(f"cannot parse period {text!r}")
        year, sl = int(m.group(1)), m.group(2)
        if year == 2009 and sl in ("Q2", "Q4"):
            sl = "H1" if sl == "Q2" else "H2"
        return cls(year, sl)

    def bounds(self) -> tuple[int | None, int | None]:
        """Half-open UTC interval ``[start, end)``; ``None`` means unbounded."""
        if self.slice == "FULL":
            return None, None
        if self.slice.startswith("H"):
            first_month, months = (1 if self.slice == "H1" else 7), 6
        else:
            first_month, months = 3 * (int(self.slice[1]) - 1) + 1, 3
        start = datetime(self.year, first_month, 1, tzinfo=timezone.utc)
        end_month = first_month + months
        end_year = self.year + (end_month - 1) // 12
        end = datetime(end_year, (end_month - 1) % 12 + 1, 1, tzinfo=timezone.utc)
        return int(start.timestamp()), int(end.timestamp())

    def contains(self, time: int) -> bool:
        lo, hi = self.bounds()
        return (lo is None or time >= lo) and (hi is None or time < hi)

    def __str__(self) -> str:
        return "FULL" if self.slice == "FULL" else f"{self.year}{self.slice}"


def period_of(time: int) -> PeriodLabel:
    dt = datetime.fromtimestamp(time, tz=timezone.utc)
    if dt.year <= 2009:
        return PeriodLabel(dt.year, "H1" if dt.month <= 6 else "H2")
    return PeriodLabel(dt.year, f"Q{(dt.month - 1) // 3 + 1}")


def periods_spanning(records: Sequence[TransactionRecord]) -> list[PeriodLabel]:
    """Sorted labels of every period that holds at least one record."""
    return sorted({period_of(r.time) for r in records})


def slice_period(records: Iterable[TransactionRecord], period: PeriodLabel) -> list[TransactionRecord]:
    lo, hi = period.bounds()
    if lo is None:
        return list(records)
    return [r for r in records if lo <= r.time < hi]


# --------------------------------------------------------------------------- snapshot


@dataclass(frozen=True)
class NetworkSnapshot:
    period: PeriodLabel | None
    node_ids: Mapping[int, int]
    edges: Mapping[tuple[int, int], Fraction]
    total_volume: Fraction
    span: tuple[int, int]
    n_records: int

    @property
    def N(self) -> int:
        return len(self.node_ids)

    @property
    def n_links(self) -> int:
        return len(self.edges)

    @property
    def nodes(self) -> list[int]:
        """Original ids in dense-index order."""
        return sorted(self.node_ids, key=self.node_ids.__getitem__)

    def dense_edges(self) -> tuple[np.ndarray, np.ndarray, list[Fraction]]:
        """Edges as (src index, dst index, weight), sorted by (src, dst) index."""
        items = sorted(((self.node_ids[s], self.node_ids[d]), w) for (s, d), w in self.edges.items())
        src = np.array([k[0] for k, _ in items], dtype=np.int64)
        dst = np.array([k[1] for k, _ in items], dtype=np.int64)
        return src, dst, [w for _, w in items]


def aggregate(
    records: Sequence[TransactionRecord],
    period: PeriodLabel | None = None,
    drop_self_loops: bool = False,
) -> NetworkSnapshot:
    """Sum transactions per ordered pair. Node ids are re-indexed densely in ascending id order."""
    edges: dict[tuple[int, int], Fraction] = defaultdict(Fraction)
    volume = Fraction(0)
    n = 0
    t_lo = t_hi = None
    for r in records:
        if drop_self_loops and r.src == r.dst:
            continue
        edges[(r.src, r.dst)] += r.amount
        volume += r.amount
        n += 1
        t_lo = r.time if t_lo is None else min(t_lo, r.time)
        t_hi = r.time if t_hi is None else max(t_hi, r.time)
    if not edges:
        raise EmptyNetworkError("no transactions to aggregate")
    ids = sorted({u for pair in edges for u in pair})
    node_ids = {u: i for i, u in enumerate(ids)}
    return NetworkSnapshot(
        period=period,
        node_ids=MappingProxyType(node_ids),
        edges=MappingProxyType(dict(edges)),
        total_volume=volume,
        span=(t_lo, t_hi),
        n_records=n,
    )


# --------------------------------------------------------------------------- histograms


@dataclass(frozen=True)
class Histogram:
    binning: str  # "integer" or "log10"
    bins: tuple[tuple[float, int], ...]
    width: float | None = None

    @property
    def total(self) -> int:
        return sum(c for _, c in self.bins)

    def as_dict(self) -> dict:
        return dict(self.bins)


def integer_histogram(values: Iterable[int]) -> Histogram:
    counts = Counter(values)
    return Histogram("integer", tuple(sorted(counts.items())))


def degree_histograms(snapshot: NetworkSnapshot, records: Sequence[TransactionRecord]):
    """Histograms of per-node outgoing (N_a) and ingoing (N_b) transaction
    counts and of per-ordered-pair transaction counts (N_ab)."""
    out_tx, in_tx, pair_tx = Counter(), Counter(), Counter()
    for r in records:
        if (r.src, r.dst) not in snapshot.edges:
            continue
        out_tx[r.src] += 1
        in_tx[r.dst] += 1
        pair_tx[(r.src, r.dst)] += 1
    return (
        integer_histogram(out_tx.values()),
        integer_histogram(in_tx.values()),
        integer_histogram(pair_tx.values()),
    )


def partner_histograms(snapshot: NetworkSnapshot) -> tuple[Histogram, Histogram]:
    """Distinct-partner counts: out-degree and in-degree of the aggregated network."""
    out_deg, in_deg = Counter(), Counter()
    for s, d in snapshot.edges:
        out_deg[s] += 1
        in_deg[d] += 1
    return integer_histogram(out_deg.values()), integer_histogram(in_deg.values())


def log_bin(value: Fraction, width: Fraction = Fraction(1, 5)) -> int:
    """Index k with 10^(k*width) <= value < 10^((k+1)*width), decided exactly."""
    value = Fraction(value)
    if value <= 0:
        raise ValueError("log binning needs positive values")
    p, q = width.numerator, width.denominator
    vq = value**q

    def below(k):  # 10^(k*width) <= value
        return (Fraction(10) ** (k * p)) <= vq

    k = math.floor(math.log10(value) / width)
    while not below(k):
        k -= 1
    while below(k + 1):
        k += 1
    return k


def volume_histogram(records: Iterable[TransactionRecord], width: float = 0.2) -> Histogram:
    """Transaction amounts binned equidistantly in log10; labels are lower bin edges."""
    w = Fraction(str(width))
    counts = Counter(log_bin(r.amount, w) for r in records)
    bins = tuple((round(float(k * w), 12), c) for k, c in sorted(counts.items()))
    return Histogram("log10", bins, float(width))


@dataclass(frozen=True)
class BalanceLedger:
    balances: Mapping[int, Fraction]

    @property
    def total(self) -> Fraction:
        return sum(self.balances.values(), Fraction(0))


def balance_ledger(records: Iterable[TransactionRecord]) -> BalanceLedger:
    bal: dict[int, Fraction] = defaultdict(Fraction)
    for r in records:
        bal[r.dst] += r.amount
        bal[r.src] -= r.amount
    return BalanceLedger(MappingProxyType(dict(sorted(bal.items()))))


def powerlaw_fit(histogram: Histogram, fit_range: tuple[float, float]) -> tuple[float, float]:
    """Fit N_f ~ value^-beta by least squares on log10 points; returns (beta, stderr)."""
    lo, hi = fit_range
    pts = []
    for label, count in histogram.bins:
        value = 10.0**label if histogram.binning == "log10" else float(label)
        if count > 0 and value > 0 and lo <= value <= hi:
            pts.append((math.log10(value), math.log10(count)))
    if len(pts) < 3:
        raise InsufficientDataError(f"need >= 3 populated bins in {fit_range}, got {len(pts)}")
    x, y = np.array(pts).T
    res = stats.linregress(x, y)
    return float(-res.slope) + 0.0, float(res.stderr)
