"""Column-stochastic matrix S and Google operator G of a transaction network.

S = S0 + (1/N) e d^T completes every empty (dangling) column of S0 to the
uniform column, and G = alpha S + (1 - alpha)/N e e^T. Both rank-one terms are
applied implicitly, so a product costs O(N + N_links).

S0 entries are kept as exact fractions. A product is evaluated in the
arithmetic of the vector it is applied to: float64/complex128 arrays use a
sparse float copy, object arrays of ``Fraction`` stay exact, and object
arrays of MPFR numbers use entries rounded to the current gmpy2 precision.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import gmpy2
import numpy as np
import scipy.sparse as sp

from . import precision as prec
from .ingest import NetworkSnapshot
from .precision import DETERMINISTIC, Execution

DENSE_CAP = 2000


class DimensionError(ValueError):
    pass


class DenseCapError(ValueError):
    pass


class ColumnStochasticMatrix:
    """Sparse S0 with its dangling set. Treat instances as immutable."""

    def __init__(self, n: int, rows, cols, values: Sequence[Fraction], direction: str = "forward"):
        order = np.lexsort((np.asarray(rows), np.asarray(cols)))
        self.N = int(n)
        self.rows = np.asarray(rows, dtype=np.int64)[order]
        self.cols = np.asarray(cols, dtype=np.int64)[order]
        self.values = tuple(values[i] for i in order)
        self.direction = direction
        dangling = np.ones(self.N, dtype=bool)
        dangling[self.cols] = False
        self.dangling = dangling
        self.value_mode = "exact-rational"

    @classmethod
    def from_weights(cls, n: int, src, dst, weights, direction: str = "forward") -> "ColumnStochasticMatrix":
        """Normalise a weighted edge list src->dst into S0 (column = source).

        ``direction="inverted"`` builds S0* from the same list, so that column k
        holds the senders to k normalised by the total received by k.
        """
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        weights = [Fraction(w) for w in weights]
        if direction == "forward":
            cols, rows = src, dst
        elif direction == "inverted":
            cols, rows = dst, src
        else:
            raise ValueError(f"unknown direction {direction!r}")
        merged: dict[tuple[int, int], Fraction] = {}
        for c, r, w in zip(cols.tolist(), rows.tolist(), weights):
            if w <= 0:
                raise ValueError("edge weights must be positive")
            merged[(c, r)] = merged.get((c, r), Fraction(0)) + w
        colsum: dict[int, Fraction] = {}
        for (c, _), w in merged.items():
            colsum[c] = colsum.get(c, Fraction(0)) + w
        keys = sorted(merged)
        return cls(
            n,
            [r for _, r in keys],
            [c for c, _ in keys],
            [merged[k] / colsum[k[0]] for k in keys],
            direction,
        )

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def dangling_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.dangling)

    def column(self, k: int) -> list[tuple[int, Fraction]]:
        lo, hi = np.searchsorted(self.cols, [k, k + 1])
        return [(int(self.rows[i]), self.values[i]) for i in range(lo, hi)]

    def successors(self) -> list[np.ndarray]:
        """Row indices of the non-zero entries of every column."""
        bounds = np.searchsorted(self.cols, np.arange(self.N + 1))
        return [self.rows[bounds[k]:bounds[k + 1]] for k in range(self.N)]

    @cached_property
    def csr(self) -> sp.csr_matrix:
        data = np.array([float(x) for x in self.values], dtype=np.float64)
        return sp.csr_matrix((data, (self.rows, self.cols)), shape=(self.N, self.N))

    @cached_property
    def _exact_data(self) -> np.ndarray:
        return np.array(self.values + (Fraction(0),), dtype=object)[:-1]

    def _hp_data(self) -> np.ndarray:
        bits = gmpy2.get_context().precision
        cache = self.__dict__.setdefault("_hp_cache", {})
        if bits not in cache:
            cache[bits] = prec.to_hp(self._exact_data)
        return cache[bits]

    def apply_s0(self, v: np.ndarray, execution: Execution = DETERMINISTIC) -> np.ndarray:
        if not prec.is_object(v):
            if execution.n_chunks == 1:
                return self.csr @ v
            shards = prec.row_chunks(self.N, execution)
            parts = prec.pool().map(lambda s: self.csr[s] @ v, shards)
            return np.concatenate(list(parts))
        data = self._exact_data if prec.element_kind(v) == "exact" else self._hp_data()
        zero = v[0] - v[0]
        out = np.empty(self.N, dtype=object)
        out[:] = [zero] * self.N
        if self.nnz:
            np.add.at(out, self.rows, data * v[self.cols])
        return out


def build_s0(snapshot: NetworkSnapshot, direction: str = "forward") -> ColumnStochasticMatrix:
    src, dst, w = snapshot.dense_edges()
    return ColumnStochasticMatrix.from_weights(snapshot.N, src, dst, w, direction)


def _check_dim(n: int, v) -> None:
    if len(v) != n:
        raise DimensionError(f"vector of length {len(v)} applied to operator of dimension {n}")


def apply_s(matrix: ColumnStochasticMatrix, v: np.ndarray, execution: Execution = DETERMINISTIC) -> np.ndarray:
    """S v = S0 v + (1/N) (sum of v over dangling nodes) e."""
    _check_dim(matrix.N, v)
    out = matrix.apply_s0(v, execution)
    if matrix.dangling.any():
        dsum = prec.xsum(v[matrix.dangling], execution)
        out = out + dsum / matrix.N
    return out


def _scalar_like(x: float, v):
    kind = prec.element_kind(v)
    if kind == "float":
        return x
    frac = Fraction(str(x)) if isinstance(x, float) else Fraction(x)
    return frac if kind == "exact" else prec.to_mpfr(frac)


@dataclass(eq=False)
class GoogleOperator:
    base: ColumnStochasticMatrix
    alpha: float = 0.85
    execution: Execution = field(default=DETERMINISTIC)

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")

    @property
    def n(self) -> int:
        return self.base.N

    @property
    def direction(self) -> str:
        return self.base.direction

    # stochastic operators have spectral radius 1
    spectral_bound = 1.0

    def matvec(self, v, execution: Execution | None = None):
        return apply_g(self, v, execution or self.execution)


def apply_g(op: GoogleOperator, v: np.ndarray, execution: Execution = DETERMINISTIC) -> np.ndarray:
    """G v = alpha S v + (1 - alpha)/N (sum v) e."""
    _check_dim(op.n, v)
    sv = apply_s(op.base, v, execution)
    if op.alpha == 1:
        return sv
    a = _scalar_like(op.alpha, v)
    return a * sv + (1 - a) * prec.xsum(v, execution) / op.n


class DenseOperator:
    """Explicit matrix, used for constructed test operators and oracles."""

    spectral_bound = None

    def __init__(self, A):
        self.A = np.asarray(A)
        self.n = self.A.shape[0]
        self._hp: dict[int, np.ndarray] = {}

    def matvec(self, v, execution: Execution | None = None):
        _check_dim(self.n, v)
        if prec.is_object(v):
            bits = gmpy2.get_context().precision
            if bits not in self._hp:
                self._hp[bits] = prec.to_hp(self.A) if self.A.dtype != object else self.A
            A = self._hp[bits]
            return np.array([prec.xdot(A[i], v, execution or DETERMINISTIC) for i in range(self.n)], dtype=object)
        return self.A @ v


def to_dense(obj, cap: int = DENSE_CAP, exact: bool = False) -> np.ndarray:
    """Dense realisation of S (for a matrix), G (for an operator) or any object with ``to_dense``.

    ``exact=True`` returns an object array of Fractions.
    """
    if isinstance(obj, DenseOperator):
        return obj.A.copy()
    if hasattr(obj, "dense"):
        return obj.dense(cap=cap, exact=exact)
    if isinstance(obj, GoogleOperator):
        matrix, alpha = obj.base, obj.alpha
    else:
        matrix, alpha = obj, 1
    n = matrix.N
    if n > cap:
        raise DenseCapError(f"dimension {n} exceeds the dense cap {cap}")
    if exact:
        A = np.empty((n, n), dtype=object)
        A[:] = Fraction(0)
        for r, c, x in zip(matrix.rows, matrix.cols, matrix.values):
            A[r, c] += x
        A[:, matrix.dangling] = Fraction(1, n)
        if alpha != 1:
            a = Fraction(str(alpha))
            A = A * a + (1 - a) / n
        return A
    A = matrix.csr.toarray()
    A[:, matrix.dangling] = 1.0 / n
    if alpha != 1:
        A = alpha * A + (1 - alpha) / n
    return A


def matrix_triplets(matrix: ColumnStochasticMatrix, rational: bool = True) -> Iterable[tuple]:
    for r, c, x in zip(matrix.rows.tolist(), matrix.cols.tolist(), matrix.values):
        yield (r, c, x.numerator, x.denominator) if rational else (r, c, repr(float(x)))


def write_matrix_csv(matrix: ColumnStochasticMatrix, path, rational: bool = True, node_labels=None) -> None:
    """Triplet dump; row/col are original node ids when ``node_labels`` is given."""
    lab = (lambda i: node_labels[i]) if node_labels is not None else (lambda i: i)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "numerator", "denominator"] if rational else ["row", "col", "value"])
        for t in matrix_triplets(matrix, rational):
            w.writerow([lab(t[0]), lab(t[1]), *t[2:]])


def write_dangling_csv(matrix: ColumnStochasticMatrix, path, node_labels=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id"])
        for i in matrix.dangling_nodes.tolist():
            w.writerow([node_labels[i] if node_labels is not None else i])
