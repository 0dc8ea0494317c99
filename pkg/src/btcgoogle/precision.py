"""Arithmetic backends: machine doubles, MPFR floats (via gmpy2) and exact rationals.

``p`` counts mantissa bits after the leading one, so ``p=52`` is IEEE double
and MPFR is run at ``p + 1`` bits of significand.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
import numpy as np

MACHINE_BITS = 52


@contextmanager
def working_precision(p: int):
    with gmpy2.context(gmpy2.get_context(), precision=p + 1):
        yield


def current_bits() -> int:
    return gmpy2.get_context().precision - 1


def eps(p: int):
    """2^-p as a float for p=52, else as an mpfr at the current context."""
    if p <= MACHINE_BITS:
        return 2.0**-p
    return gmpy2.mpfr(2) ** (-p)


def is_object(v) -> bool:
    return isinstance(v, np.ndarray) and v.dtype == object


def element_kind(v) -> str:
    """'float', 'exact' or 'hp' for an array produced by this package."""
    if not is_object(v):
        return "float"
    if len(v) and isinstance(v.flat[0], Fraction):
        return "exact"
    return "hp"


def to_mpfr(x):
    if isinstance(x, Fraction):
        return gmpy2.mpfr(gmpy2.mpq(x.numerator, x.denominator))
    if isinstance(x, (complex, np.complexfloating)):
        return gmpy2.mpc(x)
    return gmpy2.mpfr(x)


def to_hp(values) -> np.ndarray:
    """Object array of MPFR numbers, rounded to nearest at the current precision."""
    arr = np.asarray(values, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    flat = out.reshape(-1)
    for i, x in enumerate(arr.reshape(-1)):
        flat[i] = to_mpfr(x)
    return out


def hp_zeros(n: int) -> np.ndarray:
    out = np.empty(n, dtype=object)
    out[:] = [gmpy2.mpfr(0)] * n
    return out


def to_float(values) -> np.ndarray:
    arr = np.asarray(values, dtype=object).reshape(-1)
    if any(isinstance(x, gmpy2.mpc) or isinstance(x, complex) for x in arr):
        return np.array([complex(x) for x in arr])
    return np.array([float(x) for x in arr])


def hp_sqrt(x):
    return gmpy2.sqrt(x)


@dataclass(frozen=True)
class Execution:
    """Summation layout for reductions.

    ``deterministic``: one sequential pass. ``parallel``: the vector is cut into
    ``shards`` contiguous chunks reduced separately and combined in chunk order,
    which is reproducible for a fixed shard count but rounds differently from
    other shard counts.
    """

    mode: str = "deterministic"
    shards: int = 1

    def __post_init__(self):
        if self.mode not in ("deterministic", "parallel"):
            raise ValueError(f"unknown execution mode {self.mode!r}")
        if self.shards < 1:
            raise ValueError("shards must be >= 1")

    @property
    def n_chunks(self) -> int:
        return self.shards if self.mode == "parallel" else 1


DETERMINISTIC = Execution()


def _chunks(n: int, k: int) -> list[slice]:
    bounds = np.linspace(0, n, min(k, max(n, 1)) + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def xsum(v: np.ndarray, execution: Execution = DETERMINISTIC):
    if is_object(v):
        return _object_sum(v, execution)
    if execution.n_chunks == 1:
        return v.sum()
    total = v.dtype.type(0)
    for s in _chunks(len(v), execution.n_chunks):
        total = total + v[s].sum()
    return total


def _object_sum(v, execution):
    parts = []
    for s in _chunks(len(v), execution.n_chunks):
        acc = None
        for x in v[s]:
            acc = x if acc is None else acc + x
        if acc is not None:
            parts.append(acc)
    total = parts[0] if parts else 0
    for p in parts[1:]:
        total = total + p
    return total


def xdot(a: np.ndarray, b: np.ndarray, execution: Execution = DETERMINISTIC):
    """sum(a * b) without conjugation, in the layout given by ``execution``."""
    if execution.n_chunks == 1:
        return np.dot(a, b)
    total = None
    for s in _chunks(len(a), execution.n_chunks):
        part = np.dot(a[s], b[s])
        total = part if total is None else total + part
    return total


def xgemv_t(V: np.ndarray, w: np.ndarray, execution: Execution = DETERMINISTIC) -> np.ndarray:
    """V.T @ w for a float basis, reduced per shard in order."""
    if execution.n_chunks == 1:
        return V.T @ w
    total = None
    for s in _chunks(len(w), execution.n_chunks):
        part = V[s].T @ w[s]
        total = part if total is None else total + part
    return total


_POOL: ThreadPoolExecutor | None = None


def pool() -> ThreadPoolExecutor:
    global _POOL
    if _POOL is None:
        _POOL = ThreadPoolExecutor(max_workers=8)
    return _POOL


def row_chunks(n: int, execution: Execution) -> list[slice]:
    return _chunks(n, execution.n_chunks)
