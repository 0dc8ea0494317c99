"""Arnoldi iteration at machine or arbitrary precision, reliability filtering
of Ritz values, eigenvector refinement and decay widths.

Operators only need ``n`` and ``matvec(v, execution)``; the arithmetic of a
product follows the vector (float64, or MPFR object arrays at p > 52).
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace

import gmpy2
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import precision as prec
from .gmatrix import DenseOperator, GoogleOperator
from .precision import DETERMINISTIC, Execution
from .qr import hessenberg_eigenvalues
from .ranks import EigenvectorProfile, NotConvergedError, eigenvector_profile
from .subspaces import CoreOperator, SubspaceSpectrum

MATCH_TOL = 1e-6


@dataclass(frozen=True)
class ArnoldiConfig:
    n_arnoldi: int = 100
    precision_bits: int = prec.MACHINE_BITS
    breakoff_epsilon: float | None = None  # default 2^(-p/2)
    initial_vector: str = "uniform"  # or "random"
    seed: int = 0
    execution: Execution = field(default=DETERMINISTIC)

    def __post_init__(self):
        if self.n_arnoldi < 1:
            raise ValueError("n_arnoldi must be >= 1")
        if self.precision_bits < prec.MACHINE_BITS:
            raise ValueError("precision_bits must be >= 52")
        if self.initial_vector not in ("uniform", "random"):
            raise ValueError(f"unknown initial vector {self.initial_vector!r}")
        if self.breakoff_epsilon is not None:
            p = self.precision_bits
            if not (0 < self.breakoff_epsilon < 1 and math.log2(self.breakoff_epsilon) > -p):
                raise ValueError("breakoff_epsilon must lie in (2^-p, 1)")

    @property
    def hp(self) -> bool:
        return self.precision_bits > prec.MACHINE_BITS

    def epsilon(self):
        if self.breakoff_epsilon is not None:
            return gmpy2.mpfr(self.breakoff_epsilon) if self.hp else self.breakoff_epsilon
        p = self.precision_bits
        return gmpy2.mpfr(2) ** (-p / 2) if self.hp else 2.0 ** (-p / 2)


@dataclass
class ArnoldiDecomposition:
    H: np.ndarray  # m x m upper Hessenberg
    V: np.ndarray  # n x m orthonormal basis
    residual: object  # coupling h[m, m-1] to the next (discarded) basis vector
    breakoff_index: int | None
    config: ArnoldiConfig

    @property
    def m(self) -> int:
        return self.H.shape[0]


def start_vector(n: int, config: ArnoldiConfig) -> np.ndarray:
    if config.initial_vector == "uniform":
        v = np.ones(n)
    else:
        v = np.random.default_rng(config.seed).random(n)
    return v


def arnoldi_decompose(operator, config: ArnoldiConfig, v0=None) -> ArnoldiDecomposition:
    """Krylov basis with full (twice-applied classical Gram-Schmidt) re-orthogonalisation.

    Stops after ``n_arnoldi`` steps or when the new coupling element falls
    below the break-off epsilon, which means an invariant subspace was reached.
    """
    if config.hp:
        with prec.working_precision(config.precision_bits):
            return _arnoldi(operator, config, v0)
    return _arnoldi(operator, config, v0)


def _arnoldi(operator, config, v0):
    n = operator.n
    ex = config.execution
    v = start_vector(n, config) if v0 is None else np.asarray(v0)
    if config.hp:
        v = prec.to_hp(v)
        sqrt = gmpy2.sqrt
        dtype = object
    else:
        v = np.asarray(v, dtype=np.float64)
        sqrt = math.sqrt
        dtype = np.float64
    beta = sqrt(prec.xdot(v, v, ex))
    if beta == 0:
        raise ValueError("initial vector is zero")
    m_max = min(config.n_arnoldi, n)
    eps = config.epsilon()
    V = np.empty((n, m_max), dtype=dtype)
    H = np.empty((m_max + 1, m_max), dtype=dtype)
    zero = v[0] * 0
    H[:] = zero
    V[:, 0] = v / beta
    breakoff = None
    m = m_max
    h_next = zero
    for k in range(m_max):
        w = operator.matvec(V[:, k], ex)
        basis = V[:, : k + 1]
        h = prec.xgemv_t(basis, w, ex)
        w = w - basis @ h
        h2 = prec.xgemv_t(basis, w, ex)
        w = w - basis @ h2
        H[: k + 1, k] = h + h2
        h_next = sqrt(prec.xdot(w, w, ex))
        H[k + 1, k] = h_next
        if h_next < eps:
            breakoff = k + 1
            m = k + 1
            break
        if k + 1 < m_max:
            V[:, k + 1] = w / h_next
    return ArnoldiDecomposition(H[:m, :m].copy(), V[:, :m].copy(), h_next, breakoff, config)


# --------------------------------------------------------------------------- spectra


@dataclass(frozen=True)
class SpectralValue:
    value: complex
    origin: str  # "subspace" or "core"
    reliable: bool

    @property
    def re(self) -> float:
        return self.value.real

    @property
    def im(self) -> float:
        return self.value.imag


def _order_key(z: complex):
    return (-round(abs(z), 12), -cmath.phase(z))


@dataclass
class SpectrumResult:
    eigenvalues: list[SpectralValue]
    config: ArnoldiConfig | None = None
    breakoff_index: int | None = None
    arnoldi_dim: int | None = None
    # Ritz values outside the spectral bound of a stochastic operator
    discarded: int = 0

    def __post_init__(self):
        self.eigenvalues.sort(key=lambda e: _order_key(e.value))

    def values(self, reliable_only: bool = False, origin: str | None = None) -> list[complex]:
        return [
            e.value for e in self.eigenvalues
            if (e.reliable or not reliable_only) and (origin is None or e.origin == origin)
        ]

    @property
    def n_reliable(self) -> int:
        return sum(e.reliable for e in self.eigenvalues)


def match_eigenvalues(a, b, tol: float = MATCH_TOL) -> list[tuple[int, int]]:
    """Greedy one-to-one nearest-pair matching of two complex lists within ``tol``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if not len(a) or not len(b):
        return []
    d = np.abs(a[:, None] - b[None, :])
    ia, ib = np.nonzero(d <= tol)
    order = np.lexsort((ib, ia, d[ia, ib]))
    used_a, used_b, pairs = set(), set(), []
    for t in order:
        i, j = int(ia[t]), int(ib[t])
        if i not in used_a and j not in used_b:
            used_a.add(i)
            used_b.add(j)
            pairs.append((i, j))
    return sorted(pairs)


def ritz_values(operator, config: ArnoldiConfig, v0=None) -> tuple[list[complex], ArnoldiDecomposition]:
    dec = arnoldi_decompose(operator, config, v0)
    ev = hessenberg_eigenvalues(dec.H, config.precision_bits)
    return [complex(z) for z in ev], dec


def comparison_config(config: ArnoldiConfig, comparison_seed: int) -> ArnoldiConfig:
    """A second run with a different rounding realisation of the same computation."""
    if config.execution.mode == "parallel":
        ex = Execution("parallel", config.execution.shards + 1)
        return replace(config, execution=ex)
    seed = comparison_seed if (config.initial_vector == "uniform" or comparison_seed != config.seed) else comparison_seed + 1
    return replace(config, initial_vector="random", seed=seed)


def reliable_spectrum(operator, config: ArnoldiConfig, comparison_seed: int = 1, origin: str = "core", tol: float = MATCH_TOL) -> SpectrumResult:
    """Ritz values of ``operator`` flagged reliable when two independent runs agree within ``tol``.

    The runs differ in the initial vector (deterministic execution) or in the
    shard count of every reduction (parallel execution). For stochastic
    operators, Ritz values above modulus 1 by no more than 1e-8 are put back on
    the unit circle; larger ones cannot be eigenvalues and are dropped.
    """
    first, dec = ritz_values(operator, config)
    second, _ = ritz_values(operator, comparison_config(config, comparison_seed))
    matched = {i for i, _ in match_eigenvalues(first, second, tol)}
    bound = getattr(operator, "spectral_bound", None)
    slack = 10 * 2.0 ** -min(config.precision_bits, 1000)
    values, dropped = [], 0
    for i, z in enumerate(first):
        if bound is not None and abs(z) > bound + slack:
            if abs(z) > bound + 1e-8:
                dropped += 1
                continue
            z = z / abs(z) * bound
        values.append(SpectralValue(z, origin, i in matched))
    return SpectrumResult(values, config, dec.breakoff_index, dec.m, dropped)


def assemble_spectrum(subspace: SubspaceSpectrum, core: SpectrumResult | None) -> SpectrumResult:
    """Subspace block eigenvalues (exact, always reliable) together with core Ritz values."""
    values = [SpectralValue(z, "subspace", True) for z in subspace.eigenvalues()]
    if core is None:
        return SpectrumResult(values)
    values += [e for e in core.eigenvalues]
    return SpectrumResult(values, core.config, core.breakoff_index, core.arnoldi_dim, core.discarded)


@dataclass(frozen=True)
class DecayWidthSequence:
    levels: tuple[tuple[int, float], ...]

    @property
    def gammas(self) -> np.ndarray:
        return np.array([g for _, g in self.levels])


def decay_widths(spectrum: SpectrumResult) -> DecayWidthSequence:
    """gamma_j = -2 ln|lambda_j| over reliable core eigenvalues, largest modulus first."""
    if not spectrum.eigenvalues:
        raise ValueError("empty spectrum")
    mods = sorted((abs(z) for z in spectrum.values(reliable_only=True, origin="core")), reverse=True)
    mods = [r for r in mods if r > 0]
    return DecayWidthSequence(tuple((j, -2.0 * math.log(r) + 0.0) for j, r in enumerate(mods, start=1)))


# --------------------------------------------------------------------------- eigenvectors


def _rank_one_form(operator):
    """(B, u, w) with operator = B + u w^T, B sparse (or dense), for shifted solves."""
    if isinstance(operator, GoogleOperator):
        m, a, n = operator.base, operator.alpha, operator.n
        B = (a * m.csr).tocsc()
        w = (a * m.dangling.astype(float) + (1 - a)) / n
        return B, np.ones(n), w
    if isinstance(operator, CoreOperator):
        m, core = operator.matrix, operator.core
        B = m.csr[core][:, core].tocsc()
        w = m.dangling[core].astype(float) / m.N
        return B, np.ones(len(core)), w
    if isinstance(operator, DenseOperator):
        return np.asarray(operator.A, dtype=float), None, None
    raise TypeError(f"no sparse form for {type(operator).__name__}")


def _shifted_solver(B, u, w, shift):
    n = B.shape[0]
    if sp.issparse(B):
        lu = spla.splu((B - shift * sp.identity(n, format="csc")).astype(complex).tocsc())
        solve = lu.solve
    else:
        lu = sla.lu_factor(B.astype(complex) - shift * np.eye(n))
        solve = lambda b: sla.lu_solve(lu, b)
    if u is None:
        return solve
    z = solve(u.astype(complex))
    denom = 1 + w @ z

    def solve_rank_one(b):
        y = solve(b)
        return y - z * ((w @ y) / denom)

    return solve_rank_one


def core_eigenvector(operator, lambda_target: complex, tol: float = 1e-8, max_iter: int = 30, seed: int = 0, node_ids=None) -> EigenvectorProfile:
    """Right eigenvector for a computed eigenvalue by shifted inverse iteration.

    The shift sits 1e-10 (relative) off the target so the factorisation stays
    regular; the rank-one dangling/damping terms are handled by Sherman-Morrison.
    The returned vector has unit 2-norm and a real positive largest component.
    """
    B, u, w = _rank_one_form(operator)
    n = operator.n
    lam = complex(lambda_target)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    residual = math.inf
    for delta in (1e-10, 1e-8, 1e-6):
        try:
            solve = _shifted_solver(B, u, w, lam + delta * max(1.0, abs(lam)) * cmath.exp(0.3j))
        except (RuntimeError, sla.LinAlgError):
            continue
        for _ in range(max_iter):
            y = solve(x)
            norm = np.linalg.norm(y)
            if not np.isfinite(norm) or norm == 0:
                break
            x = y / norm
            residual = np.linalg.norm(operator.matvec(x) - lam * x)
            if residual <= tol:
                break
        if residual <= tol:
            break
    if residual > tol:
        raise NotConvergedError(f"eigenvector for lambda={lam} did not converge", residual)
    k = int(np.argmax(np.abs(x)))
    x = x * (abs(x[k]) / x[k])
    x[k] = abs(x[k])
    return eigenvector_profile(x, node_ids=node_ids, eigenvalue=lam)
