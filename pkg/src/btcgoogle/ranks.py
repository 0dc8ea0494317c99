"""PageRank/CheiRank by power iteration and the analytics built on rank orderings."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .gmatrix import GoogleOperator
from .ingest import InsufficientDataError

DEFAULT_TOL = 1e-12
CORRELATOR_BINS = (1e-9, 1e4, 260)


class NotConvergedError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


def descending_order(values: np.ndarray) -> np.ndarray:
    """Node indices by decreasing value; equal values keep ascending node index."""
    values = np.asarray(values)
    return np.lexsort((np.arange(len(values)), -values))


def ranks_from_order(order: np.ndarray) -> np.ndarray:
    K = np.empty(len(order), dtype=np.int64)
    K[order] = np.arange(1, len(order) + 1)
    return K


@dataclass(frozen=True)
class RankVector:
    P: np.ndarray  # probability per node index
    kind: str  # "pagerank" or "cheirank"
    alpha: float
    iterations: int
    residual: float

    @property
    def N(self) -> int:
        return len(self.P)

    @property
    def order(self) -> np.ndarray:
        """order[K-1] is the node at rank K."""
        return descending_order(self.P)

    @property
    def K(self) -> np.ndarray:
        """Rank of every node (1 = largest probability)."""
        return ranks_from_order(self.order)

    def by_rank(self) -> np.ndarray:
        """P(K) for K = 1..N."""
        return self.P[self.order]


def pagerank(op: GoogleOperator, tol: float = DEFAULT_TOL, max_iter: int = 10_000, start=None) -> RankVector:
    """Stationary vector of G by power iteration from the uniform vector.

    Applied to an operator built on the inverted network this yields CheiRank.
    """
    if not op.alpha < 1:
        raise ValueError("power iteration needs alpha < 1")
    n = op.n
    v = np.full(n, 1.0 / n) if start is None else np.asarray(start, dtype=float) / np.sum(start)
    residual = math.inf
    for it in range(1, max_iter + 1):
        w = op.matvec(v)
        w /= w.sum()
        residual = float(np.abs(w - v).sum())
        v = w
        if residual < tol:
            break
    else:
        raise NotConvergedError(f"power iteration stopped after {max_iter} iterations", residual)
    kind = "cheirank" if op.direction == "inverted" else "pagerank"
    return RankVector(v, kind, op.alpha, it, residual)


def rank_exponent_fit(rank, k_range: tuple[float, float] = (10, 1e5)) -> tuple[float, float]:
    """Slope nu of P(K) ~ K^-nu by least squares in log-log over K_lo <= K <= K_hi."""
    pk = rank.by_rank() if isinstance(rank, RankVector) else np.asarray(rank, dtype=float)
    K = np.arange(1, len(pk) + 1)
    lo, hi = k_range
    sel = (K >= lo) & (K <= hi) & (pk > 0)
    if sel.sum() < 3:
        raise InsufficientDataError(f"only {int(sel.sum())} ranks with positive probability in [{lo}, {hi}]")
    fit = stats.linregress(np.log10(K[sel]), np.log10(pk[sel]))
    return -fit.slope + 0.0, float(fit.stderr)


@dataclass(frozen=True)
class EigenvectorProfile:
    eigenvalue: complex
    psi: np.ndarray  # complex amplitudes per node index
    node_ids: np.ndarray | None = None

    @property
    def amplitudes(self) -> np.ndarray:
        return np.abs(self.psi)

    @property
    def order(self) -> np.ndarray:
        return descending_order(self.amplitudes)

    @property
    def K_local(self) -> np.ndarray:
        return ranks_from_order(self.order)

    def by_local_rank(self) -> np.ndarray:
        return self.amplitudes[self.order]

    def by_global_rank(self, rank: RankVector) -> np.ndarray:
        """|psi| listed in the order of a PageRank or CheiRank (for K or K* axes)."""
        return self.amplitudes[rank.order]

    def top_nodes(self, count: int) -> np.ndarray:
        return self.order[:count]


def eigenvector_profile(psi, node_ids=None, eigenvalue: complex = complex("nan")) -> EigenvectorProfile:
    psi = np.asarray(psi, dtype=complex)
    ids = None if node_ids is None else np.asarray(node_ids)
    return EigenvectorProfile(complex(eigenvalue), psi, ids)


@dataclass(frozen=True)
class DensityGrid:
    counts: np.ndarray  # G x G, rows follow K, columns follow K*
    saturation: float = 1 / 16

    @property
    def G(self) -> int:
        return self.counts.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    @property
    def display(self) -> np.ndarray:
        W = self.weights
        return np.minimum(W, self.saturation * W.max())


def log_cells(K: np.ndarray, N: int, G: int) -> np.ndarray:
    """Cell j in [0, G) with N^(j/G) <= K < N^((j+1)/G); K = N goes to the last cell."""
    K = np.asarray(K, dtype=np.int64)
    if N <= 1:
        return np.zeros(len(K), dtype=np.int64)
    approx = np.floor(G * np.log(K) / math.log(N)).astype(np.int64)
    cells = np.clip(approx, 0, G - 1)
    # exact integer check where rounding could put K on the wrong side of a boundary
    frac = G * np.log(K) / math.log(N) - approx
    for i in np.flatnonzero((frac < 1e-9) | (frac > 1 - 1e-9)):
        k = int(K[i])
        j = int(cells[i])
        while j + 1 < G and k**G >= N ** (j + 1):
            j += 1
        while j > 0 and k**G < N**j:
            j -= 1
        cells[i] = j
    return cells


def density_grid(K, Kstar, G: int = 100, saturation: float = 1 / 16) -> DensityGrid:
    K = np.asarray(K)
    Kstar = np.asarray(Kstar)
    if G < 1:
        raise ValueError("cell count must be >= 1")
    if K.shape != Kstar.shape:
        raise ValueError("K and K* differ in length")
    N = len(K)
    counts = np.zeros((G, G), dtype=np.int64)
    np.add.at(counts, (log_cells(K, N, G), log_cells(Kstar, N, G)), 1)
    return DensityGrid(counts, saturation)


@dataclass(frozen=True)
class CorrelatorReport:
    kappa: float
    components: np.ndarray  # N P(i) P*(i) per node
    edges: np.ndarray  # histogram cell boundaries
    histogram: np.ndarray
    underflow: int  # components below the first edge (zeros included)
    overflow: int


def correlator(P, Pstar, bins: tuple[float, float, int] = CORRELATOR_BINS) -> CorrelatorReport:
    p = P.P if isinstance(P, RankVector) else np.asarray(P, dtype=float)
    q = Pstar.P if isinstance(Pstar, RankVector) else np.asarray(Pstar, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"rank vectors of sizes {len(p)} and {len(q)}")
    N = len(p)
    comp = N * p * q
    kappa = math.fsum(comp.tolist()) - 1
    lo, hi, cells = bins
    edges = np.logspace(math.log10(lo), math.log10(hi), cells + 1)
    hist, _ = np.histogram(comp, bins=edges)
    return CorrelatorReport(kappa, comp, edges, hist, int((comp < lo).sum()), int((comp > hi).sum()))
