"""Invariant node subsets of S and the block-triangular split

    S = [[S_ss, S_sc],
         [0,    S_cc]]

A node set is invariant when every link leaving one of its members stays
inside it. Dangling nodes can never belong to one: their column of S is
uniform and reaches every node.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import precision as prec
from .gmatrix import DENSE_CAP, ColumnStochasticMatrix, DenseCapError, apply_s, to_dense


class InconsistentDecompositionError(ValueError):
    pass


@dataclass(frozen=True)
class SubspaceDecomposition:
    N: int
    subsets: tuple[tuple[int, ...], ...]
    core: tuple[int, ...]
    max_fraction: float = 0.1
    # merged candidate sets that exceeded the size bound and went to the core
    discarded: tuple[tuple[int, ...], ...] = ()

    @property
    def n_subspace_nodes(self) -> int:
        return sum(len(s) for s in self.subsets)

    def subset_of(self) -> dict[int, int]:
        return {u: i for i, s in enumerate(self.subsets) for u in s}


def _closures(matrix: ColumnStochasticMatrix, limit: int) -> dict[int, frozenset]:
    """Forward closure of every node whose closure is dangling-free and at most ``limit`` nodes."""
    succ = matrix.successors()
    dangling = matrix.dangling
    known: dict[int, frozenset | None] = {}
    for start in range(matrix.N):
        if dangling[start]:
            known[start] = None
            continue
        seen = {start}
        stack = [start]
        ok = True
        while stack and ok:
            u = stack.pop()
            for w in succ[u].tolist():
                if w in seen:
                    continue
                if dangling[w]:
                    ok = False
                    break
                prior = known.get(w, False)
                if prior is None:
                    ok = False
                    break
                if prior is not False:
                    seen |= prior
                else:
                    seen.add(w)
                    stack.append(w)
                if len(seen) > limit:
                    ok = False
                    break
        known[start] = frozenset(seen) if ok and len(seen) <= limit else None
    return {k: c for k, c in known.items() if c is not None}


def find_invariant_subspaces(matrix: ColumnStochasticMatrix, max_fraction: float = 0.1) -> SubspaceDecomposition:
    """Disjoint invariant subsets of size <= max_fraction * N; the rest is the core.

    Every node whose forward closure avoids dangling nodes and stays within the
    size bound yields a candidate; overlapping candidates are merged. A merged
    set that outgrows the bound is returned to the core and listed in
    ``discarded``.
    """
    n = matrix.N
    limit = int(math.floor(max_fraction * n))
    closures = _closures(matrix, limit)

    parent = {}

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for closure in closures.values():
        members = sorted(closure)
        for u in members:
            parent.setdefault(u, u)
        r0 = find(members[0])
        for u in members[1:]:
            ru = find(u)
            if ru != r0:
                lo, hi = min(r0, ru), max(r0, ru)
                parent[hi] = lo
                r0 = lo
    groups: dict[int, list[int]] = {}
    for u in sorted(parent):
        groups.setdefault(find(u), []).append(u)
    subsets, discarded = [], []
    for members in sorted(groups.values()):
        (subsets if len(members) <= limit else discarded).append(tuple(members))
    in_subset = {u for s in subsets for u in s}
    core = tuple(u for u in range(n) if u not in in_subset)
    return SubspaceDecomposition(n, tuple(subsets), core, max_fraction, tuple(discarded))


class CoreOperator:
    """S_cc: S restricted to the core nodes (P_c S P_c)."""

    spectral_bound = 1.0

    def __init__(self, matrix: ColumnStochasticMatrix, core):
        self.matrix = matrix
        self.core = np.asarray(core, dtype=np.int64)
        self.n = len(self.core)

    def matvec(self, x, execution=None):
        if len(x) != self.n:
            raise ValueError(f"core vector of length {len(x)}, expected {self.n}")
        if prec.is_object(x):
            zero = x[0] - x[0]
            v = np.empty(self.matrix.N, dtype=object)
            v[:] = [zero] * self.matrix.N
        else:
            v = np.zeros(self.matrix.N, dtype=x.dtype)
        v[self.core] = x
        return apply_s(self.matrix, v, execution or prec.DETERMINISTIC)[self.core]

    def dense(self, cap: int = DENSE_CAP, exact: bool = False) -> np.ndarray:
        if self.n > cap:
            raise DenseCapError(f"core dimension {self.n} exceeds the dense cap {cap}")
        A = to_dense(self.matrix, cap=max(cap, self.matrix.N), exact=exact)
        return A[np.ix_(self.core, self.core)]


@dataclass
class BlockSplit:
    permutation: np.ndarray  # new position -> node index; subsets first, then core
    blocks: list[np.ndarray]  # S_ss diagonal blocks, exact fractions
    coupling: sp.csr_matrix  # S_sc, float, rows = subspace nodes, cols = core nodes
    core: CoreOperator

    def permuted_dense(self, matrix: ColumnStochasticMatrix) -> np.ndarray:
        A = to_dense(matrix, cap=max(matrix.N, DENSE_CAP))
        p = self.permutation
        return A[np.ix_(p, p)]


def check_decomposition(matrix: ColumnStochasticMatrix, decomposition: SubspaceDecomposition) -> None:
    if decomposition.N != matrix.N:
        raise InconsistentDecompositionError("decomposition and matrix sizes differ")
    succ = matrix.successors()
    seen: set[int] = set()
    for i, subset in enumerate(decomposition.subsets):
        members = set(subset)
        if members & seen:
            raise InconsistentDecompositionError(f"subset {i} overlaps an earlier subset")
        seen |= members
        for u in subset:
            if matrix.dangling[u]:
                raise InconsistentDecompositionError(f"subset {i} contains dangling node {u}")
            leaving = set(succ[u].tolist()) - members
            if leaving:
                raise InconsistentDecompositionError(f"subset {i} is not invariant: {u} links to {sorted(leaving)[:5]}")
    if seen | set(decomposition.core) != set(range(matrix.N)) or seen & set(decomposition.core):
        raise InconsistentDecompositionError("subsets and core do not partition the nodes")


def block_split(matrix: ColumnStochasticMatrix, decomposition: SubspaceDecomposition) -> BlockSplit:
    check_decomposition(matrix, decomposition)
    sub_nodes = [u for s in decomposition.subsets for u in s]
    core = list(decomposition.core)
    perm = np.array(sub_nodes + core, dtype=np.int64)
    blocks = []
    for subset in decomposition.subsets:
        pos = {u: j for j, u in enumerate(subset)}
        B = np.empty((len(subset), len(subset)), dtype=object)
        B[:] = Fraction(0)
        for u in subset:
            for r, x in matrix.column(u):
                B[pos[r], pos[u]] += x
        blocks.append(B)
    sub_pos = {u: j for j, u in enumerate(sub_nodes)}
    rows, cols, vals = [], [], []
    for j, k in enumerate(core):
        if matrix.dangling[k]:
            for u in sub_nodes:
                rows.append(sub_pos[u]); cols.append(j); vals.append(1.0 / matrix.N)
        else:
            for r, x in matrix.column(k):
                if r in sub_pos:
                    rows.append(sub_pos[r]); cols.append(j); vals.append(float(x))
    coupling = sp.csr_matrix((vals, (rows, cols)), shape=(len(sub_nodes), len(core)))
    return BlockSplit(perm, blocks, coupling, CoreOperator(matrix, core))


# --------------------------------------------------------------------------- spectra


def _root_of_unity(k: int, L: int) -> complex:
    f = Fraction(k, L) % 1
    exact = {Fraction(0): 1 + 0j, Fraction(1, 2): -1 + 0j, Fraction(1, 4): 1j, Fraction(3, 4): -1j}
    if f in exact:
        return exact[f]
    return cmath.exp(2j * math.pi * float(f))


def _functional_graph_spectrum(block) -> list[complex] | None:
    """Exact spectrum when every column holds a single 1 (a map of the subset to itself)."""
    n = block.shape[0]
    target = []
    for c in range(n):
        nz = [r for r in range(n) if block[r, c] != 0]
        if len(nz) != 1 or block[nz[0], c] != 1:
            return None
        target.append(nz[0])
    state = [0] * n  # 0 unvisited, 1 on stack, 2 done
    eig: list[complex] = []
    on_cycle = 0
    for s in range(n):
        path = []
        u = s
        while state[u] == 0:
            state[u] = 1
            path.append(u)
            u = target[u]
        if state[u] == 1:
            L = len(path) - path.index(u)
            eig.extend(_root_of_unity(k, L) for k in range(L))
            on_cycle += L
        for w in path:
            state[w] = 2
    eig.extend([0j] * (n - on_cycle))
    return eig


def block_eigenvalues(block: np.ndarray, p: int = prec.MACHINE_BITS) -> list[complex]:
    exact = _functional_graph_spectrum(block)
    if exact is not None:
        return exact
    if p <= prec.MACHINE_BITS:
        return [complex(z) for z in sla.eigvals(np.array(block, dtype=float))]
    from .qr import dense_eigenvalues

    with prec.working_precision(p):
        return [complex(z) for z in dense_eigenvalues(prec.to_hp(block), p)]


def group_multiplicities(values: list[complex], tol: float = 1e-9) -> list[tuple[complex, int]]:
    """Cluster values closer than ``tol``; each cluster is represented by its first member."""
    groups: list[list[complex]] = []
    for z in sorted(values, key=lambda z: (-abs(z), -cmath.phase(z) if z != 0 else 0.0)):
        for g in groups:
            if abs(g[0] - z) <= tol:
                g.append(z)
                break
        else:
            groups.append([z])
    return [(g[0], len(g)) for g in groups]


@dataclass
class SubspaceSpectrum:
    per_subset: list[list[tuple[complex, int]]]
    tol: float = 1e-9

    def eigenvalues(self) -> list[complex]:
        return [z for block in self.per_subset for z, m in block for _ in range(m)]

    def unit_multiplicities(self) -> list[tuple[complex, int]]:
        unit = [z for z in self.eigenvalues() if abs(abs(z) - 1) <= self.tol]
        return group_multiplicities(unit, self.tol)

    def multiplicity(self, value: complex) -> int:
        return sum(1 for z in self.eigenvalues() if abs(z - value) <= self.tol)

    def nonvanishing(self, tol: float = 1e-6) -> list[complex]:
        return [z for z in self.eigenvalues() if abs(z) > tol]


def subspace_block_spectrum(
    decomposition: SubspaceDecomposition,
    matrix: ColumnStochasticMatrix,
    p: int = prec.MACHINE_BITS,
    cap: int = DENSE_CAP,
    split: BlockSplit | None = None,
) -> SubspaceSpectrum:
    split = split or block_split(matrix, decomposition)
    per = []
    for i, block in enumerate(split.blocks):
        if block.shape[0] > cap:
            raise DenseCapError(f"subset {i} has {block.shape[0]} nodes, above the dense cap {cap}")
        per.append(group_multiplicities(block_eigenvalues(block, p)))
    return SubspaceSpectrum(per)
