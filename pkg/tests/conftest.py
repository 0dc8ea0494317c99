"""Shared network constructors and independent dense oracles.

The oracles build matrices straight from edge lists with numpy, without going
through package code, so implementation and oracle form two separate routes.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from btcgoogle.gmatrix import ColumnStochasticMatrix


def random_edges(rng: np.random.Generator, n: int, n_edges: int, dangling_fraction: float = 0.2):
    """Weighted edges (src, dst, w) avoiding outgoing links from a random dangling set."""
    dangling = set(rng.choice(n, size=int(dangling_fraction * n), replace=False).tolist())
    senders = [u for u in range(n) if u not in dangling]
    edges = {}
    for _ in range(n_edges):
        s = int(rng.choice(senders))
        d = int(rng.integers(n))
        edges[(s, d)] = edges.get((s, d), 0) + int(rng.integers(1, 100))
    return [(s, d, w) for (s, d), w in sorted(edges.items())]


def matrix_from_edges(n, edges, direction="forward") -> ColumnStochasticMatrix:
    src, dst, w = zip(*edges) if edges else ((), (), ())
    return ColumnStochasticMatrix.from_weights(n, list(src), list(dst), list(w), direction)


def oracle_s(n, edges, direction="forward") -> np.ndarray:
    A = np.zeros((n, n))
    for s, d, w in edges:
        if direction == "forward":
            A[d, s] += w
        else:
            A[s, d] += w
    sums = A.sum(axis=0)
    for k in range(n):
        A[:, k] = A[:, k] / sums[k] if sums[k] > 0 else 1.0 / n
    return A


def oracle_g(n, edges, alpha=0.85, direction="forward") -> np.ndarray:
    return alpha * oracle_s(n, edges, direction) + (1 - alpha) / n


def oracle_stationary(G: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eig(G)
    v = np.real(V[:, np.argmin(np.abs(w - 1))])
    return v / v.sum()


def optimal_pairing_distance(a, b) -> np.ndarray:
    """Per-pair distances of the optimal one-to-one assignment of two equal-size multisets."""
    from scipy.optimize import linear_sum_assignment

    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    cost = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(cost)
    return cost[r, c]


def jordan_chain(d: int, eta: float = 0.0) -> np.ndarray:
    """Ones on the sub-diagonal and ``eta`` in the top-right corner."""
    J = np.diag(np.ones(d - 1), -1)
    J[0, d - 1] = eta
    return J


def cycle_edges(nodes):
    return [(nodes[i], nodes[(i + 1) % len(nodes)], 1) for i in range(len(nodes))]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_cycle():
    return matrix_from_edges(2, [(0, 1, 1), (1, 0, 1)])


def fractions(values):
    return [Fraction(v) for v in values]


def pytest_configure(config):
    config.acceptance_results = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "acceptance_results", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        status, detail = results[number]
        terminalreporter.line(f"criterion {number}: {status}  {detail}")
