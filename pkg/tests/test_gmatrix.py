from fractions import Fraction

import gmpy2
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from btcgoogle import precision as prec
from btcgoogle.gmatrix import (
    ColumnStochasticMatrix,
    DenseCapError,
    DimensionError,
    GoogleOperator,
    apply_g,
    apply_s,
    build_s0,
    to_dense,
    write_dangling_csv,
    write_matrix_csv,
)
from btcgoogle.ingest import TransactionRecord, aggregate
from btcgoogle.precision import Execution

from conftest import matrix_from_edges, oracle_g, oracle_s, random_edges


def test_normalisation_example():
    rows = [TransactionRecord(1, 2, 0, Fraction(2)), TransactionRecord(1, 3, 0, Fraction(1))]
    m = build_s0(aggregate(rows))
    assert m.column(0) == [(1, Fraction(2, 3)), (2, Fraction(1, 3))]
    assert m.dangling.tolist() == [False, True, True]


def test_inverted_normalises_by_received():
    m = matrix_from_edges(3, [(0, 2, 1), (1, 2, 3)], "inverted")
    assert m.column(2) == [(0, Fraction(1, 4)), (1, Fraction(3, 4))]
    assert m.dangling.tolist() == [True, True, False]


def test_two_cycle_swap(two_cycle):
    assert not two_cycle.dangling.any()
    assert to_dense(two_cycle).tolist() == [[0, 1], [1, 0]]
    assert apply_s(two_cycle, np.array([1.0, 0.0])).tolist() == [0.0, 1.0]


def test_single_dangling_node():
    m = ColumnStochasticMatrix(1, [], [], [])
    assert to_dense(m).tolist() == [[1.0]]


def test_all_dangling_fixed_point():
    m = ColumnStochasticMatrix(4, [], [], [])
    v = np.full(4, 0.25)
    assert np.array_equal(apply_s(m, v), v)


def test_exact_column_sums(rng):
    edges = random_edges(rng, 8, 20, 0.25)
    m = matrix_from_edges(8, edges)
    sums = {}
    for c, x in zip(m.cols.tolist(), m.values):
        sums[c] = sums.get(c, 0) + x
    assert all(s == 1 for s in sums.values())
    assert set(sums) == set(np.flatnonzero(~m.dangling).tolist())


def test_against_dense_oracle(rng):
    for _ in range(10):
        edges = random_edges(rng, 10, 25)
        m = matrix_from_edges(10, edges)
        v = rng.random(10)
        assert np.max(np.abs(apply_s(m, v) - oracle_s(10, edges) @ v)) <= 1e-14
        op = GoogleOperator(m, 0.85)
        assert np.max(np.abs(apply_g(op, v) - oracle_g(10, edges) @ v)) <= 1e-14
        assert np.max(np.abs(to_dense(m) - oracle_s(10, edges))) <= 1e-15
        inv = matrix_from_edges(10, edges, "inverted")
        assert np.max(np.abs(to_dense(inv) - oracle_s(10, edges, "inverted"))) <= 1e-15


def test_dense_self_consistency(rng):
    m = matrix_from_edges(8, random_edges(rng, 8, 20))
    A = to_dense(m)
    for _ in range(100):
        v = rng.standard_normal(8)
        assert np.max(np.abs(apply_s(m, v) - A @ v)) <= 1e-14


def test_alpha_limits(rng):
    m = matrix_from_edges(6, random_edges(rng, 6, 12))
    v = rng.random(6)
    assert np.array_equal(apply_g(GoogleOperator(m, 1.0), v), apply_s(m, v))
    p = v / v.sum()
    with pytest.raises(ValueError):
        GoogleOperator(m, 0.0)
    # alpha -> 0 limit via the dense form
    G = to_dense(GoogleOperator(m, 1e-300))
    assert np.allclose(G @ p, np.full(6, 1 / 6))


def test_dimension_and_cap(two_cycle):
    with pytest.raises(DimensionError):
        apply_s(two_cycle, np.ones(3))
    with pytest.raises(DenseCapError):
        to_dense(two_cycle, cap=1)


def test_exact_and_high_precision_products(rng):
    edges = random_edges(rng, 9, 20)
    m = matrix_from_edges(9, edges)
    v = np.array([Fraction(int(x), 7) for x in rng.integers(0, 50, 9)], dtype=object)
    out = apply_s(m, v)
    assert sum(out) == sum(v)
    assert np.array_equal(out, to_dense(m, exact=True) @ v)
    with prec.working_precision(200):
        hp = apply_s(m, prec.to_hp(v))
        assert all(isinstance(x, gmpy2.mpfr) for x in hp)
        err = max(abs(a - gmpy2.mpfr(gmpy2.mpq(b.numerator, b.denominator))) for a, b in zip(hp, out))
        assert err < gmpy2.mpfr(2) ** -190


def test_parallel_mode_matches(rng):
    m = matrix_from_edges(50, random_edges(rng, 50, 150))
    v = rng.random(50)
    a = apply_g(GoogleOperator(m), v)
    b = apply_g(GoogleOperator(m), v, Execution("parallel", 3))
    assert np.max(np.abs(a - b)) <= 1e-15
    assert np.array_equal(b, apply_g(GoogleOperator(m), v, Execution("parallel", 3)))


def test_dumps(tmp_path):
    m = matrix_from_edges(3, [(0, 1, 2), (0, 2, 1)])
    write_matrix_csv(m, tmp_path / "s0.csv", node_labels=[10, 11, 12])
    write_dangling_csv(m, tmp_path / "d.csv", node_labels=[10, 11, 12])
    assert (tmp_path / "s0.csv").read_text() == "row,col,numerator,denominator\n11,10,2,3\n12,10,1,3\n"
    assert (tmp_path / "d.csv").read_text() == "node_id\n11\n12\n"


@st.composite
def networks(draw):
    n = draw(st.integers(1, 15))
    edges = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1), st.integers(1, 50)), max_size=40))
    return n, edges


@settings(max_examples=80, deadline=None)
@given(networks(), st.floats(0.01, 1.0), st.integers(0, 2**32 - 1))
def test_sum_preserved(net, alpha, seed):
    n, edges = net
    m = matrix_from_edges(n, edges)
    v = np.random.default_rng(seed).standard_normal(n)
    assert abs(apply_s(m, v).sum() - v.sum()) <= 1e-13 * n * max(1.0, np.abs(v).sum())
    assert abs(apply_g(GoogleOperator(m, alpha), v).sum() - v.sum()) <= 1e-13 * n * max(1.0, np.abs(v).sum())
    vf = np.array([Fraction(int(x * 1000), 999) for x in v], dtype=object)
    assert sum(apply_s(m, vf)) == sum(vf)


@settings(max_examples=50, deadline=None)
@given(networks())
def test_inverted_is_transpose(net):
    n, edges = net
    fwd, inv = matrix_from_edges(n, edges), matrix_from_edges(n, edges, "inverted")
    W = np.zeros((n, n))
    Wi = np.zeros((n, n))
    for s, d, w in edges:
        W[d, s] += w
    for r, c, x in zip(inv.rows, inv.cols, inv.values):
        Wi[r, c] = x
    # the inverted matrix is the normalised transpose of the forward weights
    colsum = W.T.sum(axis=0)
    expected = np.divide(W.T, colsum, out=np.zeros_like(W), where=colsum > 0)
    assert np.allclose(Wi, expected, atol=1e-15)
    assert np.all(fwd.csr.toarray() >= 0) and np.all(fwd.csr.toarray() <= 1)
