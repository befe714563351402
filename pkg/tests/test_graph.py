import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gvcnet.exceptions import NumericalError, ValidationError
from gvcnet.graph import (
    RoiGraph,
    cheb_adjoint,
    cheb_apply,
    laplacian,
    load_graph,
    power_iteration,
    remove_node,
    scale_laplacian,
    write_graph,
)
from gvcnet.gradsuite import random_graph

from _oracles import spectral_terms


TRIANGLE = RoiGraph(("A", "B", "C"), np.ones((3, 3)) - np.eye(3))


def test_load_single_edge():
    g = load_graph([("A", "B", 1.0)], ["A", "B"])
    np.testing.assert_array_equal(g.adjacency, [[0, 1], [1, 0]])


def test_mirrored_edge_is_not_double_counted():
    g = load_graph([("A", "B", 1.0), ("B", "A", 1.0)], ["A", "B"])
    assert g.adjacency[0, 1] == 1.0


def test_empty_edge_list_gives_zero_matrix():
    g = load_graph([], ["A", "B", "C"])
    np.testing.assert_array_equal(g.adjacency, np.zeros((3, 3)))


def test_same_direction_repeats_are_summed():
    g = load_graph([("A", "B", 1.0), ("A", "B", 0.5)], ["A", "B"])
    assert g.adjacency[1, 0] == 1.5


def test_self_loops_dropped():
    g = load_graph([("A", "A", 3.0), ("A", "B", 1.0)], ["A", "B"])
    assert g.adjacency[0, 0] == 0.0


@pytest.mark.parametrize("edges", [
    [("A", "Z", 1.0)],
    [("A", "B", -1.0)],
    [("A", "B", 1.0), ("B", "A", 2.0)],
    [("A", "B", "heavy")],
])
def test_load_errors(edges):
    with pytest.raises(ValidationError):
        load_graph(edges, ["A", "B"])


def test_csv_roundtrip(tmp_path):
    g = random_graph(np.random.default_rng(0), 6)
    write_graph(g, tmp_path / "g.csv")
    h = load_graph(str(tmp_path / "g.csv"))
    assert h.node_names == g.node_names
    np.testing.assert_array_equal(h.adjacency, g.adjacency)


def test_laplacian_examples():
    np.testing.assert_array_equal(laplacian(RoiGraph(("A", "B"), np.array([[0, 1], [1, 0.0]]))),
                                  [[1, -1], [-1, 1]])
    np.testing.assert_array_equal(laplacian(RoiGraph(("A", "B"), np.zeros((2, 2)))), np.zeros((2, 2)))
    L = laplacian(TRIANGLE)
    np.testing.assert_array_equal(np.diag(L), [2, 2, 2])
    assert np.all(L[~np.eye(3, dtype=bool)] == -1)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2 ** 31))
def test_laplacian_rows_sum_to_zero(n, seed):
    L = laplacian(random_graph(np.random.default_rng(seed), n))
    np.testing.assert_allclose(L.sum(axis=1), 0.0, atol=1e-12)
    np.testing.assert_array_equal(L, L.T)


def test_scale_two_node():
    Lt = scale_laplacian(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    assert Lt.lambda_max == pytest.approx(2.0, abs=1e-9)
    np.testing.assert_allclose(Lt.matrix, [[0, -1], [-1, 0]], atol=1e-9)


def test_scale_triangle():
    L = laplacian(TRIANGLE)
    Lt = scale_laplacian(L)
    assert Lt.lambda_max == pytest.approx(3.0, abs=1e-9)
    np.testing.assert_allclose(Lt.matrix, 2 * L / 3 - np.eye(3), atol=1e-9)


def test_scale_rejects_non_laplacian_and_degenerate():
    with pytest.raises(ValidationError):
        scale_laplacian(2 * np.eye(3))
    with pytest.raises(NumericalError, match="degenerate"):
        scale_laplacian(np.zeros((3, 3)))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2 ** 31))
def test_scaled_spectrum_in_unit_interval(n, seed):
    Lt = scale_laplacian(laplacian(random_graph(np.random.default_rng(seed), n)))
    assert np.abs(np.linalg.eigvalsh(Lt.matrix)).max() <= 1 + 1e-8
    rho = power_iteration(Lt.matrix @ Lt.matrix)
    rho = rho[0] if isinstance(rho, tuple) else rho
    assert np.sqrt(rho) <= 1 + 1e-8


def test_remove_node_induced_subgraph():
    g = remove_node(TRIANGLE, "B")
    assert g.node_names == ("A", "C")
    np.testing.assert_array_equal(g.adjacency, [[0, 1], [1, 0]])
    with pytest.raises(ValidationError):
        remove_node(g, "B")


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 10), st.integers(0, 2 ** 31), st.data())
def test_remove_then_laplacian_matches_induced(n, seed, data):
    g = random_graph(np.random.default_rng(seed), n)
    drop = data.draw(st.integers(0, n - 1))
    keep = [i for i in range(n) if i != drop]
    A = g.adjacency[np.ix_(keep, keep)]
    expected = np.diag(A.sum(axis=1)) - A
    np.testing.assert_array_equal(laplacian(remove_node(g, g.node_names[drop])), expected)


def test_remove_node_from_62_nodes():
    g = random_graph(np.random.default_rng(5), 62)
    assert remove_node(g, g.node_names[10]).n_nodes == 61


def test_cheb_apply_examples():
    X = np.random.default_rng(0).standard_normal((4, 2))
    assert len(cheb_apply(np.eye(4), X, 1)) == 1
    np.testing.assert_array_equal(cheb_apply(np.eye(4), X, 1)[0], X)
    Lt = np.array([[0.0, -1.0], [-1.0, 0.0]])
    terms = cheb_apply(Lt, np.array([[1.0], [0.0]]), 3)
    np.testing.assert_array_equal(np.stack(terms), [[[1], [0]], [[0], [-1]], [[1], [0]]])


def test_cheb_apply_dimension_mismatch():
    with pytest.raises(ValidationError):
        cheb_apply(np.eye(3), np.ones((4, 1)), 2)
    with pytest.raises(ValidationError):
        cheb_apply(np.eye(3), np.ones((3, 1)), 0)


@pytest.mark.parametrize("seed", range(10))
def test_cheb_apply_matches_spectral_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 6
    Lt = scale_laplacian(laplacian(random_graph(rng, n))).matrix
    X = rng.standard_normal((n, 3))
    for got, want in zip(cheb_apply(Lt, X, 6), spectral_terms(Lt, X, 6)):
        np.testing.assert_allclose(got, want, atol=1e-10, rtol=0)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 8), st.integers(1, 5), st.integers(0, 2 ** 31))
def test_cheb_adjoint_is_transpose(n, K, seed):
    rng = np.random.default_rng(seed)
    Lt = scale_laplacian(laplacian(random_graph(rng, n))).matrix
    X = rng.standard_normal((n, 2, 3))
    G = [rng.standard_normal((n, 2, 3)) for _ in range(K)]
    lhs = sum(float((g * t).sum()) for g, t in zip(G, cheb_apply(Lt, X, K)))
    rhs = float((cheb_adjoint(Lt, [g.copy() for g in G]) * X).sum())
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_graph_validation():
    with pytest.raises(ValidationError):
        RoiGraph(("A", "B"), np.array([[0, 1], [2, 0.0]]))
    with pytest.raises(ValidationError):
        RoiGraph(("A", "B"), np.array([[1, 1], [1, 0.0]]))
    with pytest.raises(ValidationError):
        RoiGraph(("A",), np.zeros((2, 2)))
