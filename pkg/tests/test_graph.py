import numpy as np
import pytest

from ergnn.errors import GraphError, ShapeError
from ergnn.graph import (
    SparseSymMatrix, build_graph, erdos_renyi_graph, grid_graph, normalized_laplacian,
    read_edge_list, sbm_graph, spmm,
)
from ergnn.spectral import eigendecompose


def test_path_graph_csr(path3):
    assert path3.num_nodes == 3
    assert path3.num_edges == 4
    np.testing.assert_array_equal(path3.row_offsets, [0, 1, 3, 4])
    np.testing.assert_array_equal(path3.col_indices, [1, 0, 2, 1])


def test_duplicates_and_self_loops_removed():
    g = build_graph([(0, 1), (1, 0), (0, 1), (2, 2)], 3)
    assert g.num_edges == 2
    np.testing.assert_array_equal(g.degrees(), [1, 1, 0])


def test_edge_out_of_range():
    with pytest.raises(GraphError, match="out of range"):
        build_graph([(0, 3)], 3)


def test_every_edge_stored_both_ways(grid4):
    edges = {tuple(e) for e in grid4.stored_edges()}
    assert all((v, u) in edges for u, v in edges)


def test_grid_degrees():
    g = grid_graph(3, 3)
    np.testing.assert_array_equal(g.degrees().reshape(3, 3), [[2, 3, 2], [3, 4, 3], [2, 3, 2]])


def test_grid_zero_dimension():
    with pytest.raises(GraphError):
        grid_graph(0, 5)


def test_laplacian_path_graph(path3):
    lap = normalized_laplacian(path3).to_dense()
    s = 1 / np.sqrt(2)
    expected = np.array([[1, -s, 0], [-s, 1, -s], [0, -s, 1]])
    np.testing.assert_allclose(lap, expected, atol=1e-15)


def test_laplacian_isolated_node():
    lap = normalized_laplacian(build_graph([(0, 1)], 3))
    np.testing.assert_array_equal(lap.diagonal(), [1.0, 1.0, 0.0])
    assert np.all(lap.to_dense()[2] == 0)


@pytest.mark.parametrize("seed", range(10))
def test_laplacian_symmetric_with_bounded_spectrum(seed):
    lap = normalized_laplacian(erdos_renyi_graph(30, 0.15, seed=seed))
    dense = lap.to_dense()
    assert np.abs(dense - dense.T).max() <= 1e-12
    lam = eigendecompose(lap).eigenvalues
    assert lam.min() >= -1e-8
    assert lam.max() <= 2 + 1e-8


def test_bipartite_graph_has_eigenvalue_two(path3):
    lam = eigendecompose(normalized_laplacian(path3)).eigenvalues
    assert lam.max() == pytest.approx(2.0, abs=1e-12)


def test_spmm_matches_dense(rng):
    a = rng.standard_normal((20, 20))
    a[rng.random((20, 20)) < 0.6] = 0.0
    a = a + a.T
    x = rng.standard_normal((20, 3))
    np.testing.assert_allclose(spmm(SparseSymMatrix.from_scipy(a), x), a @ x, atol=1e-12)


def test_spmm_vector_and_shape_error(path3):
    lap = normalized_laplacian(path3)
    assert spmm(lap, np.ones(3)).shape == (3,)
    with pytest.raises(ShapeError):
        spmm(lap, np.ones((4, 2)))


def test_sbm_is_deterministic():
    a = sbm_graph([20, 20], 0.3, 0.05, seed=3)
    b = sbm_graph([20, 20], 0.3, 0.05, seed=3)
    np.testing.assert_array_equal(a.col_indices, b.col_indices)
    np.testing.assert_array_equal(a.blocks, np.repeat([0, 1], 20))


def test_sbm_disjoint_cliques():
    g = sbm_graph([5, 5], 1.0, 0.0, seed=0)
    assert np.all(g.degrees() == 4)
    blocks = g.blocks
    assert all(blocks[u] == blocks[v] for u, v in g.stored_edges())


def test_sbm_bad_probability():
    with pytest.raises(GraphError):
        sbm_graph([3, 3], 1.5, 0.0, seed=0)


def test_read_edge_list_skips_comments(tmp_path):
    path = tmp_path / 'edges.txt'
    path.write_text("# header\n0 1\n\n1 2\n")
    g = read_edge_list(path)
    assert g.num_nodes == 3
    assert g.num_edges == 4


def test_read_edge_list_reports_line(tmp_path):
    path = tmp_path / 'edges.txt'
    path.write_text("0 1\n1 x\n")
    with pytest.raises(GraphError, match="line 2"):
        read_edge_list(path)


def test_rebuilding_from_stored_edges_is_identity():
    g = erdos_renyi_graph(40, 0.2, seed=1)
    again = build_graph(g.stored_edges(), g.num_nodes)
    np.testing.assert_array_equal(again.row_offsets, g.row_offsets)
    np.testing.assert_array_equal(again.col_indices, g.col_indices)


def test_sbm_edge_counts_concentrate():
    g = sbm_graph([100, 100], 0.5, 0.1, seed=3)
    edges = g.stored_edges()
    same = g.blocks[edges[:, 0]] == g.blocks[edges[:, 1]]
    within, across = same.sum() // 2, (~same).sum() // 2
    # 2 * C(100, 2) pairs inside blocks, 100 * 100 across
    assert abs(within - 9900 * 0.5) <= 4 * np.sqrt(9900 * 0.5 * 0.5)
    assert abs(across - 10000 * 0.1) <= 4 * np.sqrt(10000 * 0.1 * 0.9)
