"""Graphs in CSR form, the normalized Laplacian and synthetic graph generators."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .autodiff import Tensor, sparse_matmul
from .errors import GraphError, ShapeError


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected unweighted graph stored as CSR with implicit unit weights.

    Column indices are sorted within each row, every edge is stored in both
    directions, and there are no self-loops or duplicates. `blocks` holds the
    planted community of each node for generated block-model graphs.
    """
    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    blocks: np.ndarray = None

    @property
    def num_edges(self) -> int:
        """Number of stored directed edges (twice the undirected count)."""
        return int(self.row_offsets[-1])

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def stored_edges(self) -> np.ndarray:
        """All stored directed edges as an E x 2 array in CSR order."""
        rows = np.repeat(np.arange(self.num_nodes), self.degrees())
        return np.stack([rows, self.col_indices], axis=1)


@dataclass(frozen=True, eq=False)
class SparseSymMatrix:
    """Symmetric real matrix in CSR form (the Laplacian L or its shift L - I)."""
    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    @classmethod
    def from_scipy(cls, m) -> 'SparseSymMatrix':
        m = sp.csr_matrix(m)
        m.sum_duplicates()
        m.sort_indices()
        return cls(
            num_nodes=m.shape[0],
            row_offsets=m.indptr.astype(np.int64),
            col_indices=m.indices.astype(np.int64),
            values=m.data.astype(np.float64),
        )

    @cached_property
    def _csr(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets),
            shape=(self.num_nodes, self.num_nodes),
        )

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()

    def __matmul__(self, x):
        if isinstance(x, Tensor):
            if x.shape[0] != self.num_nodes:
                raise ShapeError(f"matrix has {self.num_nodes} rows, signal has {x.shape[0]}")
            return sparse_matmul(self, x)
        return spmm(self, x)


def _csr_from_pairs(rows, cols, num_nodes):
    # unique sorts by (row, col) and removes duplicates
    keys = np.unique(rows.astype(np.int64) * num_nodes + cols.astype(np.int64))
    rows = keys // num_nodes if num_nodes else keys
    cols = keys % num_nodes if num_nodes else keys
    counts = np.bincount(rows, minlength=num_nodes)
    row_offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return row_offsets, cols.astype(np.int64)


def build_graph(edges, num_nodes: int) -> Graph:
    """Build a symmetric CSR graph from node pairs.

    Pairs are symmetrized and deduplicated; self-loops are dropped.

    Args:
        edges: iterable of (u, v) pairs of 0-based node indices.
        num_nodes (int): number of nodes.

    Returns:
        Graph: the constructed graph.
    """
    if num_nodes < 0:
        raise GraphError(f"num_nodes must be non-negative, got {num_nodes}")
    edges = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    edges = edges.reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        bad = edges[(edges < 0).any(axis=1) | (edges >= num_nodes).any(axis=1)][0]
        raise GraphError(f"edge ({bad[0]}, {bad[1]}) is out of range for {num_nodes} nodes")
    u, v = edges[:, 0], edges[:, 1]
    keep = u != v
    u, v = u[keep], v[keep]
    row_offsets, col_indices = _csr_from_pairs(
        np.concatenate([u, v]), np.concatenate([v, u]), num_nodes,
    )
    return Graph(num_nodes=num_nodes, row_offsets=row_offsets, col_indices=col_indices)


def normalized_laplacian(g: Graph) -> SparseSymMatrix:
    """L = I - D^-1/2 A D^-1/2 with D^-1/2 set to 0 for isolated nodes.

    The diagonal is stored explicitly for every node (0 for isolated ones).
    """
    n = g.num_nodes
    deg = g.degrees().astype(np.float64)
    rows = np.repeat(np.arange(n), g.degrees())
    cols = g.col_indices
    off = -1.0 / np.sqrt(deg[rows] * deg[cols])
    diag = (deg > 0).astype(np.float64)

    all_rows = np.concatenate([rows, np.arange(n)])
    all_cols = np.concatenate([cols, np.arange(n)])
    all_vals = np.concatenate([off, diag])
    order = np.lexsort((all_cols, all_rows))
    counts = np.bincount(all_rows, minlength=n)
    return SparseSymMatrix(
        num_nodes=n,
        row_offsets=np.concatenate([[0], np.cumsum(counts)]).astype(np.int64),
        col_indices=all_cols[order].astype(np.int64),
        values=all_vals[order],
    )


def spmm(m: SparseSymMatrix, x) -> np.ndarray:
    """Exact CSR times dense product.

    Rows are accumulated in ascending column order, so results do not depend
    on how rows are scheduled.
    """
    x = np.asarray(x, dtype=np.float64)
    vector = x.ndim == 1
    if vector:
        x = x.reshape(-1, 1)
    if x.shape[0] != m.num_nodes:
        raise ShapeError(f"matrix has {m.num_nodes} columns, signal has {x.shape[0]} rows")
    out = np.asarray(m.to_scipy() @ x)
    return out.ravel() if vector else out


def grid_graph(rows: int, cols: int) -> Graph:
    """4-neighbour lattice with rows*cols nodes, node index r*cols + c."""
    if rows < 1 or cols < 1:
        raise GraphError(f"grid dimensions must be at least 1, got {rows}x{cols}")
    idx = np.arange(rows * cols).reshape(rows, cols)
    horizontal = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    vertical = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    return build_graph(np.concatenate([horizontal, vertical]), rows * cols)


def sbm_graph(block_sizes, p_in: float, p_out: float, seed: int) -> Graph:
    """Stochastic block model.

    Each unordered pair is an edge with probability p_in inside a block and
    p_out across blocks. The result is deterministic given `seed` and keeps
    the block label of each node in `Graph.blocks`.
    """
    for name, p in (('p_in', p_in), ('p_out', p_out)):
        if not 0.0 <= p <= 1.0:
            raise GraphError(f"{name} must lie in [0, 1], got {p}")
    block_sizes = [int(b) for b in block_sizes]
    if any(b < 0 for b in block_sizes):
        raise GraphError(f"block sizes must be non-negative, got {block_sizes}")
    blocks = np.repeat(np.arange(len(block_sizes)), block_sizes)
    n = blocks.size
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(blocks[iu] == blocks[ju], p_in, p_out)
    hit = rng.random(iu.size) < prob
    g = build_graph(np.stack([iu[hit], ju[hit]], axis=1), n)
    return Graph(g.num_nodes, g.row_offsets, g.col_indices, blocks=blocks)


def erdos_renyi_graph(num_nodes: int, p: float, seed: int) -> Graph:
    return sbm_graph([num_nodes], p, p, seed)


def read_edge_list(path, num_nodes: int = None) -> Graph:
    """Read a whitespace-separated `u v` edge list.

    Blank lines and lines starting with '#' are skipped. When `num_nodes` is
    not given it is inferred as the largest index + 1.
    """
    pairs = []
    with open(path, 'r') as file:
        for lineno, line in enumerate(file, start=1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphError(f"{path}, line {lineno}: expected 'u v', got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphError(f"{path}, line {lineno}: node indices must be integers, got {line!r}")
            if u < 0 or v < 0:
                raise GraphError(f"{path}, line {lineno}: negative node index in {line!r}")
            if num_nodes is not None and max(u, v) >= num_nodes:
                raise GraphError(f"{path}, line {lineno}: node index out of range for {num_nodes} nodes")
            pairs.append((u, v))
    if num_nodes is None:
        num_nodes = 1 + max((max(p) for p in pairs), default=-1)
    return build_graph(pairs, num_nodes)
