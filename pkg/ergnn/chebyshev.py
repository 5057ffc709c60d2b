"""Chebyshev basis on the shifted Laplacian and the node-value parameterization.

Filters are expressed in the variable lambda - 1, which maps the normalized
Laplacian spectrum [0, 2] onto the Chebyshev domain [-1, 1].
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import chebyshev as C

from .autodiff import Tensor, weighted_sum
from .errors import ShapeError
from .graph import SparseSymMatrix


@dataclass(frozen=True, eq=False)
class ChebStack:
    """blocks[k] = T_k(L_hat) X for k = 0..order."""
    order: int
    blocks: list


@dataclass(frozen=True, eq=False)
class NodeValueCoeffs:
    """Filter values at the order+1 Chebyshev nodes."""
    order: int
    node_values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.node_values, dtype=np.float64).reshape(-1)
        if values.size != self.order + 1:
            raise ShapeError(f"order {self.order} needs {self.order + 1} node values, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise ValueError("node values must be finite")
        object.__setattr__(self, 'node_values', values)


def shift_laplacian(l: SparseSymMatrix) -> SparseSymMatrix:
    """L_hat = L - I."""
    return SparseSymMatrix.from_scipy(l.to_scipy() - sp.identity(l.num_nodes, format='csr'))


def cheb_nodes(K: int) -> np.ndarray:
    """x_j = cos((j + 1/2) pi / (K + 1)) for j = 0..K, strictly decreasing."""
    if K < 0:
        raise ValueError(f"order must be non-negative, got {K}")
    return np.cos((np.arange(K + 1) + 0.5) * np.pi / (K + 1))


@lru_cache(maxsize=None)
def _interp_matrix(K):
    vander = C.chebvander(cheb_nodes(K), K)  # vander[j, k] = T_k(x_j)
    weight = np.full(K + 1, 2.0 / (K + 1))
    weight[0] = 1.0 / (K + 1)
    m = weight[:, None] * vander.T
    m.setflags(write=False)
    return m


def interp_matrix(K: int) -> np.ndarray:
    """Matrix M with coefficients = M @ node_values for order K (read-only)."""
    return _interp_matrix(int(K))


def interp_to_coeffs(c: NodeValueCoeffs) -> np.ndarray:
    """Chebyshev coefficients of the degree-K interpolant through (x_j, gamma_j)."""
    return interp_matrix(c.order) @ c.node_values


def cheb_eval(coeffs, x) -> np.ndarray:
    """sum_k coeffs[k] T_k(x)."""
    return C.chebval(x, np.asarray(coeffs, dtype=np.float64).reshape(-1))


def filter_response(coeffs, lam) -> np.ndarray:
    """Scalar filter p(lambda) = sum_k coeffs[k] T_k(lambda - 1)."""
    return cheb_eval(coeffs, np.asarray(lam, dtype=np.float64) - 1.0)


def cheb_apply(lhat: SparseSymMatrix, x, K: int) -> ChebStack:
    """Three-term recurrence T_k(L_hat) X = 2 L_hat T_{k-1}(L_hat) X - T_{k-2}(L_hat) X.

    `x` may be a numpy array or a Tensor; with a Tensor every block is
    recorded for backpropagation.
    """
    if K < 0:
        raise ValueError(f"order must be non-negative, got {K}")
    rows = x.shape[0]
    if rows != lhat.num_nodes:
        raise ShapeError(f"operator has {lhat.num_nodes} nodes, signal has {rows} rows")
    if not isinstance(x, Tensor):
        x = np.asarray(x, dtype=np.float64)
    blocks = [x]
    if K >= 1:
        blocks.append(lhat @ x)
    for _ in range(2, K + 1):
        blocks.append(2 * (lhat @ blocks[-1]) - blocks[-2])
    return ChebStack(order=K, blocks=blocks)


def combine(stack: ChebStack, coeffs):
    """sum_k coeffs[k] * stack.blocks[k]."""
    size = coeffs.data.size if isinstance(coeffs, Tensor) else np.size(coeffs)
    if size != stack.order + 1:
        raise ShapeError(f"{size} coefficients for a stack of order {stack.order}")
    if isinstance(coeffs, Tensor) or any(isinstance(b, Tensor) for b in stack.blocks):
        return weighted_sum(stack.blocks, coeffs)
    coeffs = np.asarray(coeffs, dtype=np.float64).reshape(-1)
    out = coeffs[0] * stack.blocks[0]
    for k in range(1, stack.order + 1):
        out = out + coeffs[k] * stack.blocks[k]
    return out


def chebyshev_filter(lhat: SparseSymMatrix, x, coeffs):
    size = coeffs.data.size if isinstance(coeffs, Tensor) else np.size(coeffs)
    return combine(cheb_apply(lhat, x, size - 1), coeffs)


def monomial_apply(l, x, coeffs) -> np.ndarray:
    """Dense sum_k coeffs[k] L^k X. Test oracle only."""
    a = l.to_dense() if hasattr(l, 'to_dense') else np.asarray(l, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    power = x.copy()
    for c in np.asarray(coeffs, dtype=np.float64).reshape(-1):
        out += c * power
        power = a @ power
    return out
