"""Dense eigendecomposition and exact spectral filtering.

This is the reference path: experiment targets and test oracles are computed
here. The model itself never goes through the spectral domain.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, ShapeError, SpectralSizeError


class TargetFilterKind(str, Enum):
    LOW = 'low'
    HIGH = 'high'
    BAND = 'band'
    REJECT = 'reject'
    COMB = 'comb'


def target_filter_eval(kind, lam):
    """Evaluate a target filter response at eigenvalue(s) `lam`.

    Args:
        kind (TargetFilterKind, str or callable): one of the five named
            responses, or any function of lambda returning an array.
        lam (float or np.ndarray): eigenvalue(s).

    Returns:
        float or np.ndarray: the response, same shape as `lam`.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if callable(kind) and not isinstance(kind, TargetFilterKind):
        out = np.asarray(kind(lam), dtype=np.float64)
        out = np.broadcast_to(out, lam.shape).copy()
    else:
        kind = TargetFilterKind(kind)
        if kind is TargetFilterKind.LOW:
            out = np.exp(-10.0 * lam**2)
        elif kind is TargetFilterKind.HIGH:
            out = 1.0 - np.exp(-10.0 * lam**2)
        elif kind is TargetFilterKind.BAND:
            out = np.exp(-10.0 * (lam - 1.0)**2)
        elif kind is TargetFilterKind.REJECT:
            out = 1.0 - np.exp(-10.0 * (lam - 1.0)**2)
        else:
            out = np.abs(np.sin(np.pi * lam))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenvalues in ascending order and the matching orthonormal eigenvectors (columns)."""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T


def _dense(m):
    if hasattr(m, 'to_dense'):
        return np.array(m.to_dense(), dtype=np.float64)
    a = np.array(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"eigendecomposition needs a square matrix, got shape {a.shape}")
    return a


def jacobi_eigh(a, tol=1e-10, max_sweeps=100):
    """Cyclic Jacobi eigensolver for a dense symmetric matrix.

    Sweeps over all (p, q) pairs in row order, annihilating a_pq with one
    plane rotation each, until the off-diagonal Frobenius norm drops below
    tol * max(1, ||A||_F).

    Returns:
        tuple: (eigenvalues, eigenvectors), unsorted.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(1.0, np.linalg.norm(a))

    def off_norm():
        return np.sqrt(max(0.0, (a * a).sum() - (np.diag(a)**2).sum()))

    for _ in range(max_sweeps):
        if off_norm() < tol * scale:
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta < 0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    residual = off_norm()
    if residual < tol * scale:
        return np.diag(a).copy(), v
    raise ConvergenceError(
        f"Jacobi did not converge after {max_sweeps} sweeps: off-diagonal norm {residual:.3e}"
    )


def eigendecompose(m, dense_limit=3000, solver='eigh', tol=1e-10, max_sweeps=100) -> SpectralDecomposition:
    """Full eigendecomposition of a symmetric matrix.

    Args:
        m (SparseSymMatrix or np.ndarray): symmetric input.
        dense_limit (int): refuse inputs with more rows than this.
        solver (str): 'eigh' (LAPACK via scipy) or 'jacobi' (cyclic Jacobi rotations).
        tol (float): Jacobi convergence threshold on the off-diagonal norm.
        max_sweeps (int): Jacobi sweep cap.

    Returns:
        SpectralDecomposition: ascending eigenvalues with eigenvectors.
    """
    n = m.num_nodes if hasattr(m, 'num_nodes') else np.shape(m)[0]
    if n > dense_limit:
        raise SpectralSizeError(
            f"dense eigendecomposition refused for {n} nodes (limit {dense_limit})"
        )
    a = _dense(m)
    asym = np.abs(a - a.T).max() if a.size else 0.0
    if asym > 1e-10 * max(1.0, np.abs(a).max()):
        raise ShapeError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    a = 0.5 * (a + a.T)

    if solver == 'eigh':
        w, u = scipy.linalg.eigh(a)
    elif solver == 'jacobi':
        w, u = jacobi_eigh(a, tol=tol, max_sweeps=max_sweeps)
        order = np.argsort(w, kind='stable')
        w, u = w[order], u[:, order]
    else:
        raise ValueError(f"unknown eigensolver {solver!r}")
    return SpectralDecomposition(eigenvalues=np.asarray(w), eigenvectors=np.asarray(u))


def exact_filter(d: SpectralDecomposition, kind, x) -> np.ndarray:
    """U diag(f(lambda)) U^T x for the response `kind`."""
    x = np.asarray(x, dtype=np.float64)
    vector = x.ndim == 1
    if vector:
        x = x.reshape(-1, 1)
    u = d.eigenvectors
    if x.shape[0] != u.shape[0]:
        raise ShapeError(f"decomposition has {u.shape[0]} nodes, signal has {x.shape[0]} rows")
    response = np.asarray(target_filter_eval(kind, d.eigenvalues)).reshape(-1, 1)
    out = u @ (response * (u.T @ x))
    return out.ravel() if vector else out
