"""Cross-module property checks run as one suite.

Every check compares a fast path against a slow, obviously-correct one:
the Chebyshev recurrence against exact spectral filtering, tape gradients
against central differences, CSR products against dense products.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from .autodiff import gradient_check
from .chebyshev import (
    NodeValueCoeffs, cheb_apply, chebyshev_filter, filter_response, interp_matrix,
    interp_to_coeffs, monomial_apply, shift_laplacian,
)
from .config import ExperimentConfig, Task
from .constants import FILTER_NAMES, TOLERANCES
from .graph import SparseSymMatrix, erdos_renyi_graph, normalized_laplacian, spmm
from .harness import run_theorem_check
from .model import LossWeights, forward, init_params, loss
from .spectral import eigendecompose, exact_filter


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    seconds: float

    def to_dict(self) -> dict:
        return {
            'check': self.name,
            'passed': self.passed,
            'value': self.value,
            'tolerance': self.tolerance,
            'seconds': self.seconds,
        }


@dataclass
class OracleReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list:
        return [c.name for c in self.checks if not c.passed]

    def to_records(self) -> list:
        return [c.to_dict() for c in self.checks]


def check_spectral_equivalence(num_graphs=20, num_nodes=50, p=0.1, K=10, coeff_perturbation=0.0):
    """Largest deviation between recurrence filtering and exact spectral filtering.

    With `coeff_perturbation` the recurrence uses coefficients shifted by that
    amount while the reference keeps the originals, so the check must fail.
    """
    worst = 0.0
    for g in range(num_graphs):
        rng = np.random.default_rng([g, 101])
        lap = normalized_laplacian(erdos_renyi_graph(num_nodes, p, seed=g))
        lhat = shift_laplacian(lap)
        coeffs = interp_to_coeffs(NodeValueCoeffs(K, rng.standard_normal(K + 1)))
        x = rng.standard_normal((num_nodes, 3))
        applied = coeffs.copy()
        applied[0] += coeff_perturbation
        fast = chebyshev_filter(lhat, x, applied)
        exact = exact_filter(eigendecompose(lap), lambda lam: filter_response(coeffs, lam), x)
        worst = max(worst, float(np.abs(fast - exact).max()))
    return worst


def _gradient_instance(mode, seed=0):
    rng = np.random.default_rng([seed, 202])
    n, classes = 20, 2
    lhat = shift_laplacian(normalized_laplacian(erdos_renyi_graph(n, 0.3, seed=seed)))
    x = rng.standard_normal((n, 3))
    cfg = ExperimentConfig(K1=4, K2=4, mlp_layers=2, mlp_hidden=8, dropout_p=0.0)
    params = init_params(cfg, 3, classes, seed)
    params.gamma_num.data[:] = rng.uniform(0.5, 1.5, size=params.gamma_num.shape)
    params.gamma_den.data[:] = rng.uniform(0.5, 1.5, size=params.gamma_den.shape)
    if mode == 'classification':
        y = rng.integers(0, classes, size=n)
        y[:2] = [0, 1]
    else:
        y = rng.standard_normal((n, classes))
    mask = np.arange(n // 2)
    weights = LossWeights(1.0, 1.0)

    def fn():
        outputs = forward(params, x, lhat, training=False)
        return loss(outputs, y, mask, lhat, params, weights, mode)

    return fn, params.tensors()


def check_gradients(mode, h=1e-5):
    """Worst violation ratio over every parameter of the full loss; at most 1 passes."""
    fn, tensors = _gradient_instance(mode)
    report = gradient_check(
        fn, tensors, h=h, rtol=TOLERANCES['gradient_rtol'], atol=TOLERANCES['gradient_atol'],
    )
    return max(report.values())


def check_spectrum_bound(num_graphs=100, num_nodes=30):
    """Largest distance of any Laplacian eigenvalue outside [0, 2]."""
    worst = 0.0
    for g in range(num_graphs):
        p = 0.05 + 0.3 * (g % 10) / 10
        lap = normalized_laplacian(erdos_renyi_graph(num_nodes, p, seed=1000 + g))
        lam = eigendecompose(lap).eigenvalues
        worst = max(worst, float(max(-lam.min(), lam.max() - 2.0, 0.0)))
    return worst


def check_interpolation(K_max=10):
    """Node values of T_k must give back the k-th unit coefficient vector."""
    worst = 0.0
    for K in range(K_max + 1):
        for k in range(K + 1):
            unit = np.zeros(K + 1)
            unit[k] = 1.0
            values = np.cos(k * np.arccos(np.cos((np.arange(K + 1) + 0.5) * np.pi / (K + 1))))
            worst = max(worst, float(np.abs(interp_matrix(K) @ values - unit).max()))
    return worst


def check_spmm(num_nodes=20, seed=0):
    rng = np.random.default_rng([seed, 303])
    a = rng.standard_normal((num_nodes, num_nodes))
    a[rng.random((num_nodes, num_nodes)) < 0.7] = 0.0
    a = a + a.T
    m = SparseSymMatrix.from_scipy(a)
    x = rng.standard_normal((num_nodes, 4))
    return float(np.abs(spmm(m, x) - a @ x).max())


def check_recurrence(K=2, seed=0):
    """T_K(L_hat) X from the recurrence against its dense monomial expansion."""
    rng = np.random.default_rng([seed, 404])
    lap = normalized_laplacian(erdos_renyi_graph(25, 0.2, seed=seed))
    lhat = shift_laplacian(lap)
    x = rng.standard_normal((25, 2))
    monomial = np.polynomial.chebyshev.cheb2poly(np.eye(K + 1)[K])
    dense = monomial_apply(lhat, x, monomial)
    return float(np.abs(cheb_apply(lhat, x, K).blocks[K] - dense).max())


def check_theorem_monotonicity():
    """Largest excess of rational over polynomial grid error across the target filters."""
    cfg = ExperimentConfig(task=Task.THEOREM_CHECK)
    worst = 0.0
    for name in FILTER_NAMES:
        report = run_theorem_check(cfg, target=name)
        worst = max(worst, report.rational_error - report.polynomial_error)
    return worst


def run_oracle_suite(coeff_perturbation=0.0, progress=True) -> OracleReport:
    """Run every property check and log PASS or FAIL for each.

    Args:
        coeff_perturbation (float): shift applied to one Chebyshev coefficient
            in the spectral equivalence check. Any value above the tolerance
            must make that check fail.
        progress (bool): show a progress bar.

    Returns:
        OracleReport: one CheckResult per check.
    """
    checks = [
        ('spectral_equivalence', lambda: check_spectral_equivalence(coeff_perturbation=coeff_perturbation),
         TOLERANCES['oracle']),
        ('gradient_classification', lambda: check_gradients('classification'), 1.0),
        ('gradient_regression', lambda: check_gradients('regression'), 1.0),
        ('spectrum_bound', check_spectrum_bound, TOLERANCES['spectrum']),
        ('interpolation', check_interpolation, TOLERANCES['interpolation']),
        ('spmm', check_spmm, TOLERANCES['spmm']),
        ('recurrence', check_recurrence, TOLERANCES['recurrence']),
        ('theorem_monotonicity', check_theorem_monotonicity, 0.0),
    ]
    report = OracleReport()
    for name, fn, tol in tqdm(checks, desc='Oracle suite', disable=not progress):
        start = time.perf_counter()
        value = float(fn())
        passed = bool(np.isfinite(value) and value <= tol)
        result = CheckResult(name, passed, value, tol, time.perf_counter() - start)
        report.checks.append(result)
        if passed:
            logging.info(f"PASS {name}: {value:.3e} (tolerance {tol:.1e}, {result.seconds:.2f}s)")
        else:
            logging.error(f"FAIL {name}: {value:.3e} exceeds tolerance {tol:.1e}")
    return report
