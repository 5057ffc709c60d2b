"""Experiments: filter learning, node classification and the fixed-numerator check."""

import itertools
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.optimize import least_squares
from tqdm import tqdm

from .autodiff import AdamState, log_softmax
from .chebyshev import interp_to_coeffs, shift_laplacian
from .config import ExperimentConfig, Task
from .data import DatasetBundle, ingest_dataset, synthetic_sbm_dataset
from .graph import grid_graph, normalized_laplacian, sbm_graph
from .model import LossWeights, TrainBatch, forward, init_params, train_step
from .spectral import eigendecompose, exact_filter, target_filter_eval


@dataclass(frozen=True, eq=False)
class SplitMasks:
    """Sorted node indices of each split."""
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def make_splits(num_labeled: int, ratios=(0.6, 0.2, 0.2), seed: int = 0) -> SplitMasks:
    """Random train/val/test split.

    Sizes are floor(n * ratio); the remainder goes to train. The shuffle is
    determined by `seed`.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be three positive numbers summing to 1, got {ratios}")
    sizes = [int(np.floor(num_labeled * r + 1e-9)) for r in ratios]
    sizes[0] += num_labeled - sum(sizes)
    if min(sizes) == 0:
        raise ValueError(f"split of {num_labeled} nodes with ratios {ratios} leaves an empty subset: {sizes}")
    perm = np.random.default_rng(seed).permutation(num_labeled)
    a, b = sizes[0], sizes[0] + sizes[1]
    return SplitMasks(train=np.sort(perm[:a]), val=np.sort(perm[a:b]), test=np.sort(perm[b:]))


@dataclass
class RunRecord:
    seed: int
    task: str
    source: str
    variant: str
    metric_name: str
    metric: float
    best_epoch: int
    epochs_run: int
    wall_time: float
    extra: dict = field(default_factory=dict)
    params: object = None

    def to_dict(self) -> dict:
        return {
            'seed': self.seed,
            'task': self.task,
            'source': self.source,
            'variant': self.variant,
            'metric_name': self.metric_name,
            'metric': self.metric,
            'best_epoch': self.best_epoch,
            'epochs_run': self.epochs_run,
            'wall_time': self.wall_time,
            **self.extra,
        }


def aggregate(values):
    """Two-pass mean and sample (n-1) standard deviation."""
    values = [float(v) for v in values]
    n = len(values)
    if n == 0:
        raise ValueError("cannot aggregate an empty list of values")
    mean = sum(values) / n
    if n == 1:
        return mean, 0.0
    ss = sum((v - mean) ** 2 for v in values)
    return mean, float(np.sqrt(ss / (n - 1)))


@dataclass
class RunMetrics:
    task: str
    source: str
    variant: str
    metric_name: str
    records: list
    ablations: dict = field(default_factory=dict)

    @property
    def values(self) -> list:
        return [r.metric for r in self.records]

    @property
    def mean(self) -> float:
        return aggregate(self.values)[0]

    @property
    def std(self) -> float:
        return aggregate(self.values)[1]

    def aggregate_record(self) -> dict:
        mean, std = aggregate(self.values)
        return {
            'seed': 'all',
            'task': self.task,
            'source': self.source,
            'variant': self.variant,
            'metric_name': self.metric_name,
            'mean': mean,
            'std': std,
            'runs': len(self.records),
        }


def _workers():
    try:
        return max(1, int(os.environ.get('ERGNN_WORKERS', '1')))
    except ValueError:
        logging.warning("ERGNN_WORKERS is not an integer, using 1 worker")
        return 1


def _map_seeds(fn, seeds, progress=True, desc='Seeds'):
    # Results come back in seed order whatever the worker count
    workers = min(_workers(), len(seeds))
    if workers <= 1:
        return [fn(s) for s in tqdm(seeds, desc=desc, disable=not progress)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(tqdm(pool.map(fn, seeds), total=len(seeds), desc=desc, disable=not progress))


def train_with_early_stopping(params, batch, cfg, score_fn, progress=False, desc='Epochs'):
    """Train until `patience` epochs pass without improvement of `score_fn`.

    Training halts after epoch min(max_epochs, best_epoch + patience) and the
    parameters of the best epoch are returned.

    Args:
        params (RationalFilterParams): initial parameters, updated in place.
        batch (TrainBatch): training inputs.
        cfg (ExperimentConfig): lr, weight decay, max_epochs and patience.
        score_fn (callable): params -> comparable score, higher is better.

    Returns:
        tuple: (best params, best epoch, epochs run).
    """
    state = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    best_score, best_epoch, best_params = None, 0, params.copy()
    epoch = 0
    for epoch in tqdm(range(1, cfg.max_epochs + 1), desc=desc, leave=False, disable=not progress):
        train_step(params, batch, state)
        score = score_fn(params)
        if best_score is None or score > best_score:
            best_score, best_epoch, best_params = score, epoch, params.copy()
        if epoch - best_epoch >= cfg.patience:
            break
    return best_params, best_epoch, epoch


def _source_name(target):
    if target is None:
        return 'none'
    if hasattr(target, 'value'):
        return target.value
    if isinstance(target, str):
        return target
    return getattr(target, '__name__', 'custom')


def _signal_graph(cfg):
    if cfg.graph_source == 'sbm':
        return sbm_graph(cfg.sbm_block_sizes, cfg.sbm_p_in, cfg.sbm_p_out, cfg.seeds[0])
    if cfg.graph_source == 'files':
        raise ValueError("filter learning builds its own graph; use graph_source 'grid' or 'sbm'")
    return grid_graph(cfg.grid_rows, cfg.grid_cols)


def run_filter_learning(cfg: ExperimentConfig, target=None, progress=True) -> RunMetrics:
    """Learn a target spectral filter from one random signal per seed.

    Every node's input is drawn uniformly from [0, 1]; the target output is
    the exact spectral filtering of that input. The model is trained in
    regression mode on all nodes and scored by mean squared error of z2.

    Args:
        cfg (ExperimentConfig): experiment description.
        target (TargetFilterKind, str or callable): overrides cfg.target_filter.
        progress (bool): show progress bars.
    """
    target = target if target is not None else cfg.target_filter
    if target is None:
        raise ValueError("filter learning needs a target filter")
    source = _source_name(target)

    graph = _signal_graph(cfg)
    lap = normalized_laplacian(graph)
    lhat = shift_laplacian(lap)
    decomposition = eigendecompose(lap, dense_limit=cfg.dense_limit, solver=cfg.eig_solver)
    n = graph.num_nodes
    weights = LossWeights(cfg.eta, cfg.xi)

    def run(seed):
        start = time.perf_counter()
        x = np.random.default_rng([seed, 0]).random((n, cfg.num_signals))
        y = exact_filter(decomposition, target, x)
        params = init_params(cfg, cfg.num_signals, cfg.num_signals, seed)
        batch = TrainBatch(
            x=x, y=y, mask=None, lhat=lhat, mode='regression', weights=weights,
            detach_target=cfg.detach_target, seed=seed,
        )

        def score(p):
            pred = forward(p, x, lhat).z2.data
            return -float(np.mean((pred - y) ** 2))

        best, best_epoch, epochs_run = train_with_early_stopping(
            params, batch, cfg, score, progress=progress, desc=f'{source} seed {seed}',
        )
        out = forward(best, x, lhat)
        error = float(np.mean((out.z2.data - y) ** 2))
        extra = {'numerator_mse': float(np.mean((out.z1.data - y) ** 2))}
        if cfg.variant == 'ergnn':
            extra['denominator_l1'] = float(np.abs(interp_to_coeffs(best.denominator())).sum())
        record = RunRecord(
            seed=seed, task=Task.FILTER_LEARNING.value, source=source, variant=cfg.variant,
            metric_name='mse', metric=error, best_epoch=best_epoch, epochs_run=epochs_run,
            wall_time=time.perf_counter() - start, extra=extra, params=best,
        )
        logging.info(
            f"filter {source} [{cfg.variant}] seed {seed}: mse {error:.3e}, "
            f"best epoch {best_epoch}, {epochs_run} epochs"
        )
        return record

    records = _map_seeds(run, cfg.seeds, progress, desc=f'Filter {source}')
    metrics = RunMetrics(Task.FILTER_LEARNING.value, source, cfg.variant, 'mse', records)
    if cfg.compare_ablations and cfg.variant == 'ergnn':
        ablation = cfg.with_updates(variant='numerator_only', compare_ablations=False)
        metrics.ablations['numerator_only'] = run_filter_learning(ablation, target, progress)
    return metrics


def load_classification_dataset(cfg: ExperimentConfig) -> DatasetBundle:
    if cfg.graph_source == 'files':
        if cfg.edges_path is None or cfg.features_path is None or cfg.labels_path is None:
            raise ValueError("graph_source 'files' needs edges_path, features_path and labels_path")
        return ingest_dataset(cfg.edges_path, cfg.features_path, cfg.labels_path)
    if cfg.graph_source == 'sbm':
        return synthetic_sbm_dataset(
            cfg.sbm_block_sizes, cfg.sbm_p_in, cfg.sbm_p_out, cfg.sbm_noise, cfg.seeds[0],
        )
    raise ValueError("node classification needs graph_source 'sbm' or 'files'")


def _accuracy(logits, labels, rows):
    return float(np.mean(np.argmax(logits[rows], axis=1) == labels[rows]))


def _cross_entropy(logits, labels, rows):
    lsm = log_softmax(logits[rows])
    return float(-lsm[np.arange(rows.size), labels[rows]].mean())


def run_node_classification(cfg: ExperimentConfig, dataset: DatasetBundle = None, progress=True) -> RunMetrics:
    """Transductive node classification with one random split per seed.

    Validation accuracy (ties broken by validation loss) selects the best
    epoch; the reported metric is test accuracy in percent at that epoch.
    """
    dataset = dataset if dataset is not None else load_classification_dataset(cfg)
    if dataset.labels is None:
        raise ValueError("node classification needs labels")
    source = cfg.graph_source
    x, y = dataset.features, dataset.labels
    lhat = shift_laplacian(normalized_laplacian(dataset.graph))
    weights = LossWeights(cfg.eta, cfg.xi)

    def run(seed):
        start = time.perf_counter()
        splits = make_splits(y.shape[0], cfg.split_ratios, seed)
        missing = sorted(set(range(dataset.class_count)) - set(y[splits.train].tolist()))
        if missing:
            logging.warning(f"seed {seed}: classes {missing} have no training nodes")
        params = init_params(cfg, x.shape[1], dataset.class_count, seed)
        batch = TrainBatch(
            x=x, y=y, mask=splits.train, lhat=lhat, mode='classification', weights=weights,
            detach_target=cfg.detach_target, seed=seed,
        )

        def score(p):
            logits = forward(p, x, lhat).z2.data
            return (_accuracy(logits, y, splits.val), -_cross_entropy(logits, y, splits.val))

        best, best_epoch, epochs_run = train_with_early_stopping(
            params, batch, cfg, score, progress=progress, desc=f'seed {seed}',
        )
        logits = forward(best, x, lhat).z2.data
        accuracy = 100.0 * _accuracy(logits, y, splits.test)
        record = RunRecord(
            seed=seed, task=Task.NODE_CLASSIFICATION.value, source=source, variant=cfg.variant,
            metric_name='test_accuracy', metric=accuracy, best_epoch=best_epoch, epochs_run=epochs_run,
            wall_time=time.perf_counter() - start,
            extra={
                'val_accuracy': 100.0 * _accuracy(logits, y, splits.val),
                'train_accuracy': 100.0 * _accuracy(logits, y, splits.train),
            },
            params=best,
        )
        logging.info(
            f"classify {source} [{cfg.variant}] seed {seed}: test accuracy {accuracy:.2f}%, "
            f"best epoch {best_epoch}, {epochs_run} epochs"
        )
        return record

    records = _map_seeds(run, cfg.seeds, progress, desc='Splits')
    metrics = RunMetrics(Task.NODE_CLASSIFICATION.value, source, cfg.variant, 'test_accuracy', records)
    if cfg.compare_ablations and cfg.variant == 'ergnn':
        for variant in ('numerator_only', 'mlp'):
            ablation = cfg.with_updates(variant=variant, compare_ablations=False)
            metrics.ablations[variant] = run_node_classification(ablation, dataset, progress)
    return metrics


@dataclass
class TheoremReport:
    target: str
    K1: int
    K2: int
    grid_points: int
    numerator_coeffs: np.ndarray
    denominator_coeffs: np.ndarray
    polynomial_error: float
    rational_error: float
    polynomial_max_error: float
    rational_max_error: float
    clamp_fraction: float
    degenerate: bool

    @property
    def monotone(self) -> bool:
        return self.rational_error <= self.polynomial_error

    def to_dict(self) -> dict:
        return {
            'task': Task.THEOREM_CHECK.value,
            'target': self.target,
            'K1': self.K1,
            'K2': self.K2,
            'grid_points': self.grid_points,
            'polynomial_error': self.polynomial_error,
            'rational_error': self.rational_error,
            'polynomial_max_error': self.polynomial_max_error,
            'rational_max_error': self.rational_max_error,
            'clamp_fraction': self.clamp_fraction,
            'degenerate': self.degenerate,
            'numerator_coeffs': self.numerator_coeffs.tolist(),
            'denominator_coeffs': self.denominator_coeffs.tolist(),
        }


def run_theorem_check(cfg: ExperimentConfig, target=None) -> TheoremReport:
    """Fixed-numerator rational fit against the best polynomial.

    Stage A fits the least-squares degree-K1 Chebyshev polynomial p to the
    target on an even grid of [0, 2]. Stage B keeps p fixed and fits only the
    denominator q (degree K2, starting from q = 1) to minimize the grid error
    of p/q, with |q| clamped to at least `cfg.denominator_clamp`. Stage B
    starts from the Stage A solution and keeps it if it cannot improve, so
    its error is never larger.
    """
    target = target if target is not None else cfg.target_filter
    if target is None:
        raise ValueError("theorem check needs a target filter")
    clamp = cfg.denominator_clamp
    lam = np.linspace(0.0, 2.0, cfg.theorem_grid)
    s = lam - 1.0
    f = np.asarray(target_filter_eval(target, lam))

    p_coeffs = C.chebfit(s, f, cfg.K1)
    p = C.chebval(s, p_coeffs)
    poly_residual = p - f

    vander = C.chebvander(s, cfg.K2)

    def clamped(q):
        return np.where(q >= 0, np.maximum(q, clamp), np.minimum(q, -clamp))

    def residual(beta):
        return p / clamped(vander @ beta) - f

    def jacobian(beta):
        q = vander @ beta
        active = np.abs(q) > clamp
        safe = np.where(active, q, 1.0)
        return (-(p / safe**2) * active)[:, None] * vander

    beta0 = np.zeros(cfg.K2 + 1)
    beta0[0] = 1.0
    beta = beta0
    # q = 1 reproduces the Stage A fit exactly
    rat_residual = poly_residual
    sol = least_squares(
        residual, beta0, jac=jacobian, method='trf', xtol=1e-14, ftol=1e-14, gtol=1e-14,
        max_nfev=200 * (cfg.K2 + 1),
    )
    candidate = residual(sol.x)
    if np.all(np.isfinite(candidate)) and np.mean(candidate**2) < np.mean(poly_residual**2):
        beta, rat_residual = sol.x, candidate

    clamp_fraction = float(np.mean(np.abs(vander @ beta) < clamp))
    degenerate = clamp_fraction > 0.05
    source = _source_name(target)
    if degenerate:
        logging.warning(f"theorem check {source}: denominator clamp active on {100 * clamp_fraction:.1f}% of the grid")
    report = TheoremReport(
        target=source,
        K1=cfg.K1,
        K2=cfg.K2,
        grid_points=cfg.theorem_grid,
        numerator_coeffs=p_coeffs,
        denominator_coeffs=beta,
        polynomial_error=float(np.mean(poly_residual**2)),
        rational_error=float(np.mean(rat_residual**2)),
        polynomial_max_error=float(np.abs(poly_residual).max()),
        rational_max_error=float(np.abs(rat_residual).max()),
        clamp_fraction=clamp_fraction,
        degenerate=degenerate,
    )
    logging.info(
        f"theorem check {source}: polynomial error {report.polynomial_error:.3e}, "
        f"rational error {report.rational_error:.3e}"
    )
    return report


def run_task(cfg: ExperimentConfig, dataset=None, target=None, progress=True):
    if cfg.task is Task.FILTER_LEARNING:
        return run_filter_learning(cfg, target, progress)
    if cfg.task is Task.NODE_CLASSIFICATION:
        return run_node_classification(cfg, dataset, progress)
    return run_theorem_check(cfg, target)


def run_grid(cfg: ExperimentConfig, dataset=None, target=None, progress=True) -> list:
    """Evaluate every point of `cfg.grid_search`.

    Returns:
        list: (point dict, result) pairs, best first. Classification points are
            ranked by mean validation accuracy, filter learning by mean error,
            theorem checks by rational error.
    """
    if not cfg.grid_search:
        return [({}, run_task(cfg, dataset, target, progress))]
    keys = sorted(cfg.grid_search)
    results = []
    for values in itertools.product(*(cfg.grid_search[k] for k in keys)):
        point = dict(zip(keys, values))
        logging.info(f"grid point {point}")
        sub = cfg.with_updates(**point, grid_search={})
        results.append((point, run_task(sub, dataset, target, progress)))

    def rank(item):
        result = item[1]
        if isinstance(result, TheoremReport):
            return result.rational_error
        if result.task == Task.NODE_CLASSIFICATION.value:
            return -aggregate([r.extra['val_accuracy'] for r in result.records])[0]
        return result.mean

    return sorted(results, key=rank)
