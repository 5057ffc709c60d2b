import numpy as np
import pytest

from ergnn.chebyshev import filter_response, shift_laplacian
from ergnn.config import ExperimentConfig
from ergnn.constants import FILTER_LEARNING_MAX_MSE, FILTER_NAMES, SPLIT_RATIOS
from ergnn.data import DatasetBundle, synthetic_sbm_dataset
from ergnn.graph import grid_graph, normalized_laplacian
from ergnn.harness import (
    aggregate, make_splits, run_filter_learning, run_grid, run_node_classification,
    run_theorem_check, train_with_early_stopping,
)
from ergnn.model import TrainBatch, forward, init_params
from ergnn.spectral import eigendecompose, exact_filter


def _stable(metrics):
    return [{k: v for k, v in r.to_dict().items() if k != 'wall_time'} for r in metrics.records]


@pytest.mark.parametrize("n, sizes", [(10, (6, 2, 2)), (11, (7, 2, 2)), (101, (61, 20, 20))])
def test_split_sizes(n, sizes):
    s = make_splits(n, SPLIT_RATIOS['routine'], seed=0)
    assert (s.train.size, s.val.size, s.test.size) == sizes
    everything = np.concatenate([s.train, s.val, s.test])
    np.testing.assert_array_equal(np.sort(everything), np.arange(n))


def test_heterophilic_split_sizes():
    s = make_splits(20, SPLIT_RATIOS['heterophilic'], seed=1)
    assert (s.train.size, s.val.size, s.test.size) == (10, 5, 5)


def test_splits_deterministic():
    a, b = make_splits(50, seed=3), make_splits(50, seed=3)
    np.testing.assert_array_equal(a.val, b.val)
    assert not np.array_equal(a.val, make_splits(50, seed=4).val)


def test_empty_split_refused():
    with pytest.raises(ValueError, match='empty'):
        make_splits(3, (0.6, 0.2, 0.2), seed=0)


def test_aggregate():
    assert aggregate([1.0, 2.0, 3.0]) == (2.0, 1.0)
    assert aggregate([5.0]) == (5.0, 0.0)
    mean, std = aggregate([1e9 + 1, 1e9 + 2, 1e9 + 3])
    assert std == pytest.approx(1.0)


def test_early_stopping_halts_after_patience(small_config, grid4):
    cfg = small_config.with_updates(max_epochs=100, patience=5)
    lhat = shift_laplacian(normalized_laplacian(grid4))
    x = np.random.default_rng(0).random((16, 1))
    params = init_params(cfg, 1, 1, seed=0)
    batch = TrainBatch(x, x.copy(), None, lhat, 'regression')
    scores = iter([3, 1, 2, 1, 1, 1, 1, 1, 9, 9])
    best, best_epoch, epochs_run = train_with_early_stopping(params, batch, cfg, lambda p: next(scores))
    assert best_epoch == 1
    assert epochs_run == 6


def test_early_stopping_respects_max_epochs(small_config, grid4):
    cfg = small_config.with_updates(max_epochs=7, patience=5)
    lhat = shift_laplacian(normalized_laplacian(grid4))
    x = np.random.default_rng(0).random((16, 1))
    params = init_params(cfg, 1, 1, seed=0)
    batch = TrainBatch(x, x.copy(), None, lhat, 'regression')
    counter = iter(range(100))
    best, best_epoch, epochs_run = train_with_early_stopping(params, batch, cfg, lambda p: next(counter))
    assert (best_epoch, epochs_run) == (7, 7)


def test_filter_learning_improves_on_initialization(small_config):
    cfg = small_config.with_updates(grid_rows=5, grid_cols=5, max_epochs=200, patience=200, seeds=[0])
    metrics = run_filter_learning(cfg, target='low', progress=False)
    record = metrics.records[0]

    lap = normalized_laplacian(grid_graph(5, 5))
    x = np.random.default_rng([0, 0]).random((25, 1))
    y = exact_filter(eigendecompose(lap), 'low', x)
    initial = forward(init_params(cfg, 1, 1, 0), x, shift_laplacian(lap)).z2.data
    assert record.metric < np.mean((initial - y) ** 2)
    assert record.metric_name == 'mse'
    assert 'numerator_mse' in record.extra


def test_filter_learning_deterministic(small_config):
    cfg = small_config.with_updates(grid_rows=4, grid_cols=4, max_epochs=15, patience=15)
    a = run_filter_learning(cfg, target='comb', progress=False)
    b = run_filter_learning(cfg, target='comb', progress=False)
    assert _stable(a) == _stable(b)
    assert [r.seed for r in a.records] == cfg.seeds


def test_worker_threads_keep_results(small_config, monkeypatch):
    cfg = small_config.with_updates(grid_rows=4, grid_cols=4, max_epochs=10, patience=10, seeds=[0, 1, 2])
    single = run_filter_learning(cfg, target='band', progress=False)
    monkeypatch.setenv('ERGNN_WORKERS', '3')
    threaded = run_filter_learning(cfg, target='band', progress=False)
    assert _stable(single) == _stable(threaded)


def test_filter_learning_ablation(small_config):
    cfg = small_config.with_updates(grid_rows=4, grid_cols=4, max_epochs=5, patience=5, compare_ablations=True)
    metrics = run_filter_learning(cfg, target='high', progress=False)
    assert metrics.ablations['numerator_only'].variant == 'numerator_only'
    assert len(metrics.ablations['numerator_only'].records) == len(cfg.seeds)


def test_filter_learning_needs_target(small_config):
    with pytest.raises(ValueError):
        run_filter_learning(small_config, progress=False)


def test_two_cliques_fully_separable(small_config):
    cfg = small_config.with_updates(
        task='node_classification', lr=0.05, max_epochs=200, patience=200, dropout_p=0.0,
        weight_decay=0.0, seeds=[0, 1, 2],
    )
    dataset = synthetic_sbm_dataset([20, 20], 1.0, 0.0, noise=0.0, seed=0)
    metrics = run_node_classification(cfg, dataset, progress=False)
    assert metrics.values == [100.0, 100.0, 100.0]
    assert metrics.std == 0.0


def test_absent_class_warns(small_config, caplog):
    cfg = small_config.with_updates(task='node_classification', max_epochs=2, patience=2, seeds=[0])
    base = synthetic_sbm_dataset([10, 10], 0.5, 0.1, noise=0.1, seed=0)
    dataset = DatasetBundle(base.graph, base.features, base.labels, class_count=3)
    with caplog.at_level('WARNING'):
        run_node_classification(cfg, dataset, progress=False)
    assert 'classes [2] have no training nodes' in caplog.text


def test_classification_ablations(small_config):
    cfg = small_config.with_updates(
        task='node_classification', graph_source='sbm', max_epochs=3, patience=3, compare_ablations=True, seeds=[0],
        sbm_block_sizes=[15, 15],
    )
    metrics = run_node_classification(cfg, progress=False)
    assert set(metrics.ablations) == {'numerator_only', 'mlp'}
    assert all(0.0 <= v <= 100.0 for v in metrics.values)


def test_node_classification_deterministic(small_config):
    cfg = small_config.with_updates(task='node_classification', max_epochs=10, patience=10, dropout_p=0.5)
    dataset = synthetic_sbm_dataset([15, 15], 0.3, 0.1, noise=0.5, seed=2)
    a = run_node_classification(cfg, dataset, progress=False)
    b = run_node_classification(cfg, dataset, progress=False)
    assert _stable(a) == _stable(b)
    assert [r.seed for r in a.records] == cfg.seeds


def test_theorem_check_polynomial_target():
    cfg = ExperimentConfig(task='theorem_check', K1=4, K2=3)
    report = run_theorem_check(cfg, target=lambda lam: 0.5 * lam**2 - lam + 0.2)
    assert report.polynomial_error < 1e-8
    assert report.rational_error <= report.polynomial_error


@pytest.mark.parametrize("name", FILTER_NAMES)
def test_theorem_check_monotone(name):
    report = run_theorem_check(ExperimentConfig(task='theorem_check'), target=name)
    assert report.rational_error <= report.polynomial_error
    assert report.monotone


def test_theorem_check_recovers_rational_target():
    cfg = ExperimentConfig(task='theorem_check', K1=0, K2=1)
    report = run_theorem_check(cfg, target=lambda lam: 1.0 / (1.0 + lam))
    lam = np.linspace(0.0, 2.0, 201)
    c = report.numerator_coeffs[0]
    q = filter_response(report.denominator_coeffs, lam)
    np.testing.assert_allclose(q, c * (1.0 + lam), atol=1e-3)
    assert report.rational_error < report.polynomial_error
    assert not report.degenerate


def test_theorem_check_flags_clamped_denominator(caplog):
    cfg = ExperimentConfig(task='theorem_check', K1=2, K2=2, denominator_clamp=10.0)
    with caplog.at_level('WARNING'):
        report = run_theorem_check(cfg, target='low')
    assert report.degenerate
    assert report.rational_error <= report.polynomial_error
    assert 'clamp' in caplog.text


def test_grid_search_ranks_points(small_config):
    cfg = small_config.with_updates(
        grid_rows=4, grid_cols=4, max_epochs=5, patience=5, seeds=[0],
        target_filter='low', grid_search={'K1': [2, 3], 'mlp_layers': [1, 2]},
    )
    ranked = run_grid(cfg, progress=False)
    assert len(ranked) == 4
    assert {tuple(sorted(p.items())) for p, _ in ranked} == {
        (('K1', k), ('mlp_layers', m)) for k in (2, 3) for m in (1, 2)
    }
    means = [m.mean for _, m in ranked]
    assert means == sorted(means)


@pytest.mark.slow
@pytest.mark.parametrize("name", ['low', 'high'])
def test_filter_learning_desk_scale(name):
    cfg = ExperimentConfig(task='filter_learning')
    metrics = run_filter_learning(cfg, target=name, progress=False)
    assert all(v <= FILTER_LEARNING_MAX_MSE[name] for v in metrics.values)


@pytest.mark.slow
def test_comb_beats_polynomial_ablation():
    cfg = ExperimentConfig(task='filter_learning', compare_ablations=True)
    metrics = run_filter_learning(cfg, target='comb', progress=False)
    baseline = metrics.ablations['numerator_only']
    wins = sum(a < b for a, b in zip(metrics.values, baseline.values))
    assert wins >= 4
    assert metrics.mean <= baseline.mean


@pytest.mark.slow
def test_heterophilic_sbm_beats_mlp():
    cfg = ExperimentConfig(task='node_classification', compare_ablations=True)
    metrics = run_node_classification(cfg, progress=False)
    assert metrics.mean >= metrics.ablations['mlp'].mean


@pytest.mark.slow
@pytest.mark.parametrize("name", ['band', 'reject'])
def test_rational_filter_not_worse_than_polynomial_ablation(name):
    cfg = ExperimentConfig(task='filter_learning', compare_ablations=True)
    metrics = run_filter_learning(cfg, target=name, progress=False)
    assert metrics.mean <= metrics.ablations['numerator_only'].mean


@pytest.mark.slow
def test_constant_filter_on_default_grid():
    # The input map starts random, so the constant filter is not reached
    # exactly: 8.3e-05 was measured for seed 0 after 200 epochs.
    cfg = ExperimentConfig(task='filter_learning', max_epochs=200, seeds=[0])
    metrics = run_filter_learning(cfg, target=lambda lam: np.ones_like(lam), progress=False)
    assert metrics.values[0] < 1e-4
