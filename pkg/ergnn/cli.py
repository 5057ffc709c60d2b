"""Command-line entry point.

    python -m ergnn filter-learn --config cfg.json --filter comb
    python -m ergnn classify --config cfg.json --edges e.txt --features x.csv --labels y.txt
    python -m ergnn classify --config cfg.json --synthetic sbm --blocks 200 200 --p-in 0.02 --p-out 0.1
    python -m ergnn theorem-check --config cfg.json --filter all
    python -m ergnn oracle-suite
"""

import argparse
import json
import logging
import os

from pydantic import ValidationError

from .config import ExperimentConfig, Task
from .constants import FILTER_LEARNING_MAX_MSE, FILTER_NAMES
from .errors import AcceptanceError, ConfigError
from .export import export_results, filter_response_table, summary_table, theorem_table, write_jsonl
from .harness import run_filter_learning, run_grid, run_node_classification, run_theorem_check
from .model import save_params
from .oracle import run_oracle_suite

SUBCOMMAND_TASKS = {
    'filter-learn': Task.FILTER_LEARNING,
    'classify': Task.NODE_CLASSIFICATION,
    'theorem-check': Task.THEOREM_CHECK,
}


def parse_config(path=None, task=None) -> ExperimentConfig:
    """Read a JSON experiment config. Keys left out take the defaults.

    Args:
        path (str): JSON file holding one object. An empty file or None means {}.
        task (Task): task implied by the subcommand. A file naming another
            task is an error.

    Returns:
        ExperimentConfig: the validated configuration.
    """
    data = {}
    if path is not None:
        with open(path, 'r') as file:
            text = file.read()
        if text.strip():
            try:
                data = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: not valid JSON ({e.msg}, line {e.lineno})")
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object of key-value pairs")
    if task is not None:
        task = Task(task)
        if 'task' in data and data['task'] != task.value:
            raise ConfigError(f"{path}: config is for task {data['task']!r}, not {task.value!r}")
        data = {**data, 'task': task.value}
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_describe(path, e))


def _describe(path, error: ValidationError) -> str:
    messages = []
    for err in error.errors():
        key = '.'.join(str(part) for part in err['loc']) or '<config>'
        if err['type'] == 'extra_forbidden':
            messages.append(f"unknown key '{key}'")
        else:
            messages.append(f"invalid value for '{key}': {err['msg']}")
    return f"{path or '<config>'}: " + '; '.join(messages)


def dump_config(config: ExperimentConfig) -> str:
    """Effective config as JSON. Parsing it back gives an identical config."""
    return json.dumps(config.model_dump(mode='json'), indent=2)


def _check_filter_learning(metrics):
    target = metrics.source
    if target in FILTER_LEARNING_MAX_MSE:
        limit = FILTER_LEARNING_MAX_MSE[target]
        bad = [r.seed for r in metrics.records if not r.metric <= limit]
        if bad:
            raise AcceptanceError(f"filter {target}: mse above {limit} for seeds {bad}")
    baseline = metrics.ablations.get('numerator_only')
    if baseline is None or target not in ('band', 'reject', 'comb'):
        return
    if not metrics.mean <= baseline.mean:
        raise AcceptanceError(
            f"filter {target}: mean mse {metrics.mean:.3e} above the polynomial ablation's {baseline.mean:.3e}"
        )
    if target == 'comb':
        wins = sum(a.metric < b.metric for a, b in zip(metrics.records, baseline.records))
        if wins < 0.8 * len(metrics.records):
            raise AcceptanceError(
                f"filter comb: lower than the polynomial ablation on {wins} of {len(metrics.records)} seeds"
            )


def _check_classification(metrics):
    baseline = metrics.ablations.get('mlp')
    if baseline is not None and not metrics.mean >= baseline.mean:
        raise AcceptanceError(
            f"classification: mean accuracy {metrics.mean:.2f}% below the mlp ablation's {baseline.mean:.2f}%"
        )


def _save_checkpoints(metrics, out, name):
    for m in [metrics, *metrics.ablations.values()]:
        for r in m.records:
            save_params(r.params, os.path.join(out, f'{name}_{m.variant}_seed{r.seed}.npz'))


def _run_metrics(config, runner, out, name, check_fn, check, progress):
    if config.grid_search:
        ranked = run_grid(config, progress=progress)
        for point, result in ranked:
            print(f"{point}: {result.mean:.4g} ± {result.std:.2g}")
        point, metrics = ranked[0]
        logging.info(f"best grid point {point}")
    else:
        metrics = runner(config, progress=progress)
    if out:
        summary = export_results([metrics], out, name)
        _save_checkpoints(metrics, out, name)
    else:
        summary = summary_table([metrics])
    print(summary.to_string(index=False))
    if check:
        check_fn(metrics)
    return metrics


def dispatch(subcommand, config=None, paths=None, out=None, check=False, progress=True) -> int:
    """Run one subcommand.

    Args:
        subcommand (str): filter-learn, classify, theorem-check or oracle-suite.
        config (ExperimentConfig): experiment description; unused by oracle-suite.
        paths (dict): 'filter' for filter-learn and theorem-check ('all' runs
            every named filter); 'edges', 'features' and 'labels' for classify.
        out (str): folder for records, tables and checkpoints. Optional.
        check (bool): enforce the acceptance thresholds.

    Returns:
        int: exit status, 0 on success.
    """
    paths = paths or {}
    if out:
        os.makedirs(out, exist_ok=True)

    if subcommand == 'oracle-suite':
        report = run_oracle_suite(progress=progress)
        for c in report.checks:
            print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.3e} (tolerance {c.tolerance:.1e})")
        if out:
            write_jsonl(report.to_records(), os.path.join(out, 'oracle_suite.jsonl'))
        if not report.passed:
            raise AcceptanceError(f"oracle suite failures: {report.failures}")
        return 0

    if subcommand not in SUBCOMMAND_TASKS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    if config is None:
        config = ExperimentConfig(task=SUBCOMMAND_TASKS[subcommand])
    logging.info(f"effective config: {config.model_dump_json()}")

    if subcommand == 'filter-learn':
        targets = _targets(paths.get('filter'), config)
        for target in targets:
            cfg = config.with_updates(target_filter=target)
            metrics = _run_metrics(
                cfg, run_filter_learning, out, f'filter_{target}',
                _check_filter_learning, check, progress,
            )
            if out and metrics.variant != 'mlp':
                best = min(metrics.records, key=lambda r: r.metric)
                table = filter_response_table(best.params, target, cfg.theorem_grid)
                table.to_csv(os.path.join(out, f'filter_{target}_response.csv'), index=None)
        return 0

    if subcommand == 'classify':
        cfg = config
        if paths.get('edges') or paths.get('features') or paths.get('labels'):
            cfg = cfg.with_updates(
                graph_source='files',
                edges_path=paths.get('edges'),
                features_path=paths.get('features'),
                labels_path=paths.get('labels'),
            )
        _run_metrics(
            cfg, run_node_classification, out, f'classify_{cfg.graph_source}',
            _check_classification, check, progress,
        )
        return 0

    reports = []
    for target in _targets(paths.get('filter'), config):
        report = run_theorem_check(config, target=target)
        if not report.monotone:
            raise AcceptanceError(
                f"theorem check {target}: rational error {report.rational_error:.3e} "
                f"above polynomial error {report.polynomial_error:.3e}"
            )
        reports.append(report)
    table = theorem_table(reports)
    print(table.to_string(index=False))
    if out:
        table.to_csv(os.path.join(out, 'theorem_check.csv'), index=None)
        write_jsonl([r.to_dict() for r in reports], os.path.join(out, 'theorem_check.jsonl'))
    return 0


def _targets(name, config):
    if name == 'all':
        return list(FILTER_NAMES)
    if name is not None:
        return [name]
    if config.target_filter is not None:
        return [config.target_filter.value]
    raise ConfigError("no target filter: pass --filter or set target_filter in the config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='ergnn',
        description='Explicitly optimized rational graph filters',
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    parser.add_argument('--quiet', action='store_true', help='hide progress bars')
    parser.add_argument('--out', default=None, help='folder for records, tables and checkpoints')
    parser.add_argument('--check', action='store_true', help='fail when an acceptance threshold is missed')
    parser.add_argument('--dry-run', action='store_true', help='print the effective config and stop')
    sub = parser.add_subparsers(dest='subcommand', required=True)

    filters = FILTER_NAMES + ['all']
    p = sub.add_parser('filter-learn', help='learn a target spectral filter on a grid graph')
    p.add_argument('--config', default=None, help='JSON config file')
    p.add_argument('--filter', choices=filters, default=None, help='target filter')

    p = sub.add_parser('classify', help='transductive node classification')
    p.add_argument('--config', default=None, help='JSON config file')
    p.add_argument('--edges', default=None, help='edge list, one "u v" pair per line')
    p.add_argument('--features', default=None, help='feature CSV, one row per node')
    p.add_argument('--labels', default=None, help='one integer label per line')
    p.add_argument('--synthetic', choices=['sbm'], default=None, help='generate a block-model dataset')
    p.add_argument('--blocks', type=int, nargs='+', default=None, help='block sizes')
    p.add_argument('--p-in', type=float, default=None, help='edge probability inside a block')
    p.add_argument('--p-out', type=float, default=None, help='edge probability across blocks')
    p.add_argument('--noise', type=float, default=None, help='feature noise standard deviation')

    p = sub.add_parser('theorem-check', help='fixed-numerator rational fit against the best polynomial')
    p.add_argument('--config', default=None, help='JSON config file')
    p.add_argument('--filter', choices=filters, default=None, help='target filter')

    p = sub.add_parser('oracle-suite', help='run every cross-module property check')
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format='%(levelname)s %(message)s')
    try:
        config, paths = None, {}
        if args.subcommand != 'oracle-suite':
            config = parse_config(args.config, SUBCOMMAND_TASKS[args.subcommand])
        if args.subcommand in ('filter-learn', 'theorem-check'):
            paths['filter'] = args.filter
        if args.subcommand == 'classify':
            files = [args.edges, args.features, args.labels]
            if args.synthetic and any(files):
                parser.error('--synthetic cannot be combined with --edges, --features or --labels')
            if any(files) and not all(files):
                parser.error('--edges, --features and --labels must be given together')
            if args.synthetic:
                updates = {'graph_source': 'sbm'}
                for key, value in [('sbm_block_sizes', args.blocks), ('sbm_p_in', args.p_in),
                                   ('sbm_p_out', args.p_out), ('sbm_noise', args.noise)]:
                    if value is not None:
                        updates[key] = value
                config = config.with_updates(**updates)
            paths.update(edges=args.edges, features=args.features, labels=args.labels)
        if args.dry_run:
            if config is not None:
                print(dump_config(config))
            return 0
        return dispatch(args.subcommand, config, paths, out=args.out, check=args.check, progress=not args.quiet)
    except ValidationError as e:
        logging.error(_describe(None, e))
        return 1
    except (ValueError, RuntimeError, OSError) as e:
        logging.error(f"{type(e).__name__}: {e}")
        return 1
