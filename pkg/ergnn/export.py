import json
import os

import numpy as np
import pandas as pd

from .chebyshev import filter_response, interp_to_coeffs
from .spectral import target_filter_eval


def metrics_records(metrics) -> list:
    """Per-seed records followed by the aggregate record, then the same for each ablation."""
    records = [r.to_dict() for r in metrics.records]
    records.append(metrics.aggregate_record())
    for ablation in metrics.ablations.values():
        records.extend(metrics_records(ablation))
    return records


def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_jsonl(records, output_file):
    """One JSON object per line."""
    with open(output_file, 'w') as file:
        for record in records:
            file.write(json.dumps({k: _plain(v) for k, v in record.items()}) + '\n')


def read_jsonl(input_file) -> list:
    with open(input_file, 'r') as file:
        return [json.loads(line) for line in file if line.strip()]


def _all_metrics(results):
    for metrics in results:
        yield metrics
        yield from _all_metrics(metrics.ablations.values())


def runs_table(results) -> pd.DataFrame:
    """Long table with one row per (source, variant, seed)."""
    rows = [r.to_dict() for metrics in _all_metrics(results) for r in metrics.records]
    return pd.DataFrame(rows)


def summary_table(results) -> pd.DataFrame:
    """Mean and sample standard deviation per source and variant."""
    rows = []
    for metrics in _all_metrics(results):
        row = metrics.aggregate_record()
        row.pop('seed')
        row['summary'] = f"{row['mean']:.4g} ± {row['std']:.2g}"
        rows.append(row)
    table = pd.DataFrame(rows)
    return table[['task', 'source', 'variant', 'metric_name', 'runs', 'mean', 'std', 'summary']]


def export_results(results, output_path, name):
    """Write the run records and tables of an experiment.

    Files written to `output_path`:
        {name}.jsonl: one record per run plus one aggregate per source and variant.
        {name}_runs.csv: the same runs as a long table.
        {name}_wide.csv: metric per seed (rows) and source/variant (columns).
        {name}_summary.csv: mean ± std per source and variant.

    Returns:
        pd.DataFrame: the summary table.
    """
    os.makedirs(output_path, exist_ok=True)
    records = [rec for metrics in results for rec in metrics_records(metrics)]
    write_jsonl(records, os.path.join(output_path, f'{name}.jsonl'))

    table = runs_table(results)
    table.to_csv(os.path.join(output_path, f'{name}_runs.csv'), index=None)

    # Write in wide format
    wide = table.pivot(index='seed', columns=['source', 'variant'], values='metric')
    wide.to_csv(os.path.join(output_path, f'{name}_wide.csv'))

    summary = summary_table(results)
    summary.to_csv(os.path.join(output_path, f'{name}_summary.csv'), index=None)
    return summary


def filter_response_table(params, target=None, grid_points=2001) -> pd.DataFrame:
    """Learned numerator p, denominator q and their ratio on an even grid of [0, 2].

    The numerator-only variant reports q = 1. The `target` column is left out
    when no target is given.
    """
    if params.variant == 'mlp':
        raise ValueError("the mlp variant has no spectral filter to report")
    lam = np.linspace(0.0, 2.0, grid_points)
    p = filter_response(interp_to_coeffs(params.numerator()), lam)
    if params.variant == 'ergnn':
        q = filter_response(interp_to_coeffs(params.denominator()), lam)
    else:
        q = np.ones_like(lam)
    table = pd.DataFrame({'lambda': lam})
    if target is not None:
        table['target'] = target_filter_eval(target, lam)
    table['p'] = p
    table['q'] = q
    with np.errstate(divide='ignore', invalid='ignore'):
        table['p_over_q'] = p / q
    return table


def theorem_table(reports) -> pd.DataFrame:
    rows = []
    for report in reports:
        row = report.to_dict()
        row.pop('numerator_coeffs')
        row.pop('denominator_coeffs')
        rows.append(row)
    return pd.DataFrame(rows)
