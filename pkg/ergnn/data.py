"""Functions to read node classification datasets from plain-text files"""

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DatasetError, GraphError
from .graph import Graph, read_edge_list, sbm_graph


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray = None
    class_count: int = None

    def __post_init__(self):
        if self.features.shape[0] != self.graph.num_nodes:
            raise DatasetError(
                f"features have {self.features.shape[0]} rows for {self.graph.num_nodes} nodes"
            )
        if self.labels is not None:
            if self.labels.shape[0] != self.graph.num_nodes:
                raise DatasetError(f"{self.labels.shape[0]} labels for {self.graph.num_nodes} nodes")
            if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
                raise DatasetError(f"labels must lie in [0, {self.class_count})")


def read_features(path) -> np.ndarray:
    """One CSV row of decimal reals per node."""
    rows = []
    with open(path, 'r', newline='') as file:
        reader = csv.reader(file)
        for row in reader:
            lineno = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise DatasetError(f"{path}, line {lineno}: cannot parse {row!r} as numbers")
            if rows and len(values) != len(rows[0]):
                raise DatasetError(
                    f"{path}, line {lineno}: expected {len(rows[0])} columns, got {len(values)}"
                )
            if not all(np.isfinite(values)):
                raise DatasetError(f"{path}, line {lineno}: non-finite feature value")
            rows.append(values)
    if not rows:
        raise DatasetError(f"{path}: no feature rows")
    return np.array(rows, dtype=np.float64)


def read_labels(path) -> np.ndarray:
    """One integer class index per line."""
    labels = []
    with open(path, 'r') as file:
        for lineno, line in enumerate(file, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                label = int(line)
            except ValueError:
                raise DatasetError(f"{path}, line {lineno}: expected an integer label, got {line!r}")
            if label < 0:
                raise DatasetError(f"{path}, line {lineno}: negative label {label}")
            labels.append(label)
    return np.array(labels, dtype=np.int64)


def ingest_dataset(edge_path, feature_path, label_path=None, num_nodes=None) -> DatasetBundle:
    """Read an edge list, a feature CSV and optionally a label file.

    Args:
        edge_path (str): edge list, one `u v` pair per line.
        feature_path (str): CSV with one row per node.
        label_path (str): one integer label per line. Optional.
        num_nodes (int): node count. If None it is inferred from the edge
            list as the largest index + 1; pass it explicitly for graphs
            with trailing isolated nodes.

    Returns:
        DatasetBundle: graph, features and labels with consistent row counts.
    """
    try:
        graph = read_edge_list(edge_path, num_nodes=num_nodes)
    except GraphError as e:
        raise DatasetError(str(e))
    features = read_features(feature_path)
    n = graph.num_nodes
    if features.shape[0] != n:
        raise DatasetError(f"{feature_path}: {features.shape[0]} feature rows for {n} nodes in {edge_path}")
    labels, class_count = None, None
    if label_path is not None:
        labels = read_labels(label_path)
        if labels.shape[0] != n:
            raise DatasetError(f"{label_path}: {labels.shape[0]} labels for {n} nodes in {feature_path}")
        class_count = int(labels.max()) + 1 if labels.size else 0
    bundle = DatasetBundle(graph=graph, features=features, labels=labels, class_count=class_count)
    logging.info(
        f"Loaded {n} nodes, {graph.num_edges // 2} edges, {features.shape[1]} features"
        + (f", {class_count} classes" if class_count else "")
    )
    return bundle


def synthetic_sbm_dataset(block_sizes, p_in, p_out, noise, seed) -> DatasetBundle:
    """Block-model graph whose labels are the blocks and whose features are
    one-hot labels plus Gaussian noise of standard deviation `noise`."""
    graph = sbm_graph(block_sizes, p_in, p_out, seed)
    labels = graph.blocks.astype(np.int64)
    class_count = len(block_sizes)
    rng = np.random.default_rng([seed, 1])
    features = np.eye(class_count)[labels] + noise * rng.standard_normal((labels.size, class_count))
    return DatasetBundle(graph=graph, features=features, labels=labels, class_count=class_count)
