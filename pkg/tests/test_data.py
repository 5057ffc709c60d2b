import numpy as np
import pytest

from ergnn.data import ingest_dataset, read_features, synthetic_sbm_dataset
from ergnn.errors import DatasetError


@pytest.fixture
def files(tmp_path):
    def write(name, text):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return write


def test_two_node_bundle(files):
    bundle = ingest_dataset(files('e.txt', '0 1\n'), files('x.csv', '1.0\n0.0\n'), files('y.txt', '0\n1\n'))
    assert bundle.graph.num_nodes == 2
    assert bundle.class_count == 2
    np.testing.assert_array_equal(bundle.features, [[1.0], [0.0]])
    np.testing.assert_array_equal(bundle.labels, [0, 1])


def test_comment_lines_ignored(files):
    bundle = ingest_dataset(files('e.txt', '# graph\n0 1\n# end\n'), files('x.csv', '1.0\n0.0\n'))
    assert bundle.graph.num_edges == 2
    assert bundle.labels is None


def test_feature_row_count_mismatch(files):
    with pytest.raises(DatasetError, match='3 feature rows'):
        ingest_dataset(files('e.txt', '0 1\n'), files('x.csv', '1.0\n0.0\n2.0\n'))


def test_label_count_mismatch(files):
    with pytest.raises(DatasetError, match='labels'):
        ingest_dataset(files('e.txt', '0 1\n'), files('x.csv', '1\n0\n'), files('y.txt', '0\n'))


def test_bad_edge_line_names_file(files):
    with pytest.raises(DatasetError, match='line 2'):
        ingest_dataset(files('e.txt', '0 1\n0 one\n'), files('x.csv', '1\n0\n'))


def test_feature_parse_error_line(files):
    with pytest.raises(DatasetError, match='line 2'):
        read_features(files('x.csv', '1.0,2.0\n3.0,abc\n'))


def test_feature_ragged_rows(files):
    with pytest.raises(DatasetError, match='columns'):
        read_features(files('x.csv', '1.0,2.0\n3.0\n'))


def test_negative_label(files):
    with pytest.raises(DatasetError, match='negative'):
        ingest_dataset(files('e.txt', '0 1\n'), files('x.csv', '1\n0\n'), files('y.txt', '0\n-1\n'))


def test_synthetic_sbm_dataset():
    bundle = synthetic_sbm_dataset([10, 15], 0.5, 0.05, noise=0.0, seed=2)
    assert bundle.features.shape == (25, 2)
    np.testing.assert_array_equal(bundle.features.argmax(axis=1), bundle.labels)
    assert bundle.class_count == 2
