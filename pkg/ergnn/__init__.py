from .autodiff import AdamState, Tape, Tensor, adam_step, gradient_check
from .chebyshev import (
    ChebStack, NodeValueCoeffs, cheb_apply, cheb_nodes, chebyshev_filter, combine,
    filter_response, interp_matrix, interp_to_coeffs, shift_laplacian,
)
from .cli import dispatch, dump_config, main, parse_config
from .config import ExperimentConfig, Task
from .data import DatasetBundle, ingest_dataset, synthetic_sbm_dataset
from .errors import (
    AcceptanceError, ConfigError, ConvergenceError, DatasetError, GraphError,
    NonFiniteLossError, ShapeError, SpectralSizeError,
)
from .graph import (
    Graph, SparseSymMatrix, build_graph, erdos_renyi_graph, grid_graph,
    normalized_laplacian, read_edge_list, sbm_graph, spmm,
)
from .harness import (
    RunMetrics, RunRecord, SplitMasks, TheoremReport, make_splits, run_filter_learning,
    run_grid, run_node_classification, run_theorem_check,
)
from .model import (
    ForwardOutputs, LossWeights, RationalFilterParams, denominator_apply, forward,
    init_params, load_params, loss, predict, save_params, train_step,
)
from .oracle import run_oracle_suite
from .spectral import (
    SpectralDecomposition, TargetFilterKind, eigendecompose, exact_filter,
    jacobi_eigh, target_filter_eval,
)
