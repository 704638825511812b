"""Tree-structured cross-entropy loss over cover trees of a label metric."""

from .cover_tree import (
    CoverTree,
    PathTable,
    Violation,
    build_cover_tree,
    check_invariants,
    derive_u_paths,
    derive_v_tree,
    format_path_table,
    format_tree,
    read_tree,
    tree_stats,
    write_tree,
)
from .errors import DepthLimitError, DivergenceError, InvalidInputError, ParseError, TreeLossError
from .metric_space import (
    LabelMetric,
    MetricReport,
    build_embedding_metric,
    estimate_doubling_constant,
    metric_from_distances,
    mix_epsilon_metric,
    read_embeddings,
    verify_metric_axioms,
    write_embeddings,
)
from .optimizer import SGDConfig, TrainResult, initialize_params, sgd_train, write_trajectory
from .synthetic import SynthConfig, sample_bad_params, sample_dataset, sample_test_set, sample_true_params
from .tree_loss import (
    FLAT,
    U,
    V,
    Dataset,
    Evaluation,
    ParamMatrix,
    decompose_w,
    evaluate,
    frobenius_norm,
    loss_forward,
    loss_gradient,
    make_dataset,
    predict,
    read_dataset_csv,
    read_params,
    reconstruct_w,
    write_dataset_csv,
    write_params,
)

__version__ = "0.1.0"
