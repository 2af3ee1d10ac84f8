"""Network-assisted random forest regression (NeRF+).

A forest is linearized through decision-stump features, then each tree is
refit with per-node network effects under a graph-cohesion penalty and
spectral-embedding columns.  The package covers fitting, prediction on
unseen network nodes, global/local importance with a network
decomposition, closed-form leave-one-out sample influence, and a
simulation harness.  Plain RF+ and linear network-cohesion regression are
degenerate configurations.
"""

from .data import (
    Dataset,
    Laplacian,
    Network,
    build_laplacian,
    center,
    load_dataset,
    load_network,
    make_network,
    quadratic_form,
)
from .embedding import SpectralEmbedding, extend_embedding, spectral_embedding
from .exceptions import InputError, NumericalError
from .forest import (
    FittedTree,
    Forest,
    ForestParams,
    TreeParams,
    features_used,
    fit_forest,
    fit_tree,
    forest_predict,
    stump_features,
    tree_predict,
)
from .influence import InfluenceReport, LooWorkspace, build_workspace, loo_coefficients, sample_influence
from .interpret import (
    GlobalImportanceReport,
    LocalImportanceReport,
    local_importance,
    local_importance_report,
    mdi_plus,
    mdi_plus_report,
    permutation_importance,
    permutation_importance_report,
    r_squared,
)
from .model import (
    Decomposition,
    EvalBlocks,
    NerfPlusConfig,
    NerfPlusModel,
    PredictionResult,
    decompose,
    dump_model,
    eval_blocks_for_nodes,
    fit,
    load_model,
    model_from_json,
    model_to_json,
    predict,
    training_eval_blocks,
)
from .simulate import (
    ExperimentReport,
    SimConfig,
    calibrate_noise,
    eval_f,
    gen_response_autocorr,
    gen_response_blockwise,
    gen_sbm,
    inject_outlier,
    run_experiment,
)
from .solver import (
    PenaltyGrid,
    PenaltySpec,
    RidgeSolution,
    build_design,
    build_penalty,
    cv_tune,
    extend_node_effects,
    ridge_objective,
    solve,
)

__version__ = "0.1.0"
