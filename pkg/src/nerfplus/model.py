"""The network-assisted forest regression model.

Fitting proceeds in three steps: (1) grow a bootstrap forest on the
features augmented with spectral-embedding coordinates, (2) for each tree,
refit the response on ``[node effects, linear columns, stump columns]``
with a cohesion-penalized ridge whose penalties are cross-validated, and
(3) predict by averaging the per-tree linear models, extending node
effects and embedding coordinates cohesively for unseen nodes.

Every transformed column belongs to exactly one interpretation group:
node-effect (cohesion), embedding (embedding columns plus stumps splitting
on them), or one original feature (its linear column plus stumps splitting
on it).  :func:`decompose` materializes that partition and is the basis of
all importance measures.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Laplacian, Network, build_laplacian, center, make_network
from .embedding import SpectralEmbedding, spectral_embedding
from .exceptions import InputError
from .forest import (
    FittedTree,
    ForestParams,
    features_used,
    fit_forest,
    out_of_bag_rows,
    stump_features,
)
from .solver import (
    LaplacianEigs,
    PenaltyGrid,
    PenaltySpec,
    build_penalty,
    cv_tune,
    extension_operator,
    prepare_cv_folds,
    profiled_fit,
    solve,
)

MODEL_FORMAT_VERSION = 1
PENALTY_ASSIGN_STREAM = 2  # RNG namespace for reusing tuned penalties


@dataclass(frozen=True)
class NerfPlusConfig:
    """Hyperparameters of the full pipeline.

    ``embedding_dim = 0`` disables embedding columns; a cohesion grid of
    exactly ``(0,)`` drops the node-effect block (the plain RF+ form).
    Penalties are tuned for ``trees_to_tune`` trees; the remaining trees
    sample uniformly from the tuned specs.
    """

    n_trees: int = 500
    mtry_fraction: float = 1.0 / 3.0
    max_depth: int | None = None
    min_leaf: int = 5
    embedding_dim: int = 2
    laplacian_reg: float = 0.05
    penalty_grid: PenaltyGrid = field(default_factory=PenaltyGrid.default)
    cv_folds: int = 5
    trees_to_tune: int = 10
    fit_on_oob: bool = False
    restrict_linear_to_split_features: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise InputError("n_trees must be >= 1")
        if self.embedding_dim < 0:
            raise InputError("embedding_dim must be >= 0")
        if self.laplacian_reg < 0:
            raise InputError("laplacian_reg must be >= 0")
        if self.cv_folds < 2:
            raise InputError("cv_folds must be >= 2")
        if self.trees_to_tune < 0:
            raise InputError("trees_to_tune must be >= 0")
        single = all(
            len(g) == 1
            for g in (
                self.penalty_grid.cohesion,
                self.penalty_grid.linear,
                self.penalty_grid.stump,
            )
        )
        if self.trees_to_tune == 0 and not single:
            raise InputError("trees_to_tune=0 requires a singleton penalty grid")

    @property
    def include_node_effects(self) -> bool:
        return self.penalty_grid.cohesion != (0.0,)

    def forest_params(self) -> ForestParams:
        return ForestParams(
            n_trees=self.n_trees,
            mtry_fraction=self.mtry_fraction,
            max_depth=self.max_depth,
            min_leaf=self.min_leaf,
        )

    def to_json(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "mtry_fraction": self.mtry_fraction,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "embedding_dim": self.embedding_dim,
            "lambda_L": self.laplacian_reg,
            "penalty_grid": self.penalty_grid.to_json(),
            "cv_folds": self.cv_folds,
            "trees_to_tune": self.trees_to_tune,
            "fit_on_oob": self.fit_on_oob,
            "restrict_linear_to_split_features": self.restrict_linear_to_split_features,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NerfPlusConfig":
        return cls(
            n_trees=int(obj["n_trees"]),
            mtry_fraction=float(obj["mtry_fraction"]),
            max_depth=None if obj["max_depth"] is None else int(obj["max_depth"]),
            min_leaf=int(obj["min_leaf"]),
            embedding_dim=int(obj["embedding_dim"]),
            laplacian_reg=float(obj["lambda_L"]),
            penalty_grid=PenaltyGrid.from_json(obj["penalty_grid"]),
            cv_folds=int(obj["cv_folds"]),
            trees_to_tune=int(obj["trees_to_tune"]),
            fit_on_oob=bool(obj["fit_on_oob"]),
            restrict_linear_to_split_features=bool(obj["restrict_linear_to_split_features"]),
            seed=int(obj["seed"]),
        )


@dataclass
class TreeFit:
    """Per-tree coefficients and the training column means of its blocks."""

    node_effects: np.ndarray  # (n_train,), zeros when node effects are disabled
    linear_coef: np.ndarray  # (len(linear_feature_indices),)
    stump_coef: np.ndarray  # (tree.n_splits,)
    penalty: PenaltySpec
    stump_col_means: np.ndarray  # training means of the stump columns
    node_effect_mean: float


@dataclass
class NerfPlusModel:
    config: NerfPlusConfig
    trees: tuple[FittedTree, ...]
    tree_fits: list[TreeFit]
    embedding: SpectralEmbedding | None
    linear_feature_indices: np.ndarray  # columns of the augmented matrix in the linear block
    feature_means: np.ndarray  # (p,), centering shifts
    response_mean: float
    feature_names: tuple[str, ...]
    train_xtilde: np.ndarray  # (n, p + r), centered features + embedding columns
    train_response: np.ndarray  # (n,), centered
    training_network: Network
    laplacian: Laplacian  # regularized training Laplacian

    @property
    def n_train(self) -> int:
        return self.train_xtilde.shape[0]

    @property
    def n_features(self) -> int:
        return len(self.feature_means)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_augmented(self) -> int:
        return self.train_xtilde.shape[1]

    @property
    def include_node_effects(self) -> bool:
        return self.config.include_node_effects

    def tree_feature_block(self, t: int, xtilde: np.ndarray, stumps: np.ndarray) -> np.ndarray:
        return np.hstack([xtilde[:, self.linear_feature_indices], stumps])

    def fitted_values(self) -> np.ndarray:
        """In-sample ensemble predictions on the original response scale."""
        blocks = training_eval_blocks(self)
        return assemble_predictions(self, blocks)

    def training_r_squared(self) -> float:
        pred = self.fitted_values() - self.response_mean
        y = self.train_response
        sst = float(y @ y)
        if sst == 0:
            return 1.0
        resid = y - pred
        return 1.0 - float(resid @ resid) / sst


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


def _parallel_map(fn, items, n_threads: int):
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def fit(
    dataset: Dataset,
    network: Network,
    config: NerfPlusConfig | None = None,
    n_threads: int = 1,
) -> NerfPlusModel:
    """Fit the model; deterministic given the config seed, for any thread count."""
    config = config or NerfPlusConfig()
    if dataset.n_samples != network.n_nodes:
        raise InputError(
            f"dataset has {dataset.n_samples} rows but network has {network.n_nodes} nodes"
        )
    if not dataset.is_centered:
        dataset = center(dataset)
    n = dataset.n_samples
    y = dataset.response

    laplacian = build_laplacian(network, config.laplacian_reg)
    lap_eigs = LaplacianEigs.of(laplacian.matrix)
    if config.embedding_dim > 0:
        embedding = spectral_embedding(laplacian, config.embedding_dim, eigs=lap_eigs)
        xtilde = np.hstack([dataset.features, embedding.coordinates])
    else:
        embedding = None
        xtilde = dataset.features.copy()

    forest = fit_forest(
        xtilde, y, config.forest_params(), config.seed, n_threads=n_threads
    )
    if config.restrict_linear_to_split_features:
        linear_idx = features_used(forest)
    else:
        linear_idx = np.arange(xtilde.shape[1], dtype=np.intp)
    linear_block = xtilde[:, linear_idx]
    q_linear = len(linear_idx)

    stump_blocks = _parallel_map(
        lambda t: stump_features(forest.trees[t], xtilde), range(config.n_trees), n_threads
    )

    include_alpha = config.include_node_effects
    n_tuned = min(config.trees_to_tune, config.n_trees)
    grid = config.penalty_grid
    single_grid = all(len(g) == 1 for g in (grid.cohesion, grid.linear, grid.stump))

    if single_grid:
        tuned_specs = [PenaltySpec(grid.cohesion[0], grid.linear[0], grid.stump[0])]
        specs = tuned_specs * config.n_trees
    else:
        if config.fit_on_oob:
            fold_plan = None  # per-tree row sets differ; folds rebuilt per tree
        else:
            fold_plan = prepare_cv_folds(
                laplacian if include_alpha else None, n, config.cv_folds, config.seed
            )

        def tune_one(t: int) -> PenaltySpec:
            rows = out_of_bag_rows(forest, t, n) if config.fit_on_oob else np.arange(n)
            if rows.size < config.cv_folds:
                raise InputError(f"tree {t}: too few rows for {config.cv_folds}-fold CV")
            feature_block = np.hstack([linear_block[rows], stump_blocks[t][rows]])
            if config.fit_on_oob:
                lap_t = (
                    Laplacian(
                        n_nodes=rows.size,
                        matrix=laplacian.submatrix(rows, rows),
                        reg=laplacian.reg,
                    )
                    if include_alpha
                    else None
                )
                return cv_tune(
                    feature_block, y[rows], lap_t, grid, q_linear,
                    folds=config.cv_folds, seed=config.seed,
                )
            return cv_tune(
                feature_block, y, laplacian if include_alpha else None, grid,
                q_linear, folds=config.cv_folds, seed=config.seed, fold_plan=fold_plan,
            )

        tuned_specs = _parallel_map(tune_one, range(n_tuned), n_threads)
        assign_rng = np.random.default_rng([config.seed, PENALTY_ASSIGN_STREAM])
        picks = assign_rng.integers(0, n_tuned, size=config.n_trees - n_tuned)
        specs = list(tuned_specs) + [tuned_specs[int(k)] for k in picks]

    def solve_one(t: int) -> TreeFit:
        spec = specs[t]
        stumps = stump_blocks[t]
        m_stump = stumps.shape[1]
        rows = out_of_bag_rows(forest, t, n) if config.fit_on_oob else None
        if not include_alpha:
            design = np.hstack([linear_block, stumps]) if rows is None else np.hstack(
                [linear_block[rows], stumps[rows]]
            )
            target = y if rows is None else y[rows]
            if design.shape[1] == 0:
                coef = np.zeros(0)
            else:
                sol = solve(
                    design,
                    target,
                    build_penalty(None, spec, q_linear, m_stump),
                    widths=(0, q_linear, m_stump),
                    spec=spec,
                )
                coef = sol.coef
            node_effects = np.zeros(n)
        elif rows is None:
            feature_block = np.hstack([linear_block, stumps])
            node_effects, coef = profiled_fit(feature_block, y, lap_eigs, spec, q_linear)
        else:
            # loss over the given rows only, node effects still length n
            design = np.hstack([np.eye(n)[rows], linear_block[rows], stumps[rows]])
            penalty = build_penalty(laplacian, spec, q_linear, m_stump)
            sol = solve(design, y[rows], penalty, widths=(n, q_linear, m_stump), spec=spec)
            node_effects, coef = sol.node_effects, sol.coef[n:]
        return TreeFit(
            node_effects=node_effects,
            linear_coef=coef[:q_linear],
            stump_coef=coef[q_linear:],
            penalty=spec,
            stump_col_means=stumps.mean(axis=0) if m_stump else np.zeros(0),
            node_effect_mean=float(node_effects.mean()),
        )

    tree_fits = _parallel_map(solve_one, range(config.n_trees), n_threads)

    return NerfPlusModel(
        config=config,
        trees=forest.trees,
        tree_fits=tree_fits,
        embedding=embedding,
        linear_feature_indices=linear_idx,
        feature_means=dataset.column_means,
        response_mean=dataset.response_mean,
        feature_names=dataset.feature_names,
        train_xtilde=xtilde,
        train_response=y,
        training_network=network,
        laplacian=laplacian,
    )


# ---------------------------------------------------------------------------
# Evaluation blocks: transformed columns for a set of nodes
# ---------------------------------------------------------------------------


@dataclass
class EvalBlocks:
    """Transformed data for a node set: augmented features, per-tree
    node-effect columns, and per-tree stump columns."""

    xtilde: np.ndarray  # (m, p + r)
    node_effect_columns: np.ndarray  # (m, T)
    stump_columns: list[np.ndarray]  # T arrays of shape (m, m_t)

    @property
    def n_rows(self) -> int:
        return self.xtilde.shape[0]


def training_eval_blocks(model: NerfPlusModel) -> EvalBlocks:
    """Blocks for the training rows themselves (identity extension)."""
    effects = np.column_stack([tf.node_effects for tf in model.tree_fits])
    stumps = [stump_features(tree, model.train_xtilde) for tree in model.trees]
    return EvalBlocks(
        xtilde=model.train_xtilde, node_effect_columns=effects, stump_columns=stumps
    )


def eval_blocks_for_nodes(
    model: NerfPlusModel,
    features: np.ndarray,
    combined_network: Network,
    train_indices: np.ndarray,
    node_ids: np.ndarray | None = None,
) -> tuple[EvalBlocks, np.ndarray]:
    """Blocks for arbitrary nodes of a combined train+test network.

    ``train_indices`` lists the combined-network ids of the training nodes
    in model training order.  ``node_ids`` defaults to all non-training
    nodes in ascending order; requested training nodes reuse their fitted
    node effects and embedding rows.  Returns ``(blocks, node_ids)``.

    Node effects and embedding coordinates for non-training nodes come
    from the joint maximally cohesive extension over all non-training
    nodes of the combined network.
    """
    train_indices = np.asarray(train_indices, dtype=np.intp)
    n_comb = combined_network.n_nodes
    if len(train_indices) != model.n_train:
        raise InputError(
            f"train_indices has {len(train_indices)} entries, model was trained on "
            f"{model.n_train}"
        )
    if len(np.unique(train_indices)) != len(train_indices):
        raise InputError("train_indices contains duplicates")
    if train_indices.min() < 0 or train_indices.max() >= n_comb:
        raise InputError("train_indices out of range for the combined network")

    train_mask = np.zeros(n_comb, dtype=bool)
    train_mask[train_indices] = True
    new_nodes = np.flatnonzero(~train_mask)
    if node_ids is None:
        node_ids = new_nodes
    node_ids = np.asarray(node_ids, dtype=np.intp)
    if node_ids.size and (node_ids.min() < 0 or node_ids.max() >= n_comb):
        raise InputError("requested node ids out of range for the combined network")

    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape != (len(node_ids), model.n_features):
        raise InputError(
            f"features must be {len(node_ids)}x{model.n_features} for the requested nodes"
        )
    if not np.all(np.isfinite(features)):
        raise InputError("non-finite entries in features")
    centered = features - model.feature_means

    lap = build_laplacian(combined_network, model.config.laplacian_reg)
    train_pos = np.full(n_comb, -1, dtype=np.intp)
    train_pos[train_indices] = np.arange(len(train_indices))
    new_pos = np.full(n_comb, -1, dtype=np.intp)
    new_pos[new_nodes] = np.arange(len(new_nodes))

    effects_train = np.column_stack([tf.node_effects for tf in model.tree_fits])
    if new_nodes.size:
        operator = extension_operator(lap, train_indices, new_nodes)
        effects_new = operator @ effects_train
        coords_new = (
            operator @ model.embedding.coordinates if model.embedding is not None else None
        )
    else:
        effects_new = np.zeros((0, model.n_trees))
        coords_new = (
            np.zeros((0, model.embedding.dim)) if model.embedding is not None else None
        )

    in_train = train_pos[node_ids] >= 0
    effect_cols = np.empty((len(node_ids), model.n_trees))
    effect_cols[in_train] = effects_train[train_pos[node_ids[in_train]]]
    effect_cols[~in_train] = effects_new[new_pos[node_ids[~in_train]]]
    if model.embedding is not None:
        coords = np.empty((len(node_ids), model.embedding.dim))
        coords[in_train] = model.embedding.coordinates[train_pos[node_ids[in_train]]]
        coords[~in_train] = coords_new[new_pos[node_ids[~in_train]]]
        xtilde = np.hstack([centered, coords])
    else:
        xtilde = centered
    stumps = [stump_features(tree, xtilde) for tree in model.trees]
    return (
        EvalBlocks(xtilde=xtilde, node_effect_columns=effect_cols, stump_columns=stumps),
        node_ids,
    )


# ---------------------------------------------------------------------------
# Prediction and decomposition
# ---------------------------------------------------------------------------


@dataclass
class PredictionResult:
    """Ensemble predictions with the per-block means over trees."""

    predictions: np.ndarray
    node_effect_part: np.ndarray
    linear_part: np.ndarray
    stump_part: np.ndarray


def assemble_predictions(model: NerfPlusModel, blocks: EvalBlocks) -> np.ndarray:
    return assemble_prediction_result(model, blocks).predictions


def assemble_prediction_result(model: NerfPlusModel, blocks: EvalBlocks) -> PredictionResult:
    m = blocks.n_rows
    linear_block = blocks.xtilde[:, model.linear_feature_indices]
    linear_part = np.zeros(m)
    stump_part = np.zeros(m)
    for t, tf in enumerate(model.tree_fits):
        linear_part += linear_block @ tf.linear_coef
        stump_part += blocks.stump_columns[t] @ tf.stump_coef
    linear_part /= model.n_trees
    stump_part /= model.n_trees
    node_part = blocks.node_effect_columns.mean(axis=1)
    return PredictionResult(
        predictions=node_part + linear_part + stump_part + model.response_mean,
        node_effect_part=node_part,
        linear_part=linear_part,
        stump_part=stump_part,
    )


def predict(
    model: NerfPlusModel,
    features: np.ndarray,
    combined_network: Network,
    train_indices: np.ndarray,
    node_ids: np.ndarray | None = None,
) -> PredictionResult:
    """Predict for nodes of a combined network (defaults: all non-training)."""
    blocks, _ = eval_blocks_for_nodes(model, features, combined_network, train_indices, node_ids)
    return assemble_prediction_result(model, blocks)


def _stump_group_map(model: NerfPlusModel, t: int) -> np.ndarray:
    """(m_t, p + r) map scattering weighted stump columns onto their split feature."""
    tree = model.trees[t]
    coef = model.tree_fits[t].stump_coef
    agg = np.zeros((tree.n_splits, model.n_augmented))
    agg[np.arange(tree.n_splits), tree.split_feature] = coef
    return agg


def tree_group_matrix(model: NerfPlusModel, t: int, blocks: EvalBlocks) -> np.ndarray:
    """Per-sample contribution of each augmented-feature group for tree ``t``.

    Column ``k`` sums the linear term of column ``k`` (when present in the
    linear block) and all stump columns splitting on ``k``.
    """
    tf = model.tree_fits[t]
    out = np.zeros((blocks.n_rows, model.n_augmented))
    out[:, model.linear_feature_indices] = (
        blocks.xtilde[:, model.linear_feature_indices] * tf.linear_coef
    )
    if model.trees[t].n_splits:
        out += blocks.stump_columns[t] @ _stump_group_map(model, t)
    return out


def tree_group_means(model: NerfPlusModel, t: int) -> np.ndarray:
    """Training-mean contribution of each augmented-feature group for tree ``t``."""
    tf = model.tree_fits[t]
    means = np.zeros(model.n_augmented)
    linear_means = model.train_xtilde[:, model.linear_feature_indices].mean(axis=0)
    means[model.linear_feature_indices] = linear_means * tf.linear_coef
    if model.trees[t].n_splits:
        means += tf.stump_col_means @ _stump_group_map(model, t)
    return means


@dataclass
class Decomposition:
    """Additive split of predictions into cohesion, embedding, and feature parts."""

    feature_parts: np.ndarray  # (m, p)
    embedding_part: np.ndarray  # (m,)
    node_effect_part: np.ndarray  # (m,)
    response_mean: float

    @property
    def predictions(self) -> np.ndarray:
        return (
            self.feature_parts.sum(axis=1)
            + self.embedding_part
            + self.node_effect_part
            + self.response_mean
        )

    @property
    def network_part(self) -> np.ndarray:
        return self.embedding_part + self.node_effect_part


def decompose_blocks(model: NerfPlusModel, blocks: EvalBlocks) -> Decomposition:
    p = model.n_features
    total = np.zeros((blocks.n_rows, model.n_augmented))
    for t in range(model.n_trees):
        total += tree_group_matrix(model, t, blocks)
    total /= model.n_trees
    return Decomposition(
        feature_parts=total[:, :p],
        embedding_part=total[:, p:].sum(axis=1),
        node_effect_part=blocks.node_effect_columns.mean(axis=1),
        response_mean=model.response_mean,
    )


def decompose(
    model: NerfPlusModel,
    features: np.ndarray | None = None,
    combined_network: Network | None = None,
    train_indices: np.ndarray | None = None,
    node_ids: np.ndarray | None = None,
) -> Decomposition:
    """Group-partition predictions; with no arguments, for the training rows."""
    if features is None:
        blocks = training_eval_blocks(model)
    else:
        blocks, _ = eval_blocks_for_nodes(
            model, features, combined_network, train_indices, node_ids
        )
    return decompose_blocks(model, blocks)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _tree_to_json(tree: FittedTree) -> dict:
    return {
        "splits": [
            {
                "feature": int(tree.split_feature[j]),
                "threshold": float(tree.split_threshold[j]),
                "n_left": int(tree.n_left[j]),
                "n_right": int(tree.n_right[j]),
                "left": int(tree.left_child[j]),
                "right": int(tree.right_child[j]),
            }
            for j in range(tree.n_splits)
        ],
        "leaf_means": [float(v) for v in tree.leaf_values],
    }


def _tree_from_json(obj: dict) -> FittedTree:
    splits = obj["splits"]
    return FittedTree(
        split_feature=np.array([s["feature"] for s in splits], dtype=np.intp),
        split_threshold=np.array([s["threshold"] for s in splits], dtype=np.float64),
        n_left=np.array([s["n_left"] for s in splits], dtype=np.intp),
        n_right=np.array([s["n_right"] for s in splits], dtype=np.intp),
        left_child=np.array([s["left"] for s in splits], dtype=np.intp),
        right_child=np.array([s["right"] for s in splits], dtype=np.intp),
        leaf_values=np.array(obj["leaf_means"], dtype=np.float64),
    )


def model_to_json(model: NerfPlusModel) -> dict:
    """Portable JSON document; floats keep full round-trip precision."""
    trees = []
    for tree, tf in zip(model.trees, model.tree_fits):
        doc = _tree_to_json(tree)
        doc["alpha"] = [float(v) for v in tf.node_effects]
        doc["beta"] = [float(v) for v in tf.linear_coef]
        doc["gamma"] = [float(v) for v in tf.stump_coef]
        doc["penalty"] = tf.penalty.to_json()
        trees.append(doc)
    embedding = None
    if model.embedding is not None:
        embedding = {
            "eigenvalues": [float(v) for v in model.embedding.eigenvalues],
            "coordinates": model.embedding.coordinates.tolist(),
        }
    return {
        "version": MODEL_FORMAT_VERSION,
        "config": model.config.to_json(),
        "centering": {
            "feature_means": [float(v) for v in model.feature_means],
            "response_mean": model.response_mean,
            "feature_names": list(model.feature_names),
        },
        "embedding": embedding,
        "linear_feature_indices": [int(i) for i in model.linear_feature_indices],
        "trees": trees,
        "training": {
            "features_centered": model.train_xtilde[:, : model.n_features].tolist(),
            "response_centered": [float(v) for v in model.train_response],
            "n_nodes": model.training_network.n_nodes,
            "edges": [[int(i), int(j), float(w)] for i, j, w in model.training_network.edges],
        },
    }


def model_from_json(obj: dict) -> NerfPlusModel:
    if obj.get("version") != MODEL_FORMAT_VERSION:
        raise InputError(f"unsupported model format version {obj.get('version')!r}")
    config = NerfPlusConfig.from_json(obj["config"])
    trees = tuple(_tree_from_json(t) for t in obj["trees"])
    embedding = None
    if obj["embedding"] is not None:
        coords = np.array(obj["embedding"]["coordinates"], dtype=np.float64)
        embedding = SpectralEmbedding(
            coordinates=coords,
            eigenvalues=np.array(obj["embedding"]["eigenvalues"], dtype=np.float64),
            dim=coords.shape[1],
        )
    network = make_network(
        obj["training"]["n_nodes"], [tuple(e) for e in obj["training"]["edges"]]
    )
    laplacian = build_laplacian(network, config.laplacian_reg)
    features = np.array(obj["training"]["features_centered"], dtype=np.float64)
    xtilde = (
        np.hstack([features, embedding.coordinates]) if embedding is not None else features
    )
    linear_idx = np.array(obj["linear_feature_indices"], dtype=np.intp)
    tree_fits = []
    for t, tdoc in enumerate(obj["trees"]):
        stumps = stump_features(trees[t], xtilde)
        node_effects = np.array(tdoc["alpha"], dtype=np.float64)
        tree_fits.append(
            TreeFit(
                node_effects=node_effects,
                linear_coef=np.array(tdoc["beta"], dtype=np.float64),
                stump_coef=np.array(tdoc["gamma"], dtype=np.float64),
                penalty=PenaltySpec.from_json(tdoc["penalty"]),
                stump_col_means=stumps.mean(axis=0) if stumps.shape[1] else np.zeros(0),
                node_effect_mean=float(node_effects.mean()),
            )
        )
    return NerfPlusModel(
        config=config,
        trees=trees,
        tree_fits=tree_fits,
        embedding=embedding,
        linear_feature_indices=linear_idx,
        feature_means=np.array(obj["centering"]["feature_means"], dtype=np.float64),
        response_mean=float(obj["centering"]["response_mean"]),
        feature_names=tuple(obj["centering"]["feature_names"]),
        train_xtilde=xtilde,
        train_response=np.array(obj["training"]["response_centered"], dtype=np.float64),
        training_network=network,
        laplacian=laplacian,
    )


def dump_model(model: NerfPlusModel, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_json(model), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str) -> NerfPlusModel:
    with open(path) as fh:
        return model_from_json(json.load(fh))
