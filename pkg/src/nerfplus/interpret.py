"""Global and local importance measures with network decomposition.

All measures operate on the model's additive column groups: one group per
original feature (its linear column plus the stumps splitting on it), an
embedding group (embedding columns plus stumps splitting on them), and the
node-effect (cohesion) group.  The network group is cohesion + embedding.

Permutation importance jointly shuffles a group's rows across all trees
and reports the mean change of a dissimilarity metric over the draws.
The partial-model importance replaces every column outside the target
group by its training mean and scores the similarity of the resulting
predictions to the response, per tree.  Local importance is a sample's
group contribution relative to the training-average contribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError
from .model import (
    Decomposition,
    EvalBlocks,
    NerfPlusModel,
    decompose_blocks,
    tree_group_matrix,
    tree_group_means,
)

PERMUTATION_STREAM = 4  # RNG namespace; one shared stream per draw across targets

NETWORK_TARGETS = ("network", "cohesion", "embedding")


def rmse(y: np.ndarray, pred: np.ndarray) -> float:
    diff = y - pred
    return float(np.sqrt(np.mean(diff * diff)))


def r_squared(y: np.ndarray, pred: np.ndarray, baseline_mean: float | None = None) -> float:
    """``1 - SSE/SST`` with SST taken around ``baseline_mean`` (default: mean of y)."""
    if baseline_mean is None:
        baseline_mean = float(np.mean(y))
    resid = y - pred
    sse = float(resid @ resid)
    base = y - baseline_mean
    sst = float(base @ base)
    if sst == 0.0:
        return 1.0 if sse == 0.0 else -np.inf
    return 1.0 - sse / sst


def squared_correlation(y: np.ndarray, pred: np.ndarray) -> float:
    """Squared Pearson correlation; zero when either argument is constant."""
    if np.ptp(y) == 0.0 or np.ptp(pred) == 0.0:
        return 0.0
    yc = y - np.mean(y)
    pc = pred - np.mean(pred)
    denom = float(yc @ yc) * float(pc @ pc)
    if denom <= 0.0:
        return 0.0
    cov = float(yc @ pc)
    return cov * cov / denom


_DISSIMILARITY = {
    "rmse": rmse,
    # sign-flipped so that "permuting hurts" still yields a positive score
    "r2": lambda y, pred: -r_squared(y, pred),
}


def _target_contribution(dec: Decomposition, target, n_features: int) -> np.ndarray:
    if isinstance(target, (int, np.integer)):
        if not 0 <= int(target) < n_features:
            raise InputError(f"feature target {target} out of range")
        return dec.feature_parts[:, int(target)]
    if target == "network":
        return dec.network_part
    if target == "cohesion":
        return dec.node_effect_part
    if target == "embedding":
        return dec.embedding_part
    raise InputError(f"unknown importance target {target!r}")


def _all_targets(model: NerfPlusModel) -> list:
    return list(range(model.n_features)) + list(NETWORK_TARGETS)


def target_names(model: NerfPlusModel) -> list[str]:
    return list(model.feature_names) + list(NETWORK_TARGETS)


@dataclass
class GlobalImportanceReport:
    method: str
    metric_name: str
    names: list[str]
    scores: np.ndarray
    stderrs: np.ndarray
    n_permutations: int | None
    seed: int | None

    def score_of(self, name: str) -> float:
        return float(self.scores[self.names.index(name)])

    @property
    def per_feature(self) -> dict[str, float]:
        cut = len(self.names) - len(NETWORK_TARGETS)
        return {name: float(s) for name, s in zip(self.names[:cut], self.scores[:cut])}

    @property
    def network_total(self) -> float:
        return self.score_of("network")

    @property
    def network_cohesion(self) -> float:
        return self.score_of("cohesion")

    @property
    def network_embedding(self) -> float:
        return self.score_of("embedding")

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "metric": self.metric_name,
            "targets": [
                {"name": name, "score": float(s), "stderr": float(e)}
                for name, s, e in zip(self.names, self.scores, self.stderrs)
            ],
            "n_permutations": self.n_permutations,
            "seed": self.seed,
        }


def _permutation_scores(
    model: NerfPlusModel,
    blocks: EvalBlocks,
    response: np.ndarray,
    targets: list,
    n_permutations: int,
    metric: str,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    if n_permutations < 1:
        raise InputError("n_permutations must be >= 1")
    if metric not in _DISSIMILARITY:
        raise InputError(f"unknown metric {metric!r}; choose from {sorted(_DISSIMILARITY)}")
    score_fn = _DISSIMILARITY[metric]
    y = np.asarray(response, dtype=np.float64)
    dec = decompose_blocks(model, blocks)
    pred = dec.predictions
    if len(y) != len(pred):
        raise InputError("response length does not match evaluation rows")
    baseline = score_fn(y, pred)
    contributions = [_target_contribution(dec, t, model.n_features) for t in targets]
    draws = np.zeros((n_permutations, len(targets)))
    for b in range(n_permutations):
        # one shared permutation per draw keeps target scores comparable
        perm = np.random.default_rng([seed, PERMUTATION_STREAM, b]).permutation(len(y))
        for k, contrib in enumerate(contributions):
            permuted = pred - contrib + contrib[perm]
            draws[b, k] = score_fn(y, permuted) - baseline
    scores = draws.mean(axis=0)
    if n_permutations > 1:
        stderrs = draws.std(axis=0, ddof=1) / np.sqrt(n_permutations)
    else:
        stderrs = np.zeros(len(targets))
    return scores, stderrs


def permutation_importance(
    model: NerfPlusModel,
    blocks: EvalBlocks,
    response: np.ndarray,
    target,
    n_permutations: int = 50,
    metric: str = "rmse",
    seed: int = 0,
) -> float:
    """Mean metric degradation when the target's columns are row-shuffled
    jointly across all trees."""
    scores, _ = _permutation_scores(
        model, blocks, response, [target], n_permutations, metric, seed
    )
    return float(scores[0])


def permutation_importance_report(
    model: NerfPlusModel,
    blocks: EvalBlocks,
    response: np.ndarray,
    n_permutations: int = 50,
    metric: str = "rmse",
    seed: int = 0,
) -> GlobalImportanceReport:
    targets = _all_targets(model)
    scores, stderrs = _permutation_scores(
        model, blocks, response, targets, n_permutations, metric, seed
    )
    return GlobalImportanceReport(
        method="permutation",
        metric_name=metric,
        names=target_names(model),
        scores=scores,
        stderrs=stderrs,
        n_permutations=n_permutations,
        seed=seed,
    )


def _mdi_plus_scores(
    model: NerfPlusModel,
    blocks: EvalBlocks,
    response: np.ndarray,
    targets: list,
    similarity: str,
) -> tuple[np.ndarray, np.ndarray]:
    if similarity != "r2":
        raise InputError("only the r2 similarity is supported")
    y = np.asarray(response, dtype=np.float64)
    if len(y) != blocks.n_rows:
        raise InputError("response length does not match evaluation rows")
    p = model.n_features
    per_tree = np.zeros((model.n_trees, len(targets)))
    for t in range(model.n_trees):
        group = tree_group_matrix(model, t, blocks)  # (m, p + r)
        means = tree_group_means(model, t)  # (p + r,)
        effect_col = blocks.node_effect_columns[:, t]
        effect_mean = model.tree_fits[t].node_effect_mean
        total_mean = float(means.sum()) + effect_mean
        embed_col = group[:, p:].sum(axis=1)
        embed_mean = float(means[p:].sum())
        for k, target in enumerate(targets):
            if isinstance(target, (int, np.integer)):
                contrib = group[:, int(target)]
                kept_mean = float(means[int(target)])
            elif target == "network":
                contrib = embed_col + effect_col
                kept_mean = embed_mean + effect_mean
            elif target == "cohesion":
                contrib = effect_col
                kept_mean = effect_mean
            elif target == "embedding":
                contrib = embed_col
                kept_mean = embed_mean
            else:
                raise InputError(f"unknown importance target {target!r}")
            partial = contrib + (total_mean - kept_mean) + model.response_mean
            per_tree[t, k] = squared_correlation(y, partial)
    scores = per_tree.mean(axis=0)
    if model.n_trees > 1:
        stderrs = per_tree.std(axis=0, ddof=1) / np.sqrt(model.n_trees)
    else:
        stderrs = np.zeros(len(targets))
    return scores, stderrs


def mdi_plus(
    model: NerfPlusModel,
    blocks: EvalBlocks,
    response: np.ndarray,
    target,
    similarity: str = "r2",
) -> float:
    """Similarity of the response to the target-only partial predictions.

    Per tree, every column outside the target group is replaced by its
    training mean before predicting; the per-tree similarities (squared
    correlation, zero for a constant prediction) are averaged.
    """
    scores, _ = _mdi_plus_scores(model, blocks, response, [target], similarity)
    return float(scores[0])


def mdi_plus_report(
    model: NerfPlusModel,
    blocks: EvalBlocks,
    response: np.ndarray,
    similarity: str = "r2",
) -> GlobalImportanceReport:
    targets = _all_targets(model)
    scores, stderrs = _mdi_plus_scores(model, blocks, response, targets, similarity)
    return GlobalImportanceReport(
        method="mdi_plus",
        metric_name=similarity,
        names=target_names(model),
        scores=scores,
        stderrs=stderrs,
        n_permutations=None,
        seed=None,
    )


@dataclass
class LocalImportanceReport:
    """Per-sample additive contributions, centered by training averages.

    ``per_sample_network`` columns are (network total, cohesion, embedding).
    Feature columns plus the network total reproduce each sample's centered
    prediction exactly.
    """

    feature_names: list[str]
    per_sample_per_feature: np.ndarray  # (m, p)
    per_sample_network: np.ndarray  # (m, 3)
    baseline_features: np.ndarray  # (p,), training-average contributions
    baseline_network: np.ndarray  # (3,)

    @property
    def column_names(self) -> list[str]:
        return list(self.feature_names) + list(NETWORK_TARGETS)

    def matrix(self) -> np.ndarray:
        return np.hstack([self.per_sample_per_feature, self.per_sample_network])


def local_importance_report(model: NerfPlusModel, blocks: EvalBlocks) -> LocalImportanceReport:
    p = model.n_features
    dec = decompose_blocks(model, blocks)
    mean_groups = np.zeros(model.n_augmented)
    mean_effect = 0.0
    for t in range(model.n_trees):
        mean_groups += tree_group_means(model, t)
        mean_effect += model.tree_fits[t].node_effect_mean
    mean_groups /= model.n_trees
    mean_effect /= model.n_trees

    feature_local = dec.feature_parts - mean_groups[:p]
    embed_local = dec.embedding_part - mean_groups[p:].sum()
    cohesion_local = dec.node_effect_part - mean_effect
    network = np.column_stack(
        [cohesion_local + embed_local, cohesion_local, embed_local]
    )
    return LocalImportanceReport(
        feature_names=list(model.feature_names),
        per_sample_per_feature=feature_local,
        per_sample_network=network,
        baseline_features=mean_groups[:p],
        baseline_network=np.array(
            [mean_effect + mean_groups[p:].sum(), mean_effect, mean_groups[p:].sum()]
        ),
    )


def local_importance(model: NerfPlusModel, blocks: EvalBlocks, target) -> np.ndarray:
    """Per-sample importance of one target group."""
    report = local_importance_report(model, blocks)
    if isinstance(target, (int, np.integer)):
        if not 0 <= int(target) < model.n_features:
            raise InputError(f"feature target {target} out of range")
        return report.per_sample_per_feature[:, int(target)]
    if target == "network":
        return report.per_sample_network[:, 0]
    if target == "cohesion":
        return report.per_sample_network[:, 1]
    if target == "embedding":
        return report.per_sample_network[:, 2]
    raise InputError(f"unknown importance target {target!r}")
