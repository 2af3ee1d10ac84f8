"""Closed-form leave-one-out coefficients and sample influence scores.

Dropping training sample ``i`` from a fitted tree's ridge system removes
both the i-th loss row and (when node effects are present) the i-th
node-effect column together with row/column ``i`` of the penalty.  Both
removals are rank-one updates of the cached Gram inverse, so the refit
coefficients follow in closed form without refactorizing.  Trees,
embeddings, the Laplacian, and the tuned penalties stay frozen.

A sample's influence is the mean squared shift of the test predictions
when it is left out; rank 1 marks the most influential sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .data import Network, build_laplacian
from .exceptions import InputError, NumericalError
from .forest import stump_features
from .model import NerfPlusModel, eval_blocks_for_nodes
from .solver import build_penalty, extension_operator

LEVERAGE_GUARD = 1e-10  # below this margin to 1, a sample is flagged un-droppable


@dataclass
class LooWorkspace:
    """Cached pieces for all leave-one-out solves of one tree."""

    design: np.ndarray  # (n, d) stacked design
    gram_inverse: np.ndarray  # (d, d)
    coef: np.ndarray  # (d,) full-data solution
    residuals: np.ndarray  # (n,) fitted minus observed
    leverages: np.ndarray  # (n,)
    flagged: np.ndarray  # (n,) bool, leverage numerically at 1
    include_node_effects: bool
    n_train: int


def build_workspace(model: NerfPlusModel, t: int, stumps: np.ndarray | None = None) -> LooWorkspace:
    """Form the stacked system for tree ``t`` and cache its Gram inverse."""
    if model.config.fit_on_oob:
        raise InputError("influence requires a model fit on the full training data")
    n = model.n_train
    if stumps is None:
        stumps = stump_features(model.trees[t], model.train_xtilde)
    tf = model.tree_fits[t]
    feature_block = np.hstack([model.train_xtilde[:, model.linear_feature_indices], stumps])
    q = len(model.linear_feature_indices)
    m = stumps.shape[1]
    if model.include_node_effects:
        design = np.hstack([np.eye(n), feature_block])
        penalty = build_penalty(model.laplacian, tf.penalty, q, m)
        coef = np.concatenate([tf.node_effects, tf.linear_coef, tf.stump_coef])
    else:
        design = feature_block
        penalty = build_penalty(None, tf.penalty, q, m)
        coef = np.concatenate([tf.linear_coef, tf.stump_coef])
    gram = design.T @ design + penalty
    try:
        chol = scipy.linalg.cho_factor(gram, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"singular system for tree {t}: {exc}") from exc
    gram_inverse = scipy.linalg.cho_solve(chol, np.eye(gram.shape[0]))
    gram_inverse = (gram_inverse + gram_inverse.T) / 2.0

    fitted = design @ coef
    residuals = fitted - model.train_response
    u = gram_inverse @ design.T  # (d, n), column i = G w_i
    hat_diag = np.einsum("ik,ki->i", design, u)
    if model.include_node_effects:
        diag_g = np.diag(gram_inverse)[:n]
        if np.any(diag_g <= 0):
            raise NumericalError(f"non-positive Gram-inverse diagonal in tree {t}")
        cross = np.einsum("ik,ki->i", design, gram_inverse[:, :n])
        leverages = hat_diag - cross * cross / diag_g
    else:
        leverages = hat_diag
    flagged = 1.0 - leverages < LEVERAGE_GUARD
    return LooWorkspace(
        design=design,
        gram_inverse=gram_inverse,
        coef=coef,
        residuals=residuals,
        leverages=leverages,
        flagged=flagged,
        include_node_effects=model.include_node_effects,
        n_train=n,
    )


def loo_coefficient_matrix(ws: LooWorkspace) -> np.ndarray:
    """All leave-one-out solutions at once, one column per left-out sample.

    When node effects are present, entry ``i`` of column ``i`` (the removed
    node-effect coordinate) is zeroed; downstream consumers either drop it
    or rely on the zero to cancel in the cohesive extension.  Columns of
    flagged samples are meaningless and must be masked by the caller.
    """
    g = ws.gram_inverse
    w = ws.design
    n = ws.n_train
    one_minus_h = 1.0 - ws.leverages
    safe = np.where(ws.flagged, 1.0, one_minus_h)
    u = g @ w.T  # (d, n)
    if ws.include_node_effects:
        g_cols = g[:, :n]
        diag_g = np.diag(g)[:n]
        v = np.einsum("ik,ki->i", w, g_cols)  # w_i' G[:, i]
        c = u - g_cols * (v / diag_g)  # (B^(i))^{-1} w_i, columnwise
        effects = ws.coef[:n]
        out = (
            ws.coef[:, None]
            + c * (ws.residuals / safe)
            - g_cols * (effects / diag_g)
            - c * (effects * v / (diag_g * safe))
        )
        out[np.arange(n), np.arange(n)] = 0.0
    else:
        out = ws.coef[:, None] + u * (ws.residuals / safe)
    return out


def loo_coefficients(ws: LooWorkspace, i: int) -> np.ndarray:
    """Leave-one-out coefficients for sample ``i``.

    With node effects the removed coordinate is dropped, giving a vector of
    length ``(n - 1) + q + m``; without them the length is unchanged.
    """
    if ws.flagged[i]:
        raise NumericalError(f"sample {i} has leverage numerically at 1; cannot drop")
    column = loo_coefficient_matrix(ws)[:, i]
    if ws.include_node_effects:
        return np.delete(column, i)
    return column


@dataclass
class InfluenceReport:
    """Per-training-sample influence scores; rank 1 is most influential."""

    scores: np.ndarray
    ranks: np.ndarray
    flagged: np.ndarray

    def to_rows(self) -> list[tuple[int, float, int]]:
        return [
            (i, float(self.scores[i]), int(self.ranks[i])) for i in range(len(self.scores))
        ]


def _rank_descending(scores: np.ndarray) -> np.ndarray:
    order = np.lexsort((np.arange(len(scores)), -scores))
    ranks = np.empty(len(scores), dtype=np.intp)
    ranks[order] = np.arange(1, len(scores) + 1)
    return ranks


def sample_influence(
    model: NerfPlusModel,
    test_features: np.ndarray,
    combined_network: Network,
    train_indices: np.ndarray,
    node_ids: np.ndarray | None = None,
    tree_indices: list[int] | None = None,
) -> InfluenceReport:
    """Score each training sample by how much dropping it moves the test
    predictions.

    Trees, embeddings, the Laplacian, and penalties are frozen; per tree
    the leave-one-out coefficients come from the closed-form identity, the
    left-out node is removed from the network, and the remaining node
    effects are extended cohesively to the test nodes.  Samples whose
    leverage is numerically 1 get an infinite score (rank-1 region).
    """
    train_indices = np.asarray(train_indices, dtype=np.intp)
    train_mask = np.zeros(combined_network.n_nodes, dtype=bool)
    train_mask[train_indices] = True
    if node_ids is not None and np.any(train_mask[np.asarray(node_ids, dtype=np.intp)]):
        raise InputError("influence evaluation nodes must be outside the training set")
    blocks, node_ids = eval_blocks_for_nodes(
        model, test_features, combined_network, train_indices, node_ids
    )
    n = model.n_train
    n_test = blocks.n_rows
    if n_test == 0:
        raise InputError("influence needs at least one evaluation node")
    if tree_indices is None:
        tree_indices = list(range(model.n_trees))

    if model.include_node_effects:
        # extension from all training nodes to the evaluation nodes; a zeroed
        # coefficient at position i realizes the network with node i removed
        lap = build_laplacian(combined_network, model.config.laplacian_reg)
        new_nodes = np.flatnonzero(~train_mask)
        operator_new = extension_operator(lap, train_indices, new_nodes)
        new_pos = np.full(combined_network.n_nodes, -1, dtype=np.intp)
        new_pos[new_nodes] = np.arange(len(new_nodes))
        extend = operator_new[new_pos[node_ids]]  # (n_test, n)
    else:
        extend = None

    loo_preds = np.zeros((n_test, n))
    full_preds = np.zeros(n_test)
    flagged = np.zeros(n, dtype=bool)
    for t in tree_indices:
        ws = build_workspace(model, t)
        flagged |= ws.flagged
        nu = loo_coefficient_matrix(ws)
        f_test = np.hstack(
            [blocks.xtilde[:, model.linear_feature_indices], blocks.stump_columns[t]]
        )
        if ws.include_node_effects:
            loo_preds += extend @ nu[:n] + f_test @ nu[n:]
            full_preds += extend @ ws.coef[:n] + f_test @ ws.coef[n:]
        else:
            loo_preds += f_test @ nu
            full_preds += f_test @ ws.coef
    n_used = len(tree_indices)
    shift = loo_preds / n_used - (full_preds / n_used)[:, None]
    scores = np.mean(shift * shift, axis=0)
    scores[flagged] = np.inf
    return InfluenceReport(scores=scores, ranks=_rank_descending(scores), flagged=flagged)
