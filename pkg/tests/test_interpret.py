import numpy as np
import pytest

import nerfplus as nf
from nerfplus.exceptions import InputError
from nerfplus.forest import stump_features
from nerfplus.interpret import (
    PERMUTATION_STREAM,
    r_squared,
    rmse,
    squared_correlation,
)
from nerfplus.model import training_eval_blocks

from conftest import random_problem, small_config


@pytest.fixture(scope="module")
def model_and_data():
    dataset, network = random_problem(seed=21, n=40, p=4)
    model = nf.fit(dataset, network, small_config(seed=6, n_trees=4))
    blocks = training_eval_blocks(model)
    response = dataset.response
    return model, blocks, response


def brute_force_permuted_predictions(model, blocks, target, perm):
    """Oracle: physically shuffle the target group's columns in every tree's
    transformed matrix and re-run the per-tree linear predictions."""
    p = model.n_features
    n = blocks.n_rows
    total = np.zeros(n)
    for t, tree in enumerate(model.trees):
        tf = model.tree_fits[t]
        effect = blocks.node_effect_columns[:, t].copy()
        linear = blocks.xtilde[:, model.linear_feature_indices].copy()
        stumps = blocks.stump_columns[t].copy()

        def in_target(col):
            if isinstance(target, int):
                return col == target
            if target == "cohesion":
                return False
            is_embed = col >= p
            if target == "embedding":
                return is_embed
            if target == "network":
                return is_embed
            raise AssertionError(target)

        for j, col in enumerate(model.linear_feature_indices):
            if in_target(int(col)):
                linear[:, j] = linear[perm, j]
        for j, col in enumerate(tree.split_feature):
            if in_target(int(col)):
                stumps[:, j] = stumps[perm, j]
        if target in ("cohesion", "network"):
            effect = effect[perm]
        total += effect + linear @ tf.linear_coef + stumps @ tf.stump_coef
    return total / model.n_trees + model.response_mean


def brute_force_partial_predictions(model, blocks, target, t):
    """Oracle: mean-impute every column outside the target group, tree t."""
    p = model.n_features
    tf = model.tree_fits[t]
    tree = model.trees[t]
    train_linear = model.train_xtilde[:, model.linear_feature_indices]
    train_stumps = stump_features(tree, model.train_xtilde)

    def in_target(col):
        if isinstance(target, int):
            return col == target
        if target == "cohesion":
            return False
        return col >= p and target in ("embedding", "network")

    linear = blocks.xtilde[:, model.linear_feature_indices].copy()
    stumps = blocks.stump_columns[t].copy()
    for j, col in enumerate(model.linear_feature_indices):
        if not in_target(int(col)):
            linear[:, j] = train_linear[:, j].mean()
    for j, col in enumerate(tree.split_feature):
        if not in_target(int(col)):
            stumps[:, j] = train_stumps[:, j].mean()
    if target in ("cohesion", "network"):
        effect = blocks.node_effect_columns[:, t]
    else:
        effect = np.full(blocks.n_rows, tf.node_effects.mean())
    return effect + linear @ tf.linear_coef + stumps @ tf.stump_coef + model.response_mean


class TestMetrics:
    def test_rmse(self):
        assert rmse(np.array([0.0, 2.0]), np.array([0.0, 0.0])) == pytest.approx(np.sqrt(2))

    def test_r_squared_perfect(self):
        y = np.array([1.0, 2.0, 3.0])
        assert r_squared(y, y) == 1.0

    def test_squared_correlation_constant_is_zero(self):
        y = np.array([1.0, 2.0, 3.0])
        assert squared_correlation(y, np.full(3, 9.9)) == 0.0

    def test_squared_correlation_shift_invariant(self):
        rng = np.random.default_rng(0)
        y, pred = rng.standard_normal(20), rng.standard_normal(20)
        a = squared_correlation(y, pred)
        b = squared_correlation(y, pred + 123.0)
        assert a == pytest.approx(b, abs=1e-12)


class TestPermutationImportance:
    def test_matches_brute_force_shuffle(self, model_and_data):
        model, blocks, response = model_and_data
        n = blocks.n_rows
        for target in [0, 2, "network", "cohesion", "embedding"]:
            score = nf.permutation_importance(
                model, blocks, response, target, n_permutations=3, metric="rmse", seed=42
            )
            draws = []
            for b in range(3):
                perm = np.random.default_rng([42, PERMUTATION_STREAM, b]).permutation(n)
                permuted = brute_force_permuted_predictions(model, blocks, target, perm)
                base = nf.decompose(model).predictions
                draws.append(rmse(response, permuted) - rmse(response, base))
            assert score == pytest.approx(np.mean(draws), abs=1e-10)

    def test_structurally_empty_group_scores_exactly_zero(self):
        rng = np.random.default_rng(22)
        n = 30
        features = np.hstack([rng.standard_normal((n, 2)), np.zeros((n, 1))])
        dataset = nf.Dataset(features, features[:, 0] + 0.2 * rng.standard_normal(n),
                             np.zeros(3), 0.0, False)
        network = nf.gen_sbm(n, 2, 0.5, 0.3, rng)
        model = nf.fit(dataset, network, small_config(seed=23, n_trees=3))
        blocks = training_eval_blocks(model)
        score = nf.permutation_importance(
            model, blocks, dataset.response, 2, n_permutations=10, seed=3
        )
        assert abs(score) <= 1e-12

    def test_identity_permutation_scores_zero(self, model_and_data):
        # forcing the identity draw leaves predictions untouched
        model, blocks, response = model_and_data
        dec = nf.decompose(model)
        pred = dec.predictions
        contrib = dec.feature_parts[:, 0]
        identity = np.arange(blocks.n_rows)
        permuted = pred - contrib + contrib[identity]
        assert rmse(response, permuted) - rmse(response, pred) == 0.0

    def test_requires_at_least_one_draw(self, model_and_data):
        model, blocks, response = model_and_data
        with pytest.raises(InputError, match="n_permutations"):
            nf.permutation_importance(model, blocks, response, 0, n_permutations=0)

    def test_report_consistent_with_single_target_calls(self, model_and_data):
        model, blocks, response = model_and_data
        report = nf.permutation_importance_report(
            model, blocks, response, n_permutations=5, seed=7
        )
        single = nf.permutation_importance(
            model, blocks, response, "network", n_permutations=5, seed=7
        )
        assert report.score_of("network") == pytest.approx(single, abs=1e-12)
        doc = report.to_json()
        assert doc["method"] == "permutation"
        assert len(doc["targets"]) == model.n_features + 3

    def test_r2_metric_sign_flip(self, model_and_data):
        model, blocks, response = model_and_data
        score = nf.permutation_importance(
            model, blocks, response, "network", n_permutations=5, metric="r2", seed=8
        )
        # permuting a fitted group should not improve the fit
        assert score >= 0.0


class TestMdiPlus:
    def test_matches_brute_force_partial_design(self, model_and_data):
        model, blocks, response = model_and_data
        for target in [0, 1, "network", "cohesion", "embedding"]:
            fast = nf.mdi_plus(model, blocks, response, target)
            per_tree = [
                squared_correlation(
                    response, brute_force_partial_predictions(model, blocks, target, t)
                )
                for t in range(model.n_trees)
            ]
            assert fast == pytest.approx(np.mean(per_tree), abs=1e-10)

    def test_unused_feature_scores_zero(self):
        rng = np.random.default_rng(24)
        n = 30
        features = np.hstack([rng.standard_normal((n, 2)), np.zeros((n, 1))])
        dataset = nf.Dataset(features, features[:, 0] + 0.2 * rng.standard_normal(n),
                             np.zeros(3), 0.0, False)
        network = nf.gen_sbm(n, 2, 0.5, 0.3, rng)
        model = nf.fit(dataset, network, small_config(seed=25, n_trees=3))
        blocks = training_eval_blocks(model)
        # partial predictions for the constant feature are constant -> 0
        assert nf.mdi_plus(model, blocks, dataset.response, 2) == 0.0

    def test_single_tree_all_signal_in_target_equals_full_r2(self):
        # without node effects and with every column involving feature 0,
        # the partial design equals the full design
        rng = np.random.default_rng(26)
        n = 40
        features = rng.standard_normal((n, 1))
        y = np.sin(features[:, 0] * 2) + 0.1 * rng.standard_normal(n)
        dataset = nf.Dataset(features, y, np.zeros(1), 0.0, False)
        network = nf.gen_sbm(n, 2, 0.5, 0.3, rng)
        config = nf.NerfPlusConfig(
            n_trees=1, embedding_dim=0, min_leaf=4, trees_to_tune=0,
            penalty_grid=nf.PenaltyGrid(cohesion=(0.0,), linear=(0.5,), stump=(0.5,)),
            seed=27,
        )
        model = nf.fit(dataset, network, config)
        blocks = training_eval_blocks(model)
        score = nf.mdi_plus(model, blocks, dataset.response, 0)
        full = squared_correlation(dataset.response, model.fitted_values())
        assert score == pytest.approx(full, abs=1e-12)


class TestLocalImportance:
    def test_training_average_is_zero(self, model_and_data):
        model, blocks, _ = model_and_data
        report = nf.local_importance_report(model, blocks)
        np.testing.assert_allclose(
            report.per_sample_per_feature.mean(axis=0), 0.0, atol=1e-10
        )
        np.testing.assert_allclose(report.per_sample_network.mean(axis=0), 0.0, atol=1e-10)

    def test_additivity(self, model_and_data):
        model, blocks, _ = model_and_data
        report = nf.local_importance_report(model, blocks)
        total = report.per_sample_per_feature.sum(axis=1) + report.per_sample_network[:, 0]
        pred = model.fitted_values()
        np.testing.assert_allclose(total, pred - pred.mean(), atol=1e-10)

    def test_additivity_on_test_rows(self, fitted_small_model):
        dataset, network, model = fitted_small_model
        n = dataset.n_samples
        combined = nf.make_network(
            n + 3, list(network.edges) + [(0, n, 1.0), (4, n + 1, 1.0), (9, n + 2, 1.0)]
        )
        rng = np.random.default_rng(28)
        feats = rng.standard_normal((3, dataset.n_features))
        blocks, _ = nf.eval_blocks_for_nodes(
            model, feats, combined, train_indices=np.arange(n)
        )
        report = nf.local_importance_report(model, blocks)
        dec = nf.decompose(model, feats, combined, train_indices=np.arange(n))
        train_pred = model.fitted_values()
        total = report.per_sample_per_feature.sum(axis=1) + report.per_sample_network[:, 0]
        np.testing.assert_allclose(
            total, dec.predictions - train_pred.mean(), atol=1e-10
        )

    def test_network_columns_decompose(self, model_and_data):
        model, blocks, _ = model_and_data
        report = nf.local_importance_report(model, blocks)
        np.testing.assert_allclose(
            report.per_sample_network[:, 0],
            report.per_sample_network[:, 1] + report.per_sample_network[:, 2],
            atol=1e-12,
        )

    def test_unused_feature_is_zero_everywhere(self):
        rng = np.random.default_rng(29)
        n = 30
        features = np.hstack([rng.standard_normal((n, 2)), np.zeros((n, 1))])
        dataset = nf.Dataset(features, features[:, 0] + 0.2 * rng.standard_normal(n),
                             np.zeros(3), 0.0, False)
        network = nf.gen_sbm(n, 2, 0.5, 0.3, rng)
        model = nf.fit(dataset, network, small_config(seed=30, n_trees=3))
        scores = nf.local_importance(model, training_eval_blocks(model), 2)
        np.testing.assert_array_equal(scores, 0.0)

    def test_single_target_matches_report(self, model_and_data):
        model, blocks, _ = model_and_data
        report = nf.local_importance_report(model, blocks)
        np.testing.assert_array_equal(
            nf.local_importance(model, blocks, 1), report.per_sample_per_feature[:, 1]
        )
        np.testing.assert_array_equal(
            nf.local_importance(model, blocks, "embedding"), report.per_sample_network[:, 2]
        )
