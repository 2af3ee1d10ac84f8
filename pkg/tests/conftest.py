import numpy as np
import pytest

import nerfplus as nf


def random_problem(seed, n=30, p=3, blocks=2, p_in=0.5, p_out=0.15):
    """Small dataset + network with a mixed linear/nonlinear signal."""
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((n, p))
    response = (
        features[:, 0]
        - 0.5 * features[:, 1] ** 2
        + 0.3 * rng.standard_normal(n)
    )
    network = nf.gen_sbm(n, blocks, p_in, p_out, rng)
    dataset = nf.Dataset(
        features=features,
        response=response,
        column_means=np.zeros(p),
        response_mean=0.0,
        is_centered=False,
    )
    return dataset, network


def small_config(seed=0, n_trees=4, **kwargs):
    defaults = dict(
        n_trees=n_trees,
        embedding_dim=1,
        min_leaf=3,
        trees_to_tune=2,
        penalty_grid=nf.PenaltyGrid(
            cohesion=(0.1, 10.0), linear=(0.1, 10.0), stump=(0.1, 10.0)
        ),
        seed=seed,
    )
    defaults.update(kwargs)
    return nf.NerfPlusConfig(**defaults)


@pytest.fixture(scope="session")
def fitted_small_model():
    dataset, network = random_problem(seed=11, n=40, p=4)
    model = nf.fit(dataset, network, small_config(seed=5, n_trees=5))
    return dataset, network, model
