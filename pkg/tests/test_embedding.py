import numpy as np
import pytest
from scipy.cluster.vq import kmeans2

import nerfplus as nf
from nerfplus.exceptions import InputError


def path_graph(n):
    return nf.make_network(n, [(i, i + 1) for i in range(n - 1)])


def two_triangles():
    return nf.make_network(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])


class TestSpectralEmbedding:
    def test_path_graph_spectrum(self):
        # 3-node path Laplacian has characteristic roots 0, 1, 3
        lap = nf.build_laplacian(path_graph(3), reg=0.0)
        eigs = np.linalg.eigvalsh(lap.matrix)
        np.testing.assert_allclose(eigs, [0.0, 1.0, 3.0], atol=1e-10)
        emb = nf.spectral_embedding(lap, dim=2)
        np.testing.assert_allclose(emb.eigenvalues, [1.0, 3.0], atol=1e-10)

    def test_disconnected_components_separated(self):
        # the nullspace is spanned by the two component indicators, so the
        # first two eigenvectors live in that span and the retained one is
        # constant per triangle
        lap = nf.build_laplacian(two_triangles(), reg=0.0)
        emb = nf.spectral_embedding(lap, dim=1)
        assert emb.eigenvalues[0] == pytest.approx(0.0, abs=1e-10)
        coords = emb.coordinates[:, 0]
        assert np.ptp(coords[:3]) < 1e-8 and np.ptp(coords[3:]) < 1e-8
        # orthogonality to the skipped constant-per-component vector forces
        # the two components apart
        assert abs(coords[0] - coords[3]) > 1e-6

    def test_regularization_shifts_eigenvalues_only(self):
        net = nf.gen_sbm(20, 2, 0.6, 0.2, np.random.default_rng(0))
        base = nf.spectral_embedding(nf.build_laplacian(net, 0.0), dim=3)
        shifted = nf.spectral_embedding(nf.build_laplacian(net, 0.05), dim=3)
        np.testing.assert_allclose(
            shifted.eigenvalues, base.eigenvalues + 0.05, atol=1e-10
        )
        # same subspace column by column (no degeneracies in this draw)
        for j in range(3):
            dot = abs(base.coordinates[:, j] @ shifted.coordinates[:, j])
            assert dot == pytest.approx(1.0, abs=1e-8)

    def test_columns_orthonormal(self):
        net = nf.gen_sbm(30, 3, 0.6, 0.1, np.random.default_rng(1))
        emb = nf.spectral_embedding(nf.build_laplacian(net, 0.05), dim=4)
        gram = emb.coordinates.T @ emb.coordinates
        np.testing.assert_allclose(gram, np.eye(4), atol=1e-8)

    def test_eigenvector_residuals(self):
        net = nf.gen_sbm(25, 2, 0.5, 0.2, np.random.default_rng(2))
        lap = nf.build_laplacian(net, 0.05)
        emb = nf.spectral_embedding(lap, dim=3)
        for j in range(3):
            v = emb.coordinates[:, j]
            resid = lap.matrix @ v - emb.eigenvalues[j] * v
            assert np.linalg.norm(resid) <= 1e-6 * np.linalg.norm(v)

    def test_dim_bounds(self):
        lap = nf.build_laplacian(path_graph(3), reg=0.0)
        with pytest.raises(InputError):
            nf.spectral_embedding(lap, dim=0)
        with pytest.raises(InputError):
            nf.spectral_embedding(lap, dim=3)

    def test_recovers_block_structure(self):
        # k-means on the embedding recovers the three planted blocks
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            net = nf.gen_sbm(300, 3, 0.2, 0.02, rng)
            lap = nf.build_laplacian(net, 0.05)
            emb = nf.spectral_embedding(lap, dim=2)
            labels = np.repeat([0, 1, 2], 100)
            _, assign = kmeans2(emb.coordinates, 3, minit="++", seed=seed)
            best = 0
            from itertools import permutations

            for perm in permutations(range(3)):
                mapped = np.array(perm)[assign]
                best = max(best, float(np.mean(mapped == labels)))
            if best >= 0.9:
                hits += 1
        assert hits >= 19  # >= 95% of 20 seeds


class TestExtendEmbedding:
    def test_single_neighbor_copies_coordinate(self):
        net = nf.make_network(2, [(0, 1)])
        lap = nf.build_laplacian(net, reg=0.0)
        emb = nf.SpectralEmbedding(
            coordinates=np.array([[0.7]]), eigenvalues=np.array([0.0]), dim=1
        )
        out = nf.extend_embedding(emb, lap, train_indices=np.array([0]))
        np.testing.assert_allclose(out, [[0.7]])

    def test_two_neighbors_average(self):
        net = nf.make_network(3, [(0, 2), (1, 2)])
        lap = nf.build_laplacian(net, reg=0.0)
        emb = nf.SpectralEmbedding(
            coordinates=np.array([[1.0], [3.0]]), eigenvalues=np.array([0.0]), dim=1
        )
        out = nf.extend_embedding(emb, lap, train_indices=np.array([0, 1]))
        np.testing.assert_allclose(out, [[2.0]])

    def test_chain_propagates_constant(self):
        # train(0) - test(1) - test(2): both test coordinates equal the
        # training value (solve the 2x2 cohesion system)
        net = path_graph(3)
        lap = nf.build_laplacian(net, reg=0.0)
        emb = nf.SpectralEmbedding(
            coordinates=np.array([[0.4]]), eigenvalues=np.array([0.0]), dim=1
        )
        out = nf.extend_embedding(emb, lap, train_indices=np.array([0]))
        np.testing.assert_allclose(out, [[0.4], [0.4]], atol=1e-12)

    def test_linear_in_training_coordinates(self):
        rng = np.random.default_rng(3)
        net = nf.gen_sbm(30, 2, 0.5, 0.2, rng)
        lap = nf.build_laplacian(net, 0.05)
        train = np.arange(20)
        za = rng.standard_normal((20, 2))
        zb = rng.standard_normal((20, 2))
        ea = nf.extend_embedding(
            nf.SpectralEmbedding(za, np.zeros(2), 2), lap, train
        )
        eb = nf.extend_embedding(
            nf.SpectralEmbedding(zb, np.zeros(2), 2), lap, train
        )
        eab = nf.extend_embedding(
            nf.SpectralEmbedding(2.0 * za - 3.0 * zb, np.zeros(2), 2), lap, train
        )
        np.testing.assert_allclose(eab, 2.0 * ea - 3.0 * eb, atol=1e-9)
