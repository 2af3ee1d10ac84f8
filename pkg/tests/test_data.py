import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import nerfplus as nf
from nerfplus.exceptions import InputError


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestLoadDataset:
    def test_round_trip(self, tmp_path):
        fpath = write(tmp_path, "x.csv", "a,b\n1,2\n3,4\n5,6\n7,8\n")
        ypath = write(tmp_path, "y.csv", "1\n2\n3\n4\n")
        ds = nf.load_dataset(fpath, ypath)
        assert ds.n_samples == 4 and ds.n_features == 2
        assert ds.feature_names == ("a", "b")
        assert not ds.is_centered
        np.testing.assert_array_equal(ds.response, [1, 2, 3, 4])

    def test_dimension_mismatch(self, tmp_path):
        fpath = write(tmp_path, "x.csv", "a,b\n1,2\n3,4\n5,6\n7,8\n")
        ypath = write(tmp_path, "y.csv", "1\n2\n3\n")
        with pytest.raises(InputError, match="dimension mismatch"):
            nf.load_dataset(fpath, ypath)

    def test_nan_cell_rejected(self, tmp_path):
        fpath = write(tmp_path, "x.csv", "a,b\n1,2\nNaN,4\n5,6\n")
        ypath = write(tmp_path, "y.csv", "1\n2\n3\n")
        with pytest.raises(InputError, match="non-finite"):
            nf.load_dataset(fpath, ypath)

    def test_non_numeric_cell(self, tmp_path):
        fpath = write(tmp_path, "x.csv", "a,b\n1,2\nfoo,4\n5,6\n")
        ypath = write(tmp_path, "y.csv", "1\n2\n3\n")
        with pytest.raises(InputError, match="non-numeric"):
            nf.load_dataset(fpath, ypath)

    def test_empty_file(self, tmp_path):
        fpath = write(tmp_path, "x.csv", "")
        ypath = write(tmp_path, "y.csv", "1\n")
        with pytest.raises(InputError, match="empty"):
            nf.load_dataset(fpath, ypath)


class TestCenter:
    def test_column_shift(self):
        ds = nf.Dataset(
            features=np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]),
            response=np.array([1.0, 2.0, 3.0]),
            column_means=np.zeros(2),
            response_mean=0.0,
            is_centered=False,
        )
        out = nf.center(ds)
        np.testing.assert_allclose(out.features[:, 0], [-1, 0, 1])
        assert out.column_means[0] == 2.0

    def test_zero_column_unchanged(self):
        ds = nf.Dataset(
            features=np.array([[0.0, 1.0], [0.0, 2.0], [0.0, 3.0]]),
            response=np.array([0.0, 1.0, 2.0]),
            column_means=np.zeros(2),
            response_mean=0.0,
            is_centered=False,
        )
        out = nf.center(ds)
        np.testing.assert_array_equal(out.features[:, 0], [0, 0, 0])
        assert out.column_means[0] == 0.0

    def test_response_mean(self):
        ds = nf.Dataset(
            features=np.array([[1.0], [2.0]]),
            response=np.array([2.0, 4.0]),
            column_means=np.zeros(1),
            response_mean=0.0,
            is_centered=False,
        )
        out = nf.center(ds)
        np.testing.assert_allclose(out.response, [-1, 1])
        assert out.response_mean == 3.0

    def test_double_centering_rejected(self):
        ds = nf.Dataset(
            features=np.array([[1.0], [2.0]]),
            response=np.array([2.0, 4.0]),
            column_means=np.zeros(1),
            response_mean=0.0,
            is_centered=False,
        )
        with pytest.raises(InputError, match="already centered"):
            nf.center(nf.center(ds))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_uncentering_is_identity(self, seed):
        rng = np.random.default_rng(seed)
        n, p = rng.integers(2, 20), rng.integers(1, 5)
        raw = nf.Dataset(
            features=rng.normal(scale=10.0, size=(n, p)),
            response=rng.normal(scale=10.0, size=n),
            column_means=np.zeros(p),
            response_mean=0.0,
            is_centered=False,
        )
        out = nf.center(raw)
        assert np.abs(out.features.mean(axis=0)).max() < 1e-10
        assert abs(out.response.mean()) < 1e-10
        np.testing.assert_allclose(
            out.response + out.response_mean, raw.response, atol=1e-12
        )
        np.testing.assert_allclose(
            out.features + out.column_means, raw.features, atol=1e-12
        )


class TestLoadNetwork:
    def test_default_weight(self, tmp_path):
        path = write(tmp_path, "e.tsv", "0 1\n1 2\n")
        net = nf.load_network(path, 3)
        assert net.edges == ((0, 1, 1.0), (1, 2, 1.0))

    def test_self_loop(self, tmp_path):
        path = write(tmp_path, "e.tsv", "0 0\n")
        with pytest.raises(InputError, match="self-loop"):
            nf.load_network(path, 2)

    def test_duplicate_unordered(self, tmp_path):
        path = write(tmp_path, "e.tsv", "0 1 0.5\n1 0 0.5\n")
        with pytest.raises(InputError, match="duplicate"):
            nf.load_network(path, 2)

    def test_out_of_range(self, tmp_path):
        path = write(tmp_path, "e.tsv", "0 5\n")
        with pytest.raises(InputError, match="out of range"):
            nf.load_network(path, 3)

    def test_non_positive_weight(self, tmp_path):
        path = write(tmp_path, "e.tsv", "0 1 0\n")
        with pytest.raises(InputError, match="non-positive"):
            nf.load_network(path, 2)


class TestBuildLaplacian:
    def test_single_edge(self):
        net = nf.make_network(2, [(0, 1, 1.0)])
        lap = nf.build_laplacian(net, reg=0.0)
        np.testing.assert_allclose(lap.matrix, [[1, -1], [-1, 1]])

    def test_regularized_single_edge(self):
        net = nf.make_network(2, [(0, 1, 1.0)])
        lap = nf.build_laplacian(net, reg=0.05)
        np.testing.assert_allclose(lap.matrix, [[1.05, -1], [-1, 1.05]])

    def test_empty_network(self):
        net = nf.Network(n_nodes=2, edges=())
        lap = nf.build_laplacian(net, reg=0.0)
        np.testing.assert_array_equal(lap.matrix, np.zeros((2, 2)))

    def test_row_sums_equal_reg(self):
        rng = np.random.default_rng(4)
        net = nf.gen_sbm(25, 2, 0.5, 0.2, rng)
        for reg in (0.0, 0.05):
            lap = nf.build_laplacian(net, reg=reg)
            np.testing.assert_allclose(lap.matrix.sum(axis=1), reg, atol=1e-10)

    def test_positive_semidefinite(self):
        rng = np.random.default_rng(5)
        net = nf.gen_sbm(20, 2, 0.5, 0.2, rng)
        eigs = np.linalg.eigvalsh(nf.build_laplacian(net, 0.0).matrix)
        assert eigs.min() > -1e-10
        eigs_reg = np.linalg.eigvalsh(nf.build_laplacian(net, 0.05).matrix)
        assert eigs_reg.min() > 0.05 - 1e-10

    def test_quadratic_form_identity(self):
        # v' L v must equal the edge sum of w * (v_i - v_j)^2
        rng = np.random.default_rng(6)
        for trial in range(5):
            n = int(rng.integers(5, 30))
            net = nf.gen_sbm(n, 2, 0.6, 0.3, rng)
            weighted = nf.make_network(
                n, [(i, j, float(rng.uniform(0.5, 2.0))) for i, j, _ in net.edges]
            )
            lap = nf.build_laplacian(weighted, reg=0.0)
            for _ in range(20):
                v = rng.standard_normal(n)
                direct = float(v @ lap.matrix @ v)
                assert abs(direct - nf.quadratic_form(weighted, v)) < 1e-10


class TestNetwork:
    def test_subgraph_relabels(self):
        net = nf.make_network(4, [(0, 1), (1, 2), (2, 3)])
        sub = net.subgraph(np.array([1, 2, 3]))
        assert sub.n_nodes == 3
        assert sub.edges == ((0, 1, 1.0), (1, 2, 1.0))

    def test_adjacency_symmetric(self):
        net = nf.make_network(3, [(0, 2, 2.5)])
        a = net.adjacency()
        assert a[0, 2] == a[2, 0] == 2.5
        np.testing.assert_array_equal(net.degrees(), [2.5, 0.0, 2.5])
