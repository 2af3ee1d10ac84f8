"""Data model and I/O: feature matrices, responses, networks, and Laplacians.

Features and responses are read from comma-delimited text (header row for
features, a single bare column for the response).  Networks are read from
whitespace-separated edge lists ``src dst [weight]`` with 0-based node
indices.  All numerics are parsed as 64-bit floats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError

CENTERING_TOL = 1e-10


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """A feature matrix with its response, plus centering bookkeeping.

    ``column_means`` and ``response_mean`` hold the shifts applied by
    :func:`center` so that predictions can be mapped back to the original
    response scale.  They are zero for an uncentered dataset.
    """

    features: np.ndarray
    response: np.ndarray
    column_means: np.ndarray
    response_mean: float
    is_centered: bool
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        features = _readonly(np.asarray(self.features, dtype=np.float64))
        response = _readonly(np.asarray(self.response, dtype=np.float64))
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "response", response)
        object.__setattr__(
            self, "column_means", _readonly(np.asarray(self.column_means, dtype=np.float64))
        )
        if features.ndim != 2:
            raise InputError("features must be a 2-d matrix")
        n, p = features.shape
        if n < 2 or p < 1:
            raise InputError(f"need at least 2 rows and 1 column, got {n}x{p}")
        if response.shape != (n,):
            raise InputError(
                f"response length {response.shape} does not match {n} feature rows"
            )
        if not np.all(np.isfinite(features)) or not np.all(np.isfinite(response)):
            raise InputError("non-finite entries in features or response")
        if self.column_means.shape != (p,):
            raise InputError("column_means length must equal the number of columns")
        if not self.feature_names:
            object.__setattr__(
                self, "feature_names", tuple(f"x{j + 1}" for j in range(p))
            )
        elif len(self.feature_names) != p:
            raise InputError("feature_names length must equal the number of columns")
        if self.is_centered:
            if np.max(np.abs(features.mean(axis=0))) > CENTERING_TOL:
                raise InputError("dataset flagged centered but column means are nonzero")
            if abs(response.mean()) > CENTERING_TOL:
                raise InputError("dataset flagged centered but response mean is nonzero")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def _parse_numeric_row(line: str, path: str, lineno: int, sep: str = ",") -> list[float]:
    cells = [c.strip() for c in line.split(sep)]
    values = []
    for cell in cells:
        try:
            v = float(cell)
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric cell {cell!r}") from None
        if not np.isfinite(v):
            raise InputError(f"{path}:{lineno}: non-finite value {cell!r}")
        values.append(v)
    return values


def load_dataset(features_path: str, response_path: str) -> Dataset:
    """Read an uncentered dataset from a features CSV and a response column.

    The features file must have a header row naming each column; the
    response file is a single numeric column with one row per sample.
    """
    with open(features_path) as fh:
        lines = [ln for ln in (raw.strip() for raw in fh) if ln]
    if len(lines) < 2:
        raise InputError(f"{features_path}: empty or header-only features file")
    names = tuple(c.strip() for c in lines[0].split(","))
    rows = [_parse_numeric_row(ln, features_path, i + 2) for i, ln in enumerate(lines[1:])]
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths != {len(names)}:
        raise InputError(f"{features_path}: ragged rows or header/row width mismatch")
    features = np.array(rows, dtype=np.float64)

    with open(response_path) as fh:
        ylines = [ln for ln in (raw.strip() for raw in fh) if ln]
    if not ylines:
        raise InputError(f"{response_path}: empty response file")
    response = np.array(
        [_parse_numeric_row(ln, response_path, i + 1)[0] for i, ln in enumerate(ylines)]
    )
    if response.shape[0] != features.shape[0]:
        raise InputError(
            f"dimension mismatch: {features.shape[0]} feature rows vs "
            f"{response.shape[0]} response rows"
        )
    return Dataset(
        features=features,
        response=response,
        column_means=np.zeros(features.shape[1]),
        response_mean=0.0,
        is_centered=False,
        feature_names=names,
    )


def center(dataset: Dataset) -> Dataset:
    """Shift every feature column and the response to mean zero.

    The removed means are stored on the returned dataset for prediction-time
    reuse.  Centering an already-centered dataset is an error.
    """
    if dataset.is_centered:
        raise InputError("dataset is already centered")
    column_means = dataset.features.mean(axis=0)
    response_mean = float(dataset.response.mean())
    return Dataset(
        features=dataset.features - column_means,
        response=dataset.response - response_mean,
        column_means=column_means,
        response_mean=response_mean,
        is_centered=True,
        feature_names=dataset.feature_names,
    )


@dataclass(frozen=True)
class Network:
    """An undirected weighted graph on nodes ``0..n_nodes-1``.

    Edges are stored once per unordered pair with ``i < j`` and strictly
    positive weight; self-loops are rejected.
    """

    n_nodes: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.n_nodes < 1:
            raise InputError("network needs at least one node")
        seen = set()
        for i, j, w in self.edges:
            if i == j:
                raise InputError(f"self-loop at node {i}")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise InputError(f"edge ({i},{j}) out of range for {self.n_nodes} nodes")
            if i > j:
                raise InputError(f"edge ({i},{j}) must be stored with i < j")
            if w <= 0 or not np.isfinite(w):
                raise InputError(f"edge ({i},{j}) has non-positive weight {w}")
            if (i, j) in seen:
                raise InputError(f"duplicate edge ({i},{j})")
            seen.add((i, j))

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes))
        for i, j, w in self.edges:
            a[i, j] = w
            a[j, i] = w
        return a

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)

    def subgraph(self, nodes: np.ndarray) -> "Network":
        """Induced subgraph with nodes relabeled by position in ``nodes``."""
        nodes = np.asarray(nodes)
        pos = {int(v): k for k, v in enumerate(nodes)}
        kept = []
        for i, j, w in self.edges:
            if i in pos and j in pos:
                a, b = pos[i], pos[j]
                kept.append((min(a, b), max(a, b), w))
        kept.sort()
        return Network(n_nodes=len(nodes), edges=tuple(kept))


def make_network(n_nodes: int, edges) -> Network:
    """Build a :class:`Network` from an iterable of ``(i, j[, weight])``."""
    normalized = []
    for e in edges:
        if len(e) == 2:
            i, j, w = int(e[0]), int(e[1]), 1.0
        else:
            i, j, w = int(e[0]), int(e[1]), float(e[2])
        if i > j:
            i, j = j, i
        normalized.append((i, j, w))
    normalized.sort()
    return Network(n_nodes=n_nodes, edges=tuple(normalized))


def load_network(edge_path: str, n_nodes: int) -> Network:
    """Read a whitespace-separated edge list ``src dst [weight]``."""
    edges = []
    with open(edge_path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise InputError(f"{edge_path}:{lineno}: expected 'src dst [weight]'")
            try:
                i, j = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise InputError(f"{edge_path}:{lineno}: non-numeric entry") from None
            edges.append((i, j, w))
    return make_network(n_nodes, edges)


@dataclass(frozen=True)
class Laplacian:
    """Dense regularized graph Laplacian ``D - A + reg * I``.

    ``reg > 0`` makes the matrix strictly positive definite, which the
    closed-form solvers and out-of-sample extensions rely on.
    """

    n_nodes: int
    matrix: np.ndarray
    reg: float

    def __post_init__(self):
        object.__setattr__(self, "matrix", _readonly(np.asarray(self.matrix, dtype=np.float64)))
        if self.matrix.shape != (self.n_nodes, self.n_nodes):
            raise InputError("laplacian matrix shape does not match n_nodes")
        if self.reg < 0:
            raise InputError("laplacian regularization must be non-negative")
        if np.max(np.abs(self.matrix - self.matrix.T)) > 1e-12:
            raise InputError("laplacian matrix is not symmetric")

    def submatrix(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return self.matrix[np.ix_(rows, cols)]


def build_laplacian(network: Network, reg: float = 0.05) -> Laplacian:
    """Form the dense regularized Laplacian of a network."""
    if reg < 0:
        raise InputError("laplacian regularization must be non-negative")
    a = network.adjacency()
    lap = np.diag(a.sum(axis=1)) - a
    if reg:
        lap[np.diag_indices_from(lap)] += reg
    lap = (lap + lap.T) / 2.0
    return Laplacian(n_nodes=network.n_nodes, matrix=lap, reg=float(reg))


def quadratic_form(network: Network, values: np.ndarray) -> float:
    """Edge-sum form of the cohesion penalty: ``sum_e w_ij (v_i - v_j)^2``.

    Equals ``v' L v`` for the unregularized Laplacian; used as an
    independent check of :func:`build_laplacian`.
    """
    values = np.asarray(values, dtype=np.float64)
    return float(sum(w * (values[i] - values[j]) ** 2 for i, j, w in network.edges))
