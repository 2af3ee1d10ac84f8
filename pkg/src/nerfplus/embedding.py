"""Laplacian spectral embedding and its out-of-sample extension.

The embedding takes the eigenvectors of the (regularized, unnormalized)
Laplacian with the smallest eigenvalues, skipping the first near-constant
one.  New nodes are embedded coordinate-by-coordinate with the same
maximally cohesive extension used for node effects, so embeddings and node
effects extend through one shared operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Laplacian
from .exceptions import InputError
from .solver import LaplacianEigs, extension_operator


@dataclass(frozen=True)
class SpectralEmbedding:
    """Orthonormal low-frequency eigenvector coordinates of a Laplacian."""

    coordinates: np.ndarray
    eigenvalues: np.ndarray
    dim: int
    skip_trivial: bool = True

    def __post_init__(self):
        if self.coordinates.shape[1] != self.dim or len(self.eigenvalues) != self.dim:
            raise InputError("embedding dimension mismatch")


def _canonical_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    out = vecs.copy()
    for j in range(out.shape[1]):
        pivot = int(np.argmax(np.abs(out[:, j])))
        if out[pivot, j] < 0:
            out[:, j] = -out[:, j]
    return out


def spectral_embedding(
    laplacian: Laplacian, dim: int, eigs: LaplacianEigs | None = None
) -> SpectralEmbedding:
    """Embed nodes with the ``dim`` lowest nontrivial Laplacian eigenvectors.

    A precomputed eigendecomposition may be passed to share work with the
    solver.  Within a repeated eigenvalue the eigenvectors are only defined
    up to rotation; a deterministic sign convention is applied per column.
    """
    n = laplacian.n_nodes
    if not (1 <= dim < n):
        raise InputError(f"embedding dim must satisfy 1 <= dim < {n}")
    if eigs is None:
        eigs = LaplacianEigs.of(laplacian.matrix)
    start = 1
    coords = _canonical_signs(eigs.eigenvectors[:, start : start + dim])
    return SpectralEmbedding(
        coordinates=coords,
        eigenvalues=eigs.eigenvalues[start : start + dim].copy(),
        dim=dim,
    )


def extend_embedding(
    training: SpectralEmbedding,
    combined_laplacian: Laplacian,
    train_indices: np.ndarray,
    target_indices: np.ndarray | None = None,
) -> np.ndarray:
    """Embed new nodes by the maximally cohesive extension of each coordinate.

    Solves ``L_tt Z_t = -L_tr Z_train`` over the combined Laplacian, which
    is linear in the training coordinates and exact for nodes attached to a
    single training node.
    """
    train_indices = np.asarray(train_indices, dtype=np.intp)
    if target_indices is None:
        mask = np.ones(combined_laplacian.n_nodes, dtype=bool)
        mask[train_indices] = False
        target_indices = np.flatnonzero(mask)
    operator = extension_operator(combined_laplacian, train_indices, target_indices)
    return operator @ training.coordinates
