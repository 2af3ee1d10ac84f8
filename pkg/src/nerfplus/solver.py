"""Closed-form generalized ridge regression with a network-cohesion penalty.

The fitted model is ``y ~ node_effects + F @ coef`` where the node-effect
vector carries a quadratic Laplacian penalty and the remaining columns get
plain ridge penalties (one weight for the linear block, one for the stump
block).  Stacking ``[I_n, F]`` turns this into a single ridge system whose
Gram inverse is reused by the leave-one-out influence machinery.

Two equivalent solution paths are provided: the explicit stacked system
(:func:`solve`, needed when the Gram inverse must be cached) and a profiled
path that eliminates the node effects analytically through the eigenbasis
of the Laplacian (:func:`profiled_fit`), which is much faster and powers
cross-validation.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.linalg

from .data import Laplacian
from .exceptions import InputError, NumericalError

CV_STREAM = 1  # RNG namespace for fold assignment


@dataclass(frozen=True)
class PenaltySpec:
    """Non-negative penalty weights for the three coefficient blocks."""

    cohesion: float
    linear: float
    stump: float

    def __post_init__(self):
        for name in ("cohesion", "linear", "stump"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InputError(f"{name} penalty must be finite and non-negative")

    def to_json(self) -> dict:
        return {
            "lambda_alpha": self.cohesion,
            "lambda_beta": self.linear,
            "lambda_gamma": self.stump,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PenaltySpec":
        return cls(
            cohesion=float(obj["lambda_alpha"]),
            linear=float(obj["lambda_beta"]),
            stump=float(obj["lambda_gamma"]),
        )


@dataclass(frozen=True)
class PenaltyGrid:
    """Candidate penalty values searched by cross-validation."""

    cohesion: tuple[float, ...]
    linear: tuple[float, ...]
    stump: tuple[float, ...]

    def __post_init__(self):
        for name in ("cohesion", "linear", "stump"):
            values = getattr(self, name)
            if len(values) == 0:
                raise InputError(f"{name} grid must be non-empty")
            object.__setattr__(self, name, tuple(sorted(float(v) for v in values)))

    @classmethod
    def default(cls) -> "PenaltyGrid":
        values = tuple(np.logspace(-4, 3, 10))
        return cls(cohesion=values, linear=values, stump=values)

    def to_json(self) -> dict:
        return {
            "lambda_alpha": list(self.cohesion),
            "lambda_beta": list(self.linear),
            "lambda_gamma": list(self.stump),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PenaltyGrid":
        return cls(
            cohesion=tuple(obj["lambda_alpha"]),
            linear=tuple(obj["lambda_beta"]),
            stump=tuple(obj["lambda_gamma"]),
        )


@dataclass
class RidgeSolution:
    """Stacked coefficient vector partitioned as (node effects, linear, stump)."""

    coef: np.ndarray
    widths: tuple[int, int, int]
    gram_inverse: np.ndarray | None = None

    def __post_init__(self):
        if sum(self.widths) != len(self.coef):
            raise InputError("partition widths must sum to the coefficient length")

    @property
    def node_effects(self) -> np.ndarray:
        return self.coef[: self.widths[0]]

    @property
    def linear_coef(self) -> np.ndarray:
        n, q, _ = self.widths
        return self.coef[n : n + q]

    @property
    def stump_coef(self) -> np.ndarray:
        return self.coef[self.widths[0] + self.widths[1] :]


def build_design(identity_width: int, linear_block: np.ndarray, stump_block: np.ndarray) -> np.ndarray:
    """Horizontal concatenation ``[I_n, linear, stump]``.

    ``identity_width = 0`` omits the node-effect block (plain RF+ form).
    """
    blocks = []
    n_rows = None
    if identity_width:
        blocks.append(np.eye(identity_width))
        n_rows = identity_width
    for block in (linear_block, stump_block):
        block = np.asarray(block, dtype=np.float64)
        if block.ndim != 2:
            raise InputError("design blocks must be 2-d")
        if n_rows is None:
            n_rows = block.shape[0]
        elif block.shape[0] != n_rows:
            raise InputError("design blocks have mismatched row counts")
        blocks.append(block)
    return np.hstack(blocks)


def build_penalty(
    laplacian: Laplacian | None, spec: PenaltySpec, q: int, m: int
) -> np.ndarray:
    """Block-diagonal penalty: cohesion-weighted Laplacian plus two ridges."""
    n = laplacian.n_nodes if laplacian is not None else 0
    d = n + q + m
    penalty = np.zeros((d, d))
    if n:
        penalty[:n, :n] = spec.cohesion * laplacian.matrix
    diag = penalty[np.diag_indices(d)].copy()
    diag[n : n + q] += spec.linear
    diag[n + q :] += spec.stump
    penalty[np.diag_indices(d)] = diag
    return penalty


def ridge_objective(
    design: np.ndarray, response: np.ndarray, penalty: np.ndarray, coef: np.ndarray
) -> float:
    """Squared-error loss plus the quadratic penalty, the quantity minimized."""
    resid = response - design @ coef
    return float(resid @ resid + coef @ penalty @ coef)


def _zero_penalty_hint(spec: PenaltySpec | None) -> str:
    if spec is None:
        return ""
    zeros = [name for name in ("cohesion", "linear", "stump") if getattr(spec, name) == 0]
    if zeros:
        return f" (zero penalty on: {', '.join(zeros)})"
    return ""


def solve(
    design: np.ndarray,
    response: np.ndarray,
    penalty: np.ndarray,
    widths: tuple[int, int, int],
    cache_gram_inverse: bool = False,
    spec: PenaltySpec | None = None,
) -> RidgeSolution:
    """Closed-form minimizer via a positive-definite Cholesky solve.

    The Gram inverse is only formed when requested; it is dense of order
    ``n + q + m`` and is required by the influence computation.
    """
    design = np.asarray(design, dtype=np.float64)
    response = np.asarray(response, dtype=np.float64)
    gram = design.T @ design + penalty
    try:
        chol = scipy.linalg.cho_factor(gram, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(
            f"singular ridge system{_zero_penalty_hint(spec)}: {exc}"
        ) from exc
    coef = scipy.linalg.cho_solve(chol, design.T @ response)
    gram_inverse = None
    if cache_gram_inverse:
        gram_inverse = scipy.linalg.cho_solve(chol, np.eye(gram.shape[0]))
        gram_inverse = (gram_inverse + gram_inverse.T) / 2.0
    return RidgeSolution(coef=coef, widths=widths, gram_inverse=gram_inverse)


# ---------------------------------------------------------------------------
# Cohesive out-of-sample extension
# ---------------------------------------------------------------------------


def extension_operator(
    combined_laplacian: Laplacian, train_indices: np.ndarray, target_indices: np.ndarray
) -> np.ndarray:
    """Linear map sending training node values to maximally cohesive targets.

    For a vector ``v`` on the training nodes, ``E @ v`` minimizes the
    combined quadratic form over the target-node values, i.e. solves
    ``L_tt x = -L_tr v``.
    """
    train_indices = np.asarray(train_indices, dtype=np.intp)
    target_indices = np.asarray(target_indices, dtype=np.intp)
    if target_indices.size == 0:
        return np.zeros((0, train_indices.size))
    l_tt = combined_laplacian.submatrix(target_indices, target_indices)
    l_tr = combined_laplacian.submatrix(target_indices, train_indices)
    try:
        return -np.linalg.solve(l_tt, l_tr)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "singular extension system; a test component has no training "
            "attachment and the laplacian is unregularized"
        ) from exc


def extend_node_effects(
    node_effects_train: np.ndarray,
    combined_laplacian: Laplacian,
    train_indices: np.ndarray,
    target_indices: np.ndarray | None = None,
) -> np.ndarray:
    """Extend fitted node effects to the remaining nodes of a combined network."""
    train_indices = np.asarray(train_indices, dtype=np.intp)
    if target_indices is None:
        mask = np.ones(combined_laplacian.n_nodes, dtype=bool)
        mask[train_indices] = False
        target_indices = np.flatnonzero(mask)
    operator = extension_operator(combined_laplacian, train_indices, target_indices)
    return operator @ np.asarray(node_effects_train, dtype=np.float64)


# ---------------------------------------------------------------------------
# Profiled solves and cross-validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LaplacianEigs:
    """Cached symmetric eigendecomposition of a (sub-)Laplacian."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @classmethod
    def of(cls, matrix: np.ndarray) -> "LaplacianEigs":
        try:
            vals, vecs = np.linalg.eigh(matrix)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigendecomposition failed: {exc}") from exc
        return cls(eigenvalues=vals, eigenvectors=vecs)


def profiled_fit(
    feature_block: np.ndarray,
    response: np.ndarray,
    lap_eigs: LaplacianEigs,
    spec: PenaltySpec,
    q_linear: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Solve the cohesion-penalized ridge by eliminating the node effects.

    For fixed feature coefficients ``b`` the optimal node effects are a
    Laplacian smoothing of the residual, which reduces the problem to a
    small ridge system of the feature-block width.  Returns
    ``(node_effects, feature_coef)``; exactly matches :func:`solve`.
    """
    f = np.asarray(feature_block, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    vals, vecs = lap_eigs.eigenvalues, lap_eigs.eigenvectors
    shrink = spec.cohesion * vals / (1.0 + spec.cohesion * vals)
    qt_f = vecs.T @ f
    qt_y = vecs.T @ y
    m_stump = f.shape[1] - q_linear
    if f.shape[1] == 0:
        coef = np.zeros(0)
    else:
        ridge = np.concatenate(
            [np.full(q_linear, spec.linear), np.full(m_stump, spec.stump)]
        )
        gram = qt_f.T @ (shrink[:, None] * qt_f)
        gram[np.diag_indices_from(gram)] += ridge
        rhs = qt_f.T @ (shrink * qt_y)
        try:
            coef = scipy.linalg.cho_factor(gram, lower=True)
            coef = scipy.linalg.cho_solve(coef, rhs)
        except scipy.linalg.LinAlgError as exc:
            raise NumericalError(
                f"singular ridge system{_zero_penalty_hint(spec)}: {exc}"
            ) from exc
    node_effects = vecs @ ((1.0 - shrink) * (qt_y - qt_f @ coef))
    return node_effects, coef


def _fold_indices(n: int, folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    if folds < 2:
        raise InputError("cross-validation needs at least 2 folds")
    if folds > n:
        raise InputError("more folds than samples")
    perm = np.random.default_rng([seed, CV_STREAM]).permutation(n)
    out = []
    for chunk in np.array_split(perm, folds):
        held = np.sort(chunk)
        mask = np.ones(n, dtype=bool)
        mask[held] = False
        out.append((np.flatnonzero(mask), held))
    return out


@dataclass(frozen=True)
class CvFold:
    in_idx: np.ndarray
    out_idx: np.ndarray
    eigs: LaplacianEigs | None
    extend: np.ndarray | None


def prepare_cv_folds(
    laplacian: Laplacian | None, n: int, folds: int, seed: int
) -> list[CvFold]:
    """Fold assignment plus the per-fold factorizations reused across trees.

    The held-out node-effect contribution uses the cohesive extension over
    the training Laplacian restricted to in-fold nodes plus their held-out
    attachments.
    """
    plan = []
    for in_idx, out_idx in _fold_indices(n, folds, seed):
        if laplacian is not None:
            eigs = LaplacianEigs.of(laplacian.submatrix(in_idx, in_idx))
            extend = extension_operator(laplacian, in_idx, out_idx)
        else:
            eigs, extend = None, None
        plan.append(CvFold(in_idx=in_idx, out_idx=out_idx, eigs=eigs, extend=extend))
    return plan


def cv_tune(
    feature_block: np.ndarray,
    response: np.ndarray,
    laplacian: Laplacian | None,
    grid: PenaltyGrid,
    q_linear: int,
    folds: int = 5,
    seed: int = 0,
    fold_plan: list[CvFold] | None = None,
) -> PenaltySpec:
    """Exhaustive grid search minimizing pooled held-out squared error.

    Held-out rows get their node-effect contribution from the cohesive
    extension of the in-fold fit.  Ties are broken toward the smallest
    cohesion, then linear, then stump penalty (grids are searched in
    ascending order).

    ``laplacian=None`` tunes the plain ridge form with no node effects; the
    cohesion grid must then be the singleton ``(0,)``.
    """
    f = np.asarray(feature_block, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    n = len(y)
    m_stump = f.shape[1] - q_linear

    cohesion_grid = grid.cohesion
    linear_grid = grid.linear if q_linear else grid.linear[:1]
    stump_grid = grid.stump if m_stump else grid.stump[:1]
    if laplacian is None and cohesion_grid != (0.0,):
        raise InputError("without node effects the cohesion grid must be (0,)")
    if len(cohesion_grid) == len(linear_grid) == len(stump_grid) == 1:
        return PenaltySpec(cohesion_grid[0], linear_grid[0], stump_grid[0])

    ridge_combos = list(product(linear_grid, stump_grid))
    ridge_diags = np.array(
        [[lb] * q_linear + [ls] * m_stump for lb, ls in ridge_combos]
    )  # (K, q + m)
    n_combo = len(ridge_combos)
    sse = np.zeros((len(cohesion_grid), n_combo))

    if fold_plan is None:
        fold_plan = prepare_cv_folds(laplacian, n, folds, seed)
    for fold in fold_plan:
        f_out = f[fold.out_idx]
        y_out = y[fold.out_idx]
        y_in = y[fold.in_idx]
        f_in = f[fold.in_idx]
        if fold.eigs is not None:
            qt_f = fold.eigs.eigenvectors.T @ f_in
            qt_y = fold.eigs.eigenvectors.T @ y_in
        else:
            qt_f, qt_y = f_in, y_in
        for a, lam_cohesion in enumerate(cohesion_grid):
            if fold.eigs is not None:
                vals = fold.eigs.eigenvalues
                shrink = lam_cohesion * vals / (1.0 + lam_cohesion * vals)
                gram = qt_f.T @ (shrink[:, None] * qt_f)
                rhs = qt_f.T @ (shrink * qt_y)
            else:
                gram = qt_f.T @ qt_f
                rhs = qt_f.T @ qt_y
            if gram.shape[0] == 0:
                coefs = np.zeros((n_combo, 0))
            else:
                systems = np.broadcast_to(gram, (n_combo,) + gram.shape).copy()
                idx = np.arange(gram.shape[0])
                systems[:, idx, idx] += ridge_diags
                try:
                    coefs = np.linalg.solve(
                        systems,
                        np.broadcast_to(rhs[:, None], (n_combo, len(rhs), 1)).copy(),
                    )[:, :, 0]
                except np.linalg.LinAlgError as exc:
                    raise NumericalError(f"singular CV system: {exc}") from exc
            preds = f_out @ coefs.T  # (n_out, K)
            if fold.eigs is not None:
                resid_spectral = qt_y[:, None] - qt_f @ coefs.T
                effects_in = fold.eigs.eigenvectors @ (
                    (1.0 - shrink)[:, None] * resid_spectral
                )
                preds = preds + fold.extend @ effects_in
            err = y_out[:, None] - preds
            sse[a] += np.einsum("ik,ik->k", err, err)

    best = np.unravel_index(int(np.argmin(sse)), sse.shape)
    lam_cohesion = cohesion_grid[best[0]]
    lam_linear, lam_stump = ridge_combos[best[1]]
    # restore user grid values for blocks that were collapsed as irrelevant
    if not q_linear:
        lam_linear = grid.linear[0]
    if not m_stump:
        lam_stump = grid.stump[0]
    return PenaltySpec(cohesion=lam_cohesion, linear=lam_linear, stump=lam_stump)
