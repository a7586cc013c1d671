"""Least-squares stages shared by every estimator pipeline.

All solves go through orthogonal decompositions (SVD) rather than normal
equations; the explicit normal-equations path lives only in the test
suite as an independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NonFiniteError, NumericalError, RankDeficientError
from .model import (
    CovarianceFit,
    Dataset,
    DebiasedEstimate,
    FirstStageFit,
    ProjectionBasis,
    interaction_pair_count,
)

#: Relative singular-value cutoff below which a design counts as rank deficient.
SV_RTOL = 1e-10


def interaction_pairs(p: int) -> tuple[tuple[int, int], ...]:
    """Ordered covariate pairs (j, k), j <= k, in lexicographic order."""
    return tuple((j, k) for j in range(p) for k in range(j, p))


@dataclass(frozen=True)
class ExpandedDesign:
    """Design matrix with all linear and pairwise interaction columns.

    Column c < p is the linear term X_c; column p + i is the product
    X_j * X_k for pairs[i] = (j, k).
    """

    matrix: np.ndarray
    p: int
    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        q = self.p + interaction_pair_count(self.p)
        if self.matrix.shape[1] != q:
            raise DimensionMismatchError(
                f"expanded design must have q = {q} columns, got {self.matrix.shape[1]}"
            )
        if self.pairs != interaction_pairs(self.p):
            raise DimensionMismatchError("pair map out of lexicographic order")

    @property
    def q(self) -> int:
        return self.matrix.shape[1]


def expand_interactions(X: np.ndarray) -> ExpandedDesign:
    """Augment X with the p(p+1)/2 pairwise products X_j * X_k, j <= k."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatchError(f"X must be 2-d, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteError("X contains non-finite entries")
    p = X.shape[1]
    pairs = interaction_pairs(p)
    products = [X[:, j] * X[:, k] for j, k in pairs]
    matrix = np.column_stack([X] + products) if products else X.copy()
    return ExpandedDesign(matrix=matrix, p=p, pairs=pairs)


def _check_conditioning(singular_values: np.ndarray, what: str) -> None:
    if singular_values.size == 0 or singular_values[0] == 0.0:
        raise RankDeficientError(f"{what} is identically zero")
    if singular_values[-1] < SV_RTOL * singular_values[0]:
        raise RankDeficientError(
            f"{what} is rank deficient: smallest/largest singular value = "
            f"{singular_values[-1] / singular_values[0]:.3e} < {SV_RTOL:.0e}"
        )


def least_squares(design: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Minimize ||targets - design @ coefficients||_F over coefficients.

    Requires an overdetermined, well-conditioned design: n >= q and
    smallest singular value above SV_RTOL times the largest.
    """
    design = np.asarray(design, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if design.ndim != 2 or targets.ndim != 2:
        raise DimensionMismatchError("design and targets must be 2-d")
    n, q = design.shape
    if targets.shape[0] != n:
        raise DimensionMismatchError(
            f"targets have {targets.shape[0]} rows but design has {n}"
        )
    if n < q:
        raise NumericalError(f"underdetermined system: n = {n} < q = {q}")
    coef, _, _, sv = np.linalg.lstsq(design, targets, rcond=None)
    _check_conditioning(sv, "design")
    return coef


def _pseudo_inverse(design: np.ndarray, what: str) -> np.ndarray:
    """SVD pseudo-inverse with the shared conditioning check."""
    u, s, vt = np.linalg.svd(design, full_matrices=False)
    _check_conditioning(s, what)
    return (vt.T / s) @ u.T


def fit_first_stage(dataset: Dataset) -> FirstStageFit:
    """Regress Y on the interaction-expanded design of X.

    Returns the linear coefficients L1, interaction coefficients L2 and
    the residual matrix Y - fitted.
    """
    design = expand_interactions(dataset.X)
    n, q = design.matrix.shape
    if n <= q:
        raise NumericalError(
            f"first stage needs n > p + p(p+1)/2: n = {n}, q = {q}"
        )
    coef = least_squares(design.matrix, dataset.Y)
    residuals = dataset.Y - design.matrix @ coef
    return FirstStageFit(L1=coef[: design.p], L2=coef[design.p :], residuals=residuals)


def _symmetrize(mat: np.ndarray) -> np.ndarray:
    return (mat + mat.T) / 2.0


def fit_covariance_regression(fit: FirstStageFit, X: np.ndarray) -> CovarianceFit:
    """Regress the residual outer products on [1, X_j, X_j X_k].

    Entry (r, s) of eps_i eps_i^T is regressed on the (1 + p + p(p+1)/2)
    column design; the coefficient of each design column, assembled over
    all (r, s), is one m x m surface. The solve is carried out by
    contracting the pseudo-inverse rows of the design against the outer
    products, which is the multi-target least-squares solution without
    materializing the n x m(m+1)/2 target matrix. The intercept surface
    and the diagonal-pair interaction surfaces are symmetrized as
    (M + M^T) / 2.
    """
    X = np.asarray(X, dtype=float)
    eps = fit.residuals
    n = eps.shape[0]
    if X.ndim != 2 or X.shape != (n, fit.p):
        raise DimensionMismatchError(
            f"X must be ({n}, {fit.p}) to match the first-stage fit, got {X.shape}"
        )
    expanded = expand_interactions(X)
    design = np.column_stack([np.ones(n), expanded.matrix])
    if n <= design.shape[1]:
        raise NumericalError(
            f"covariance regression needs n > 1 + p + p(p+1)/2: n = {n}, "
            f"columns = {design.shape[1]}"
        )
    pinv = _pseudo_inverse(design, "covariance design")
    surfaces = [_contract_outer_products(eps, weights) for weights in pinv]
    p = fit.p
    phi_b = _symmetrize(surfaces[0])
    phi_bc = tuple(surfaces[1 + j] for j in range(p))
    phi_cc = {}
    for i, (j, k) in enumerate(expanded.pairs):
        mat = surfaces[1 + p + i]
        phi_cc[(j, k)] = _symmetrize(mat) if j == k else mat
    return CovarianceFit(phi_B=phi_b, phi_BC=phi_bc, phi_CC=phi_cc)


def _contract_outer_products(eps: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Compute sum_i weights[i] * eps_i eps_i^T as one m x m matrix."""
    return eps.T @ (weights[:, None] * eps)


def fit_projected_ols(
    dataset: Dataset,
    basis: ProjectionBasis,
    *,
    method: str = "ols",
    k_used: int | None = None,
    t_used: int | None = None,
) -> DebiasedEstimate:
    """Regress the projected responses Y (I - U U^T) on X, linear terms only."""
    if basis.m != dataset.m:
        raise DimensionMismatchError(
            f"basis has m = {basis.m} rows but dataset has m = {dataset.m} responses"
        )
    if dataset.n <= dataset.p:
        raise NumericalError(f"projected regression needs n > p: n = {dataset.n}, p = {dataset.p}")
    projected = basis.apply_complement(dataset.Y)
    theta = least_squares(dataset.X, projected)
    return DebiasedEstimate(theta=theta, method=method, k_used=k_used, t_used=t_used)
