"""Eigenspace extraction, projection-basis construction, and rank selection."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateBasisWarning, DimensionMismatchError, NumericalError
from .model import ProjectionBasis

#: Singular-value ratio below which a concatenated basis counts as degenerate.
DEGENERACY_RTOL = 1e-8


@dataclass(frozen=True)
class SpectrumSummary:
    """Full nonincreasing eigenvalue list of one coefficient surface."""

    eigenvalues: np.ndarray
    source: str

    def __post_init__(self):
        vals = np.array(self.eigenvalues, dtype=float)
        if vals.ndim != 1:
            raise DimensionMismatchError("eigenvalues must be a 1-d array")
        if vals.size > 1 and np.any(np.diff(vals) > 0):
            raise DataError("eigenvalues must be sorted nonincreasing")
        vals.setflags(write=False)
        object.__setattr__(self, "eigenvalues", vals)


def fix_signs(U: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Make the first non-negligible entry of each column positive."""
    U = np.array(U)
    for c in range(U.shape[1]):
        col = U[:, c]
        nonzero = np.nonzero(np.abs(col) > tol)[0]
        if nonzero.size and col[nonzero[0]] < 0:
            U[:, c] = -col
    return U


def _as_symmetric(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionMismatchError(f"matrix must be square, got shape {S.shape}")
    return (S + S.T) / 2.0


def eigen_spectrum(S: np.ndarray, source: str) -> SpectrumSummary:
    """All eigenvalues of the symmetrized matrix, sorted nonincreasing."""
    vals = np.linalg.eigvalsh(_as_symmetric(S))
    return SpectrumSummary(eigenvalues=vals[::-1], source=source)


def top_k_eigenvectors(S: np.ndarray, k: int, source: str = "matrix") -> tuple[np.ndarray, SpectrumSummary]:
    """Unit eigenvectors of the k algebraically largest eigenvalues.

    The input is symmetrized before decomposition. Returns the m x k
    eigenvector matrix (sign-normalized) and the full spectrum.
    """
    sym = _as_symmetric(S)
    m = sym.shape[0]
    if not 1 <= k <= m:
        raise NumericalError(f"k must satisfy 1 <= k <= m = {m}, got {k}")
    vals, vecs = np.linalg.eigh(sym)
    order = np.argsort(vals)[::-1]
    spectrum = SpectrumSummary(eigenvalues=vals[order], source=source)
    return fix_signs(vecs[:, order[:k]]), spectrum


def hetero_pca(S: np.ndarray, k: int, n_iter: int) -> np.ndarray:
    """Leading eigenspace of S with the diagonal iteratively re-imputed.

    Starts from S with a zeroed diagonal and alternates: take the best
    rank-k approximation, then replace only the diagonal with the
    approximation's diagonal while restoring the original off-diagonal
    entries. Returns the top-k left singular vectors after n_iter
    replacements. Robust to additive diagonal contamination of a low-rank
    target, which plain eigenvector extraction is not.
    """
    sym = _as_symmetric(S)
    m = sym.shape[0]
    if not 1 <= k <= m:
        raise NumericalError(f"k must satisfy 1 <= k <= m = {m}, got {k}")
    if n_iter < 0:
        raise DataError("n_iter must be nonnegative")
    current = sym.copy()
    np.fill_diagonal(current, 0.0)
    for _ in range(n_iter):
        u, s, vt = np.linalg.svd(current)
        imputed = np.einsum("ij,j,ji->i", u[:, :k], s[:k], vt[:k, :])
        current = sym.copy()
        np.fill_diagonal(current, imputed)
    u, _, _ = np.linalg.svd(current)
    return fix_signs(u[:, :k])


def build_projection(blocks: list[np.ndarray]) -> ProjectionBasis:
    """Orthonormal basis spanning the union of the given column blocks.

    Takes the first r left singular vectors of the horizontal
    concatenation, where r is the total column count. A concatenation
    whose smallest singular value is negligible triggers a
    DegenerateBasisWarning instead of an error.
    """
    if not blocks:
        raise DataError("need at least one block")
    m = blocks[0].shape[0]
    for i, block in enumerate(blocks):
        if block.ndim != 2 or block.shape[0] != m:
            raise DimensionMismatchError(f"block {i} must have {m} rows, got shape {block.shape}")
    concat = np.hstack(blocks)
    r = concat.shape[1]
    if r > m:
        raise NumericalError(f"total basis size r = {r} exceeds m = {m}")
    u, s, _ = np.linalg.svd(concat, full_matrices=False)
    if s[0] == 0.0 or s[-1] < DEGENERACY_RTOL * s[0]:
        warnings.warn(
            DegenerateBasisWarning(
                f"concatenated blocks nearly rank deficient: smallest/largest "
                f"singular value = {s[-1] / s[0] if s[0] else 0.0:.3e}"
            )
        )
    return ProjectionBasis(U=fix_signs(u[:, :r]))


def default_k_star(n: int, m: int) -> int:
    """Default upper bound for the rank search: floor(min(n, m) / 2)."""
    return max(1, min(n, m) // 2)


def select_k(spectra: list[SpectrumSummary], k_star: int) -> int:
    """Rank estimate by majority vote over eigenvalue-ratio peaks.

    Each spectrum votes for the index i in 1..k_star maximizing the
    consecutive ratio lambda_i / lambda_{i+1} (smallest i on a tie); the
    returned estimate is the index with the most votes, smallest first
    on tied counts.
    """
    if k_star < 1:
        raise DataError("k_star must be a positive integer")
    if not spectra:
        raise DataError("need at least one spectrum")
    votes = []
    for spectrum in spectra:
        vals = spectrum.eigenvalues
        if vals.size < k_star + 1:
            raise DataError(
                f"spectrum {spectrum.source!r} has {vals.size} eigenvalues; "
                f"need at least k_star + 1 = {k_star + 1}"
            )
        head = vals[: k_star + 1]
        if np.any(head <= 0):
            raise NumericalError(
                f"nonpositive eigenvalue in spectrum {spectrum.source!r} within the "
                f"first {k_star + 1} entries; ratio test undefined"
            )
        ratios = head[:-1] / head[1:]
        votes.append(int(np.argmax(ratios)) + 1)
    counts = np.bincount(votes, minlength=k_star + 1)
    return int(np.argmax(counts[1:])) + 1


def sin_theta(U: np.ndarray, V: np.ndarray) -> float:
    """Frobenius sin-theta distance between the column spans of U and V.

    Both inputs must have orthonormal columns. Computed as the residual
    of projecting the narrower basis onto the other, which equals
    sqrt(sum_i sin^2(theta_i)) over the principal angles but stays
    accurate near zero.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if U.shape[0] != V.shape[0]:
        raise DimensionMismatchError("bases live in different ambient dimensions")
    if V.shape[1] > U.shape[1]:
        U, V = V, U
    residual = V - U @ (U.T @ V)
    return float(np.linalg.norm(residual))
