"""Shared numerical primitives: bases, projections, spectra, medians.

All operations are pure functions of their inputs and safe to call from
multiple threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, EmptyInput, ShapeError

ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class SubspaceBasis:
    """A column-orthonormal d x r matrix representing an r-dim subspace.

    Orthonormality is validated at construction to ORTHO_TOL in the
    entrywise max norm; this type is the only currency for subspaces
    between pipeline stages.
    """

    columns: np.ndarray

    def __post_init__(self):
        cols = np.asarray(self.columns, dtype=np.float64)
        if cols.ndim != 2:
            raise ShapeError(f"basis must be 2-D, got shape {cols.shape}")
        d, r = cols.shape
        if not 1 <= r <= d:
            raise ShapeError(f"need 1 <= r <= d, got d={d}, r={r}")
        gram_err = np.abs(cols.T @ cols - np.eye(r)).max()
        if gram_err > ORTHO_TOL:
            raise ShapeError(f"columns not orthonormal: max |V'V - I| = {gram_err:.3e}")
        object.__setattr__(self, "columns", cols)

    @property
    def d(self) -> int:
        return self.columns.shape[0]

    @property
    def r(self) -> int:
        return self.columns.shape[1]

    def projector(self) -> np.ndarray:
        """Dense d x d projector V V'.  O(d^2 r); prefer the identities
        in subspace_distance/projection_residual for large d."""
        return self.columns @ self.columns.T


@dataclass
class SpectrumTable:
    """Per-batch singular-value lists, one row per batch, all length r-hat.

    ``normalized`` records whether values were divided by sqrt(B), in
    which case their squares are eigenvalues of the batch covariance
    (1/B) X X'.  Rows are non-increasing and non-negative; rank-deficient
    batches are padded with exact zeros so the table stays rectangular.
    """

    values: np.ndarray  # (stored_batches, r_hat)
    normalized: bool
    total_batches: int = 0  # batches actually swept (>= len(values) when truncated)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ShapeError("spectrum table must be 2-D")
        self.values = v
        if self.total_batches == 0:
            self.total_batches = v.shape[0]

    @property
    def stored_batches(self) -> int:
        return self.values.shape[0]


def orthonormal_basis(columns: np.ndarray, rank_tol: float = 1e-8) -> SubspaceBasis:
    """Orthonormal basis of the column space, via SVD.

    The dimension equals the numerical rank: the number of singular
    values above ``rank_tol`` times the largest one.

    Raises
    ------
    DegenerateInput
        if the input is numerically all-zero.
    """
    A = np.atleast_2d(np.asarray(columns, dtype=np.float64))
    if A.shape[1] < 1:
        raise EmptyInput("no columns given")
    if not 0.0 < rank_tol < 1.0:
        raise ValueError(f"rank_tol must be in (0, 1), got {rank_tol}")
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        raise DegenerateInput("all-zero input matrix")
    rank = int(np.sum(s > rank_tol * s[0]))
    return SubspaceBasis(U[:, :rank])


def projection_residual(x: np.ndarray, basis: SubspaceBasis) -> float:
    """Distance ||x - V V' x|| from x to the subspace.

    Computed on the explicit residual vector, never via the Pythagorean
    difference of squared norms, so in-span points report residuals at
    machine scale instead of sqrt(eps) scale.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != basis.d:
        raise ShapeError(f"x has dim {x.shape[0]}, basis ambient dim {basis.d}")
    V = basis.columns
    return float(np.linalg.norm(x - V @ (V.T @ x)))


def residual_norms(X: np.ndarray, basis: SubspaceBasis, _block: int = 2048) -> np.ndarray:
    """Column-wise projection residuals ||x_i - V V' x_i||, vectorized.

    Processed in column blocks through preallocated buffers: the naive
    full-width expression allocates several matrices the size of X per
    call, which dominates the coarse stage's wall time at large n.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != basis.d:
        raise ShapeError(f"X has {X.shape[0]} rows, basis ambient dim {basis.d}")
    V = basis.columns
    d, n = X.shape
    r = V.shape[1]
    out = np.empty(n)
    coef = np.empty((r, _block))
    buf = np.empty((d, _block))
    for s in range(0, n, _block):
        e = min(n, s + _block)
        if e - s == _block:
            np.matmul(V.T, X[:, s:e], out=coef)
            np.matmul(V, coef, out=buf)
            np.subtract(X[:, s:e], buf, out=buf)
            np.einsum("ij,ij->j", buf, buf, out=out[s:e])
        else:
            R = X[:, s:e] - V @ (V.T @ X[:, s:e])
            out[s:e] = np.einsum("ij,ij->j", R, R)
    return np.sqrt(out, out=out)


def project(X: np.ndarray, basis: SubspaceBasis) -> np.ndarray:
    """Coordinates V' X of the columns of X in the basis."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != basis.d:
        raise ShapeError(f"X has {X.shape[0]} rows, basis ambient dim {basis.d}")
    return basis.columns.T @ X


def subspace_distance(a: SubspaceBasis, b: SubspaceBasis) -> float:
    """Spectral norm of the projector difference ||A A' - B B'||, in [0, 1].

    Computed from the thin residuals (I - P_B) A and (I - P_A) B, whose
    largest singular values equal ||B_perp' A|| and ||A_perp' B||; the
    projector-difference norm is the max of the two.  Equal-dimension
    inputs make both sides coincide with the largest principal-angle
    sine.  Cost O(d r^2), no d x d matrices.
    """
    if a.d != b.d:
        raise ShapeError(f"ambient dims differ: {a.d} vs {b.d}")
    A, B = a.columns, b.columns
    ra = A - B @ (B.T @ A)
    rb = B - A @ (A.T @ B)
    sa = np.linalg.svd(ra, compute_uv=False)[0] if ra.size else 0.0
    sb = np.linalg.svd(rb, compute_uv=False)[0] if rb.size else 0.0
    return float(np.clip(max(sa, sb), 0.0, 1.0))


def median(values) -> float:
    """Median with the even-count mean-of-middle-two convention.

    Raises EmptyInput on an empty list (np.median would return NaN).
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInput("median of empty list")
    return float(np.median(v))


def batch_singular_values(X_j: np.ndarray, normalize: bool = False) -> np.ndarray:
    """Singular values of one batch matrix, non-increasing, zero-padded.

    Returns exactly ``r_hat = X_j.shape[0]`` values; when the batch has
    fewer columns than rows the list is padded with exact zeros.  With
    ``normalize`` each value is divided by sqrt(B) so that squares are
    eigenvalues of the batch covariance (1/B) X_j X_j'.
    """
    X_j = np.atleast_2d(np.asarray(X_j, dtype=np.float64))
    r_hat, B = X_j.shape
    if B < 1:
        raise EmptyInput("batch has no columns")
    s = np.linalg.svd(X_j, compute_uv=False)
    if s.size < r_hat:
        s = np.concatenate([s, np.zeros(r_hat - s.size)])
    if normalize:
        s = s / np.sqrt(B)
    return s
