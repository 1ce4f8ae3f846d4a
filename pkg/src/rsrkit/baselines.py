"""Reference estimators: classic consensus sampling and oracle PCA."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rngutil
from .core import SubspaceBasis, residual_norms
from .datagen import NoiseModel
from .errors import DegenerateData, InsufficientSamples
from .stage1 import default_eta_floor

_TAG_ITER = 31


@dataclass(frozen=True)
class ClassicRansacConfig:
    """Classic consensus search; ``r`` is required prior knowledge."""

    r: int
    dist_threshold: float
    consensus_fraction: float = 0.5
    max_iters: int = 50000
    seed: int = 0

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0.0 < self.consensus_fraction <= 1.0:
            raise ValueError("consensus_fraction must be in (0, 1]")


def default_dist_threshold(X: np.ndarray, noise: NoiseModel) -> float:
    """Inlier cutoff: the noise-norm concentration level, floored for
    noiseless data at 1e-9 times the median column norm."""
    return max(
        default_eta_floor(X),
        math.sqrt(noise.trace) + 5.0 * math.sqrt(noise.spectral_norm),
    )


def _greedy_span_basis(X: np.ndarray, order: np.ndarray, r: int, rank_tol: float = 1e-8):
    """Walk columns in the given order, keeping directions that add rank,
    until r of them accumulate.  Returns the partial orthonormal basis
    (d x rank) via incremental Gram-Schmidt with re-orthogonalization."""
    d = X.shape[0]
    Q = np.empty((d, r))
    rank = 0
    for idx in order:
        x = X[:, idx]
        nrm0 = np.linalg.norm(x)
        if nrm0 == 0.0:
            continue
        v = x - Q[:, :rank] @ (Q[:, :rank].T @ x)
        v -= Q[:, :rank] @ (Q[:, :rank].T @ v)
        nrm = np.linalg.norm(v)
        if nrm > rank_tol * nrm0:
            Q[:, rank] = v / nrm
            rank += 1
            if rank == r:
                break
    return Q[:, :rank], rank


def classic_ransac(X: np.ndarray, config: ClassicRansacConfig):
    """Random sample consensus for an r-dimensional subspace.

    Each iteration draws points until their numerical rank reaches r
    (at most min(n, 4r) draws per attempt), then counts the samples
    whose residual to that span is below the distance threshold.  An
    iteration reaching the consensus fraction returns immediately;
    otherwise the best consensus count wins, earliest iteration first.

    Returns (SubspaceBasis, consensus_count).

    Raises
    ------
    DegenerateData
        when no subset can span the target dimension (the data's own
        rank is below r; checked once, after the first failed attempt).
    """
    X = np.asarray(X, dtype=np.float64)
    d, n = X.shape
    r = config.r
    if n <= r:
        raise InsufficientSamples(f"need n > r, got n={n}, r={r}")
    cap = min(n, 4 * r)
    rng = rngutil.stream(config.seed, _TAG_ITER)
    needed = config.consensus_fraction * n

    best_count = -1
    best_basis = None
    rank_checked = False
    for _ in range(config.max_iters):
        order = rngutil.sample_without_replacement(rng, n, cap)
        Q, rank = _greedy_span_basis(X, order, r)
        if rank < r:
            if not rank_checked:
                rank_checked = True
                s = np.linalg.svd(X, compute_uv=False)
                if int(np.sum(s > 1e-12 * s[0])) < r:
                    raise DegenerateData(
                        f"data has rank < {r}; no subset can span the target dimension"
                    )
            continue
        basis = SubspaceBasis(Q)
        count = int(np.sum(residual_norms(X, basis) <= config.dist_threshold))
        if count > best_count:
            best_count = count
            best_basis = basis
            if count >= needed:
                break
    if best_basis is None:
        raise DegenerateData(f"rank {r} never reached in {config.max_iters} attempts")
    return best_basis, best_count


def oracle_pca(X: np.ndarray, inlier_mask: np.ndarray, r: int) -> SubspaceBasis:
    """Top-r left singular vectors of the inlier submatrix (ground-truth
    reference; the only estimator allowed to see the mask)."""
    X = np.asarray(X, dtype=np.float64)
    mask = np.asarray(inlier_mask, dtype=bool)
    if int(mask.sum()) < r:
        raise InsufficientSamples(f"need at least {r} inliers, have {int(mask.sum())}")
    U, _, _ = np.linalg.svd(X[:, mask], full_matrices=False)
    return SubspaceBasis(U[:, :r])
