"""Coarse-grained subspace estimation by batch doubling.

Starting from a tiny batch, repeatedly sample a fresh uniform batch of
columns, take its column-space basis, and measure the median residual
of all held-out samples to that span.  Stop as soon as the median falls
below a noise-calibrated threshold; the batch size at that point is a
constant-factor overestimate of the true rank with high probability,
and the span approximately contains the planted subspace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rngutil
from .core import SubspaceBasis, median, orthonormal_basis, residual_norms
from .datagen import NoiseModel
from .errors import EmptyInput, InsufficientSamples

_TAG_BATCH = 11


@dataclass(frozen=True)
class Stage1Config:
    """Knobs for the doubling loop.

    ``eta_floor`` is the absolute stopping floor used when the noise
    threshold is zero or negligible; ``None`` selects 1e-9 times the
    median column norm of the data.  ``r_star_hint``, when given, fixes
    the effective rank in the threshold formula; otherwise the live
    batch size stands in for it at every check.
    """

    C: float = 2.2
    t0: float = 0.25
    eta_floor: float | None = None
    rank_tol: float = 1e-8
    r_star_hint: int | None = None
    initial_B: int = 2

    def __post_init__(self):
        if self.C < 2.2:
            raise ValueError(f"threshold constant must be >= 2.2, got {self.C}")
        if not 0.0 < self.t0 <= 1.0:
            raise ValueError(f"t0 must be in (0, 1], got {self.t0}")
        if self.initial_B < 1:
            raise ValueError("initial_B must be >= 1")


@dataclass(frozen=True)
class Stage1Result:
    basis: SubspaceBasis
    r_hat: int
    eta_thresh: float  # threshold in force at the final iteration
    medres_trace: tuple  # ((B, MedRes), ...) per iteration
    terminated_by: str  # "threshold" | "exhausted"

    @property
    def medres_final(self) -> float:
        return self.medres_trace[-1][1]


def eta_thresh(C: float, t0: float, r_eff: int, noise: NoiseModel) -> float:
    """Stopping threshold C * (5 sqrt(r_eff ||Sigma||) + sqrt(tr Sigma)) / t0."""
    if C <= 0 or not 0.0 < t0 <= 1.0 or r_eff < 1:
        raise ValueError("need C > 0, t0 in (0, 1], r_eff >= 1")
    return C * (5.0 * math.sqrt(r_eff * noise.spectral_norm) + math.sqrt(noise.trace)) / t0


def med_res(basis: SubspaceBasis, X: np.ndarray, batch_indices) -> float:
    """Median residual of the samples outside the batch.

    Residuals are computed for every column (the batch's are discarded
    before the median); this trades B extra residuals for never
    materializing the held-out submatrix.
    """
    n = X.shape[1]
    held_out = np.ones(n, dtype=bool)
    held_out[np.asarray(batch_indices, dtype=np.int64)] = False
    if not held_out.any():
        raise EmptyInput("batch covers every sample; nothing held out")
    return median(residual_norms(X, basis)[held_out])


def default_eta_floor(X: np.ndarray) -> float:
    """1e-9 times the median column norm: the noiseless stopping floor."""
    return 1e-9 * float(np.median(np.linalg.norm(X, axis=0)))


def coarse_estimate(
    X: np.ndarray, noise: NoiseModel, config: Stage1Config = Stage1Config(), seed: int = 0
) -> Stage1Result:
    """Run the doubling loop on the raw sample matrix.

    Batches are redrawn fresh (uniform, without replacement) at every
    doubling.  The loop runs for batch sizes B = initial_B * 2^k while
    B < min(d, n - 1); if no batch passes the threshold the last basis
    is returned flagged ``exhausted`` so sweeps can record the failure.
    The estimator sees only ``X``; inlier identity never enters.
    """
    X = np.asarray(X, dtype=np.float64)
    d, n = X.shape
    if n < 4:
        raise InsufficientSamples(f"need n >= 4 samples, got {n}")
    bound = min(d, n - 1)
    if config.initial_B >= bound:
        raise InsufficientSamples(
            f"doubling sequence empty: initial_B={config.initial_B} >= min(d, n-1)={bound}; "
            "use a smaller initial_B"
        )
    floor = config.eta_floor if config.eta_floor is not None else default_eta_floor(X)
    rng = rngutil.stream(seed, _TAG_BATCH)

    trace = []
    last = None
    B = config.initial_B
    while B < bound:
        batch_idx = rngutil.sample_without_replacement(rng, n, B)
        basis = orthonormal_basis(X[:, batch_idx], config.rank_tol)
        r_eff = config.r_star_hint if config.r_star_hint is not None else B
        thresh = max(eta_thresh(config.C, config.t0, r_eff, noise), floor)
        mr = med_res(basis, X, batch_idx)
        trace.append((B, mr))
        last = (basis, thresh)
        if mr <= thresh:
            return Stage1Result(basis, basis.r, thresh, tuple(trace), "threshold")
        B *= 2
    basis, thresh = last
    return Stage1Result(basis, basis.r, thresh, tuple(trace), "exhausted")
