"""Fine-grained estimation: repeated batch spectra, minimum aggregation,
eigengap rank detection.

Draw T uniform batches of the projected samples, take each batch's
(normalized) singular values, and keep the per-index minimum across
batches.  A batch free of outliers is rank-deficient beyond the true
rank (up to noise), so the minimum curve drops below the noise
threshold exactly at index r* + 1; the batch achieving that minimum
supplies the refined basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rngutil
from ._kernels import CHUNK, outer_table, sweep_chunk
from .core import SpectrumTable, SubspaceBasis
from .datagen import NoiseModel
from .errors import EpsilonTooLarge, InsufficientSamples

_TAG_S2 = 23


@dataclass(frozen=True)
class Stage2Config:
    """Sizing and detection knobs.

    ``epsilon`` is the assumed corruption fraction fed to the batch-count
    formula.  ``T_cap`` bounds the exponential batch count; a capped run
    weakens the all-inlier-batch event and is flagged.  ``B_override``
    replaces the sized batch width (clamped below by r-hat).
    ``spectra_cap`` bounds how many per-batch spectra are retained in
    the result table; sweeps larger than that keep only the aggregated
    minima (the estimate itself is unaffected).
    """

    C_prime: float = 4.0
    delta: float = 0.05
    epsilon: float = 0.0
    T_cap: int = 20000
    B_override: int | None = None
    normalize_spectra: bool = True
    spectra_cap: int = 20000

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if not 0.0 <= self.epsilon <= 0.5:
            raise ValueError(f"epsilon must be in [0, 0.5], got {self.epsilon}")
        if self.T_cap < 1:
            raise ValueError("T_cap must be >= 1")
        if self.C_prime <= 0:
            raise ValueError("C_prime must be positive")


@dataclass(frozen=True)
class Stage2Result:
    r_tilde: int
    k: int  # winning batch index
    spectrum: SpectrumTable
    gamma_hat: np.ndarray  # per-index minima of squared (normalized) values
    fine_basis: SubspaceBasis  # in R^{r_hat}
    lifted_basis: SubspaceBasis  # in R^d
    gap_found: bool
    T_used: int
    B_used: int
    capped: bool


def _t_for_b(B: int, epsilon: float, delta: float, T_cap: int):
    """Batch count for a given width: min(T_cap, ceil((1/(1-1.1eps))^B ln(1/delta)))."""
    base = 1.0 - 1.1 * epsilon
    if base <= 0.0:
        raise EpsilonTooLarge(f"1 - 1.1*eps <= 0 at eps={epsilon}")
    log_T = B * (-math.log(base)) + math.log(math.log(1.0 / delta))
    if log_T > 700.0:
        return T_cap, True
    T = math.ceil(math.exp(log_T))
    if T > T_cap:
        return T_cap, True
    return T, False


def stage2_sizing(
    r_hat: int, epsilon: float, delta: float, C_prime: float, T_cap: int
):
    """Batch width B and batch count T, with the exponential count capped.

    B = ceil(C' * max(r_hat, ln((3/delta) ln(1/delta))));
    T = min(T_cap, ceil((1 / (1 - 1.1 eps))^B * ln(1/delta))).
    Returns (B, T, capped).
    """
    if r_hat < 1:
        raise ValueError("r_hat must be >= 1")
    log_inv_delta = math.log(1.0 / delta)
    B = math.ceil(C_prime * max(r_hat, math.log((3.0 / delta) * log_inv_delta)))
    T, capped = _t_for_b(B, epsilon, delta, T_cap)
    return B, T, capped


def detect_rank(gamma_hat: np.ndarray, C_prime: float, noise: NoiseModel):
    """Smallest index whose successor minimum sits at the noise level.

    The threshold is C' times the noise spectral norm, floored at
    1e-12 times the leading minimum so exact rank deficiency is still
    detected when the noise is zero.  Returns (r_tilde, gap_found);
    when no index qualifies, r_tilde equals the list length and
    gap_found is False.
    """
    g = np.asarray(gamma_hat, dtype=np.float64).ravel()
    if g.size < 1:
        raise ValueError("empty minimum list")
    threshold = max(C_prime * noise.spectral_norm, 1e-12 * g[0])
    below = np.nonzero(g <= threshold)[0]
    if below.size == 0:
        return int(g.size), False
    return int(below[0]), True


def _as_xt(X_hat: np.ndarray) -> np.ndarray:
    X_hat = np.asarray(X_hat, dtype=np.float64)
    return np.ascontiguousarray(X_hat.T)


def dump_spectrum_csv(result: "Stage2Result", path) -> None:
    """Audit dump: one row per stored batch, columns sigma_1..sigma_rhat."""
    import csv

    table = result.spectrum.values
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"sigma_{i + 1}" for i in range(table.shape[1])])
        for row in table:
            w.writerow([repr(float(v)) for v in row])


def fine_estimate(
    X_hat: np.ndarray,
    V: SubspaceBasis,
    noise: NoiseModel,
    config: Stage2Config = Stage2Config(),
    seed: int = 0,
) -> Stage2Result:
    """Sweep T batches of the projected data and refine the subspace.

    Aggregation keeps, for every index i, the minimum over batches of
    the i-th squared (normalized) singular value, plus the batch that
    attains it; minima are updated on strict improvement only, so ties
    resolve to the smallest batch index.  The winning batch k is the
    argmin at index r_tilde + 1 (batch 0 when r_tilde equals r-hat and
    every batch ties at the virtual zero).  Its top-r_tilde left
    singular vectors, lifted through V, form the estimate.

    Batch membership is reproducible from (seed, batch index) alone:
    batches are generated in fixed chunks of CHUNK, each chunk's draws
    coming from a PCG64 stream keyed by mix64(seed, chunk).
    """
    X_hat = np.asarray(X_hat, dtype=np.float64)
    r_hat, n = X_hat.shape
    if r_hat != V.r:
        raise InsufficientSamples(
            f"projected data has {r_hat} rows but stage-1 basis has dim {V.r}"
        )
    if config.B_override is not None:
        B = max(int(config.B_override), r_hat)
        T, capped = _t_for_b(B, config.epsilon, config.delta, config.T_cap)
    else:
        B, T, capped = stage2_sizing(
            r_hat, config.epsilon, config.delta, config.C_prime, config.T_cap
        )
    if n < B:
        raise InsufficientSamples(f"need n >= B = {B} samples, got {n}")

    XT = _as_xt(X_hat)
    OT = outer_table(XT)
    keep_tables = T <= config.spectra_cap
    pool = np.arange(n, dtype=np.int64)
    mins = np.full(r_hat, np.inf)
    argmin_j = np.full(r_hat, -1, dtype=np.int64)
    argmin_cols = np.zeros((r_hat, B), dtype=np.int64)
    batch0_cols = np.zeros(B, dtype=np.int64)
    tables = (
        np.empty((T, r_hat)) if keep_tables else np.empty((1, r_hat))
    )
    n_chunks = (T + CHUNK - 1) // CHUNK
    for c in range(n_chunks):
        j0 = c * CHUNK
        k_batches = min(CHUNK, T - j0)
        rng = rngutil.stream(seed, _TAG_S2, c)
        rand_u = rng.integers(0, 1 << 63, size=(k_batches, B), dtype=np.uint64)
        chunk_tables = tables[j0 : j0 + k_batches] if keep_tables else tables
        sweep_chunk(
            OT, r_hat, n, rand_u, B, pool, mins, argmin_j, argmin_cols,
            batch0_cols, j0, not keep_tables, chunk_tables,
        )

    # minima are ascending-position eigenvalues of the unnormalized gram
    lam_desc = np.clip(mins[::-1], 0.0, None)  # descending eigenvalue minima
    scale = B if config.normalize_spectra else 1.0
    gamma_hat = lam_desc / scale
    r_tilde, gap_found = detect_rank(gamma_hat, config.C_prime, noise)

    if r_tilde >= r_hat:
        k = 0
        k_cols = batch0_cols
    else:
        asc_pos = r_hat - 1 - r_tilde  # descending index r_tilde+1 (1-based)
        k = int(argmin_j[asc_pos])
        k_cols = argmin_cols[asc_pos]
    r_basis = max(r_tilde, 1)  # a 0-dim basis is not representable

    Xk = X_hat[:, k_cols]
    Gk = Xk @ Xk.T
    evals, evecs = np.linalg.eigh(Gk)
    U_k = evecs[:, ::-1][:, :r_basis]
    fine_basis = SubspaceBasis(U_k)
    lifted = SubspaceBasis(V.columns @ U_k)

    if keep_tables:
        sigma = np.sqrt(np.clip(tables[:, ::-1], 0.0, None))
        if config.normalize_spectra:
            sigma = sigma / math.sqrt(B)
        spectrum = SpectrumTable(sigma, config.normalize_spectra, total_batches=T)
    else:
        spectrum = SpectrumTable(
            np.empty((0, r_hat)), config.normalize_spectra, total_batches=T
        )
    return Stage2Result(
        r_tilde=r_tilde, k=k, spectrum=spectrum, gamma_hat=gamma_hat,
        fine_basis=fine_basis, lifted_basis=lifted, gap_found=gap_found,
        T_used=T, B_used=B, capped=capped,
    )
