"""Corrupted-dataset generation: planted low-rank model, Gaussian noise,
pluggable adversaries, and statistical diagnostics.

The contamination recipe: draw n clean samples from the planted
zero-mean low-rank model, add i.i.d. Gaussian noise per column
(producing the inliers), then let the adversary replace exactly
floor(eps * n) uniformly chosen columns with arbitrary points (the
outliers).  The inlier mask is carried on the dataset for metrics and
oracles only; estimators never see it.

Generation is deterministic given (model, n, seed): sub-streams for the
basis, the normalized samples, the noise, the replacement indices and
the outlier content are all derived from the seed with documented tags,
so e.g. changing the noise model does not shift which columns the
adversary replaces.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import rngutil
from .core import SubspaceBasis, orthonormal_basis
from .errors import InfeasibleAdversary, IoError, OddSampleCount, SchemaError

# seed-derivation tags (documented, frozen)
_TAG_USTAR = 1
_TAG_CLEAN = 2
_TAG_NOISE = 3
_TAG_ADV_IDX = 4
_TAG_ADV_CONTENT = 5

MAGIC = b"RSRK1"


@dataclass(frozen=True)
class CleanModel:
    """Planted covariance U* diag(eigenvalues) U*' with rank r_star."""

    U_star: SubspaceBasis
    eigenvalues: np.ndarray  # r_star positive, non-increasing
    distribution_kind: str = "gaussian"

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=np.float64).ravel()
        if ev.size != self.U_star.r:
            raise ValueError("eigenvalue count must equal basis dimension")
        if not np.all(ev > 0):
            raise ValueError("eigenvalues must be strictly positive")
        if np.any(np.diff(ev) > 0):
            raise ValueError("eigenvalues must be non-increasing")
        if self.distribution_kind != "gaussian":
            raise ValueError(f"unsupported distribution: {self.distribution_kind}")
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def d(self) -> int:
        return self.U_star.d

    @property
    def r_star(self) -> int:
        return self.U_star.r

    @property
    def gamma_min(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def gamma_max(self) -> float:
        return float(self.eigenvalues[0])


def random_clean_model(d: int, r_star: int, eigenvalues=None, seed: int = 0) -> CleanModel:
    """CleanModel with a uniformly random r_star-dim basis in R^d."""
    if eigenvalues is None:
        eigenvalues = np.ones(r_star)
    rng = rngutil.stream(seed, _TAG_USTAR)
    G = rng.standard_normal((d, r_star))
    return CleanModel(orthonormal_basis(G), np.asarray(eigenvalues, dtype=np.float64))


@dataclass(frozen=True)
class NoiseModel:
    """Noise covariance summary: kind plus tr and spectral norm.

    The estimator stages consume only ``trace`` and ``spectral_norm``;
    the sampler additionally needs ``variances`` for the diagonal kind.
    The isotropic convention matches the noise-sweep experiments:
    Sigma_xi = (sigma2 / d) I_d, so trace = sigma2 and
    spectral_norm = sigma2 / d.
    """

    kind: str  # {"zero", "isotropic", "diagonal"}
    sigma2: float = 0.0
    trace: float = 0.0
    spectral_norm: float = 0.0
    variances: np.ndarray | None = None  # diagonal kind only

    def __post_init__(self):
        if self.kind not in ("zero", "isotropic", "diagonal"):
            raise ValueError(f"unknown noise kind: {self.kind}")
        if self.kind == "zero" and (self.trace != 0.0 or self.spectral_norm != 0.0):
            raise ValueError("zero noise must have zero trace and norm")
        if self.trace < self.spectral_norm or self.spectral_norm < 0.0:
            raise ValueError("need trace >= spectral_norm >= 0")
        if self.variances is not None:
            object.__setattr__(
                self, "variances", np.asarray(self.variances, dtype=np.float64)
            )

    @staticmethod
    def zero() -> "NoiseModel":
        return NoiseModel(kind="zero")

    @staticmethod
    def isotropic(sigma2: float, d: int) -> "NoiseModel":
        if sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")
        if sigma2 == 0.0:
            return NoiseModel.zero()
        return NoiseModel(
            kind="isotropic", sigma2=float(sigma2),
            trace=float(sigma2), spectral_norm=float(sigma2) / d,
        )

    @staticmethod
    def diagonal(variances) -> "NoiseModel":
        v = np.asarray(variances, dtype=np.float64).ravel()
        if np.any(v < 0):
            raise ValueError("variances must be non-negative")
        if np.all(v == 0):
            return NoiseModel.zero()
        return NoiseModel(
            kind="diagonal", sigma2=float(v.sum()),
            trace=float(v.sum()), spectral_norm=float(v.max()), variances=v,
        )

    def doubled(self) -> "NoiseModel":
        """Noise summary after pairwise differencing: everything x2."""
        if self.kind == "zero":
            return self
        return replace(
            self, sigma2=2 * self.sigma2, trace=2 * self.trace,
            spectral_norm=2 * self.spectral_norm,
            variances=None if self.variances is None else 2 * self.variances,
        )


@dataclass(frozen=True)
class AdversaryStrategy:
    """What the adversary writes into the replaced columns.

    kinds:
      - ``none``: decline to act (the dataset keeps epsilon = 0)
      - ``orthogonal_lowrank(rank, scale)``: N(0, S) with rank(S) = rank,
        nonzero eigenvalues = scale, and span(S) orthogonal to span(U*)
      - ``inlier_mimic(scale)``: clean-model draws scaled by ``scale``
      - ``point_mass(direction, magnitude)``: one repeated point
    """

    kind: str = "none"
    rank: int = 2
    scale: float = 10.0
    direction: np.ndarray | None = None
    magnitude: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "orthogonal_lowrank", "inlier_mimic", "point_mass"):
            raise ValueError(f"unknown adversary kind: {self.kind}")
        if self.kind == "orthogonal_lowrank" and self.rank < 1:
            raise ValueError("orthogonal_lowrank needs rank >= 1")
        if self.direction is not None:
            object.__setattr__(
                self, "direction", np.asarray(self.direction, dtype=np.float64).ravel()
            )


@dataclass(frozen=True)
class CorruptedDataset:
    """Sample matrix with hidden provenance.

    ``inlier_mask`` is ground truth for metrics and the PCA oracle;
    estimators receive only ``X``.
    """

    X: np.ndarray
    epsilon: float
    inlier_mask: np.ndarray
    clean_model: CleanModel
    noise_model: NoiseModel
    seed: int

    @property
    def d(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def outlier_count(self) -> int:
        return int(np.sum(~self.inlier_mask))


def generate_clean(model: CleanModel, n: int, seed: int):
    """n clean samples: columns U* D*^(1/2) w_i with w_i ~ N(0, I_{r*}).

    Returns (X_clean, W) where W holds the normalized r* x n samples;
    every column of X_clean lies in span(U*) exactly.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    rng = rngutil.stream(seed, _TAG_CLEAN)
    W = rng.standard_normal((model.r_star, n))
    X = model.U_star.columns @ (np.sqrt(model.eigenvalues)[:, None] * W)
    return X, W


def apply_noise(X_clean: np.ndarray, noise: NoiseModel, seed: int) -> np.ndarray:
    """Add independent N(0, Sigma_xi) to each column.

    The zero kind returns the input object unchanged (bit-identical).
    """
    if noise.kind == "zero":
        return X_clean
    d, n = X_clean.shape
    rng = rngutil.stream(seed, _TAG_NOISE)
    if noise.kind == "isotropic":
        return X_clean + np.sqrt(noise.sigma2 / d) * rng.standard_normal((d, n))
    v = noise.variances
    if v is None or v.size != d:
        raise ValueError("diagonal noise needs one variance per coordinate")
    return X_clean + np.sqrt(v)[:, None] * rng.standard_normal((d, n))


def _outlier_columns(
    n_out: int, strategy: AdversaryStrategy, model: CleanModel, rng: np.random.Generator
) -> np.ndarray:
    d = model.d
    if strategy.kind == "orthogonal_lowrank":
        if strategy.rank > d - model.r_star:
            raise InfeasibleAdversary(
                f"rank {strategy.rank} adversary needs d - r* >= {strategy.rank}, "
                f"have {d - model.r_star}"
            )
        # basis of a random rank-dim subspace orthogonal to span(U*)
        U = model.U_star.columns
        G = rng.standard_normal((d, strategy.rank))
        G -= U @ (U.T @ G)
        Q = orthonormal_basis(G).columns
        Q -= U @ (U.T @ Q)  # second pass keeps orthogonality at machine scale
        Q = orthonormal_basis(Q).columns
        return Q @ (np.sqrt(strategy.scale) * rng.standard_normal((strategy.rank, n_out)))
    if strategy.kind == "inlier_mimic":
        W = rng.standard_normal((model.r_star, n_out))
        return strategy.scale * (
            model.U_star.columns @ (np.sqrt(model.eigenvalues)[:, None] * W)
        )
    if strategy.kind == "point_mass":
        u = strategy.direction
        if u is None or u.size != d:
            raise InfeasibleAdversary("point_mass needs a direction of ambient dim")
        nrm = np.linalg.norm(u)
        if nrm == 0:
            raise InfeasibleAdversary("point_mass direction must be nonzero")
        return np.tile((strategy.magnitude / nrm) * u[:, None], (1, n_out))
    raise InfeasibleAdversary(f"no outlier content for kind {strategy.kind}")


def apply_adversary(
    X: np.ndarray,
    epsilon: float,
    strategy: AdversaryStrategy,
    clean_model: CleanModel,
    seed: int,
    noise_model: NoiseModel | None = None,
) -> CorruptedDataset:
    """Replace exactly floor(eps * n) uniformly chosen columns.

    The replacement positions are uniform without replacement; the
    adversary's power lives in the column content, per the strategy.
    The ``none`` strategy declines to act and the returned dataset
    records epsilon = 0 so the mask-count invariant stays exact.
    """
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"need 0 <= eps < 1, got {epsilon}")
    d, n = X.shape
    noise_model = noise_model if noise_model is not None else NoiseModel.zero()
    n_out = int(np.floor(epsilon * n))
    mask = np.ones(n, dtype=bool)
    Xc = np.array(X, dtype=np.float64, copy=True)
    if strategy.kind == "none" or n_out == 0:
        eps_eff = 0.0 if strategy.kind == "none" else epsilon
        return CorruptedDataset(Xc, eps_eff, mask, clean_model, noise_model, seed)
    idx_rng = rngutil.stream(seed, _TAG_ADV_IDX)
    out_idx = rngutil.sample_without_replacement(idx_rng, n, n_out)
    content_rng = rngutil.stream(seed, _TAG_ADV_CONTENT)
    Xc[:, out_idx] = _outlier_columns(n_out, strategy, clean_model, content_rng)
    mask[out_idx] = False
    return CorruptedDataset(Xc, epsilon, mask, clean_model, noise_model, seed)


def make_dataset(
    model: CleanModel,
    noise: NoiseModel,
    strategy: AdversaryStrategy,
    epsilon: float,
    n: int,
    seed: int,
) -> CorruptedDataset:
    """Full pipeline: clean draw -> noise -> adversary, one seed."""
    X_clean, _ = generate_clean(model, n, seed)
    X_noisy = apply_noise(X_clean, noise, seed)
    return apply_adversary(X_noisy, epsilon, strategy, model, seed, noise_model=noise)


def pairwise_difference_matrix(X: np.ndarray) -> np.ndarray:
    """Columns x_1 - x_2, x_3 - x_4, ...; requires an even column count."""
    n = X.shape[1]
    if n % 2 != 0:
        raise OddSampleCount(f"pairwise differencing needs even n, got {n}")
    return X[:, 0::2] - X[:, 1::2]


def pairwise_difference(dataset: CorruptedDataset) -> CorruptedDataset:
    """Mean-removal preprocessing: consecutive pairwise differences.

    Halves n.  A difference column is an inlier iff both parents are;
    the recorded epsilon is the achieved outlier fraction (at most
    twice the parent epsilon).  Noise trace and spectral norm double,
    and the clean covariance doubles (span unchanged), since
    Var(x - y) = 2 Sigma for i.i.d. x, y.
    """
    D = pairwise_difference_matrix(dataset.X)
    half = D.shape[1]
    mask = dataset.inlier_mask[0::2] & dataset.inlier_mask[1::2]
    n_out = int(np.sum(~mask))
    model = CleanModel(
        dataset.clean_model.U_star,
        2.0 * dataset.clean_model.eigenvalues,
        dataset.clean_model.distribution_kind,
    )
    return CorruptedDataset(
        D, n_out / half, mask, model, dataset.noise_model.doubled(), dataset.seed
    )


@dataclass(frozen=True)
class SmallBallReport:
    min_fraction: float
    min_eigenvalue: float


def small_ball_diagnostic(
    W: np.ndarray, t0: float = 0.25, trials: int = 100, seed: int = 0
) -> SmallBallReport:
    """Empirical check of the anti-concentration condition on normalized samples.

    ``min_fraction`` is the minimum over random unit directions v of the
    fraction of samples with |v' w_i| >= t0 / 2; ``min_eigenvalue`` is
    the smallest eigenvalue of the empirical covariance (1/n) W W'.
    Purely diagnostic; never gates the pipeline.
    """
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    r, n = W.shape
    if n < 1 or trials < 1:
        raise ValueError("need n >= 1 and trials >= 1")
    rng = rngutil.stream(seed, 0xD1A6)
    V = rng.standard_normal((trials, r))
    norms = np.linalg.norm(V, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    V /= norms
    fractions = np.mean(np.abs(V @ W) >= t0 / 2.0, axis=1)
    eigs = np.linalg.eigvalsh((W @ W.T) / n)
    return SmallBallReport(float(fractions.min()), float(eigs[0]))


# --- binary container + JSON sidecar -----------------------------------------

_HEADER = struct.Struct("<5sIQId")  # magic, d, n, r_star, epsilon


def _noise_to_json(m: NoiseModel) -> dict:
    out = {"kind": m.kind, "sigma2": m.sigma2, "trace": m.trace,
           "spectral_norm": m.spectral_norm}
    if m.variances is not None:
        out["variances"] = m.variances.tolist()
    return out


def _noise_from_json(obj: dict) -> NoiseModel:
    return NoiseModel(
        kind=obj["kind"], sigma2=obj["sigma2"], trace=obj["trace"],
        spectral_norm=obj["spectral_norm"],
        variances=np.asarray(obj["variances"]) if "variances" in obj else None,
    )


def save_dataset(dataset: CorruptedDataset, path) -> None:
    """Write the binary container and its JSON sidecar.

    Layout: magic "RSRK1", then little-endian u32 d, u64 n, u32 r*,
    f64 epsilon, then the d x n matrix as column-major float64, then the
    inlier mask as n bytes.  Model metadata goes to ``<path>.json``.
    """
    path = Path(path)
    m = dataset.clean_model
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, dataset.d, dataset.n, m.r_star, dataset.epsilon))
            fh.write(np.asfortranarray(dataset.X).tobytes(order="F"))
            fh.write(dataset.inlier_mask.astype(np.uint8).tobytes())
        sidecar = {
            "format": "rsrk-sidecar",
            "version": 1,
            "seed": dataset.seed,
            "epsilon": dataset.epsilon,
            "clean_model": {
                "d": m.d,
                "r_star": m.r_star,
                "eigenvalues": m.eigenvalues.tolist(),
                "distribution_kind": m.distribution_kind,
                "U_star_column_major": np.asfortranarray(m.U_star.columns)
                .ravel(order="F").tolist(),
            },
            "noise_model": _noise_to_json(dataset.noise_model),
        }
        with open(path.with_name(path.name + ".json"), "w") as fh:
            json.dump(sidecar, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write dataset to {path}: {exc}") from exc


def load_dataset(path) -> CorruptedDataset:
    """Read a container written by save_dataset."""
    path = Path(path)
    try:
        raw = path.read_bytes()
        side = json.loads(path.with_name(path.name + ".json").read_text())
    except OSError as exc:
        raise IoError(f"cannot read dataset at {path}: {exc}") from exc
    if len(raw) < _HEADER.size or raw[:5] != MAGIC:
        raise SchemaError(f"{path} is not an RSRK1 container")
    magic, d, n, r_star, epsilon = _HEADER.unpack_from(raw, 0)
    need = _HEADER.size + 8 * d * n + n
    if len(raw) != need:
        raise SchemaError(f"{path}: expected {need} bytes, found {len(raw)}")
    X = np.frombuffer(raw, dtype="<f8", count=d * n, offset=_HEADER.size)
    X = X.reshape((d, n), order="F").copy()
    mask = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size + 8 * d * n).astype(bool)
    cm = side["clean_model"]
    if cm["d"] != d or cm["r_star"] != r_star:
        raise SchemaError(f"{path}: sidecar model does not match header")
    U = np.asarray(cm["U_star_column_major"], dtype=np.float64).reshape(
        (d, r_star), order="F"
    )
    model = CleanModel(SubspaceBasis(U), np.asarray(cm["eigenvalues"]),
                       cm.get("distribution_kind", "gaussian"))
    return CorruptedDataset(
        X, float(epsilon), mask, model, _noise_from_json(side["noise_model"]),
        int(side["seed"]),
    )
