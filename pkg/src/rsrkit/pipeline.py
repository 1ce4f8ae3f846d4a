"""Two-stage estimator: coarse doubling, projection, spectral refinement."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .core import SubspaceBasis, project
from .datagen import NoiseModel, pairwise_difference_matrix
from .errors import EpsilonTooLarge
from .stage1 import Stage1Config, Stage1Result, coarse_estimate
from .stage2 import Stage2Config, Stage2Result, fine_estimate


@dataclass(frozen=True)
class RansacPlusConfig:
    stage1: Stage1Config = Stage1Config()
    stage2: Stage2Config = Stage2Config()
    center: str = "none"  # {"none", "pairwise_difference"}

    def __post_init__(self):
        if self.center not in ("none", "pairwise_difference"):
            raise ValueError(f"unknown centering mode: {self.center}")


@dataclass(frozen=True)
class WallTimes:
    stage1_ms: int
    projection_ms: int
    stage2_ms: int

    @property
    def total_ms(self) -> int:
        return self.stage1_ms + self.projection_ms + self.stage2_ms


@dataclass(frozen=True)
class RecoveryResult:
    basis: SubspaceBasis  # = stage2_trace.lifted_basis, dim r_tilde in R^d
    r_hat: int
    r_tilde: int
    stage1_trace: Stage1Result
    stage2_trace: Stage2Result
    wall_times: WallTimes


def ransac_plus(
    X: np.ndarray,
    noise: NoiseModel,
    epsilon: float,
    config: RansacPlusConfig = RansacPlusConfig(),
    seed: int = 0,
) -> RecoveryResult:
    """Full recovery: optional mean-removal, coarse stage, projection,
    fine stage.

    Pairwise-difference centering halves n and doubles both the assumed
    corruption fraction and the noise parameters handed to the stages.
    The epsilon argument (the assumed contamination of ``X``) feeds the
    stage-2 batch-count formula; stage configs keep every other knob.
    Wall times use a monotonic clock, reported in integer milliseconds.
    """
    X = np.asarray(X, dtype=np.float64)
    if config.center == "pairwise_difference":
        X = pairwise_difference_matrix(X)
        noise = noise.doubled()
        epsilon = 2.0 * epsilon
    if not 0.0 <= epsilon <= 0.5:
        raise EpsilonTooLarge(
            f"assumed corruption fraction {epsilon} outside the supported [0, 0.5]"
        )

    t0 = time.monotonic()
    s1 = coarse_estimate(X, noise, config.stage1, seed)
    t1 = time.monotonic()
    X_hat = project(X, s1.basis)
    t2 = time.monotonic()
    s2_cfg = replace(config.stage2, epsilon=epsilon)
    s2 = fine_estimate(X_hat, s1.basis, noise, s2_cfg, seed)
    t3 = time.monotonic()

    return RecoveryResult(
        basis=s2.lifted_basis,
        r_hat=s1.r_hat,
        r_tilde=s2.r_tilde,
        stage1_trace=s1,
        stage2_trace=s2,
        wall_times=WallTimes(
            stage1_ms=int((t1 - t0) * 1000),
            projection_ms=int((t2 - t1) * 1000),
            stage2_ms=int((t3 - t2) * 1000),
        ),
    )
