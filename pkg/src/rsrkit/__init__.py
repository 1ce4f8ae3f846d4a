"""Robust subspace recovery under adversarial and Gaussian corruption.

Library layout:

- :mod:`rsrkit.core` -- bases, projections, spectra, medians
- :mod:`rsrkit.datagen` -- corrupted-dataset generation and containers
- :mod:`rsrkit.stage1` -- coarse estimation by batch doubling
- :mod:`rsrkit.stage2` -- fine estimation by batch-spectrum minima
- :mod:`rsrkit.pipeline` -- the composed two-stage estimator
- :mod:`rsrkit.baselines` -- classic consensus sampling, oracle PCA
- :mod:`rsrkit.harness` -- seeded sweeps, CSV records, summaries
"""

from .core import (
    SpectrumTable,
    SubspaceBasis,
    batch_singular_values,
    median,
    orthonormal_basis,
    project,
    projection_residual,
    subspace_distance,
)
from .datagen import (
    AdversaryStrategy,
    CleanModel,
    CorruptedDataset,
    NoiseModel,
    apply_adversary,
    apply_noise,
    generate_clean,
    load_dataset,
    make_dataset,
    pairwise_difference,
    random_clean_model,
    save_dataset,
    small_ball_diagnostic,
)
from .pipeline import RansacPlusConfig, RecoveryResult, ransac_plus
from .stage1 import Stage1Config, Stage1Result, coarse_estimate, eta_thresh, med_res
from .stage2 import Stage2Config, Stage2Result, detect_rank, fine_estimate, stage2_sizing
from .baselines import ClassicRansacConfig, classic_ransac, oracle_pca

__version__ = "0.1.0"
