import numpy as np
import pytest

from rsrkit.core import (
    batch_singular_values,
    orthonormal_basis,
    subspace_distance,
)
from rsrkit.datagen import (
    AdversaryStrategy,
    NoiseModel,
    make_dataset,
    random_clean_model,
)
from rsrkit.errors import EpsilonTooLarge, InsufficientSamples
from rsrkit.rngutil import stream
from rsrkit.stage1 import coarse_estimate
from rsrkit.stage2 import Stage2Config, detect_rank, fine_estimate, stage2_sizing
from rsrkit._kernels import CHUNK

ORTH2 = AdversaryStrategy("orthogonal_lowrank", rank=2, scale=10.0)


class TestSizing:
    def test_eps_zero(self):
        B, T, capped = stage2_sizing(5, 0.0, 0.05, 4.0, 20000)
        assert T == 3 and not capped

    def test_derived_B(self):
        B, _, _ = stage2_sizing(20, 0.0, 0.05, 4.0, 20000)
        assert B == 80  # ln(60 ln 20) = 5.19 < 20

    def test_log_term_binds_for_small_r_hat(self):
        B, _, _ = stage2_sizing(1, 0.0, 0.05, 4.0, 20000)
        assert B == int(np.ceil(4.0 * np.log((3 / 0.05) * np.log(1 / 0.05))))

    def test_capped_at_huge_T(self):
        B, T, capped = stage2_sizing(20, 0.2, 0.05, 4.0, 20000)
        assert B == 80
        assert capped and T == 20000
        # uncapped count would be astronomically larger
        raw = (1 / (1 - 1.1 * 0.2)) ** 80 * np.log(1 / 0.05)
        assert raw > 1e9

    def test_epsilon_too_large(self):
        with pytest.raises(EpsilonTooLarge):
            stage2_sizing(5, 0.95, 0.05, 4.0, 20000)

    def test_config_sanity_bound(self):
        with pytest.raises(ValueError):
            Stage2Config(epsilon=0.7)


class TestDetectRank:
    def test_noiseless_gap_via_floor(self):
        r, found = detect_rank([1.0, 0.9, 1e-13], 4.0, NoiseModel.zero())
        assert (r, found) == (2, True)

    def test_value_above_floor_is_not_a_gap(self):
        # the absolute floor is 1e-12 of the leading minimum; 1e-6 clears it
        r, found = detect_rank([1.0, 0.9, 1e-6], 4.0, NoiseModel.zero())
        assert (r, found) == (3, False)

    def test_no_gap(self):
        r, found = detect_rank([1.0, 0.9, 0.8], 4.0, NoiseModel.zero())
        assert (r, found) == (3, False)

    def test_noise_threshold(self):
        noise = NoiseModel.isotropic(0.01, 100)  # spectral norm 1e-4
        r, found = detect_rank([1.0, 0.5, 3.9e-4, 1e-6], 4.0, noise)
        assert (r, found) == (2, True)

    def test_all_below_threshold(self):
        noise = NoiseModel.isotropic(1.0, 10)
        r, found = detect_rank([0.01, 0.005], 4.0, noise)
        assert (r, found) == (0, True)


def _planted_projection(d, r_star, r_hat, n, eps, seed, sigma2=0.0):
    """Stage-1-free fixture: V contains the planted span plus padding."""
    model = random_clean_model(d, r_star, np.ones(r_star), seed=seed)
    noise = NoiseModel.isotropic(sigma2, d) if sigma2 > 0 else NoiseModel.zero()
    ds = make_dataset(model, noise, ORTH2, eps, n, seed=seed)
    rng = stream(seed, 777)
    pad = rng.standard_normal((d, r_hat - r_star))
    V = orthonormal_basis(np.hstack([model.U_star.columns, pad]))
    assert V.r == r_hat
    X_hat = V.columns.T @ ds.X
    return model, noise, ds, V, X_hat


class TestFineEstimate:
    def test_noiseless_exact_recovery(self):
        model, noise, ds, V, X_hat = _planted_projection(40, 5, 8, 400, 0.0, seed=1)
        res = fine_estimate(X_hat, V, noise, Stage2Config(epsilon=0.0), seed=1)
        assert res.r_tilde == 5
        assert subspace_distance(res.lifted_basis, model.U_star) <= 1e-8

    def test_contaminated_recovery(self):
        model, noise, ds, V, X_hat = _planted_projection(40, 5, 8, 400, 0.2, seed=2)
        res = fine_estimate(X_hat, V, noise, Stage2Config(epsilon=0.2), seed=2)
        assert res.r_tilde == 5
        assert subspace_distance(res.lifted_basis, model.U_star) <= 1e-8
        assert res.gap_found

    def test_gamma_monotone_and_dominated_by_all_rows(self):
        model, noise, ds, V, X_hat = _planted_projection(30, 4, 7, 300, 0.1, seed=3)
        res = fine_estimate(X_hat, V, noise, Stage2Config(epsilon=0.1), seed=3)
        g = res.gamma_hat
        assert np.all(np.diff(g) <= 1e-15)
        tab = res.spectrum.values
        assert tab.shape[0] == res.T_used
        assert np.all(np.diff(tab, axis=1) <= 1e-12)
        assert np.all(g <= tab.min(axis=0) ** 2 + 1e-12)

    def test_table_matches_public_singular_values(self):
        # dual route: the sweep kernel's spectra equal the SVD-based op
        model, noise, ds, V, X_hat = _planted_projection(30, 4, 7, 300, 0.1, seed=4)
        cfg = Stage2Config(epsilon=0.1)
        res = fine_estimate(X_hat, V, noise, cfg, seed=4)
        # regenerate the first chunk's batches exactly as the kernel does
        from rsrkit import rngutil

        B = res.B_used
        n = X_hat.shape[1]
        rng = rngutil.stream(4, 23, 0)
        ru = rng.integers(0, 1 << 63, size=(min(res.T_used, CHUNK), B), dtype=np.uint64)
        pool = np.arange(n, dtype=np.int64)
        for b in range(min(res.T_used, 50)):
            for t in range(B):
                j = t + int(ru[b, t] % np.uint64(n - t))
                pool[t], pool[j] = pool[j], pool[t]
            idx = pool[:B].copy()
            for t in range(B - 1, -1, -1):
                j = t + int(ru[b, t] % np.uint64(n - t))
                pool[t], pool[j] = pool[j], pool[t]
            ref = batch_singular_values(X_hat[:, idx], normalize=True)
            got = res.spectrum.values[b]
            # gram-route values agree with the SVD route on the eigenvalue
            # scale; near-zero singular values only carry half the digits
            assert np.abs(ref**2 - got**2).max() <= 1e-10 * max(1.0, ref[0] ** 2)

    def test_determinism_and_tie_break(self):
        model, noise, ds, V, X_hat = _planted_projection(30, 4, 7, 300, 0.2, seed=5)
        cfg = Stage2Config(epsilon=0.2)
        a = fine_estimate(X_hat, V, noise, cfg, seed=5)
        b = fine_estimate(X_hat, V, noise, cfg, seed=5)
        assert a.k == b.k and a.r_tilde == b.r_tilde
        assert np.array_equal(a.gamma_hat, b.gamma_hat)

    def test_skip_mode_equals_table_mode(self):
        # spectra retention must not change the estimate
        model, noise, ds, V, X_hat = _planted_projection(30, 4, 7, 300, 0.2, seed=6)
        full = fine_estimate(X_hat, V, noise, Stage2Config(epsilon=0.2), seed=6)
        skim = fine_estimate(
            X_hat, V, noise, Stage2Config(epsilon=0.2, spectra_cap=0), seed=6
        )
        assert skim.spectrum.stored_batches == 0
        assert skim.spectrum.total_batches == full.T_used
        assert skim.k == full.k and skim.r_tilde == full.r_tilde
        assert np.array_equal(skim.gamma_hat, full.gamma_hat)
        assert subspace_distance(skim.lifted_basis, full.lifted_basis) <= 1e-12

    def test_all_inlier_batch_rank_deficiency(self):
        model, noise, ds, V, X_hat = _planted_projection(40, 5, 9, 400, 0.0, seed=7)
        s = batch_singular_values(X_hat[:, :30], normalize=True)
        assert s[5] <= 1e-12 * s[0]

    def test_insufficient_samples(self):
        model, noise, ds, V, X_hat = _planted_projection(30, 4, 7, 300, 0.0, seed=8)
        with pytest.raises(InsufficientSamples):
            fine_estimate(X_hat[:, :20], V, noise, Stage2Config(epsilon=0.0), seed=8)

    def test_b_override_and_capped_flag(self):
        model, noise, ds, V, X_hat = _planted_projection(30, 4, 7, 300, 0.2, seed=9)
        cfg = Stage2Config(epsilon=0.2, B_override=20, T_cap=100)
        res = fine_estimate(X_hat, V, noise, cfg, seed=9)
        assert res.B_used == 20
        assert res.capped and res.T_used == 100

    def test_gap_not_found_returns_r_hat(self):
        rng = np.random.default_rng(10)
        X = rng.standard_normal((6, 200))  # full-rank cloud: no spectral gap
        V = orthonormal_basis(np.vstack([np.eye(6), np.zeros((4, 6))]))
        X_hat = X
        res = fine_estimate(X_hat, V, NoiseModel.zero(), Stage2Config(epsilon=0.0), seed=10)
        assert not res.gap_found
        assert res.r_tilde == 6
        assert res.k == 0
        assert res.lifted_basis.r == 6

    def test_raw_spectra_ablation(self):
        # with normalization off the stored values are raw singular values
        # (sqrt(B) times larger) and detection compares raw squares
        model, noise, ds, V, X_hat = _planted_projection(30, 4, 7, 300, 0.1, seed=12)
        on = fine_estimate(X_hat, V, noise, Stage2Config(epsilon=0.1), seed=12)
        off = fine_estimate(
            X_hat, V, noise, Stage2Config(epsilon=0.1, normalize_spectra=False),
            seed=12,
        )
        assert not off.spectrum.normalized
        B = on.B_used
        assert np.allclose(off.spectrum.values, np.sqrt(B) * on.spectrum.values)
        assert np.allclose(off.gamma_hat, B * on.gamma_hat)
        # noiseless-floor detection is scale-free, so the rank agrees here
        assert off.r_tilde == on.r_tilde

    def test_spectrum_audit_dump(self, tmp_path):
        from rsrkit.stage2 import dump_spectrum_csv

        model, noise, ds, V, X_hat = _planted_projection(30, 4, 7, 300, 0.1, seed=11)
        res = fine_estimate(X_hat, V, noise, Stage2Config(epsilon=0.1), seed=11)
        p = tmp_path / "spectra.csv"
        dump_spectrum_csv(res, p)
        lines = p.read_text().splitlines()
        assert lines[0] == ",".join(f"sigma_{i + 1}" for i in range(7))
        assert len(lines) == 1 + res.T_used
        first = np.array([float(v) for v in lines[1].split(",")])
        assert np.allclose(first, res.spectrum.values[0])

    def test_noise_error_scaling_slope(self):
        # doubling the noise std roughly doubles the recovery error
        errs = []
        for sigma2 in (1e-4, 4e-4):
            trial_errs = []
            detected = 0
            for s in range(12):
                model, noise, ds, V, X_hat = _planted_projection(
                    40, 5, 8, 400, 0.1, seed=100 + s, sigma2=sigma2
                )
                cfg = Stage2Config(epsilon=0.1, delta=0.01)
                res = fine_estimate(X_hat, V, noise, cfg, seed=s)
                if res.r_tilde == 5:
                    detected += 1
                    trial_errs.append(subspace_distance(res.lifted_basis, model.U_star))
            assert detected >= 11
            errs.append(np.mean(trial_errs))
        assert 1.4 <= errs[1] / errs[0] <= 2.8
