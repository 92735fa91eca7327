import numpy as np
import pytest
from scipy.stats import spearmanr

from linimpute.errors import LengthMismatch, StrideTooLarge, ZeroVariance
from linimpute.evaluate import (
    MaskPlan,
    baseline_unregularized,
    call_rate_curve,
    genotype_error_rate,
    mask_cv,
    rmse,
    simulate_noise_study,
    z_calibration,
)
from linimpute.impute import hard_calls, impute_individual_genotypes
from linimpute.shrinkage import empirical_moments, fit_moment_model
from linimpute.simulate import (
    haplotypes_to_genotypes,
    sample_haplotypes,
    simulate_panel,
    simulate_rho_map,
)
from linimpute.types import FrequencyVector

from conftest import make_panel


@pytest.fixture(scope="module")
def synthetic():
    rng = np.random.default_rng(1234)
    p = 250
    rho = simulate_rho_map(p, rng, block_size=50, within_step_rho=0.25,
                           between_jump_rho=500.0)
    panel = simulate_panel(p, 120, rho, rng)
    model = fit_moment_model(panel, rho)
    haps = sample_haplotypes(panel, rho, 500, rng)
    return panel, rho, model, haps


class TestMaskPlan:
    def test_offsets(self):
        assert MaskPlan(stride=5, offset=0).masked_indices(10).tolist() == [0, 5]
        assert MaskPlan(stride=5, offset=3).masked_indices(10).tolist() == [3, 8]

    def test_partition(self):
        plans = [MaskPlan(stride=5, offset=o) for o in range(5)]
        union = np.concatenate([pl.masked_indices(12) for pl in plans])
        assert sorted(union.tolist()) == list(range(12))


class TestMetrics:
    def test_rmse_examples(self):
        assert rmse([0.5, 0.5], [0.4, 0.6]) == pytest.approx(0.1)
        assert rmse([0.3, 0.7], [0.3, 0.7]) == 0.0
        assert rmse([0.0, 1.0], [1.0, 0.0]) == pytest.approx(1.0)

    def test_rmse_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            rmse([0.1], [0.1, 0.2])

    def test_error_rate_examples(self):
        assert genotype_error_rate([0, 1, 2], [0, 1, 2]) == 0.0
        assert genotype_error_rate([0, 1, 2], [0, 1, 1]) == pytest.approx(1 / 3)
        assert genotype_error_rate([0, 1, 2], [1, 2, 0]) == 1.0

    def test_z_examples(self):
        z, _ = z_calibration([0.6], [0.5], [0.0025])
        assert z[0] == pytest.approx(2.0)
        z, _ = z_calibration([0.5], [0.5], [0.01])
        assert z[0] == 0.0

    def test_z_zero_variance(self):
        with pytest.raises(ZeroVariance):
            z_calibration([0.5], [0.5], [0.0])

    def test_z_bins_uniform_on_normal_draws(self, rng):
        z, counts = z_calibration(rng.normal(size=10000), np.zeros(10000), np.ones(10000))
        assert counts.sum() == 10000
        expected = 500.0
        chi2 = np.sum((counts - expected) ** 2 / expected)
        assert chi2 < 43.82  # chi-square 0.999 quantile, 19 dof

    def test_z_moments_calibrated_on_copying_model_sample(self, synthetic):
        # Copying-model samples sit on a 1/2n frequency lattice, so the
        # 20-bin shape test is not applicable, but the first two moments of
        # the standardized errors must still calibrate under the fitted
        # overdispersion.
        from linimpute.noise import fit_noise

        panel, rho, model, haps = synthetic
        y = haps.mean(axis=0)
        fit = fit_noise(model, FrequencyVector(y), estimate_eps=False,
                        pool_size=haps.shape[0])
        result = mask_cv(model, y, k=10, sigma2=fit.sigma2,
                         pool_size=haps.shape[0])
        z = result.aggregate.z_scores
        assert abs(np.mean(z)) < 0.15
        assert 0.85 < np.std(z) < 1.15


class TestCallRateCurve:
    def test_infinite_threshold_calls_everything(self):
        rows = call_rate_curve([0.1, 0.2], [1.0, 0.0], [np.inf])
        assert rows[0][1] == 1.0
        assert rows[0][2] == pytest.approx(0.5)

    def test_below_minimum_calls_nothing(self):
        rows = call_rate_curve([0.1, 0.2], [1.0, 0.0], [0.05])
        assert rows[0][1] == 0.0
        assert rows[0][2] is None

    def test_error_trend_on_synthetic_data(self, synthetic):
        panel, rho, model, haps = synthetic
        g = haplotypes_to_genotypes(haps[:200])
        masked = np.array(g)
        masked[:, ::10] = np.nan
        res = impute_individual_genotypes(model, masked)
        cols = np.arange(0, g.shape[1], 10)
        variances = res.variance[0, cols]
        errors = (hard_calls(res.point[:, cols]) != g[:, cols]).mean(axis=0)
        thresholds = np.quantile(variances, np.linspace(0.05, 1.0, 12))
        rows = [r for r in call_rate_curve(variances, errors, thresholds) if r[2] is not None]
        call_rates = [r[1] for r in rows]
        errs = [r[2] for r in rows]
        rho_s = spearmanr(call_rates, errs).statistic
        assert rho_s > 0


class TestMaskCv:
    def test_stride_bounds(self, synthetic):
        _, _, model, haps = synthetic
        y = haps.mean(axis=0)
        with pytest.raises(StrideTooLarge):
            mask_cv(model, y, k=1)
        with pytest.raises(StrideTooLarge):
            mask_cv(model, y, k=y.size)

    def test_frequency_folds_partition_and_beat_naive(self, synthetic):
        panel, rho, model, haps = synthetic
        y = haps.mean(axis=0)
        result = mask_cv(model, y, k=10)
        assert len(result.folds) == 10
        covered = np.concatenate(
            [plan.masked_indices(y.size) for plan, _ in result.folds]
        )
        assert sorted(covered.tolist()) == list(range(y.size))
        naive = rmse(y, model.panel_freq)
        assert result.aggregate.rmse < naive

    def test_genotype_mode_reports_error_rate(self, synthetic):
        panel, rho, model, haps = synthetic
        g = haplotypes_to_genotypes(haps[:100])
        result = mask_cv(model, g, k=25, mode="genotypes")
        assert result.aggregate.error_rate is not None
        assert 0.0 <= result.aggregate.error_rate < 0.5
        assert result.aggregate.rmse < rmse(g[:, ::1] * 0, g) * 10  # sanity

    def test_parallel_matches_serial(self, synthetic):
        _, _, model, haps = synthetic
        y = haps.mean(axis=0)
        serial = mask_cv(model, y, k=5)
        threaded = mask_cv(model, y, k=5, max_workers=4)
        assert serial.aggregate.rmse == threaded.aggregate.rmse
        for (_, a), (_, b) in zip(serial.folds, threaded.folds):
            assert a.rmse == b.rmse


class TestBaseline:
    def test_perfect_copy_predictor(self):
        panel = make_panel(["001", "010", "111", "100", "011", "110"])
        # make column 2 a perfect copy of column 0
        data = np.array(panel.data)
        data[:, 2] = data[:, 0]
        panel = make_panel(data)
        y = np.array([0.41, 0.77, np.nan])
        est, flagged = baseline_unregularized(
            panel, FrequencyVector(y), target_snp=2, k=1, scheme="top-correlated"
        )
        assert est == pytest.approx(0.41, abs=1e-9)

    def test_k_zero_returns_panel_frequency(self, synthetic):
        panel, rho, model, haps = synthetic
        y = np.array(haps.mean(axis=0))
        y[7] = np.nan
        est, flagged = baseline_unregularized(panel, FrequencyVector(y), 7, k=0)
        assert est == pytest.approx(model.panel_freq[7])
        assert not flagged

    def test_singular_predictors_fall_back_to_jitter(self):
        rows = ["0011", "0111", "1011", "0001"]
        data = np.array([[float(c) for c in r] for r in rows])
        data[:, 1] = data[:, 0]  # duplicated predictors make Sigma singular
        data[:, 2] = data[:, 0]
        panel = make_panel(data)
        y = np.array([0.4, 0.4, 0.4, np.nan])
        est, flagged = baseline_unregularized(panel, FrequencyVector(y), 3, k=2,
                                              scheme="flanking")
        assert flagged
        assert 0.0 <= est <= 1.0

    def test_flanking_sweep_never_beats_full_model(self, synthetic):
        # Desk-scale version of the regularization comparison: the best
        # small-predictor unregularized estimator still loses to the full
        # shrinkage model.
        panel, rho, model, haps = synthetic
        y = haps.mean(axis=0)
        result = mask_cv(model, y, k=25)
        moments = empirical_moments(panel)
        best = np.inf
        for k in (1, 2, 4, 8, 16, 25):
            errs = []
            for plan, _ in result.folds:
                masked = plan.masked_indices(y.size)
                values = np.array(y)
                values[masked] = np.nan
                fv = FrequencyVector(values)
                for t in masked:
                    est, _ = baseline_unregularized(panel, fv, int(t), k,
                                                    moments=moments)
                    errs.append(est - y[t])
            best = min(best, float(np.sqrt(np.mean(np.square(errs)))))
        assert best > result.aggregate.rmse


class TestNoiseStudy:
    def test_grid_rows_and_monotone_estimates(self, synthetic):
        panel, rho, model, haps = synthetic
        truth = haps.mean(axis=0)
        rng = np.random.default_rng(77)
        grid = [0.01, 0.05, 0.1, 0.18]
        rows = simulate_noise_study(model, truth, grid, rng)
        assert [r.true_eps for r in rows] == grid
        est = [r.estimated_eps for r in rows]
        assert all(b > a for a, b in zip(est, est[1:]))
        at_05 = rows[1]
        assert at_05.denoised_rmse < at_05.raw_rmse
