"""Evaluation harness: masking cross-validation, accuracy metrics,
variance calibration, call-rate curves, unregularized baselines and the
pooled-measurement noise study.

Everything here scores the engine against held-out truth on data the
caller provides (usually synthetic, see :mod:`linimpute.simulate`); the
reports are plain rows ready for TSV serialization.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import LengthMismatch, StrideTooLarge, ZeroVariance
from .impute import hard_calls, impute_frequencies, impute_individual_genotypes
from .noise import denoise_typed, fit_noise
from .shrinkage import MomentModel
from .types import FrequencyVector, Panel

Z_CALIBRATION_BINS = 20


@dataclass(frozen=True)
class MaskPlan:
    """Every ``stride``-th SNP starting at ``offset`` is held out."""

    stride: int
    offset: int

    def masked_indices(self, n_snps: int) -> np.ndarray:
        return np.arange(self.offset, n_snps, self.stride)


@dataclass
class EvalReport:
    """Scores for one fold (or an aggregate over folds)."""

    rmse: float
    error_rate: float | None = None
    z_scores: np.ndarray | None = None
    call_rate_curve: list[tuple[float, float, float | None]] | None = None
    baseline_rmse_by_k: dict[int, float] | None = None


@dataclass
class CvResult:
    folds: list[tuple[MaskPlan, EvalReport]]
    aggregate: EvalReport


def rmse(truth: np.ndarray, estimate: np.ndarray) -> float:
    truth = np.asarray(truth, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if truth.shape != estimate.shape or truth.size == 0:
        raise LengthMismatch("rmse needs two aligned nonempty vectors")
    return float(np.sqrt(np.mean((truth - estimate) ** 2)))


def genotype_error_rate(truth: np.ndarray, calls: np.ndarray) -> float:
    truth = np.asarray(truth)
    calls = np.asarray(calls)
    if truth.shape != calls.shape or truth.size == 0:
        raise LengthMismatch("error rate needs two aligned nonempty vectors")
    return float(np.mean(truth != calls))


def z_calibration(
    truths: np.ndarray,
    means: np.ndarray,
    variances: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Standardized errors and their counts in 20 equal-probability bins.

    Bin edges sit at the standard-normal percentiles, so a well-calibrated
    imputer fills all bins evenly.
    """
    truths = np.asarray(truths, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    if not (truths.shape == means.shape == variances.shape):
        raise LengthMismatch("z_calibration needs aligned vectors")
    if np.any(variances <= 0):
        raise ZeroVariance("all variances must be strictly positive")
    z = (truths - means) / np.sqrt(variances)
    edges = norm.ppf(np.linspace(0.0, 1.0, Z_CALIBRATION_BINS + 1))
    counts, _ = np.histogram(z, bins=edges)
    return z, counts


def call_rate_curve(
    variances: np.ndarray,
    errors: np.ndarray,
    thresholds: np.ndarray,
) -> list[tuple[float, float, float | None]]:
    """(threshold, call rate, error rate among called) rows.

    SNPs are called when their posterior variance is below the threshold;
    with nothing called the error rate is reported absent, not zero.
    """
    variances = np.asarray(variances, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if variances.shape != errors.shape:
        raise LengthMismatch("variances and errors must align")
    rows = []
    for thr in np.asarray(thresholds, dtype=np.float64):
        called = variances < thr
        rate = float(np.mean(called))
        err = float(np.mean(errors[called])) if called.any() else None
        rows.append((float(thr), rate, err))
    return rows


def _fold_frequencies(model, truth, plan, sigma2, eps2, pool_size):
    p = truth.size
    masked = plan.masked_indices(p)
    values = np.array(truth)
    values[masked] = np.nan
    assert np.all(np.isnan(values[masked]))  # no held-out value may leak
    res = impute_frequencies(
        model, FrequencyVector(values), sigma2=sigma2, eps2=eps2, pool_size=pool_size
    )
    errs = res.point[masked] - truth[masked]
    var = res.variance[masked]
    z = (truth[masked] - res.point[masked]) / np.sqrt(np.maximum(var, 1e-300))
    report = EvalReport(rmse=float(np.sqrt(np.mean(errs**2))), z_scores=z)
    return report, errs, None


def _fold_genotypes(model, truth, plan, sigma2, eps2, pool_size):
    n, p = truth.shape
    masked = plan.masked_indices(p)
    values = np.array(truth)
    values[:, masked] = np.nan
    assert np.all(np.isnan(values[:, masked]))
    res = impute_individual_genotypes(model, values, sigma2=sigma2)
    errs = (res.point[:, masked] - truth[:, masked]).ravel()
    calls = hard_calls(res.point[:, masked])
    error_rate = float(np.mean(calls != truth[:, masked]))
    report = EvalReport(rmse=float(np.sqrt(np.mean(errs**2))), error_rate=error_rate)
    wrong = float(np.sum(calls != truth[:, masked]))
    return report, errs, (wrong, errs.size)


def mask_cv(
    model: MomentModel,
    data: np.ndarray,
    k: int,
    mode: str = "frequencies",
    sigma2: float = 1.0,
    eps2: float = 0.0,
    pool_size: int | None = None,
    max_workers: int = 1,
) -> CvResult:
    """Hold out every k-th SNP at each of the k offsets and score imputation.

    ``mode="frequencies"`` expects the fully observed frequency vector and
    scores the posterior means against the held-out entries;
    ``mode="genotypes"`` expects an individuals-by-SNPs matrix and scores
    posterior mean genotypes plus rounded hard calls. The k offset folds
    partition the SNPs, so the aggregate report covers every SNP once.
    """
    data = np.asarray(data, dtype=np.float64)
    if mode not in ("frequencies", "genotypes"):
        raise ValueError(f"unknown mode {mode!r}")
    p = data.shape[-1]
    if k < 2 or k >= p:
        raise StrideTooLarge(f"need 2 <= k < {p}, got {k}")
    fold_fn = _fold_frequencies if mode == "frequencies" else _fold_genotypes
    plans = [MaskPlan(stride=k, offset=off) for off in range(k)]

    def run(plan):
        return fold_fn(model, data, plan, sigma2, eps2, pool_size)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outputs = list(pool.map(run, plans))
    else:
        outputs = [run(plan) for plan in plans]

    folds = [(plan, out[0]) for plan, out in zip(plans, outputs)]
    all_errs = np.concatenate([out[1] for out in outputs])
    zs = [out[0].z_scores for out in outputs if out[0].z_scores is not None]
    agg_error = None
    if mode == "genotypes":
        wrong = sum(out[2][0] for out in outputs)
        total = sum(out[2][1] for out in outputs)
        agg_error = wrong / total
    aggregate = EvalReport(
        rmse=float(np.sqrt(np.mean(all_errs**2))),
        error_rate=agg_error,
        z_scores=np.concatenate(zs) if zs else None,
    )
    return CvResult(folds=folds, aggregate=aggregate)


def baseline_unregularized(
    panel: Panel,
    observed: FrequencyVector,
    target_snp: int,
    k: int,
    scheme: str = "flanking",
    moments: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[float, bool]:
    """Linear prediction of one SNP from 2k typed predictors, unregularized.

    Uses the raw panel mean and covariance (no shrinkage, no mutation
    adjustment). ``scheme="flanking"`` takes the k nearest typed SNPs on each
    side; ``scheme="top-correlated"`` takes the 2k typed SNPs with the
    highest panel correlation, breaking ties by genomic distance then index.
    k = 0 returns the panel frequency. A singular predictor covariance falls
    back to a 1e-10 diagonal jitter and flags the estimate.

    Returns (estimate clamped to [0, 1], jitter flag).
    """
    from .shrinkage import empirical_moments

    if scheme not in ("flanking", "top-correlated"):
        raise ValueError(f"unknown scheme {scheme!r}")
    freq, cov = moments if moments is not None else empirical_moments(panel)
    typed = np.setdiff1d(observed.typed_indices, [target_snp])
    if k == 0 or typed.size == 0:
        return float(np.clip(freq[target_snp], 0.0, 1.0)), False

    if scheme == "flanking":
        below = typed[typed < target_snp][-k:]
        above = typed[typed > target_snp][:k]
        chosen = np.concatenate([below, above])
    else:
        var_t = cov[target_snp, target_snp]
        var_c = cov[typed, typed]
        with np.errstate(invalid="ignore", divide="ignore"):
            corr = np.abs(cov[target_snp, typed]) / np.sqrt(var_t * var_c)
        corr = np.where(np.isfinite(corr), corr, 0.0)
        positions = np.array([s.position for s in panel.snps])
        distance = np.abs(positions[typed] - positions[target_snp])
        order = np.lexsort((typed, distance, -corr))
        chosen = np.sort(typed[order[: 2 * k]])

    sub = cov[np.ix_(chosen, chosen)]
    cross = cov[target_snp, chosen]
    innov = observed.values[chosen] - freq[chosen]
    jittered = False
    try:
        weights = np.linalg.solve(sub, innov)
    except np.linalg.LinAlgError:
        jittered = True
        weights = np.linalg.solve(sub + 1e-10 * np.eye(chosen.size), innov)
    estimate = freq[target_snp] + float(cross @ weights)
    return float(np.clip(estimate, 0.0, 1.0)), jittered


@dataclass
class NoiseStudyRow:
    true_eps: float
    estimated_eps: float
    sigma2: float
    raw_rmse: float
    denoised_rmse: float


def simulate_noise_study(
    model: MomentModel,
    truth: np.ndarray,
    eps_grid: np.ndarray,
    rng: np.random.Generator,
    pool_size: int | None = None,
) -> list[NoiseStudyRow]:
    """Add i.i.d. Gaussian noise to true frequencies, fit, denoise, score.

    One row per grid point: the noise level used, the fitted noise level and
    overdispersion, and the accuracy of raw versus denoised estimates.
    """
    truth = np.asarray(truth, dtype=np.float64)
    rows = []
    for eps in np.asarray(eps_grid, dtype=np.float64):
        if not 0.0 < eps <= 0.5:
            raise ValueError("noise grid must lie in (0, 0.5]")
        obs = FrequencyVector(truth + rng.normal(0.0, eps, size=truth.size))
        noise = fit_noise(model, obs, pool_size=pool_size)
        denoised = denoise_typed(model, obs, noise, pool_size=pool_size)
        rows.append(
            NoiseStudyRow(
                true_eps=float(eps),
                estimated_eps=float(np.sqrt(noise.eps2)),
                sigma2=noise.sigma2,
                raw_rmse=rmse(truth, obs.values),
                denoised_rmse=rmse(truth, denoised.point),
            )
        )
    return rows
