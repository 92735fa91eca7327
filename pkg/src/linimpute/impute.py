"""Posterior imputation of allele frequencies, genotype frequencies and
individual genotypes from a fitted moment model.

All point estimates are linear in the observed values; variances come from
the Gaussian conditional. Pools of 2n haplotypes use the per-haplotype
covariance scaled by 1/(2n); an individual is a pool of two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .banded import BandedSpdMatrix, conditional_gaussian
from .errors import (
    InvalidGenotypeFrequencies,
    LengthMismatch,
    NoTypedSnps,
)
from .shrinkage import MomentModel
from .types import FrequencyVector


@dataclass(frozen=True)
class ImputationResult:
    """Posterior point estimates and variances, with typed/untyped status.

    ``point`` and ``variance`` may be 1-D (one target vector) or 2-D
    (individuals x SNPs). ``clamped`` marks entries whose posterior mean was
    pulled back into the valid range.
    """

    point: np.ndarray
    variance: np.ndarray
    typed: np.ndarray
    clamped: np.ndarray

    @property
    def untyped_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.typed)


@dataclass(frozen=True)
class GenotypeFreqResult:
    """Per-SNP genotype frequencies; p1 is always the complement of p0 + p2."""

    p0: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    method: str


def _clamp_unit(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    clipped = np.clip(values, 0.0, 1.0)
    return clipped, clipped != values


def _pool_scale(pool_size: int | None) -> float:
    if pool_size is None:
        return 1.0
    if pool_size < 1:
        raise ValueError("pool size (haplotype count) must be >= 1")
    return float(pool_size)


def impute_frequencies(
    model: MomentModel,
    observed: FrequencyVector,
    sigma2: float = 1.0,
    eps2: float = 0.0,
    pool_size: int | None = None,
) -> ImputationResult:
    """Posterior mean and variance of untyped allele frequencies.

    With overdispersion ``sigma2`` and measurement error ``eps2`` the typed
    block is inflated by ``eps2 / sigma2`` on its diagonal and the posterior
    variance is scaled by ``sigma2``. ``pool_size`` is the haplotype count 2n
    of the sample whose frequencies are observed; the prior covariance is
    divided by it. Typed entries pass through with zero variance. Means are
    clamped to [0, 1] and flagged.

    Parameters
    ----------
    model : fitted prior.
    observed : typed frequencies, untyped entries unset.
    sigma2, eps2 : overdispersion and measurement-error variance.
    pool_size : haplotypes in the pool; None leaves the prior covariance
        unscaled (equivalent to folding the factor into sigma2).
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    if eps2 < 0:
        raise ValueError("eps2 must be nonnegative")
    if len(observed) != model.n_snps:
        raise LengthMismatch("observed vector does not match the model")
    typed_idx = observed.typed_indices
    if typed_idx.size == 0:
        raise NoTypedSnps("imputation needs at least one typed SNP")

    point = np.where(observed.typed, observed.values, np.nan)
    variance = np.zeros(model.n_snps)
    clamped = np.zeros(model.n_snps, dtype=bool)

    untyped_idx = observed.untyped_indices
    if untyped_idx.size:
        scale = _pool_scale(pool_size)
        mean_u, var_u = conditional_gaussian(
            model.mu_hat,
            model.sigma_hat,
            typed_idx,
            observed.values[typed_idx],
            inflation=scale * eps2 / sigma2,
        )
        point[untyped_idx], clamped[untyped_idx] = _clamp_unit(mean_u)
        variance[untyped_idx] = sigma2 * var_u / scale

    return ImputationResult(point, variance, np.array(observed.typed), clamped)


def genotype_freq_hwe(freq_mean, freq_variance):
    """Expected genotype frequencies under Hardy-Weinberg equilibrium.

    p0 = (1 - m)^2 + v and p2 = m^2 + v, with p1 the complement. Inputs may
    be scalars or arrays. Each output is clamped to [0, 1]; if the clamped
    p0 + p2 exceed 1 they are rescaled so p1 stays a valid complement.
    """
    mean = np.asarray(freq_mean, dtype=np.float64)
    var = np.asarray(freq_variance, dtype=np.float64)
    if np.any(var < 0):
        raise ValueError("variance must be nonnegative")
    p0 = np.clip((1.0 - mean) ** 2 + var, 0.0, 1.0)
    p2 = np.clip(mean**2 + var, 0.0, 1.0)
    p0, p1, p2 = _complement_simplex(p0, p2)
    if np.isscalar(freq_mean) and np.isscalar(freq_variance):
        return float(p0), float(p1), float(p2)
    return p0, p1, p2


def _complement_simplex(p0, p2):
    """Force (p0, p1, p2) onto the simplex with p1 = 1 - p0 - p2."""
    total = p0 + p2
    over = total > 1.0
    if np.any(over):
        p0 = np.where(over, p0 / total, p0)
        p2 = np.where(over, p2 / total, p2)
    p1 = np.maximum((1.0 - p0) - p2, 0.0)
    return p0, p1, p2


def hwe_genotype_frequencies(result: ImputationResult) -> GenotypeFreqResult:
    """HWE-route genotype frequencies from an allele-frequency imputation."""
    p0, p1, p2 = genotype_freq_hwe(result.point, result.variance)
    return GenotypeFreqResult(p0, p1, p2, method="hwe")


@dataclass(frozen=True)
class GenotypeMomentModel:
    """Joint moments of the per-SNP genotype indicators (g=0, g=2).

    The mean stacks pairs (E 1{g=0}, E 1{g=2}) per SNP; the covariance is
    banded with bandwidth 2b + 1 where b is the haplotype-model bandwidth.
    """

    mean: np.ndarray
    sigma: BandedSpdMatrix

    @property
    def n_snps(self) -> int:
        return self.mean.size // 2


def fit_genotype_moment_model(model: MomentModel) -> GenotypeMomentModel:
    """Indicator-level moment model for genotype-frequency imputation.

    Within a SNP the two indicators have variances q(1 - q) and covariance
    -q0 q2; across SNPs every entry reduces to a polynomial in the haplotype
    means and covariance because the two haplotypes of an individual are
    independent draws, e.g. Cov(1{gs=2}, 1{gt=2}) = c^2 + 2 a b c with
    a = E h_s, b = E h_t, c = Cov(h_s, h_t).
    """
    mu = model.mu_hat
    p = mu.size
    bw = model.sigma_hat.bandwidth
    q0 = (1.0 - mu) ** 2
    q2 = mu**2

    mean = np.empty(2 * p)
    mean[0::2] = q0
    mean[1::2] = q2

    gbands = np.zeros((2 * bw + 2, 2 * p))
    gbands[0, 0::2] = q0 * (1.0 - q0)
    gbands[0, 1::2] = q2 * (1.0 - q2)
    gbands[1, 0::2] = -q0 * q2
    for k in range(1, bw + 1):
        c = model.sigma_hat.bands[k, : p - k]
        a = mu[: p - k]
        b = mu[k:]
        cc = c * c
        cols0 = 2 * np.arange(p - k)
        cols1 = cols0 + 1
        gbands[2 * k, cols0] = cc + 2.0 * (1.0 - a) * (1.0 - b) * c
        gbands[2 * k + 1, cols0] = cc - 2.0 * (1.0 - a) * b * c
        gbands[2 * k - 1, cols1] = cc - 2.0 * a * (1.0 - b) * c
        gbands[2 * k, cols1] = cc + 2.0 * a * b * c

    sigma = BandedSpdMatrix(2 * p, 2 * bw + 1, gbands)
    return GenotypeMomentModel(mean=mean, sigma=sigma)


def impute_genotype_frequencies(
    geno_model: GenotypeMomentModel,
    p0: np.ndarray,
    p2: np.ndarray,
    typed: np.ndarray,
) -> GenotypeFreqResult:
    """Impute genotype frequencies without assuming HWE.

    Conditions the stacked indicator vector on the observed (p0, p2) pairs of
    typed SNPs; p1 is recovered as the complement and results are clamped to
    the simplex. Typed SNPs echo their observations.
    """
    p = geno_model.n_snps
    typed = np.asarray(typed, dtype=bool)
    p0 = np.asarray(p0, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    if typed.shape != (p,) or p0.shape != (p,) or p2.shape != (p,):
        raise LengthMismatch("p0/p2/typed must all have one entry per SNP")
    tidx = np.flatnonzero(typed)
    if tidx.size == 0:
        raise NoTypedSnps("at least one typed SNP is required")
    obs0 = p0[tidx]
    obs2 = p2[tidx]
    bad = (obs0 < -1e-12) | (obs2 < -1e-12) | (obs0 + obs2 > 1.0 + 1e-12)
    if np.any(bad):
        raise InvalidGenotypeFrequencies(
            f"{int(bad.sum())} typed SNPs violate p0, p2 >= 0 and p0 + p2 <= 1"
        )

    out0 = np.array(p0, dtype=np.float64)
    out2 = np.array(p2, dtype=np.float64)
    uidx = np.flatnonzero(~typed)
    if uidx.size:
        typed2 = np.empty(2 * tidx.size, dtype=np.intp)
        typed2[0::2] = 2 * tidx
        typed2[1::2] = 2 * tidx + 1
        y2 = np.empty(2 * tidx.size)
        y2[0::2] = obs0
        y2[1::2] = obs2
        mean_u, _ = conditional_gaussian(geno_model.mean, geno_model.sigma, typed2, y2)
        out0[uidx] = np.clip(mean_u[0::2], 0.0, 1.0)
        out2[uidx] = np.clip(mean_u[1::2], 0.0, 1.0)

    out0, out1, out2 = _complement_simplex(out0, out2)
    return GenotypeFreqResult(out0, out1, out2, method="joint-indicator")


def group_rows_by_pattern(typed_mask: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Group row indices by identical typed pattern.

    Returns (pattern, row_indices) pairs in first-appearance order so that
    one factorization serves every row sharing a missingness pattern.
    """
    seen: dict[bytes, list[int]] = {}
    order: list[bytes] = []
    for i, row in enumerate(typed_mask):
        key = row.tobytes()
        if key not in seen:
            seen[key] = []
            order.append(key)
        seen[key].append(i)
    return [
        (np.frombuffer(key, dtype=bool), np.asarray(seen[key], dtype=np.intp))
        for key in order
    ]


def impute_individual_genotypes(
    model: MomentModel,
    genotypes: np.ndarray,
    sigma2: float = 1.0,
) -> ImputationResult:
    """Posterior mean genotypes for one individual or a batch.

    Treats each individual as a pool of two haplotypes: the observed
    genotypes are halved to the frequency scale, conditioned under the prior
    with covariance Sigma/2, then the posterior mean is doubled and the
    variance carries the matching factor of four. Missing entries are NaN;
    individuals sharing a typed pattern share one factorization.

    Returns point estimates in [0, 2] (clamped, flagged) with observed cells
    passed through at zero variance; see :func:`hard_calls` for integer calls.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    g = np.asarray(genotypes, dtype=np.float64)
    single = g.ndim == 1
    G = np.atleast_2d(g)
    if G.shape[1] != model.n_snps:
        raise LengthMismatch("genotype matrix does not match the model")
    typed_mask = ~np.isnan(G)
    if not typed_mask.any(axis=1).all():
        raise NoTypedSnps("every individual needs at least one typed genotype")

    point = np.array(G)
    variance = np.zeros_like(G)
    clamped = np.zeros(G.shape, dtype=bool)
    for pattern, rows in group_rows_by_pattern(typed_mask):
        tidx = np.flatnonzero(pattern)
        uidx = np.flatnonzero(~pattern)
        if uidx.size == 0:
            continue
        y = (G[np.ix_(rows, tidx)] / 2.0).T
        mean_u, var_u = conditional_gaussian(model.mu_hat, model.sigma_hat, tidx, y)
        # Sigma/2 leaves the mean unchanged; genotype variance is
        # 4 * sigma2 * (var/2) = 2 * sigma2 * var.
        gmean = np.clip(2.0 * mean_u, 0.0, 2.0)
        clamped[np.ix_(rows, uidx)] = (gmean != 2.0 * mean_u).T
        point[np.ix_(rows, uidx)] = gmean.T
        variance[np.ix_(rows, uidx)] = 2.0 * sigma2 * var_u

    if single:
        return ImputationResult(point[0], variance[0], typed_mask[0], clamped[0])
    return ImputationResult(point, variance, typed_mask, clamped)


def hard_calls(posterior_means: np.ndarray) -> np.ndarray:
    """Round posterior mean genotypes to {0, 1, 2}; ties round away from zero."""
    means = np.clip(np.asarray(posterior_means, dtype=np.float64), 0.0, 2.0)
    return np.floor(means + 0.5).astype(np.int64)
