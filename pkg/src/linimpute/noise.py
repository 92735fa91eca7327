"""Overdispersion and measurement-error fitting, and typed-SNP denoising.

Observed typed frequencies are modeled as N(mu_t, sigma2 * Sigma_tt + eps2 I);
both variance parameters are fitted by maximizing that likelihood with a
nested derivative-free line search. Denoising combines each observation with
the prior and its correlated neighbors through the same joint model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .banded import BandedCholesky, BandedSpdMatrix, banded_cholesky, banded_solve
from .errors import FitDiverged, LengthMismatch, NoTypedSnps
from .impute import ImputationResult, _clamp_unit, _pool_scale
from .shrinkage import MomentModel
from .types import FrequencyVector

SIGMA2_BOUNDS = (1e-6, 1e2)
EPS2_BOUNDS = (0.0, 0.25)  # noise sd > 0.5 is nonphysical for frequencies
FIT_TOL = 1e-6
MAX_EVALS_PER_AXIS = 200
MIN_TYPED_FOR_FIT = 10

_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class NoiseModel:
    """Fitted overdispersion sigma2 and measurement error eps2."""

    sigma2: float
    eps2: float
    loglik: float
    fit_iterations: int
    converged: bool


def _typed_cov(
    model: MomentModel,
    typed_idx: np.ndarray,
    sigma2: float,
    eps2: float,
    pool_size: int | None,
) -> BandedSpdMatrix:
    cov = model.sigma_hat.restrict(typed_idx).scaled(sigma2 / _pool_scale(pool_size))
    if eps2 > 0:
        cov = cov.add_diagonal(eps2)
    return cov


def log_likelihood(
    model: MomentModel,
    observed: FrequencyVector,
    sigma2: float,
    eps2: float,
    pool_size: int | None = None,
) -> float:
    """Gaussian log density of the typed observations.

    Uses the banded Cholesky factor for both the log determinant and the
    quadratic form.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    if eps2 < 0:
        raise ValueError("eps2 must be nonnegative")
    if len(observed) != model.n_snps:
        raise LengthMismatch("observed vector does not match the model")
    tidx = observed.typed_indices
    if tidx.size == 0:
        raise NoTypedSnps("likelihood needs at least one typed SNP")
    cov = _typed_cov(model, tidx, sigma2, eps2, pool_size)
    fac = banded_cholesky(cov)
    innov = observed.values[tidx] - model.mu_hat[tidx]
    quad = float(innov @ banded_solve(fac, innov))
    return -0.5 * (tidx.size * np.log(2.0 * np.pi) + fac.log_det() + quad)


def _golden_max(f, lo: float, hi: float, tol: float, max_evals: int):
    """Maximize a unimodal function on [lo, hi] by golden-section search."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    evals = 2
    while (b - a) > tol and evals < max_evals:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
        evals += 1
    x = 0.5 * (a + b)
    return x, f(x), evals + 1


def fit_noise(
    model: MomentModel,
    observed: FrequencyVector,
    estimate_eps: bool = True,
    pool_size: int | None = None,
) -> NoiseModel:
    """Maximum-likelihood (sigma2, eps2) by nested golden-section search.

    The outer search runs over eps2 (skipped when ``estimate_eps`` is false,
    which pins eps2 = 0, the no-measurement-error setting) and the inner
    search profiles sigma2.

    Both parameters are boxed. An optimum at an upper bound means the model
    wants to leave the physically sensible region and raises FitDiverged, as
    does an optimum pinned at bounds of both parameters at once. An optimum
    at a lower bound alone is a degenerate but contained answer (eps2 = 0:
    clean measurements; sigma2 floor: all dispersion attributed to noise)
    and is reported with ``converged=False`` for the sigma2 floor rather
    than raised, except in a sigma2-only fit where the floor raises.
    """
    tidx = observed.typed_indices
    if tidx.size < MIN_TYPED_FOR_FIT:
        raise NoTypedSnps(
            f"noise fitting needs >= {MIN_TYPED_FOR_FIT} typed SNPs, got {tidx.size}"
        )
    evals = 0
    # The typed restriction does not depend on (sigma2, eps2); hoist it out
    # of the search loop.
    base = model.sigma_hat.restrict(tidx).scaled(1.0 / _pool_scale(pool_size))
    innov = observed.values[tidx] - model.mu_hat[tidx]
    n_typed = tidx.size

    def loglik(s2: float, e2: float) -> float:
        nonlocal evals
        evals += 1
        bands = base.bands * s2
        bands[0] += e2
        fac = banded_cholesky(BandedSpdMatrix(base.dim, base.bandwidth, bands))
        quad = float(innov @ banded_solve(fac, innov))
        return -0.5 * (n_typed * np.log(2.0 * np.pi) + fac.log_det() + quad)

    def profile_sigma(e2: float):
        return _golden_max(
            lambda s2: loglik(s2, e2), *SIGMA2_BOUNDS, FIT_TOL, MAX_EVALS_PER_AXIS
        )

    if estimate_eps:
        eps2_hat, _, outer_evals = _golden_max(
            lambda e2: profile_sigma(e2)[1], *EPS2_BOUNDS, FIT_TOL, MAX_EVALS_PER_AXIS
        )
        converged_outer = outer_evals < MAX_EVALS_PER_AXIS
    else:
        eps2_hat = 0.0
        converged_outer = True
    sigma2_hat, ll, inner_evals = profile_sigma(eps2_hat)
    converged = converged_outer and inner_evals < MAX_EVALS_PER_AXIS

    margin = 10.0 * FIT_TOL
    sigma_floor = sigma2_hat <= SIGMA2_BOUNDS[0] + margin
    sigma_ceiling = sigma2_hat >= SIGMA2_BOUNDS[1] - margin
    eps_ceiling = eps2_hat >= EPS2_BOUNDS[1] - margin
    if sigma_ceiling:
        raise FitDiverged(f"sigma2 pinned at its upper bound ({sigma2_hat:.3e})")
    if eps_ceiling:
        raise FitDiverged(f"eps2 pinned at its upper bound ({eps2_hat:.3e})")
    if sigma_floor and (not estimate_eps or eps2_hat <= EPS2_BOUNDS[0] + margin):
        raise FitDiverged(f"search degenerated at the box edge (sigma2={sigma2_hat:.3e})")
    if sigma_floor:
        converged = False

    return NoiseModel(
        sigma2=float(sigma2_hat),
        eps2=float(eps2_hat),
        loglik=float(ll),
        fit_iterations=evals,
        converged=bool(converged),
    )


def _inverse_diagonal(fac: BandedCholesky, block: int = 512) -> np.ndarray:
    """diag(A^-1) from the factor of A, via blocked identity solves."""
    n = fac.dim
    out = np.empty(n)
    for start in range(0, n, block):
        cols = np.arange(start, min(start + block, n))
        rhs = np.zeros((n, cols.size))
        rhs[cols, np.arange(cols.size)] = 1.0
        solved = banded_solve(fac, rhs)
        out[cols] = solved[cols, np.arange(cols.size)]
    return out


def denoise_typed(
    model: MomentModel,
    observed: FrequencyVector,
    noise: NoiseModel,
    pool_size: int | None = None,
) -> ImputationResult:
    """Posterior means and variances of the true typed frequencies.

    The information-form posterior combines prior precision and observation
    precision. It is evaluated without inverting Sigma_tt: with
    A = sigma2 * Sigma_tt, the mean is y - eps2 * (A + eps2 I)^-1 (y - mu_t)
    and the variance diagonal is eps2 - eps2^2 * diag((A + eps2 I)^-1), both
    algebraically identical to the information form but band-friendly and
    well conditioned. With eps2 = 0 observations are returned unchanged with
    zero variance. Means are clamped to [0, 1].

    Untyped entries of the result are unset (NaN).
    """
    if len(observed) != model.n_snps:
        raise LengthMismatch("observed vector does not match the model")
    tidx = observed.typed_indices
    if tidx.size == 0:
        raise NoTypedSnps("denoising needs at least one typed SNP")
    y = observed.values[tidx]

    point = np.full(model.n_snps, np.nan)
    variance = np.full(model.n_snps, np.nan)
    clamped = np.zeros(model.n_snps, dtype=bool)

    if noise.eps2 == 0.0:
        point[tidx] = y
        variance[tidx] = 0.0
    else:
        cov = _typed_cov(model, tidx, noise.sigma2, noise.eps2, pool_size)
        fac = banded_cholesky(cov)
        mean = y - noise.eps2 * banded_solve(fac, y - model.mu_hat[tidx])
        var = noise.eps2 - noise.eps2**2 * _inverse_diagonal(fac)
        point[tidx], clamped[tidx] = _clamp_unit(mean)
        variance[tidx] = np.maximum(var, 0.0)

    return ImputationResult(point, variance, np.array(observed.typed), clamped)
