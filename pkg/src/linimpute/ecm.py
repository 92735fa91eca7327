"""Panel-free estimation of the moment model from genotypes with missing
entries, via an expectation/conditional-maximization loop with shrinkage
folded into the maximization step.

Individual genotype vectors are treated as draws from a multivariate normal.
The state is kept on the haplotype scale (half the genotype mean, half the
genotype covariance), so on complete data one iteration reproduces the
unphased-panel moment fit exactly; conditioning of genotypes happens at
twice the stored moments. The band is fixed up front from the map threshold
and never changes across iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .banded import BandedSpdMatrix, banded_cholesky, banded_solve
from .errors import (
    IndividualFullyMissing,
    LengthMismatch,
    SnpNeverObserved,
)
from .impute import group_rows_by_pattern
from .shrinkage import estimate_theta
from .types import RhoMap


@dataclass(frozen=True)
class EcmState:
    """Current parameter estimates and the likelihood trace."""

    iteration: int
    f_panel_est: np.ndarray
    sigma_panel_bands: np.ndarray
    mu_ls: np.ndarray
    sigma_ls: BandedSpdMatrix
    loglik_trace: tuple[float, ...]
    delta_trace: tuple[float, ...] = ()
    shrinkage_enabled: bool = True
    theta: float = 0.0


@dataclass(frozen=True)
class EcmSufficientStats:
    """Expected sufficient statistics plus by-products of one E-step."""

    sum_g: np.ndarray
    sum_gg_bands: np.ndarray
    loglik: float
    imputed: np.ndarray  # conditional means filled into the missing cells


def _validate_genotypes(genotypes: np.ndarray) -> np.ndarray:
    g = np.asarray(genotypes, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] < 2:
        raise LengthMismatch("need a 2-D genotype matrix with >= 2 individuals")
    observed = g[~np.isnan(g)]
    if not set(np.unique(observed)) <= {0.0, 1.0, 2.0}:
        raise ValueError("genotype codes must be 0, 1 or 2 (NaN for missing)")
    typed = ~np.isnan(g)
    missing_snps = np.flatnonzero(~typed.any(axis=0))
    if missing_snps.size:
        raise SnpNeverObserved(f"SNPs never observed: {missing_snps[:5].tolist()}")
    empty_rows = np.flatnonzero(~typed.any(axis=1))
    if empty_rows.size:
        raise IndividualFullyMissing(
            f"individuals with no typed SNPs: {empty_rows[:5].tolist()}"
        )
    return g


def ecm_estep(state: EcmState, genotypes: np.ndarray) -> EcmSufficientStats:
    """Expected sums of g_j and band-resident g_j g_k given the typed cells.

    Typed cells pass through. Untyped cells take the conditional mean under
    the genotype-scale model N(2 mu_ls, 2 Sigma_ls) given the individual's
    typed set; cross products add the conditional covariance only when both
    coordinates are untyped for that individual. Individuals sharing a typed
    pattern share one factorization. The observed-data log likelihood under
    the current state is accumulated on the side.
    """
    g = _validate_genotypes(genotypes)
    n, p = g.shape
    if p != state.mu_ls.size:
        raise LengthMismatch("genotype matrix does not match the state")
    bw = state.sigma_ls.bandwidth
    mu_g = 2.0 * state.mu_ls
    sigma_g = state.sigma_ls.scaled(2.0)

    filled = np.array(g)
    bands_extra = np.zeros((bw + 1, p))
    loglik = 0.0
    log2pi = np.log(2.0 * np.pi)
    for pattern, rows in group_rows_by_pattern(~np.isnan(g)):
        tidx = np.flatnonzero(pattern)
        uidx = np.flatnonzero(~pattern)
        innov = (g[np.ix_(rows, tidx)] - mu_g[tidx]).T
        fac = banded_cholesky(sigma_g if uidx.size == 0 else sigma_g.restrict(tidx))
        solved = banded_solve(fac, innov)
        quads = np.einsum("ij,ij->j", innov, solved)
        loglik += -0.5 * (tidx.size * log2pi + fac.log_det()) * rows.size
        loglik += -0.5 * float(np.sum(quads))
        if uidx.size == 0:
            continue

        cross = sigma_g.gather(tidx, uidx)  # (n_typed, n_untyped)
        filled[np.ix_(rows, uidx)] = (mu_g[uidx][:, None] + cross.T @ solved).T
        cond_cov = sigma_g.gather(uidx, uidx) - cross.T @ banded_solve(fac, cross)
        # accumulate c_jk on band-resident untyped pairs, diagonal included
        offsets = uidx[None, :] - uidx[:, None]
        iu, ju = np.nonzero((offsets >= 0) & (offsets <= bw))
        np.add.at(
            bands_extra,
            (offsets[iu, ju], uidx[iu]),
            cond_cov[iu, ju] * rows.size,
        )

    sum_g = filled.sum(axis=0)
    sum_gg = np.array(bands_extra)
    for k in range(bw + 1):
        sum_gg[k, : p - k] += np.einsum(
            "ij,ij->j", filled[:, : p - k], filled[:, k:]
        )
    return EcmSufficientStats(sum_g, sum_gg, loglik, filled)


def ecm_cmstep(
    stats: EcmSufficientStats,
    n: int,
    rho: RhoMap,
    theta: float,
    shrinkage: bool = True,
    sparsity_threshold: float = 1e-8,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, BandedSpdMatrix]:
    """Conditional maximization: update the panel moments, then re-shrink.

    The panel estimates are the expected empirical moments on the haplotype
    scale (half the genotype mean; half the genotype covariance). With
    shrinkage enabled, off-diagonals are damped by exp(-rho_jk / 2n) under
    the fixed band and the mean/covariance get the mutation adjustment; with
    it disabled the update is the plain maximum-likelihood step.
    """
    p = stats.sum_g.size
    bw = stats.sum_gg_bands.shape[0] - 1
    f_g = stats.sum_g / n
    cov_g = np.array(stats.sum_gg_bands) / n
    cov_g[0] -= f_g**2
    for k in range(1, bw + 1):
        cov_g[k, : p - k] -= f_g[: p - k] * f_g[k:]

    f_panel = f_g / 2.0
    sigma_panel = cov_g / 2.0

    if shrinkage:
        cum = rho.cumulative
        two_n = 2 * n
        shrunk = np.array(sigma_panel)
        for k in range(1, bw + 1):
            w = np.exp(-(cum[k:] - cum[:-k]) / two_n)
            shrunk[k, : p - k] = np.where(
                w >= sparsity_threshold, w * sigma_panel[k, : p - k], 0.0
            )
        mu_ls = (1.0 - theta) * f_panel + theta / 2.0
        ls_bands = (1.0 - theta) ** 2 * shrunk
        ls_bands[0] += (theta / 2.0) * (1.0 - theta / 2.0)
    else:
        mu_ls = f_panel
        ls_bands = np.array(sigma_panel)

    sigma_ls = BandedSpdMatrix(p, bw, ls_bands)
    return f_panel, sigma_panel, mu_ls, sigma_ls


def _band_from_map(rho: RhoMap, two_n: int, sparsity_threshold: float) -> int:
    cum = rho.cumulative
    p = cum.size
    if p < 2:
        return 0
    max_rho = -two_n * np.log(sparsity_threshold)
    reach = np.searchsorted(cum, cum + max_rho * (1.0 + 1e-12), side="right") - 1
    return min(int(np.max(reach - np.arange(p), initial=0)), p - 1)


def _initial_state(
    g: np.ndarray,
    rho: RhoMap,
    theta: float,
    bw: int,
    shrinkage: bool,
    sparsity_threshold: float,
    f_panel0: np.ndarray | None = None,
) -> EcmState:
    """Marginal means plus a typed-cells-only diagonal covariance."""
    p = g.shape[1]
    if f_panel0 is None:
        f_panel0 = np.nanmean(g, axis=0) / 2.0
    var_g = np.nanvar(g, axis=0)
    sigma_panel = np.zeros((bw + 1, p))
    sigma_panel[0] = var_g / 2.0
    if shrinkage:
        mu_ls = (1.0 - theta) * f_panel0 + theta / 2.0
        ls_bands = (1.0 - theta) ** 2 * sigma_panel
        ls_bands[0] += (theta / 2.0) * (1.0 - theta / 2.0)
    else:
        mu_ls = np.array(f_panel0)
        ls_bands = np.array(sigma_panel)
    return EcmState(
        iteration=0,
        f_panel_est=f_panel0,
        sigma_panel_bands=sigma_panel,
        mu_ls=mu_ls,
        sigma_ls=BandedSpdMatrix(p, bw, ls_bands),
        loglik_trace=(),
        shrinkage_enabled=shrinkage,
        theta=theta,
    )


def _run_single(
    g: np.ndarray,
    rho: RhoMap,
    iterations: int,
    tol: float,
    state: EcmState,
    sparsity_threshold: float,
) -> tuple[EcmState, np.ndarray]:
    n = g.shape[0]
    stats = None
    for _ in range(iterations):
        stats = ecm_estep(state, g)
        f_panel, sigma_panel, mu_ls, sigma_ls = ecm_cmstep(
            stats,
            n,
            rho,
            state.theta,
            shrinkage=state.shrinkage_enabled,
            sparsity_threshold=sparsity_threshold,
        )
        # The mean alone can be stationary from the first iteration (the
        # diagonal initialization makes conditional means preserve marginal
        # means), so the covariance must settle too before an early exit.
        delta = max(
            float(np.max(np.abs(mu_ls - state.mu_ls))),
            float(np.max(np.abs(sigma_ls.bands - state.sigma_ls.bands))),
        )
        state = replace(
            state,
            iteration=state.iteration + 1,
            f_panel_est=f_panel,
            sigma_panel_bands=sigma_panel,
            mu_ls=mu_ls,
            sigma_ls=sigma_ls,
            loglik_trace=state.loglik_trace + (stats.loglik,),
            delta_trace=state.delta_trace + (delta,),
        )
        if delta < tol:
            break
    final = ecm_estep(state, g)
    state = replace(state, loglik_trace=state.loglik_trace + (final.loglik,))
    imputed = np.where(np.isnan(g), np.clip(final.imputed, 0.0, 2.0), g)
    return state, imputed


def ecm_run(
    genotypes: np.ndarray,
    rho: RhoMap,
    iterations: int = 20,
    shrinkage: bool = True,
    tol: float = 1e-6,
    sparsity_threshold: float = 1e-8,
    starts: int = 1,
    rng: np.random.Generator | None = None,
) -> tuple[EcmState, np.ndarray]:
    """Iterate E and CM steps, then impute the missing cells.

    Runs for ``iterations`` rounds or until the mean estimate moves less
    than ``tol``. The returned matrix passes observed cells through
    untouched and fills missing ones with conditional means clamped to
    [0, 2]; the trace records the observed-data log likelihood under the
    parameters entering each iteration plus a final evaluation.

    ``starts > 1`` reruns from perturbed initial means (seeded by ``rng``)
    and keeps the run with the best final log likelihood.
    """
    g = _validate_genotypes(genotypes)
    n, p = g.shape
    if len(rho) != p:
        raise LengthMismatch(f"map covers {len(rho)} SNPs, data has {p}")
    if starts > 1 and rng is None:
        raise ValueError("multi-start needs an explicit rng for reproducibility")

    theta = estimate_theta(2 * n) if shrinkage else 0.0
    bw = _band_from_map(rho, 2 * n, sparsity_threshold) if shrinkage else p - 1

    base_f0 = np.nanmean(g, axis=0) / 2.0
    best: tuple[EcmState, np.ndarray] | None = None
    for start in range(max(starts, 1)):
        if start == 0:
            f0 = base_f0
        else:
            f0 = np.clip(base_f0 + rng.normal(0.0, 0.05, size=p), 0.01, 0.99)
        state0 = _initial_state(
            g, rho, theta, bw, shrinkage, sparsity_threshold, f_panel0=f0
        )
        result = _run_single(g, rho, iterations, tol, state0, sparsity_threshold)
        if best is None or result[0].loglik_trace[-1] > best[0].loglik_trace[-1]:
            best = result
    return best
