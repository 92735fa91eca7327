"""Regularized mean/covariance estimation from a reference panel.

The prior for sample allele frequencies is a multivariate normal whose
moments come from the Li-Stephens haplotype-copying view of the panel:
the mean shrinks panel frequencies toward 1/2 by the mutation parameter
theta, and off-diagonal covariances shrink toward zero with genetic
distance, ``w_ij = exp(-rho_ij / 2m)``. Weights below a sparsity threshold
are dropped, which makes the covariance banded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .banded import BandedSpdMatrix
from .errors import EmptyPanel, InvalidPanelSize, LengthMismatch, TooManyTemplates
from .types import Panel, RhoMap

MAX_ORACLE_TEMPLATES = 16


@dataclass(frozen=True)
class MomentModel:
    """Fitted prior: regularized mean, banded covariance and panel summary."""

    mu_hat: np.ndarray
    sigma_hat: BandedSpdMatrix
    theta: float
    panel_freq: np.ndarray
    panel_size: int  # haplotype count 2m
    sparsity_threshold: float

    def __post_init__(self):
        mu = np.asarray(self.mu_hat, dtype=np.float64)
        freq = np.asarray(self.panel_freq, dtype=np.float64)
        if mu.shape != freq.shape or mu.size != self.sigma_hat.dim:
            raise LengthMismatch("mean, panel frequency and covariance disagree")
        for name in ("mu_hat", "panel_freq"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_snps(self) -> int:
        return self.mu_hat.size


def estimate_theta(n_haplotypes: int) -> float:
    """Mutation parameter from the panel haplotype count 2m.

    theta = c / (2m + c) with c the inverse of the harmonic sum over
    1 .. 2m-1; strictly inside (0, 1) and decreasing in 2m.
    """
    if n_haplotypes < 2:
        raise InvalidPanelSize(f"need at least 2 haplotypes, got {n_haplotypes}")
    c = 1.0 / np.sum(1.0 / np.arange(1, n_haplotypes))
    return float(c / (n_haplotypes + c))


def empirical_moments(panel: Panel) -> tuple[np.ndarray, np.ndarray]:
    """Unregularized haplotype-scale mean and covariance of a panel.

    Phased panels use column means and the plug-in (divide-by-N) covariance.
    Unphased panels substitute half the genotype mean and half the genotype
    covariance, the random-mating equivalence. Returns a dense covariance,
    so this is intended for desk-scale work (the fitted model computes its
    band directly).
    """
    if panel.n_snps < 1:
        raise EmptyPanel("panel has no SNPs")
    scale = 1.0 if panel.phased else 0.5
    data = panel.mean_filled()
    freq = scale * data.mean(axis=0)
    centered = data - data.mean(axis=0)
    cov = scale * (centered.T @ centered) / data.shape[0]
    return freq, cov


def fit_moment_model(
    panel: Panel,
    rho: RhoMap,
    sparsity_threshold: float = 1e-8,
    theta: float | None = None,
) -> MomentModel:
    """Fit the regularized prior (mu_hat, Sigma_hat, theta) from panel + map.

    Off-diagonal entries get weight ``exp(-rho_ij / 2m)``; pairs whose weight
    falls below ``sparsity_threshold`` are dropped entirely, and the stored
    bandwidth is the largest |i-j| with a surviving weight. Thresholding acts
    on the weight (not the covariance value), so the band is a deterministic
    function of the map alone.

    ``theta`` overrides the panel-size-based default, which is mainly useful
    for sensitivity checks and limit tests.
    """
    p = panel.n_snps
    if len(rho) != p:
        raise LengthMismatch(f"map covers {len(rho)} SNPs, panel has {p}")
    if not 0.0 < sparsity_threshold < 1.0:
        raise ValueError("sparsity threshold must lie in (0, 1)")
    two_m = panel.n_haplotypes
    if theta is None:
        theta = estimate_theta(two_m)
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")

    scale = 1.0 if panel.phased else 0.5
    data = panel.mean_filled()
    col_mean = data.mean(axis=0)
    freq = scale * col_mean
    centered = data - col_mean
    var = scale * np.mean(centered**2, axis=0)

    cum = rho.cumulative
    # Largest offset k with any surviving weight; weights are checked exactly
    # below, this searchsorted pass just bounds the scan.
    max_rho = -two_m * np.log(sparsity_threshold)
    reach = np.searchsorted(cum, cum + max_rho * (1.0 + 1e-12), side="right") - 1
    candidate_bw = int(np.max(reach - np.arange(p), initial=0)) if p > 1 else 0
    candidate_bw = min(candidate_bw, p - 1)

    one_minus_theta_sq = (1.0 - theta) ** 2
    bands = np.zeros((candidate_bw + 1, p))
    bands[0] = one_minus_theta_sq * var + (theta / 2.0) * (1.0 - theta / 2.0)
    bandwidth = 0
    for k in range(1, candidate_bw + 1):
        weight = np.exp(-(cum[k:] - cum[:-k]) / two_m)
        keep = weight >= sparsity_threshold
        if not np.any(keep):
            continue
        cov_k = scale * np.mean(centered[:, : p - k] * centered[:, k:], axis=0)
        bands[k, : p - k] = np.where(keep, one_minus_theta_sq * weight * cov_k, 0.0)
        bandwidth = k
    bands = bands[: bandwidth + 1]

    mu = (1.0 - theta) * freq + theta / 2.0
    sigma = BandedSpdMatrix(p, bandwidth, bands)
    return MomentModel(
        mu_hat=mu,
        sigma_hat=sigma,
        theta=theta,
        panel_freq=freq,
        panel_size=two_m,
        sparsity_threshold=sparsity_threshold,
    )


def ls_pair_moments_oracle(
    panel: Panel,
    rho: RhoMap,
    loci: tuple[int, int],
    theta: float | None = None,
) -> tuple[float, float, float]:
    """Two-locus copying-model moments by exhaustive path enumeration.

    Sums over all K^2 template assignments (Z_s, Z_t) of a haplotype copied
    from a small phased panel, with stationary uniform start, transition
    ``(1 - r) 1{same} + r / K`` where ``r = 1 - exp(-rho_st / K)``, and
    emission ``(1 - theta) q + theta / 2``. Returns (E h_s, E h_t, Cov).

    Test oracle only: the closed forms used at runtime must reproduce these
    values, but no runtime path enumerates states.
    """
    if not panel.phased:
        raise ValueError("the enumeration oracle needs a phased panel")
    K = panel.n_haplotypes
    if K > MAX_ORACLE_TEMPLATES:
        raise TooManyTemplates(f"enumeration supports K <= {MAX_ORACLE_TEMPLATES}")
    if theta is None:
        theta = estimate_theta(K)
    s, t = sorted(loci)
    q_s = panel.data[:, s]
    q_t = panel.data[:, t]
    if np.isnan(q_s).any() or np.isnan(q_t).any():
        raise ValueError("oracle loci must have no missing panel cells")

    r = 1.0 - np.exp(-rho.distance(s, t) / K)
    p_s = (1.0 - theta) * q_s + theta / 2.0
    p_t = (1.0 - theta) * q_t + theta / 2.0
    # P(Z_s = j, Z_t = k) = (1/K) [(1-r) 1{j=k} + r/K]
    joint_z = np.full((K, K), r / K**2)
    joint_z[np.diag_indices(K)] += (1.0 - r) / K
    e_st = float(p_s @ joint_z @ p_t)
    e_s = float(np.mean(p_s))
    e_t = float(np.mean(p_t))
    return e_s, e_t, e_st - e_s * e_t
