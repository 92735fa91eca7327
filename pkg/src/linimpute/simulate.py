"""Synthetic data generation for benchmarks and the evaluation harness.

Haplotypes are built by a copying process: each new haplotype is an
imperfect mosaic of existing templates, switching template with a
probability driven by the recombination map and miscopying with a small
mutation probability. Panels are grown sequentially from scratch (so they
carry realistic distance-decaying LD); study samples are drawn i.i.d.
against a fixed panel, which is exactly the generative model the fitted
moments describe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .shrinkage import estimate_theta
from .types import Panel, RhoMap, SnpMeta


@dataclass(frozen=True)
class SimulationConfig:
    """Knobs for the synthetic chromosome generator."""

    n_snps: int = 1000
    panel_haplotypes: int = 120
    sample_haplotypes: int = 1000
    block_size: int = 20
    within_step_rho: float = 0.5
    between_jump_rho: float = 400.0
    position_step: int = 1500


def simulate_rho_map(
    n_snps: int,
    rng: np.random.Generator,
    block_size: int = 20,
    within_step_rho: float = 0.5,
    between_jump_rho: float = 400.0,
) -> RhoMap:
    """Block-structured cumulative recombination coordinate.

    Adjacent SNPs inside a block sit close on the map (strong LD); block
    boundaries add a large jump, which both mimics recombination hotspots
    and keeps the covariance band of a fitted model narrow.
    """
    if n_snps < 2:
        return RhoMap(np.zeros(n_snps))
    steps = rng.exponential(within_step_rho, size=n_snps - 1)
    boundary = rng.random(size=n_snps - 1) < 1.0 / max(block_size, 1)
    steps[boundary] += rng.exponential(between_jump_rho, size=int(boundary.sum()))
    return RhoMap(np.concatenate([[0.0], np.cumsum(steps)]))


def _copy_path(templates: np.ndarray, switch_prob: np.ndarray, theta: float,
               rng: np.random.Generator) -> np.ndarray:
    """One mosaic haplotype copied from ``templates`` (K x p)."""
    K, p = templates.shape
    z = rng.integers(0, K)
    out = np.empty(p)
    for t in range(p):
        if t > 0 and rng.random() < switch_prob[t - 1]:
            z = rng.integers(0, K)
        out[t] = templates[z, t]
    if theta > 0:
        mutate = rng.random(p) < theta
        out[mutate] = rng.integers(0, 2, size=int(mutate.sum()))
    return out


def simulate_panel(
    n_snps: int,
    n_haplotypes: int,
    rho: RhoMap,
    rng: np.random.Generator,
    mutation: float = 0.02,
    base_freq: tuple[float, float] = (0.15, 0.85),
) -> Panel:
    """Grow a phased panel sequentially by the copying process.

    The first haplotype is random; each subsequent one copies from those
    already built, so linkage decays with the map distance. ``mutation``
    keeps the panel polymorphic.
    """
    haps = np.empty((n_haplotypes, n_snps))
    haps[0] = (rng.random(n_snps) < rng.uniform(*base_freq, size=n_snps)).astype(float)
    steps = np.diff(rho.cumulative)
    for k in range(1, n_haplotypes):
        switch = 1.0 - np.exp(-steps / k)
        haps[k] = _copy_path(haps[:k], switch, mutation, rng)
    snps = [
        SnpMeta(id=f"rs{i + 1}", position=(i + 1) * 1000, allele0="A", allele1="G")
        for i in range(n_snps)
    ]
    return Panel(snps=snps, data=haps, phased=True)


def sample_haplotypes(
    panel: Panel,
    rho: RhoMap,
    n_haplotypes: int,
    rng: np.random.Generator,
    theta: float | None = None,
) -> np.ndarray:
    """Draw i.i.d. haplotypes from the copying distribution given the panel.

    Template switches between adjacent SNPs happen with probability
    ``1 - exp(-step / K)``; emissions miscopy with probability ``theta``
    (the panel-size default when not given). Vectorized across haplotypes.
    """
    if theta is None:
        theta = estimate_theta(panel.n_haplotypes)
    templates = panel.data
    K, p = templates.shape
    steps = np.diff(rho.cumulative)
    switch = 1.0 - np.exp(-steps / K)

    z = rng.integers(0, K, size=n_haplotypes)
    out = np.empty((n_haplotypes, p))
    out[:, 0] = templates[z, 0]
    for t in range(1, p):
        move = rng.random(n_haplotypes) < switch[t - 1]
        if move.any():
            z = np.where(move, rng.integers(0, K, size=n_haplotypes), z)
        out[:, t] = templates[z, t]
    mutate = rng.random(out.shape) < theta
    out[mutate] = rng.integers(0, 2, size=int(mutate.sum()))
    return out


def haplotypes_to_genotypes(haplotypes: np.ndarray) -> np.ndarray:
    """Pair consecutive haplotypes into individuals (rows 2i and 2i+1)."""
    if haplotypes.shape[0] % 2:
        raise ValueError("need an even number of haplotypes")
    return haplotypes[0::2] + haplotypes[1::2]


def mask_missing_at_random(
    data: np.ndarray,
    missing_rate: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Copy of ``data`` with cells set to NaN independently at ``missing_rate``.

    Guarantees every row keeps at least one observed cell and every column
    keeps at least one observation by un-masking a random survivor where
    needed.
    """
    out = np.array(data, dtype=float)
    mask = rng.random(out.shape) < missing_rate
    for i in np.flatnonzero(mask.all(axis=1)):
        mask[i, rng.integers(0, out.shape[1])] = False
    for j in np.flatnonzero(mask.all(axis=0)):
        mask[rng.integers(0, out.shape[0]), j] = False
    out[mask] = np.nan
    return out
