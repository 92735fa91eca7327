"""Core domain types: SNP metadata, reference panels, recombination maps,
and frequency vectors.

All types are immutable after construction (arrays are frozen), so they can
be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyPanel, LengthMismatch, NonmonotonePositions, NonmonotoneRho


def _frozen(a, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SnpMeta:
    """Identifier, base-pair coordinate and allele labels of one SNP."""

    id: str
    position: int
    allele0: str
    allele1: str

    def __post_init__(self):
        if self.allele0 == self.allele1:
            raise ValueError(f"SNP {self.id}: alleles must differ")


@dataclass(frozen=True)
class Panel:
    """Reference data: rows are haplotypes (phased) or individuals (unphased).

    ``data`` holds allele codes as float64 with NaN marking missing cells;
    phased entries are 0/1, unphased entries are genotype counts 0/1/2.
    """

    snps: tuple[SnpMeta, ...]
    data: np.ndarray
    phased: bool

    def __post_init__(self):
        object.__setattr__(self, "snps", tuple(self.snps))
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] < 1:
            raise EmptyPanel("panel needs at least 2 rows and 1 SNP")
        if data.shape[1] != len(self.snps):
            raise LengthMismatch(
                f"{len(self.snps)} SNPs in metadata but {data.shape[1]} data columns"
            )
        positions = [s.position for s in self.snps]
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise NonmonotonePositions("SNP positions must be strictly increasing")
        allowed = {0.0, 1.0} if self.phased else {0.0, 1.0, 2.0}
        seen = set(np.unique(data[~np.isnan(data)]))
        if not seen <= allowed:
            kind = "phased" if self.phased else "unphased"
            raise ValueError(f"{kind} panel contains codes {sorted(seen - allowed)}")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def n_snps(self) -> int:
        return self.data.shape[1]

    @property
    def n_haplotypes(self) -> int:
        """Haplotype count 2m; unphased rows each carry two haplotypes."""
        rows = self.data.shape[0]
        return rows if self.phased else 2 * rows

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.data)

    def mean_filled(self) -> np.ndarray:
        """Data with missing cells replaced by their column mean.

        Keeps moments well defined under sporadic panel missingness. A column
        missing everywhere is filled with 0.
        """
        if not np.isnan(self.data).any():
            return self.data
        filled = np.array(self.data)
        means = np.nanmean(np.where(np.isnan(filled), np.nan, filled), axis=0)
        means = np.where(np.isnan(means), 0.0, means)
        idx = np.where(np.isnan(filled))
        filled[idx] = means[idx[1]]
        return filled


@dataclass(frozen=True)
class RhoMap:
    """Cumulative population-scaled recombination coordinate per SNP.

    Pairwise distances are differences of the cumulative coordinate, so the
    map composes additively along the chromosome.
    """

    cumulative: np.ndarray

    def __post_init__(self):
        cum = np.asarray(self.cumulative, dtype=np.float64)
        if cum.ndim != 1:
            raise ValueError("cumulative rho must be one-dimensional")
        if cum.size and (not np.all(np.isfinite(cum)) or cum[0] < 0):
            raise NonmonotoneRho("cumulative rho must be finite and nonnegative")
        if np.any(np.diff(cum) < 0):
            raise NonmonotoneRho("cumulative rho must be nondecreasing")
        object.__setattr__(self, "cumulative", _frozen(cum))

    def __len__(self) -> int:
        return self.cumulative.size

    def distance(self, i: int, j: int) -> float:
        return abs(float(self.cumulative[j] - self.cumulative[i]))


@dataclass(frozen=True)
class FrequencyVector:
    """Per-SNP allele frequencies with typed/untyped status.

    Untyped entries are unset (NaN). Typed entries must be finite; noisy
    pooled measurements may fall slightly outside [0, 1], so range is not
    enforced here.
    """

    values: np.ndarray
    typed: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        typed = self.typed
        if typed is None:
            typed = ~np.isnan(values)
        typed = np.asarray(typed, dtype=bool)
        if values.shape != typed.shape or values.ndim != 1:
            raise LengthMismatch("values and typed mask must be 1-D and aligned")
        if not np.all(np.isfinite(values[typed])):
            raise ValueError("typed frequencies must be finite")
        values = np.where(typed, values, np.nan)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "typed", _frozen(typed, dtype=bool))

    def __len__(self) -> int:
        return self.values.size

    @property
    def typed_indices(self) -> np.ndarray:
        return np.flatnonzero(self.typed)

    @property
    def untyped_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.typed)
