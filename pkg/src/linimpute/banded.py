"""Banded symmetric-positive-definite storage, Cholesky solves and
conditional-Gaussian prediction.

Storage follows the LAPACK lower band convention: ``bands[k, i] == A[i + k, i]``
for offsets ``k = 0 .. bandwidth``. Only one triangle is stored, so symmetry
holds by construction. The factorization and triangular solves are delegated
to LAPACK (``scipy.linalg.cholesky_banded`` / ``cho_solve_banded``); the
degenerate-pivot policy on top of them is ours.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import AllTypedOrAllUntyped, DimensionMismatch, NotPositiveDefinite

# Pivot d_i <= PIVOT_RTOL * max(diag A) counts as degenerate. No automatic
# jitter here: callers decide how to regularize.
PIVOT_RTOL = 1e-12

# Target size (in float64 elements) of the dense work blocks used when
# computing posterior variance diagonals.
_BLOCK_ELEMENTS = 8_000_000


@dataclass(frozen=True)
class BandedSpdMatrix:
    """Symmetric positive-definite matrix stored inside a fixed band."""

    dim: int
    bandwidth: int
    bands: np.ndarray

    def __post_init__(self):
        bands = np.array(self.bands, dtype=np.float64)
        if bands.shape != (self.bandwidth + 1, self.dim):
            raise DimensionMismatch(
                f"band array shape {bands.shape} != {(self.bandwidth + 1, self.dim)}"
            )
        if self.dim < 1 or self.bandwidth < 0 or self.bandwidth >= max(self.dim, 1):
            raise DimensionMismatch("need dim >= 1 and 0 <= bandwidth < dim")
        if np.any(bands[0] <= 0):
            raise NotPositiveDefinite("diagonal entries must be strictly positive")
        if self.bandwidth:
            # Cells beyond the matrix edge are padding; keep them at zero.
            offs = np.arange(self.bandwidth + 1)[:, None]
            bands[offs + np.arange(self.dim)[None, :] >= self.dim] = 0.0
        bands.setflags(write=False)
        object.__setattr__(self, "bands", bands)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_dense(cls, a: np.ndarray, bandwidth: int | None = None) -> "BandedSpdMatrix":
        a = np.asarray(a, dtype=np.float64)
        n = a.shape[0]
        if a.shape != (n, n):
            raise DimensionMismatch("dense input must be square")
        if bandwidth is None:
            nz = np.nonzero(a)
            bandwidth = int(np.max(np.abs(nz[0] - nz[1]), initial=0))
        bands = np.zeros((bandwidth + 1, n))
        for k in range(bandwidth + 1):
            bands[k, : n - k] = np.diagonal(a, -k)
        return cls(n, bandwidth, bands)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        for k in range(self.bandwidth + 1):
            idx = np.arange(self.dim - k)
            out[idx + k, idx] = self.bands[k, : self.dim - k]
            out[idx, idx + k] = self.bands[k, : self.dim - k]
        return out

    # -- cheap views and arithmetic -------------------------------------------

    def diagonal(self) -> np.ndarray:
        return self.bands[0]

    def entry(self, i: int, j: int) -> float:
        k = abs(i - j)
        if k > self.bandwidth:
            return 0.0
        return float(self.bands[k, min(i, j)])

    def scaled(self, c: float) -> "BandedSpdMatrix":
        if c <= 0:
            raise ValueError("scale must be positive")
        return BandedSpdMatrix(self.dim, self.bandwidth, self.bands * c)

    def add_diagonal(self, d: float) -> "BandedSpdMatrix":
        bands = np.array(self.bands)
        bands[0] += d
        return BandedSpdMatrix(self.dim, self.bandwidth, bands)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise DimensionMismatch("matvec operand has wrong length")
        y = self.bands[0] * x
        for k in range(1, self.bandwidth + 1):
            row = self.bands[k, : self.dim - k]
            y[k:] += row * x[: self.dim - k]
            y[: self.dim - k] += row * x[k:]
        return y

    # -- structured extraction -------------------------------------------------

    def restrict(self, idx: np.ndarray) -> "BandedSpdMatrix":
        """Principal submatrix on sorted indices ``idx``.

        The bandwidth is recomputed after restriction: entries that were
        within the original band can land on narrower diagonals of the
        submatrix.
        """
        idx = np.asarray(idx, dtype=np.intp)
        n = idx.size
        if n == 0:
            raise DimensionMismatch("cannot restrict to an empty index set")
        if np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.dim:
            raise DimensionMismatch("indices must be sorted, unique and in range")
        reach = np.searchsorted(idx, idx + self.bandwidth, side="right") - 1
        new_bw = int(np.max(reach - np.arange(n)))
        ks = np.arange(new_bw + 1)[:, None]
        upper = np.minimum(np.arange(n)[None, :] + ks, n - 1)
        off = idx[upper] - idx[None, :]
        valid = (np.arange(n)[None, :] + ks < n) & (off <= self.bandwidth)
        bands = np.where(
            valid, self.bands[np.minimum(off, self.bandwidth), idx[None, :]], 0.0
        )
        return BandedSpdMatrix(n, new_bw, bands)

    def gather(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Dense ``A[rows, cols]`` block; ``rows`` must be sorted and unique."""
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        if rows.size * cols.size <= 4_000_000:
            # one-shot evaluation of |r - c| against the band
            off = np.abs(rows[:, None] - cols[None, :])
            inside = off <= self.bandwidth
            lead = np.minimum(rows[:, None], cols[None, :])
            return np.where(
                inside, self.bands[np.minimum(off, self.bandwidth), lead], 0.0
            )
        # huge blocks: walk the band diagonals instead of materializing
        # row-by-column offset matrices
        out = np.zeros((rows.size, cols.size))
        col_pos = np.arange(cols.size)

        def scatter(r, band_cols, k):
            inside = (r >= 0) & (r < self.dim)
            pos = np.searchsorted(rows, np.clip(r, 0, self.dim - 1))
            pos = np.minimum(pos, rows.size - 1)
            hit = inside & (rows[pos] == r)
            if np.any(hit):
                out[pos[hit], col_pos[hit]] = self.bands[k, band_cols[hit]]

        scatter(cols, cols, 0)
        for k in range(1, self.bandwidth + 1):
            scatter(cols + k, cols, k)  # A[c+k, c], stored at column c
            scatter(cols - k, cols - k, k)  # A[c-k, c], stored at column c-k
        return out


@dataclass(frozen=True)
class BandedCholesky:
    """Lower Cholesky factor of a banded SPD matrix, in band storage."""

    dim: int
    bandwidth: int
    factor: np.ndarray

    def log_det(self) -> float:
        """log det of the factored matrix A = L L'."""
        return 2.0 * float(np.sum(np.log(self.factor[0])))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        for k in range(self.bandwidth + 1):
            idx = np.arange(self.dim - k)
            out[idx + k, idx] = self.factor[k, : self.dim - k]
        return out


def banded_cholesky(a: BandedSpdMatrix) -> BandedCholesky:
    """Factor A = L L' without leaving the band.

    Raises NotPositiveDefinite when any pivot is nonpositive or falls at or
    below ``PIVOT_RTOL * max(diag A)``, which signals a degenerate covariance.
    """
    try:
        cb = scipy.linalg.cholesky_banded(a.bands, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    pivots = cb[0] ** 2
    floor = PIVOT_RTOL * float(np.max(a.bands[0]))
    if not np.all(pivots > floor):
        raise NotPositiveDefinite(
            f"pivot {pivots.min():.3e} at or below degeneracy floor {floor:.3e}"
        )
    cb = np.asarray(cb)
    cb.setflags(write=False)
    return BandedCholesky(a.dim, a.bandwidth, cb)


def banded_solve(factor: BandedCholesky, b: np.ndarray) -> np.ndarray:
    """Solve A x = b with A = L L' from :func:`banded_cholesky`.

    ``b`` may be a vector or a matrix of stacked right-hand-side columns.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != factor.dim:
        raise DimensionMismatch(f"rhs length {b.shape[0]} != dimension {factor.dim}")
    return scipy.linalg.cho_solve_banded((factor.factor, True), b, check_finite=False)


def conditional_gaussian(
    mu: np.ndarray,
    sigma: BandedSpdMatrix,
    typed_idx: np.ndarray,
    typed_values: np.ndarray,
    inflation: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance diagonal of the untyped coordinates given the typed.

    Computes ``mu_u + S_ut (S_tt + inflation I)^-1 (y_t - mu_t)`` and
    ``diag(S_uu - S_ut (S_tt + inflation I)^-1 S_tu)`` using only band-resident
    work. ``typed_values`` may carry several observation columns at once
    (shape ``(n_typed, m)``); the variance diagonal is shared by all columns.

    Means are returned unclamped; negative round-off on the variance diagonal
    is clamped to zero.
    """
    mu = np.asarray(mu, dtype=np.float64)
    typed_idx = np.asarray(typed_idx, dtype=np.intp)
    typed_values = np.asarray(typed_values, dtype=np.float64)
    p = sigma.dim
    if mu.shape != (p,):
        raise DimensionMismatch("mu length must equal matrix dimension")
    if typed_idx.size == 0 or typed_idx.size >= p:
        raise AllTypedOrAllUntyped(
            "typed SNPs must form a nonempty strict subset of all SNPs"
        )
    if typed_values.shape[0] != typed_idx.size:
        raise DimensionMismatch("typed values not aligned with typed index set")
    if inflation < 0:
        raise ValueError("inflation must be nonnegative")

    mask = np.zeros(p, dtype=bool)
    mask[typed_idx] = True
    untyped_idx = np.flatnonzero(~mask)

    stt = sigma.restrict(typed_idx)
    if inflation > 0:
        stt = stt.add_diagonal(inflation)
    fac = banded_cholesky(stt)
    innov = typed_values - (
        mu[typed_idx] if typed_values.ndim == 1 else mu[typed_idx][:, None]
    )
    w = banded_solve(fac, innov)

    diag = sigma.diagonal()
    n_u = untyped_idx.size
    out_shape = (n_u,) if typed_values.ndim == 1 else (n_u, typed_values.shape[1])
    mean_u = np.empty(out_shape)
    var_u = np.empty(n_u)
    block = max(1, _BLOCK_ELEMENTS // max(typed_idx.size, 1))
    for start in range(0, n_u, block):
        cols = untyped_idx[start : start + block]
        cross = sigma.gather(typed_idx, cols)
        base = mu[cols] if typed_values.ndim == 1 else mu[cols][:, None]
        mean_u[start : start + cols.size] = base + cross.T @ w
        solved = banded_solve(fac, cross)
        var_u[start : start + cols.size] = diag[cols] - np.einsum(
            "ij,ij->j", cross, solved
        )
    return mean_u, np.maximum(var_u, 0.0)
