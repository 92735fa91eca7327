import numpy as np
import pytest

from linimpute.banded import BandedSpdMatrix
from linimpute.shrinkage import MomentModel
from linimpute.types import Panel, RhoMap, SnpMeta


def make_snps(p, spacing=1000):
    return [
        SnpMeta(id=f"snp{i}", position=(i + 1) * spacing, allele0="A", allele1="G")
        for i in range(p)
    ]


def make_panel(rows, phased=True):
    """Panel from a list of row strings like '0101' or a 2-D array."""
    if isinstance(rows[0], str):
        data = np.array([[float(c) for c in row] for row in rows])
    else:
        data = np.asarray(rows, dtype=float)
    return Panel(snps=make_snps(data.shape[1]), data=data, phased=phased)


def random_banded_spd(rng, p, bandwidth):
    """Exactly banded SPD matrix built as L L' with banded lower L."""
    lower = np.zeros((p, p))
    for k in range(bandwidth + 1):
        vals = rng.normal(size=p - k) * 0.3
        lower[np.arange(k, p), np.arange(p - k)] = vals
    lower[np.diag_indices(p)] = rng.uniform(0.5, 1.5, size=p)
    dense = lower @ lower.T
    return BandedSpdMatrix.from_dense(dense, bandwidth=bandwidth), dense


def dense_conditional(mu, dense, typed_idx, typed_values, inflation=0.0):
    """Brute-force conditional mean/variance using full matrix algebra."""
    p = dense.shape[0]
    mask = np.zeros(p, dtype=bool)
    mask[typed_idx] = True
    u = np.flatnonzero(~mask)
    t = np.asarray(typed_idx)
    stt = dense[np.ix_(t, t)] + inflation * np.eye(t.size)
    sut = dense[np.ix_(u, t)]
    suu = dense[np.ix_(u, u)]
    w = np.linalg.solve(stt, typed_values - mu[t])
    mean = mu[u] + sut @ w
    cov = suu - sut @ np.linalg.solve(stt, sut.T)
    return mean, np.diag(cov)


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)


def uniform_rho(p, step):
    return RhoMap(np.arange(p, dtype=float) * step)


def make_model(mu, sigma, theta=0.1, panel_size=20, bandwidth=None):
    """MomentModel from explicit moments; sigma may be dense or banded."""
    mu = np.asarray(mu, dtype=float)
    if not isinstance(sigma, BandedSpdMatrix):
        sigma = BandedSpdMatrix.from_dense(np.asarray(sigma, float), bandwidth=bandwidth)
    return MomentModel(
        mu_hat=mu,
        sigma_hat=sigma,
        theta=theta,
        panel_freq=np.clip((mu - theta / 2.0) / (1.0 - theta), 0.0, 1.0),
        panel_size=panel_size,
        sparsity_threshold=1e-8,
    )


def random_freq_model(rng, p, bandwidth, scale=0.05):
    """Random banded SPD prior with frequency-like magnitudes."""
    model_sigma, dense = random_banded_spd(rng, p, bandwidth)
    sigma = model_sigma.scaled(scale)
    mu = rng.uniform(0.25, 0.75, size=p)
    return make_model(mu, sigma), dense * scale
