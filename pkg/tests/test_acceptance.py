"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. The synthetic scales are fixed here, including every tolerance.
"""

import resource
import time

import numpy as np
import pytest
from scipy.stats import chi2

from linimpute.banded import BandedSpdMatrix
from linimpute.cli import cli_dispatch
from linimpute.ecm import ecm_run
from linimpute.errors import FitDiverged
from linimpute.evaluate import (
    baseline_unregularized,
    mask_cv,
    rmse,
    z_calibration,
)
from linimpute.impute import (
    fit_genotype_moment_model,
    hard_calls,
    impute_frequencies,
    impute_individual_genotypes,
)
from linimpute.noise import NoiseModel, denoise_typed, fit_noise
from linimpute.shrinkage import (
    empirical_moments,
    fit_moment_model,
    ls_pair_moments_oracle,
)
from linimpute.simulate import (
    haplotypes_to_genotypes,
    mask_missing_at_random,
    sample_haplotypes,
    simulate_panel,
    simulate_rho_map,
)
from linimpute.types import FrequencyVector, Panel, RhoMap, SnpMeta

from conftest import make_panel, random_banded_spd


def check(number: int, name: str, ok: bool, detail: str = "") -> None:
    verdict = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {number} {name}: {verdict}{suffix}")
    assert ok, f"criterion {number} {name}{suffix}"


def _random_instance(rng, p, bandwidth):
    sigma, dense = random_banded_spd(rng, p, bandwidth)
    sigma = sigma.scaled(0.05)
    dense = dense * 0.05
    mu = rng.uniform(0.2, 0.8, size=p)
    n_typed = int(rng.integers(1, p))
    typed = np.sort(rng.choice(p, size=n_typed, replace=False))
    y = rng.uniform(0.0, 1.0, size=p)
    return mu, sigma, dense, typed, y


def test_criterion_1_oracle_equivalence():
    # Banded-path posterior means/variances equal dense brute force on
    # >= 100 random SPD instances, p <= 200, both for frequency imputation
    # (with and without noise terms) and for typed-SNP denoising.
    rng = np.random.default_rng(101)
    t0 = time.time()
    worst = 0.0
    for trial in range(100):
        p = int(rng.integers(10, 201))
        bw = int(rng.integers(0, min(9, p)))
        mu, sigma, dense, typed, y = _random_instance(rng, p, bw)
        sigma2 = float(rng.uniform(0.5, 2.0))
        eps2 = float(rng.choice([0.0, 0.01, 0.05]))
        values = np.full(p, np.nan)
        values[typed] = y[typed]
        obs = FrequencyVector(values)
        model_args = dict(
            mu_hat=mu, sigma_hat=sigma, theta=0.1, panel_freq=mu,
            panel_size=20, sparsity_threshold=1e-8,
        )
        from linimpute.shrinkage import MomentModel

        model = MomentModel(**model_args)
        res = impute_frequencies(model, obs, sigma2=sigma2, eps2=eps2)
        untyped = np.setdiff1d(np.arange(p), typed)
        if untyped.size:
            stt = dense[np.ix_(typed, typed)] + (eps2 / sigma2) * np.eye(typed.size)
            sut = dense[np.ix_(untyped, typed)]
            mean = mu[untyped] + sut @ np.linalg.solve(stt, y[typed] - mu[typed])
            cov = dense[np.ix_(untyped, untyped)] - sut @ np.linalg.solve(stt, sut.T)
            worst = max(worst, np.max(np.abs(res.point[untyped] - np.clip(mean, 0, 1))))
            worst = max(worst, np.max(np.abs(res.variance[untyped] - sigma2 * np.diag(cov))))
        if eps2 > 0:
            noise = NoiseModel(sigma2, eps2, 0.0, 0, True)
            den = denoise_typed(model, obs, noise)
            prior_prec = np.linalg.inv(sigma2 * dense[np.ix_(typed, typed)])
            post_cov = np.linalg.inv(prior_prec + np.eye(typed.size) / eps2)
            post_mean = post_cov @ (prior_prec @ mu[typed] + y[typed] / eps2)
            worst = max(worst, np.max(np.abs(den.point[typed] - np.clip(post_mean, 0, 1))))
            worst = max(worst, np.max(np.abs(den.variance[typed] - np.diag(post_cov))))
    elapsed = time.time() - t0
    check(1, "oracle equivalence", worst < 1e-9 and elapsed < 30.0,
          f"max abs err {worst:.2e}, {elapsed:.1f}s")


def test_criterion_2_copying_model_closed_forms():
    # Exhaustive path enumeration matches the closed-form mean/covariance to
    # 1e-12 over >= 1000 random template/rho/theta draws with K <= 8.
    rng = np.random.default_rng(202)
    t0 = time.time()
    worst = 0.0
    for _ in range(1000):
        K = int(rng.integers(2, 9))
        data = rng.integers(0, 2, size=(K, 2)).astype(float)
        rho_val = float(rng.uniform(0.0, 6.0 * K))
        theta = float(rng.uniform(0.0, 1.0))
        panel = make_panel(data)
        rho = RhoMap(np.array([0.0, rho_val]))
        e_s, e_t, cov = ls_pair_moments_oracle(panel, rho, (0, 1), theta)
        f_s, f_t = data.mean(axis=0)
        f_st = float(np.mean(data[:, 0] * data[:, 1]))
        r = 1.0 - np.exp(-rho_val / K)
        worst = max(worst, abs(e_s - ((1 - theta) * f_s + theta / 2)))
        worst = max(worst, abs(e_t - ((1 - theta) * f_t + theta / 2)))
        worst = max(worst, abs(cov - (1 - theta) ** 2 * (1 - r) * (f_st - f_s * f_t)))
    elapsed = time.time() - t0
    check(2, "copying-model closed forms", worst < 1e-12 and elapsed < 10.0,
          f"max abs err {worst:.2e}, {elapsed:.1f}s")


def _two_locus_law(panel, rho, theta):
    """Exact P(h_s = x, h_t = y) by enumeration over copying paths."""
    K = panel.n_haplotypes
    q_s = panel.data[:, 0]
    q_t = panel.data[:, 1]
    r = 1.0 - np.exp(-rho.distance(0, 1) / K)
    p_s = (1 - theta) * q_s + theta / 2
    p_t = (1 - theta) * q_t + theta / 2
    joint_z = np.full((K, K), r / K**2)
    joint_z[np.diag_indices(K)] += (1 - r) / K
    law = {}
    for xs in (0, 1):
        for xt in (0, 1):
            es = xs * p_s + (1 - xs) * (1 - p_s)
            et = xt * p_t + (1 - xt) * (1 - p_t)
            law[(xs, xt)] = float(es @ joint_z @ et)
    return law


def _indicator_moments_from_law(law):
    means = np.zeros(4)
    second = np.zeros((4, 4))
    for (sa, ta), pa in law.items():
        for (sb, tb), pb in law.items():
            g = np.array(
                [(1 - sa) * (1 - sb), sa * sb, (1 - ta) * (1 - tb), ta * tb],
                dtype=float,
            )
            means += pa * pb * g
            second += pa * pb * np.outer(g, g)
    return means, second - np.outer(means, means)


def test_criterion_3_genotype_indicator_moments():
    # Indicator formulas vs (a) exact enumeration for K <= 4 to 1e-12 and
    # (b) Monte Carlo over 1e6 sampled haplotype pairs within 3 MC SEs.
    rng = np.random.default_rng(303)
    worst_exact = 0.0
    for _ in range(25):
        K = int(rng.integers(2, 5))
        data = rng.integers(0, 2, size=(K, 2)).astype(float)
        theta = float(rng.uniform(0.01, 0.4))
        rho = RhoMap(np.array([0.0, float(rng.uniform(0.0, 3.0 * K))]))
        panel = make_panel(data)
        model = fit_moment_model(panel, rho, theta=theta)
        geno = fit_genotype_moment_model(model)
        law = _two_locus_law(panel, rho, theta)
        means, cov = _indicator_moments_from_law(law)
        worst_exact = max(worst_exact, np.max(np.abs(geno.mean - means)))
        worst_exact = max(worst_exact, np.max(np.abs(geno.sigma.to_dense() - cov)))

    K = 6
    data = rng.integers(0, 2, size=(K, 2)).astype(float)
    data[0] = [1.0, 0.0]  # keep both loci polymorphic
    data[1] = [0.0, 1.0]
    theta = 0.05
    rho = RhoMap(np.array([0.0, 4.0]))
    panel = make_panel(data)
    model = fit_moment_model(panel, rho, theta=theta)
    geno = fit_genotype_moment_model(model)
    n_pairs = 1_000_000
    haps_a = sample_haplotypes(panel, rho, n_pairs, rng, theta=theta)
    haps_b = sample_haplotypes(panel, rho, n_pairs, rng, theta=theta)
    ind = np.column_stack(
        [
            (1 - haps_a[:, 0]) * (1 - haps_b[:, 0]),
            haps_a[:, 0] * haps_b[:, 0],
            (1 - haps_a[:, 1]) * (1 - haps_b[:, 1]),
            haps_a[:, 1] * haps_b[:, 1],
        ]
    )
    mc_mean = ind.mean(axis=0)
    se_mean = ind.std(axis=0, ddof=1) / np.sqrt(n_pairs)
    ok_mc = bool(np.all(np.abs(mc_mean - geno.mean) <= 3 * se_mean))
    centered = ind - mc_mean
    for a in range(4):
        for b in range(4):
            prod = centered[:, a] * centered[:, b]
            mc_cov = prod.mean()
            se = prod.std(ddof=1) / np.sqrt(n_pairs)
            ok_mc = ok_mc and abs(mc_cov - geno.sigma.entry(a, b)) <= 3 * se + 1e-12
    check(3, "genotype indicator moments", worst_exact < 1e-12 and ok_mc,
          f"exact err {worst_exact:.2e}, MC within 3 SE: {ok_mc}")


@pytest.fixture(scope="module")
def benchmark():
    """Criterion 4/7 benchmark: panel 2m=120, sample 2n=1000, p=1000."""
    rng = np.random.default_rng(404)
    p = 1000
    rho = simulate_rho_map(p, rng, block_size=50, within_step_rho=0.25,
                           between_jump_rho=500.0)
    panel = simulate_panel(p, 120, rho, rng)
    model = fit_moment_model(panel, rho)
    haps = sample_haplotypes(panel, rho, 1000, rng)
    return panel, rho, model, haps.mean(axis=0)


def test_criterion_4_naive_baseline_dominance(benchmark):
    panel, rho, model, y = benchmark
    t0 = time.time()
    result = mask_cv(model, y, k=25)
    elapsed = time.time() - t0
    naive = rmse(y, model.panel_freq)
    ratio = result.aggregate.rmse / naive
    check(4, "naive-baseline dominance", ratio < 0.8 and elapsed < 120.0,
          f"engine {result.aggregate.rmse:.5f} vs naive {naive:.5f}, "
          f"ratio {ratio:.3f}, {elapsed:.1f}s")


def test_criterion_5_calibration():
    # (a) Z histogram chi-square at alpha=0.001 passes in >= 19 of 20 seeds
    # under the correctly specified generative model with fitted sigma2;
    # (b) with overdispersion disabled on sigma2-inflated data the two outer
    # bins overshoot their nominal counts by >= 50%.
    #
    # "Correctly specified" means the multivariate normal the engine assumes:
    # truth is drawn from N(mu_hat, Sigma_hat / 2n). (Copying-model samples
    # calibrate in mean and spread too, but their 1/2n frequency lattice is
    # too coarse for a 20-bin shape test; see the unit suite.)
    threshold = chi2.ppf(0.999, df=19)
    passes = 0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        p = 600
        rho = simulate_rho_map(p, rng, block_size=20, within_step_rho=12.0,
                               between_jump_rho=600.0)
        panel = simulate_panel(p, 120, rho, rng)
        model = fit_moment_model(panel, rho)
        two_n = 1000
        dense = model.sigma_hat.to_dense() / two_n
        y = model.mu_hat + np.linalg.cholesky(dense) @ rng.normal(size=p)
        fit = fit_noise(model, FrequencyVector(y), estimate_eps=False,
                        pool_size=two_n)
        zs = []
        for offset in range(25):
            masked = np.arange(offset, p, 25)
            values = np.array(y)
            values[masked] = np.nan
            res = impute_frequencies(model, FrequencyVector(values),
                                     sigma2=fit.sigma2, pool_size=two_n)
            zs.append((y[masked] - res.point[masked])
                      / np.sqrt(res.variance[masked]))
        _, counts = z_calibration(np.concatenate(zs), np.zeros(p), np.ones(p))
        stat = float(np.sum((counts - p / 20) ** 2 / (p / 20)))
        passes += stat < threshold

    # overdispersion disabled on inflated data
    rng = np.random.default_rng(555)
    p = 600
    rho = simulate_rho_map(p, rng, block_size=20, within_step_rho=12.0,
                           between_jump_rho=600.0)
    panel = simulate_panel(p, 120, rho, rng)
    model = fit_moment_model(panel, rho)
    two_n = 1000
    dense = model.sigma_hat.to_dense() / two_n
    y = model.mu_hat + 1.5 * np.linalg.cholesky(dense) @ rng.normal(size=p)
    zs = []
    for offset in range(25):
        masked = np.arange(offset, p, 25)
        values = np.array(y)
        values[masked] = np.nan
        res = impute_frequencies(model, FrequencyVector(values), sigma2=1.0,
                                 pool_size=two_n)
        zs.append((y[masked] - res.point[masked]) / np.sqrt(res.variance[masked]))
    _, counts = z_calibration(np.concatenate(zs), np.zeros(p), np.ones(p))
    nominal = p / 20
    tails_ok = counts[0] >= 1.5 * nominal and counts[-1] >= 1.5 * nominal
    check(5, "variance calibration", passes >= 19 and tails_ok,
          f"{passes}/20 seeds calibrated; tail bins {counts[0]}/{counts[-1]} "
          f"vs nominal {nominal:.0f}")


def test_criterion_6_noise_reduction():
    # At eps=0.05: denoised RMSE < 0.6 * raw RMSE and fitted eps in
    # [0.04, 0.06], in >= 95% of 100 seeds, under 2 minutes.
    t0 = time.time()
    rng = np.random.default_rng(606)
    p = 400
    rho = simulate_rho_map(p, rng, block_size=10, within_step_rho=0.4,
                           between_jump_rho=1500.0)
    panel = simulate_panel(p, 120, rho, rng)
    model = fit_moment_model(panel, rho)
    wins = 0
    for seed in range(100):
        srng = np.random.default_rng(7000 + seed)
        truth = sample_haplotypes(panel, rho, 600, srng).mean(axis=0)
        obs = FrequencyVector(truth + srng.normal(0.0, 0.05, size=p))
        try:
            fit = fit_noise(model, obs)
        except FitDiverged:
            continue
        den = denoise_typed(model, obs, fit)
        eps_hat = float(np.sqrt(fit.eps2))
        ratio = rmse(truth, den.point) / rmse(truth, obs.values)
        wins += (0.04 <= eps_hat <= 0.06) and (ratio < 0.6)
    elapsed = time.time() - t0
    check(6, "noise reduction", wins >= 95 and elapsed < 120.0,
          f"{wins}/100 seeds, {elapsed:.1f}s")


def test_criterion_7_unregularized_baseline(benchmark):
    panel, rho, model, y = benchmark
    result = mask_cv(model, y, k=25)
    moments = empirical_moments(panel)
    best = np.inf
    for k in range(1, 26):
        sq = 0.0
        count = 0
        for plan, _ in result.folds:
            masked = plan.masked_indices(y.size)
            values = np.array(y)
            values[masked] = np.nan
            fv = FrequencyVector(values)
            for t in masked:
                est, _ = baseline_unregularized(panel, fv, int(t), k,
                                                scheme="flanking", moments=moments)
                sq += (est - y[t]) ** 2
                count += 1
        best = min(best, float(np.sqrt(sq / count)))
    check(7, "unregularized baseline loses", best > result.aggregate.rmse,
          f"best flanking {best:.5f} > engine {result.aggregate.rmse:.5f}")


def test_criterion_8_ecm():
    rng = np.random.default_rng(808)
    # (a) complete-data fixed point after one iteration, exact to 1e-12
    g_full = rng.integers(0, 3, size=(40, 12)).astype(float)
    rho_small = RhoMap(np.arange(12.0) * 4.0)
    s1, _ = ecm_run(g_full, rho_small, iterations=1)
    s2, _ = ecm_run(g_full, rho_small, iterations=2)
    fixed_point = (
        np.max(np.abs(s1.mu_ls - s2.mu_ls)) < 1e-12
        and np.max(np.abs(s1.sigma_ls.to_dense() - s2.sigma_ls.to_dense())) < 1e-12
    )

    # (b) shrinkage-free log-likelihood trace nondecreasing on p <= 10
    monotone = True
    for seed in range(3):
        mrng = np.random.default_rng(880 + seed)
        haps = (mrng.random(size=(120, 9)) < mrng.uniform(0.3, 0.7, 9)).astype(float)
        haps[:, 3] = haps[:, 2]
        g = haplotypes_to_genotypes(haps)
        masked = mask_missing_at_random(g, 0.2, mrng)
        state, _ = ecm_run(masked, RhoMap(np.arange(9.0)), iterations=15,
                           shrinkage=False)
        diffs = np.diff(np.array(state.loglik_trace))
        monotone = monotone and bool(np.all(diffs >= -1e-9))

    # (c) hard-call error at 10% MCAR beats the marginal-mode baseline by
    # >= 20% relative (n=200, p=300)
    rho = simulate_rho_map(300, rng, block_size=20, within_step_rho=0.2,
                           between_jump_rho=2000.0)
    panel = simulate_panel(300, 120, rho, rng, mutation=0.06)
    g = haplotypes_to_genotypes(sample_haplotypes(panel, rho, 400, rng))
    masked = mask_missing_at_random(g, 0.1, rng)
    holes = np.isnan(masked)
    _, imputed = ecm_run(masked, rho, iterations=20)
    err_ecm = float(np.mean(hard_calls(imputed[holes]) != g[holes]))
    mode = np.empty(300)
    for j in range(300):
        col = masked[~np.isnan(masked[:, j]), j]
        mode[j] = np.bincount(col.astype(int), minlength=3).argmax()
    err_base = float(np.mean(np.broadcast_to(mode, g.shape)[holes] != g[holes]))
    beats = err_ecm < 0.8 * err_base
    check(8, "panel-free ECM",
          fixed_point and monotone and beats,
          f"fixed point {fixed_point}, monotone {monotone}, "
          f"error {err_ecm:.4f} vs baseline {err_base:.4f}")


def test_criterion_9_performance_envelope():
    # p=30,000 SNPs (5,000 typed), band <= 500: fit plus frequency
    # imputation in < 60 s and < 1 GB peak RSS.
    rng = np.random.default_rng(909)
    p = 30_000
    rho = simulate_rho_map(p, rng, block_size=20, within_step_rho=0.5,
                           between_jump_rho=400.0)
    panel = simulate_panel(p, 120, rho, rng)
    values = np.full(p, np.nan)
    typed = np.arange(0, p, 6)[:5000]
    values[typed] = np.clip(
        panel.data.mean(axis=0)[typed] + rng.normal(0, 0.02, typed.size), 0, 1
    )
    t0 = time.time()
    model = fit_moment_model(panel, rho)
    res = impute_frequencies(model, FrequencyVector(values))
    elapsed = time.time() - t0
    peak_gb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024**2
    band_ok = model.sigma_hat.bandwidth <= 500
    finite = bool(np.all(np.isfinite(res.point)) and np.all(res.variance >= 0))
    check(9, "performance envelope",
          band_ok and finite and elapsed < 60.0 and peak_gb < 1.0,
          f"band {model.sigma_hat.bandwidth}, {elapsed:.1f}s, peak {peak_gb:.2f} GB")


def test_criterion_10_cli_determinism(tmp_path):
    def run_pipeline(tag):
        d = tmp_path / tag
        d.mkdir()
        prefix = str(d / "sim")
        for args in (
            ["simulate", "--out-prefix", prefix, "--p", "150",
             "--panel-haps", "60", "--sample-haps", "300", "--seed", "13"],
            ["fit", "--haps", f"{prefix}_panel.haps", "--legend",
             f"{prefix}_panel.legend", "--map", f"{prefix}.map",
             "--out", str(d / "model.txt")],
            ["eval-noise", "--haps", f"{prefix}_panel.haps", "--legend",
             f"{prefix}_panel.legend", "--map", f"{prefix}.map",
             "--freq", f"{prefix}_sample.freq", "--eps", "0.05,0.1",
             "--seed", "7", "--out", str(d / "noise.tsv")],
            ["eval-cv", "--haps", f"{prefix}_panel.haps", "--legend",
             f"{prefix}_panel.legend", "--map", f"{prefix}.map",
             "--freq", f"{prefix}_sample.freq", "--k", "10",
             "--out", str(d / "cv.tsv")],
        ):
            assert cli_dispatch(args) == 0
        return sorted(f for f in d.rglob("*") if f.is_file())

    first = run_pipeline("one")
    second = run_pipeline("two")
    identical = all(
        a.name == b.name and a.read_bytes() == b.read_bytes()
        for a, b in zip(first, second)
    )
    check(10, "seeded CLI determinism", identical and len(first) == len(second),
          f"{len(first)} files compared")
