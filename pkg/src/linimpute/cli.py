"""Command-line interface binding the library into file-based workflows.

Exit codes: 0 success, 1 usage error, 2 data/runtime error. All stochastic
subcommands derive their randomness from --seed only, so reruns with the
same arguments produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import io
from .ecm import ecm_run
from .errors import LinimputeError
from .evaluate import mask_cv, simulate_noise_study
from .impute import (
    fit_genotype_moment_model,
    hard_calls,
    hwe_genotype_frequencies,
    impute_frequencies,
    impute_genotype_frequencies,
    impute_individual_genotypes,
)
from .noise import NoiseModel, denoise_typed, fit_noise
from .shrinkage import fit_moment_model
from .simulate import (
    haplotypes_to_genotypes,
    sample_haplotypes,
    simulate_panel,
    simulate_rho_map,
)
from .types import Panel


class CliUsageError(Exception):
    """Bad flag combination; maps to exit status 1."""


@dataclass(frozen=True)
class CliConfig:
    """Everything a subcommand needs, resolved from argv."""

    subcommand: str
    inputs: dict[str, str] = field(default_factory=dict)
    output: str | None = None
    out_prefix: str | None = None
    stride: int = 25
    iterations: int = 20
    eps_grid: tuple[float, ...] = ()
    sigma2: float | None = None
    eps2: float | None = None
    sparsity_threshold: float = 1e-8
    pool_size: int | None = None
    seed: int = 0
    mode: str = "frequencies"
    method: str = "hwe"
    estimate_eps: bool = True
    shrinkage: bool = True
    starts: int = 1
    hard_calls_path: str | None = None
    n_snps: int = 1000
    panel_haplotypes: int = 120
    sample_haplotypes: int = 1000
    block_size: int = 20
    within_step_rho: float = 0.5
    between_jump_rho: float = 400.0


def worker_count() -> int:
    """Worker cap from LINIMPUTE_THREADS (0 or unset means auto)."""
    raw = os.environ.get("LINIMPUTE_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linimpute",
        description="Impute allele frequencies and genotypes from summary data.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_panel_args(p):
        p.add_argument("--haps", required=True, help="panel matrix, one line per SNP")
        p.add_argument("--legend", required=True, help="SNP metadata table")
        p.add_argument("--map", required=True, help="cumulative rho map")

    p = sub.add_parser("fit", help="fit a moment model from a panel and a map")
    add_panel_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--sparsity-threshold", type=float, default=1e-8)

    p = sub.add_parser("impute-freq", help="impute untyped allele frequencies")
    p.add_argument("--model", required=True)
    p.add_argument("--freq", required=True, help="observed frequencies, `.` untyped")
    p.add_argument("--out", required=True)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--eps2", type=float, default=0.0)
    p.add_argument("--pool-size", type=int, default=None)

    p = sub.add_parser("impute-geno", help="impute individual genotypes")
    p.add_argument("--model", required=True)
    p.add_argument("--geno", required=True, help="genotype matrix, `.` missing")
    p.add_argument("--out", required=True)
    p.add_argument("--sigma2", type=float, default=1.0)

    p = sub.add_parser("genofreq", help="impute genotype frequencies")
    p.add_argument("--model", required=True)
    p.add_argument("--freq", help="allele frequencies (hwe route)")
    p.add_argument("--geno-freq", help="observed p0/p2 pairs (joint route)")
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=["hwe", "joint-indicator"], default="hwe")
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--eps2", type=float, default=0.0)
    p.add_argument("--pool-size", type=int, default=None)

    p = sub.add_parser("denoise", help="denoise typed frequencies")
    p.add_argument("--model", required=True)
    p.add_argument("--freq", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma2", type=float, default=None, help="skip fitting")
    p.add_argument("--eps2", type=float, default=None, help="skip fitting")
    p.add_argument("--no-estimate-eps", dest="estimate_eps", action="store_false")
    p.add_argument("--pool-size", type=int, default=None)

    p = sub.add_parser("ecm", help="panel-free estimation and imputation")
    p.add_argument("--geno", required=True)
    p.add_argument("--legend", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True, help="posterior-mean genotype table")
    p.add_argument("--hard-calls", dest="hard_calls_path", default=None)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--no-shrinkage", dest="shrinkage", action="store_false")
    p.add_argument("--starts", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval-cv", help="masking cross-validation report")
    add_panel_args(p)
    p.add_argument("--freq", help="observed sample frequencies (frequency mode)")
    p.add_argument("--geno", help="sample genotype matrix (genotype mode)")
    p.add_argument("--out", required=True)
    p.add_argument("--k", dest="stride", type=int, default=25)
    p.add_argument("--mode", choices=["frequencies", "genotypes"], default=None)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--pool-size", type=int, default=None)

    p = sub.add_parser("eval-noise", help="pooled-noise simulation report")
    add_panel_args(p)
    p.add_argument("--freq", required=True, help="true frequencies, all typed")
    p.add_argument("--out", required=True)
    p.add_argument("--eps", dest="eps_grid", required=True,
                   help="comma-separated noise levels, e.g. 0.01,0.05")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pool-size", type=int, default=None)

    p = sub.add_parser("simulate", help="write a synthetic panel + sample")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--p", dest="n_snps", type=int, default=1000)
    p.add_argument("--panel-haps", dest="panel_haplotypes", type=int, default=120)
    p.add_argument("--sample-haps", dest="sample_haplotypes", type=int, default=1000)
    p.add_argument("--block-size", type=int, default=20)
    p.add_argument("--within-rho", dest="within_step_rho", type=float, default=0.5)
    p.add_argument("--between-rho", dest="between_jump_rho", type=float, default=400.0)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _config_from_namespace(ns: argparse.Namespace) -> CliConfig:
    inputs = {}
    for key in ("haps", "legend", "map", "model", "freq", "geno", "geno_freq"):
        value = getattr(ns, key, None)
        if value is not None:
            inputs[key] = value
    eps_grid = ()
    if getattr(ns, "eps_grid", None):
        try:
            eps_grid = tuple(float(tok) for tok in ns.eps_grid.split(","))
        except ValueError as exc:
            raise CliUsageError(f"bad --eps grid: {exc}") from exc
    kwargs = {}
    for name in (
        "output", "out_prefix", "stride", "iterations", "sigma2", "eps2",
        "sparsity_threshold", "pool_size", "seed", "mode", "method",
        "estimate_eps", "shrinkage", "starts", "hard_calls_path", "n_snps",
        "panel_haplotypes", "sample_haplotypes", "block_size",
        "within_step_rho", "between_jump_rho",
    ):
        source = "out" if name == "output" else name
        if hasattr(ns, source) and getattr(ns, source) is not None:
            kwargs[name] = getattr(ns, source)
    if getattr(ns, "mode", None) is None and ns.subcommand == "eval-cv":
        kwargs["mode"] = "genotypes" if "geno" in inputs else "frequencies"
    return CliConfig(
        subcommand=ns.subcommand, inputs=inputs, eps_grid=eps_grid, **kwargs
    )


def _load_panel_model(cfg: CliConfig):
    panel = io.load_panel(cfg.inputs["haps"], cfg.inputs["legend"])
    rho = io.load_rho_map(cfg.inputs["map"], panel.snps)
    model = fit_moment_model(panel, rho, sparsity_threshold=cfg.sparsity_threshold)
    return panel, rho, model


def _cmd_fit(cfg: CliConfig) -> int:
    panel, _, model = _load_panel_model(cfg)
    io.write_model(cfg.output, model, panel.snps)
    return 0


def _cmd_impute_freq(cfg: CliConfig) -> int:
    model, snps = io.read_model(cfg.inputs["model"])
    observed = io.load_frequency_table(cfg.inputs["freq"], snps)
    if observed.typed.all():
        print("note: every SNP is typed; output echoes the observations",
              file=sys.stderr)
    result = impute_frequencies(
        model, observed, sigma2=cfg.sigma2 or 1.0, eps2=cfg.eps2 or 0.0,
        pool_size=cfg.pool_size,
    )
    io.write_imputation_table(cfg.output, snps, result)
    return 0


def _cmd_impute_geno(cfg: CliConfig) -> int:
    model, snps = io.read_model(cfg.inputs["model"])
    genotypes = io.load_genotype_matrix(cfg.inputs["geno"])
    result = impute_individual_genotypes(model, genotypes, sigma2=cfg.sigma2 or 1.0)
    io.write_genotype_imputation_table(cfg.output, snps, result)
    return 0


def _cmd_genofreq(cfg: CliConfig) -> int:
    model, snps = io.read_model(cfg.inputs["model"])
    if cfg.method == "hwe":
        if "freq" not in cfg.inputs:
            raise CliUsageError("--method hwe needs --freq")
        observed = io.load_frequency_table(cfg.inputs["freq"], snps)
        imputed = impute_frequencies(
            model, observed, sigma2=cfg.sigma2 or 1.0, eps2=cfg.eps2 or 0.0,
            pool_size=cfg.pool_size,
        )
        result = hwe_genotype_frequencies(imputed)
    else:
        if "geno_freq" not in cfg.inputs:
            raise CliUsageError("--method joint-indicator needs --geno-freq")
        p0, p2, typed = io.load_genotype_freq_table(cfg.inputs["geno_freq"], snps)
        geno_model = fit_genotype_moment_model(model)
        result = impute_genotype_frequencies(geno_model, p0, p2, typed)
    io.write_genotype_freq_result(cfg.output, snps, result)
    return 0


def _cmd_denoise(cfg: CliConfig) -> int:
    model, snps = io.read_model(cfg.inputs["model"])
    observed = io.load_frequency_table(cfg.inputs["freq"], snps)
    if (cfg.sigma2 is None) != (cfg.eps2 is None):
        raise CliUsageError("provide both --sigma2 and --eps2, or neither")
    if cfg.sigma2 is not None:
        noise = NoiseModel(cfg.sigma2, cfg.eps2, float("nan"), 0, True)
    else:
        noise = fit_noise(model, observed, estimate_eps=cfg.estimate_eps,
                          pool_size=cfg.pool_size)
    result = denoise_typed(model, observed, noise, pool_size=cfg.pool_size)
    io.write_imputation_table(cfg.output, snps, result)
    print(f"sigma2 {io.fmt(noise.sigma2)}")
    print(f"eps2 {io.fmt(noise.eps2)}")
    print(f"loglik {io.fmt(noise.loglik)}")
    print(f"iterations {noise.fit_iterations}")
    return 0


def _cmd_ecm(cfg: CliConfig) -> int:
    genotypes = io.load_genotype_matrix(cfg.inputs["geno"])
    snps = io.load_legend(cfg.inputs["legend"])
    if len(snps) != genotypes.shape[1]:
        raise LinimputeError("legend and genotype matrix disagree on SNP count")
    rho = io.load_rho_map(cfg.inputs["map"], snps)
    rng = np.random.default_rng(cfg.seed) if cfg.starts > 1 else None
    state, imputed = ecm_run(
        genotypes, rho, iterations=cfg.iterations, shrinkage=cfg.shrinkage,
        starts=cfg.starts, rng=rng,
    )
    for i, (ll, delta) in enumerate(zip(state.loglik_trace, state.delta_trace), 1):
        print(f"iteration {i}\tloglik {io.fmt(ll)}\tmax_delta {io.fmt(delta)}",
              file=sys.stderr)
    header = ["id", "position"] + [f"ind{i}" for i in range(imputed.shape[0])]
    rows = (
        [snp.id, snp.position] + [float(v) for v in imputed[:, j]]
        for j, snp in enumerate(snps)
    )
    io.write_tsv(cfg.output, header, rows)
    if cfg.hard_calls_path:
        io.write_genotype_matrix(cfg.hard_calls_path, hard_calls(imputed))
    return 0


def _cmd_eval_cv(cfg: CliConfig) -> int:
    panel, _, model = _load_panel_model(cfg)
    if cfg.mode == "frequencies":
        if "freq" not in cfg.inputs:
            raise CliUsageError("frequency mode needs --freq")
        observed = io.load_frequency_table(cfg.inputs["freq"], panel.snps)
        if not observed.typed.all():
            raise LinimputeError("cross-validation needs a fully typed truth table")
        data = observed.values
    else:
        if "geno" not in cfg.inputs:
            raise CliUsageError("genotype mode needs --geno")
        data = io.load_genotype_matrix(cfg.inputs["geno"])
        if np.isnan(data).any():
            raise LinimputeError("cross-validation needs a complete genotype matrix")
    result = mask_cv(
        model, data, cfg.stride, mode=cfg.mode, sigma2=cfg.sigma2 or 1.0,
        pool_size=cfg.pool_size, max_workers=worker_count(),
    )
    rows = [
        [plan.offset, plan.stride, plan.masked_indices(data.shape[-1]).size,
         report.rmse, report.error_rate]
        for plan, report in result.folds
    ]
    rows.append(["aggregate", cfg.stride, data.shape[-1],
                 result.aggregate.rmse, result.aggregate.error_rate])
    io.write_tsv(cfg.output, ["offset", "stride", "n_masked", "rmse", "error_rate"],
                 rows)
    print(f"aggregate_rmse {io.fmt(result.aggregate.rmse)}")
    return 0


def _cmd_eval_noise(cfg: CliConfig) -> int:
    panel, _, model = _load_panel_model(cfg)
    observed = io.load_frequency_table(cfg.inputs["freq"], panel.snps)
    if not observed.typed.all():
        raise LinimputeError("the noise study needs a fully typed truth table")
    rng = np.random.default_rng(cfg.seed)
    rows = simulate_noise_study(model, observed.values, cfg.eps_grid, rng,
                                pool_size=cfg.pool_size)
    io.write_tsv(
        cfg.output,
        ["true_eps", "estimated_eps", "sigma2", "raw_rmse", "denoised_rmse"],
        ([r.true_eps, r.estimated_eps, r.sigma2, r.raw_rmse, r.denoised_rmse]
         for r in rows),
    )
    return 0


def _cmd_simulate(cfg: CliConfig) -> int:
    rng = np.random.default_rng(cfg.seed)
    rho = simulate_rho_map(
        cfg.n_snps, rng, block_size=cfg.block_size,
        within_step_rho=cfg.within_step_rho, between_jump_rho=cfg.between_jump_rho,
    )
    panel = simulate_panel(cfg.n_snps, cfg.panel_haplotypes, rho, rng)
    haps = sample_haplotypes(panel, rho, cfg.sample_haplotypes, rng)
    prefix = cfg.out_prefix
    io.write_panel(f"{prefix}_panel.haps", f"{prefix}_panel.legend", panel)
    io.write_rho_map(f"{prefix}.map", rho, panel.snps)
    io.write_frequency_table(f"{prefix}_sample.freq", panel.snps, haps.mean(axis=0))
    io.write_genotype_matrix(f"{prefix}_sample.geno", haplotypes_to_genotypes(haps))
    return 0


_HANDLERS = {
    "fit": _cmd_fit,
    "impute-freq": _cmd_impute_freq,
    "impute-geno": _cmd_impute_geno,
    "genofreq": _cmd_genofreq,
    "denoise": _cmd_denoise,
    "ecm": _cmd_ecm,
    "eval-cv": _cmd_eval_cv,
    "eval-noise": _cmd_eval_noise,
    "simulate": _cmd_simulate,
}


def cli_dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        cfg = _config_from_namespace(ns)
        return _HANDLERS[cfg.subcommand](cfg)
    except CliUsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (LinimputeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
