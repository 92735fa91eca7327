"""Text file formats: panels, maps, fitted models, frequency and genotype
tables, and TSV reports.

All numeric output uses 17-significant-digit decimal serialization, which
round-trips float64 exactly, and `.` marks missing values everywhere. Every
writer is deterministic: identical inputs produce byte-identical files.
"""

from __future__ import annotations

import numpy as np

from .banded import BandedSpdMatrix
from .errors import (
    IdMismatch,
    NonmonotonePositions,
    ParseError,
    RowCountMismatch,
)
from .impute import GenotypeFreqResult, ImputationResult
from .shrinkage import MomentModel
from .types import FrequencyVector, Panel, RhoMap, SnpMeta

MODEL_MAGIC = "#linimpute-model"
MODEL_VERSION = 1
MISSING = "."


def fmt(x: float) -> str:
    """Reparse-exact decimal form of a double."""
    return format(float(x), ".17g")


def _lines(path):
    with open(path, "rt", encoding="utf-8") as fh:
        for number, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if line:
                yield number, line


# -- legend + haplotype/genotype matrices -------------------------------------


def load_legend(path) -> list[SnpMeta]:
    snps = []
    rows = _lines(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise ParseError("empty legend file", path=path) from None
    if header.split() != ["id", "position", "allele0", "allele1"]:
        raise ParseError("bad legend header", path=path, line=1)
    for number, line in rows:
        fields = line.split()
        if len(fields) != 4:
            raise ParseError(f"expected 4 fields, got {len(fields)}", path, number)
        try:
            snp = SnpMeta(fields[0], int(fields[1]), fields[2], fields[3])
        except ValueError as exc:
            raise ParseError(str(exc), path, number) from exc
        snps.append(snp)
    positions = [s.position for s in snps]
    if any(b <= a for a, b in zip(positions, positions[1:])):
        raise NonmonotonePositions(f"{path}: positions must be strictly increasing")
    return snps


def write_legend(path, snps) -> None:
    with open(path, "wt", encoding="utf-8") as fh:
        fh.write("id position allele0 allele1\n")
        for s in snps:
            fh.write(f"{s.id} {s.position} {s.allele0} {s.allele1}\n")


def _load_code_matrix(path) -> tuple[bool, np.ndarray]:
    """Rows-per-SNP code matrix with a phased=0|1 header; NaN for `.`."""
    rows = _lines(path)
    try:
        number, header = next(rows)
    except StopIteration:
        raise ParseError("empty data file", path=path) from None
    if header not in ("phased=0", "phased=1"):
        raise ParseError("first line must be phased=0 or phased=1", path, number)
    phased = header == "phased=1"
    data = []
    width = None
    for number, line in rows:
        fields = line.split()
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise ParseError(f"expected {width} columns, got {len(fields)}", path, number)
        try:
            data.append([np.nan if f == MISSING else float(int(f)) for f in fields])
        except ValueError as exc:
            raise ParseError(f"bad allele code: {exc}", path, number) from exc
    if not data:
        raise ParseError("no SNP rows", path=path)
    return phased, np.asarray(data, dtype=np.float64)


def _write_code_matrix(path, phased: bool, by_snp: np.ndarray) -> None:
    with open(path, "wt", encoding="utf-8") as fh:
        fh.write(f"phased={int(phased)}\n")
        for row in by_snp:
            fh.write(
                " ".join(MISSING if np.isnan(v) else str(int(v)) for v in row) + "\n"
            )


def load_panel(haps_path, legend_path) -> Panel:
    """Panel from a haps matrix (one line per SNP) plus its legend."""
    snps = load_legend(legend_path)
    phased, by_snp = _load_code_matrix(haps_path)
    if by_snp.shape[0] != len(snps):
        raise RowCountMismatch(
            f"{haps_path} has {by_snp.shape[0]} SNP rows, legend has {len(snps)}"
        )
    return Panel(snps=snps, data=by_snp.T, phased=phased)


def write_panel(haps_path, legend_path, panel: Panel) -> None:
    write_legend(legend_path, panel.snps)
    _write_code_matrix(haps_path, panel.phased, panel.data.T)


def load_genotype_matrix(path) -> np.ndarray:
    """Individuals-by-SNPs genotype matrix (stored one line per SNP)."""
    phased, by_snp = _load_code_matrix(path)
    if phased:
        raise ParseError("genotype matrices must declare phased=0", path=path)
    return by_snp.T


def write_genotype_matrix(path, genotypes: np.ndarray) -> None:
    _write_code_matrix(path, False, np.asarray(genotypes, dtype=np.float64).T)


# -- recombination map ---------------------------------------------------------


def load_rho_map(path, snps: list[SnpMeta] | None = None) -> RhoMap:
    """Cumulative rho map; ids are checked against ``snps`` when given."""
    rows = _lines(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise ParseError("empty map file", path=path) from None
    if header.split() != ["id", "position", "cum_rho"]:
        raise ParseError("bad map header", path=path, line=1)
    ids, cum = [], []
    for number, line in rows:
        fields = line.split()
        if len(fields) != 3:
            raise ParseError(f"expected 3 fields, got {len(fields)}", path, number)
        try:
            cum.append(float(fields[2]))
        except ValueError as exc:
            raise ParseError(f"bad cum_rho value: {exc}", path, number) from exc
        ids.append(fields[0])
    if snps is not None:
        expected = [s.id for s in snps]
        if ids != expected:
            raise IdMismatch(f"{path}: map ids do not match the legend")
    return RhoMap(np.asarray(cum))


def write_rho_map(path, rho: RhoMap, snps) -> None:
    with open(path, "wt", encoding="utf-8") as fh:
        fh.write("id position cum_rho\n")
        for snp, value in zip(snps, rho.cumulative):
            fh.write(f"{snp.id} {snp.position} {fmt(value)}\n")


# -- frequency and genotype-frequency tables -----------------------------------


def load_frequency_table(path, snps: list[SnpMeta]) -> FrequencyVector:
    """Observed typed frequencies, `.` for untyped; ids must match the model."""
    rows = _lines(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise ParseError("empty frequency table", path=path) from None
    if header.split()[:3] != ["id", "position", "freq"]:
        raise ParseError("bad frequency table header", path=path, line=1)
    values = []
    ids = []
    for number, line in rows:
        fields = line.split()
        if len(fields) < 3:
            raise ParseError("expected id position freq", path, number)
        ids.append(fields[0])
        try:
            values.append(np.nan if fields[2] == MISSING else float(fields[2]))
        except ValueError as exc:
            raise ParseError(f"bad frequency: {exc}", path, number) from exc
    if ids != [s.id for s in snps]:
        raise IdMismatch(f"{path}: table ids do not match the model")
    return FrequencyVector(np.asarray(values))


def write_frequency_table(path, snps, values: np.ndarray) -> None:
    with open(path, "wt", encoding="utf-8") as fh:
        fh.write("id position freq\n")
        for snp, v in zip(snps, values):
            text = MISSING if np.isnan(v) else fmt(v)
            fh.write(f"{snp.id} {snp.position} {text}\n")


def load_genotype_freq_table(path, snps) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Observed (p0, p2) pairs at typed SNPs; returns (p0, p2, typed mask)."""
    rows = _lines(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise ParseError("empty genotype frequency table", path=path) from None
    if header.split()[:4] != ["id", "position", "p0", "p2"]:
        raise ParseError("bad genotype frequency header", path=path, line=1)
    ids, p0s, p2s = [], [], []
    for number, line in rows:
        fields = line.split()
        if len(fields) < 4:
            raise ParseError("expected id position p0 p2", path, number)
        ids.append(fields[0])
        pair = fields[2], fields[3]
        if MISSING in pair and pair != (MISSING, MISSING):
            raise ParseError("p0 and p2 must be set or missing together", path, number)
        try:
            p0s.append(np.nan if pair[0] == MISSING else float(pair[0]))
            p2s.append(np.nan if pair[1] == MISSING else float(pair[1]))
        except ValueError as exc:
            raise ParseError(f"bad genotype frequency: {exc}", path, number) from exc
    if ids != [s.id for s in snps]:
        raise IdMismatch(f"{path}: table ids do not match the model")
    p0 = np.asarray(p0s)
    p2 = np.asarray(p2s)
    return p0, p2, ~np.isnan(p0)


# -- result tables --------------------------------------------------------------


def write_imputation_table(path, snps, result: ImputationResult) -> None:
    """`id position mean variance status clamped` rows; unset cells are `.`."""
    with open(path, "wt", encoding="utf-8") as fh:
        fh.write("id\tposition\tmean\tvariance\tstatus\tclamped\n")
        for i, snp in enumerate(snps):
            point = result.point[i]
            var = result.variance[i]
            status = "typed" if result.typed[i] else "untyped"
            fh.write(
                "\t".join(
                    [
                        snp.id,
                        str(snp.position),
                        MISSING if np.isnan(point) else fmt(point),
                        MISSING if np.isnan(var) else fmt(var),
                        status,
                        str(int(result.clamped[i])),
                    ]
                )
                + "\n"
            )


def write_genotype_imputation_table(path, snps, result: ImputationResult) -> None:
    """Long-format per-individual table with hard calls."""
    from .impute import hard_calls

    calls = hard_calls(result.point)
    with open(path, "wt", encoding="utf-8") as fh:
        fh.write("id\tposition\tindividual\tmean\tvariance\thard_call\tstatus\n")
        for i, snp in enumerate(snps):
            for ind in range(result.point.shape[0]):
                status = "typed" if result.typed[ind, i] else "untyped"
                fh.write(
                    "\t".join(
                        [
                            snp.id,
                            str(snp.position),
                            str(ind),
                            fmt(result.point[ind, i]),
                            fmt(result.variance[ind, i]),
                            str(int(calls[ind, i])),
                            status,
                        ]
                    )
                    + "\n"
                )


def write_genotype_freq_result(path, snps, result: GenotypeFreqResult) -> None:
    with open(path, "wt", encoding="utf-8") as fh:
        fh.write("id\tposition\tp0\tp1\tp2\n")
        for i, snp in enumerate(snps):
            fh.write(
                "\t".join(
                    [
                        snp.id,
                        str(snp.position),
                        fmt(result.p0[i]),
                        fmt(result.p1[i]),
                        fmt(result.p2[i]),
                    ]
                )
                + "\n"
            )


def write_tsv(path, header: list[str], rows) -> None:
    """Generic TSV report; floats are serialized reparse-exactly."""
    with open(path, "wt", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            cells = [
                MISSING
                if cell is None or (isinstance(cell, float) and np.isnan(cell))
                else (fmt(cell) if isinstance(cell, (float, np.floating)) else str(cell))
                for cell in row
            ]
            fh.write("\t".join(cells) + "\n")


# -- fitted model container ------------------------------------------------------


def write_model(path, model: MomentModel, snps) -> None:
    """Versioned text container for a fitted moment model."""
    sigma = model.sigma_hat
    with open(path, "wt", encoding="utf-8") as fh:
        fh.write(f"{MODEL_MAGIC} {MODEL_VERSION}\n")
        fh.write(f"p\t{model.n_snps}\n")
        fh.write(f"bandwidth\t{sigma.bandwidth}\n")
        fh.write(f"theta\t{fmt(model.theta)}\n")
        fh.write(f"panel_size\t{model.panel_size}\n")
        fh.write(f"sparsity_threshold\t{fmt(model.sparsity_threshold)}\n")
        fh.write("snps\tid\tposition\tallele0\tallele1\tmu_hat\tpanel_freq\n")
        for i, snp in enumerate(snps):
            fh.write(
                f"snp\t{snp.id}\t{snp.position}\t{snp.allele0}\t{snp.allele1}"
                f"\t{fmt(model.mu_hat[i])}\t{fmt(model.panel_freq[i])}\n"
            )
        for k in range(sigma.bandwidth + 1):
            values = "\t".join(fmt(v) for v in sigma.bands[k])
            fh.write(f"band\t{k}\t{values}\n")
        fh.write("end\n")


def read_model(path) -> tuple[MomentModel, list[SnpMeta]]:
    rows = _lines(path)
    try:
        number, magic = next(rows)
    except StopIteration:
        raise ParseError("empty model file", path=path) from None
    parts = magic.split()
    if parts[:1] != [MODEL_MAGIC] or parts[1:] != [str(MODEL_VERSION)]:
        raise ParseError("not a linimpute model file (or wrong version)", path, number)

    scalars: dict[str, str] = {}
    snps: list[SnpMeta] = []
    mu, freq = [], []
    bands: dict[int, np.ndarray] = {}
    for number, line in rows:
        fields = line.split("\t")
        key = fields[0]
        try:
            if key in ("p", "bandwidth", "theta", "panel_size", "sparsity_threshold"):
                scalars[key] = fields[1]
            elif key == "snps":
                continue
            elif key == "snp":
                snps.append(SnpMeta(fields[1], int(fields[2]), fields[3], fields[4]))
                mu.append(float(fields[5]))
                freq.append(float(fields[6]))
            elif key == "band":
                bands[int(fields[1])] = np.array([float(v) for v in fields[2:]])
            elif key == "end":
                break
            else:
                raise ParseError(f"unknown record {key!r}", path, number)
        except (IndexError, ValueError) as exc:
            raise ParseError(f"malformed record: {exc}", path, number) from exc
    else:
        raise ParseError("missing end record", path=path)

    try:
        p = int(scalars["p"])
        bandwidth = int(scalars["bandwidth"])
        theta = float(scalars["theta"])
        panel_size = int(scalars["panel_size"])
        threshold = float(scalars["sparsity_threshold"])
    except KeyError as exc:
        raise ParseError(f"missing header record {exc}", path=path) from exc
    if len(snps) != p:
        raise RowCountMismatch(f"{path}: header says p={p}, found {len(snps)} SNPs")
    band_array = np.zeros((bandwidth + 1, p))
    for k in range(bandwidth + 1):
        if k not in bands or bands[k].size != p:
            raise ParseError(f"band row {k} missing or wrong length", path=path)
        band_array[k] = bands[k]
    sigma = BandedSpdMatrix(p, bandwidth, band_array)
    model = MomentModel(
        mu_hat=np.asarray(mu),
        sigma_hat=sigma,
        theta=theta,
        panel_freq=np.asarray(freq),
        panel_size=panel_size,
        sparsity_threshold=threshold,
    )
    return model, snps
