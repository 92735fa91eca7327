"""Exception hierarchy shared by all linimpute modules."""


class LinimputeError(Exception):
    """Base class for all errors raised by this package."""


class NotPositiveDefinite(LinimputeError):
    """A matrix that must be symmetric positive definite is not.

    Raised when a Cholesky pivot falls at or below the degeneracy
    threshold. Callers decide whether to add jitter; no silent
    regularization happens inside the solvers.
    """


class DimensionMismatch(LinimputeError):
    """Vector/matrix dimensions do not agree."""


class AllTypedOrAllUntyped(LinimputeError):
    """Conditioning requires a nonempty strict subset of typed SNPs."""


class InvalidPanelSize(LinimputeError):
    """Panel must contain at least two haplotypes."""


class EmptyPanel(LinimputeError):
    """Panel has no rows or no SNPs."""


class LengthMismatch(LinimputeError):
    """Aligned vectors have different lengths."""


class TooManyTemplates(LinimputeError):
    """Exhaustive path enumeration is limited to small template counts."""


class NoTypedSnps(LinimputeError):
    """At least one typed SNP is required."""


class InvalidGenotypeFrequencies(LinimputeError):
    """Observed genotype frequencies must satisfy p0, p2 >= 0 and p0 + p2 <= 1."""


class FitDiverged(LinimputeError):
    """Likelihood maximization ran into a parameter bound."""


class IndividualFullyMissing(LinimputeError):
    """An individual has no typed genotype at any SNP."""


class SnpNeverObserved(LinimputeError):
    """A SNP is missing in every individual."""


class StrideTooLarge(LinimputeError):
    """Masking stride must satisfy 2 <= k < p."""


class ZeroVariance(LinimputeError):
    """Z-scores require strictly positive variances."""


class ParseError(LinimputeError):
    """A text input file could not be parsed.

    Carries the offending path and 1-based line number when known.
    """

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class RowCountMismatch(LinimputeError):
    """Companion files describe different numbers of SNPs."""


class NonmonotonePositions(LinimputeError):
    """Legend positions must be strictly increasing."""


class NonmonotoneRho(LinimputeError):
    """Cumulative recombination coordinates must be nondecreasing."""


class IdMismatch(LinimputeError):
    """SNP identifiers in companion files do not line up."""
