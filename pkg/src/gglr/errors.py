"""Exception hierarchy shared by all gglr modules.

Every error carries a stable ``exit_code`` so the CLI can map failures to
machine-readable process exit statuses.
"""


class GglrError(Exception):
    """Base class for all library errors."""

    exit_code = 19


class ParseError(GglrError):
    exit_code = 10

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateEdge(ParseError):
    exit_code = 10


class SelfLoop(ParseError):
    exit_code = 10


class NotManifold(GglrError):
    exit_code = 11

    def __init__(self, vbc, threshold):
        super().__init__(
            f"graph failed the manifold gate: VBC {vbc:.3e} > threshold {threshold:.3e}"
        )
        self.vbc = vbc
        self.threshold = threshold


class NonConvergence(GglrError):
    exit_code = 12


class BreakdownNegativeCurvature(GglrError):
    """CG encountered p'Ap <= 0: the operator is not positive definite."""

    exit_code = 12


class RankDeficient(GglrError):
    exit_code = 13


class SingularPhi(GglrError):
    """The regularized system matrix is singular; solvability conditions violated."""

    exit_code = 14


class DimensionTooSmall(GglrError):
    exit_code = 15


class LengthMismatch(GglrError):
    exit_code = 15


class NoCoordinates(GglrError):
    exit_code = 15


class DegenerateCoordinates(GglrError):
    exit_code = 15


class NodeNotComputable(GglrError):
    exit_code = 15


class NotOneDimensional(GglrError):
    exit_code = 15


class NotAGrid(GglrError):
    exit_code = 15


class DegeneratePoints(GglrError):
    exit_code = 15


class NotConnected(GglrError):
    exit_code = 16


class DegenerateSpectrum(GglrError):
    exit_code = 16


class EigensolverFailure(GglrError):
    exit_code = 12


class InvalidSpec(GglrError):
    exit_code = 17
