"""Exception types raised across the package."""


class AlStokesError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(AlStokesError, ValueError):
    def __init__(self, what, expected, got):
        self.what = what
        self.expected = expected
        self.got = got
        super().__init__(f"{what}: expected {expected}, got {got}")


class InvalidMatrixError(AlStokesError, ValueError):
    """CSR arrays violate a structural invariant (ordering, duplicates, bounds)."""


class QNotSPDError(AlStokesError, ValueError):
    """A diagonal scaling has a nonpositive entry."""


class NotSPDError(AlStokesError, ArithmeticError):
    """CG detected p^T A p <= 0."""


class IcBreakdownError(AlStokesError, ArithmeticError):
    def __init__(self, column, pivot, shift=0.0):
        self.column = column
        self.pivot = pivot
        self.shift = shift
        super().__init__(
            f"incomplete Cholesky breakdown at column {column} "
            f"(pivot {pivot:.3e}, diagonal shift {shift:g})"
        )


class GridTooCoarseError(AlStokesError, ValueError):
    pass


class AssemblyError(AlStokesError, RuntimeError):
    pass


class RankDeficientError(AlStokesError, ValueError):
    pass


class SizeGuardError(AlStokesError, ValueError):
    pass


class ManifestError(AlStokesError):
    """Base for problems reading an exported system."""


class MissingFileError(ManifestError, FileNotFoundError):
    pass


class ManifestDimensionError(ManifestError, DimensionMismatchError):
    pass


class AsymmetricMatrixError(ManifestError, ValueError):
    pass
