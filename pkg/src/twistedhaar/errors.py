"""Exception types shared across the package."""


class TwistedHaarError(Exception):
    """Base class for all package errors."""


class InvalidGrid(TwistedHaarError):
    """Axis specification violates a grid invariant (cell count, cap, ...)."""


class GridMismatch(TwistedHaarError):
    """Two signals or operators live on different grids or numeric modes."""


class InvalidExponent(TwistedHaarError):
    """An L^p exponent outside [1, inf] was requested."""


class IncompatibleGrid(TwistedHaarError):
    """A shear mixes axes whose resolution or extent do not match."""


class NotUnimodular(TwistedHaarError):
    """A coordinate map with |det| != 1 was used where a bijection is required."""


class DimensionMismatch(TwistedHaarError):
    """An index or point has the wrong number of components for its grid."""


class ResolutionError(TwistedHaarError):
    """A dyadic scale falls outside the range resolvable on the grid."""


class ScaleError(TwistedHaarError):
    """A martingale scale pair lies outside the admissible window."""


class RegimeError(TwistedHaarError):
    """A scale triple violates the case ordering required by a construction."""


class ComparisonFailure(TwistedHaarError):
    """No comparability constant was found below the configured bound."""


class ExactnessError(TwistedHaarError):
    """An operation that must be exact (e.g. division by 3) has a remainder."""
