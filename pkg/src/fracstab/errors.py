"""Exception types shared across the package.

Everything derives from ``ValueError`` so callers that only care about bad
input can catch that.  The CLI maps the classes onto exit codes.
"""


class FracstabError(ValueError):
    pass


class OutOfDomainError(FracstabError):
    """A landmark falls outside the heatmap grid after scaling."""

    def __init__(self, index, point, bounds):
        self.index = index
        super().__init__(
            f"landmark {index} at {tuple(point)} lies outside the heatmap "
            f"domain [0, {bounds[0]}] x [0, {bounds[1]}]"
        )


class InvalidHeatmapError(FracstabError):
    pass


class ShapeError(FracstabError):
    pass


class InsufficientDataError(FracstabError):
    pass


class NoPriorError(FracstabError):
    """Raised when prior moments are requested before any history exists."""


class FormatError(FracstabError):
    """Malformed file on disk (bad magic, truncated payload, missing field)."""


class NumericalError(FracstabError):
    pass
