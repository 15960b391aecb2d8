"""Exception types raised across the package."""


class ConvForestError(Exception):
    """Base class for all library errors."""


class ShapeError(ConvForestError, ValueError):
    pass


class LengthError(ShapeError):
    """Raised for FFT inputs whose length is not a power of two."""


class CapacityError(ConvForestError, ValueError):
    """An FFT length exceeds ``2**max_log_n`` or an oracle exceeds its size guard."""


class DomainError(ConvForestError, ValueError):
    pass


class LabelError(ConvForestError, KeyError):
    def __str__(self):
        # KeyError quotes its argument; keep messages readable.
        return str(self.args[0]) if self.args else ""


class DegenerateMessageError(ConvForestError, ValueError):
    """A PMF has no positive mass."""


class ContradictionError(ConvForestError):
    """Supports of interacting distributions do not intersect.

    This signals an impossible model/data combination rather than a
    convergence problem.
    """


class ArityError(ConvForestError, ValueError):
    pass


class NotReadyError(ConvForestError, RuntimeError):
    pass


class TopologyError(ConvForestError, ValueError):
    pass


class BuildError(ConvForestError, ValueError):
    pass


class ParseError(ConvForestError, ValueError):
    pass
