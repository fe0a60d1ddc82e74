"""Exception hierarchy shared by the synthesis, simulation and certification layers."""


class KdvCascadeError(Exception):
    """Base class for all errors raised by the package."""


class DimensionError(KdvCascadeError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class InputError(KdvCascadeError, ValueError):
    """An argument violates a documented precondition."""


class DomainError(KdvCascadeError, ValueError):
    """A spatial point lies outside the domain of a function."""


class CertificationError(KdvCascadeError):
    """A stability certificate cannot be constructed.

    Attributes
    ----------
    abscissa : float or None
        Spectral abscissa of the offending matrix, when the failure is a
        non-Hurwitz closed-loop matrix.
    """

    def __init__(self, msg, abscissa=None):
        super().__init__(msg)
        self.abscissa = abscissa


class PlantError(InputError):
    """A plant fails one of its validity conditions.

    ``violation`` is one of ``"not_controllable"``, ``"not_hurwitz"``,
    ``"lambda_nonpositive"``, ``"length_nonpositive"``.
    """

    def __init__(self, violation, msg=None):
        super().__init__(msg or violation)
        self.violation = violation


class ConvergenceError(KdvCascadeError):
    """The kernel iteration did not reach its tolerance."""

    def __init__(self, msg, history=()):
        super().__init__(msg)
        self.history = list(history)


class SimulationError(KdvCascadeError):
    """A time-stepping run failed (singular step matrix, divergence)."""

    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step


class DivergenceError(SimulationError):
    """The state norm exceeded the divergence guard."""
