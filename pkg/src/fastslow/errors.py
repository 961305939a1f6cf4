"""Exception types raised by the toolkit."""


class FastSlowError(Exception):
    """Base class for all errors raised by :mod:`fastslow`."""


class CutLocusError(FastSlowError):
    """The principal logarithm is ill-conditioned (eigenvalue near -1)."""


class StepTooLargeError(FastSlowError):
    """The fast step does not resolve the fast correlation time."""


class NotCenteredError(FastSlowError):
    """A coefficient function has nonzero mean under the invariant measure."""


class NotTorusError(FastSlowError):
    """A torus-only routine was handed a nonabelian fast group."""


class NotPSDError(FastSlowError):
    """Minus the symmetric part of the averaged matrix is not positive semidefinite."""


class RequiresDerivativesError(FastSlowError):
    """An observable without closed-form Lie derivatives was used where they are needed."""


class SizeMismatchError(FastSlowError):
    """Two ensembles handed to an exact transport solve differ in size."""


class DegenerateFitError(FastSlowError):
    """Errors are statistically indistinguishable from zero; no exponent can be fitted."""


class ConfigError(FastSlowError):
    """Invalid experiment configuration."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
