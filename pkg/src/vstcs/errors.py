"""Exception hierarchy shared by every module.

Each class carries a short ``code`` used by the command-line front end when
printing machine-parsable ``ERR:<code>:`` messages.
"""


class VstcsError(Exception):
    code = "RUNTIME"


class ParameterError(VstcsError, ValueError):
    code = "PARAM"


class DomainError(VstcsError, ValueError):
    code = "DOMAIN"


class DimensionError(VstcsError, ValueError):
    code = "DIM"


class BoundInapplicableError(VstcsError, ValueError):
    """A bound was requested outside the regime where it holds."""

    code = "BOUND"


class PreconditionError(VstcsError):
    """An experiment precondition (e.g. a certified RIC) was not met."""

    code = "PRECONDITION"
