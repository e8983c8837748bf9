"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes, so raising the right class
matters more than the message text.
"""


class DiffAdvectError(Exception):
    """Base class for all package errors."""


class ConfigError(DiffAdvectError):
    """Invalid configuration or construction parameters (exit code 2).

    ``errors`` optionally carries the full list of validation messages so a
    caller can report every problem at once instead of the first one hit.
    """

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = list(errors) if errors is not None else [message]


class DomainError(DiffAdvectError):
    """A point lies outside the unit-cube field domain."""


class OutOfBlockError(DiffAdvectError):
    """A point lies outside a block's ghost-padded sampling extent.

    Distinct from :class:`DomainError` so the integrator can tell a block
    boundary crossing apart from leaving the dataset altogether.
    """


class InvariantError(DiffAdvectError):
    """A runtime invariant was violated; indicates a bug (exit code 3)."""


class RoundLimitError(DiffAdvectError):
    """The advection loop exceeded the hard round cap (exit code 4)."""
