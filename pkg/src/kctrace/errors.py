"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes (input 1, backend 2, numeric 3).
"""


class KctraceError(Exception):
    """Base class for all package errors."""


class InputError(KctraceError):
    """Malformed files, invariant violations, bad arguments."""


class BackendError(KctraceError):
    """Completion backend failures: transport errors, unparseable output."""


class NumericalError(KctraceError):
    """Non-finite values or numerically degenerate inputs."""
