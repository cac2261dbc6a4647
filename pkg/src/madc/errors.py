"""Shared exception types.

Validation problems (bad inputs, bad files, exceeded budgets) raise
``ValueError`` subclasses; numerical failures discovered mid-computation
raise ``NumericalError`` subclasses.  The CLI maps the former to exit
code 2 and the latter to exit code 1.
"""


class BudgetExceededError(ValueError):
    """A configured size/enumeration budget would be exceeded."""


class NumericalError(RuntimeError):
    """A computation failed for numerical (not input-validation) reasons."""


class IllConditionedError(NumericalError):
    """A matrix inversion was refused because of its condition number."""


class LeakageError(NumericalError):
    """Truncated Fock space too small: amplitude would leave the top block."""


class ConsistencyError(NumericalError):
    """Two independent criteria that must agree disagreed decisively."""


class SupportError(NumericalError):
    """A wavepacket violates the position-support hypothesis of a check."""
