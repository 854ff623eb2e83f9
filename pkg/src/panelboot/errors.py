"""Exception hierarchy.

Split along the CLI's exit-code contract: usage problems, numerical
failures, and I/O/validation failures are distinguishable by type.
"""

from __future__ import annotations


class PanelbootError(Exception):
    """Base class for all library errors."""


class DataError(PanelbootError):
    """Malformed or inconsistent input data (CSV parse, balance, lags)."""


class NumericalError(PanelbootError):
    """Numerical failure: non-convergence, singularity, degenerate fit."""


class DegenerateFitError(NumericalError):
    """A fit whose maximizer is not identified (e.g. zero within-variance)."""


class UsageError(PanelbootError):
    """Invalid arguments to a library call or CLI invocation."""
