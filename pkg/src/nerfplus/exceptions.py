"""Exception types shared across the package.

The CLI maps :class:`InputError` to exit code 2 and
:class:`NumericalError` to exit code 3.
"""


class InputError(ValueError):
    """Invalid user input: malformed files, dimension mismatches, bad configs."""


class NumericalError(RuntimeError):
    """Numerical failure: singular systems, non-convergent eigensolves."""
