"""Error hierarchy for nmpzero.

Every error carries the CLI exit code it maps to.
"""

from typing import Optional, Tuple


class NmpZeroError(Exception):
    """Base class for all nmpzero errors."""

    exit_code: int = 2


class InputError(NmpZeroError):
    """Malformed or inconsistent input data."""

    exit_code = 1


class NumericalError(NmpZeroError):
    """A computation could not be completed within tolerance."""

    exit_code = 2


class VerificationError(NmpZeroError):
    """A self-check failed beyond tolerance."""

    exit_code = 3


class UnknownFixtureError(InputError):
    pass


class IndexOutOfRangeError(InputError):
    pass


class ShapeError(InputError):
    pass


class NoRootsError(InputError):
    pass


class DegenerateInjectionError(InputError):
    def __init__(self, node: str):
        super().__init__(f"apparent power is zero at node {node}")
        self.node = node


class PoleError(NumericalError):
    pass


class SingularityError(NumericalError):
    pass


class DegenerateLoopError(NumericalError):
    pass


class ReductionError(NumericalError):
    pass


class DefinitenessError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message: str, bracket: Optional[Tuple[float, float]] = None):
        if bracket is not None:
            message = f"{message} (bracket [{bracket[0]:.17g}, {bracket[1]:.17g}])"
        super().__init__(message)
        self.bracket = bracket


class NotAZeroError(NumericalError):
    pass


class MultiplicityError(NumericalError):
    def __init__(self, smallest: float, second: float):
        super().__init__(
            f"zero eigenvalue not isolated: |mu_1| = {smallest:.3e}, |mu_2| = {second:.3e}"
        )
        self.smallest = smallest
        self.second = second


class DefectiveZeroError(NumericalError):
    pass


class SingularReferenceError(NumericalError):
    pass
