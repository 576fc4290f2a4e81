"""Exception hierarchy.

Two families matter to callers: ``ValidationError`` (bad inputs, exit code 2
from the CLI) and ``NumericalError`` (a well-posed run that failed to produce
a trustworthy number, exit code 3).
"""


class GExpectError(Exception):
    """Base class for all package errors."""


class ValidationError(GExpectError, ValueError):
    """Inputs violate a documented precondition."""


class NumericalError(GExpectError, RuntimeError):
    """A computation could not reach the requested accuracy or size budget."""


class EmptyFamily(ValidationError):
    pass


class InvalidLaw(ValidationError):
    pass


class CflViolation(ValidationError):
    pass


class DomainTooSmall(ValidationError):
    pass


class UnboundedFunctional(ValidationError):
    pass


class ConditionViolated(ValidationError):
    """A heavy-tail condition failed.

    ``condition`` is one of ``"I"``, ``"II"``, ``"III"`` and ``atom`` the
    magnitude of the atom at which the check broke.
    """

    def __init__(self, condition, atom, detail=""):
        self.condition = condition
        self.atom = atom
        msg = f"condition ({condition}) violated at atom {atom}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class NoConvergence(NumericalError):
    pass


class StateExplosion(NumericalError):
    pass


class NoRoot(NumericalError):
    pass
