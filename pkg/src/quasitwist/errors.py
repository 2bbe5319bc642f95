"""Exception hierarchy for the engine.

Every error carries enough context (the offending parameter, monomial,
grade or basis triple) to be actionable from the CLI report.
"""


class QuasiTwistError(Exception):
    """Base class for all engine errors."""


class DivisionByZero(QuasiTwistError):
    pass


class TruncationUnderflow(QuasiTwistError):
    """A result would need series degrees that were already dropped."""


class UnassignedParam(QuasiTwistError):
    pass


class PoleHit(QuasiTwistError):
    pass


class NonExponentiable(QuasiTwistError):
    """exp() applied to a scalar that is not Q-linear in log atoms."""


class NonTerminatingRewrite(QuasiTwistError):
    pass


class GradeOverflow(QuasiTwistError):
    pass


class DimensionMismatch(QuasiTwistError):
    pass


class SingularRecursion(QuasiTwistError):
    """The grade-k linear system for R-matrix coefficients is singular."""

    def __init__(self, msg, grade=None, obstruction=None):
        super().__init__(msg)
        self.grade = grade
        self.obstruction = obstruction


class TauNotIsomorphism(QuasiTwistError):
    pass


class GroupoidInconsistent(QuasiTwistError):
    pass


class CommutationFails(QuasiTwistError):
    pass


class RecursionInconsistent(QuasiTwistError):
    """An overdetermined twist-recursion row failed; names the monomial."""


class NotInvertible(QuasiTwistError):
    pass


class SingularSystem(QuasiTwistError):
    pass


class WindowOverflow(QuasiTwistError):
    pass


class ConvergenceGuard(QuasiTwistError):
    pass


class DegenerateModulus(QuasiTwistError):
    pass


class ConfigError(QuasiTwistError):
    """Bad run configuration or unparseable input file."""
