"""Exception hierarchy.

Every error carries the CLI exit code of its class so the command-line
layer can map failures without inspecting messages.
"""

from __future__ import annotations


class HutchinsonError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ParseError(HutchinsonError):
    """Malformed operator input. ``offset`` is the byte offset of the problem."""

    exit_code = 2

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class PreconditionError(HutchinsonError):
    """A documented precondition of an operation does not hold."""

    exit_code = 3


class BothZero(PreconditionError):
    pass


class DegenerateOperator(PreconditionError):
    pass


class WrongRegime(PreconditionError):
    pass


class WrongCase(PreconditionError):
    pass


class PreconditionViolated(PreconditionError):
    pass


class NotOnTrail(PreconditionError):
    pass


class StartAtSingularity(PreconditionError):
    pass


class DegenerateTrail(PreconditionError):
    pass


class PoleAt(PreconditionError):
    def __init__(self, z: complex):
        super().__init__(f"R has a pole at {z}")
        self.z = z


class NumericalError(HutchinsonError):
    exit_code = 4


class NonConvergence(NumericalError):
    pass


class NonClosure(NumericalError):
    pass


class NoProgress(NumericalError):
    pass


class VerificationFailure(HutchinsonError):
    exit_code = 5
