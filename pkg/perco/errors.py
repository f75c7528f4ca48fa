"""
MIT License

Copyright (c) 2024 the perco.py developers

Permission is hereby granted, free of charge, to any person obtaining a copy
of this software and associated documentation files (the "Software"), to deal
in the Software without restriction, including without limitation the rights
to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
copies of the Software, and to permit persons to whom the Software is
furnished to do so, subject to the following conditions:

The above copyright notice and this permission notice shall be included in all
copies or substantial portions of the Software.

THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
SOFTWARE.
"""


class PercoException(Exception):
    """Base exception for perco.py

    Attributes
    ----------
    reason:
        :class:`str` - A short, stable description of what went wrong.

    message:
        :class:`str` - The more detailed message. This could be ``None`` if nothing was given.

    exit_code:
        :class:`int` - The process exit code the command line maps this error to.
    """

    __slots__ = ("reason", "message")

    exit_code = 1
    default_reason = "Error Occurred"

    def __init__(self, message=None, *, reason=None):
        self.reason = reason or self.default_reason
        self.message = message

        fmt = "{0.reason} (exit code: {0.exit_code})"
        if self.message:
            fmt += ": {0.message}"

        super().__init__(fmt.format(self))


class UsageError(PercoException):
    """Thrown when an operation is called outside of its preconditions.

    Examples are a dimension mismatch, an unoccupied walk start or a box which does
    not fit inside a hard-boundary window.
    """

    exit_code = 3
    default_reason = "Usage Error"


class InvalidArgument(UsageError):
    """Thrown when a parameter lies outside of its admissible range.

    For example an occupation probability outside ``[0, 1]``, an interlacement
    in dimension 2, or an unknown key in an experiment spec.

    Subclass of :exc:`UsageError`
    """

    default_reason = "Invalid Argument"


class UndefinedLevel(InvalidArgument):
    """Thrown when the renormalization levels ``s`` and ``r`` cannot be defined.

    This happens when ``R < L_0 ** (3 d**2 / theta_iso)``.

    Subclass of :exc:`InvalidArgument`
    """

    default_reason = "Undefined Level"


class OracleRefused(UsageError):
    """Thrown when a brute-force oracle is asked to enumerate a region that is too large.

    Subclass of :exc:`UsageError`
    """

    default_reason = "Oracle Refused"


class EmptyRegion(UsageError):
    """Thrown when a region contains no occupied site.

    Subclass of :exc:`UsageError`
    """

    default_reason = "Empty Region"


class CheckFailure(PercoException):
    """Thrown when an enabled check ran to completion and did not pass."""

    exit_code = 2
    default_reason = "Check Failed"


class ContractViolation(PercoException):
    """Thrown when a property guaranteed by construction does not hold.

    These signal an implementation bug rather than an unlucky sample, e.g. a fat set
    violating its density bound or two large components inside a 0-good box.
    """

    exit_code = 4
    default_reason = "Contract Violation"


class SolverError(ContractViolation):
    """Thrown when the iterative corrector solve does not converge.

    Attributes
    ----------
    residual:
        :class:`float` - The residual norm reached when the solver gave up.

    Subclass of :exc:`ContractViolation`
    """

    __slots__ = ("residual",)

    default_reason = "Solver Error"

    def __init__(self, message=None, *, residual=None, reason=None):
        self.residual = residual
        super().__init__(message, reason=reason)


class StageError(PercoException):
    """Thrown by the experiment harness when a pipeline stage raises.

    The original exception is kept as ``__cause__`` and its exit code is preserved.

    Attributes
    ----------
    stage:
        :class:`str` - The name of the stage that failed.
    original:
        :class:`PercoException` - The exception raised by the stage.
    """

    __slots__ = ("stage", "original")

    default_reason = "Stage Failed"

    def __init__(self, stage, original):
        self.stage = stage
        self.original = original
        super().__init__("{}: {}".format(stage, original), reason=self.default_reason)

    @property
    def exit_code(self):
        return getattr(self.original, "exit_code", 4)
