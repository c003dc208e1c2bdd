"""Exception hierarchy shared across the toolkit.

Each class carries the process exit code the command-line front end maps
it to: 1 for I/O and file-consistency failures, 2 for degenerate or
insufficient input, 3 for non-convergence.
"""


class ToolkitError(Exception):
    exit_code = 1


class InputError(ToolkitError):
    """Input files cannot be read, parsed, or reconciled with each other."""

    exit_code = 1


class ParseError(InputError):
    pass


class CorruptFile(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class ChannelMismatch(InputError):
    pass


class FeatureWidthMismatch(InputError):
    pass


class DegenerateInput(ToolkitError):
    """Input parses but is mathematically degenerate or insufficient."""

    exit_code = 2


class InvariantViolation(DegenerateInput):
    pass


class DegenerateConfiguration(DegenerateInput):
    pass


class InsufficientCorrespondences(DegenerateInput):
    pass


class DepthNonPositive(DegenerateInput):
    pass


class OutOfRange(DegenerateInput):
    pass


class NotInvertible(DegenerateInput):
    pass


class SpecMismatch(DegenerateInput):
    pass


class EmptyClassSet(DegenerateInput):
    pass


class NotNormalized(DegenerateInput):
    pass


class EvenWindow(DegenerateInput):
    pass


class TooShort(DegenerateInput):
    pass


class MissingAnchor(DegenerateInput):
    pass


class NonFiniteResidual(DegenerateInput):
    pass


class SingularNormalEquations(DegenerateInput):
    pass


class HeadDivisibility(DegenerateInput):
    pass


class NonConvergence(ToolkitError):
    exit_code = 3
