"""Exception hierarchy shared by all modules."""


class MomcError(Exception):
    """Base class for every error raised by the package."""


class PrismSyntaxError(MomcError):
    def __init__(self, message, line=None, column=None, expected=None):
        self.line = line
        self.column = column
        self.expected = expected
        where = f" at line {line}, column {column}" if line is not None else ""
        exp = f" (expected {expected})" if expected else ""
        super().__init__(f"{message}{where}{exp}")


class UnknownIdentifier(MomcError):
    pass


class TypeMismatch(MomcError):
    pass


class MissingConstant(MomcError):
    def __init__(self, names):
        self.names = list(names)
        super().__init__("undefined constants: " + ", ".join(self.names))


class ConstantRedefinition(MomcError):
    pass


class ProbabilityOutOfRange(MomcError):
    pass


class DeadlockDetected(MomcError):
    def __init__(self, states, total):
        self.states = list(states)
        self.total = total
        super().__init__(
            f"{total} deadlock state(s); first {len(self.states)}: {self.states}"
        )


class VariableRangeViolation(MomcError):
    pass


class NonNormalizedDistribution(MomcError):
    pass


class ShapeMismatch(MomcError):
    pass


class NonConvergence(MomcError):
    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class NumericalFailure(MomcError):
    pass


class RegionEmpty(MomcError):
    pass


class RegionUnbounded(MomcError):
    pass


class UnknownParameter(MomcError):
    pass


class AssumptionViolated(MomcError):
    def __init__(self, state, actions, message=None):
        self.state = state
        self.actions = tuple(actions)
        super().__init__(
            message
            or f"state {state!r}: guards of {self.actions[0]!r} and {self.actions[1]!r} "
            "are neither mutually exclusive nor equivalent"
        )


class UnsupportedGuardAtom(MomcError):
    pass


class StateNameClash(MomcError):
    pass


class EmptyCounts(MomcError):
    pass


class UnassignedParameter(MomcError):
    def __init__(self, names):
        self.names = list(names)
        super().__init__("unassigned parameters: " + ", ".join(self.names))


class TaFormatError(MomcError):
    pass


class QueryFormatError(MomcError):
    pass


class RewardDivergence(MomcError):
    pass
