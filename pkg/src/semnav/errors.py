"""Exception hierarchy shared by every semnav module."""


class SemnavError(Exception):
    """Base class for all semnav errors."""


class ParseError(SemnavError, ValueError):
    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{message}{suffix}")


class InvariantViolation(SemnavError, ValueError):
    def __init__(self, invariant, detail=""):
        self.invariant = invariant
        super().__init__(f"invariant-violation({invariant!r}){': ' + detail if detail else ''}")


class GenerationError(SemnavError, RuntimeError):
    pass


class InsufficientCategories(SemnavError, ValueError):
    pass


class InsufficientSpawns(SemnavError, ValueError):
    pass


class InvalidPose(SemnavError, ValueError):
    pass


class DimsMismatch(SemnavError, ValueError):
    pass


class EmptyGoalSet(SemnavError, ValueError):
    pass


class UnknownCategory(ParseError):
    pass


class WeightOutOfRange(SemnavError, ValueError):
    pass


class EmptySceneList(SemnavError, ValueError):
    pass


class BadLength(SemnavError, ValueError):
    pass


class TooFewSamples(SemnavError, ValueError):
    pass


class AgentCellOccupied(SemnavError, RuntimeError):
    pass


class DivergenceDetected(SemnavError, RuntimeError):
    def __init__(self, message, trace=None):
        self.trace = list(trace or [])
        super().__init__(message)


class InstanceTooLarge(SemnavError, ValueError):
    pass


class EmptyInput(SemnavError, ValueError):
    pass


class MissingOracle(SemnavError, ValueError):
    pass


class UnpairedTask(SemnavError, ValueError):
    pass


class ConfigError(SemnavError, ValueError):
    pass


class BadRecord(SemnavError, ValueError):
    pass
