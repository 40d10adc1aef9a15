"""Exception hierarchy shared across the toolkit."""


class GoptError(Exception):
    """Base class for every error raised by this package."""


class GraphFormatError(GoptError):
    """Malformed graph or schema JSON."""


class IntegrityError(GoptError):
    """Graph or schema violates a structural invariant."""


class PropertyTypeError(GoptError):
    """Property value does not match its declared variant."""


class SchemaError(GoptError):
    """Unknown type name or inconsistent schema declaration."""


class EvaluationError(GoptError):
    """Expression evaluation failed (unknown tag, type mismatch, ...)."""


class PlanError(GoptError):
    """A GIR plan or builder call is malformed."""


class QuerySyntaxError(GoptError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class StatisticsError(GoptError):
    """Statistics are missing, out of range, or unusable."""


class OptimizerError(GoptError):
    """Internal optimizer invariant violated."""


class ExecutionError(GoptError):
    """Physical plan could not be executed."""


class RuleError(GoptError):
    """A rewrite rule broke a plan invariant or failed to terminate."""
