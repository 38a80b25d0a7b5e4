"""Exception types shared across the optimizer stack."""


class QoaasError(Exception):
    """Base class for all library errors."""


class UnknownTable(QoaasError):
    pass


class UnknownColumn(QoaasError):
    pass


class UnknownEngine(QoaasError):
    pass


class DuplicateTable(QoaasError):
    pass


class DataSchemaMismatch(QoaasError):
    pass


class InvalidPlan(QoaasError):
    """Raised when an operation requires a validated plan and gets garbage."""

    def __init__(self, report):
        self.report = report
        super().__init__("plan failed validation: " + "; ".join(
            f"{e.path}: {e.code} {e.message}" for e in report.errors[:5]))


class UnknownRule(QoaasError):
    pass


class FixpointOverrun(QoaasError):
    pass


class UnknownParam(QoaasError):
    pass


class MissingAnnotation(QoaasError):
    pass


class UnannotatedNode(QoaasError):
    pass


class NoValidPlan(QoaasError):
    pass


class UnsupportedOperator(QoaasError):
    pass


class DataMissing(QoaasError):
    pass


class SchemaViolation(QoaasError):
    pass


class UnknownKey(QoaasError):
    pass


class BadFilter(QoaasError):
    pass


class EmptyWorkload(QoaasError):
    pass


class NoMatchingInsights(QoaasError):
    pass


class MemoInternalError(QoaasError):
    """Internal invariant of the search structure broke; always a bug."""
