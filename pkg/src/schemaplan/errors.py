"""Exception hierarchy shared across the planner."""

from __future__ import annotations


class SchemaPlanError(Exception):
    """Base class for all planner errors."""

    code = "error"

    def __init__(self, message: str, *, span: tuple[int, int] | None = None):
        super().__init__(message)
        self.message = message
        self.span = span

    def to_json(self) -> dict:
        data = {"code": self.code, "message": self.message}
        if self.span is not None:
            data["span"] = list(self.span)
        return data


class SqlSyntaxError(SchemaPlanError):
    code = "syntax_error"


class UnsupportedStatement(SchemaPlanError):
    code = "unsupported_statement"


class UnresolvedInCheckedContext(SchemaPlanError):
    code = "unresolved_reference"


class UnknownEntity(SchemaPlanError):
    code = "unknown_entity"


class NotSourceBearing(SchemaPlanError):
    code = "not_source_bearing"


class CycleDetected(SchemaPlanError):
    code = "cycle_detected"

    def __init__(self, message: str, cycle: list[str]):
        super().__init__(message)
        self.cycle = cycle

    def to_json(self) -> dict:
        data = super().to_json()
        data["cycle"] = self.cycle
        return data


class IllegalOnReferencedEntity(SchemaPlanError):
    code = "illegal_on_referenced_entity"


class ContradictsModel(SchemaPlanError):
    code = "contradicts_model"


class ContradictoryOperators(SchemaPlanError):
    code = "contradictory_operators"


class NoSqlForm(SchemaPlanError):
    code = "no_sql_form"


class NoSchemeForOperator(SchemaPlanError):
    """Operator kind lacks an impact-partition scheme; a program defect."""

    code = "no_scheme_for_operator"


class AlreadyDecided(SchemaPlanError):
    code = "already_decided"


class UnknownRecommendation(SchemaPlanError):
    code = "unknown_recommendation"


class UnresolvedHumanDecision(SchemaPlanError):
    code = "unresolved_human_decision"

    def __init__(self, message: str, pending: list[str]):
        super().__init__(message)
        self.pending = pending

    def to_json(self) -> dict:
        data = super().to_json()
        data["pending"] = self.pending
        return data


class MissingDefinition(SchemaPlanError):
    code = "missing_definition"


class CorruptSessionFile(SchemaPlanError):
    code = "corrupt_session_file"
