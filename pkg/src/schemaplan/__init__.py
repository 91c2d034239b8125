"""schemaplan: plan relational schema evolutions and emit ordered SQL patches."""

from __future__ import annotations

from .errors import SchemaPlanError, SqlSyntaxError, UnresolvedInCheckedContext
from .model import EntityPath, Reference, SchemaModel, Span, parse_path
from .parsing import parse_dump, resolve_references

__version__ = "0.1.0"


def load_model(text: str) -> SchemaModel:
    """Parse and resolve a dump, raising on the first error diagnostic."""
    model, diags = parse_dump(text)
    errors = [d for d in diags if d.severity == "error"]
    if model is None or errors:
        first = errors[0]
        raise SqlSyntaxError(first.message, span=first.span)
    resolved, rdiags = resolve_references(model)
    errors = [d for d in rdiags if d.severity == "error"]
    if errors:
        first = errors[0]
        raise UnresolvedInCheckedContext(first.message, span=first.span)
    return resolved


__all__ = [
    "EntityPath",
    "Reference",
    "SchemaModel",
    "SchemaPlanError",
    "Span",
    "load_model",
    "parse_dump",
    "parse_path",
    "resolve_references",
    "__version__",
]
