"""SQL dump frontend: lexing, DDL parsing, query decomposition, resolution."""

from .ddl import DumpDocument, ParseDiagnostic, parse_dump, split_statements
from .resolver import resolve_references

__all__ = [
    "DumpDocument",
    "ParseDiagnostic",
    "parse_dump",
    "resolve_references",
    "split_statements",
]
