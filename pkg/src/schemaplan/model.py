"""Database schema meta-model.

Holds structural entities (namespaces, tables, columns, constraints),
behavioral entities (views, stored procedures, triggers, queries, clauses)
and reified references between them. A model is a value: operators never
mutate a model in place, they produce an edited copy.

Identifier semantics follow PostgreSQL: unquoted identifiers fold to
lowercase, quoted identifiers are kept verbatim. Character offsets are
0-based, end-exclusive, counted in Unicode scalar values from the start of
the owning entity's stored source text.
"""

from __future__ import annotations

import copy
import itertools
import json
import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import CycleDetected, NotSourceBearing, UnknownEntity

DEFAULT_NAMESPACE = "public"

_PLAIN_IDENT = re.compile(r"^[a-z_][a-z0-9_$]*$")

# Normalization of common type spellings so signatures compare reliably.
TYPE_ALIASES = {
    "integer": "int4",
    "int": "int4",
    "serial": "int4",
    "bigint": "int8",
    "bigserial": "int8",
    "smallint": "int2",
    "boolean": "bool",
    "character varying": "varchar",
    "character": "char",
    "double precision": "float8",
    "real": "float4",
    "numeric": "numeric",
}


def fold_ident(name: str, quoted: bool = False) -> str:
    return name if quoted else name.lower()


def normalize_type(name: str) -> str:
    base = name.strip().lower()
    base = re.sub(r"\(.*\)$", "", base).strip()
    base = re.sub(r"\s+", " ", base)
    return TYPE_ALIASES.get(base, base)


def quote_ident(name: str) -> str:
    """Render an identifier double-quoted for emitted SQL."""
    return '"' + name.replace('"', '""') + '"'


def format_segment(name: str) -> str:
    if _PLAIN_IDENT.match(name) or _SIG_SEGMENT.match(name) or ":" in name:
        return name
    return quote_ident(name)


_SIG_SEGMENT = re.compile(r"^[a-z_][a-z0-9_$]*\([a-z0-9_, ]*\)$")


@dataclass(frozen=True)
class Span:
    start: int
    end: int

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"invalid span {self.start}..{self.end}")

    def shift(self, delta: int) -> "Span":
        return Span(self.start + delta, self.end + delta)

    def to_json(self) -> list[int]:
        return [self.start, self.end]


@dataclass(frozen=True)
class EntityPath:
    """Dotted address of an entity; procedure segments carry a '(sig)' suffix."""

    segments: tuple[str, ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("empty entity path")

    @property
    def name(self) -> str:
        """Terminal identifier without any signature suffix."""
        last = self.segments[-1]
        return last.split("(", 1)[0]

    @property
    def parent(self) -> "EntityPath | None":
        if len(self.segments) == 1:
            return None
        return EntityPath(self.segments[:-1])

    def child(self, *names: str) -> "EntityPath":
        return EntityPath(self.segments + tuple(names))

    def is_within(self, other: "EntityPath") -> bool:
        return (
            len(self.segments) >= len(other.segments)
            and self.segments[: len(other.segments)] == other.segments
        )

    def __str__(self) -> str:
        return ".".join(format_segment(s) for s in self.segments)

    def __lt__(self, other: "EntityPath") -> bool:
        return self.segments < other.segments


def parse_path(text: str) -> EntityPath:
    """Parse a dotted path string; supports quoted segments and '(sig)'."""
    segments: list[str] = []
    i, n = 0, len(text)
    cur = ""
    quoted = False
    while i < n:
        ch = text[i]
        if ch == '"':
            j = i + 1
            buf = []
            while j < n:
                if text[j] == '"':
                    if j + 1 < n and text[j + 1] == '"':
                        buf.append('"')
                        j += 2
                        continue
                    break
                buf.append(text[j])
                j += 1
            cur += "".join(buf)
            quoted = True
            i = j + 1
        elif ch == ".":
            segments.append(cur if quoted else cur.lower())
            cur = ""
            quoted = False
            i += 1
        elif ch == "(":
            j = text.index(")", i)
            sig = ",".join(
                normalize_type(t) for t in text[i + 1 : j].split(",") if t.strip()
            )
            cur = (cur if quoted else cur.lower()) + f"({sig})"
            quoted = True  # signature already normalized, do not fold again
            i = j + 1
        else:
            cur += ch
            i += 1
    segments.append(cur if quoted else cur.lower())
    if any(not s for s in segments):
        raise ValueError(f"malformed path: {text!r}")
    return EntityPath(tuple(segments))


class EntityKind(str, Enum):
    NAMESPACE = "namespace"
    TABLE = "table"
    COLUMN = "column"
    CONSTRAINT = "constraint"
    TYPE = "type"
    VIEW = "view"
    STORED_PROCEDURE = "procedure"
    PARAMETER = "parameter"
    LOCAL_VARIABLE = "local_variable"
    TRIGGER = "trigger"
    QUERY = "query"
    CLAUSE = "clause"
    DERIVED_TABLE = "derived_table"


# Entities an SQL command can act on; also the node set of the dependency graph.
ACTIONABLE_KINDS = frozenset(
    {EntityKind.TABLE, EntityKind.VIEW, EntityKind.STORED_PROCEDURE, EntityKind.TRIGGER}
)


class ConstraintKind(str, Enum):
    PRIMARY_KEY = "primary_key"
    FOREIGN_KEY = "foreign_key"
    UNIQUE = "unique"
    CHECK = "check"
    NOT_NULL = "not_null"
    DEFAULT = "default"


class QueryKind(str, Enum):
    SELECT = "select"
    INSERT = "insert"
    UPDATE = "update"
    DELETE = "delete"


class ClauseKind(str, Enum):
    WITH = "with"
    SELECT = "select"
    FROM = "from"
    WHERE = "where"
    JOIN = "join"
    UNION = "union"
    INTERSECT = "intersect"
    EXCEPT = "except"
    GROUP_BY = "group_by"
    ORDER_BY = "order_by"
    HAVING = "having"
    LIMIT = "limit"
    OFFSET = "offset"
    FETCH = "fetch"
    INSERT = "insert"
    INTO = "into"
    RETURNING = "returning"
    UPDATE = "update"
    SET = "set"
    DELETE = "delete"


# Which clauses each query kind may contain.
CLAUSE_CONTAINMENT: dict[QueryKind, frozenset[ClauseKind]] = {
    QueryKind.SELECT: frozenset(
        {
            ClauseKind.WITH,
            ClauseKind.SELECT,
            ClauseKind.FROM,
            ClauseKind.WHERE,
            ClauseKind.JOIN,
            ClauseKind.UNION,
            ClauseKind.INTERSECT,
            ClauseKind.EXCEPT,
            ClauseKind.GROUP_BY,
            ClauseKind.ORDER_BY,
            ClauseKind.HAVING,
            ClauseKind.LIMIT,
            ClauseKind.OFFSET,
            ClauseKind.INTO,
            ClauseKind.FETCH,
        }
    ),
    QueryKind.INSERT: frozenset({ClauseKind.WITH, ClauseKind.INSERT, ClauseKind.RETURNING}),
    QueryKind.UPDATE: frozenset(
        {
            ClauseKind.WITH,
            ClauseKind.UPDATE,
            ClauseKind.SET,
            ClauseKind.FROM,
            ClauseKind.WHERE,
            ClauseKind.RETURNING,
        }
    ),
    QueryKind.DELETE: frozenset(
        {
            ClauseKind.WITH,
            ClauseKind.DELETE,
            ClauseKind.FROM,
            ClauseKind.WHERE,
            ClauseKind.RETURNING,
        }
    ),
}


class RefKind(str, Enum):
    TABLE = "table_reference"
    COLUMN = "column_reference"
    PROCEDURE_CALL = "procedure_call"
    VARIABLE = "variable_reference"
    TYPE = "type_reference"


_SOURCE_TARGETS = frozenset(
    {EntityKind.TABLE, EntityKind.VIEW, EntityKind.STORED_PROCEDURE}
)
_VALUE_TARGETS = frozenset(
    {
        EntityKind.TABLE,
        EntityKind.VIEW,
        EntityKind.COLUMN,
        EntityKind.STORED_PROCEDURE,
        EntityKind.LOCAL_VARIABLE,
        EntityKind.PARAMETER,
    }
)
_SCALAR_TARGETS = frozenset(
    {EntityKind.STORED_PROCEDURE, EntityKind.LOCAL_VARIABLE, EntityKind.PARAMETER}
)

# Entity kinds a clause may legally reference. DerivedTable and Type targets
# are allowed from any clause. Join carries value targets because its ON
# condition names columns; Insert names its target table and column list.
CLAUSE_REFERENCE_TARGETS: dict[ClauseKind, frozenset[EntityKind]] = {
    ClauseKind.FROM: _SOURCE_TARGETS,
    ClauseKind.INTO: _SOURCE_TARGETS | {EntityKind.LOCAL_VARIABLE, EntityKind.PARAMETER},
    ClauseKind.JOIN: _VALUE_TARGETS,
    ClauseKind.GROUP_BY: _VALUE_TARGETS,
    ClauseKind.ORDER_BY: _VALUE_TARGETS,
    ClauseKind.HAVING: _VALUE_TARGETS,
    ClauseKind.SET: _VALUE_TARGETS,
    ClauseKind.WHERE: _VALUE_TARGETS,
    ClauseKind.RETURNING: _VALUE_TARGETS,
    ClauseKind.SELECT: _VALUE_TARGETS,
    ClauseKind.UPDATE: _VALUE_TARGETS,
    ClauseKind.LIMIT: _SCALAR_TARGETS,
    ClauseKind.FETCH: _SCALAR_TARGETS,
    ClauseKind.OFFSET: _SCALAR_TARGETS,
    ClauseKind.INSERT: frozenset({EntityKind.TABLE, EntityKind.VIEW, EntityKind.COLUMN}),
    ClauseKind.WITH: _VALUE_TARGETS,
    ClauseKind.UNION: _VALUE_TARGETS,
    ClauseKind.INTERSECT: _VALUE_TARGETS,
    ClauseKind.EXCEPT: _VALUE_TARGETS,
    ClauseKind.DELETE: frozenset(),
}


@dataclass
class Entity:
    kind: EntityKind
    path: EntityPath
    container: EntityPath | None = None

    @property
    def name(self) -> str:
        return self.path.name

    def describe(self) -> str:
        return f"{self.kind.value} {self.path}"


@dataclass
class Namespace(Entity):
    def __init__(self, name: str):
        super().__init__(EntityKind.NAMESPACE, EntityPath((name,)), None)


@dataclass
class Table(Entity):
    def __init__(self, path: EntityPath):
        super().__init__(EntityKind.TABLE, path, path.parent)


@dataclass
class Column(Entity):
    declared_type: str = ""
    ordinal: int = 0

    def __init__(self, path: EntityPath, declared_type: str, ordinal: int):
        super().__init__(EntityKind.COLUMN, path, path.parent)
        self.declared_type = declared_type
        self.ordinal = ordinal


@dataclass
class Constraint(Entity):
    constraint_kind: ConstraintKind = ConstraintKind.CHECK
    columns: list[str] = field(default_factory=list)
    source_text: str = ""
    expression: str | None = None
    ref_table: EntityPath | None = None
    ref_columns: list[str] = field(default_factory=list)

    def __init__(
        self,
        path: EntityPath,
        constraint_kind: ConstraintKind,
        columns: list[str],
        source_text: str,
        expression: str | None = None,
        ref_table: EntityPath | None = None,
        ref_columns: list[str] | None = None,
    ):
        super().__init__(EntityKind.CONSTRAINT, path, path.parent)
        self.constraint_kind = constraint_kind
        self.columns = columns
        self.source_text = source_text
        self.expression = expression
        self.ref_table = ref_table
        self.ref_columns = ref_columns or []


@dataclass
class TypeRef(Entity):
    def __init__(self, name: str):
        super().__init__(EntityKind.TYPE, EntityPath(("pg_catalog", name)), None)


@dataclass
class View(Entity):
    source_text: str = ""

    def __init__(self, path: EntityPath, source_text: str):
        super().__init__(EntityKind.VIEW, path, path.parent)
        self.source_text = source_text

    @property
    def query_path(self) -> EntityPath:
        return self.path.child("query:0")


@dataclass
class StoredProcedure(Entity):
    params: list[tuple[str, str]] = field(default_factory=list)
    return_type: str = ""
    language: str = "plpgsql"
    source_text: str = ""  # body between the dollar-quote markers

    def __init__(
        self,
        path: EntityPath,
        params: list[tuple[str, str]],
        return_type: str,
        language: str,
        body: str,
    ):
        super().__init__(EntityKind.STORED_PROCEDURE, path, path.parent)
        self.params = params
        self.return_type = return_type
        self.language = language
        self.source_text = body

    @property
    def signature(self) -> str:
        return ",".join(normalize_type(t) for _, t in self.params)


@dataclass
class Parameter(Entity):
    declared_type: str = ""
    ordinal: int = 0

    def __init__(self, path: EntityPath, declared_type: str, ordinal: int):
        super().__init__(EntityKind.PARAMETER, path, path.parent)
        self.declared_type = declared_type
        self.ordinal = ordinal


@dataclass
class LocalVariable(Entity):
    declared_type: str = ""
    decl_span: Span | None = None  # name token inside the procedure body

    def __init__(self, path: EntityPath, declared_type: str, decl_span: Span | None):
        super().__init__(EntityKind.LOCAL_VARIABLE, path, path.parent)
        self.declared_type = declared_type
        self.decl_span = decl_span


@dataclass
class Trigger(Entity):
    table: EntityPath | None = None
    procedure: EntityPath | None = None
    source_text: str = ""  # full CREATE TRIGGER statement text

    def __init__(
        self,
        path: EntityPath,
        table: EntityPath,
        procedure: EntityPath | None,
        source_text: str,
    ):
        super().__init__(EntityKind.TRIGGER, path, path.parent)
        self.table = table
        self.procedure = procedure
        self.source_text = source_text


@dataclass
class CrudQuery(Entity):
    query_kind: QueryKind = QueryKind.SELECT
    span: Span | None = None

    def __init__(self, path: EntityPath, query_kind: QueryKind, span: Span):
        super().__init__(EntityKind.QUERY, path, path.parent)
        self.query_kind = query_kind
        self.span = span


@dataclass
class Clause(Entity):
    clause_kind: ClauseKind = ClauseKind.SELECT
    span: Span | None = None

    def __init__(self, path: EntityPath, clause_kind: ClauseKind, span: Span):
        super().__init__(EntityKind.CLAUSE, path, path.parent)
        self.clause_kind = clause_kind
        self.span = span


@dataclass
class DerivedTable(Entity):
    span: Span | None = None

    def __init__(self, path: EntityPath, span: Span):
        super().__init__(EntityKind.DERIVED_TABLE, path, path.parent)
        self.span = span


SOURCE_BEARING_KINDS = frozenset(
    {
        EntityKind.VIEW,
        EntityKind.STORED_PROCEDURE,
        EntityKind.CONSTRAINT,
        EntityKind.TRIGGER,
    }
)

_ref_counter = itertools.count(1)


def _next_ref_uid() -> str:
    return f"r{next(_ref_counter)}"


@dataclass
class Reference:
    """A reified dependency with a character span into its root's source text.

    span covers the terminal identifier token; full_span additionally covers
    a leading qualifier chain when one was written, which is what a move to
    another namespace must rewrite.
    """

    kind: RefKind
    owner: EntityPath  # clause, constraint, trigger, or procedure (body statement)
    root: EntityPath  # entity whose source_text the span indexes
    span: Span
    target: EntityPath | None = None
    resolved: bool = False
    wildcard: bool = False
    full_span: Span | None = None
    uid: str = field(default_factory=_next_ref_uid)

    def key(self) -> tuple[str, int, int]:
        return (str(self.owner), self.span.start, self.span.end)

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "owner": str(self.owner),
            "root": str(self.root),
            "target": str(self.target) if self.target else None,
            "span": self.span.to_json(),
            "resolved": self.resolved,
            "wildcard": self.wildcard,
        }


@dataclass
class SchemaModel:
    entities: dict[str, Entity] = field(default_factory=dict)
    references: list[Reference] = field(default_factory=list)
    provenance_text: str = ""

    # -- entity bookkeeping ------------------------------------------------

    def add(self, entity: Entity) -> Entity:
        key = str(entity.path)
        if key in self.entities:
            raise ValueError(f"duplicate entity {key}")
        self.entities[key] = entity
        return entity

    def get(self, path: EntityPath | str) -> Entity | None:
        return self.entities.get(str(path))

    def require(self, path: EntityPath | str) -> Entity:
        entity = self.get(path)
        if entity is None:
            raise UnknownEntity(f"unknown entity: {path}")
        return entity

    def discard(self, path: EntityPath) -> None:
        self.entities.pop(str(path), None)

    def children_of(self, path: EntityPath) -> list[Entity]:
        return [e for e in self.entities.values() if e.container == path]

    def descendants_of(self, path: EntityPath) -> list[Entity]:
        return [
            e
            for e in self.entities.values()
            if e.path != path and e.path.is_within(path)
        ]

    def columns_of(self, path: EntityPath) -> list[Column]:
        cols = [
            e
            for e in self.children_of(path)
            if isinstance(e, Column)
        ]
        return sorted(cols, key=lambda c: c.ordinal)

    def constraints_of(self, path: EntityPath) -> list[Constraint]:
        return [e for e in self.children_of(path) if isinstance(e, Constraint)]

    def triggers_on(self, path: EntityPath) -> list[Trigger]:
        return [
            e
            for e in self.entities.values()
            if isinstance(e, Trigger) and e.table == path
        ]

    def procedures(self) -> list[StoredProcedure]:
        return [e for e in self.entities.values() if isinstance(e, StoredProcedure)]

    def copy(self) -> "SchemaModel":
        return copy.deepcopy(self)

    # -- source text -------------------------------------------------------

    def source_of(self, path: EntityPath | str) -> str:
        entity = self.require(path)
        text = getattr(entity, "source_text", None)
        if entity.kind not in SOURCE_BEARING_KINDS or text is None:
            raise NotSourceBearing(f"{entity.describe()} stores no source text")
        return text

    def source_root_of(self, owner: EntityPath) -> EntityPath:
        """Walk containment up to the entity whose text owns the spans."""
        cur = owner
        while True:
            entity = self.require(cur)
            if entity.kind in SOURCE_BEARING_KINDS:
                return cur
            if entity.container is None:
                raise NotSourceBearing(f"{entity.describe()} has no source root")
            cur = entity.container

    def references_in(self, root: EntityPath) -> list[Reference]:
        return [r for r in self.references if r.root == root]

    def actionable_owner(self, path: EntityPath) -> EntityPath:
        """Ascend containment to the entity an SQL command can act on."""
        cur = path
        while True:
            entity = self.require(cur)
            if entity.kind in ACTIONABLE_KINDS:
                return cur
            if entity.container is None:
                raise UnknownEntity(f"no actionable container for {path}")
            cur = entity.container

    # -- dependents and the dependency graph --------------------------------

    def dependents_of(
        self, target: EntityPath, include_contained: bool = False
    ) -> list[Reference]:
        """Resolved references aimed at the entity (or its subtree)."""
        self.require(target)
        out = []
        for ref in self.references:
            if not ref.resolved or ref.target is None:
                continue
            if ref.target == target or (
                include_contained and ref.target.is_within(target)
            ):
                out.append(ref)
        return out

    def dependency_graph(self) -> "DependencyGraph":
        nodes = {
            str(e.path): e.kind.value
            for e in self.entities.values()
            if e.kind in ACTIONABLE_KINDS
        }
        edges: dict[tuple[str, str], int] = {}
        for ref in self.references:
            if not ref.resolved or ref.target is None:
                continue
            target = self.get(ref.target)
            if target is None:
                continue
            if target.kind == EntityKind.TYPE:
                continue
            src = str(self.actionable_owner(ref.owner))
            try:
                dst = str(self.actionable_owner(ref.target))
            except UnknownEntity:
                continue
            if src == dst:
                continue  # e.g. a table's own constraints
            edges[(src, dst)] = edges.get((src, dst), 0) + 1
        # Triggers depend on their table and their function even when the
        # reference tokens are missing from the stored definition.
        for entity in self.entities.values():
            if isinstance(entity, Trigger):
                src = str(entity.path)
                for dep in (entity.table, entity.procedure):
                    if dep is not None and str(dep) in nodes and str(dep) != src:
                        edges.setdefault((src, str(dep)), 0)
                        edges[(src, str(dep))] = max(edges[(src, str(dep))], 1)
        return DependencyGraph(nodes, edges)


@dataclass
class DependencyGraph:
    """Directed graph between actionable entities; A -> B reads 'A references B'."""

    nodes: dict[str, str]  # path -> entity kind
    edges: dict[tuple[str, str], int]  # (from, to) -> reference count

    def successors(self, node: str) -> list[str]:
        return sorted(dst for (src, dst) in self.edges if src == node)

    def predecessors(self, node: str) -> list[str]:
        return sorted(src for (src, dst) in self.edges if dst == node)

    def find_cycle(self) -> list[str] | None:
        color: dict[str, int] = {}
        stack: list[str] = []

        def visit(node: str) -> list[str] | None:
            color[node] = 1
            stack.append(node)
            for nxt in self.successors(node):
                state = color.get(nxt, 0)
                if state == 1:
                    return stack[stack.index(nxt) :] + [nxt]
                if state == 0:
                    found = visit(nxt)
                    if found:
                        return found
            stack.pop()
            color[node] = 2
            return None

        for node in sorted(self.nodes):
            if color.get(node, 0) == 0:
                found = visit(node)
                if found:
                    return found
        return None

    def ensure_acyclic(self) -> None:
        cycle = self.find_cycle()
        if cycle:
            raise CycleDetected("dependency cycle: " + " -> ".join(cycle), cycle)

    def topological_order(self, dependents_first: bool) -> list[str]:
        """Total order; with dependents_first a referencer precedes its referee.

        Ties break lexicographically so the order is deterministic.
        """
        self.ensure_acyclic()
        incoming: dict[str, set[str]] = {n: set() for n in self.nodes}
        for src, dst in self.edges:
            incoming[dst].add(src)
        order: list[str] = []
        alive = set(self.nodes)
        # Repeatedly emit the smallest node no live node still references.
        while alive:
            ready = sorted(n for n in alive if not (incoming[n] & alive))
            if not ready:
                raise CycleDetected("dependency cycle", sorted(alive))
            order.append(ready[0])
            alive.discard(ready[0])
        return order if dependents_first else list(reversed(order))

    def to_json(self) -> dict:
        return {
            "nodes": [
                {"path": p, "kind": k} for p, k in sorted(self.nodes.items())
            ],
            "edges": [
                {"from": src, "to": dst, "refCount": count}
                for (src, dst), count in sorted(self.edges.items())
            ],
        }

    def to_dot(self) -> str:
        lines = ["digraph dependencies {"]
        for path, kind in sorted(self.nodes.items()):
            lines.append(f'  "{path}" [label="{path}\\n({kind})"];')
        for (src, dst), count in sorted(self.edges.items()):
            lines.append(f'  "{src}" -> "{dst}" [label="{count}"];')
        lines.append("}")
        return "\n".join(lines)


def graph_json_text(graph: DependencyGraph) -> str:
    return json.dumps(graph.to_json(), indent=2)


# -- text edits ------------------------------------------------------------


@dataclass(frozen=True)
class TextEdit:
    """Replacement of one span inside an entity's source text.

    ref_uid marks the reference the edit rewrites; ref_span gives that
    reference's new extent relative to the replacement string.
    """

    span: Span
    replacement: str
    ref_uid: str | None = None
    ref_span: Span | None = None


def splice(text: str, edits: list[TextEdit]) -> str:
    out = text
    for edit in sorted(edits, key=lambda e: e.span.start, reverse=True):
        out = out[: edit.span.start] + edit.replacement + out[edit.span.end :]
    return out


def _shift_span(span: Span, edits: list[TextEdit]) -> Span:
    start, end = span.start, span.end
    for edit in edits:
        delta = len(edit.replacement) - (edit.span.end - edit.span.start)
        if edit.span.end <= span.start:
            start += delta
            end += delta
        elif edit.span.start >= span.end:
            continue
        elif span.start <= edit.span.start and edit.span.end <= span.end:
            end += delta  # edit nested inside this span
        else:
            raise ValueError(
                f"edit {edit.span} partially overlaps span {span}"
            )
    return Span(start, end)


def apply_source_edits(
    model: SchemaModel, root: EntityPath, edits: list[TextEdit]
) -> None:
    """Rewrite a source-bearing entity's text and re-anchor every span in it.

    Mutates the given model; callers copy first. Edits must not overlap.
    """
    if not edits:
        return
    ordered = sorted(edits, key=lambda e: e.span.start)
    for a, b in zip(ordered, ordered[1:]):
        if a.span.end > b.span.start:
            raise ValueError(f"overlapping edits at {a.span} and {b.span}")
    entity = model.require(root)
    entity.source_text = splice(entity.source_text, list(ordered))
    edited_by_uid = {e.ref_uid: e for e in ordered if e.ref_uid}
    for ref in model.references:
        if ref.root != root:
            continue
        edit = edited_by_uid.get(ref.uid)
        if edit is not None:
            base = _shift_span(Span(edit.span.start, edit.span.start), ordered).start
            inner = edit.ref_span or Span(0, len(edit.replacement))
            ref.span = Span(base + inner.start, base + inner.end)
            ref.full_span = Span(base, base + len(edit.replacement))
        else:
            ref.span = _shift_span(ref.span, ordered)
            if ref.full_span is not None:
                ref.full_span = _shift_span(ref.full_span, ordered)
    for entity in model.entities.values():
        if not entity.path.is_within(root) or entity.path == root:
            continue
        for attr in ("span", "decl_span"):
            span = getattr(entity, attr, None)
            if isinstance(span, Span):
                setattr(entity, attr, _shift_span(span, ordered))
