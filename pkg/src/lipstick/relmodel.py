"""Nested-relational bag data model.

Relations are homogeneous bags of tuples. A tuple is a plain Python tuple
whose entries are atoms (``int``, ``float``, ``str``, ``bool``) or nested
:class:`Bag` values. Schemas describe one level of attributes, with nested
bags described by a nested :class:`Schema`.
"""

from __future__ import annotations

import functools

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence, Union
from urllib.parse import quote, unquote

ATOM_KINDS = ("int", "double", "chararray", "boolean")

KIND_ALIASES = {
    "int": "int",
    "long": "int",
    "integer": "int",
    "double": "double",
    "float": "double",
    "chararray": "chararray",
    "text": "chararray",
    "string": "chararray",
    "str": "chararray",
    "boolean": "boolean",
    "bool": "boolean",
}

NUMERIC_KINDS = ("int", "double")


class SchemaError(ValueError):
    """Raised for malformed schemas or values that do not fit a schema."""


def normalize_kind(kind: str) -> str:
    try:
        return KIND_ALIASES[kind.lower()]
    except KeyError:
        raise SchemaError(f"unknown atom kind {kind!r}") from None


def atom_kind(value) -> str | None:
    # bool first: bool is a subclass of int
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "double"
    if isinstance(value, str):
        return "chararray"
    return None


@dataclass(frozen=True)
class Schema:
    """One level of a relation schema.

    ``attrs`` is a tuple of ``(name, type)`` pairs where ``type`` is an atom
    kind or a nested :class:`Schema` describing the tuples of a nested bag.
    ``grouped`` marks schemas produced by GROUP/COGROUP, whose first field can
    also be referenced as ``group``.
    """

    name: str
    attrs: tuple = ()
    grouped: bool = field(default=False, compare=False)

    def __post_init__(self):
        attrs = []
        seen = set()
        for attr_name, attr_type in self.attrs:
            if attr_name in seen:
                raise SchemaError(f"duplicate attribute {attr_name!r} in schema {self.name}")
            seen.add(attr_name)
            if not isinstance(attr_type, Schema):
                attr_type = normalize_kind(attr_type)
            attrs.append((attr_name, attr_type))
        object.__setattr__(self, "attrs", tuple(attrs))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.attrs)

    @property
    def types(self) -> tuple:
        return tuple(t for _, t in self.attrs)

    @property
    def arity(self) -> int:
        return len(self.attrs)

    def renamed(self, name: str) -> "Schema":
        return Schema(name, self.attrs, self.grouped)

    def same_shape(self, other: "Schema") -> bool:
        """Positional kind equality, ignoring relation and attribute names."""
        if self.arity != other.arity:
            return False
        for a, b in zip(self.types, other.types):
            if isinstance(a, Schema) != isinstance(b, Schema):
                return False
            if isinstance(a, Schema):
                if not a.same_shape(b):
                    return False
            elif a != b:
                return False
        return True

    def __str__(self) -> str:
        return f"{self.name}({format_attrs(self.attrs)})"

    @classmethod
    def parse(cls, text: str) -> "Schema":
        """Parse ``Name(a:int, b:{(c:chararray)})``."""
        parser = _SchemaParser(text)
        schema = parser.relation()
        parser.end()
        return schema


def format_attrs(attrs) -> str:
    parts = []
    for name, kind in attrs:
        if isinstance(kind, Schema):
            parts.append(f"{name}:{{({format_attrs(kind.attrs)})}}")
        else:
            parts.append(f"{name}:{kind}")
    return ", ".join(parts)


class _SchemaParser:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def _ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self):
        self._ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _expect(self, ch):
        if self._peek() != ch:
            raise SchemaError(f"expected {ch!r} at offset {self.pos} in {self.text!r}")
        self.pos += 1

    def _ident(self):
        self._ws()
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos].isalnum() or self.text[self.pos] in "_:"):
            if self.text[self.pos] == ":" and self.text[self.pos:self.pos + 2] != "::":
                break
            self.pos += 2 if self.text[self.pos] == ":" else 1
        if start == self.pos:
            raise SchemaError(f"expected identifier at offset {start} in {self.text!r}")
        return self.text[start:self.pos]

    def relation(self):
        name = self._ident()
        self._expect("(")
        attrs = self.attrs(name)
        self._expect(")")
        return Schema(name, attrs)

    def attrs(self, owner):
        attrs = []
        if self._peek() == ")":
            return tuple(attrs)
        while True:
            name = self._ident()
            self._expect(":")
            if self._peek() == "{":
                self.pos += 1
                self._expect("(")
                nested = self.attrs(name)
                self._expect(")")
                self._expect("}")
                attrs.append((name, Schema(name, nested)))
            else:
                attrs.append((name, self._ident()))
            if self._peek() != ",":
                return tuple(attrs)
            self.pos += 1

    def end(self):
        if self._peek():
            raise SchemaError(f"trailing text at offset {self.pos} in {self.text!r}")


class Bag:
    """Immutable multiset of tuples.

    ``nodes`` optionally carries one provenance reference per row; it is
    ignored by equality and hashing, so two bags holding equal values are
    equal regardless of where their tuples came from.
    """

    __slots__ = ("rows", "nodes", "_key")

    def __init__(self, rows: Iterable[Sequence] = (), nodes: Sequence | None = None):
        self.rows = tuple(tuple(r) for r in rows)
        self.nodes = tuple(nodes) if nodes is not None else None
        if self.nodes is not None and len(self.nodes) != len(self.rows):
            raise ValueError("nodes must align with rows")
        self._key = None

    def key(self) -> tuple:
        if self._key is None:
            self._key = tuple(sorted(row_key(r) for r in self.rows))
        return self._key

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __eq__(self, other):
        if not isinstance(other, Bag):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return "Bag(" + format_value(self) + ")"


Value = Union[int, float, str, bool, Bag]


def value_key(value) -> tuple:
    """Total-order key: kinds ranked boolean < numeric < chararray < bag."""
    t = type(value)
    if t is str:
        return (2, value)
    if t is int or t is float:
        return (1, value)
    if t is bool:
        return (0, value)
    if isinstance(value, bool):
        return (0, bool(value))
    if isinstance(value, (int, float)):
        return (1, value)
    if isinstance(value, str):
        return (2, str(value))
    if isinstance(value, Bag):
        return (3, value.key())
    raise TypeError(f"not a relation value: {value!r}")


def row_key(row: Sequence) -> tuple:
    return tuple(map(value_key, row))


def canonicalize(bag: Bag | Iterable[Sequence]) -> list[tuple]:
    """Rows of ``bag`` in the deterministic canonical order."""
    rows = bag.rows if isinstance(bag, Bag) else [tuple(r) for r in bag]
    return sorted(rows, key=row_key)


class ValidationReport(NamedTuple):
    ok: bool
    path: tuple = ()
    reason: str = ""

    def __bool__(self):
        return self.ok


def validate_against_schema(bag: Bag | Iterable[Sequence], schema: Schema) -> ValidationReport:
    """Check every tuple of ``bag`` against ``schema``.

    On failure the report carries the path to the offending value as
    ``(tuple index, field index, tuple index, ...)``.
    """
    rows = bag.rows if isinstance(bag, Bag) else bag
    for i, row in enumerate(rows):
        if len(row) != schema.arity:
            return ValidationReport(
                False, (i,), f"arity mismatch: expected {schema.arity} values, got {len(row)}"
            )
        for j, (value, (name, kind)) in enumerate(zip(row, schema.attrs)):
            if isinstance(kind, Schema):
                if not isinstance(value, Bag):
                    return ValidationReport(False, (i, j), f"field {name}: expected nested bag")
                sub = validate_against_schema(value, kind)
                if not sub.ok:
                    return ValidationReport(False, (i, j) + sub.path, f"nested bag mismatch: {sub.reason}")
            else:
                actual = atom_kind(value)
                if actual != kind and not (kind == "double" and actual == "int"):
                    return ValidationReport(
                        False, (i, j), f"field {name}: expected {kind}, got {actual or type(value).__name__}"
                    )
    return ValidationReport(True)


@functools.lru_cache(maxsize=4096)
def _coercion_plan(schema: Schema) -> tuple:
    return tuple((i, kind) for i, (_, kind) in enumerate(schema.attrs) if kind == "double" or isinstance(kind, Schema))


def coerce_row(row: Sequence, schema: Schema) -> tuple:
    """Widen ints in double fields so stored values match their declared kind."""
    plan = _coercion_plan(schema)
    if not plan:
        return tuple(row)
    out = None
    for i, kind in plan:
        value = row[i]
        if kind == "double":
            if type(value) is int:
                value = float(value)
            else:
                continue
        elif isinstance(value, Bag):
            value = Bag([coerce_row(r, kind) for r in value.rows], value.nodes)
        else:
            continue
        if out is None:
            out = list(row)
        out[i] = value
    return tuple(row) if out is None else tuple(out)


# -- nested-relation text format -------------------------------------------

_SPECIAL = "\t\n\r,(){}% "


def _encode_text(s: str) -> str:
    if s == "":
        return "%"
    return quote(s, safe="".join(chr(c) for c in range(33, 127) if chr(c) not in _SPECIAL))


def _decode_text(s: str) -> str:
    if s == "%":
        return ""
    return unquote(s)


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return _encode_text(value)
    if isinstance(value, Bag):
        inner = ",".join("(" + ",".join(format_value(v) for v in row) + ")" for row in canonicalize(value))
        return "{" + inner + "}"
    raise TypeError(f"not a relation value: {value!r}")


def format_bag_text(bag: Bag | Iterable[Sequence]) -> str:
    """One tuple per line, TAB-separated fields, rows in canonical order."""
    lines = ["\t".join(format_value(v) for v in row) for row in canonicalize(bag)]
    return "".join(line + "\n" for line in lines)


def _parse_atom(token: str, kind: str):
    try:
        if kind == "int":
            return int(token)
        if kind == "double":
            return float(token)
        if kind == "boolean":
            if token.lower() not in ("true", "false"):
                raise ValueError(token)
            return token.lower() == "true"
    except ValueError:
        raise SchemaError(f"cannot read {token!r} as {kind}") from None
    return _decode_text(token)


class _NestedReader:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _expect(self, ch):
        if self.pos >= len(self.text) or self.text[self.pos] != ch:
            raise SchemaError(f"expected {ch!r} at offset {self.pos} in {self.text!r}")
        self.pos += 1

    def value(self, kind):
        if isinstance(kind, Schema):
            return self.bag(kind)
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in ",)}":
            self.pos += 1
        return _parse_atom(self.text[start:self.pos], kind)

    def bag(self, schema: Schema) -> Bag:
        self._expect("{")
        rows = []
        if self.text[self.pos:self.pos + 1] != "}":
            while True:
                self._expect("(")
                row = []
                for j, (_, kind) in enumerate(schema.attrs):
                    if j:
                        self._expect(",")
                    row.append(self.value(kind))
                self._expect(")")
                rows.append(tuple(row))
                if self.text[self.pos:self.pos + 1] != ",":
                    break
                self.pos += 1
        self._expect("}")
        return Bag(rows)


def parse_value(text: str, kind):
    if isinstance(kind, Schema):
        reader = _NestedReader(text)
        value = reader.bag(kind)
        if reader.pos != len(text):
            raise SchemaError(f"trailing text after nested bag: {text!r}")
        return value
    return _parse_atom(text, kind)


def parse_bag_text(text: str, schema: Schema) -> Bag:
    """Inverse of :func:`format_bag_text`; raises SchemaError with a line number."""
    rows = []
    for lineno, line in enumerate(text.split("\n"), 1):
        line = line.rstrip("\r")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != schema.arity:
            raise SchemaError(
                f"line {lineno}: expected {schema.arity} fields for {schema.name}, got {len(fields)}"
            )
        try:
            rows.append(tuple(parse_value(f, k) for f, k in zip(fields, schema.types)))
        except SchemaError as exc:
            raise SchemaError(f"line {lineno}: {exc}") from None
    return Bag(rows)
