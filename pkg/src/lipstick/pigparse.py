"""Parser, resolver and type-checker for the supported Pig Latin fragment.

Supported statements (keywords are case-insensitive, aliases are not)::

    B = FOREACH A GENERATE f1, $2 AS g, 'lit' AS c [BAG];
    B = FOREACH A GENERATE group AS k, COUNT(A) AS n;
    B = FOREACH A GENERATE FLATTEN(Udf(f1, f2, SomeAlias));
    B = FOREACH A GENERATE k, FLATTEN(nested);
    B = FILTER A BY f1 == 3 AND f2 < 'x';
    C = JOIN A BY f, B BY g;
    B = GROUP A BY f;
    D = COGROUP A BY f, B BY g, C BY h;
    C = UNION A, B;
    B = DISTINCT A;
    B = ORDER A BY f [ASC|DESC];

``--`` starts a line comment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Mapping

from .relmodel import NUMERIC_KINDS, Schema, SchemaError, atom_kind

AGG_OPS = ("SUM", "COUNT", "MIN", "MAX")
COMPARISONS = ("==", "!=", "<", "<=", ">", ">=")


class PigSyntaxError(SyntaxError):
    def __init__(self, message, line=None, column=None):
        self.line, self.column = line, column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)


class PigTypeError(TypeError):
    pass


# -- AST ------------------------------------------------------------------


@dataclass(frozen=True)
class FieldRef:
    """Field reference; ``parts`` holds names or ``$k`` positions, outer first."""

    parts: tuple

    def __str__(self):
        return ".".join(f"${p}" if isinstance(p, int) else p for p in self.parts)


@dataclass(frozen=True)
class Literal:
    value: object

    def __str__(self):
        v = self.value
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return "'" + v.replace("\\", "\\\\").replace("'", "\\'") + "'"
        return repr(v)


@dataclass(frozen=True)
class Comparison:
    left: object
    op: str
    right: object

    def __str__(self):
        return f"{self.left} {self.op} {self.right}"


@dataclass(frozen=True)
class ProjItem:
    expr: object  # FieldRef | Literal
    alias: str | None = None

    def __str__(self):
        return f"{self.expr} AS {self.alias}" if self.alias else str(self.expr)


@dataclass(frozen=True)
class FlattenItem:
    ref: FieldRef

    def __str__(self):
        return f"FLATTEN({self.ref})"


@dataclass(frozen=True)
class AggItem:
    op: str
    ref: FieldRef
    alias: str | None = None

    def __str__(self):
        s = f"{self.op}({self.ref})"
        return f"{s} AS {self.alias}" if self.alias else s


@dataclass(frozen=True)
class ForeachProject:
    alias: str
    src: str
    items: tuple
    bag: bool = False

    def __str__(self):
        tail = " BAG" if self.bag else ""
        return f"{self.alias} = FOREACH {self.src} GENERATE {', '.join(map(str, self.items))}{tail};"


@dataclass(frozen=True)
class ForeachAggregate:
    alias: str
    src: str
    keys: tuple  # ProjItem over field refs
    agg: AggItem

    def __str__(self):
        items = [str(k) for k in self.keys] + [str(self.agg)]
        return f"{self.alias} = FOREACH {self.src} GENERATE {', '.join(items)};"


@dataclass(frozen=True)
class ForeachBB:
    alias: str
    src: str
    bb: str
    args: tuple  # FieldRef; single-part refs may also name a relation alias
    flatten: bool = False
    out_name: str | None = None

    def __str__(self):
        call = f"{self.bb}({', '.join(map(str, self.args))})"
        if self.flatten:
            call = f"FLATTEN({call})"
        if self.out_name:
            call += f" AS {self.out_name}"
        return f"{self.alias} = FOREACH {self.src} GENERATE {call};"


@dataclass(frozen=True)
class Filter:
    alias: str
    src: str
    cond: tuple  # conjunction of Comparison

    def __str__(self):
        return f"{self.alias} = FILTER {self.src} BY {' AND '.join(map(str, self.cond))};"


@dataclass(frozen=True)
class Join:
    alias: str
    left: str
    left_key: FieldRef
    right: str
    right_key: FieldRef

    def __str__(self):
        return f"{self.alias} = JOIN {self.left} BY {self.left_key}, {self.right} BY {self.right_key};"


@dataclass(frozen=True)
class Group:
    alias: str
    src: str
    key: FieldRef

    def __str__(self):
        return f"{self.alias} = GROUP {self.src} BY {self.key};"


@dataclass(frozen=True)
class Cogroup:
    alias: str
    sources: tuple  # ((src, FieldRef), ...)

    def __str__(self):
        parts = ", ".join(f"{s} BY {k}" for s, k in self.sources)
        return f"{self.alias} = COGROUP {parts};"


@dataclass(frozen=True)
class Union:
    alias: str
    sources: tuple

    def __str__(self):
        return f"{self.alias} = UNION {', '.join(self.sources)};"


@dataclass(frozen=True)
class Distinct:
    alias: str
    src: str

    def __str__(self):
        return f"{self.alias} = DISTINCT {self.src};"


@dataclass(frozen=True)
class Order:
    alias: str
    src: str
    key: FieldRef
    descending: bool = False

    def __str__(self):
        return f"{self.alias} = ORDER {self.src} BY {self.key}{' DESC' if self.descending else ''};"


Statement = (ForeachProject, ForeachAggregate, ForeachBB, Filter, Join, Group, Cogroup, Union, Distinct, Order)


def statement_sources(stmt) -> tuple[str, ...]:
    if isinstance(stmt, Join):
        return (stmt.left, stmt.right)
    if isinstance(stmt, Cogroup):
        return tuple(s for s, _ in stmt.sources)
    if isinstance(stmt, Union):
        return stmt.sources
    return (stmt.src,)


@dataclass(frozen=True)
class PigProgram:
    statements: tuple = ()

    @property
    def aliases(self) -> tuple[str, ...]:
        return tuple(s.alias for s in self.statements)

    def __str__(self):
        return "\n".join(str(s) for s in self.statements)


def format_program(prog: PigProgram) -> str:
    return "".join(str(s) + "\n" for s in prog.statements)


# -- tokenizer --------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>--[^\n]*)
  | (?P<number>-?\d+\.\d*(?:[eE][-+]?\d+)?|-?\d+[eE][-+]?\d+|-?\d+)
  | (?P<string>'(?:[^'\\\n]|\\.)*')
  | (?P<pos>\$\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:::[A-Za-z_][A-Za-z0-9_]*)*)
  | (?P<op>==|!=|<=|>=|<|>|=|,|;|\(|\)|\.)
    """,
    re.VERBOSE,
)

KEYWORDS = {
    "FOREACH", "GENERATE", "FILTER", "BY", "JOIN", "GROUP", "COGROUP", "UNION",
    "DISTINCT", "ORDER", "AS", "FLATTEN", "AND", "BAG", "ASC", "DESC",
}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise PigSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        chunk = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, chunk, line, pos - line_start + 1))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


def _unescape(s: str) -> str:
    return re.sub(r"\\(.)", lambda m: {"n": "\n", "t": "\t"}.get(m.group(1), m.group(1)), s[1:-1])


class _Parser:
    def __init__(self, text):
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def error(self, message, tok=None):
        tok = tok or self.tok
        return PigSyntaxError(message, tok.line, tok.col)

    def next(self) -> Token:
        tok = self.tok
        self.i += 1
        return tok

    def is_kw(self, word, offset=0) -> bool:
        tok = self.tokens[self.i + offset]
        return tok.kind == "ident" and tok.text.upper() == word

    def expect_kw(self, word):
        if not self.is_kw(word):
            raise self.error(f"expected {word}, found {self.tok.text or 'end of input'!r}")
        return self.next()

    def is_op(self, op, offset=0) -> bool:
        tok = self.tokens[self.i + offset]
        return tok.kind == "op" and tok.text == op

    def expect_op(self, op):
        if not self.is_op(op):
            raise self.error(f"expected {op!r}, found {self.tok.text or 'end of input'!r}")
        return self.next()

    def alias(self) -> str:
        tok = self.tok
        if tok.kind != "ident" or tok.text.upper() in KEYWORDS:
            raise self.error(f"expected relation name, found {tok.text or 'end of input'!r}")
        self.i += 1
        return tok.text

    def name(self) -> str:
        tok = self.tok
        if tok.kind != "ident":
            raise self.error(f"expected name, found {tok.text or 'end of input'!r}")
        self.i += 1
        return tok.text

    # program := statement*
    def program(self) -> PigProgram:
        statements = []
        while self.tok.kind != "eof":
            statements.append(self.statement())
        return PigProgram(tuple(statements))

    def statement(self):
        alias = self.alias()
        self.expect_op("=")
        tok = self.tok
        if tok.kind != "ident":
            raise self.error(f"expected operator keyword, found {tok.text or 'end of input'!r}")
        word = tok.text.upper()
        handler = {
            "FOREACH": self.foreach,
            "FILTER": self.filter,
            "JOIN": self.join,
            "GROUP": self.group,
            "COGROUP": self.cogroup,
            "UNION": self.union,
            "DISTINCT": self.distinct,
            "ORDER": self.order,
        }.get(word)
        if handler is None:
            raise self.error(f"unknown keyword {tok.text!r}")
        self.next()
        stmt = handler(alias)
        self.expect_op(";")
        return stmt

    def field_ref(self) -> FieldRef:
        parts = []
        while True:
            tok = self.tok
            if tok.kind == "pos":
                parts.append(int(tok.text[1:]))
            elif tok.kind == "ident":
                parts.append(tok.text)
            else:
                raise self.error(f"expected field reference, found {tok.text or 'end of input'!r}")
            self.next()
            if not self.is_op("."):
                return FieldRef(tuple(parts))
            self.next()

    def literal(self):
        tok = self.tok
        if tok.kind == "number":
            self.next()
            text = tok.text
            return Literal(float(text) if any(c in text for c in ".eE") else int(text))
        if tok.kind == "string":
            self.next()
            return Literal(_unescape(tok.text))
        if tok.kind == "ident" and tok.text.lower() in ("true", "false"):
            self.next()
            return Literal(tok.text.lower() == "true")
        return None

    def operand(self):
        lit = self.literal()
        return lit if lit is not None else self.field_ref()

    def optional_as(self):
        if self.is_kw("AS"):
            self.next()
            return self.name()
        return None

    def foreach(self, alias):
        src = self.alias()
        self.expect_kw("GENERATE")
        items = [self.gen_item()]
        while self.is_op(","):
            self.next()
            items.append(self.gen_item())
        bag = False
        if self.is_kw("BAG"):
            self.next()
            bag = True
        return self._classify_foreach(alias, src, items, bag)

    def gen_item(self):
        start = self.tok
        if self.is_kw("FLATTEN") and self.is_op("(", 1):
            self.i += 2
            if self.tok.kind == "ident" and self.is_op("(", 1):
                call = self.call()
                self.expect_op(")")
                return ("bb", call[0], call[1], True, self.optional_as(), start)
            ref = self.field_ref()
            self.expect_op(")")
            return ("flatten", ref, start)
        if self.tok.kind == "ident" and self.is_op("(", 1):
            name, args = self.call()
            if name.upper() in AGG_OPS:
                if len(args) != 1:
                    raise self.error(f"{name.upper()} takes exactly one argument", start)
                return ("agg", AggItem(name.upper(), args[0], self.optional_as()), start)
            return ("bb", name, args, False, self.optional_as(), start)
        return ("proj", ProjItem(self.operand(), self.optional_as()), start)

    def call(self):
        name = self.name()
        self.expect_op("(")
        args = []
        if not self.is_op(")"):
            args.append(self.field_ref())
            while self.is_op(","):
                self.next()
                args.append(self.field_ref())
        self.expect_op(")")
        return name, tuple(args)

    def _classify_foreach(self, alias, src, items, bag):
        kinds = [it[0] for it in items]
        if "bb" in kinds:
            if len(items) != 1:
                raise self.error("a black-box call must be the only GENERATE item", items[0][-1])
            _, name, args, flatten, out_name, _ = items[0]
            return ForeachBB(alias, src, name, args, flatten, out_name)
        if "agg" in kinds:
            aggs = [it for it in items if it[0] == "agg"]
            if len(aggs) != 1 or kinds[-1] != "agg":
                raise self.error("exactly one aggregate, placed last, is supported per FOREACH", aggs[-1][-1])
            keys = []
            for it in items[:-1]:
                if it[0] != "proj" or not isinstance(it[1].expr, FieldRef):
                    raise self.error("aggregate FOREACH accepts only field references besides the aggregate", it[-1])
                keys.append(it[1])
            if bag:
                raise self.error("BAG applies to projections only")
            return ForeachAggregate(alias, src, tuple(keys), aggs[0][1])
        if kinds.count("flatten") > 1:
            raise self.error("at most one FLATTEN per FOREACH")
        out = tuple(it[1] if it[0] == "proj" else FlattenItem(it[1]) for it in items)
        return ForeachProject(alias, src, out, bag)

    def filter(self, alias):
        src = self.alias()
        self.expect_kw("BY")
        conds = [self.comparison()]
        while self.is_kw("AND"):
            self.next()
            conds.append(self.comparison())
        return Filter(alias, src, tuple(conds))

    def comparison(self):
        left = self.operand()
        if self.tok.kind == "op" and self.tok.text in COMPARISONS:
            op = self.next().text
            return Comparison(left, op, self.operand())
        if isinstance(left, FieldRef) or isinstance(left.value, bool):
            # bare boolean operand: shorthand for ``x == true``
            return Comparison(left, "==", Literal(True))
        raise self.error(f"expected comparison operator, found {self.tok.text or 'end of input'!r}")

    def join(self, alias):
        left = self.alias()
        self.expect_kw("BY")
        lk = self.field_ref()
        self.expect_op(",")
        right = self.alias()
        self.expect_kw("BY")
        return Join(alias, left, lk, right, self.field_ref())

    def group(self, alias):
        src = self.alias()
        self.expect_kw("BY")
        return Group(alias, src, self.field_ref())

    def cogroup(self, alias):
        sources = []
        while True:
            src = self.alias()
            self.expect_kw("BY")
            sources.append((src, self.field_ref()))
            if not self.is_op(","):
                break
            self.next()
        return Cogroup(alias, tuple(sources))

    def union(self, alias):
        sources = [self.alias()]
        while self.is_op(","):
            self.next()
            sources.append(self.alias())
        if len(sources) < 2:
            raise self.error("UNION needs at least two relations")
        return Union(alias, tuple(sources))

    def distinct(self, alias):
        return Distinct(alias, self.alias())

    def order(self, alias):
        src = self.alias()
        self.expect_kw("BY")
        key = self.field_ref()
        desc = False
        if self.is_kw("ASC") or self.is_kw("DESC"):
            desc = self.next().text.upper() == "DESC"
        return Order(alias, src, key, desc)


def parse(text: str) -> PigProgram:
    """Parse program text into a :class:`PigProgram` (syntax only)."""
    return _Parser(text).program()


# -- resolution and type checking --------------------------------------------


def base_name(name: str) -> str:
    return name.rsplit("::", 1)[-1]


def resolve_position(schema: Schema, part) -> int:
    """Index of a single name or ``$k`` reference within one schema level."""
    if isinstance(part, int):
        if not 0 <= part < schema.arity:
            raise PigTypeError(f"position ${part} out of range for {schema}")
        return part
    names = schema.names
    if part in names:
        return names.index(part)
    if "::" not in part:
        hits = [i for i, n in enumerate(names) if base_name(n) == part]
        if len(hits) == 1:
            return hits[0]
        if len(hits) > 1:
            raise PigTypeError(f"ambiguous field {part!r} in {schema}")
    if part == "group" and schema.grouped:
        return 0
    raise PigTypeError(f"unknown field {part!r} in {schema}")


def resolve_ref(schema: Schema, ref: FieldRef) -> tuple[tuple[int, ...], object]:
    """Resolve a (possibly nested) reference to an index path and its type."""
    path = []
    current = schema
    kind = None
    for depth, part in enumerate(ref.parts):
        if current is None:
            raise PigTypeError(f"{ref} descends into a non-bag field")
        idx = resolve_position(current, part)
        path.append(idx)
        kind = current.types[idx]
        current = kind if isinstance(kind, Schema) else None
    return tuple(path), kind


def _kinds_compatible(a, b) -> bool:
    if isinstance(a, Schema) or isinstance(b, Schema):
        return False
    return a == b or (a in NUMERIC_KINDS and b in NUMERIC_KINDS)


def _operand_kind(schema, operand):
    if isinstance(operand, Literal):
        return atom_kind(operand.value)
    path, kind = resolve_ref(schema, operand)
    if len(path) != 1 or isinstance(kind, Schema):
        raise PigTypeError(f"condition operand {operand} must be an atomic top-level field")
    return kind


def _item_name(item: ProjItem, schema: Schema) -> str:
    if item.alias:
        return item.alias
    if isinstance(item.expr, Literal):
        raise PigTypeError(f"literal {item.expr} needs an AS name")
    path, _ = resolve_ref(schema, item.expr)
    return schema.names[path[0]] if len(path) == 1 else base_name(str(item.expr.parts[-1]))


def _join_attrs(left: Schema, right: Schema):
    lbase = {base_name(n) for n in left.names}
    rbase = {base_name(n) for n in right.names}
    clash = lbase & rbase
    attrs = []
    for owner, schema in ((left, left), (right, right)):
        for name, kind in schema.attrs:
            if "::" not in name and name in clash:
                name = f"{owner.name}::{name}"
            attrs.append((name, kind))
    return tuple(attrs)


def output_schema(stmt, schemas: Mapping[str, Schema], bb_schemas: Mapping[str, Schema] | None = None) -> Schema:
    """Schema produced by one statement given the schemas of its sources."""
    try:
        return _output_schema(stmt, schemas, bb_schemas)
    except SchemaError as exc:
        raise PigTypeError(f"{stmt.alias}: {exc}") from None


def _output_schema(stmt, schemas, bb_schemas) -> Schema:

    def src_schema(name):
        try:
            return schemas[name]
        except KeyError:
            raise PigTypeError(f"unresolved alias {name!r}") from None

    alias = stmt.alias
    if isinstance(stmt, ForeachProject):
        src = src_schema(stmt.src)
        attrs = []
        for item in stmt.items:
            if isinstance(item, FlattenItem):
                path, kind = resolve_ref(src, item.ref)
                if len(path) != 1 or not isinstance(kind, Schema):
                    raise PigTypeError(f"FLATTEN({item.ref}) needs a top-level nested bag field")
                attrs.extend(kind.attrs)
                continue
            if isinstance(item.expr, Literal):
                kind = atom_kind(item.expr.value)
            else:
                path, kind = resolve_ref(src, item.expr)
                if len(path) != 1:
                    raise PigTypeError(f"projection of nested path {item.expr} is not supported")
            attrs.append((_item_name(item, src), kind))
        return Schema(alias, tuple(attrs))
    if isinstance(stmt, ForeachAggregate):
        src = src_schema(stmt.src)
        attrs = []
        for key in stmt.keys:
            path, kind = resolve_ref(src, key.expr)
            if len(path) != 1:
                raise PigTypeError(f"grouping field {key.expr} must be top-level")
            attrs.append((_item_name(key, src), kind))
        path, kind = resolve_ref(src, stmt.agg.ref)
        if len(path) == 1:
            if not isinstance(kind, Schema):
                raise PigTypeError(f"{stmt.agg.op}({stmt.agg.ref}) needs a nested bag")
            if stmt.agg.op != "COUNT":
                if kind.arity != 1:
                    raise PigTypeError(f"{stmt.agg.op} over a bag needs a single-field bag or a path")
                kind = kind.types[0]
        elif len(path) != 2:
            raise PigTypeError(f"aggregate path {stmt.agg.ref} must be bag.field")
        if stmt.agg.op == "COUNT":
            out_kind = "int"
        else:
            if kind not in NUMERIC_KINDS:
                raise PigTypeError(f"{stmt.agg.op} over non-numeric field {stmt.agg.ref}")
            out_kind = kind
        name = stmt.agg.alias or stmt.agg.op.lower()
        attrs.append((name, out_kind))
        return Schema(alias, tuple(attrs))
    if isinstance(stmt, ForeachBB):
        src = src_schema(stmt.src)
        for arg in stmt.args:
            try:
                resolve_ref(src, arg)
            except PigTypeError:
                if len(arg.parts) != 1 or arg.parts[0] not in schemas:
                    raise
        out = (bb_schemas or {}).get(stmt.bb)
        if out is None:
            raise PigTypeError(f"black box {stmt.bb!r} is not registered")
        if stmt.flatten:
            return Schema(alias, out.attrs)
        return Schema(alias, ((stmt.out_name or stmt.bb, out.renamed(stmt.out_name or stmt.bb)),))
    if isinstance(stmt, Filter):
        src = src_schema(stmt.src)
        for cmp in stmt.cond:
            a, b = _operand_kind(src, cmp.left), _operand_kind(src, cmp.right)
            if not _kinds_compatible(a, b):
                raise PigTypeError(f"cannot compare {a} with {b} in {cmp}")
        return src.renamed(alias)
    if isinstance(stmt, Join):
        left, right = src_schema(stmt.left), src_schema(stmt.right)
        if stmt.left == stmt.right:
            raise PigTypeError("self-join needs two distinct aliases")
        lk = _atomic_key(left, stmt.left_key)
        rk = _atomic_key(right, stmt.right_key)
        if not _kinds_compatible(lk, rk):
            raise PigTypeError(f"join keys {stmt.left_key} ({lk}) and {stmt.right_key} ({rk}) differ in kind")
        return Schema(alias, _join_attrs(left, right))
    if isinstance(stmt, Group):
        src = src_schema(stmt.src)
        path, kind = resolve_ref(src, stmt.key)
        _atomic_key(src, stmt.key)
        key_name = base_name(src.names[path[0]])
        return Schema(alias, ((key_name, kind), (stmt.src, src.renamed(stmt.src))), grouped=True)
    if isinstance(stmt, Cogroup):
        if not 2 <= len(stmt.sources) <= 4:
            raise PigTypeError("COGROUP takes between 2 and 4 relations")
        names = [s for s, _ in stmt.sources]
        if len(set(names)) != len(names):
            raise PigTypeError("COGROUP relations must be distinct")
        key_kind = None
        attrs = []
        for src_name, key in stmt.sources:
            src = src_schema(src_name)
            kind = _atomic_key(src, key)
            if key_kind is None:
                key_kind = kind
                path, _ = resolve_ref(src, key)
                attrs.append((base_name(src.names[path[0]]), kind))
            elif not _kinds_compatible(key_kind, kind):
                raise PigTypeError(f"COGROUP key {key} of {src_name} has kind {kind}, expected {key_kind}")
            attrs.append((src_name, src.renamed(src_name)))
        return Schema(alias, tuple(attrs), grouped=True)
    if isinstance(stmt, Union):
        first = src_schema(stmt.sources[0])
        for other in stmt.sources[1:]:
            if not first.same_shape(src_schema(other)):
                raise PigTypeError(f"UNION schema mismatch: {first} vs {src_schema(other)}")
        return first.renamed(alias)
    if isinstance(stmt, Distinct):
        return src_schema(stmt.src).renamed(alias)
    if isinstance(stmt, Order):
        src = src_schema(stmt.src)
        _atomic_key(src, stmt.key)
        return src.renamed(alias)
    raise PigTypeError(f"unsupported statement {stmt!r}")


def _atomic_key(schema, ref):
    path, kind = resolve_ref(schema, ref)
    if len(path) != 1 or isinstance(kind, Schema):
        raise PigTypeError(f"key {ref} must be an atomic top-level field")
    return kind


def resolve_and_typecheck(
    prog: PigProgram,
    env_schemas: Mapping[str, Schema],
    bb_schemas: Mapping[str, Schema] | None = None,
    reassignable: Mapping[str, Schema] | None = None,
) -> dict[str, Schema]:
    """Compute the output schema of every alias defined by ``prog``.

    ``reassignable`` names pre-bound relations (module state) that the program
    may redefine once; the new definition must match the declared shape.
    """
    schemas = dict(env_schemas)
    reassignable = dict(reassignable or {})
    defined: dict[str, Schema] = {}
    for stmt in prog.statements:
        out = output_schema(stmt, schemas, bb_schemas)
        alias = stmt.alias
        if alias in defined:
            raise PigTypeError(f"alias {alias!r} assigned twice")
        if alias in schemas:
            declared = reassignable.pop(alias, None)
            if declared is None:
                raise PigTypeError(f"alias {alias!r} shadows an input relation")
            if not declared.same_shape(out):
                raise PigTypeError(f"new {alias} has shape {out}, declared {declared}")
            out = Schema(alias, declared.attrs)
        defined[alias] = out
        schemas[alias] = out
    return defined


BBFunction = Callable[..., object]
