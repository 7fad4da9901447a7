"""The restricted read/write command language.

Grammar (version 1, published in docs/command-grammar.md):

    command := read | insert | update | delete ;
    read    := "READ" id "FIELDS" idlist "WHERE" pred ;
    insert  := "INSERT" id "VALUES" "(" kvlist ")" ;
    update  := "UPDATE" id "KEY" literal "SET" kvlist ;
    delete  := "DELETE" id "KEY" literal ;
    pred    := conj ("OR" conj)* ;
    conj    := atom ("AND" atom)* ;
    atom    := "(" pred ")" | comparison ;

Keywords are case-sensitive upper-case; identifiers are lower-case
``[a-z_][a-z0-9_]*``; literals are single-quoted strings (``''`` escapes a
quote), integers, ISO-8601 dates and ``NULL``. The language is deliberately
too small to join or aggregate: every command names exactly one registry, so
every command is statically gateable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .canonical import Scalar, sha256_hex
from .conditions import And, Cmp, Condition, FieldRef, Lit, Not, Or
from .errors import CommandSyntaxError, LimitExceeded, UnknownKeyword

MAX_COMMAND_BYTES = 64 * 1024
_MAX_PRED_DEPTH = 64

KEYWORDS = frozenset({
    "READ", "FIELDS", "WHERE", "INSERT", "VALUES", "UPDATE", "KEY", "SET",
    "DELETE", "AND", "OR", "IS", "NOT", "NULL",
})

_TOKEN_RE = re.compile(r"""
      (?P<ws>\s+)
    | (?P<date>\d{4}-\d{2}-\d{2})
    | (?P<int>-?\d+)
    | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<string>'(?:[^'\n]|'')*')
    | (?P<op><=|>=|!=|=|<|>)
    | (?P<punct>[(),])
""", re.VERBOSE)

_IDENT_RE = re.compile(r"^[a-z_][a-z0-9_]*$")


@dataclass(frozen=True)
class Token:
    kind: str  # keyword | ident | int | date | string | op | punct | eof
    text: str
    value: Scalar
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if not match:
            raise CommandSyntaxError(f"unexpected character {text[pos]!r}",
                                     line, pos - line_start + 1)
        column = match.start() - line_start + 1
        lexeme = match.group(0)
        if match.lastgroup == "ws":
            line += lexeme.count("\n")
            if "\n" in lexeme:
                line_start = match.start() + lexeme.rfind("\n") + 1
        elif match.lastgroup == "date":
            tokens.append(Token("date", lexeme, lexeme, line, column))
        elif match.lastgroup == "int":
            tokens.append(Token("int", lexeme, int(lexeme), line, column))
        elif match.lastgroup == "word":
            if lexeme in KEYWORDS:
                tokens.append(Token("keyword", lexeme, lexeme, line, column))
            elif _IDENT_RE.match(lexeme):
                tokens.append(Token("ident", lexeme, lexeme, line, column))
            elif lexeme.isupper():
                raise UnknownKeyword(f"unknown keyword {lexeme!r}", line, column)
            else:
                raise CommandSyntaxError(f"malformed identifier {lexeme!r}", line, column)
        elif match.lastgroup == "string":
            tokens.append(Token("string", lexeme, lexeme[1:-1].replace("''", "'"),
                                line, column))
        elif match.lastgroup == "op":
            tokens.append(Token("op", lexeme, lexeme, line, column))
        elif match.lastgroup == "punct":
            tokens.append(Token("punct", lexeme, lexeme, line, column))
        pos = match.end()
    tokens.append(Token("eof", "", None, line, len(text) - line_start + 1))
    return tokens


# --- AST -------------------------------------------------------------------------

@dataclass(frozen=True)
class Read:
    registry: str
    projection: tuple[str, ...]
    selection: Condition


@dataclass(frozen=True)
class Insert:
    registry: str
    values: tuple[tuple[str, Scalar], ...]  # source order preserved


@dataclass(frozen=True)
class Update:
    registry: str
    key: Scalar
    updates: tuple[tuple[str, Scalar], ...]


@dataclass(frozen=True)
class Delete:
    registry: str
    key: Scalar


Command = Read | Insert | Update | Delete


@dataclass(frozen=True)
class CommandAst:
    command: Command
    source_text: str = field(compare=False)
    digest: str = field(compare=False)

    @property
    def registry(self) -> str:
        return self.command.registry


_OP_TO_COND = {"=": "eq", "!=": "ne", "<": "lt", "<=": "le", ">": "gt", ">=": "ge"}
_COND_TO_OP = {v: k for k, v in _OP_TO_COND.items()}


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def fail(self, message: str):
        token = self.peek()
        raise CommandSyntaxError(message, token.line, token.column)

    def expect_keyword(self, word: str) -> Token:
        token = self.peek()
        if token.kind != "keyword" or token.text != word:
            self.fail(f"expected {word}, found {token.text or 'end of input'!r}")
        return self.advance()

    def expect_ident(self) -> str:
        token = self.peek()
        if token.kind != "ident":
            self.fail(f"expected identifier, found {token.text or 'end of input'!r}")
        return self.advance().text

    def expect_punct(self, symbol: str) -> None:
        token = self.peek()
        if token.kind != "punct" or token.text != symbol:
            self.fail(f"expected {symbol!r}, found {token.text or 'end of input'!r}")
        self.advance()

    def literal(self) -> Scalar:
        token = self.peek()
        if token.kind in ("string", "int", "date"):
            return self.advance().value
        if token.kind == "keyword" and token.text == "NULL":
            self.advance()
            return None
        self.fail(f"expected literal, found {token.text or 'end of input'!r}")

    # command := read | insert | update | delete
    def command(self) -> Command:
        token = self.peek()
        if token.kind != "keyword":
            self.fail("expected READ, INSERT, UPDATE or DELETE")
        if token.text == "READ":
            return self.read()
        if token.text == "INSERT":
            return self.insert()
        if token.text == "UPDATE":
            return self.update()
        if token.text == "DELETE":
            return self.delete()
        self.fail(f"expected READ, INSERT, UPDATE or DELETE, found {token.text}")

    def read(self) -> Read:
        self.expect_keyword("READ")
        registry = self.expect_ident()
        self.expect_keyword("FIELDS")
        projection = [self.expect_ident()]
        while self.peek().kind == "punct" and self.peek().text == ",":
            self.advance()
            projection.append(self.expect_ident())
        self.expect_keyword("WHERE")
        selection = self.pred(0)
        return Read(registry, tuple(projection), selection)

    def insert(self) -> Insert:
        self.expect_keyword("INSERT")
        registry = self.expect_ident()
        self.expect_keyword("VALUES")
        self.expect_punct("(")
        values = self.kvlist()
        self.expect_punct(")")
        return Insert(registry, values)

    def update(self) -> Update:
        self.expect_keyword("UPDATE")
        registry = self.expect_ident()
        self.expect_keyword("KEY")
        key = self.literal()
        self.expect_keyword("SET")
        updates = self.kvlist()
        return Update(registry, key, updates)

    def delete(self) -> Delete:
        self.expect_keyword("DELETE")
        registry = self.expect_ident()
        self.expect_keyword("KEY")
        key = self.literal()
        return Delete(registry, key)

    def kvlist(self) -> tuple[tuple[str, Scalar], ...]:
        pairs = [self.kv()]
        seen = {pairs[0][0]}
        while self.peek().kind == "punct" and self.peek().text == ",":
            self.advance()
            name, value = self.kv()
            if name in seen:
                self.fail(f"duplicate field {name!r} in value list")
            seen.add(name)
            pairs.append((name, value))
        return tuple(pairs)

    def kv(self) -> tuple[str, Scalar]:
        name = self.expect_ident()
        token = self.peek()
        if token.kind != "op" or token.text != "=":
            self.fail(f"expected '=', found {token.text or 'end of input'!r}")
        self.advance()
        return name, self.literal()

    # pred := conj (OR conj)*
    def pred(self, depth: int) -> Condition:
        if depth > _MAX_PRED_DEPTH:
            raise LimitExceeded("predicate nesting exceeds supported depth")
        args = [self.conj(depth)]
        while self.peek().kind == "keyword" and self.peek().text == "OR":
            self.advance()
            args.append(self.conj(depth))
        return args[0] if len(args) == 1 else Or(tuple(args))

    def conj(self, depth: int) -> Condition:
        args = [self.pred_atom(depth)]
        while self.peek().kind == "keyword" and self.peek().text == "AND":
            self.advance()
            args.append(self.pred_atom(depth))
        return args[0] if len(args) == 1 else And(tuple(args))

    def pred_atom(self, depth: int) -> Condition:
        token = self.peek()
        if token.kind == "punct" and token.text == "(":
            self.advance()
            inner = self.pred(depth + 1)
            self.expect_punct(")")
            return inner
        return self.comparison()

    def comparison(self) -> Condition:
        lhs = FieldRef("row", self.expect_ident())
        token = self.peek()
        if token.kind == "keyword" and token.text == "IS":
            self.advance()
            if self.peek().kind == "keyword" and self.peek().text == "NOT":
                self.advance()
                self.expect_keyword("NULL")
                return Cmp(lhs, "is_not_null", None)
            self.expect_keyword("NULL")
            return Cmp(lhs, "is_null", None)
        if token.kind != "op":
            self.fail(f"expected comparison operator, found {token.text or 'end of input'!r}")
        op = _OP_TO_COND[self.advance().text]
        rhs_token = self.peek()
        if rhs_token.kind == "ident":
            return Cmp(lhs, op, FieldRef("row", self.advance().text))
        return Cmp(lhs, op, Lit(self.literal()))


def parse(text: str) -> CommandAst:
    """Parse one command; every error carries line and column."""
    if len(text.encode("utf-8")) > MAX_COMMAND_BYTES:
        raise LimitExceeded(f"command exceeds {MAX_COMMAND_BYTES} bytes")
    parser = _Parser(tokenize(text))
    command = parser.command()
    trailing = parser.peek()
    if trailing.kind != "eof":
        raise CommandSyntaxError(f"unexpected trailing input {trailing.text!r}",
                                 trailing.line, trailing.column)
    return CommandAst(command, source_text=text,
                      digest=sha256_hex(text.encode("utf-8")))


# --- rendering ---------------------------------------------------------------------

def _render_literal(value: Scalar) -> str:
    if value is None:
        return "NULL"
    if isinstance(value, bool):
        raise CommandSyntaxError("boolean literals are not part of grammar v1")
    if isinstance(value, int):
        return str(value)
    escaped = value.replace("'", "''")
    if re.fullmatch(r"\d{4}-\d{2}-\d{2}", value):
        return value  # date literal renders bare
    return f"'{escaped}'"


def _render_pred(cond: Condition, parent: str = "or") -> str:
    if isinstance(cond, Or):
        body = " OR ".join(_render_pred(a, "or") for a in cond.args)
        return f"({body})" if parent != "or" else body
    if isinstance(cond, And):
        return " AND ".join(_render_pred(a, "and") for a in cond.args)
    if isinstance(cond, Cmp):
        if cond.op == "is_null":
            return f"{cond.lhs.name} IS NULL"
        if cond.op == "is_not_null":
            return f"{cond.lhs.name} IS NOT NULL"
        rhs = (cond.rhs.name if isinstance(cond.rhs, FieldRef)
               else _render_literal(cond.rhs.value))
        return f"{cond.lhs.name} {_COND_TO_OP[cond.op]} {rhs}"
    if isinstance(cond, Not):
        raise CommandSyntaxError("NOT predicates are not part of grammar v1")
    raise CommandSyntaxError(f"predicate node {type(cond).__name__} not renderable")


def render(ast: CommandAst) -> str:
    """Canonical text for an AST; reparsing yields an equal AST."""
    c = ast.command
    if isinstance(c, Read):
        fields = ", ".join(c.projection)
        return f"READ {c.registry} FIELDS {fields} WHERE {_render_pred(c.selection)}"
    if isinstance(c, Insert):
        kvs = ", ".join(f"{k} = {_render_literal(v)}" for k, v in c.values)
        return f"INSERT {c.registry} VALUES ({kvs})"
    if isinstance(c, Update):
        kvs = ", ".join(f"{k} = {_render_literal(v)}" for k, v in c.updates)
        return f"UPDATE {c.registry} KEY {_render_literal(c.key)} SET {kvs}"
    if isinstance(c, Delete):
        return f"DELETE {c.registry} KEY {_render_literal(c.key)}"
    raise TypeError(f"not a command: {c!r}")


# --- request mapping ------------------------------------------------------------------

@dataclass(frozen=True)
class RequestSpec:
    """A command translated into the gated-request vocabulary."""

    request_kind: str
    subject: str
    params: tuple[tuple[str, Scalar], ...]

    def params_dict(self) -> dict[str, Scalar]:
        return dict(self.params)


def _scalar_params(pairs) -> dict[str, Scalar]:
    return {k: v for k, v in pairs if v is None or isinstance(v, (str, int, bool))}


def _selection_key_literal(selection: Condition, key_field: str) -> Scalar:
    """Key equality literal from a WHERE clause, if statically determined.

    Only a top-level conjunction (no OR) can pin the key.
    """
    conjuncts = selection.args if isinstance(selection, And) else (selection,)
    for node in conjuncts:
        if (isinstance(node, Cmp) and node.op == "eq" and isinstance(node.rhs, Lit)
                and node.lhs.name == key_field):
            return node.rhs.value
    return None


def _top_level_eq_params(selection: Condition) -> dict[str, Scalar]:
    conjuncts = selection.args if isinstance(selection, And) else (selection,)
    out: dict[str, Scalar] = {}
    for node in conjuncts:
        if isinstance(node, Cmp) and node.op == "eq" and isinstance(node.rhs, Lit):
            out[node.lhs.name] = node.rhs.value
    return out


def map_to_request(ast: CommandAst, requester: str,
                   key_field: str | None = None) -> RequestSpec:
    """Derive the request kind and context parameters from a parsed command.

    The kind depends only on the AST: reads map to ``read(registry)``,
    updates to ``write(registry,field…)`` over the touched fields, inserts
    and deletes to ``insert(registry)`` / ``delete(registry)``. Parameters
    carry the requester, the registry, the target key where derivable (for
    reads, a top-level key equality; for inserts, the key field's value when
    ``key_field`` is known), and the command's scalar literals, so that
    context conditions can discriminate. The affected record's key doubles
    as the default ``companion`` — the other party the command concerns.
    """
    c = ast.command
    params: dict[str, Scalar] = {}
    key: Scalar = None
    if isinstance(c, Read):
        kind = f"read({c.registry})"
        params.update(_top_level_eq_params(c.selection))
        if key_field:
            key = _selection_key_literal(c.selection, key_field)
    elif isinstance(c, Insert):
        kind = f"insert({c.registry})"
        params.update(_scalar_params(c.values))
        if key_field:
            key = dict(c.values).get(key_field)
    elif isinstance(c, Update):
        touched = ",".join(sorted(k for k, _ in c.updates))
        kind = f"write({c.registry},{touched})"
        params.update(_scalar_params(c.updates))
        key = c.key
    elif isinstance(c, Delete):
        kind = f"delete({c.registry})"
        key = c.key
    else:
        raise TypeError(f"not a command: {c!r}")

    params["registry"] = c.registry
    params["requester"] = requester
    if key is not None:
        params["key"] = key
        params.setdefault("companion", key if isinstance(key, str) else None)
    return RequestSpec(kind, requester, tuple(sorted(params.items())))
