"""Independent reference parser for the command grammar.

Written separately from the production parser, directly against the
published grammar, to serve as a cross-check oracle. It deliberately uses a
different construction (regex token list, index cursor, plain-tuple output)
so a shared bug is unlikely.

Output shapes:
    ("read", registry, (field, ...), pred)
    ("insert", registry, ((name, value), ...))
    ("update", registry, key, ((name, value), ...))
    ("delete", registry, key)
    pred: ("or", (conj, ...)) | conj
    conj: ("and", (atom, ...)) | atom
    atom: ("cmp", name, op, ("lit", value) | ("field", name))
          | ("null", name) | ("notnull", name)
"""

from __future__ import annotations

import re

_TOKENS = re.compile(
    r"\s*(?:(?P<date>\d{4}-\d{2}-\d{2})|(?P<num>-?\d+)|(?P<word>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<str>'(?:[^'\n]|'')*')|(?P<op><=|>=|!=|=|<|>)|(?P<p>[(),]))")

_KEYWORDS = {"READ", "FIELDS", "WHERE", "INSERT", "VALUES", "UPDATE", "KEY", "SET",
             "DELETE", "AND", "OR", "IS", "NOT", "NULL"}


class RefError(Exception):
    pass


def _lex(text):
    out, pos = [], 0
    while pos < len(text):
        m = _TOKENS.match(text, pos)
        if not m or m.end() == pos and not m.group(0):
            remaining = text[pos:].strip()
            if not remaining:
                break
            raise RefError(f"cannot lex at {remaining[:10]!r}")
        if m.group("date"):
            out.append(("lit", m.group("date")))
        elif m.group("num"):
            out.append(("lit", int(m.group("num"))))
        elif m.group("word"):
            w = m.group("word")
            if w in _KEYWORDS:
                out.append(("kw", w))
            elif re.fullmatch(r"[a-z_][a-z0-9_]*", w):
                out.append(("id", w))
            else:
                raise RefError(f"bad word {w!r}")
        elif m.group("str"):
            out.append(("lit", m.group("str")[1:-1].replace("''", "'")))
        elif m.group("op"):
            out.append(("op", m.group("op")))
        elif m.group("p"):
            out.append(("p", m.group("p")))
        pos = m.end()
    out.append(("eof", None))
    return out


class _Cursor:
    def __init__(self, toks):
        self.toks = toks
        self.i = 0

    def cur(self):
        return self.toks[self.i]

    def take(self, kind, value=None):
        k, v = self.toks[self.i]
        if k != kind or (value is not None and v != value):
            raise RefError(f"expected {kind} {value}, got {k} {v}")
        self.i += 1
        return v

    def at(self, kind, value=None):
        k, v = self.toks[self.i]
        return k == kind and (value is None or v == value)


def _literal(c: _Cursor):
    if c.at("lit"):
        return c.take("lit")
    if c.at("kw", "NULL"):
        c.take("kw")
        return None
    raise RefError("expected literal")


def _kvlist(c: _Cursor):
    pairs = []
    while True:
        name = c.take("id")
        c.take("op", "=")
        pairs.append((name, _literal(c)))
        if c.at("p", ","):
            c.take("p")
            continue
        return tuple(pairs)


def _atom(c: _Cursor):
    if c.at("p", "("):
        c.take("p")
        inner = _pred(c)
        c.take("p", ")")
        return inner
    name = c.take("id")
    if c.at("kw", "IS"):
        c.take("kw")
        if c.at("kw", "NOT"):
            c.take("kw")
            c.take("kw", "NULL")
            return ("notnull", name)
        c.take("kw", "NULL")
        return ("null", name)
    op = c.take("op")
    if c.at("id"):
        return ("cmp", name, op, ("field", c.take("id")))
    return ("cmp", name, op, ("lit", _literal(c)))


def _conj(c: _Cursor):
    parts = [_atom(c)]
    while c.at("kw", "AND"):
        c.take("kw")
        parts.append(_atom(c))
    return parts[0] if len(parts) == 1 else ("and", tuple(parts))


def _pred(c: _Cursor):
    parts = [_conj(c)]
    while c.at("kw", "OR"):
        c.take("kw")
        parts.append(_conj(c))
    return parts[0] if len(parts) == 1 else ("or", tuple(parts))


def ref_parse(text: str):
    c = _Cursor(_lex(text))
    kind = c.take("kw")
    if kind == "READ":
        registry = c.take("id")
        c.take("kw", "FIELDS")
        fields = [c.take("id")]
        while c.at("p", ","):
            c.take("p")
            fields.append(c.take("id"))
        c.take("kw", "WHERE")
        pred = _pred(c)
        result = ("read", registry, tuple(fields), pred)
    elif kind == "INSERT":
        registry = c.take("id")
        c.take("kw", "VALUES")
        c.take("p", "(")
        values = _kvlist(c)
        c.take("p", ")")
        result = ("insert", registry, values)
    elif kind == "UPDATE":
        registry = c.take("id")
        c.take("kw", "KEY")
        key = _literal(c)
        c.take("kw", "SET")
        result = ("update", registry, key, _kvlist(c))
    elif kind == "DELETE":
        registry = c.take("id")
        c.take("kw", "KEY")
        result = ("delete", registry, _literal(c))
    else:
        raise RefError(f"unknown command {kind}")
    c.take("eof")
    return result
