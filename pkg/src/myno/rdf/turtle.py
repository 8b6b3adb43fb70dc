"""Turtle reader and writer for the device-description subset.

Supported syntax: ``@prefix`` / ``@base`` directives, prefixed names, the
``a`` keyword, string / numeric / boolean literals, ``^^`` datatypes,
language tags, predicate-object lists (``;``), object lists (``,``),
labelled blank nodes and blank-node property lists (``[...]``). RDF
collections ``(...)``, quads, and multi-line strings are rejected with a
SyntaxError rather than mis-parsed.
"""

from __future__ import annotations

import re
from urllib.parse import urljoin

from myno.rdf.terms import BlankNode, Iri, Literal, Term, Triple, TripleStore

RDF_TYPE_IRI = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
XSD = "http://www.w3.org/2001/XMLSchema#"


class SyntaxError_(Exception):
    """Turtle syntax violation with 1-based line/column coordinates."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class UndefinedPrefix(SyntaxError_):
    pass


_TOKEN_RE = re.compile(
    r"""
    (?P<WS>[ \t\r\n]+)
  | (?P<COMMENT>\#[^\n]*)
  | (?P<IRIREF><[^<>"{}|^`\\\x00-\x20]*>)
  | (?P<STRING>"(?:[^"\\\n]|\\.)*")
  | (?P<KEYWORD>@prefix\b|@base\b|\ba\b|\btrue\b|\bfalse\b)
  | (?P<LANGTAG>@[a-zA-Z]+(?:-[a-zA-Z0-9]+)*)
  | (?P<DOUBLE>[+-]?(?:\d+\.\d*|\.?\d+)[eE][+-]?\d+)
  | (?P<DECIMAL>[+-]?\d*\.\d+)
  | (?P<INTEGER>[+-]?\d+)
  | (?P<BNODE>_:[A-Za-z0-9_](?:[A-Za-z0-9_.-]*[A-Za-z0-9_-])?)
  | (?P<PNAME>(?:[A-Za-z][A-Za-z0-9_.-]*)?:(?:[A-Za-z0-9_%](?:[A-Za-z0-9_.%-]*[A-Za-z0-9_%-])?)?)
  | (?P<HATHAT>\^\^)
  | (?P<PUNCT>[;,.\[\]()])
""",
    re.VERBOSE,
)


class _Token:
    __slots__ = ("kind", "text", "line", "column", "start", "end")

    def __init__(self, kind: str, text: str, line: int, column: int, start: int, end: int):
        self.kind = kind
        self.text = text
        self.line = line
        self.column = column
        self.start = start
        self.end = end


def _tokenize(doc: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    line = 1
    line_start = 0
    while pos < len(doc):
        match = _TOKEN_RE.match(doc, pos)
        if match is None:
            raise SyntaxError_(
                f"unexpected character {doc[pos]!r}", line, pos - line_start + 1
            )
        kind = match.lastgroup
        text = match.group()
        if kind not in ("WS", "COMMENT"):
            tokens.append(_Token(kind, text, line, pos - line_start + 1, pos, match.end()))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rindex("\n") + 1
        pos = match.end()
    tokens.append(_Token("EOF", "", line, pos - line_start + 1, pos, pos))
    return tokens


_STRING_ESCAPES = {
    "t": "\t",
    "b": "\b",
    "n": "\n",
    "r": "\r",
    "f": "\f",
    '"': '"',
    "'": "'",
    "\\": "\\",
}


def _unescape(raw: str, token: _Token) -> str:
    out: list[str] = []
    i = 0
    while i < len(raw):
        ch = raw[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        if i + 1 >= len(raw):
            raise SyntaxError_("dangling escape in string", token.line, token.column)
        esc = raw[i + 1]
        if esc in _STRING_ESCAPES:
            out.append(_STRING_ESCAPES[esc])
            i += 2
        elif esc == "u" or esc == "U":
            width = 4 if esc == "u" else 8
            hexdigits = raw[i + 2 : i + 2 + width]
            if len(hexdigits) != width:
                raise SyntaxError_("truncated unicode escape", token.line, token.column)
            out.append(chr(int(hexdigits, 16)))
            i += 2 + width
        else:
            raise SyntaxError_(f"unknown escape \\{esc}", token.line, token.column)
    return "".join(out)


class _Parser:
    def __init__(self, doc: str):
        self.tokens = _tokenize(doc)
        self.pos = 0
        self.prefixes: dict[str, str] = {}
        self.base: str | None = None
        self.store = TripleStore()
        self._blank_counter = 0

    # -- token plumbing ------------------------------------------------

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def expect(self, kind: str, text: str | None = None) -> _Token:
        token = self.next()
        if token.kind != kind or (text is not None and token.text != text):
            want = text or kind
            raise SyntaxError_(
                f"expected {want!r}, found {token.text!r}", token.line, token.column
            )
        return token

    def fail(self, message: str) -> SyntaxError_:
        token = self.peek()
        return SyntaxError_(f"{message}, found {token.text!r}", token.line, token.column)

    # -- grammar ---------------------------------------------------------

    def parse(self) -> TripleStore:
        while self.peek().kind != "EOF":
            token = self.peek()
            if token.kind == "KEYWORD" and token.text == "@prefix":
                self.next()
                name = self.expect("PNAME")
                if not name.text.endswith(":") or name.text.count(":") != 1:
                    raise SyntaxError_("malformed prefix name", name.line, name.column)
                iri = self.expect("IRIREF")
                self.expect("PUNCT", ".")
                self.prefixes[name.text[:-1]] = self._resolve(iri.text[1:-1])
            elif token.kind == "KEYWORD" and token.text == "@base":
                self.next()
                iri = self.expect("IRIREF")
                self.expect("PUNCT", ".")
                self.base = self._resolve(iri.text[1:-1])
            else:
                self._triples_statement()
        return self.store

    def _triples_statement(self) -> None:
        token = self.peek()
        if token.kind == "PUNCT" and token.text == "[":
            subject = self._blank_property_list()
            # a bare property list may stand alone as a statement
            if not (self.peek().kind == "PUNCT" and self.peek().text == "."):
                self._predicate_object_list(subject)
        else:
            subject = self._subject()
            self._predicate_object_list(subject)
        self.expect("PUNCT", ".")

    def _predicate_object_list(self, subject: Term) -> None:
        while True:
            predicate = self._verb()
            self._object_list(subject, predicate)
            if self.peek().kind == "PUNCT" and self.peek().text == ";":
                self.next()
                # tolerate trailing ';' before '.' or ']'
                nxt = self.peek()
                if nxt.kind == "PUNCT" and nxt.text in (".", "]"):
                    return
                continue
            return

    def _object_list(self, subject: Term, predicate: Iri) -> None:
        while True:
            obj = self._object()
            self.store.add(Triple(subject, predicate, obj))
            if self.peek().kind == "PUNCT" and self.peek().text == ",":
                self.next()
                continue
            return

    def _verb(self) -> Iri:
        token = self.peek()
        if token.kind == "KEYWORD" and token.text == "a":
            self.next()
            return Iri(RDF_TYPE_IRI)
        term = self._iri_term()
        return term

    def _subject(self) -> Term:
        token = self.peek()
        if token.kind == "BNODE":
            self.next()
            return BlankNode(token.text[2:])
        if token.kind in ("IRIREF", "PNAME"):
            return self._iri_term()
        raise self.fail("expected subject (IRI, prefixed name, or blank node)")

    def _object(self) -> Term:
        token = self.peek()
        if token.kind == "PUNCT" and token.text == "[":
            return self._blank_property_list()
        if token.kind == "PUNCT" and token.text == "(":
            raise SyntaxError_(
                "RDF collections '(...)' are outside the supported subset",
                token.line,
                token.column,
            )
        if token.kind == "BNODE":
            self.next()
            return BlankNode(token.text[2:])
        if token.kind in ("IRIREF", "PNAME"):
            return self._iri_term()
        if token.kind == "STRING":
            return self._literal()
        if token.kind == "INTEGER":
            self.next()
            return Literal(token.text, datatype=XSD + "integer")
        if token.kind == "DECIMAL":
            self.next()
            return Literal(token.text, datatype=XSD + "decimal")
        if token.kind == "DOUBLE":
            self.next()
            return Literal(token.text, datatype=XSD + "double")
        if token.kind == "KEYWORD" and token.text in ("true", "false"):
            self.next()
            return Literal(token.text, datatype=XSD + "boolean")
        raise self.fail("expected object")

    def _literal(self) -> Literal:
        token = self.expect("STRING")
        value = _unescape(token.text[1:-1], token)
        nxt = self.peek()
        if nxt.kind == "LANGTAG":
            self.next()
            return Literal(value, language=nxt.text[1:])
        if nxt.kind == "HATHAT":
            self.next()
            datatype = self._iri_term()
            return Literal(value, datatype=datatype.value)
        return Literal(value)

    def _blank_property_list(self) -> BlankNode:
        self.expect("PUNCT", "[")
        node = BlankNode(f"genid{self._blank_counter}")
        self._blank_counter += 1
        if not (self.peek().kind == "PUNCT" and self.peek().text == "]"):
            self._predicate_object_list(node)
        self.expect("PUNCT", "]")
        return node

    def _iri_term(self) -> Iri:
        token = self.next()
        if token.kind == "IRIREF":
            return Iri(self._resolve(token.text[1:-1]))
        if token.kind == "PNAME":
            prefix, _, local = token.text.partition(":")
            if prefix not in self.prefixes:
                raise UndefinedPrefix(
                    f"undefined prefix {prefix + ':'!r}", token.line, token.column
                )
            return Iri(self.prefixes[prefix] + local)
        raise SyntaxError_(
            f"expected IRI, found {token.text!r}", token.line, token.column
        )

    def _resolve(self, iri: str) -> str:
        if re.match(r"^[A-Za-z][A-Za-z0-9+.-]*:", iri):
            return iri  # already absolute
        if self.base is None:
            return iri
        return urljoin(self.base, iri)


def parse_turtle(doc: str) -> TripleStore:
    """Parse a Turtle document into a TripleStore."""
    return _Parser(doc).parse()


def split_statements(doc: str) -> list[str]:
    """The document's statement texts (directives included).

    Each entry is the raw source span from a statement's first token to its
    terminating '.', so comments and whitespace *between* statements are
    dropped while everything inside a statement is preserved verbatim.
    Validates the document first; raises SyntaxError_ if it does not parse.
    """
    _Parser(doc).parse()
    statements: list[str] = []
    start: int | None = None
    depth = 0
    for token in _tokenize(doc):
        if token.kind == "EOF":
            break
        if start is None:
            start = token.start
        if token.kind == "PUNCT":
            if token.text == "[":
                depth += 1
            elif token.text == "]":
                depth -= 1
            elif token.text == "." and depth == 0:
                statements.append(doc[start : token.end])
                start = None
    return statements


# -- serialization ---------------------------------------------------------


def _escape(value: str) -> str:
    out = value.replace("\\", "\\\\").replace('"', '\\"')
    out = out.replace("\n", "\\n").replace("\r", "\\r").replace("\t", "\\t")
    return out


_LOCAL_RE = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_.-]*$|^$")


def _format_iri(iri: Iri, prefixes: dict[str, str]) -> str:
    best: tuple[str, str] | None = None
    for name, namespace in prefixes.items():
        if iri.value.startswith(namespace):
            if best is None or len(namespace) > len(best[1]):
                best = (name, namespace)
    if best is not None:
        local = iri.value[len(best[1]) :]
        if _LOCAL_RE.match(local) and not local.endswith("."):
            return f"{best[0]}:{local}"
    return f"<{iri.value}>"


def _format_term(term: Term, prefixes: dict[str, str]) -> str:
    if isinstance(term, Iri):
        return _format_iri(term, prefixes)
    if isinstance(term, BlankNode):
        return f"_:{term.label}"
    if term.language:
        return f'"{_escape(term.lexical)}"@{term.language}'
    if term.datatype:
        return f'"{_escape(term.lexical)}"^^{_format_iri(Iri(term.datatype), prefixes)}'
    return f'"{_escape(term.lexical)}"'


def _format_predicate(predicate: Iri, prefixes: dict[str, str]) -> str:
    if predicate.value == RDF_TYPE_IRI:
        return "a"
    return _format_iri(predicate, prefixes)


def serialize_turtle(store: TripleStore, prefixes: dict[str, str] | None = None) -> str:
    """Write a store as Turtle grouped by subject; parses back isomorphic."""
    prefixes = dict(prefixes or {})
    lines: list[str] = []
    for name in sorted(prefixes):
        lines.append(f"@prefix {name}: <{prefixes[name]}> .")
    if prefixes:
        lines.append("")

    by_subject: dict[Term, list[Triple]] = {}
    for triple in store:
        by_subject.setdefault(triple.subject, []).append(triple)

    def subject_key(term: Term) -> tuple:
        if isinstance(term, Iri):
            return (0, term.value)
        return (1, term.label)  # blank node

    def predicate_key(triple: Triple) -> tuple:
        # rdf:type first makes the output scannable
        first = 0 if triple.predicate.value == RDF_TYPE_IRI else 1
        return (first,) + triple.sort_key()[1:]

    for subject in sorted(by_subject, key=subject_key):
        triples = sorted(by_subject[subject], key=predicate_key)
        subject_text = _format_term(subject, prefixes)
        parts: list[str] = []
        index = 0
        while index < len(triples):
            predicate = triples[index].predicate
            group = [t for t in triples if t.predicate == predicate]
            objects = ", ".join(_format_term(t.object, prefixes) for t in group)
            parts.append(f"{_format_predicate(predicate, prefixes)} {objects}")
            index += len(group)
        body = " ;\n    ".join(parts)
        lines.append(f"{subject_text} {body} .")
    return "\n".join(lines) + "\n"
