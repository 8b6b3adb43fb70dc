"""Transmission-size comparison between plain Turtle and a CBOR wrapping.

The CBOR form is an array of the document's statement strings (directives
included). Inter-statement whitespace and comments are what the binary
form saves; the long IRIs and description strings inside each statement
are carried verbatim, so the savings stay small for verbose ontology text.
"""

from __future__ import annotations

from dataclasses import dataclass

from myno.model.cbor import encode_cbor
from myno.rdf.turtle import split_statements


@dataclass(frozen=True)
class SizeReport:
    plain_bytes: int
    cbor_bytes: int
    savings_percent: float


def size_report(turtle_doc: str) -> SizeReport:
    """Compare the document's UTF-8 size with its CBOR statement-array size."""
    statements = split_statements(turtle_doc)  # raises SyntaxError_ on bad input
    plain = len(turtle_doc.encode("utf-8"))
    cbor = len(encode_cbor(statements))
    savings = 0.0 if plain == 0 else round((1 - cbor / plain) * 100, 2)
    return SizeReport(plain_bytes=plain, cbor_bytes=cbor, savings_percent=savings)
