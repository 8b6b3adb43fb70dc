#!/usr/bin/env python3
"""Independent triple counter for the fixture descriptions.

Counts triples without parsing: in Turtle, every (verb, object) pair is one
triple, so for documents in the fixtures' subset

    triples = statements + non-empty-bracket-lists + non-trailing-semicolons
              + commas

where separators inside strings, IRI refs, and comments are ignored. This
is a character-level scan sharing no code or grammar machinery with the
package parser; its output is frozen into the test suite as the expected
fixture triple count.

Usage: python3 scripts/count_triples.py fixtures/plant-device.ttl
"""

import sys


def count_triples(doc: str) -> int:
    statements = 0
    directives = 0
    brackets = 0
    semicolons = 0
    commas = 0

    in_string = False
    in_iri = False
    in_comment = False
    escaped = False
    bracket_stack = []  # True once the open bracket has seen any content
    statement_tokens = 0  # rough count of non-separator chars since last '.'
    pending_semicolon = 0

    i = 0
    while i < len(doc):
        ch = doc[i]
        if in_comment:
            if ch == "\n":
                in_comment = False
            i += 1
            continue
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            i += 1
            continue
        if in_iri:
            if ch == ">":
                in_iri = False
            i += 1
            continue
        if ch == '"':
            in_string = True
            statement_tokens += 1
        elif ch == "<":
            in_iri = True
            statement_tokens += 1
        elif ch == "#":
            in_comment = True
        elif ch == "[":
            bracket_stack.append(False)
            pending_semicolon = 0
        elif ch == "]":
            had_content = bracket_stack.pop()
            if had_content:
                brackets += 1
            pending_semicolon = 0
        elif ch == ";":
            pending_semicolon += 1
        elif ch == ",":
            commas += 1
        elif ch == "." and (i + 1 == len(doc) or doc[i + 1] in " \t\r\n"):
            if statement_tokens:
                statements += 1
            statement_tokens = 0
            pending_semicolon = 0
        else:
            if not ch.isspace():
                statement_tokens += 1
                if bracket_stack:
                    bracket_stack[-1] = True
                # a semicolon followed by real content was non-trailing
                semicolons += pending_semicolon
                pending_semicolon = 0
        i += 1

    # directives (@prefix/@base) end in '.' but add no triples
    for line in doc.splitlines():
        stripped = line.strip()
        if stripped.startswith("@prefix") or stripped.startswith("@base"):
            directives += 1

    return statements - directives + brackets + semicolons + commas


def main() -> int:
    for path in sys.argv[1:]:
        with open(path, encoding="utf-8") as handle:
            doc = handle.read()
        print(f"{path}: {count_triples(doc)} triples")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
