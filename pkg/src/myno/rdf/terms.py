"""RDF terms, triples, and an indexed in-memory store."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator


@dataclass(frozen=True)
class Iri:
    value: str

    def __str__(self) -> str:
        return f"<{self.value}>"


@dataclass(frozen=True)
class Literal:
    lexical: str
    datatype: str | None = None
    language: str | None = None

    def __post_init__(self):
        if self.datatype is not None and self.language is not None:
            raise ValueError("literal cannot carry both datatype and language tag")

    def __str__(self) -> str:
        if self.language:
            return f'"{self.lexical}"@{self.language}'
        if self.datatype:
            return f'"{self.lexical}"^^<{self.datatype}>'
        return f'"{self.lexical}"'


@dataclass(frozen=True)
class BlankNode:
    label: str

    def __str__(self) -> str:
        return f"_:{self.label}"


Term = Iri | Literal | BlankNode


def _sort_key(term: Term) -> tuple:
    if isinstance(term, Iri):
        return (0, term.value, "", "")
    if isinstance(term, BlankNode):
        return (1, term.label, "", "")
    return (2, term.lexical, term.datatype or "", term.language or "")


@dataclass(frozen=True)
class Triple:
    subject: Term
    predicate: Iri
    object: Term

    def __post_init__(self):
        if isinstance(self.subject, Literal):
            raise ValueError("literal cannot be a triple subject")
        if not isinstance(self.predicate, Iri):
            raise ValueError("predicate must be an IRI")

    def sort_key(self) -> tuple:
        return (_sort_key(self.subject), _sort_key(self.predicate), _sort_key(self.object))


class TripleStore:
    """Set of triples with subject / predicate / (subject, predicate) indexes."""

    def __init__(self, triples: Iterable[Triple] = ()):
        self._triples: set[Triple] = set()
        self._by_subject: dict[Term, set[Triple]] = {}
        self._by_predicate: dict[Iri, set[Triple]] = {}
        self._by_sp: dict[tuple[Term, Iri], set[Triple]] = {}
        for t in triples:
            self.add(t)

    def add(self, triple: Triple) -> None:
        if triple in self._triples:
            return
        self._triples.add(triple)
        self._by_subject.setdefault(triple.subject, set()).add(triple)
        self._by_predicate.setdefault(triple.predicate, set()).add(triple)
        self._by_sp.setdefault((triple.subject, triple.predicate), set()).add(triple)

    def discard(self, triple: Triple) -> None:
        if triple not in self._triples:
            return
        self._triples.discard(triple)
        self._by_subject[triple.subject].discard(triple)
        self._by_predicate[triple.predicate].discard(triple)
        self._by_sp[(triple.subject, triple.predicate)].discard(triple)

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(self._triples)

    def __contains__(self, triple: Triple) -> bool:
        return triple in self._triples

    def query(
        self,
        subject: Term | None = None,
        predicate: Iri | None = None,
        obj: Term | None = None,
    ) -> list[Triple]:
        """All triples matching the bound positions, deterministically ordered."""
        if subject is not None and predicate is not None:
            candidates = self._by_sp.get((subject, predicate), set())
        elif subject is not None:
            candidates = self._by_subject.get(subject, set())
        elif predicate is not None:
            candidates = self._by_predicate.get(predicate, set())
        else:
            candidates = self._triples
        out = [t for t in candidates if obj is None or t.object == obj]
        out.sort(key=Triple.sort_key)
        return out

    # convenience lookups used by the extraction layer

    def objects(self, subject: Term, predicate: Iri) -> list[Term]:
        return [t.object for t in self.query(subject, predicate)]

    def value(self, subject: Term, predicate: Iri) -> Term | None:
        found = self.objects(subject, predicate)
        return found[0] if found else None

    def subjects_with(self, predicate: Iri, obj: Term) -> list[Term]:
        return sorted(
            {t.subject for t in self.query(None, predicate, obj)}, key=_sort_key
        )

    def sorted_triples(self) -> list[Triple]:
        return sorted(self._triples, key=Triple.sort_key)
