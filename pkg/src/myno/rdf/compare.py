"""Graph isomorphism up to blank-node relabelling.

Backtracking bijection search over blank nodes, pruned by a structural
signature (how each node is used, ignoring neighbour identities). Intended
for description-sized graphs with a handful of blank nodes, not for
adversarial inputs.
"""

from __future__ import annotations

from myno.rdf.terms import BlankNode, Term, Triple, TripleStore


def _ground(term: Term) -> bool:
    return not isinstance(term, BlankNode)


def _signature(store: TripleStore, node: BlankNode) -> tuple:
    as_subject = []
    for t in store.query(subject=node):
        obj = t.object if _ground(t.object) else BlankNode("*")
        as_subject.append((t.predicate, obj))
    as_object = []
    for t in store:
        if t.object == node:
            subj = t.subject if _ground(t.subject) else BlankNode("*")
            as_object.append((subj, t.predicate))
    return (tuple(sorted(as_subject, key=str)), tuple(sorted(as_object, key=str)))


def _rename(triple: Triple, mapping: dict[BlankNode, BlankNode]) -> Triple:
    subject = mapping.get(triple.subject, triple.subject) if isinstance(
        triple.subject, BlankNode
    ) else triple.subject
    obj = mapping.get(triple.object, triple.object) if isinstance(
        triple.object, BlankNode
    ) else triple.object
    return Triple(subject, triple.predicate, obj)


def isomorphic(a: TripleStore, b: TripleStore) -> bool:
    """True iff some blank-node bijection maps ``a`` exactly onto ``b``."""
    if len(a) != len(b):
        return False
    nodes_a = sorted(
        {t for triple in a for t in (triple.subject, triple.object) if isinstance(t, BlankNode)},
        key=lambda n: n.label,
    )
    nodes_b = sorted(
        {t for triple in b for t in (triple.subject, triple.object) if isinstance(t, BlankNode)},
        key=lambda n: n.label,
    )
    if len(nodes_a) != len(nodes_b):
        return False

    ground_a = {t for t in a if _ground(t.subject) and _ground(t.object)}
    ground_b = {t for t in b if _ground(t.subject) and _ground(t.object)}
    if ground_a != ground_b:
        return False

    sig_a = {n: _signature(a, n) for n in nodes_a}
    sig_b = {n: _signature(b, n) for n in nodes_b}
    if sorted(map(str, sig_a.values())) != sorted(map(str, sig_b.values())):
        return False

    candidates = {n: [m for m in nodes_b if sig_b[m] == sig_a[n]] for n in nodes_a}
    triples_b = set(b)
    order = sorted(nodes_a, key=lambda n: len(candidates[n]))

    def assign(index: int, mapping: dict[BlankNode, BlankNode], used: set[BlankNode]) -> bool:
        if index == len(order):
            return {_rename(t, mapping) for t in a} == triples_b
        node = order[index]
        for target in candidates[node]:
            if target in used:
                continue
            mapping[node] = target
            used.add(target)
            if assign(index + 1, mapping, used):
                return True
            del mapping[node]
            used.discard(target)
        return False

    return assign(0, {}, set())
