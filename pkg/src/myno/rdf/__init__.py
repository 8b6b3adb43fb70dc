"""Minimal RDF core: terms, an indexed triple store, and a Turtle codec."""

from myno.rdf.terms import BlankNode, Iri, Literal, Term, Triple, TripleStore
from myno.rdf.turtle import SyntaxError_, UndefinedPrefix, parse_turtle, serialize_turtle
from myno.rdf.compare import isomorphic

XSD = "http://www.w3.org/2001/XMLSchema#"
RDF_TYPE = Iri("http://www.w3.org/1999/02/22-rdf-syntax-ns#type")
RDFS_LABEL = Iri("http://www.w3.org/2000/01/rdf-schema#label")

__all__ = [
    "BlankNode",
    "Iri",
    "Literal",
    "RDF_TYPE",
    "RDFS_LABEL",
    "SyntaxError_",
    "Term",
    "Triple",
    "TripleStore",
    "UndefinedPrefix",
    "XSD",
    "isomorphic",
    "parse_turtle",
    "serialize_turtle",
]
