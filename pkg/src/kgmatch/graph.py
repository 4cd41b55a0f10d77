"""Interned in-memory knowledge graph and fact extraction.

Entities and predicates are interned to dense integer ids in first-seen
order, so construction is deterministic given input order. The graph is a
multigraph: duplicate triples are stored twice and therefore count twice
in walk probabilities. Literals never become nodes; they live in a side
store per subject entity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from .ntriples import Literal, Triple

logger = logging.getLogger(__name__)

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
OWL_SAMEAS = "http://www.w3.org/2002/07/owl#sameAs"


class Kg:
    """Directed labeled multigraph over interned entity and predicate ids.

    Immutable by convention after :func:`build_graph` returns; safe for
    concurrent reads.
    """

    def __init__(self) -> None:
        self.entities: list[str] = []
        self.entity_ids: dict[str, int] = {}
        self.predicates: list[str] = []
        self.predicate_ids: dict[str, int] = {}
        # per-entity [(predicate id, object entity id)]
        self.adjacency: list[list[tuple[int, int]]] = []
        # per-entity [(predicate id, Literal)]
        self.literals: list[list[tuple[int, Literal]]] = []

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_predicates(self) -> int:
        return len(self.predicates)

    @property
    def n_triples(self) -> int:
        return sum(len(a) for a in self.adjacency) + sum(
            len(l) for l in self.literals
        )

    def intern_entity(self, iri: str) -> int:
        eid = self.entity_ids.get(iri)
        if eid is None:
            eid = len(self.entities)
            self.entity_ids[iri] = eid
            self.entities.append(iri)
            self.adjacency.append([])
            self.literals.append([])
        return eid

    def intern_predicate(self, iri: str) -> int:
        pid = self.predicate_ids.get(iri)
        if pid is None:
            pid = len(self.predicates)
            self.predicate_ids[iri] = pid
            self.predicates.append(iri)
        return pid

    def add(self, triple: Triple) -> None:
        sid = self.intern_entity(triple.subject)
        pid = self.intern_predicate(triple.predicate)
        if isinstance(triple.object, Literal):
            self.literals[sid].append((pid, triple.object))
        else:
            oid = self.intern_entity(triple.object)
            self.adjacency[sid].append((pid, oid))

    def out_edges(self, eid: int) -> list[tuple[int, int]]:
        return self.adjacency[eid]

    def has_edge(self, sid: int, pid: int, oid: int) -> bool:
        return (pid, oid) in self.adjacency[sid]

    def types_of(self, eid: int) -> list[int]:
        """Object ids of this entity's rdf:type edges (empty if untyped)."""
        tp = self.predicate_ids.get(RDF_TYPE)
        if tp is None:
            return []
        return [o for (p, o) in self.adjacency[eid] if p == tp]

    def triples(self) -> Iterator[Triple]:
        """Canonical triple stream: entities in id order, edges then literals."""
        for eid in range(self.n_entities):
            subj = self.entities[eid]
            for pid, oid in self.adjacency[eid]:
                yield Triple(subj, self.predicates[pid], self.entities[oid])
            for pid, lit in self.literals[eid]:
                yield Triple(subj, self.predicates[pid], lit)

    def id_triples(self) -> Iterator[tuple[int, int, int]]:
        """Relational triples as id tuples (literal edges excluded)."""
        for eid in range(self.n_entities):
            for pid, oid in self.adjacency[eid]:
                yield (eid, pid, oid)


def build_graph(
    triples: Iterable[Triple],
    keep_predicates: set[str] | None = None,
    drop_predicates: set[str] | None = None,
) -> Kg:
    """Intern a triple stream into a Kg, optionally filtering by predicate.

    ``keep_predicates`` and ``drop_predicates`` are mutually exclusive IRI
    sets applied before interning.
    """
    if keep_predicates is not None and drop_predicates is not None:
        raise ValueError("keep_predicates and drop_predicates are mutually exclusive")
    kg = Kg()
    for t in triples:
        if keep_predicates is not None and t.predicate not in keep_predicates:
            continue
        if drop_predicates is not None and t.predicate in drop_predicates:
            continue
        kg.add(t)
    return kg


def extract_names(kg: Kg, name_predicates: Iterable[str]) -> dict[int, list[str]]:
    """All literal values of the given predicates, per entity, in input order.

    Entities without any name literal are omitted. IRI-valued "name" edges
    are ignored: names are literals by contract.
    """
    pred_list = list(name_predicates)
    if not pred_list:
        raise ValueError("name_predicates must be non-empty")
    preds = {kg.predicate_ids[p] for p in pred_list if p in kg.predicate_ids}
    names: dict[int, list[str]] = {}
    for eid in range(kg.n_entities):
        vals = [lit.text for (pid, lit) in kg.literals[eid] if pid in preds]
        if vals:
            names[eid] = vals
    return names


@dataclass
class DisambiguationFilter:
    """Marks entities that stand for disambiguation pages.

    An entity matches when it has an rdf:type edge to ``class_iri`` in its
    own graph, or when its IRI contains ``iri_substring``. Either test may
    be disabled by leaving the field None. The mechanism is pluggable via
    ``extra``: any (kg, entity id) predicate.
    """

    class_iri: str | None = None
    iri_substring: str | None = None
    extra: Callable[[Kg, int], bool] | None = None

    def matches(self, kg: Kg, eid: int) -> bool:
        if self.class_iri is not None:
            cid = kg.entity_ids.get(self.class_iri)
            if cid is not None and cid in kg.types_of(eid):
                return True
        if self.iri_substring is not None and self.iri_substring in kg.entities[eid]:
            return True
        if self.extra is not None and self.extra(kg, eid):
            return True
        return False


@dataclass
class AlignmentSet:
    """Query-to-target ground-truth pairs; each query appears at most once."""

    pairs: dict[int, int] = field(default_factory=dict)
    conflicts: int = 0
    filtered: int = 0

    def __len__(self) -> int:
        return len(self.pairs)

    def items(self) -> Iterator[tuple[int, int]]:
        return iter(self.pairs.items())


def extract_alignment(
    triples: Iterable[Triple],
    subject_kg: Kg,
    object_kg: Kg,
    predicate: str = OWL_SAMEAS,
    disambiguation: DisambiguationFilter | None = None,
    swap: bool = False,
) -> AlignmentSet:
    """Collect alignment pairs from sameAs-style triples.

    Pairs are restricted to entities present in both graphs; pairs whose
    subject or object matches the disambiguation filter are removed. With
    ``swap=False`` the returned pairs map subject entity -> object entity;
    with ``swap=True`` the orientation is reversed (object as query). If a
    query entity maps to multiple targets, the first pair wins and the
    conflict is logged.
    """
    aset = AlignmentSet()
    for t in triples:
        if t.predicate != predicate or isinstance(t.object, Literal):
            continue
        sid = subject_kg.entity_ids.get(t.subject)
        oid = object_kg.entity_ids.get(t.object)
        if sid is None or oid is None:
            continue
        if disambiguation is not None and (
            disambiguation.matches(subject_kg, sid)
            or disambiguation.matches(object_kg, oid)
        ):
            aset.filtered += 1
            continue
        query, target = (oid, sid) if swap else (sid, oid)
        if query in aset.pairs:
            aset.conflicts += 1
            logger.warning(
                "alignment conflict: query entity %d already mapped, "
                "keeping first pair",
                query,
            )
            continue
        aset.pairs[query] = target
    return aset
