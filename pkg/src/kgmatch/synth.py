"""Synthetic twin-graph benchmark generator.

One random base multigraph is copied into disjoint source/target IRI
namespaces; each copy drops every relational edge independently at the
noise rate. Every entity keeps exactly one name literal in both copies,
and entities are grouped so that name-collision group sizes s are drawn
with probability proportional to s^-(zipf_exponent + 1), which makes the
number of queries with c candidates fall off like c^-zipf_exponent. The
identity correspondence is emitted as owl:sameAs triples and is the
ground-truth alignment.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import OWL_SAMEAS
from .ntriples import Literal, Triple, write_ntriples

logger = logging.getLogger(__name__)

SOURCE_NS = "http://example.org/source/"
TARGET_NS = "http://example.org/target/"
SOURCE_NAME_PREDICATE = "http://xmlns.com/foaf/0.1/name"
TARGET_NAME_PREDICATE = "http://www.w3.org/2000/01/rdf-schema#label"


@dataclass(frozen=True)
class SyntheticSpec:
    n_entities: int = 1000
    mean_out_degree: float = 4.0
    n_predicates: int = 8
    zipf_exponent: float = 1.0
    max_group: int = 8
    min_group: int = 1
    noise_rate: float = 0.0
    seed: int = 0
    n_types: int = 0  # > 0 also emits a per-entity type map

    def __post_init__(self) -> None:
        if self.n_entities < 1 or self.n_predicates < 1 or self.max_group < 1:
            raise ValueError("counts must be >= 1")
        if self.mean_out_degree < 1:
            raise ValueError("mean_out_degree must be >= 1")
        if not 1 <= self.min_group <= self.max_group:
            raise ValueError("need 1 <= min_group <= max_group")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ValueError("noise_rate must be in [0, 1)")


@dataclass
class SyntheticData:
    spec: SyntheticSpec
    source_triples: list[Triple]
    target_triples: list[Triple]
    alignment_triples: list[Triple]
    names: list[str]             # per base entity
    types: list[str] | None      # per base entity, when n_types > 0

    @property
    def n_entities(self) -> int:
        return self.spec.n_entities


def _sample_group_sizes(rng: np.random.Generator, n: int, exponent: float,
                        lo: int, hi: int) -> list[int]:
    sizes = np.arange(lo, hi + 1, dtype=np.float64)
    probs = sizes ** -(exponent + 1.0)
    probs /= probs.sum()
    out: list[int] = []
    covered = 0
    while covered < n:
        s = int(rng.choice(sizes, p=probs))
        s = min(s, n - covered)
        out.append(s)
        covered += s
    return out


def build_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Generate the twin graphs in memory; deterministic given the spec."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_entities
    m = int(round(n * spec.mean_out_degree))
    src = rng.integers(0, n, m)
    pred = rng.integers(0, spec.n_predicates, m)
    dst = rng.integers(0, n, m)

    group_sizes = _sample_group_sizes(rng, n, spec.zipf_exponent,
                                      spec.min_group, spec.max_group)
    names: list[str] = []
    for gi, size in enumerate(group_sizes):
        names.extend([f"name {gi:06d}"] * size)

    types: list[str] | None = None
    if spec.n_types > 0:
        types = [f"type_{t}" for t in rng.integers(0, spec.n_types, n)]

    keep = [rng.random(m) >= spec.noise_rate for _ in range(2)]

    copies: list[list[Triple]] = []
    for which, (ns, name_pred, pfx) in enumerate(
        ((SOURCE_NS, SOURCE_NAME_PREDICATE, "s"),
         (TARGET_NS, TARGET_NAME_PREDICATE, "t"))
    ):
        ent = [f"{ns}e{i:05d}" for i in range(n)]
        preds = [f"{ns}vocab/p{j}" for j in range(spec.n_predicates)]
        triples = [Triple(ent[i], name_pred, Literal(names[i], lang="en"))
                   for i in range(n)]
        for e in range(m):
            if keep[which][e]:
                triples.append(Triple(ent[src[e]], preds[pred[e]], ent[dst[e]]))
        copies.append(triples)

    alignment = [
        Triple(f"{SOURCE_NS}e{i:05d}", OWL_SAMEAS, f"{TARGET_NS}e{i:05d}")
        for i in range(n)
    ]
    return SyntheticData(spec, copies[0], copies[1], alignment, names, types)


def write_synthetic(data: SyntheticData, out_dir: str | Path) -> dict[str, Path]:
    """Write source.nt, target.nt, alignment.nt (and types.tsv when present)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "source": out / "source.nt",
        "target": out / "target.nt",
        "alignment": out / "alignment.nt",
    }
    write_ntriples(data.source_triples, paths["source"])
    write_ntriples(data.target_triples, paths["target"])
    write_ntriples(data.alignment_triples, paths["alignment"])
    if data.types is not None:
        paths["types"] = out / "types.tsv"
        with open(paths["types"], "w", encoding="utf-8", newline="\n") as f:
            for i, label in enumerate(data.types):
                # one row per copy so the map covers queries in either direction
                f.write(f"{SOURCE_NS}e{i:05d}\t{label}\n")
                f.write(f"{TARGET_NS}e{i:05d}\t{label}\n")
    logger.info("synthetic benchmark written to %s (%d entities, %d groups)",
                out, data.n_entities, len(set(data.names)))
    return paths
