"""Ambiguous-entity matching datasets: construction, splitting, statistics.

A query is emitted for an aligned source entity only when its name maps to
at least two target candidates and the aligned target is among them, so
every query has exactly one positive and at least one negative by
construction. Queries are keyed by IRI so dataset files are
self-contained.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import AlignmentSet, Kg
from .names import NameIndex

logger = logging.getLogger(__name__)

DEFAULT_RATIOS = (0.7, 0.1, 0.2)


@dataclass
class MatchQuery:
    """One ranking task: a source entity, its name, and same-name candidates."""

    query_iri: str
    query_name: str
    candidate_iris: list[str]
    positive_index: int

    @property
    def positive_iri(self) -> str:
        return self.candidate_iris[self.positive_index]

    @property
    def n_candidates(self) -> int:
        return len(self.candidate_iris)

    def validate(self) -> None:
        if len(self.candidate_iris) < 2:
            raise ValueError("a query needs at least one negative candidate")
        if not 0 <= self.positive_index < len(self.candidate_iris):
            raise ValueError("positive index out of range")
        if len(set(self.candidate_iris)) != len(self.candidate_iris):
            raise ValueError("duplicate candidate IRIs")


@dataclass
class MatchDataset:
    direction: str
    queries: list[MatchQuery]
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.queries)


@dataclass
class DatasetSplit:
    train: MatchDataset
    validation: MatchDataset
    test: MatchDataset
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    seed: int = 0

    @property
    def datasets(self) -> dict[str, MatchDataset]:
        return {"train": self.train, "validation": self.validation,
                "test": self.test}


def build_matching_dataset(
    source_kg: Kg,
    target_kg: Kg,
    source_names: dict[int, list[str]],
    target_index: NameIndex,
    alignment: AlignmentSet,
    direction: str = "source_to_target",
) -> MatchDataset:
    """Build the directional dataset from aligned entities and a name index.

    Source entities are visited in id order so emission is canonical. For
    each aligned entity the first name whose candidate lookup contains the
    aligned target and at least one other entity produces the query;
    candidate order is the index posting order. Entities that never qualify
    are counted by reason in the metadata.
    """
    queries: list[MatchQuery] = []
    skipped = {"no_name": 0, "unambiguous": 0, "positive_not_found": 0}
    for src_id in sorted(alignment.pairs):
        tgt_id = alignment.pairs[src_id]
        names = source_names.get(src_id)
        if not names:
            skipped["no_name"] += 1
            continue
        emitted = False
        positive_seen = False
        for name in names:
            candidates = target_index.lookup(name)
            if tgt_id not in candidates:
                continue
            positive_seen = True
            if len(candidates) < 2:
                continue
            queries.append(
                MatchQuery(
                    query_iri=source_kg.entities[src_id],
                    query_name=name,
                    candidate_iris=[target_kg.entities[c] for c in candidates],
                    positive_index=candidates.index(tgt_id),
                )
            )
            emitted = True
            break
        if not emitted:
            skipped["unambiguous" if positive_seen else "positive_not_found"] += 1
    metadata = {
        "direction": direction,
        "aligned_pairs": len(alignment),
        "alignment_conflicts": alignment.conflicts,
        "alignment_filtered": alignment.filtered,
        "queries": len(queries),
        "skipped": skipped,
        "normalization_policy": target_index.policy.descriptor,
    }
    return MatchDataset(direction=direction, queries=queries, metadata=metadata)


def split_sizes(n: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    """Train and test sizes floor toward zero; validation takes the remainder.

    This is the arithmetic that reproduces the published 70/10/20 counts
    for totals 376,065 and 329,320.
    """
    _check_ratios(ratios)
    n_train = int(n * ratios[0])
    n_test = int(n * ratios[2])
    n_valid = n - n_train - n_test
    return n_train, n_valid, n_test


def _check_ratios(ratios: tuple[float, float, float]) -> None:
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ValueError("ratios must be three non-negative numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")


def split_dataset(
    ds: MatchDataset,
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> DatasetSplit:
    """Shuffle with the given seed, then slice train/validation/test."""
    n_train, n_valid, n_test = split_sizes(len(ds.queries), ratios)
    order = np.random.default_rng(seed).permutation(len(ds.queries))
    shuffled = [ds.queries[i] for i in order]

    def part(queries: list[MatchQuery], tag: str) -> MatchDataset:
        meta = dict(ds.metadata)
        meta.update({"split": tag, "parent_queries": len(ds.queries),
                     "queries": len(queries), "split_seed": seed,
                     "ratios": list(ratios)})
        return MatchDataset(direction=ds.direction, queries=queries, metadata=meta)

    return DatasetSplit(
        train=part(shuffled[:n_train], "train"),
        validation=part(shuffled[n_train:n_train + n_valid], "validation"),
        test=part(shuffled[n_train + n_valid:], "test"),
        ratios=ratios,
        seed=seed,
    )


@dataclass
class DatasetStats:
    n_queries: int
    n_unique_names: int
    n_unique_candidates: int
    candidate_histogram: dict[int, int]
    mean_candidates: float
    per_type: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_queries": self.n_queries,
            "n_unique_names": self.n_unique_names,
            "n_unique_candidates": self.n_unique_candidates,
            "candidate_histogram": {str(k): v
                                    for k, v in sorted(self.candidate_histogram.items())},
            "mean_candidates": self.mean_candidates,
            "per_type": self.per_type,
        }


def dataset_stats(
    ds: MatchDataset,
    type_map: dict[str, list[str]] | None = None,
) -> DatasetStats:
    """Counts, candidate-size histogram, and optional per-type means."""
    names = set()
    candidates = set()
    histogram: dict[int, int] = {}
    sizes = []
    for q in ds.queries:
        names.add(q.query_name)
        candidates.update(q.candidate_iris)
        n = q.n_candidates
        histogram[n] = histogram.get(n, 0) + 1
        sizes.append(n)
    mean = float(np.mean(sizes)) if sizes else 0.0
    per_type: dict[str, dict] = {}
    if type_map is not None:
        groups: dict[str, list[int]] = {}
        for q in ds.queries:
            labels = type_map.get(q.query_iri) or ["unknown"]
            for label in labels:
                groups.setdefault(label, []).append(q.n_candidates)
        per_type = {
            label: {"n_queries": len(vals),
                    "mean_candidates": float(np.mean(vals))}
            for label, vals in sorted(groups.items())
        }
    return DatasetStats(
        n_queries=len(ds.queries),
        n_unique_names=len(names),
        n_unique_candidates=len(candidates),
        candidate_histogram=histogram,
        mean_candidates=mean,
        per_type=per_type,
    )


def subsample_training(
    split: DatasetSplit,
    fraction: float,
    seed: int = 0,
) -> DatasetSplit:
    """Sample a fraction of train+validation and re-split at the same ratio.

    The test set is untouched. The combined sample size floors
    ``fraction * (|train| + |validation|)``; the validation share of the
    sample floors as well, and training takes the remainder.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    combined = split.train.queries + split.validation.queries
    n_sample = int(fraction * len(combined))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(combined))
    sample = [combined[i] for i in order[:n_sample]]
    valid_share = split.ratios[1] / (split.ratios[0] + split.ratios[1])
    n_valid = int(n_sample * valid_share)
    n_train = n_sample - n_valid

    def part(queries: list[MatchQuery], tag: str, src: MatchDataset) -> MatchDataset:
        meta = dict(src.metadata)
        meta.update({"split": tag, "queries": len(queries),
                     "subsample_fraction": fraction, "subsample_seed": seed})
        return MatchDataset(direction=src.direction, queries=queries, metadata=meta)

    return DatasetSplit(
        train=part(sample[:n_train], "train", split.train),
        validation=part(sample[n_train:], "validation", split.validation),
        test=split.test,
        ratios=split.ratios,
        seed=seed,
    )


def write_dataset_tsv(ds: MatchDataset, path: str | Path) -> None:
    """One line per query: query_iri, name, positive_iri, comma-joined candidates."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for q in ds.queries:
            if any("," in c for c in q.candidate_iris):
                logger.warning(
                    "candidate IRI contains ',' and will not round-trip: %s",
                    q.query_iri,
                )
            cands = ",".join(q.candidate_iris)
            f.write(f"{q.query_iri}\t{q.query_name}\t{q.positive_iri}\t{cands}\n")


def read_dataset_tsv(path: str | Path, direction: str = "") -> MatchDataset:
    queries: list[MatchQuery] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 columns, got {len(parts)}")
            query_iri, name, positive_iri, cands = parts
            candidate_iris = cands.split(",")
            try:
                positive_index = candidate_iris.index(positive_iri)
            except ValueError:
                raise ValueError(
                    f"{path}:{lineno}: positive IRI not among candidates"
                ) from None
            queries.append(MatchQuery(query_iri, name, candidate_iris, positive_index))
    return MatchDataset(direction=direction, queries=queries,
                        metadata={"source_file": str(path)})


def write_split(split: DatasetSplit, out_dir: str | Path) -> dict[str, Path]:
    """Write train/valid/test TSVs plus a JSON metadata sidecar."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for tag, ds in (("train", split.train), ("valid", split.validation),
                    ("test", split.test)):
        p = out / f"{tag}.tsv"
        write_dataset_tsv(ds, p)
        paths[tag] = p
    meta = {
        "direction": split.train.direction,
        "ratios": list(split.ratios),
        "seed": split.seed,
        "counts": {"train": len(split.train), "validation": len(split.validation),
                   "test": len(split.test)},
        "parent": split.train.metadata,
    }
    meta_path = out / "metadata.json"
    with open(meta_path, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    paths["metadata"] = meta_path
    return paths


def read_split(in_dir: str | Path, direction: str = "") -> DatasetSplit:
    d = Path(in_dir)
    meta_path = d / "metadata.json"
    ratios = DEFAULT_RATIOS
    seed = 0
    if meta_path.exists():
        with open(meta_path, "r", encoding="utf-8") as f:
            meta = json.load(f)
        ratios = tuple(meta.get("ratios", DEFAULT_RATIOS))  # type: ignore[assignment]
        seed = meta.get("seed", 0)
        direction = direction or meta.get("direction", "")
    return DatasetSplit(
        train=read_dataset_tsv(d / "train.tsv", direction),
        validation=read_dataset_tsv(d / "valid.tsv", direction),
        test=read_dataset_tsv(d / "test.tsv", direction),
        ratios=ratios,  # type: ignore[arg-type]
        seed=seed,
    )
