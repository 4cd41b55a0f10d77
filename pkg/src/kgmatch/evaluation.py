"""Ranking evaluation: MRR, breakdowns, random baselines, training sweeps.

The overall MRR is a plain sum of reciprocal ranks divided by the query
count, in query order, so small fixtures can be checked for bit equality
against hand arithmetic. The analytic random baseline uses the uniform-
rank identity (mean reciprocal rank H(n)/n for n candidates); the Monte
Carlo mode actually samples shuffles by drawing a random key per candidate
and ranking the positive by key comparison.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dataset import DatasetSplit, MatchDataset, subsample_training
from .matcher import (
    MatcherModel,
    RankingResult,
    TrainConfig,
    expand_pairs,
    rank_candidates,
    train,
)
from .skipgram import EmbeddingTable

logger = logging.getLogger(__name__)

TypeMap = dict[str, list[str]]

Ranker = Callable[[object], RankingResult]


def reciprocal_rank(rank_of_positive: int) -> float:
    if rank_of_positive < 1:
        raise ValueError(f"rank must be >= 1, got {rank_of_positive}")
    return 1.0 / rank_of_positive


def harmonic(n: int) -> float:
    """H(n) = 1 + 1/2 + ... + 1/n, summed left to right."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return sum(1.0 / k for k in range(1, n + 1))


def default_bucket_edges(max_count: int) -> list[int]:
    """Power-of-two bucket edges [2, 4, 8, ...] covering max_count."""
    edges = [2]
    while edges[-1] <= max_count:
        edges.append(edges[-1] * 2)
    return edges


@dataclass
class BucketRow:
    lo: int
    hi: int  # exclusive
    n_queries: int
    mrr: float | None
    quartiles: tuple[float, float, float, float, float] | None  # min,q1,med,q3,max

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "n_queries": self.n_queries,
                "mrr": self.mrr,
                "quartiles": list(self.quartiles) if self.quartiles else None}


@dataclass
class TypeRow:
    label: str
    mrr: float
    n_queries: int
    mean_candidates: float

    def to_dict(self) -> dict:
        return {"label": self.label, "mrr": self.mrr,
                "n_queries": self.n_queries,
                "mean_candidates": self.mean_candidates}


@dataclass
class EvalReport:
    mrr: float
    n_queries: int
    rank_histogram: dict[int, int]
    per_bucket: list[BucketRow] = field(default_factory=list)
    per_type: list[TypeRow] | None = None
    types_disjoint: bool = True
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mrr": self.mrr,
            "n_queries": self.n_queries,
            "rank_histogram": {str(k): v
                               for k, v in sorted(self.rank_histogram.items())},
            "per_bucket": [b.to_dict() for b in self.per_bucket],
            "per_type": ([t.to_dict() for t in self.per_type]
                         if self.per_type is not None else None),
            "types_disjoint": self.types_disjoint,
            "metadata": self.metadata,
        }

    def save_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


def model_ranker(model: MatcherModel, source_table: EmbeddingTable,
                 target_table: EmbeddingTable) -> Ranker:
    return lambda q: rank_candidates(model, q, source_table, target_table)


def oracle_ranker(query) -> RankingResult:
    """Debug ranker that always puts the ground-truth positive first."""
    order = [query.positive_index] + [
        i for i in range(query.n_candidates) if i != query.positive_index
    ]
    ordered = [(query.candidate_iris[i], 1.0 if i == query.positive_index else 0.0)
               for i in order]
    return RankingResult(ordered=ordered, positive_rank=1)


def random_ranker(seed: int) -> Ranker:
    """Debug ranker assigning a fresh random score to every candidate."""
    rng = np.random.default_rng(seed)

    def rank(query) -> RankingResult:
        scores = rng.random(query.n_candidates)
        order = sorted(range(query.n_candidates), key=lambda i: -scores[i])
        ordered = [(query.candidate_iris[i], float(scores[i])) for i in order]
        p = scores[query.positive_index]
        rank_pos = 1 + int(np.sum(scores > p)) + int(
            np.sum(scores[:query.positive_index] == p))
        return RankingResult(ordered=ordered, positive_rank=rank_pos)

    return rank


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def evaluate_with_ranker(
    ranker: Ranker,
    ds: MatchDataset,
    type_map: TypeMap | None = None,
    bucket_edges: Sequence[int] | None = None,
    metadata: dict | None = None,
) -> EvalReport:
    """Rank every query and aggregate MRR plus the requested breakdowns."""
    if not ds.queries:
        raise ValueError("dataset is empty")
    ranks = [ranker(q).positive_rank for q in ds.queries]
    rr = [reciprocal_rank(r) for r in ranks]
    histogram: dict[int, int] = {}
    for r in ranks:
        histogram[r] = histogram.get(r, 0) + 1

    report = EvalReport(
        mrr=_mean(rr),
        n_queries=len(ds.queries),
        rank_histogram=histogram,
        metadata=metadata or {},
    )
    report.per_bucket = _bucket_rows(ds, rr, bucket_edges)
    if type_map is not None:
        report.per_type, report.types_disjoint = _type_rows(ds, rr, type_map)
    return report


def evaluate(
    model: MatcherModel,
    ds: MatchDataset,
    source_table: EmbeddingTable,
    target_table: EmbeddingTable,
    type_map: TypeMap | None = None,
    bucket_edges: Sequence[int] | None = None,
    metadata: dict | None = None,
) -> EvalReport:
    meta = {"model_kind": model.kind, "direction": ds.direction}
    meta.update(metadata or {})
    return evaluate_with_ranker(
        model_ranker(model, source_table, target_table), ds,
        type_map=type_map, bucket_edges=bucket_edges, metadata=meta,
    )


def _bucket_rows(ds: MatchDataset, rr: list[float],
                 edges: Sequence[int] | None) -> list[BucketRow]:
    max_count = max(q.n_candidates for q in ds.queries)
    if edges is None:
        edges = default_bucket_edges(max_count)
    else:
        edges = list(edges)
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("bucket edges must be strictly increasing")
        if edges[-1] <= max_count:
            edges.append(max_count + 1)
    rows = []
    for lo, hi in zip(edges, edges[1:]):
        vals = [rr[i] for i, q in enumerate(ds.queries)
                if lo <= q.n_candidates < hi]
        if vals:
            q = np.percentile(vals, [0, 25, 50, 75, 100])
            rows.append(BucketRow(lo, hi, len(vals), _mean(vals),
                                  tuple(float(x) for x in q)))
        else:
            rows.append(BucketRow(lo, hi, 0, None, None))
    return rows


def _type_rows(ds: MatchDataset, rr: list[float],
               type_map: TypeMap) -> tuple[list[TypeRow], bool]:
    groups: dict[str, list[int]] = {}
    disjoint = True
    for i, q in enumerate(ds.queries):
        labels = type_map.get(q.query_iri) or ["unknown"]
        if len(labels) > 1:
            disjoint = False
        for label in labels:
            groups.setdefault(label, []).append(i)
    rows = [
        TypeRow(
            label=label,
            mrr=_mean([rr[i] for i in idxs]),
            n_queries=len(idxs),
            mean_candidates=_mean([float(ds.queries[i].n_candidates)
                                   for i in idxs]),
        )
        for label, idxs in sorted(groups.items())
    ]
    return rows, disjoint


def mrr_by_candidate_bucket(
    model: MatcherModel,
    ds: MatchDataset,
    bucket_edges: Sequence[int],
    source_table: EmbeddingTable,
    target_table: EmbeddingTable,
) -> list[BucketRow]:
    report = evaluate(model, ds, source_table, target_table,
                      bucket_edges=bucket_edges)
    return report.per_bucket


def mrr_by_type(
    model: MatcherModel,
    ds: MatchDataset,
    type_map: TypeMap,
    source_table: EmbeddingTable,
    target_table: EmbeddingTable,
) -> list[TypeRow]:
    report = evaluate(model, ds, source_table, target_table, type_map=type_map)
    assert report.per_type is not None
    return report.per_type


def random_baseline_mrr(
    ds: MatchDataset,
    mode: str = "analytic",
    trials: int = 100_000,
    seed: int = 0,
) -> float:
    """Expected MRR when the positive lands uniformly at random.

    Analytic mode averages H(n)/n per query. Monte Carlo mode samples
    ``trials`` independent shuffles per query by drawing uniform keys.
    """
    if not ds.queries:
        raise ValueError("dataset is empty")
    if mode == "analytic":
        return _mean([harmonic(q.n_candidates) / q.n_candidates
                      for q in ds.queries])
    if mode == "monte_carlo":
        if trials < 1:
            raise ValueError("trials must be >= 1")
        rng = np.random.default_rng(seed)
        total = 0.0
        for q in ds.queries:
            keys = rng.random((trials, q.n_candidates))
            pos = keys[:, q.positive_index][:, None]
            ranks = 1 + (keys < pos).sum(axis=1)
            total += float((1.0 / ranks).mean())
        return total / len(ds.queries)
    raise ValueError(f"unknown mode {mode!r}")


def rank2_same_type_fraction(
    model: MatcherModel,
    ds: MatchDataset,
    type_map: TypeMap,
    source_table: EmbeddingTable,
    target_table: EmbeddingTable,
) -> tuple[float | None, int]:
    """Among positives ranked exactly second, how often the winner shares a type."""
    ranker = model_ranker(model, source_table, target_table)
    cases = 0
    same = 0
    for q in ds.queries:
        result = ranker(q)
        if result.positive_rank != 2:
            continue
        cases += 1
        winner_iri = result.ordered[0][0]
        winner_types = set(type_map.get(winner_iri, []))
        positive_types = set(type_map.get(q.positive_iri, []))
        if winner_types & positive_types:
            same += 1
    if cases == 0:
        return None, 0
    return same / cases, cases


@dataclass
class SweepPoint:
    fraction_percent: float
    values: list[float]
    mean: float
    ci_low: float
    ci_high: float

    def to_dict(self) -> dict:
        return {"fraction_percent": self.fraction_percent, "values": self.values,
                "mean": self.mean, "ci_low": self.ci_low, "ci_high": self.ci_high}


def default_repeats(fractions: Sequence[float]) -> dict[float, int]:
    """10 repeats for the four smallest fractions, 5 for the rest."""
    smallest = set(sorted(fractions)[:4])
    return {f: (10 if f in smallest else 5) for f in fractions}


def _confidence_interval(values: list[float]) -> tuple[float, float]:
    mean = _mean(values)
    if len(values) < 2:
        return mean, mean
    std = float(np.std(values, ddof=1))
    half = 1.96 * std / np.sqrt(len(values))
    return mean - half, mean + half


def training_size_sweep(
    split: DatasetSplit,
    source_table: EmbeddingTable,
    target_table: EmbeddingTable,
    train_cfg: TrainConfig,
    fractions_percent: Sequence[float],
    repeats: dict[float, int] | int | None = None,
    kind: str = "mlp",
    hidden: int = 64,
    seed: int = 0,
) -> list[SweepPoint]:
    """Validation MRR versus training-set size, with 95% normal CIs.

    For each fraction (in percent of train+validation) and repeat, the
    split is subsampled with a fresh derived seed, the matcher is retrained
    from scratch, and MRR is measured on the subsample's validation set.
    """
    if any(not 0 < f <= 100 for f in fractions_percent):
        raise ValueError("fractions must be in (0, 100]")
    if repeats is None:
        repeat_map = default_repeats(fractions_percent)
    elif isinstance(repeats, int):
        repeat_map = {f: repeats for f in fractions_percent}
    else:
        repeat_map = repeats
    points = []
    for frac in fractions_percent:
        values = []
        for rep in range(repeat_map[frac]):
            cell_seed = derive_seed(seed, f"sweep:{frac}:{rep}")
            sub = subsample_training(split, frac / 100.0, seed=cell_seed)
            if not sub.train.queries or not sub.validation.queries:
                raise ValueError(
                    f"fraction {frac}% leaves an empty train or validation set")
            cfg = TrainConfig(
                learning_rate=train_cfg.learning_rate,
                batch_size=train_cfg.batch_size,
                epochs=train_cfg.epochs,
                beta1=train_cfg.beta1,
                beta2=train_cfg.beta2,
                eps=train_cfg.eps,
                patience=train_cfg.patience,
                seed=cell_seed,
            )
            model, history = train(expand_pairs(sub.train), source_table,
                                   target_table, cfg, sub.validation,
                                   kind=kind, hidden=hidden)
            values.append(max(h["validation_mrr"] for h in history))
        lo, hi = _confidence_interval(values)
        points.append(SweepPoint(frac, values, _mean(values), lo, hi))
        logger.info("sweep %.3f%%: mean MRR %.4f [%.4f, %.4f] over %d runs",
                    frac, points[-1].mean, lo, hi, len(values))
    return points


def save_sweep_csv(points: list[SweepPoint], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["fraction_percent", "mean_mrr", "ci_low", "ci_high",
                         "repeats", "values"])
        for p in points:
            writer.writerow([p.fraction_percent, p.mean, p.ci_low, p.ci_high,
                             len(p.values),
                             ";".join(f"{v:.6f}" for v in p.values)])


def save_report_csv(report: EvalReport, path: str | Path) -> None:
    """Bucket and type tables as CSV for plotting."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["section", "key", "mrr", "n_queries", "extra"])
        writer.writerow(["overall", "", f"{report.mrr:.6f}", report.n_queries, ""])
        for b in report.per_bucket:
            writer.writerow(["bucket", f"[{b.lo},{b.hi})",
                             "" if b.mrr is None else f"{b.mrr:.6f}",
                             b.n_queries,
                             "" if b.quartiles is None else
                             ";".join(f"{x:.6f}" for x in b.quartiles)])
        for t in report.per_type or []:
            writer.writerow(["type", t.label, f"{t.mrr:.6f}", t.n_queries,
                             f"mean_candidates={t.mean_candidates:.3f}"])


def load_type_map(path: str | Path) -> TypeMap:
    """TSV: entity IRI, tab, comma-separated type labels."""
    out: TypeMap = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[1]:
                raise ValueError(f"{path}:{lineno}: expected 'iri<TAB>labels'")
            out[parts[0]] = [l for l in parts[1].split(",") if l]
    return out


def derive_seed(global_seed: int, stage: str) -> int:
    """Stable fan-out of one global seed into per-stage seeds."""
    digest = hashlib.blake2b(f"{global_seed}:{stage}".encode("utf-8"),
                             digest_size=8).digest()
    return int.from_bytes(digest, "little") & 0x7FFFFFFF
