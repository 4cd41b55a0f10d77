"""Command-line pipeline: synth, ingest, build-dataset, train, evaluate, sweep.

Progress and statistics go to stderr; machine-readable artifacts go to
files under the configured work directory. Exit codes: 0 success,
1 usage or configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dataset as ds_mod
from . import evaluation as eval_mod
from . import matcher as matcher_mod
from .config import (
    ConfigError,
    DataError,
    PipelineConfig,
    load_config,
)
from .evaluation import derive_seed
from .graph import DisambiguationFilter, Kg, build_graph, extract_alignment, extract_names
from .names import NormalizationPolicy, build_index, dump_index_tsv, load_index, save_index
from .ntriples import ParseStats, parse_ntriples, write_ntriples
from .skipgram import EmbeddingTable, SkipgramConfig, train_skipgram_with_history
from .synth import SyntheticSpec, build_synthetic, write_synthetic
from .walks import WalkConfig, generate_walks

logger = logging.getLogger("kgmatch")

DIRECTIONS = ("st", "ts")


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract reserves 2 for data errors
    def error(self, message: str):  # noqa: D102
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _require_file(path: str | Path, what: str) -> Path:
    p = Path(path) if path else None
    if p is None or str(p) == "" or not p.exists():
        raise DataError(f"missing {what}: {p}")
    return p


def _graph_tag(which: str) -> str:
    if which not in ("source", "target"):
        raise ConfigError(f"graph must be 'source' or 'target', got {which!r}")
    return which


def _snapshot_path(cfg: PipelineConfig, which: str) -> Path:
    return cfg.workdir / f"{which}.kg.nt"


def _index_path(cfg: PipelineConfig, which: str) -> Path:
    return cfg.workdir / f"{which}.names.idx"


def _vectors_path(cfg: PipelineConfig, which: str) -> Path:
    return cfg.workdir / f"{which}.vec.txt"


def _dataset_dir(cfg: PipelineConfig, direction: str) -> Path:
    return cfg.workdir / "dataset" / direction


def _model_path(cfg: PipelineConfig, direction: str, kind: str) -> Path:
    return cfg.workdir / f"matcher.{direction}.{kind}.npz"


def _load_kg(path: Path) -> Kg:
    stats = ParseStats()
    kg = build_graph(parse_ntriples(path, stats=stats))
    if stats.malformed:
        logger.warning("%s: %d malformed lines skipped", path, stats.malformed)
    return kg


def _name_predicates(cfg: PipelineConfig, which: str) -> list[str]:
    return (cfg.ingest.source_name_predicates if which == "source"
            else cfg.ingest.target_name_predicates)


def _policy(cfg: PipelineConfig) -> NormalizationPolicy:
    return NormalizationPolicy(casefold=cfg.ingest.casefold)


def _disambiguation(cfg: PipelineConfig) -> DisambiguationFilter | None:
    class_iri = cfg.ingest.disambiguation_class or None
    substring = cfg.ingest.disambiguation_substring or None
    if class_iri is None and substring is None:
        return None
    return DisambiguationFilter(class_iri=class_iri, iri_substring=substring)


def _direction_roles(cfg: PipelineConfig, direction: str) -> tuple[str, str]:
    """(query graph, candidate graph) for a dataset direction."""
    if direction not in DIRECTIONS:
        raise ConfigError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    return ("source", "target") if direction == "st" else ("target", "source")


def cmd_ingest(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    report: dict = {"policy": _policy(cfg).descriptor, "graphs": {}}
    for which, raw in (("source", cfg.paths.source_triples),
                       ("target", cfg.paths.target_triples)):
        in_path = _require_file(raw, f"{which} triples file")
        stats = ParseStats()
        kg = build_graph(parse_ntriples(in_path, stats=stats))
        snapshot = _snapshot_path(cfg, which)
        write_ntriples(kg.triples(), snapshot)
        # snapshot ids are first-seen over the canonical stream, which can
        # differ from the original parse; index against the reloaded graph
        # so persisted posting ids always match the persisted snapshot
        kg = _load_kg(snapshot)
        names = extract_names(kg, _name_predicates(cfg, which))
        index = build_index(names, _policy(cfg))
        save_index(index, _index_path(cfg, which))
        if args.dump_tsv:
            dump_index_tsv(index, cfg.workdir / f"{which}.names.tsv")
        counts = {
            "input": str(in_path),
            "entities": kg.n_entities,
            "triples": kg.n_triples,
            "named_entities": len(names),
            "indexed_names": len(index),
            "malformed_lines": stats.malformed,
        }
        report["graphs"][which] = counts
        print(f"[{which}] entities={counts['entities']} "
              f"triples={counts['triples']} named={counts['named_entities']} "
              f"names={counts['indexed_names']} "
              f"malformed={counts['malformed_lines']}", file=sys.stderr)
    with open(cfg.workdir / "ingest.json", "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    return 0


def cmd_build_dataset(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    direction = args.direction
    query_side, cand_side = _direction_roles(cfg, direction)
    query_kg = _load_kg(_require_file(_snapshot_path(cfg, query_side),
                                      f"{query_side} graph snapshot"))
    cand_kg = _load_kg(_require_file(_snapshot_path(cfg, cand_side),
                                     f"{cand_side} graph snapshot"))
    index = load_index(_require_file(_index_path(cfg, cand_side),
                                     f"{cand_side} name index"))
    align_path = _require_file(cfg.paths.alignment_triples, "alignment triples file")

    # alignment triples point source -> target; swap for the reverse direction
    if direction == "st":
        subject_kg, object_kg, swap = query_kg, cand_kg, False
    else:
        subject_kg, object_kg, swap = cand_kg, query_kg, True
    alignment = extract_alignment(
        parse_ntriples(align_path),
        subject_kg=subject_kg,
        object_kg=object_kg,
        predicate=cfg.ingest.alignment_predicate,
        disambiguation=_disambiguation(cfg),
        swap=swap,
    )
    if len(alignment) == 0:
        logger.warning("alignment is empty; emitting an empty dataset")

    names = extract_names(query_kg, _name_predicates(cfg, query_side))
    dataset = ds_mod.build_matching_dataset(
        query_kg, cand_kg, names, index, alignment, direction=direction)
    dataset.metadata["global_seed"] = cfg.seed
    split = ds_mod.split_dataset(
        dataset, tuple(cfg.split.ratios),
        seed=derive_seed(cfg.seed, f"split:{direction}"))
    paths = ds_mod.write_split(split, _dataset_dir(cfg, direction))
    stats = ds_mod.dataset_stats(dataset)
    print(f"[{direction}] queries={stats.n_queries} "
          f"names={stats.n_unique_names} candidates={stats.n_unique_candidates} "
          f"mean_candidates={stats.mean_candidates:.2f} "
          f"train/valid/test={len(split.train)}/{len(split.validation)}"
          f"/{len(split.test)}", file=sys.stderr)
    with open(_dataset_dir(cfg, direction) / "stats.json", "w",
              encoding="utf-8") as f:
        json.dump(stats.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("dataset written: %s", ", ".join(str(p) for p in paths.values()))
    return 0


def cmd_train_embeddings(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    which = _graph_tag(args.graph)
    kg = _load_kg(_require_file(_snapshot_path(cfg, which),
                                f"{which} graph snapshot"))
    walk_cfg = WalkConfig(
        walks_per_entity=cfg.walks.walks_per_entity,
        depth=cfg.walks.depth,
        seed=derive_seed(cfg.seed, f"walks:{which}"),
    )
    corpus = generate_walks(kg, walk_cfg)
    if args.save_walks:
        corpus.save_text(cfg.workdir / f"walks.{which}.txt")
    sg_cfg = SkipgramConfig(
        dim=cfg.skipgram.dim,
        window=cfg.skipgram.window,
        negatives=cfg.skipgram.negatives,
        epochs=cfg.skipgram.epochs,
        learning_rate=cfg.skipgram.learning_rate,
        subsample=cfg.skipgram.subsample,
        seed=derive_seed(cfg.seed, f"skipgram:{which}"),
    )
    table, history = train_skipgram_with_history(corpus, sg_cfg)
    table.save(_vectors_path(cfg, which))
    print(f"[{which}] walks={len(corpus)} vocabulary={len(table)} "
          f"dim={table.dim} epoch_loss="
          + ",".join(f"{x:.4f}" for x in history), file=sys.stderr)
    return 0


def _load_tables(cfg: PipelineConfig, direction: str
                 ) -> tuple[EmbeddingTable, EmbeddingTable]:
    query_side, cand_side = _direction_roles(cfg, direction)
    q = EmbeddingTable.load(
        _require_file(_vectors_path(cfg, query_side), f"{query_side} embeddings"),
        fallback_seed=derive_seed(cfg.seed, f"fallback:{query_side}"))
    c = EmbeddingTable.load(
        _require_file(_vectors_path(cfg, cand_side), f"{cand_side} embeddings"),
        fallback_seed=derive_seed(cfg.seed, f"fallback:{cand_side}"))
    if q.dim != c.dim:
        raise DataError(f"embedding dimensions differ: {q.dim} vs {c.dim}")
    return q, c


def _load_split(cfg: PipelineConfig, direction: str) -> ds_mod.DatasetSplit:
    d = _dataset_dir(cfg, direction)
    _require_file(d / "train.tsv", f"dataset split for direction {direction}")
    return ds_mod.read_split(d, direction=direction)


def _train_config(cfg: PipelineConfig, direction: str, kind: str
                  ) -> matcher_mod.TrainConfig:
    return matcher_mod.TrainConfig(
        learning_rate=cfg.matcher.learning_rate,
        batch_size=cfg.matcher.batch_size,
        epochs=cfg.matcher.epochs,
        patience=cfg.matcher.patience,
        seed=derive_seed(cfg.seed, f"matcher:{direction}:{kind}"),
    )


def cmd_train_matcher(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    direction = args.direction
    kind = args.kind or cfg.matcher.kind
    split = _load_split(cfg, direction)
    if not split.train.queries:
        raise DataError(f"training split for {direction} is empty")
    query_table, cand_table = _load_tables(cfg, direction)
    model, history = matcher_mod.train(
        matcher_mod.expand_pairs(split.train),
        query_table, cand_table,
        _train_config(cfg, direction, kind),
        split.validation,
        kind=kind,
        hidden=cfg.matcher.hidden,
    )
    out = _model_path(cfg, direction, kind)
    matcher_mod.save_model(model, out, metadata={
        "direction": direction,
        "kind": kind,
        "train_queries": len(split.train),
        "history": history,
        "global_seed": cfg.seed,
    })
    with open(out.with_suffix(".history.json"), "w", encoding="utf-8") as f:
        json.dump(history, f, indent=2, sort_keys=True)
        f.write("\n")
    best = max(h["validation_mrr"] for h in history)
    print(f"[{direction}] {kind} trained {len(history)} epochs, "
          f"best validation MRR {best:.4f} -> {out}", file=sys.stderr)
    return 0


def cmd_evaluate(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    direction = args.direction
    split = _load_split(cfg, direction)
    ds = split.datasets[args.split]
    if not ds.queries:
        raise DataError(f"{args.split} split for {direction} is empty")
    type_map = (eval_mod.load_type_map(_require_file(args.type_map, "type map"))
                if args.type_map else None)

    kind = args.kind or cfg.matcher.kind
    if args.oracle:
        ranker = eval_mod.oracle_ranker
        meta: dict = {"model_kind": "oracle", "direction": direction}
    elif args.random_scores:
        ranker = eval_mod.random_ranker(derive_seed(cfg.seed, "random-eval"))
        meta = {"model_kind": "random", "direction": direction}
    else:
        model_file = _require_file(_model_path(cfg, direction, kind),
                                   "matcher checkpoint")
        model, ckpt_meta = matcher_mod.load_model(model_file)
        query_table, cand_table = _load_tables(cfg, direction)
        ranker = eval_mod.model_ranker(model, query_table, cand_table)
        meta = {"model_kind": model.kind, "direction": direction,
                "checkpoint": str(model_file),
                "trained_on": ckpt_meta.get("train_queries")}
    meta["split"] = args.split
    meta["global_seed"] = cfg.seed
    report = eval_mod.evaluate_with_ranker(ranker, ds, type_map=type_map,
                                           metadata=meta)
    report.metadata["random_baseline_analytic"] = eval_mod.random_baseline_mrr(
        ds, mode="analytic")
    if type_map is not None and not (args.oracle or args.random_scores):
        frac, cases = eval_mod.rank2_same_type_fraction(
            model, ds, type_map, query_table, cand_table)
        report.metadata["rank2_same_type"] = {"fraction": frac, "cases": cases}

    tag = meta["model_kind"]
    out = cfg.workdir / f"eval.{direction}.{args.split}.{tag}.json"
    report.save_json(out)
    if args.csv:
        eval_mod.save_report_csv(report, out.with_suffix(".csv"))
    print(f"[{direction}/{args.split}] {tag} MRR {report.mrr:.4f} "
          f"(analytic random {report.metadata['random_baseline_analytic']:.4f}, "
          f"{report.n_queries} queries) -> {out}", file=sys.stderr)
    return 0


def cmd_sweep(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    direction = args.direction
    split = _load_split(cfg, direction)
    query_table, cand_table = _load_tables(cfg, direction)
    kind = args.kind or cfg.matcher.kind
    fractions = args.fractions
    repeats = args.repeats if args.repeats else None
    points = eval_mod.training_size_sweep(
        split, query_table, cand_table,
        _train_config(cfg, direction, kind),
        fractions_percent=fractions,
        repeats=repeats,
        kind=kind,
        hidden=cfg.matcher.hidden,
        seed=derive_seed(cfg.seed, f"sweep:{direction}:{kind}"),
    )
    out = cfg.workdir / f"sweep.{direction}.{kind}.json"
    with open(out, "w", encoding="utf-8") as f:
        json.dump([p.to_dict() for p in points], f, indent=2, sort_keys=True)
        f.write("\n")
    eval_mod.save_sweep_csv(points, out.with_suffix(".csv"))
    for p in points:
        print(f"[sweep {direction}] {p.fraction_percent:g}%: "
              f"mean MRR {p.mean:.4f} [{p.ci_low:.4f}, {p.ci_high:.4f}] "
              f"({len(p.values)} repeats)", file=sys.stderr)
    return 0


def cmd_synth(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    spec = SyntheticSpec(
        n_entities=args.entities,
        mean_out_degree=args.mean_out_degree,
        n_predicates=args.predicates,
        zipf_exponent=args.zipf_exponent,
        max_group=args.max_group,
        min_group=args.min_group,
        noise_rate=args.noise,
        seed=derive_seed(cfg.seed, "synth"),
        n_types=args.types,
    )
    data = build_synthetic(spec)
    paths = write_synthetic(data, args.out or cfg.workdir / "synth")
    print("synthetic benchmark: "
          + " ".join(f"{k}={v}" for k, v in sorted(paths.items())),
          file=sys.stderr)
    return 0


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="TOML config file")
    sub.add_argument("--workdir", help="artifact directory (overrides config)")
    sub.add_argument("--seed", type=int, help="global seed (overrides config)")
    sub.add_argument("--threads", type=int,
                     help="worker threads; all modes are deterministic")
    sub.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kgmatch",
                     description="Ambiguous entity matching across knowledge graphs")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("ingest", parents=[], help="parse dumps, build indexes")
    _add_common(p)
    p.add_argument("--source", help="source N-Triples file (gzip ok)")
    p.add_argument("--target", help="target N-Triples file (gzip ok)")
    p.add_argument("--dump-tsv", action="store_true",
                   help="also write plain-text index dumps")
    p.set_defaults(func=cmd_ingest)

    p = subs.add_parser("build-dataset", help="build and split a matching dataset")
    _add_common(p)
    p.add_argument("--direction", choices=DIRECTIONS, default="st")
    p.add_argument("--alignment", help="alignment N-Triples file")
    p.set_defaults(func=cmd_build_dataset)

    p = subs.add_parser("train-embeddings", help="walk a graph, train skip-gram")
    _add_common(p)
    p.add_argument("--graph", choices=("source", "target"), required=True)
    p.add_argument("--save-walks", action="store_true",
                   help="also dump the walk corpus as text")
    p.set_defaults(func=cmd_train_embeddings)

    p = subs.add_parser("train-matcher", help="train the match classifier")
    _add_common(p)
    p.add_argument("--direction", choices=DIRECTIONS, default="st")
    p.add_argument("--kind", choices=("mlp", "logreg"))
    p.set_defaults(func=cmd_train_matcher)

    p = subs.add_parser("evaluate", help="rank candidates and report MRR")
    _add_common(p)
    p.add_argument("--direction", choices=DIRECTIONS, default="st")
    p.add_argument("--split", choices=("train", "validation", "test"),
                   default="test")
    p.add_argument("--kind", choices=("mlp", "logreg"))
    p.add_argument("--type-map", help="TSV file: iri<TAB>label,label")
    p.add_argument("--csv", action="store_true", help="also emit CSV tables")
    p.add_argument("--oracle", action="store_true",
                   help="debug: rank ground truth first")
    p.add_argument("--random-scores", action="store_true",
                   help="debug: rank by random scores")
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("sweep", help="training-size sweep with confidence intervals")
    _add_common(p)
    p.add_argument("--direction", choices=DIRECTIONS, default="st")
    p.add_argument("--kind", choices=("mlp", "logreg"))
    p.add_argument("--fractions", type=float, nargs="+",
                   default=[0.01, 0.05, 0.1, 0.5, 1, 5, 10, 50, 100],
                   help="training percentages in (0, 100]")
    p.add_argument("--repeats", type=int,
                   help="repeats per fraction (default: 10 for the four "
                        "smallest, 5 otherwise)")
    p.set_defaults(func=cmd_sweep)

    p = subs.add_parser("synth", help="generate a synthetic twin-graph benchmark")
    _add_common(p)
    p.add_argument("--out", help="output directory (default: WORKDIR/synth)")
    p.add_argument("--entities", type=int, default=1000)
    p.add_argument("--mean-out-degree", type=float, default=4.0)
    p.add_argument("--predicates", type=int, default=8)
    p.add_argument("--zipf-exponent", type=float, default=1.0)
    p.add_argument("--max-group", type=int, default=8)
    p.add_argument("--min-group", type=int, default=1)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--types", type=int, default=0,
                   help="emit a types.tsv with this many labels")
    p.set_defaults(func=cmd_synth)

    return parser


def _merge_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if getattr(args, "workdir", None):
        cfg.paths.workdir = args.workdir
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "source", None):
        cfg.paths.source_triples = args.source
    if getattr(args, "target", None):
        cfg.paths.target_triples = args.target
    if getattr(args, "alignment", None):
        cfg.paths.alignment_triples = args.alignment
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _merge_config(args)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"kgmatch: config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"kgmatch: data error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"kgmatch: data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
