"""kgmatch: ambiguous entity matching across knowledge graphs.

Pipeline: ingest N-Triples dumps into interned graphs, index entity names,
build directional matching datasets with exactly one positive per query,
train walk-based skip-gram embeddings per graph, train a point-wise MLP
(or logistic-regression) matcher over concatenated embeddings, and
evaluate candidate rankings by mean reciprocal rank.
"""

from .dataset import (
    DatasetSplit,
    MatchDataset,
    MatchQuery,
    build_matching_dataset,
    dataset_stats,
    split_dataset,
    split_sizes,
    subsample_training,
)
from .graph import AlignmentSet, DisambiguationFilter, Kg, build_graph, extract_alignment, extract_names
from .matcher import MatcherModel, TrainConfig, expand_pairs, featurize, forward, rank_candidates, train
from .names import NameIndex, NormalizationPolicy, build_index, normalize_name
from .ntriples import Literal, ParseStats, Triple, parse_ntriples, write_ntriples
from .evaluation import (
    EvalReport,
    evaluate,
    mrr_by_candidate_bucket,
    mrr_by_type,
    random_baseline_mrr,
    rank2_same_type_fraction,
    reciprocal_rank,
    training_size_sweep,
)
from .skipgram import EmbeddingTable, SkipgramConfig, get_vector, load_table, save_table, train_skipgram
from .synth import SyntheticSpec, build_synthetic, write_synthetic
from .walks import WalkConfig, WalkCorpus, generate_walks

__version__ = "0.1.0"
