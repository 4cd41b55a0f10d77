"""Random graph walks unfolding a Kg into token sequences.

Every entity starts ``walks_per_entity`` walks; each hop picks an outgoing
(predicate, object) edge uniformly at random, stopping early at sinks.
Sequences alternate entity and predicate tokens, starting at an entity.
Tokens carry a tag bit (entity/predicate) so the two vocabularies can
never collide during training.

Each start entity draws from its own generator seeded with
``seed XOR entity_id``, so generation order (or parallelism) cannot change
the output.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .graph import Kg


def entity_token(eid: int) -> int:
    return eid << 1


def predicate_token(pid: int) -> int:
    return (pid << 1) | 1


def is_predicate_token(token: int) -> bool:
    return bool(token & 1)


def token_id(token: int) -> int:
    return token >> 1


@dataclass(frozen=True)
class WalkConfig:
    walks_per_entity: int = 20
    depth: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.walks_per_entity < 1:
            raise ValueError("walks_per_entity must be >= 1")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")


class WalkCorpus:
    """Token sequences plus the label tables needed to stringify them."""

    def __init__(
        self,
        sequences: list[list[int]],
        entity_labels: list[str],
        predicate_labels: list[str],
    ) -> None:
        self.sequences = sequences
        self.entity_labels = entity_labels
        self.predicate_labels = predicate_labels

    def __len__(self) -> int:
        return len(self.sequences)

    def token_string(self, token: int) -> str:
        if is_predicate_token(token):
            return self.predicate_labels[token_id(token)]
        return self.entity_labels[token_id(token)]

    def sequence_strings(self) -> Iterator[list[str]]:
        for seq in self.sequences:
            yield [self.token_string(t) for t in seq]

    def vocabulary(self) -> set[int]:
        vocab: set[int] = set()
        for seq in self.sequences:
            vocab.update(seq)
        return vocab

    def save_text(self, path: str | Path) -> None:
        """Line-oriented dump for inspection, tokens space-separated."""
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for tokens in self.sequence_strings():
                f.write(" ".join(tokens))
                f.write("\n")


def generate_walks(kg: Kg, cfg: WalkConfig) -> WalkCorpus:
    """Unfold the graph into ``walks_per_entity * n_entities`` walks."""
    if kg.n_entities == 0:
        raise ValueError("cannot walk an empty graph")
    sequences: list[list[int]] = []
    k, depth = cfg.walks_per_entity, cfg.depth
    adjacency = kg.adjacency
    for eid in range(kg.n_entities):
        rng = np.random.default_rng(cfg.seed ^ eid)
        # one uniform draw per potential hop; unused draws are discarded
        draws = rng.random((k, depth))
        for w in range(k):
            cur = eid
            seq = [entity_token(eid)]
            for hop in range(depth):
                edges = adjacency[cur]
                if not edges:
                    break
                pid, oid = edges[int(draws[w, hop] * len(edges))]
                seq.append(predicate_token(pid))
                seq.append(entity_token(oid))
                cur = oid
            sequences.append(seq)
    return WalkCorpus(sequences, kg.entities, kg.predicates)
