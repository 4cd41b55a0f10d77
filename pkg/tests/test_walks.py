"""Walk generation tests: shapes, path validity, edge-frequency law."""

import numpy as np
import pytest
from scipy import stats as scipy_stats

from kgmatch.graph import build_graph
from kgmatch.ntriples import Triple
from kgmatch.walks import (
    WalkConfig,
    entity_token,
    generate_walks,
    is_predicate_token,
    predicate_token,
    token_id,
)


def _random_kg(n_entities, n_edges, n_predicates=3, seed=0):
    rng = np.random.default_rng(seed)
    triples = [
        Triple(f"e{rng.integers(n_entities)}", f"p{rng.integers(n_predicates)}",
               f"e{rng.integers(n_entities)}")
        for _ in range(n_edges)
    ]
    return build_graph(triples)


class TestWalkConfig:
    def test_rejects_zero_walks(self):
        with pytest.raises(ValueError):
            WalkConfig(walks_per_entity=0, depth=4)

    def test_rejects_zero_depth(self):
        with pytest.raises(ValueError):
            WalkConfig(walks_per_entity=1, depth=0)


class TestGenerateWalks:
    def test_sink_entity_yields_single_token_walks(self):
        kg = build_graph([Triple("a", "p", "b")])
        # b is a sink; its 3 walks are all just [b]
        corpus = generate_walks(kg, WalkConfig(3, 4, seed=0))
        b = kg.entity_ids["b"]
        b_walks = [s for s in corpus.sequences if s[0] == entity_token(b)]
        assert len(b_walks) == 3
        assert all(s == [entity_token(b)] for s in b_walks)

    def test_chain_walk_follows_only_path(self):
        kg = build_graph([Triple("a", "p", "b"), Triple("b", "q", "c")])
        corpus = generate_walks(kg, WalkConfig(1, 4, seed=0))
        a = kg.entity_ids["a"]
        walk = next(s for s in corpus.sequences if s[0] == entity_token(a))
        expected = [
            entity_token(a),
            predicate_token(kg.predicate_ids["p"]),
            entity_token(kg.entity_ids["b"]),
            predicate_token(kg.predicate_ids["q"]),
            entity_token(kg.entity_ids["c"]),
        ]
        assert walk == expected
        assert len(walk) == 5 < 2 * 4 + 1

    def test_two_branch_star_frequencies(self):
        kg = build_graph([Triple("hub", "p", "x"), Triple("hub", "p", "y")])
        corpus = generate_walks(kg, WalkConfig(1000, 1, seed=42))
        hub = kg.entity_ids["hub"]
        ends = [s[2] for s in corpus.sequences if s[0] == entity_token(hub)]
        frac_x = ends.count(entity_token(kg.entity_ids["x"])) / 1000
        assert abs(frac_x - 0.5) <= 0.05

    def test_walk_count_is_exact(self):
        kg = _random_kg(40, 150)
        corpus = generate_walks(kg, WalkConfig(7, 3, seed=1))
        assert len(corpus) == 7 * kg.n_entities

    def test_walks_are_paths_in_the_graph(self):
        kg = _random_kg(30, 120, seed=3)
        corpus = generate_walks(kg, WalkConfig(5, 4, seed=2))
        for seq in corpus.sequences:
            for i in range(0, len(seq) - 2, 2):
                sid = token_id(seq[i])
                pid = token_id(seq[i + 1])
                oid = token_id(seq[i + 2])
                assert kg.has_edge(sid, pid, oid)

    def test_alternation_and_length_bound(self):
        kg = _random_kg(30, 120, seed=4)
        depth = 4
        corpus = generate_walks(kg, WalkConfig(5, depth, seed=2))
        for seq in corpus.sequences:
            assert len(seq) <= 2 * depth + 1
            assert len(seq) % 2 == 1
            for i, tok in enumerate(seq):
                assert is_predicate_token(tok) == (i % 2 == 1)

    def test_deterministic_given_seed(self):
        kg = _random_kg(25, 100, seed=5)
        a = generate_walks(kg, WalkConfig(4, 4, seed=9))
        b = generate_walks(kg, WalkConfig(4, 4, seed=9))
        assert a.sequences == b.sequences
        c = generate_walks(kg, WalkConfig(4, 4, seed=10))
        assert a.sequences != c.sequences

    def test_empty_graph_rejected(self):
        with pytest.raises(ValueError):
            generate_walks(build_graph([]), WalkConfig(1, 1))

    def test_edge_frequency_uniform_chi_square(self):
        # 6 parallel out-edges, 10k single-hop walks, alpha = 0.01
        edges = [Triple("hub", f"p{i}", f"t{i}") for i in range(6)]
        kg = build_graph(edges)
        corpus = generate_walks(kg, WalkConfig(10_000, 1, seed=0))
        hub = kg.entity_ids["hub"]
        counts = np.zeros(6)
        for seq in corpus.sequences:
            if seq[0] == entity_token(hub) and len(seq) == 3:
                counts[token_id(seq[2]) - 1] += 1
        assert counts.sum() == 10_000
        result = scipy_stats.chisquare(counts)
        assert result.pvalue > 0.01


class TestCorpus:
    def test_token_strings(self):
        kg = build_graph([Triple("a", "p", "b")])
        corpus = generate_walks(kg, WalkConfig(1, 1, seed=0))
        strings = list(corpus.sequence_strings())
        assert ["a", "p", "b"] in strings

    def test_entity_and_predicate_vocabularies_disjoint(self):
        # the same IRI as entity and predicate still yields distinct tokens
        kg = build_graph([Triple("a", "a", "b")])
        corpus = generate_walks(kg, WalkConfig(1, 1, seed=0))
        vocab = corpus.vocabulary()
        kinds = {(token_id(t), is_predicate_token(t)) for t in vocab}
        assert len(kinds) == len(vocab)

    def test_save_text(self, tmp_path):
        kg = build_graph([Triple("a", "p", "b")])
        corpus = generate_walks(kg, WalkConfig(2, 1, seed=0))
        path = tmp_path / "walks.txt"
        corpus.save_text(path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == len(corpus)
        assert "a p b" in lines
