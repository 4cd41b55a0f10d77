"""Skip-gram with negative sampling over walk corpora, from scratch.

The objective per (center, context) pair is

    -log s(u . v_pos) - sum_k log s(-u . v_neg_k)

with negatives drawn from the unigram distribution raised to 3/4 (a
negative that happens to equal the pair's context is skipped). Updates
are plain sequential SGD, one pair at a time, with a linearly decaying
learning rate and the word2vec dynamic window (effective window uniform
in [1, window]). Pair schedules, window draws, and negative samples all
come from one seeded numpy generator, so identical (corpus, config)
always produces an identical table; the inner loop is JIT-compiled with
numba when available and falls back to the same code in pure Python.

Tables are keyed by token string (the IRI) and serialized in word2vec
text format so externally pretrained vectors can be dropped in. Unknown
tokens get a deterministic hash-seeded fallback vector.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is an optional accelerator
    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not (args and callable(args[0])) else args[0]

from .walks import WalkCorpus, is_predicate_token

logger = logging.getLogger(__name__)

_CHUNK_PAIRS = 1 << 20  # negative draws are materialized per chunk
_NEGATIVE_POWER = 0.75
_NEGATIVE_TABLE_SIZE = 1 << 22  # word2vec-style sampling table
_MIN_LR_FACTOR = 1e-4


@dataclass(frozen=True)
class SkipgramConfig:
    dim: int = 32
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    subsample: float = 0.0  # word2vec threshold t; 0 disables
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.subsample < 0:
            raise ValueError("subsample must be >= 0")


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))


def sgns_batch_loss_and_grads(
    u: np.ndarray, v_pos: np.ndarray, v_neg: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Loss and gradients for a batch of pairs.

    Shapes: u and v_pos are (B, d); v_neg is (B, K, d). Returns per-pair
    losses (B,) and gradients matching each input's shape.
    """
    x_pos = np.einsum("bd,bd->b", u, v_pos)
    x_neg = np.einsum("bd,bkd->bk", u, v_neg)
    loss = -log_sigmoid(x_pos) - log_sigmoid(-x_neg).sum(axis=1)
    g_pos = sigmoid(x_pos) - 1.0          # dL/dx_pos
    g_neg = sigmoid(x_neg)                # dL/dx_neg
    grad_u = g_pos[:, None] * v_pos + np.einsum("bk,bkd->bd", g_neg, v_neg)
    grad_v_pos = g_pos[:, None] * u
    grad_v_neg = g_neg[:, :, None] * u[:, None, :]
    return loss, grad_u, grad_v_pos, grad_v_neg


def sgns_pair_loss_and_grads(
    u: np.ndarray, v_pos: np.ndarray, v_negs: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Single-pair objective: the batch math with B=1 (used by gradient checks)."""
    loss, gu, gvp, gvn = sgns_batch_loss_and_grads(
        u[None, :], v_pos[None, :], v_negs[None, :, :]
    )
    return float(loss[0]), gu[0], gvp[0], gvn[0]


@njit(cache=True)
def _sgd_pairs(
    w_in: np.ndarray,
    w_out: np.ndarray,
    centers: np.ndarray,
    contexts: np.ndarray,
    negatives: np.ndarray,
    lrs: np.ndarray,
) -> float:
    """word2vec-style sequential SGD over a chunk of pairs; returns total loss.

    One update per pair, reading parameters as written by earlier pairs.
    A negative equal to the pair's context is skipped.
    """
    dim = w_in.shape[1]
    k = negatives.shape[1]
    grad_u = np.empty(dim)
    total_loss = 0.0
    for p in range(centers.shape[0]):
        c = centers[p]
        o = contexts[p]
        lr = lrs[p]
        x = 0.0
        for j in range(dim):
            x += w_in[c, j] * w_out[o, j]
        if x >= 0:
            s = 1.0 / (1.0 + np.exp(-x))
            total_loss += np.log1p(np.exp(-x))
        else:
            e = np.exp(x)
            s = e / (1.0 + e)
            total_loss += np.log1p(e) - x
        g = lr * (s - 1.0)
        for j in range(dim):
            grad_u[j] = g * w_out[o, j]   # reads v before the write below
            w_out[o, j] -= g * w_in[c, j]
        for p_neg in range(k):
            n = negatives[p, p_neg]
            if n == o:
                continue
            xn = 0.0
            for j in range(dim):
                xn += w_in[c, j] * w_out[n, j]
            if xn >= 0:
                sn = 1.0 / (1.0 + np.exp(-xn))
                total_loss += xn + np.log1p(np.exp(-xn))
            else:
                en = np.exp(xn)
                sn = en / (1.0 + en)
                total_loss += np.log1p(en)
            gn = lr * sn
            for j in range(dim):
                grad_u[j] += gn * w_out[n, j]
                w_out[n, j] -= gn * w_in[c, j]
        for j in range(dim):
            w_in[c, j] -= grad_u[j]
    return total_loss


class EmbeddingTable:
    """Fixed-dimension vectors per token, with a deterministic random fallback."""

    def __init__(self, dim: int, fallback_seed: int = 0) -> None:
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.fallback_seed = fallback_seed
        self.vectors: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def add(self, token: str, vec: np.ndarray) -> None:
        v = np.asarray(vec, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValueError(f"vector for {token!r} has shape {v.shape}, "
                             f"expected ({self.dim},)")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"vector for {token!r} has non-finite components")
        self.vectors[token] = v

    def vector(self, token: str) -> np.ndarray:
        """Stored vector, or the token's deterministic fallback vector."""
        v = self.vectors.get(token)
        if v is not None:
            return v
        return self._fallback(token)

    def _fallback(self, token: str) -> np.ndarray:
        digest = hashlib.blake2b(
            f"{self.fallback_seed}\x00{token}".encode("utf-8"), digest_size=8
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        half = 0.5 / self.dim
        return rng.uniform(-half, half, self.dim)

    def tokens(self) -> list[str]:
        return list(self.vectors)

    def save(self, path: str | Path) -> None:
        """word2vec text format: header ``count dim``, then one token per row."""
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(f"{len(self.vectors)} {self.dim}\n")
            for token, vec in self.vectors.items():
                coords = " ".join(f"{x:.9g}" for x in vec)
                f.write(f"{token} {coords}\n")

    @classmethod
    def load(cls, path: str | Path, fallback_seed: int = 0) -> "EmbeddingTable":
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().rstrip("\n")
            parts = header.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:1: expected header 'count dim'")
            try:
                count, dim = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(f"{path}:1: non-numeric header") from None
            table = cls(dim, fallback_seed=fallback_seed)
            for lineno, line in enumerate(f, start=2):
                line = line.rstrip("\n")
                if not line:
                    continue
                fields = line.split(" ")
                if len(fields) != dim + 1:
                    raise ValueError(
                        f"{path}:{lineno}: expected {dim} floats for "
                        f"token {fields[0]!r}, got {len(fields) - 1}"
                    )
                try:
                    vec = np.array([float(x) for x in fields[1:]], dtype=np.float64)
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: malformed float") from None
                table.add(fields[0], vec)
        if len(table) != count:
            raise ValueError(
                f"{path}: header declared {count} tokens, file has {len(table)}"
            )
        return table


def save_table(table: EmbeddingTable, path: str | Path) -> None:
    table.save(path)


def load_table(path: str | Path, fallback_seed: int = 0) -> EmbeddingTable:
    return EmbeddingTable.load(path, fallback_seed=fallback_seed)


def _build_vocab(corpus: WalkCorpus) -> tuple[dict[int, int], np.ndarray, list[int]]:
    counts: dict[int, int] = {}
    for seq in corpus.sequences:
        for tok in seq:
            counts[tok] = counts.get(tok, 0) + 1
    # frequency-descending, token value as deterministic tie-break
    ordered = sorted(counts, key=lambda t: (-counts[t], t))
    tok2idx = {tok: i for i, tok in enumerate(ordered)}
    freq = np.array([counts[t] for t in ordered], dtype=np.float64)
    return tok2idx, freq, ordered


def train_skipgram_with_history(
    corpus: WalkCorpus, cfg: SkipgramConfig
) -> tuple[EmbeddingTable, list[float]]:
    """Train and also return the mean per-pair loss of each epoch."""
    if len(corpus.sequences) == 0:
        raise ValueError("corpus is empty")
    tok2idx, freq, ordered = _build_vocab(corpus)
    vocab_size = len(ordered)
    rng = np.random.default_rng(cfg.seed)

    w_in = (rng.random((vocab_size, cfg.dim)) - 0.5) / cfg.dim
    w_out = np.zeros((vocab_size, cfg.dim))

    # flat token stream with sentence ids for window masking
    flat = np.fromiter(
        (tok2idx[t] for seq in corpus.sequences for t in seq),
        dtype=np.int64,
    )
    sent = np.repeat(
        np.arange(len(corpus.sequences)),
        [len(s) for s in corpus.sequences],
    )

    total = freq.sum()
    keep_prob = None
    if cfg.subsample > 0:
        rel = freq / total
        keep_prob = np.minimum(
            1.0, (np.sqrt(rel / cfg.subsample) + 1.0) * (cfg.subsample / rel)
        )

    # unigram^(3/4) sampling table: slot counts are consecutive differences
    # of the rounded cumulative distribution, so they sum to the table size
    weights = freq ** _NEGATIVE_POWER
    cum_slots = np.rint(np.cumsum(weights) / weights.sum()
                        * _NEGATIVE_TABLE_SIZE).astype(np.int64)
    slot_counts = np.diff(np.r_[0, cum_slots])
    neg_table = np.repeat(np.arange(vocab_size, dtype=np.int64), slot_counts)

    history: list[float] = []
    for epoch in range(cfg.epochs):
        tokens, sent_ids = flat, sent
        if keep_prob is not None:
            mask = rng.random(len(flat)) < keep_prob[flat]
            tokens, sent_ids = flat[mask], sent[mask]
        n = len(tokens)
        centers_parts: list[np.ndarray] = []
        contexts_parts: list[np.ndarray] = []
        if n > 1:
            eff = rng.integers(1, cfg.window + 1, size=n)
            for delta in range(1, cfg.window + 1):
                same = sent_ids[:-delta] == sent_ids[delta:] if delta < n else None
                if same is None or not same.any():
                    continue
                left = np.flatnonzero(same & (eff[:-delta] >= delta))
                centers_parts.append(left)
                contexts_parts.append(left + delta)
                right = np.flatnonzero(same & (eff[delta:] >= delta)) + delta
                centers_parts.append(right)
                contexts_parts.append(right - delta)
        if not centers_parts:
            history.append(float("nan"))
            continue
        centers = tokens[np.concatenate(centers_parts)]
        contexts = tokens[np.concatenate(contexts_parts)]
        order = rng.permutation(len(centers))
        centers, contexts = centers[order], contexts[order]

        n_pairs = len(centers)
        loss_sum = 0.0
        lr_hi = cfg.learning_rate * max(1.0 - epoch / cfg.epochs,
                                        _MIN_LR_FACTOR)
        lr_lo = cfg.learning_rate * max(1.0 - (epoch + 1) / cfg.epochs,
                                        _MIN_LR_FACTOR)
        for lo in range(0, n_pairs, _CHUNK_PAIRS):
            hi = min(lo + _CHUNK_PAIRS, n_pairs)
            neg = neg_table[rng.integers(0, len(neg_table),
                                         (hi - lo, cfg.negatives))]
            span = np.arange(lo, hi) / n_pairs
            lrs = lr_hi + (lr_lo - lr_hi) * span
            loss_sum += _sgd_pairs(w_in, w_out, centers[lo:hi],
                                   contexts[lo:hi], neg, lrs)
        history.append(loss_sum / n_pairs)
        logger.debug("skipgram epoch %d: %d pairs, mean loss %.4f",
                     epoch + 1, n_pairs, history[-1])

    table = EmbeddingTable(cfg.dim, fallback_seed=cfg.seed)
    for i, tok in enumerate(ordered):
        key = corpus.token_string(tok)
        if key in table.vectors:
            # same IRI used as both entity and predicate; only entity
            # vectors are consumed downstream, so the entity row wins
            logger.warning("token string collision, keeping entity vector: %s", key)
            if is_predicate_token(tok):
                continue
        table.add(key, w_in[i].copy())
    return table, history


def train_skipgram(corpus: WalkCorpus, cfg: SkipgramConfig) -> EmbeddingTable:
    table, _ = train_skipgram_with_history(corpus, cfg)
    return table


def get_vector(table: EmbeddingTable, token: str) -> np.ndarray:
    """Module-level alias for :meth:`EmbeddingTable.vector`."""
    return table.vector(token)
