"""Point-wise match classifier over concatenated entity embeddings.

Two heads share one interface: an MLP with a single ReLU hidden layer
followed by a two-logit softmax, and a logistic-regression baseline
(equivalent to the softmax over logits [0, w.x + b]). Training minimizes
mean negative log-likelihood with Adam; the model snapshot with the best
validation MRR is returned. Ranking sorts candidates by match probability
with stable ties, so equal scores preserve candidate order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dataset import MatchDataset, MatchQuery
from .skipgram import EmbeddingTable

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1

Pair = tuple[str, str, int]  # (query token, candidate token, label)


def featurize(qvec: np.ndarray, cvec: np.ndarray) -> np.ndarray:
    """Concatenate query and candidate vectors, query half first."""
    q = np.asarray(qvec, dtype=np.float64)
    c = np.asarray(cvec, dtype=np.float64)
    if q.shape != c.shape or q.ndim != 1:
        raise ValueError(f"dimension mismatch: {q.shape} vs {c.shape}")
    return np.concatenate([q, c])


def _softmax(logits: np.ndarray) -> np.ndarray:
    # shift by the row max; mandatory for the 1e-9 normalization contract
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class MatcherModel:
    """MLP or logistic-regression match classifier.

    Parameters are float64 arrays: the MLP holds W1 (h, 2d), b1, W2 (2, h),
    b2; logistic regression holds w (2d,) and b (1,).
    """

    def __init__(self, kind: str, params: dict[str, np.ndarray],
                 input_dim: int, hidden: int = 0) -> None:
        if kind not in ("mlp", "logreg"):
            raise ValueError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.params = params
        self.input_dim = input_dim
        self.hidden = hidden
        self._check_shapes()

    def _check_shapes(self) -> None:
        p = self.params
        if self.kind == "mlp":
            expected = {"W1": (self.hidden, self.input_dim), "b1": (self.hidden,),
                        "W2": (2, self.hidden), "b2": (2,)}
        else:
            expected = {"w": (self.input_dim,), "b": (1,)}
        for name, shape in expected.items():
            if name not in p or p[name].shape != shape:
                raise ValueError(f"parameter {name} missing or misshaped")
            if not np.all(np.isfinite(p[name])):
                raise ValueError(f"parameter {name} has non-finite values")

    @classmethod
    def initialize(cls, kind: str, input_dim: int, hidden: int = 0,
                   seed: int = 0) -> "MatcherModel":
        """Xavier-uniform weights, zero biases, seeded."""
        rng = np.random.default_rng(seed)
        if kind == "mlp":
            if hidden < 1:
                raise ValueError("mlp needs hidden >= 1")
            lim1 = np.sqrt(6.0 / (input_dim + hidden))
            lim2 = np.sqrt(6.0 / (hidden + 2))
            params = {
                "W1": rng.uniform(-lim1, lim1, (hidden, input_dim)),
                "b1": np.zeros(hidden),
                "W2": rng.uniform(-lim2, lim2, (2, hidden)),
                "b2": np.zeros(2),
            }
        else:
            lim = np.sqrt(6.0 / (input_dim + 1))
            params = {"w": rng.uniform(-lim, lim, input_dim), "b": np.zeros(1)}
            hidden = 0
        return cls(kind, params, input_dim, hidden)

    def logits(self, X: np.ndarray) -> np.ndarray:
        """(N, 2) pre-softmax scores; logreg uses the equivalent [0, s] form."""
        if self.kind == "mlp":
            hidden = np.maximum(X @ self.params["W1"].T + self.params["b1"], 0.0)
            return hidden @ self.params["W2"].T + self.params["b2"]
        s = X @ self.params["w"] + self.params["b"][0]
        return np.column_stack([np.zeros_like(s), s])

    def forward(self, features: np.ndarray) -> np.ndarray:
        """Probability pair(s) (p_no_match, p_match); rows sum to 1."""
        X = np.asarray(features, dtype=np.float64)
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite input features")
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.input_dim:
            raise ValueError(
                f"feature length {X.shape[1]} != input dim {self.input_dim}")
        probs = _softmax(self.logits(X))
        return probs[0] if single else probs

    def match_probability(self, X: np.ndarray) -> np.ndarray:
        out = self.forward(X)
        return out[..., 1]

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}


def forward(model: MatcherModel, features: np.ndarray) -> np.ndarray:
    """Module-level alias for :meth:`MatcherModel.forward`."""
    return model.forward(features)


def nll_and_grads(
    model: MatcherModel, X: np.ndarray, y: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean NLL of the softmax output against binary labels, plus gradients."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    logits = model.logits(X)
    logp = _log_softmax(logits)
    loss = -float(logp[np.arange(n), y].mean())

    dlogits = _softmax(logits)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    p = model.params
    if model.kind == "mlp":
        z1 = X @ p["W1"].T + p["b1"]
        a1 = np.maximum(z1, 0.0)
        grads = {
            "W2": dlogits.T @ a1,
            "b2": dlogits.sum(axis=0),
        }
        da1 = dlogits @ p["W2"]
        dz1 = da1 * (z1 > 0)
        grads["W1"] = dz1.T @ X
        grads["b1"] = dz1.sum(axis=0)
    else:
        # logit 0 is the constant zero, so only column 1 backpropagates
        ds = dlogits[:, 1]
        grads = {"w": X.T @ ds, "b": np.array([ds.sum()])}
    return loss, grads


class Adam:
    """Standard Adam with bias correction."""

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray],
             grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / b1c) / (
                np.sqrt(self.v[k] / b2c) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def expand_pairs(ds: MatchDataset) -> list[Pair]:
    """Point-wise expansion: one positive pair plus every negative, unsampled."""
    pairs: list[Pair] = []
    for q in ds.queries:
        for i, cand in enumerate(q.candidate_iris):
            pairs.append((q.query_iri, cand, int(i == q.positive_index)))
    return pairs


def pair_features(
    pairs: Sequence[Pair],
    source_table: EmbeddingTable,
    target_table: EmbeddingTable,
) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix and label vector for a pair stream."""
    if source_table.dim != target_table.dim:
        raise ValueError("source and target embedding dimensions differ")
    n, d = len(pairs), source_table.dim
    X = np.empty((n, 2 * d))
    y = np.empty(n, dtype=np.int64)
    for i, (q, c, label) in enumerate(pairs):
        X[i, :d] = source_table.vector(q)
        X[i, d:] = target_table.vector(c)
        y[i] = label
    return X, y


def positive_rank(probs: np.ndarray, positive_index: int) -> int:
    """Rank of the positive under stable descending sort by probability."""
    p = probs[positive_index]
    higher = int(np.sum(probs > p))
    earlier_ties = int(np.sum(probs[:positive_index] == p))
    return 1 + higher + earlier_ties


@dataclass
class RankingResult:
    ordered: list[tuple[str, float]]  # (candidate IRI, p_match), best first
    positive_rank: int


def rank_candidates(
    model: MatcherModel,
    query: MatchQuery,
    source_table: EmbeddingTable,
    target_table: EmbeddingTable,
) -> RankingResult:
    """Sort candidates by match probability, ties kept in candidate order."""
    d = source_table.dim
    X = np.empty((query.n_candidates, 2 * d))
    X[:, :d] = source_table.vector(query.query_iri)
    for i, cand in enumerate(query.candidate_iris):
        X[:, d:][i] = target_table.vector(cand)
    probs = model.match_probability(X)
    order = sorted(range(len(probs)), key=lambda i: -probs[i])
    ordered = [(query.candidate_iris[i], float(probs[i])) for i in order]
    return RankingResult(ordered=ordered,
                         positive_rank=positive_rank(probs, query.positive_index))


def _validation_arrays(
    valid: MatchDataset,
    source_table: EmbeddingTable,
    target_table: EmbeddingTable,
) -> tuple[np.ndarray, list[tuple[int, int, int]]]:
    """Features for all validation candidates plus (lo, hi, positive) spans."""
    d = source_table.dim
    spans = []
    lo = 0
    for q in valid.queries:
        spans.append((lo, lo + q.n_candidates, q.positive_index))
        lo += q.n_candidates
    X = np.empty((lo, 2 * d))
    row = 0
    for q in valid.queries:
        X[row:row + q.n_candidates, :d] = source_table.vector(q.query_iri)
        for i, cand in enumerate(q.candidate_iris):
            X[row + i, d:] = target_table.vector(cand)
        row += q.n_candidates
    return X, spans


def _validation_mrr(
    model: MatcherModel,
    X: np.ndarray,
    spans: list[tuple[int, int, int]],
) -> float:
    if not spans:
        return 0.0
    probs = model.match_probability(X)
    rr = [1.0 / positive_rank(probs[lo:hi], pos) for lo, hi, pos in spans]
    return sum(rr) / len(rr)


def train(
    pairs: Iterable[Pair],
    source_table: EmbeddingTable,
    target_table: EmbeddingTable,
    cfg: TrainConfig,
    valid: MatchDataset,
    kind: str = "mlp",
    hidden: int = 64,
) -> tuple[MatcherModel, list[dict]]:
    """Mini-batch Adam on mean NLL; returns the best-validation-MRR snapshot.

    The history carries one record per epoch (mean train NLL, validation
    MRR). Early stopping fires after ``patience`` epochs without a new best
    validation MRR.
    """
    pair_list = list(pairs)
    if not pair_list:
        raise ValueError("training stream is empty")
    X, y = pair_features(pair_list, source_table, target_table)
    vX, vspans = _validation_arrays(valid, source_table, target_table)
    model = MatcherModel.initialize(kind, X.shape[1], hidden=hidden, seed=cfg.seed)
    optimizer = Adam(model.params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng(cfg.seed)

    best_params = model.copy_params()
    best_mrr = -1.0
    best_epoch = 0
    history: list[dict] = []
    n = len(pair_list)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            loss, grads = nll_and_grads(model, X[idx], y[idx])
            optimizer.step(model.params, grads)
            loss_sum += loss * len(idx)
        mean_nll = loss_sum / n
        val_mrr = _validation_mrr(model, vX, vspans)
        history.append({"epoch": epoch, "train_nll": mean_nll,
                        "validation_mrr": val_mrr})
        logger.info("epoch %d: train NLL %.4f, validation MRR %.4f",
                    epoch, mean_nll, val_mrr)
        if val_mrr > best_mrr:
            best_mrr = val_mrr
            best_params = model.copy_params()
            best_epoch = epoch
        elif epoch - best_epoch >= cfg.patience:
            logger.info("early stop at epoch %d (best epoch %d)", epoch, best_epoch)
            break
    model.params = best_params
    return model, history


def save_model(model: MatcherModel, path: str | Path,
               metadata: dict | None = None) -> None:
    """Versioned binary checkpoint (npz); float64 arrays round-trip bit-exactly."""
    header = {
        "version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "input_dim": model.input_dim,
        "hidden": model.hidden,
        "metadata": metadata or {},
    }
    arrays = {f"param_{k}": v for k, v in model.params.items()}
    np.savez(path, header=np.frombuffer(
        json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8),
        **arrays)


def load_model(path: str | Path) -> tuple[MatcherModel, dict]:
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode("utf-8"))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version")
        params = {
            name[len("param_"):]: data[name]
            for name in data.files if name.startswith("param_")
        }
    model = MatcherModel(header["kind"], params, header["input_dim"],
                         header["hidden"])
    return model, header.get("metadata", {})
