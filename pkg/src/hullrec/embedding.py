"""Skip-gram training with negative sampling over walk corpora.

The trainer maximizes the log-likelihood of each walk node's context within a
fixed window, replacing the full softmax with the standard negative-sampling
surrogate: for a (center, context) pair with negatives n_1..n_k the loss is

    -log sigmoid(u_ctx . v_cen) - sum_j log sigmoid(-u_nj . v_cen)

where v are input (published) vectors and u are output (context) vectors.
Training is single-threaded and fully deterministic given the seed.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DataError, VocabularyError
from .walks import WalkCorpus

_TRAIN_STREAM = 202


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 128
    window: int = 2
    min_count: int = 1
    epochs: int = 100
    negatives: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.window < 1 or self.epochs < 1 or self.negatives < 1:
            raise ValueError("dim, window, epochs and negatives must all be >= 1")
        if self.min_count < 1:
            raise ValueError("min_count must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


class EmbeddingTable:
    """Per-node input/output vectors over the training vocabulary.

    ``input_vectors`` are the published embeddings; ``output_vectors`` hold the
    context-side parameters and are ``None`` for tables loaded from disk.
    """

    def __init__(self, node_ids, input_vectors, output_vectors=None, epoch_losses=None):
        self.node_ids = list(node_ids)
        self.input_vectors = np.asarray(input_vectors, dtype=np.float64)
        self.output_vectors = (
            None if output_vectors is None else np.asarray(output_vectors, dtype=np.float64)
        )
        self.epoch_losses = epoch_losses
        self._index = {nid: i for i, nid in enumerate(self.node_ids)}
        if self.input_vectors.ndim != 2 or len(self.node_ids) != self.input_vectors.shape[0]:
            raise ValueError("input_vectors must be one row per node id")
        if not np.isfinite(self.input_vectors).all():
            raise ValueError("embedding vectors must be finite")

    @property
    def dim(self) -> int:
        return self.input_vectors.shape[1]

    @property
    def vocabulary(self) -> set[int]:
        return set(self.node_ids)

    def __contains__(self, node_id) -> bool:
        return node_id in self._index

    def __len__(self) -> int:
        return len(self.node_ids)

    def index_of(self, node_id: int) -> int:
        try:
            return self._index[node_id]
        except KeyError:
            raise VocabularyError(f"node {node_id} not in embedding vocabulary") from None

    def vector(self, node_id: int) -> np.ndarray:
        return self.input_vectors[self.index_of(node_id)]


def build_vocabulary(corpus: WalkCorpus, min_count: int = 1) -> dict[int, int]:
    """Corpus frequency of every node occurring at least min_count times, by node id."""
    counts: Counter[int] = Counter()
    for walk in corpus.walks:
        counts.update(walk)
    if not counts:
        raise DataError("cannot build a vocabulary from an empty corpus")
    vocab = {nid: c for nid, c in counts.items() if c >= min_count}
    if not vocab:
        raise DataError(f"no node occurs at least min_count={min_count} times")
    return dict(sorted(vocab.items()))


def negative_sampling_distribution(vocab: dict[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """(node ids, probabilities) for the frequency^(3/4) negative-sampling draw."""
    ids = np.fromiter(vocab.keys(), dtype=np.int64, count=len(vocab))
    weights = np.fromiter(vocab.values(), dtype=np.float64, count=len(vocab)) ** 0.75
    return ids, weights / weights.sum()


def _pair_step(inp, out, ci, xi, neg_idx, lr) -> float:
    # Loss and all gradients are evaluated at the pre-update parameters.
    v = inp[ci]
    u_pos = out[xi]
    u_neg = out[neg_idx]
    pos_dot = float(u_pos @ v)
    neg_dot = u_neg @ v
    loss = float(np.logaddexp(0.0, -pos_dot) + np.logaddexp(0.0, neg_dot).sum())
    g_pos = expit(pos_dot) - 1.0
    g_neg = expit(neg_dot)
    grad_v = g_pos * u_pos + g_neg @ u_neg
    out[xi] = u_pos - (lr * g_pos) * v
    if len(neg_idx) == len(set(neg_idx.tolist())):
        out[neg_idx] = u_neg - lr * np.outer(g_neg, v)
    else:
        # Repeated negatives accumulate their gradients.
        np.subtract.at(out, neg_idx, lr * np.outer(g_neg, v))
    inp[ci] = v - lr * grad_v
    return loss


def sgns_pair_step(center, context, negatives, lr, table: EmbeddingTable) -> float:
    """One SGD step on a (center, context) pair; returns the pre-update loss.

    Negatives must exclude the context node (caller contract).
    """
    if table.output_vectors is None:
        raise VocabularyError("table has no output vectors (loaded from disk?)")
    ci = table.index_of(center)
    xi = table.index_of(context)
    neg_idx = np.array([table.index_of(n) for n in negatives], dtype=np.int64)
    return _pair_step(table.input_vectors, table.output_vectors, ci, xi, neg_idx, lr)


def _draw_negatives(rng, cumulative, k, exclude_idx) -> np.ndarray:
    idx = np.searchsorted(cumulative, rng.random(k), side="right")
    for _ in range(100):
        bad = idx == exclude_idx
        if not bad.any():
            return idx
        idx[bad] = np.searchsorted(cumulative, rng.random(int(bad.sum())), side="right")
    # Vocabulary so small the excluded node keeps coming up; drop those draws.
    return idx[idx != exclude_idx]


def train(corpus: WalkCorpus, cfg: TrainConfig) -> EmbeddingTable:
    """Train embeddings over the corpus; deterministic given (corpus, cfg)."""
    vocab = build_vocabulary(corpus, cfg.min_count)
    node_ids = list(vocab)
    index = {nid: i for i, nid in enumerate(node_ids)}
    n, d = len(node_ids), cfg.dim

    rng = np.random.default_rng([_TRAIN_STREAM, cfg.seed])
    inp = (rng.random((n, d)) - 0.5) / d
    out = np.zeros((n, d))

    _, probs = negative_sampling_distribution(vocab)
    cumulative = np.cumsum(probs)
    cumulative[-1] = 1.0

    seqs = [[index[x] for x in walk if x in index] for walk in corpus.walks]
    window = cfg.window
    pairs_per_epoch = 0
    for seq in seqs:
        length = len(seq)
        for pos in range(length):
            pairs_per_epoch += min(length, pos + window + 1) - max(0, pos - window) - 1
    total_steps = cfg.epochs * pairs_per_epoch
    if total_steps == 0:
        raise DataError("corpus yields no training pairs (all walks too short?)")

    lr0 = cfg.learning_rate
    lr_min = cfg.min_learning_rate
    k = cfg.negatives
    step = 0
    epoch_losses = []
    for _ in range(cfg.epochs):
        loss_sum = 0.0
        for seq in seqs:
            length = len(seq)
            for pos in range(length):
                ci = seq[pos]
                lo = 0 if pos < window else pos - window
                hi = min(length, pos + window + 1)
                for j in range(lo, hi):
                    if j == pos:
                        continue
                    xi = seq[j]
                    lr = max(lr_min, lr0 * (1.0 - step / total_steps))
                    neg_idx = _draw_negatives(rng, cumulative, k, xi)
                    loss_sum += _pair_step(inp, out, ci, xi, neg_idx, lr)
                    step += 1
        epoch_losses.append(loss_sum / pairs_per_epoch)
    return EmbeddingTable(node_ids, inp, out, epoch_losses=epoch_losses)


def save_embeddings(table: EmbeddingTable, path) -> None:
    """Text format: header '<node_count> <dim>', then '<node_id> <f1> ... <fd>' rows.

    Floats are written with repr so the round trip is bit-exact.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{len(table)} {table.dim}\n")
        for nid, row in zip(table.node_ids, table.input_vectors):
            f.write(f"{nid} " + " ".join(repr(float(x)) for x in row) + "\n")


def load_embeddings(path) -> EmbeddingTable:
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise DataError(f"{path}:1: expected header '<node_count> <dim>'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise DataError(f"{path}:1: malformed header: {exc}") from exc
        node_ids = []
        vectors = np.empty((count, dim))
        row = 0
        for lineno, line in enumerate(f, 2):
            parts = line.split()
            if not parts:
                continue
            if row >= count:
                raise DataError(f"{path}:{lineno}: more rows than the header declares")
            if len(parts) != dim + 1:
                raise DataError(
                    f"{path}:{lineno}: expected {dim + 1} columns, got {len(parts)}"
                )
            try:
                node_ids.append(int(parts[0]))
                vectors[row] = [float(x) for x in parts[1:]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            row += 1
    if len(node_ids) != count:
        raise DataError(f"{path}: header declares {count} rows, found {len(node_ids)}")
    return EmbeddingTable(node_ids, vectors)
