"""Type-biased random walks over the heterogeneous graph.

Each step leaves node v toward neighbor w with probability proportional to
``coeff(type(v), type(w)) / |N_type(w)(v)|``, renormalized over the neighbors
v actually has; node pairs without an edge get probability zero. Sampling is
two-stage (pick a neighbor type by its coefficient, then a uniform member of
that type's partition), which is mathematically identical to the renormalized
per-neighbor formula and O(1) per step after partition lookup.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .graph import NODE_TYPES, HinGraph, NodeType

logger = logging.getLogger(__name__)

# Stream tag mixed into per-walk seeds so other seeded subsystems never collide.
_WALK_STREAM = 101


@dataclass(frozen=True)
class TransitionMatrix:
    """Symmetric type-pair coefficients; the six free entries sum to one."""

    user_user: float = 1.0 / 6.0
    user_entity: float = 1.0 / 6.0
    user_item: float = 1.0 / 6.0
    entity_item: float = 1.0 / 6.0
    entity_entity: float = 1.0 / 6.0
    item_item: float = 1.0 / 6.0

    def __post_init__(self):
        values = self._values()
        if any(v < 0 for v in values):
            raise ValueError("transition coefficients must be nonnegative")
        total = sum(values)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"transition coefficients must sum to 1, got {total}")
        # Remove float drift so downstream normalizations are exact.
        for name in self.__dataclass_fields__:
            object.__setattr__(self, name, getattr(self, name) / total)

    def _values(self) -> tuple[float, ...]:
        return (
            self.user_user,
            self.user_entity,
            self.user_item,
            self.entity_item,
            self.entity_entity,
            self.item_item,
        )

    @classmethod
    def uniform(cls) -> "TransitionMatrix":
        return cls()

    def coefficient(self, a: NodeType, b: NodeType) -> float:
        pair = frozenset((a, b))
        if pair == frozenset((NodeType.USER,)):
            return self.user_user
        if pair == frozenset((NodeType.USER, NodeType.ENTITY)):
            return self.user_entity
        if pair == frozenset((NodeType.USER, NodeType.ITEM)):
            return self.user_item
        if pair == frozenset((NodeType.ENTITY, NodeType.ITEM)):
            return self.entity_item
        if pair == frozenset((NodeType.ENTITY,)):
            return self.entity_entity
        return self.item_item


@dataclass(frozen=True)
class WalkConfig:
    walks_per_node: int = 10
    walk_length: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.walks_per_node < 1:
            raise ValueError("walks_per_node must be >= 1")
        if self.walk_length < 2:
            raise ValueError("walk_length must be >= 2")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a nonnegative 64-bit integer")


@dataclass
class WalkCorpus:
    """Generated walks plus enough metadata to reproduce them."""

    walks: list[list[int]]
    graph_fingerprint: str
    walks_per_node: int = 0
    walk_length: int = 0
    seed: int = 0

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(
                f"#walks {self.walks_per_node} length {self.walk_length} "
                f"seed {self.seed} graph {self.graph_fingerprint}\n"
            )
            for walk in self.walks:
                f.write(" ".join(str(v) for v in walk) + "\n")

    @classmethod
    def load(cls, path) -> "WalkCorpus":
        with open(path, encoding="utf-8") as f:
            header = f.readline().rstrip("\n")
            parts = header.split()
            if len(parts) != 8 or parts[0] != "#walks":
                raise DataError(f"{path}:1: malformed corpus header")
            try:
                walks_per_node = int(parts[1])
                walk_length = int(parts[3])
                seed = int(parts[5])
            except ValueError as exc:
                raise DataError(f"{path}:1: malformed corpus header: {exc}") from exc
            fingerprint = parts[7]
            walks = []
            for lineno, line in enumerate(f, 2):
                line = line.strip()
                if not line:
                    continue
                try:
                    walks.append([int(tok) for tok in line.split()])
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: non-integer walk token: {exc}") from exc
        return cls(walks, fingerprint, walks_per_node, walk_length, seed)


def transition_distribution(
    g: HinGraph, v: int, tm: TransitionMatrix
) -> list[tuple[int, float]]:
    """Per-neighbor step probabilities out of v, ascending by node id.

    Empty when v is isolated or every neighbor type has a zero coefficient.
    """
    vt = g.node_type(v)
    masses: list[tuple[int, float]] = []
    total = 0.0
    for t in NODE_TYPES:
        nbrs = g.neighbors_by_type(v, t)
        if not nbrs:
            continue
        c = tm.coefficient(vt, t)
        if c <= 0.0:
            continue
        per_neighbor = c / len(nbrs)
        for w in nbrs:
            masses.append((w, per_neighbor))
        total += c
    if total <= 0.0:
        return []
    masses.sort()
    return [(w, m / total) for w, m in masses]


class _StepSampler:
    """Lazily cached per-node cumulative type weights and partitions."""

    def __init__(self, g: HinGraph, tm: TransitionMatrix):
        self._g = g
        self._tm = tm
        self._cache: dict[int, tuple[list[float], list[list[int]]] | None] = {}

    def _node_entry(self, v: int):
        entry = self._cache.get(v, False)
        if entry is not False:
            return entry
        g, tm = self._g, self._tm
        vt = g.node_type(v)
        cum: list[float] = []
        partitions: list[list[int]] = []
        total = 0.0
        for t in NODE_TYPES:
            nbrs = g.neighbors_by_type(v, t)
            if not nbrs:
                continue
            c = tm.coefficient(vt, t)
            if c <= 0.0:
                continue
            total += c
            cum.append(total)
            partitions.append(nbrs)
        if total <= 0.0:
            entry = None
        else:
            entry = ([c / total for c in cum], partitions)
        self._cache[v] = entry
        return entry

    def step(self, v: int, rng: np.random.Generator) -> int | None:
        entry = self._node_entry(v)
        if entry is None:
            return None
        cum, partitions = entry
        t_idx = bisect.bisect_right(cum, rng.random())
        if t_idx >= len(partitions):  # guard against u == 1.0 edge of float
            t_idx = len(partitions) - 1
        part = partitions[t_idx]
        return part[int(rng.integers(len(part)))]


def generate_walk(
    g: HinGraph,
    start: int,
    cfg: WalkConfig,
    tm: TransitionMatrix,
    rng: np.random.Generator,
    _sampler: _StepSampler | None = None,
) -> list[int]:
    """One walk from ``start``, truncated early when no move is available."""
    sampler = _sampler if _sampler is not None else _StepSampler(g, tm)
    walk = [start]
    while len(walk) < cfg.walk_length:
        nxt = sampler.step(walk[-1], rng)
        if nxt is None:
            break
        walk.append(nxt)
    return walk


def walk_rng(seed: int, node: int, walk_index: int) -> np.random.Generator:
    """Independent stream per (seed, node, walk index); order of generation is irrelevant."""
    return np.random.default_rng([_WALK_STREAM, seed, node, walk_index])


def generate_corpus(g: HinGraph, cfg: WalkConfig, tm: TransitionMatrix) -> WalkCorpus:
    """All walks for the whole graph: walks_per_node per node, deterministic node order."""
    sampler = _StepSampler(g, tm)
    walks = []
    for node in range(g.node_count):
        for w in range(cfg.walks_per_node):
            rng = walk_rng(cfg.seed, node, w)
            walks.append(generate_walk(g, node, cfg, tm, rng, _sampler=sampler))
    logger.info("generated %d walks over %d nodes", len(walks), g.node_count)
    return WalkCorpus(
        walks=walks,
        graph_fingerprint=g.fingerprint(),
        walks_per_node=cfg.walks_per_node,
        walk_length=cfg.walk_length,
        seed=cfg.seed,
    )
