"""Expected-set construction, hybrid utility scoring and top-N recommendation.

A user's expected set is the hull spanned by their own embedding plus the
embeddings of the items they interacted with in train (optionally also their
one-hop entity neighbors). Candidates are scored by

    utility = (1 - alpha) * rating + alpha * unexpectedness

where both terms are min-max normalized to [0, 1] by default: the rating over
the declared rating scale, the unexpectedness over the candidate batch being
scored. Raw (unnormalized) combination is available behind a flag.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingTable
from .errors import DataError, UnknownNodeError, VocabularyError
from .graph import HinGraph, NodeType, item_node_key, user_node_key
from .hull import (
    DEFAULT_BOUNDARY_EPS,
    DEFAULT_DEPTH_DIRECTIONS,
    HullVertices,
    signed_unexpectedness,
)
from .ratings import RatingModel, predict

logger = logging.getLogger(__name__)

POLICY_BASE = "base"
POLICY_BASE_WITH_ENTITIES = "base_with_entities"


@dataclass(frozen=True)
class ExpectedSetPolicy:
    kind: str = POLICY_BASE
    include_user_vertex: bool = True

    def __post_init__(self):
        if self.kind not in (POLICY_BASE, POLICY_BASE_WITH_ENTITIES):
            raise ValueError(f"unknown expected-set policy {self.kind!r}")


@dataclass(frozen=True)
class RecommenderConfig:
    alpha: float = 0.5
    top_n: int = 10
    normalize_components: bool = True
    useful_threshold: float = 4.0
    boundary_eps: float = DEFAULT_BOUNDARY_EPS
    depth_directions: int = DEFAULT_DEPTH_DIRECTIONS
    max_hull_vertices: int = 2000
    candidate_cap: int = 0  # 0 = full catalog

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")


@dataclass(frozen=True)
class ScoredItem:
    item_key: str
    predicted_rating: float
    rating_norm: float
    unexp_norm: float
    unexpectedness_raw: float
    utility: float


@dataclass(frozen=True)
class RecommendationList:
    user_key: str
    items: tuple[ScoredItem, ...]
    n: int


def expected_set(
    user_key: str,
    graph: HinGraph,
    embeddings: EmbeddingTable,
    train_items: list[tuple[str, float | None]],
    policy: ExpectedSetPolicy = ExpectedSetPolicy(),
    max_vertices: int = 2000,
) -> tuple[HullVertices, int]:
    """Hull vertices of the user's expected set, plus the count of skipped items.

    ``train_items`` is the user's train interactions as (item_key, timestamp)
    in record order. When the set would exceed ``max_vertices``, only the most
    recent interactions are kept (timestamps when present, record order
    otherwise). Items without an embedding are skipped and counted.
    """
    uid = graph.id_for_key(user_node_key(user_key))
    if uid is None:
        raise UnknownNodeError(f"user {user_key!r} not in graph")
    points = []
    skipped = 0
    if policy.include_user_vertex:
        if uid not in embeddings:
            raise VocabularyError(f"user {user_key!r} has no embedding")
        points.append(embeddings.vector(uid))

    selected = train_items
    if len(selected) > max_vertices:
        order = sorted(
            range(len(selected)),
            key=lambda i: (selected[i][1] if selected[i][1] is not None else float(i), i),
        )
        keep = set(order[-max_vertices:])
        selected = [selected[i] for i in sorted(keep)]
    for item_key, _ in selected:
        iid = graph.id_for_key(item_node_key(item_key))
        if iid is None or iid not in embeddings:
            skipped += 1
            continue
        points.append(embeddings.vector(iid))

    if policy.kind == POLICY_BASE_WITH_ENTITIES:
        for eid in graph.neighbors_by_type(uid, NodeType.ENTITY):
            if eid in embeddings:
                points.append(embeddings.vector(eid))
            else:
                skipped += 1

    if skipped:
        logger.debug("expected_set(%s): skipped %d vertices without embeddings", user_key, skipped)
    return HullVertices(np.array(points)), skipped


def score_candidates(
    user_key: str,
    candidate_items: list[str],
    user_hull: HullVertices,
    model: RatingModel,
    embeddings: EmbeddingTable,
    graph: HinGraph,
    cfg: RecommenderConfig = RecommenderConfig(),
) -> list[ScoredItem]:
    """Score a candidate batch; the unexpectedness min-max runs over this batch."""
    raws = []
    preds = []
    for item_key in candidate_items:
        iid = graph.id_for_key(item_node_key(item_key))
        if iid is None:
            raise UnknownNodeError(f"item {item_key!r} not in graph")
        sd = signed_unexpectedness(
            user_hull,
            embeddings.vector(iid),
            eps=cfg.boundary_eps,
            directions=cfg.depth_directions,
        )
        raws.append(sd.value)
        preds.append(predict(model, user_key, item_key))
    if not candidate_items:
        return []

    lo, hi = min(raws), max(raws)
    span = hi - lo
    scored = []
    for item_key, raw, pred in zip(candidate_items, raws, preds):
        rating_norm = (pred - model.rating_min) / (model.rating_max - model.rating_min)
        unexp_norm = (raw - lo) / span if span > 0 else 0.5
        if cfg.normalize_components:
            utility = (1.0 - cfg.alpha) * rating_norm + cfg.alpha * unexp_norm
        else:
            utility = (1.0 - cfg.alpha) * pred + cfg.alpha * raw
        scored.append(
            ScoredItem(
                item_key=item_key,
                predicted_rating=pred,
                rating_norm=rating_norm,
                unexp_norm=unexp_norm,
                unexpectedness_raw=raw,
                utility=utility,
            )
        )
    return scored


def recommend_top_n(
    user_key: str,
    scored: list[ScoredItem],
    cfg: RecommenderConfig,
    graph: HinGraph,
) -> RecommendationList:
    """Descending utility; ties broken by higher raw unexpectedness, then node id."""

    def sort_key(s: ScoredItem):
        return (
            -s.utility,
            -s.unexpectedness_raw,
            graph.id_for_key(item_node_key(s.item_key)),
        )

    ranked = sorted(scored, key=sort_key)
    return RecommendationList(user_key=user_key, items=tuple(ranked[: cfg.top_n]), n=cfg.top_n)


def stratified_candidate_cap(
    candidates: list[str], popularity: dict[str, int], cap: int
) -> list[str]:
    """Deterministic popularity-stratified subsample of an oversized candidate set."""
    if cap <= 0 or len(candidates) <= cap:
        return candidates
    ranked = sorted(candidates, key=lambda it: (-popularity.get(it, 0), it))
    positions = np.linspace(0, len(ranked) - 1, cap).round().astype(int)
    return [ranked[p] for p in sorted(set(int(p) for p in positions))]


def recommend_all(
    user_keys: list[str],
    graph: HinGraph,
    embeddings: EmbeddingTable,
    model: RatingModel,
    train_map: dict[str, list[tuple[str, float | None]]],
    catalog: list[str],
    policy: ExpectedSetPolicy = ExpectedSetPolicy(),
    cfg: RecommenderConfig = RecommenderConfig(),
) -> dict[str, RecommendationList]:
    """Top-N for every user over the unseen portion of the catalog.

    Users without an embedding, and candidate items without one, are skipped
    (logged). Per-user computations are independent of one another.
    """
    embedded_catalog = []
    for item_key in sorted(set(catalog)):
        iid = graph.id_for_key(item_node_key(item_key))
        if iid is not None and iid in embeddings:
            embedded_catalog.append(item_key)
    dropped_items = len(set(catalog)) - len(embedded_catalog)
    if dropped_items:
        logger.warning("recommend_all: %d catalog items lack embeddings", dropped_items)

    popularity: dict[str, int] = {}
    for items in train_map.values():
        for item_key, _ in items:
            popularity[item_key] = popularity.get(item_key, 0) + 1

    results: dict[str, RecommendationList] = {}
    skipped_users = 0
    for user_key in sorted(set(user_keys)):
        uid = graph.id_for_key(user_node_key(user_key))
        if uid is None or uid not in embeddings:
            skipped_users += 1
            continue
        train_items = train_map.get(user_key, [])
        seen = {item_key for item_key, _ in train_items}
        candidates = [it for it in embedded_catalog if it not in seen]
        candidates = stratified_candidate_cap(candidates, popularity, cfg.candidate_cap)
        user_hull, _ = expected_set(
            user_key, graph, embeddings, train_items, policy, cfg.max_hull_vertices
        )
        scored = score_candidates(
            user_key, candidates, user_hull, model, embeddings, graph, cfg
        )
        results[user_key] = recommend_top_n(user_key, scored, cfg, graph)
    if skipped_users:
        logger.warning("recommend_all: skipped %d users without embeddings", skipped_users)
    return results


def write_recommendations(path, recommendations: dict[str, RecommendationList]) -> None:
    """One line per (user, rank): user, item, utility, rating_norm, raw unexpectedness."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for user_key in sorted(recommendations):
            for s in recommendations[user_key].items:
                f.write(
                    f"{user_key}\t{s.item_key}\t{s.utility!r}\t"
                    f"{s.rating_norm!r}\t{s.unexpectedness_raw!r}\n"
                )


def read_recommendations(path) -> dict[str, list[tuple[str, float, float, float]]]:
    """Parsed rows of a recommendations file, per user in rank order."""
    out: dict[str, list[tuple[str, float, float, float]]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 columns, got {len(parts)}")
            user, item, utility, rating_norm, unexp_raw = parts
            out.setdefault(user, []).append(
                (item, float(utility), float(rating_norm), float(unexp_raw))
            )
    return out
