"""Dataset ingestion, entity extraction, sparsity filtering and the synthetic
planted-cluster generator used as ground truth in tests and experiments.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import DataError
from .records import (
    ORIGIN_CATEGORY,
    ORIGIN_FRIENDSHIP,
    ORIGIN_REVIEW_TERM,
    SOURCE_ITEM,
    SOURCE_USER,
    EntityLink,
    InteractionRecord,
)

logger = logging.getLogger(__name__)

_SYNTH_STREAM = 606

# Curated domain terms for review-text entity extraction; callers may swap in
# their own vocabulary (one term per line in a config-referenced file).
DEFAULT_ENTITY_VOCABULARY = (
    "sushi", "sashimi", "ramen", "noodle", "pho", "dumpling", "curry",
    "pizza", "pasta", "taco", "burrito", "burger", "steak", "seafood",
    "bbq", "barbecue", "falafel", "kebab", "paella", "tapas", "brunch",
    "breakfast", "dessert", "pastry", "espresso", "cocktail", "wine",
    "beer", "vegan", "vegetarian", "buffet", "patio", "rooftop", "pool",
    "spa", "gym", "wifi", "parking", "shuttle", "beach", "view", "suite",
    "balcony", "lounge", "karaoke",
)


@dataclass
class IngestResult:
    records: list[InteractionRecord] = field(default_factory=list)
    entity_links: list[EntityLink] = field(default_factory=list)
    malformed: int = 0
    total_lines: int = 0


def _parse_timestamp(value) -> float | None:
    if not value:
        return None
    for fmt in ("%Y-%m-%d %H:%M:%S", "%Y-%m-%d"):
        try:
            dt = datetime.strptime(str(value), fmt).replace(tzinfo=timezone.utc)
            return dt.timestamp()
        except ValueError:
            continue
    return None


def _split_listish(value) -> list[str]:
    # Yelp encodes list fields either as "A, B, C" strings or real lists.
    if value is None:
        return []
    if isinstance(value, str):
        parts = value.split(",")
    else:
        parts = list(value)
    return [p.strip() for p in parts if p and p.strip()]


def _iter_jsonl(path):
    try:
        f = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            yield lineno, line


def _abort_if_mostly_malformed(result: IngestResult, path) -> None:
    if result.total_lines and result.malformed * 2 > result.total_lines:
        raise DataError(
            f"{path}: {result.malformed} of {result.total_lines} lines malformed, aborting"
        )


def load_yelp(review_path, business_path, user_path) -> IngestResult:
    """Reviews plus category entities and user friendships from the Yelp trio
    of newline-delimited JSON files. Malformed lines are counted and skipped;
    more than 50% malformed review lines aborts with the count."""
    result = IngestResult()
    for lineno, line in _iter_jsonl(review_path):
        result.total_lines += 1
        try:
            obj = json.loads(line)
            record = InteractionRecord(
                user_key=str(obj["user_id"]),
                item_key=str(obj["business_id"]),
                rating=float(obj["stars"]),
                timestamp=_parse_timestamp(obj.get("date")),
                review_text=obj.get("text") or None,
            )
        except (KeyError, TypeError, ValueError) as exc:
            logger.debug("%s:%d: skipping malformed review (%s)", review_path, lineno, exc)
            result.malformed += 1
            continue
        result.records.append(record)
    _abort_if_mostly_malformed(result, review_path)

    item_keys = {r.item_key for r in result.records}
    user_keys = {r.user_key for r in result.records}

    for lineno, line in _iter_jsonl(business_path):
        try:
            obj = json.loads(line)
            business = str(obj["business_id"])
            categories = _split_listish(obj.get("categories"))
        except (KeyError, TypeError, ValueError) as exc:
            logger.debug("%s:%d: skipping malformed business (%s)", business_path, lineno, exc)
            result.malformed += 1
            continue
        if business not in item_keys:
            continue
        for cat in categories:
            result.entity_links.append(
                EntityLink(
                    source_kind=SOURCE_ITEM,
                    source_key=business,
                    entity_key="category:" + cat.lower(),
                    origin=ORIGIN_CATEGORY,
                )
            )

    for lineno, line in _iter_jsonl(user_path):
        try:
            obj = json.loads(line)
            user = str(obj["user_id"])
            friends = _split_listish(obj.get("friends"))
        except (KeyError, TypeError, ValueError) as exc:
            logger.debug("%s:%d: skipping malformed user (%s)", user_path, lineno, exc)
            result.malformed += 1
            continue
        if user not in user_keys:
            continue
        for friend in friends:
            if friend == "None" or friend == user or friend not in user_keys:
                continue
            result.entity_links.append(
                EntityLink(
                    source_kind=SOURCE_USER,
                    source_key=user,
                    entity_key=friend,
                    origin=ORIGIN_FRIENDSHIP,
                )
            )
    return result


def load_tripadvisor(path, vocabulary: tuple[str, ...] | None = None) -> IngestResult:
    """Hotel reviews from newline-delimited JSON. Lines may be whole-hotel
    objects carrying a Reviews array, or single flattened review objects.
    Entity links come only from review-term extraction."""
    vocab = DEFAULT_ENTITY_VOCABULARY if vocabulary is None else vocabulary
    result = IngestResult()

    def _rating_of(obj):
        ratings = obj.get("Ratings") or obj.get("ratings")
        if isinstance(ratings, dict):
            return float(ratings.get("Overall") or ratings.get("overall"))
        return float(obj.get("Overall") or obj.get("overall"))

    def _one_review(obj, hotel_key):
        user = str(obj.get("Author") or obj.get("author") or obj.get("user_id"))
        if user == "None":
            raise ValueError("missing author")
        text = obj.get("Content") or obj.get("content") or obj.get("text")
        record = InteractionRecord(
            user_key=user,
            item_key=hotel_key,
            rating=_rating_of(obj),
            timestamp=_parse_timestamp(obj.get("Date") or obj.get("date")),
            review_text=text or None,
        )
        result.records.append(record)
        if text:
            for term in extract_entities(text, vocab):
                entity = "term:" + term
                result.entity_links.append(
                    EntityLink(SOURCE_USER, record.user_key, entity, ORIGIN_REVIEW_TERM)
                )
                result.entity_links.append(
                    EntityLink(SOURCE_ITEM, record.item_key, entity, ORIGIN_REVIEW_TERM)
                )

    for lineno, line in _iter_jsonl(path):
        result.total_lines += 1
        try:
            obj = json.loads(line)
            if "Reviews" in obj:
                info = obj.get("HotelInfo") or {}
                hotel = str(info.get("HotelID") or obj.get("hotel_id"))
                if hotel == "None":
                    raise ValueError("missing hotel id")
                for review in obj["Reviews"]:
                    _one_review(review, hotel)
            else:
                hotel = str(obj.get("hotel_id") or obj.get("HotelID"))
                if hotel == "None":
                    raise ValueError("missing hotel id")
                _one_review(obj, hotel)
        except (KeyError, TypeError, ValueError) as exc:
            logger.debug("%s:%d: skipping malformed line (%s)", path, lineno, exc)
            result.malformed += 1
    _abort_if_mostly_malformed(result, path)
    if not result.records:
        logger.warning("%s: no reviews loaded", path)
    return result


def extract_entities(review_text: str, vocabulary) -> list[str]:
    """Case-insensitive whole-word vocabulary matches, deduplicated, in order
    of first occurrence."""
    if not review_text:
        return []
    terms = [t for t in vocabulary if t]
    if not terms:
        return []
    pattern = re.compile(
        r"\b(" + "|".join(re.escape(t) for t in terms) + r")\b", re.IGNORECASE
    )
    seen = set()
    found = []
    for match in pattern.finditer(review_text):
        term = match.group(1).lower()
        if term not in seen:
            seen.add(term)
            found.append(term)
    return found


def filter_sparse(
    records: list[InteractionRecord], min_count: int = 5, single_pass: bool = False
) -> list[InteractionRecord]:
    """Drop users and items with fewer than min_count interactions.

    By default removal iterates to a fixed point, since dropping a user can
    push an item below the bar and vice versa. ``single_pass`` applies one
    round only.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    current = list(records)
    while True:
        user_n: dict[str, int] = {}
        item_n: dict[str, int] = {}
        for r in current:
            user_n[r.user_key] = user_n.get(r.user_key, 0) + 1
            item_n[r.item_key] = item_n.get(r.item_key, 0) + 1
        kept = [
            r
            for r in current
            if user_n[r.user_key] >= min_count and item_n[r.item_key] >= min_count
        ]
        if len(kept) == len(current) or single_pass:
            if not kept:
                logger.warning("filter_sparse(min_count=%d) removed every record", min_count)
            return kept
        current = kept


# -- synthetic planted-cluster dataset ----------------------------------------


@dataclass
class SynthData:
    records: list[InteractionRecord]
    entity_links: list[EntityLink]
    user_cluster: dict[str, int]
    item_cluster: dict[str, int]


def synth_dataset(
    clusters: int,
    users_per_cluster: int,
    items_per_cluster: int,
    cross_rate: float = 0.05,
    noise: float = 0.5,
    seed: int = 0,
    interactions_per_user: int = 12,
) -> SynthData:
    """Planted-cluster interactions: users rate in-cluster items high
    (5 - noise jitter) with probability 1 - cross_rate and out-cluster items
    low. One entity per cluster links to that cluster's items, and the
    returned cluster labels are the ground truth for downstream assertions.
    """
    if clusters < 2:
        raise ValueError("need at least 2 clusters")
    rng = np.random.default_rng([_SYNTH_STREAM, seed])

    user_cluster: dict[str, int] = {}
    item_cluster: dict[str, int] = {}
    items_by_cluster: list[list[str]] = []
    for c in range(clusters):
        cluster_items = [f"c{c}_i{j}" for j in range(items_per_cluster)]
        items_by_cluster.append(cluster_items)
        for it in cluster_items:
            item_cluster[it] = c

    records = []
    seen_pairs = set()
    for c in range(clusters):
        foreign = [x for x in range(clusters) if x != c]
        for j in range(users_per_cluster):
            user = f"c{c}_u{j}"
            user_cluster[user] = c
            # Cross draws rotate through the foreign clusters so every user
            # leaves evidence on each of them, which is what lets a rating
            # model generalize the home-cluster preference.
            cross_cursor = int(rng.integers(len(foreign)))
            for t in range(interactions_per_user):
                if rng.random() >= cross_rate:
                    item = items_by_cluster[c][int(rng.integers(items_per_cluster))]
                    rating = 5.0 - noise * float(rng.random())
                else:
                    other = foreign[cross_cursor % len(foreign)]
                    cross_cursor += 1
                    item = items_by_cluster[other][int(rng.integers(items_per_cluster))]
                    rating = 1.0 + noise * float(rng.random())
                if (user, item) in seen_pairs:
                    continue
                seen_pairs.add((user, item))
                records.append(
                    InteractionRecord(
                        user_key=user,
                        item_key=item,
                        rating=min(max(rating, 1.0), 5.0),
                        timestamp=float(t),
                    )
                )

    entity_links = [
        EntityLink(SOURCE_ITEM, it, f"cluster:{c}", ORIGIN_CATEGORY)
        for c in range(clusters)
        for it in items_by_cluster[c]
    ]
    return SynthData(records, entity_links, user_cluster, item_cluster)


# -- inter-stage TSV artifacts -------------------------------------------------


def write_interactions(path, records: list[InteractionRecord]) -> None:
    """user, item, rating, timestamp columns; review text is not persisted."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("# user\titem\trating\ttimestamp\n")
        for r in records:
            ts = "" if r.timestamp is None else repr(float(r.timestamp))
            f.write(f"{r.user_key}\t{r.item_key}\t{r.rating!r}\t{ts}\n")


def read_interactions(path) -> list[InteractionRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 columns, got {len(parts)}")
            try:
                records.append(
                    InteractionRecord(
                        user_key=parts[0],
                        item_key=parts[1],
                        rating=float(parts[2]),
                        timestamp=float(parts[3]) if parts[3] else None,
                    )
                )
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return records


def write_entity_links(path, links: list[EntityLink]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("# source_kind\tsource\tentity\torigin\n")
        for link in links:
            f.write(f"{link.source_kind}\t{link.source_key}\t{link.entity_key}\t{link.origin}\n")


def read_entity_links(path) -> list[EntityLink]:
    links = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 columns, got {len(parts)}")
            try:
                links.append(EntityLink(*parts))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return links


def write_cluster_labels(path, data: SynthData) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("# kind\tkey\tcluster\n")
        for user in sorted(data.user_cluster):
            f.write(f"user\t{user}\t{data.user_cluster[user]}\n")
        for item in sorted(data.item_cluster):
            f.write(f"item\t{item}\t{data.item_cluster[item]}\n")


def read_cluster_labels(path) -> tuple[dict[str, int], dict[str, int]]:
    users: dict[str, int] = {}
    items: dict[str, int] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
            kind, key, cluster = parts
            target = users if kind == "user" else items
            target[key] = int(cluster)
    return users, items


def load_vocabulary_file(path) -> tuple[str, ...]:
    """One term per line; blank lines and # comments ignored."""
    terms = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            term = line.strip()
            if term and not term.startswith("#"):
                terms.append(term.lower())
    if not terms:
        raise DataError(f"{path}: vocabulary file has no terms")
    return tuple(terms)
