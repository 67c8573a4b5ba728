"""Interaction and entity-link records shared by ingestion, models and the graph builder."""

from __future__ import annotations

from dataclasses import dataclass

# Entity-link origins.
ORIGIN_CATEGORY = "category"
ORIGIN_CUISINE = "cuisine"
ORIGIN_FRIENDSHIP = "friendship"
ORIGIN_REVIEW_TERM = "review_term"
VALID_ORIGINS = frozenset(
    {ORIGIN_CATEGORY, ORIGIN_CUISINE, ORIGIN_FRIENDSHIP, ORIGIN_REVIEW_TERM}
)

SOURCE_USER = "user"
SOURCE_ITEM = "item"


def _check_key(name: str, value: str) -> None:
    if not value:
        raise ValueError(f"{name} must be nonempty")
    if "\t" in value or "\n" in value:
        raise ValueError(f"{name} must not contain tabs or newlines: {value!r}")


@dataclass(frozen=True)
class InteractionRecord:
    """One (user, item, rating) event, optionally timestamped and with review text."""

    user_key: str
    item_key: str
    rating: float
    timestamp: float | None = None
    review_text: str | None = None

    def __post_init__(self):
        _check_key("user_key", self.user_key)
        _check_key("item_key", self.item_key)


@dataclass(frozen=True)
class EntityLink:
    """Association between a user or item and an entity (or another user for friendships)."""

    source_kind: str
    source_key: str
    entity_key: str
    origin: str

    def __post_init__(self):
        if self.source_kind not in (SOURCE_USER, SOURCE_ITEM):
            raise ValueError(f"source_kind must be 'user' or 'item', got {self.source_kind!r}")
        if self.origin not in VALID_ORIGINS:
            raise ValueError(f"unknown link origin {self.origin!r}")
        _check_key("source_key", self.source_key)
        _check_key("entity_key", self.entity_key)
