"""Typed undirected graph over user/item/entity nodes with type-partitioned adjacency.

Construction is an explicit two-phase protocol: add nodes and edges, then
``freeze()``. A frozen graph is immutable, has deterministically sorted
adjacency, and is safe for concurrent reads by any number of walkers.
"""

from __future__ import annotations

import hashlib
import logging
from enum import Enum
from typing import Iterable, Iterator

from .errors import DataError, FrozenGraphError, SelfLoopError, UnknownNodeError
from .records import ORIGIN_FRIENDSHIP, SOURCE_USER, EntityLink, InteractionRecord

logger = logging.getLogger(__name__)

# Node-key namespaces so user/item/entity external keys cannot collide.
USER_PREFIX = "u:"
ITEM_PREFIX = "i:"
ENTITY_PREFIX = "e:"


class NodeType(Enum):
    USER = "user"
    ITEM = "item"
    ENTITY = "entity"


NODE_TYPES = (NodeType.USER, NodeType.ITEM, NodeType.ENTITY)


def user_node_key(key: str) -> str:
    return USER_PREFIX + key


def item_node_key(key: str) -> str:
    return ITEM_PREFIX + key


def entity_node_key(key: str) -> str:
    return ENTITY_PREFIX + key


class HinGraph:
    """Heterogeneous network with dense integer node ids and per-type neighbor lists."""

    def __init__(self):
        self._keys: list[str] = []
        self._types: list[NodeType] = []
        self._id_of: dict[str, int] = {}
        # One dict per node: NodeType -> set while building, sorted tuple once frozen.
        self._adj: list[dict[NodeType, object]] = []
        self._frozen = False
        self._edge_count = 0

    # -- construction ------------------------------------------------------

    def add_node(self, key: str, node_type: NodeType) -> int:
        """Register a node, returning its dense id. Idempotent on the key."""
        if self._frozen:
            raise FrozenGraphError("cannot add nodes to a frozen graph")
        existing = self._id_of.get(key)
        if existing is not None:
            if self._types[existing] is not node_type:
                raise DataError(
                    f"node key {key!r} already registered as {self._types[existing].value}"
                )
            return existing
        nid = len(self._keys)
        self._keys.append(key)
        self._types.append(node_type)
        self._id_of[key] = nid
        self._adj.append({t: set() for t in NODE_TYPES})
        return nid

    def add_edge(self, a: int, b: int) -> None:
        """Connect two existing nodes. Duplicate calls are no-ops."""
        if self._frozen:
            raise FrozenGraphError("cannot add edges to a frozen graph")
        if a == b:
            raise SelfLoopError(f"self-loop on node {a}")
        self._check_id(a)
        self._check_id(b)
        bucket = self._adj[a][self._types[b]]
        if b in bucket:
            return
        bucket.add(b)
        self._adj[b][self._types[a]].add(a)
        self._edge_count += 1

    def freeze(self) -> "HinGraph":
        """Sort adjacency and seal the graph. Returns self for chaining."""
        if not self._frozen:
            for buckets in self._adj:
                for t in NODE_TYPES:
                    buckets[t] = tuple(sorted(buckets[t]))
            self._frozen = True
        return self

    # -- queries -----------------------------------------------------------

    @property
    def frozen(self) -> bool:
        return self._frozen

    @property
    def node_count(self) -> int:
        return len(self._keys)

    @property
    def edge_count(self) -> int:
        return self._edge_count

    def node_type(self, v: int) -> NodeType:
        self._check_id(v)
        return self._types[v]

    def node_key(self, v: int) -> str:
        self._check_id(v)
        return self._keys[v]

    def id_for_key(self, key: str) -> int | None:
        return self._id_of.get(key)

    def nodes(self) -> Iterator[tuple[int, NodeType, str]]:
        for nid, (t, key) in enumerate(zip(self._types, self._keys)):
            yield nid, t, key

    def neighbors_by_type(self, v: int, t: NodeType) -> list[int]:
        """Type-t neighbors of v in ascending id order. Requires a frozen graph."""
        if not self._frozen:
            raise FrozenGraphError("neighborhood queries require a frozen graph")
        self._check_id(v)
        return list(self._adj[v][t])

    def degree(self, v: int) -> int:
        self._check_id(v)
        return sum(len(self._adj[v][t]) for t in NODE_TYPES)

    def _check_id(self, v: int) -> None:
        if not 0 <= v < len(self._keys):
            raise UnknownNodeError(f"node id {v} not in graph")

    # -- persistence -------------------------------------------------------

    def _nodes_text(self) -> str:
        lines = [f"{nid}\t{t.value}\t{key}\n" for nid, t, key in self.nodes()]
        return "".join(lines)

    def _edges_text(self) -> str:
        pairs = []
        for a in range(self.node_count):
            for t in NODE_TYPES:
                for b in self._adj[a][t]:
                    if a < b:
                        pairs.append((a, b))
        pairs.sort()
        return "".join(f"{a}\t{b}\n" for a, b in pairs)

    def fingerprint(self) -> str:
        """Stable hash of the frozen graph's canonical serialization."""
        if not self._frozen:
            raise FrozenGraphError("fingerprint requires a frozen graph")
        h = hashlib.sha256()
        h.update(self._nodes_text().encode("utf-8"))
        h.update(self._edges_text().encode("utf-8"))
        return h.hexdigest()[:16]

    def save(self, nodes_path, edges_path) -> None:
        if not self._frozen:
            raise FrozenGraphError("save requires a frozen graph")
        with open(nodes_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self._nodes_text())
        with open(edges_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self._edges_text())

    @classmethod
    def load(cls, nodes_path, edges_path) -> "HinGraph":
        g = cls()
        type_by_value = {t.value: t for t in NODE_TYPES}
        with open(nodes_path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise DataError(f"{nodes_path}:{lineno}: expected 3 columns, got {len(parts)}")
                nid_s, type_s, key = parts
                if type_s not in type_by_value:
                    raise DataError(f"{nodes_path}:{lineno}: unknown node type {type_s!r}")
                nid = g.add_node(key, type_by_value[type_s])
                if nid != int(nid_s):
                    raise DataError(f"{nodes_path}:{lineno}: non-dense node id {nid_s}")
        with open(edges_path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise DataError(f"{edges_path}:{lineno}: expected 2 columns, got {len(parts)}")
                try:
                    g.add_edge(int(parts[0]), int(parts[1]))
                except ValueError as exc:
                    raise DataError(f"{edges_path}:{lineno}: {exc}") from exc
        return g.freeze()


def build_graph(
    records: Iterable[InteractionRecord],
    entity_links: Iterable[EntityLink] = (),
) -> HinGraph:
    """Assemble the network from interactions and entity links, then freeze it.

    User-item edges come from interaction records (duplicates collapse).
    Friendship links become user-user edges; all other link origins attach an
    entity node to the source user or item. Links whose source (or friendship
    endpoint) never appears in the records are skipped, so the graph holds no
    interaction-free users or items.
    """
    g = HinGraph()
    for rec in records:
        u = g.add_node(user_node_key(rec.user_key), NodeType.USER)
        i = g.add_node(item_node_key(rec.item_key), NodeType.ITEM)
        g.add_edge(u, i)
    skipped = 0
    for link in entity_links:
        if link.origin == ORIGIN_FRIENDSHIP:
            a = g.id_for_key(user_node_key(link.source_key))
            b = g.id_for_key(user_node_key(link.entity_key))
            if a is None or b is None or a == b:
                skipped += 1
                continue
            g.add_edge(a, b)
            continue
        prefix = user_node_key if link.source_kind == SOURCE_USER else item_node_key
        src = g.id_for_key(prefix(link.source_key))
        if src is None:
            skipped += 1
            continue
        e = g.add_node(entity_node_key(link.entity_key), NodeType.ENTITY)
        g.add_edge(src, e)
    if skipped:
        logger.info("build_graph: skipped %d links with unknown endpoints", skipped)
    return g.freeze()
