"""Heterogeneous graph types: chunk nodes, entity nodes, mention and relation edges."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Literal, Mapping, Tuple

from query_agent.models.corpus_models import TextChunk

EntityType = Literal["person", "org", "product", "time", "place", "metric", "other"]

ENTITY_TYPES: Tuple[EntityType, ...] = ("person", "org", "product", "time", "place", "metric", "other")


@dataclass(frozen=True)
class EntityNode:
    entity_id: str
    canonical_name: str
    type_tag: EntityType
    aliases: FrozenSet[str]


@dataclass(frozen=True)
class Mention:
    """A tagged surface form inside one chunk (input to graph building)."""

    chunk_id: str
    surface: str
    type_tag: EntityType
    span: Tuple[int, int]


@dataclass(frozen=True, order=True)
class MentionEdge:
    chunk_id: str
    entity_id: str
    span: Tuple[int, int]


@dataclass(frozen=True, order=True)
class RelationEdge:
    src_entity: str
    predicate: str
    dst_entity: str
    provenance_chunk: str
    confidence: float = 1.0


@dataclass(frozen=True)
class HetGraph:
    """Immutable graph; node and edge collections are sorted by id at build time."""

    chunk_nodes: Mapping[str, TextChunk] = field(default_factory=dict)
    entity_nodes: Mapping[str, EntityNode] = field(default_factory=dict)
    mention_edges: Tuple[MentionEdge, ...] = ()
    relation_edges: Tuple[RelationEdge, ...] = ()
    adjacency: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)

    @property
    def node_ids(self) -> Tuple[str, ...]:
        return tuple(sorted([*self.chunk_nodes, *self.entity_nodes]))

    @property
    def node_count(self) -> int:
        return len(self.chunk_nodes) + len(self.entity_nodes)

    def is_entity(self, node_id: str) -> bool:
        return node_id in self.entity_nodes

    def is_chunk(self, node_id: str) -> bool:
        return node_id in self.chunk_nodes

    def neighbors(self, node_id: str) -> Tuple[str, ...]:
        return tuple(self.adjacency.get(node_id, ()))

    def mention_chunks(self, entity_id: str) -> Tuple[str, ...]:
        # 日本語: エンティティを言及するチャンク (重複除去・ID順) / English: Chunks mentioning an entity, deduplicated, id order
        return tuple(sorted({edge.chunk_id for edge in self.mention_edges if edge.entity_id == entity_id}))

    def entities_named(self, canonical_name: str) -> Tuple[EntityNode, ...]:
        return tuple(
            node for _, node in sorted(self.entity_nodes.items()) if node.canonical_name == canonical_name
        )

    def stats(self) -> Dict[str, int]:
        return {
            "chunks": len(self.chunk_nodes),
            "entities": len(self.entity_nodes),
            "mentions": len(self.mention_edges),
            "relations": len(self.relation_edges),
        }
