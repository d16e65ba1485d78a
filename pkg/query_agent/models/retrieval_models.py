"""Retrieval types: anchors, ranked nodes and context bundles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Tuple

from query_agent.core.settings import RetrievalWeights


@dataclass(frozen=True)
class AnchorSet:
    query: str
    anchors: Tuple[str, ...] = ()
    unmatched_terms: Tuple[str, ...] = ()


@dataclass(frozen=True)
class RankedNode:
    node_id: str
    hops: int
    match: int
    centrality: float
    score: float


@dataclass(frozen=True)
class ContextChunk:
    chunk_id: str
    text: str
    score: float


@dataclass(frozen=True)
class RetrievalProvenance:
    anchors: Tuple[str, ...]
    weights: RetrievalWeights
    hop_limit: int
    node_budget: int | None
    char_budget: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "anchors": list(self.anchors),
            "weights": self.weights.model_dump(),
            "hop_limit": self.hop_limit,
            "node_budget": self.node_budget,
            "char_budget": self.char_budget,
        }


@dataclass(frozen=True)
class ContextBundle:
    chunks: Tuple[ContextChunk, ...]
    total_chars: int
    provenance: RetrievalProvenance

    def context_text(self) -> str:
        return "\n\n".join(chunk.text for chunk in self.chunks)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "chunks": [
                {"chunk_id": chunk.chunk_id, "score": chunk.score, "text": chunk.text} for chunk in self.chunks
            ],
            "total_chars": self.total_chars,
            "provenance": self.provenance.to_dict(),
        }
