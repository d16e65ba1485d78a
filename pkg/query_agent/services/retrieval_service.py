"""Topology-guided retrieval: anchors, bounded BFS, scoring and context assembly."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from query_agent.core.errors import AnchorNotFoundError
from query_agent.core.settings import RetrievalSettings, RetrievalWeights
from query_agent.gateway.model_gateway import ModelGateway
from query_agent.models.graph_models import HetGraph
from query_agent.models.retrieval_models import (
    AnchorSet,
    ContextBundle,
    ContextChunk,
    RankedNode,
    RetrievalProvenance,
)
from query_agent.services.graph_service import canonical_name, degree_centrality, entity_id_for, tag_text

logger = logging.getLogger("query_agent.retrieval")

# 日本語: 指標語はアンカーにしない / English: Measure words never anchor a traversal
NON_ANCHOR_TYPES = {"metric"}

_TERM = re.compile(r"[^\W_]+(?:['-][^\W_]+)*")
_STOPWORDS = {
    "a", "an", "and", "are", "as", "at", "be", "by", "can", "compare", "did", "do", "does", "find", "for",
    "from", "had", "has", "have", "how", "i", "in", "is", "it", "its", "list", "me", "of", "on", "or",
    "show", "that", "the", "their", "there", "these", "this", "those", "to", "was", "were", "what",
    "when", "where", "which", "who", "why", "with",
}


def _content_terms(query: str) -> List[Tuple[str, int, int]]:
    return [
        (match.group().casefold(), match.start(), match.end())
        for match in _TERM.finditer(query)
        if match.group().casefold() not in _STOPWORDS
    ]


def _lexical_hits(query: str, graph: HetGraph) -> List[Tuple[int, int, str]]:
    # 日本語: 正規名を語境界つきで照合し長い一致を優先 / English: Whole-word canonical-name scan, longest match first
    folded = query.casefold()
    names: Dict[str, List[str]] = {}
    for entity_id, entity in graph.entity_nodes.items():
        if entity.type_tag in NON_ANCHOR_TYPES or len(entity.canonical_name) < 2:
            continue
        names.setdefault(entity.canonical_name, []).append(entity_id)

    taken: List[Tuple[int, int]] = []
    hits: List[Tuple[int, int, str]] = []
    for name in sorted(names, key=lambda value: (-len(value), value)):
        pattern = re.compile(r"(?<!\w)" + r"\s+".join(re.escape(part) for part in name.split(" ")) + r"(?!\w)")
        for match in pattern.finditer(folded):
            if any(match.start() < end and start < match.end() for start, end in taken):
                continue
            taken.append((match.start(), match.end()))
            for entity_id in sorted(names[name]):
                hits.append((match.start(), match.end(), entity_id))
    return hits


def anchor_entities(query: str, graph: HetGraph, gateway: ModelGateway) -> AnchorSet:
    """Entities named in the query, ordered by first position; zero anchors is a valid result."""
    # 日本語: (開始, 終了, 出現順, ID) で並べる / English: Ordered by (start, end, emission order, id)
    positioned: List[Tuple[int, int, int, str]] = []
    for item in tag_text(query, gateway):
        surface = item.get("text")
        type_tag = str(item.get("type", "other")).strip().lower()
        if not isinstance(surface, str) or type_tag in NON_ANCHOR_TYPES:
            continue
        entity_id = entity_id_for(canonical_name(surface), type_tag)
        if entity_id not in graph.entity_nodes:
            continue
        start = item.get("start") if isinstance(item.get("start"), int) else query.find(surface)
        end = item.get("end") if isinstance(item.get("end"), int) else start + len(surface)
        positioned.append((max(start, 0), max(end, 0), len(positioned), entity_id))
    for start, end, entity_id in _lexical_hits(query, graph):
        positioned.append((start, end, len(positioned), entity_id))

    anchors: List[str] = []
    covered: List[Tuple[int, int]] = []
    for start, end, _, entity_id in sorted(positioned):
        covered.append((start, end))
        if entity_id not in anchors:
            anchors.append(entity_id)

    unmatched = []
    for term, start, end in _content_terms(query):
        if any(start < cover_end and cover_start < end for cover_start, cover_end in covered):
            continue
        if term not in unmatched:
            unmatched.append(term)
    return AnchorSet(query=query, anchors=tuple(anchors), unmatched_terms=tuple(unmatched))


def bfs_expand(
    graph: HetGraph,
    anchors: Sequence[str],
    hop_limit: int,
    node_budget: Optional[int] = None,
) -> Dict[str, int]:
    """Multi-source BFS returning node -> minimum hops.

    When a level would push the result past `node_budget`, nodes are admitted in
    (hops, node_id) order until the budget is met exactly. `None` means unlimited.
    """
    if hop_limit < 0:
        raise ValueError("hop_limit must be non-negative")
    unique_anchors = list(dict.fromkeys(anchors))
    for anchor in unique_anchors:
        if not graph.is_entity(anchor) and not graph.is_chunk(anchor):
            raise AnchorNotFoundError(anchor)
    if node_budget is not None and node_budget < len(unique_anchors):
        raise ValueError(f"node_budget {node_budget} is smaller than the {len(unique_anchors)} anchors")

    hops: Dict[str, int] = {anchor: 0 for anchor in unique_anchors}
    frontier = sorted(unique_anchors)
    level = 0
    while frontier and level < hop_limit:
        if node_budget is not None and len(hops) >= node_budget:
            break
        level += 1
        following = sorted({nxt for node in frontier for nxt in graph.neighbors(node) if nxt not in hops})
        for node in following:
            hops[node] = level
        frontier = following

    if node_budget is not None and len(hops) > node_budget:
        admitted = sorted(hops.items(), key=lambda item: (item[1], item[0]))[:node_budget]
        hops = dict(admitted)
    return dict(sorted(hops.items(), key=lambda item: (item[1], item[0])))


def score_nodes(
    expanded: Mapping[str, int] | Iterable[Tuple[str, int]],
    graph: HetGraph,
    anchors: Sequence[str],
    weights: RetrievalWeights | None = None,
    *,
    centrality: Optional[Mapping[str, float]] = None,
) -> List[RankedNode]:
    """score = alpha*match + beta*centrality + gamma/(1+hops), sorted by (-score, node_id)."""
    weights = weights or RetrievalWeights()
    centrality = centrality if centrality is not None else degree_centrality(graph)
    items = expanded.items() if isinstance(expanded, Mapping) else expanded
    anchor_set = set(anchors)
    ranked: List[RankedNode] = []
    for node_id, hops in items:
        match = 1 if node_id in anchor_set else 0
        value = centrality.get(node_id, 0.0)
        score = weights.alpha * match + weights.beta * value + weights.gamma / (1 + hops)
        ranked.append(RankedNode(node_id=node_id, hops=hops, match=match, centrality=value, score=score))
    ranked.sort(key=lambda node: (-node.score, node.node_id))
    return ranked


def assemble_context(
    ranked: Sequence[RankedNode],
    graph: HetGraph,
    char_budget: int,
    *,
    anchors: Sequence[str] = (),
    settings: Optional[RetrievalSettings] = None,
) -> ContextBundle:
    """Greedy whole-chunk packing in rank order; chunks are never truncated."""
    if char_budget <= 0:
        raise ValueError("char_budget must be positive")
    settings = settings or RetrievalSettings()
    selected: List[ContextChunk] = []
    seen: set[str] = set()
    remaining = char_budget

    for node in ranked:
        if remaining <= 0:
            break
        if graph.is_entity(node.node_id):
            candidates: Tuple[str, ...] = graph.mention_chunks(node.node_id)
        elif graph.is_chunk(node.node_id):
            candidates = (node.node_id,)
        else:
            continue
        for chunk_id in candidates:
            if chunk_id in seen:
                continue
            text = graph.chunk_nodes[chunk_id].text
            if len(text) > remaining:
                continue
            seen.add(chunk_id)
            selected.append(ContextChunk(chunk_id=chunk_id, text=text, score=node.score))
            remaining -= len(text)

    provenance = RetrievalProvenance(
        anchors=tuple(anchors),
        weights=settings.weights,
        hop_limit=settings.hop_limit,
        node_budget=settings.node_budget,
        char_budget=char_budget,
    )
    return ContextBundle(chunks=tuple(selected), total_chars=char_budget - remaining, provenance=provenance)


@dataclass(frozen=True)
class RetrievalResult:
    anchors: AnchorSet
    ranked: Tuple[RankedNode, ...]
    bundle: ContextBundle


def retrieve(
    query: str,
    graph: HetGraph,
    gateway: ModelGateway,
    settings: Optional[RetrievalSettings] = None,
) -> RetrievalResult:
    settings = settings or RetrievalSettings()
    anchor_set = anchor_entities(query, graph, gateway)
    if not anchor_set.anchors:
        logger.info("No anchor entities for query %r", query)
        empty = assemble_context((), graph, settings.char_budget, settings=settings)
        return RetrievalResult(anchors=anchor_set, ranked=(), bundle=empty)
    budget = max(settings.node_budget, len(anchor_set.anchors))
    expanded = bfs_expand(graph, anchor_set.anchors, settings.hop_limit, budget)
    ranked = score_nodes(expanded, graph, anchor_set.anchors, settings.weights)
    bundle = assemble_context(ranked, graph, settings.char_budget, anchors=anchor_set.anchors, settings=settings)
    return RetrievalResult(anchors=anchor_set, ranked=tuple(ranked), bundle=bundle)
