"""Heterogeneous graph: entity/relation extraction, build, verification, centrality and persistence."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import tempfile
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Set, Tuple

from query_agent.core.errors import BackendError, GraphBuildError, GraphLoadError, GraphVersionError
from query_agent.gateway.model_gateway import ModelGateway
from query_agent.models.corpus_models import TextChunk
from query_agent.models.gateway_models import PromptRequest
from query_agent.models.graph_models import ENTITY_TYPES, EntityNode, HetGraph, Mention, MentionEdge, RelationEdge

logger = logging.getLogger("query_agent.hetgraph")

GRAPH_FORMAT = "hetgraph"
GRAPH_VERSION = 1
RECORD_KINDS = ("chunk", "entity", "mention", "relation")


def canonical_name(surface: str) -> str:
    # 日本語: 大文字小文字の畳み込みと空白の正規化のみ / English: Case-fold and whitespace collapse only
    return " ".join(str(surface).split()).casefold()


def entity_id_for(canonical: str, type_tag: str) -> str:
    payload = f"{type_tag}\x1f{canonical}".encode("utf-8")
    return hashlib.blake2b(payload, digest_size=8).hexdigest()


def _json_list(text: str) -> List[Any] | None:
    # 日本語: 応答から JSON 配列を抽出 / English: Extract a JSON array from model output
    cleaned = (text or "").strip()
    if "```" in cleaned:
        cleaned = re.sub(r"```(?:json)?", "", cleaned, flags=re.IGNORECASE).strip()
    start, end = cleaned.find("["), cleaned.rfind("]")
    if start == -1 or end < start:
        return None
    try:
        parsed = json.loads(cleaned[start : end + 1])
    except json.JSONDecodeError:
        return None
    return parsed if isinstance(parsed, list) else None


def tag_text(text: str, gateway: ModelGateway) -> List[Dict[str, Any]]:
    """Raw NER items for any text; no span validation."""
    if not text:
        return []
    completion = gateway.complete(PromptRequest(template_id="ner", variables={"text": text}))
    items = _json_list(completion.text)
    if items is None:
        logger.warning("NER output is not a JSON list; ignoring it")
        return []
    return [item for item in items if isinstance(item, dict)]


@dataclass(frozen=True)
class EntityExtraction:
    mentions: Tuple[Mention, ...] = ()
    dropped: int = 0


@dataclass(frozen=True)
class RelationInference:
    relations: Tuple[RelationEdge, ...] = ()
    dropped: int = 0


def extract_entities(chunk: TextChunk, gateway: ModelGateway) -> EntityExtraction:
    """Tag a chunk; mentions whose span does not reproduce the surface form are dropped and counted."""
    try:
        items = tag_text(chunk.text, gateway)
    except BackendError as exc:
        exc.add_note(f"while tagging chunk {chunk.chunk_id}")
        raise

    mentions: List[Mention] = []
    seen: Set[Tuple[str, str, Tuple[int, int]]] = set()
    dropped = 0
    for item in items:
        surface = item.get("text")
        type_tag = str(item.get("type", "other")).strip().lower()
        if type_tag not in ENTITY_TYPES:
            type_tag = "other"
        if not isinstance(surface, str) or not surface.strip():
            dropped += 1
            continue
        start, end = item.get("start"), item.get("end")
        if not isinstance(start, int) or not isinstance(end, int) or isinstance(start, bool) or isinstance(end, bool):
            located = chunk.text.find(surface)
            if located < 0:
                dropped += 1
                continue
            start, end = located, located + len(surface)
        if not (0 <= start < end <= len(chunk.text)) or chunk.text[start:end] != surface:
            dropped += 1
            continue
        key = (surface, type_tag, (start, end))
        if key in seen:
            continue
        seen.add(key)
        mentions.append(Mention(chunk_id=chunk.chunk_id, surface=surface, type_tag=type_tag, span=(start, end)))  # type: ignore[arg-type]

    if dropped:
        logger.warning("Dropped %d mention(s) with invalid spans in chunk %s", dropped, chunk.chunk_id)
    mentions.sort(key=lambda mention: (mention.span, mention.surface, mention.type_tag))
    return EntityExtraction(mentions=tuple(mentions), dropped=dropped)


def _mention_entity_id(mention: Mention) -> str:
    return entity_id_for(canonical_name(mention.surface), mention.type_tag)


def infer_relations(chunk: TextChunk, mentions: Sequence[Mention], gateway: ModelGateway) -> RelationInference:
    """Relations between entities mentioned in `chunk`; unknown endpoints are dropped and counted."""
    lookup: Dict[str, str] = {}
    for mention in mentions:
        lookup.setdefault(canonical_name(mention.surface), _mention_entity_id(mention))
    if len(set(lookup.values())) < 2:
        return RelationInference()

    payload = json.dumps(
        [
            {"text": mention.surface, "type": mention.type_tag, "start": mention.span[0], "end": mention.span[1]}
            for mention in mentions
        ],
        ensure_ascii=False,
    )
    try:
        completion = gateway.complete(
            PromptRequest(template_id="relation", variables={"text": chunk.text, "mentions": payload})
        )
    except BackendError as exc:
        exc.add_note(f"while inferring relations for chunk {chunk.chunk_id}")
        raise

    items = _json_list(completion.text)
    if items is None:
        logger.warning("Relation output for chunk %s is not a JSON list; ignoring it", chunk.chunk_id)
        return RelationInference()

    relations: Dict[Tuple[str, str, str], RelationEdge] = {}
    dropped = 0
    for item in items:
        if not isinstance(item, dict):
            dropped += 1
            continue
        src = lookup.get(canonical_name(item.get("src", "")))
        dst = lookup.get(canonical_name(item.get("dst", "")))
        predicate = " ".join(str(item.get("predicate", "")).split())
        raw_confidence = item.get("confidence", 1.0)
        try:
            confidence = float(raw_confidence)
        except (TypeError, ValueError):
            confidence = math.nan
        if src is None or dst is None or src == dst or not predicate or not math.isfinite(confidence):
            dropped += 1
            continue
        confidence = min(1.0, max(0.0, confidence))
        key = (src, predicate, dst)
        existing = relations.get(key)
        if existing is None or existing.confidence < confidence:
            relations[key] = RelationEdge(
                src_entity=src,
                predicate=predicate,
                dst_entity=dst,
                provenance_chunk=chunk.chunk_id,
                confidence=confidence,
            )
    if dropped:
        logger.warning("Dropped %d relation(s) citing unknown entities in chunk %s", dropped, chunk.chunk_id)
    return RelationInference(relations=tuple(sorted(relations.values())), dropped=dropped)


def _adjacency(
    node_ids: Iterable[str], mention_edges: Sequence[MentionEdge], relation_edges: Sequence[RelationEdge]
) -> Dict[str, Tuple[str, ...]]:
    neighbors: Dict[str, Set[str]] = {node_id: set() for node_id in node_ids}
    for edge in mention_edges:
        neighbors.setdefault(edge.chunk_id, set()).add(edge.entity_id)
        neighbors.setdefault(edge.entity_id, set()).add(edge.chunk_id)
    for edge in relation_edges:
        neighbors.setdefault(edge.src_entity, set()).add(edge.dst_entity)
        neighbors.setdefault(edge.dst_entity, set()).add(edge.src_entity)
    return {node_id: tuple(sorted(values)) for node_id, values in sorted(neighbors.items())}


def _assemble(
    chunks: Mapping[str, TextChunk],
    entities: Mapping[str, EntityNode],
    mention_edges: Iterable[MentionEdge],
    relation_edges: Iterable[RelationEdge],
) -> HetGraph:
    mentions = tuple(sorted(set(mention_edges)))
    relations = tuple(sorted(set(relation_edges)))
    return HetGraph(
        chunk_nodes=dict(sorted(chunks.items())),
        entity_nodes=dict(sorted(entities.items())),
        mention_edges=mentions,
        relation_edges=relations,
        adjacency=_adjacency([*chunks, *entities], mentions, relations),
    )


def build_graph(
    chunks: Iterable[TextChunk],
    entity_mentions: Iterable[Mention],
    relations: Iterable[RelationEdge],
) -> HetGraph:
    """Deduplicate entities by (canonical name, type) and link everything; input order does not matter."""
    offenders: List[str] = []
    chunk_nodes: Dict[str, TextChunk] = {}
    for chunk in chunks:
        existing = chunk_nodes.get(chunk.chunk_id)
        if existing is not None and existing != chunk:
            offenders.append(f"chunk {chunk.chunk_id} appears twice with different content")
            continue
        chunk_nodes[chunk.chunk_id] = chunk

    aliases: Dict[Tuple[str, str], Set[str]] = {}
    mention_edges: Set[MentionEdge] = set()
    for mention in entity_mentions:
        chunk = chunk_nodes.get(mention.chunk_id)
        if chunk is None:
            offenders.append(f"mention {mention.surface!r} cites unknown chunk {mention.chunk_id}")
            continue
        start, end = mention.span
        if not (0 <= start < end <= len(chunk.text)) or chunk.text[start:end] != mention.surface:
            offenders.append(f"mention {mention.surface!r} has invalid span {start}..{end} in chunk {mention.chunk_id}")
            continue
        if mention.type_tag not in ENTITY_TYPES:
            offenders.append(f"mention {mention.surface!r} has unknown type {mention.type_tag!r}")
            continue
        key = (canonical_name(mention.surface), mention.type_tag)
        aliases.setdefault(key, set()).add(mention.surface)
        mention_edges.add(MentionEdge(chunk_id=mention.chunk_id, entity_id=entity_id_for(*key), span=(start, end)))

    entity_nodes = {
        entity_id_for(canonical, tag): EntityNode(
            entity_id=entity_id_for(canonical, tag),
            canonical_name=canonical,
            type_tag=tag,  # type: ignore[arg-type]
            aliases=frozenset(surfaces),
        )
        for (canonical, tag), surfaces in aliases.items()
    }

    relation_edges: Dict[Tuple[str, str, str, str], RelationEdge] = {}
    for relation in relations:
        problems = []
        if relation.src_entity not in entity_nodes:
            problems.append(f"unknown source entity {relation.src_entity}")
        if relation.dst_entity not in entity_nodes:
            problems.append(f"unknown target entity {relation.dst_entity}")
        if relation.src_entity == relation.dst_entity:
            problems.append("self-relation")
        if relation.provenance_chunk not in chunk_nodes:
            problems.append(f"unknown provenance chunk {relation.provenance_chunk}")
        if not (math.isfinite(relation.confidence) and 0.0 <= relation.confidence <= 1.0):
            problems.append(f"confidence {relation.confidence} outside [0, 1]")
        if problems:
            offenders.append(f"relation {relation.predicate!r}: " + ", ".join(problems))
            continue
        key = (relation.src_entity, relation.predicate, relation.dst_entity, relation.provenance_chunk)
        existing = relation_edges.get(key)
        if existing is None or existing.confidence < relation.confidence:
            relation_edges[key] = relation

    if offenders:
        raise GraphBuildError(sorted(offenders))
    return _assemble(chunk_nodes, entity_nodes, mention_edges, relation_edges.values())


def verify(graph: HetGraph) -> List[str]:
    """Every structural violation found; an empty list means the graph is sound."""
    violations: List[str] = []
    for chunk_id, chunk in graph.chunk_nodes.items():
        if chunk.chunk_id != chunk_id:
            violations.append(f"chunk key {chunk_id} holds chunk {chunk.chunk_id}")
        if chunk_id in graph.entity_nodes:
            violations.append(f"node id {chunk_id} is both a chunk and an entity")
    for entity_id, entity in graph.entity_nodes.items():
        if entity.entity_id != entity_id:
            violations.append(f"entity key {entity_id} holds entity {entity.entity_id}")
        if entity.type_tag not in ENTITY_TYPES:
            violations.append(f"entity {entity_id} has unknown type {entity.type_tag!r}")
        if entity_id_for(entity.canonical_name, entity.type_tag) != entity_id:
            violations.append(f"entity {entity_id} id does not match its canonical name and type")
        if canonical_name(entity.canonical_name) != entity.canonical_name:
            violations.append(f"entity {entity_id} canonical name is not normalized")
        if not entity.aliases:
            violations.append(f"entity {entity_id} has no aliases")

    mentioned: Set[str] = set()
    for edge in graph.mention_edges:
        chunk = graph.chunk_nodes.get(edge.chunk_id)
        if chunk is None:
            violations.append(f"mention edge cites unknown chunk {edge.chunk_id}")
        elif not (0 <= edge.span[0] < edge.span[1] <= len(chunk.text)):
            violations.append(f"mention edge span {edge.span} lies outside chunk {edge.chunk_id}")
        if edge.entity_id not in graph.entity_nodes:
            violations.append(f"mention edge cites unknown entity {edge.entity_id}")
        mentioned.add(edge.entity_id)
    for edge in graph.relation_edges:
        for endpoint in (edge.src_entity, edge.dst_entity):
            if endpoint not in graph.entity_nodes:
                violations.append(f"relation edge cites unknown entity {endpoint}")
        if edge.src_entity == edge.dst_entity:
            violations.append(f"relation edge {edge.predicate!r} is a self-loop on {edge.src_entity}")
        if edge.provenance_chunk not in graph.chunk_nodes:
            violations.append(f"relation edge cites unknown provenance chunk {edge.provenance_chunk}")
        if not (math.isfinite(edge.confidence) and 0.0 <= edge.confidence <= 1.0):
            violations.append(f"relation edge confidence {edge.confidence} outside [0, 1]")
    for entity_id in graph.entity_nodes:
        if entity_id not in mentioned:
            violations.append(f"entity {entity_id} has no mention edge")

    expected = _adjacency([*graph.chunk_nodes, *graph.entity_nodes], graph.mention_edges, graph.relation_edges)
    if dict(graph.adjacency) != expected:
        violations.append("adjacency does not match the edge sets")
    return violations


def degrees(graph: HetGraph) -> Dict[str, int]:
    # 日本語: 多重辺を含む接続辺数 / English: Incident edge count, parallel edges included
    counts: Counter[str] = Counter({node_id: 0 for node_id in graph.node_ids})
    for edge in graph.mention_edges:
        counts[edge.chunk_id] += 1
        counts[edge.entity_id] += 1
    for edge in graph.relation_edges:
        counts[edge.src_entity] += 1
        counts[edge.dst_entity] += 1
    return dict(sorted(counts.items()))


def degree(graph: HetGraph, node_id: str) -> int:
    return degrees(graph).get(node_id, 0)


def degree_centrality(graph: HetGraph) -> Dict[str, float]:
    """Distinct neighbours over N-1, so every value stays within [0, 1]."""
    # 日本語: 多重辺の次数ではなく異なる隣接ノード数で数える / English: Counts distinct neighbours, not multigraph degree
    node_ids = graph.node_ids
    if len(node_ids) < 2:
        return {node_id: 0.0 for node_id in node_ids}
    denominator = len(node_ids) - 1
    return {node_id: len(graph.neighbors(node_id)) / denominator for node_id in node_ids}


def graph_stats(graph: HetGraph) -> Dict[str, Any]:
    stats: Dict[str, Any] = dict(graph.stats())
    stats["nodes"] = graph.node_count
    stats["edges"] = len(graph.mention_edges) + len(graph.relation_edges)
    centrality = degree_centrality(graph)
    if centrality:
        top = min(centrality.items(), key=lambda item: (-item[1], item[0]))
        stats["most_central"] = {"node_id": top[0], "centrality": top[1]}
    return stats


@dataclass(frozen=True)
class IndexResult:
    graph: HetGraph
    dropped_mentions: int = 0
    dropped_relations: int = 0


def index_chunks(chunks: Sequence[TextChunk], gateway: ModelGateway, *, max_workers: int = 4) -> IndexResult:
    """Fan extraction out over chunks, then merge single-threaded in chunk order."""

    def _extract(chunk: TextChunk) -> Tuple[EntityExtraction, RelationInference]:
        extraction = extract_entities(chunk, gateway)
        return extraction, infer_relations(chunk, extraction.mentions, gateway)

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        outcomes = list(pool.map(_extract, chunks))

    mentions: List[Mention] = []
    relations: List[RelationEdge] = []
    dropped_mentions = dropped_relations = 0
    for extraction, inference in outcomes:
        mentions.extend(extraction.mentions)
        relations.extend(inference.relations)
        dropped_mentions += extraction.dropped
        dropped_relations += inference.dropped
    graph = build_graph(chunks, mentions, relations)
    return IndexResult(graph=graph, dropped_mentions=dropped_mentions, dropped_relations=dropped_relations)


def _graph_records(graph: HetGraph) -> List[Dict[str, Any]]:
    records: List[Dict[str, Any]] = [
        {
            "format": GRAPH_FORMAT,
            "version": GRAPH_VERSION,
            "counts": {
                "chunk": len(graph.chunk_nodes),
                "entity": len(graph.entity_nodes),
                "mention": len(graph.mention_edges),
                "relation": len(graph.relation_edges),
            },
        }
    ]
    for chunk in graph.chunk_nodes.values():
        records.append(
            {
                "kind": "chunk",
                "chunk_id": chunk.chunk_id,
                "doc_id": chunk.doc_id,
                "ordinal": chunk.ordinal,
                "span": list(chunk.span),
                "text": chunk.text,
            }
        )
    for entity in graph.entity_nodes.values():
        records.append(
            {
                "kind": "entity",
                "entity_id": entity.entity_id,
                "canonical_name": entity.canonical_name,
                "type_tag": entity.type_tag,
                "aliases": sorted(entity.aliases),
            }
        )
    for edge in graph.mention_edges:
        records.append({"kind": "mention", "chunk_id": edge.chunk_id, "entity_id": edge.entity_id, "span": list(edge.span)})
    for edge in graph.relation_edges:
        records.append(
            {
                "kind": "relation",
                "src_entity": edge.src_entity,
                "predicate": edge.predicate,
                "dst_entity": edge.dst_entity,
                "provenance_chunk": edge.provenance_chunk,
                "confidence": edge.confidence,
            }
        )
    return records


def save_graph(graph: HetGraph, path: str | os.PathLike[str]) -> None:
    """Write line-delimited JSON atomically (temp file in the same directory, then rename)."""
    target = Path(path)
    lines = [json.dumps(record, ensure_ascii=False, sort_keys=True) for record in _graph_records(graph)]
    handle = tempfile.NamedTemporaryFile(
        "w", encoding="utf-8", dir=target.parent or Path("."), prefix=f".{target.name}.", suffix=".tmp", delete=False
    )
    try:
        with handle:
            handle.write("\n".join(lines) + "\n")
        os.replace(handle.name, target)
    except BaseException:
        Path(handle.name).unlink(missing_ok=True)
        raise


def _span(value: Any) -> Tuple[int, int]:
    if not (isinstance(value, list) and len(value) == 2 and all(isinstance(v, int) and not isinstance(v, bool) for v in value)):
        raise ValueError(f"span must be a [start, end] pair of integers, got {value!r}")
    return (value[0], value[1])


def _read_record(kind: str, record: Mapping[str, Any]) -> Any:
    if kind == "chunk":
        return TextChunk(
            chunk_id=str(record["chunk_id"]),
            doc_id=str(record["doc_id"]),
            ordinal=int(record["ordinal"]),
            span=_span(record["span"]),
            text=str(record["text"]),
        )
    if kind == "entity":
        return EntityNode(
            entity_id=str(record["entity_id"]),
            canonical_name=str(record["canonical_name"]),
            type_tag=str(record["type_tag"]),  # type: ignore[arg-type]
            aliases=frozenset(str(alias) for alias in record["aliases"]),
        )
    if kind == "mention":
        return MentionEdge(chunk_id=str(record["chunk_id"]), entity_id=str(record["entity_id"]), span=_span(record["span"]))
    return RelationEdge(
        src_entity=str(record["src_entity"]),
        predicate=str(record["predicate"]),
        dst_entity=str(record["dst_entity"]),
        provenance_chunk=str(record["provenance_chunk"]),
        confidence=float(record["confidence"]),
    )


def load_graph(path: str | os.PathLike[str]) -> HetGraph:
    """Load and verify a graph file; any problem raises and no partial graph is returned."""
    source = Path(path)
    try:
        raw_text = source.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise GraphLoadError(str(source), [f"cannot read file: {exc}"]) from exc

    lines = raw_text.splitlines()
    if not lines or not lines[0].strip():
        raise GraphLoadError(str(source), ["missing header record"])
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise GraphLoadError(str(source), [f"line 1: malformed header ({exc.msg})"]) from exc
    if not isinstance(header, dict) or header.get("format") != GRAPH_FORMAT:
        raise GraphLoadError(str(source), ["line 1: not a hetgraph header"])
    if header.get("version") != GRAPH_VERSION:
        raise GraphVersionError(str(source), header.get("version"), GRAPH_VERSION)

    problems: List[str] = []
    found: Dict[str, List[Any]] = {kind: [] for kind in RECORD_KINDS}
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            problems.append(f"line {number}: malformed JSON ({exc.msg})")
            continue
        kind = record.get("kind") if isinstance(record, dict) else None
        if kind not in RECORD_KINDS:
            problems.append(f"line {number}: unknown record kind {kind!r}")
            continue
        try:
            found[kind].append(_read_record(kind, record))
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"line {number}: invalid {kind} record ({exc})")

    counts = header.get("counts")
    if isinstance(counts, dict):
        for kind in RECORD_KINDS:
            expected = counts.get(kind)
            if expected != len(found[kind]):
                problems.append(f"expected {expected} {kind} records, found {len(found[kind])}")

    chunks = {chunk.chunk_id: chunk for chunk in found["chunk"]}
    entities = {entity.entity_id: entity for entity in found["entity"]}
    if len(chunks) != len(found["chunk"]):
        problems.append("duplicate chunk ids")
    if len(entities) != len(found["entity"]):
        problems.append("duplicate entity ids")
    if problems:
        raise GraphLoadError(str(source), problems)

    graph = _assemble(chunks, entities, found["mention"], found["relation"])
    violations = verify(graph)
    if violations:
        raise GraphLoadError(str(source), violations)
    return graph
