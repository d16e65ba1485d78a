"""End-to-end orchestration behind the CLI and the MCP tools."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple

from query_agent.core.settings import CliConfig
from query_agent.gateway.model_gateway import ModelGateway
from query_agent.models.corpus_models import ChunkingPolicy, CorpusManifest, FileError, TextChunk
from query_agent.models.entropy_models import EntropyReport, EquivalenceOracle
from query_agent.models.gateway_models import PromptRequest
from query_agent.models.graph_models import HetGraph
from query_agent.models.plan_models import ValidatedPlan
from query_agent.models.retrieval_models import ContextBundle
from query_agent.models.table_models import Catalog, ResultTable, SchemaHint, Table
from query_agent.services.entropy_service import uncertainty_report
from query_agent.services.extraction_service import generate_table, synthesize_plan
from query_agent.services.graph_service import IndexResult, index_chunks
from query_agent.services.ingest_service import chunk_corpus, load_corpus, load_corpus_tables
from query_agent.services.plan_grammar import format_plan
from query_agent.services.relexec_service import ensure_valid, execute, result_to_dict
from query_agent.services.retrieval_service import RetrievalResult, retrieve

logger = logging.getLogger("query_agent.pipeline")

QueryMode = Literal["auto", "graph", "table"]

# 日本語: 集計・比較の手掛かり語で table モードへ振り分け / English: Aggregate and comparison cues route auto mode to tables
_TABLE_CUES = re.compile(
    r"\b(total|sum|average|mean|count|how many|number of|compare|more than|less than|greater than|fewer than|top \d+)\b",
    re.IGNORECASE,
)
EXTRACTED_TABLE_NAME = "extracted"


def route_mode(question: str) -> Literal["graph", "table"]:
    return "table" if _TABLE_CUES.search(question or "") else "graph"


@dataclass(frozen=True)
class IndexReport:
    manifest: CorpusManifest
    chunks: Tuple[TextChunk, ...]
    index: IndexResult

    @property
    def graph(self) -> HetGraph:
        return self.index.graph


def index_corpus(root: str | Path, cfg: CliConfig, gateway: ModelGateway) -> IndexReport:
    """Ingest → chunk → extract entities and relations → build the graph."""
    manifest = load_corpus(root)
    policy = ChunkingPolicy(max_chars=cfg.chunking.max_chars, overlap_chars=cfg.chunking.overlap_chars)
    chunks = chunk_corpus(manifest, policy)
    if not chunks:
        logger.warning("Corpus %s has no text to index", root)
    result = index_chunks(chunks, gateway, max_workers=cfg.backend.max_in_flight)
    logger.info(
        "Indexed %d chunks into %d nodes (%d mentions, %d relations dropped)",
        len(chunks),
        result.graph.node_count,
        result.dropped_mentions,
        result.dropped_relations,
    )
    return IndexReport(manifest=manifest, chunks=tuple(chunks), index=result)


def load_structured_tables(root: str | Path | None) -> Tuple[Dict[str, Table], Tuple[FileError, ...]]:
    if root is None:
        return {}, ()
    loaded = load_corpus_tables(load_corpus(root))
    return dict(loaded.tables), loaded.errors


@dataclass(frozen=True)
class QueryOutcome:
    question: str
    mode: Literal["graph", "table"]
    retrieval: RetrievalResult
    answer: Optional[str] = None
    plan_text: Optional[str] = None
    result: Optional[ResultTable] = None
    extracted: Optional[Table] = None
    dropped_rows: int = 0
    catalog_tables: Tuple[str, ...] = ()

    @property
    def has_anchors(self) -> bool:
        return bool(self.retrieval.anchors.anchors)

    @property
    def context(self) -> ContextBundle:
        return self.retrieval.bundle

    def to_dict(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {
            "question": self.question,
            "mode": self.mode,
            "anchors": list(self.retrieval.anchors.anchors),
            "unmatched_terms": list(self.retrieval.anchors.unmatched_terms),
            "context": self.context.to_dict(),
            "answer": self.answer,
            "plan": self.plan_text,
            "table": result_to_dict(self.result) if self.result is not None else None,
        }
        if self.mode == "table":
            record["catalog"] = list(self.catalog_tables)
            record["extracted_rows"] = len(self.extracted.rows) if self.extracted is not None else 0
            record["dropped_rows"] = self.dropped_rows
        return record


@dataclass
class QueryPipeline:
    """Holds the graph, any structured tables and the gateway for repeated questions."""

    graph: HetGraph
    cfg: CliConfig
    gateway: ModelGateway
    tables: Mapping[str, Table] = field(default_factory=dict)

    def query(self, question: str, mode: QueryMode = "auto") -> QueryOutcome:
        effective = route_mode(question) if mode == "auto" else mode
        retrieval = retrieve(question, self.graph, self.gateway, self.cfg.retrieval)
        if effective == "graph":
            return self._graph_answer(question, retrieval)
        return self._table_answer(question, retrieval)

    def _graph_answer(self, question: str, retrieval: RetrievalResult) -> QueryOutcome:
        if not retrieval.anchors.anchors:
            return QueryOutcome(question=question, mode="graph", retrieval=retrieval)
        completion = self.gateway.complete(
            PromptRequest(
                template_id="answer",
                variables={"context": retrieval.bundle.context_text(), "question": question},
            )
        )
        return QueryOutcome(question=question, mode="graph", retrieval=retrieval, answer=completion.text)

    def _extraction_chunks(self, retrieval: RetrievalResult) -> List[TextChunk]:
        if retrieval.bundle.chunks:
            return [self.graph.chunk_nodes[item.chunk_id] for item in retrieval.bundle.chunks]
        # 日本語: アンカーなしなら全チャンクから抽出 / English: Without anchors, extract from every chunk
        return [self.graph.chunk_nodes[chunk_id] for chunk_id in sorted(self.graph.chunk_nodes)]

    def _table_answer(self, question: str, retrieval: RetrievalResult) -> QueryOutcome:
        tables: Dict[str, Table] = dict(self.tables)
        extracted: Optional[Table] = None
        dropped = 0
        chunks = self._extraction_chunks(retrieval)
        if chunks:
            name = EXTRACTED_TABLE_NAME
            while name in tables:
                name = f"{name}_text"
            generation = generate_table(chunks, SchemaHint(), self.gateway, table_name=name)
            extracted, dropped = generation.table, generation.dropped_rows
            if extracted.schema.columns:
                tables[name] = extracted
        if not tables:
            raise ValueError("no tables available: the graph has no text to extract from and no --corpus tables were loaded")

        catalog = Catalog.from_tables(tables.values())
        plan = synthesize_plan(question, catalog, self.gateway, reference_quarter=self.cfg.reference_quarter)
        plan_text = format_plan(plan)
        logger.info("Plan for %r: %s", question, plan_text)
        validated: ValidatedPlan = ensure_valid(plan, catalog)
        result = execute(validated, tables)
        return QueryOutcome(
            question=question,
            mode="table",
            retrieval=retrieval,
            plan_text=plan_text,
            result=result,
            extracted=extracted,
            dropped_rows=dropped,
            catalog_tables=tuple(catalog.tables),
        )

    def ask(
        self,
        question: str,
        *,
        samples: Optional[int] = None,
        threshold_bits: Optional[float] = None,
        temperature: Optional[float] = None,
        seed: Optional[int] = None,
    ) -> EntropyReport:
        settings = self.cfg.entropy
        retrieval = retrieve(question, self.graph, self.gateway, self.cfg.retrieval)
        oracle = EquivalenceOracle(mode=settings.oracle, threshold=settings.tau)
        return uncertainty_report(
            question,
            samples if samples is not None else settings.samples,
            oracle,
            self.gateway,
            threshold_bits if threshold_bits is not None else settings.threshold_bits,
            context=retrieval.bundle.context_text(),
            temperature=temperature if temperature is not None else settings.temperature,
            seed=seed if seed is not None else settings.seed,
        )
