"""Dataclass exports for Query Agent."""

from .corpus_models import (
    ChunkingPolicy,
    CorpusManifest,
    FileError,
    SkippedFile,
    SourceDocument,
    TextChunk,
)
from .entropy_models import AnswerSample, EntropyReport, EquivalenceOracle, SemanticCluster
from .gateway_models import Completion, EmbeddingVector, PromptRequest, SamplingParams
from .graph_models import EntityNode, HetGraph, Mention, MentionEdge, RelationEdge
from .plan_models import (
    Aggregate,
    AggregateSpec,
    And,
    ColumnRef,
    Comparison,
    Filter,
    Join,
    Limit,
    Not,
    Or,
    PlanLiteral,
    Project,
    Scan,
    Sort,
    ValidatedPlan,
)
from .retrieval_models import AnchorSet, ContextBundle, ContextChunk, RankedNode, RetrievalProvenance
from .table_models import Catalog, Column, ResultTable, SchemaHint, Table, TableSchema

__all__ = [
    "SourceDocument",
    "TextChunk",
    "ChunkingPolicy",
    "CorpusManifest",
    "SkippedFile",
    "FileError",
    "EntityNode",
    "Mention",
    "MentionEdge",
    "RelationEdge",
    "HetGraph",
    "Column",
    "TableSchema",
    "Table",
    "Catalog",
    "SchemaHint",
    "ResultTable",
    "Scan",
    "Filter",
    "Project",
    "Join",
    "Aggregate",
    "AggregateSpec",
    "Sort",
    "Limit",
    "Comparison",
    "And",
    "Or",
    "Not",
    "ColumnRef",
    "PlanLiteral",
    "ValidatedPlan",
    "AnchorSet",
    "RankedNode",
    "ContextChunk",
    "ContextBundle",
    "RetrievalProvenance",
    "AnswerSample",
    "EquivalenceOracle",
    "SemanticCluster",
    "EntropyReport",
    "SamplingParams",
    "PromptRequest",
    "Completion",
    "EmbeddingVector",
]
