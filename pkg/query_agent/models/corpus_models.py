"""Corpus, document and chunk types."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Literal, Mapping, Tuple

DocumentFormat = Literal["text", "csv", "json"]

# 日本語: 拡張子→形式の対応表 / English: File extension to format classification
EXTENSION_FORMATS: Mapping[str, DocumentFormat] = {
    ".txt": "text",
    ".csv": "csv",
    ".json": "json",
}

DOCUMENT_FORMATS: Tuple[DocumentFormat, ...] = ("text", "csv", "json")


@dataclass(frozen=True)
class SourceDocument:
    doc_id: str
    path: str
    format: DocumentFormat
    content: str
    metadata: Mapping[str, str] = field(default_factory=dict)

    def descriptor(self) -> Dict[str, object]:
        # 日本語: 本文を含まない記述子 / English: Descriptor without the raw content
        return {
            "doc_id": self.doc_id,
            "path": self.path,
            "format": self.format,
            "chars": len(self.content),
            "metadata": dict(sorted(self.metadata.items())),
        }


@dataclass(frozen=True)
class TextChunk:
    chunk_id: str
    doc_id: str
    ordinal: int
    span: Tuple[int, int]
    text: str

    @property
    def start(self) -> int:
        return self.span[0]

    @property
    def end(self) -> int:
        return self.span[1]


@dataclass(frozen=True)
class ChunkingPolicy:
    max_chars: int = 1000
    overlap_chars: int = 200

    def __post_init__(self) -> None:
        if self.max_chars <= 0:
            raise ValueError("max_chars must be positive")
        if self.overlap_chars < 0:
            raise ValueError("overlap_chars must be non-negative")
        if self.overlap_chars >= self.max_chars:
            raise ValueError("overlap_chars must be smaller than max_chars")

    @property
    def step(self) -> int:
        return self.max_chars - self.overlap_chars


@dataclass(frozen=True)
class SkippedFile:
    path: str
    reason: str


@dataclass(frozen=True)
class FileError:
    path: str
    message: str


@dataclass(frozen=True)
class CorpusManifest:
    root: str
    documents: Tuple[SourceDocument, ...] = ()
    skipped: Tuple[SkippedFile, ...] = ()
    errors: Tuple[FileError, ...] = ()

    @property
    def counts(self) -> Dict[str, int]:
        counts = {fmt: 0 for fmt in DOCUMENT_FORMATS}
        for document in self.documents:
            counts[document.format] += 1
        return counts

    def documents_of(self, fmt: DocumentFormat) -> Tuple[SourceDocument, ...]:
        return tuple(document for document in self.documents if document.format == fmt)
