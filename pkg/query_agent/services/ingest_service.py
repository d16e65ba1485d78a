"""Corpus loading, text chunking and CSV/JSON table parsing."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Tuple

from query_agent.core.errors import CorpusError, StructuredParseError
from query_agent.models.corpus_models import (
    EXTENSION_FORMATS,
    ChunkingPolicy,
    CorpusManifest,
    FileError,
    SkippedFile,
    SourceDocument,
    TextChunk,
)
from query_agent.models.table_models import Column, Table, TableSchema

logger = logging.getLogger("query_agent.ingest")

_NUMBER_PATTERN = re.compile(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?(%?)$")
_NULL_LITERALS = {"", "null"}
_BOOLEAN_LITERALS = {"true": True, "false": False}
_NON_IDENTIFIER = re.compile(r"[^0-9a-z_]+")


def document_id(relative_path: str) -> str:
    # 日本語: 相対パスの 64bit 安定ハッシュ / English: 64-bit stable hash of the corpus-relative path
    return hashlib.blake2b(relative_path.encode("utf-8"), digest_size=8).hexdigest()


def table_name_for(path: str) -> str:
    stem = Path(path).stem.lower()
    cleaned = _NON_IDENTIFIER.sub("_", stem).strip("_")
    if not cleaned:
        return "table"
    if cleaned[0].isdigit():
        return f"t_{cleaned}"
    return cleaned


def load_corpus(root: str | os.PathLike[str]) -> CorpusManifest:
    """Walk `root` and classify every regular file by extension.

    Unreadable files become error entries; the manifest is still returned.
    """
    root_path = Path(root)
    if not root_path.exists():
        raise CorpusError(str(root_path), "directory does not exist")
    if not root_path.is_dir():
        raise CorpusError(str(root_path), "not a directory")
    if not os.access(root_path, os.R_OK | os.X_OK):
        raise CorpusError(str(root_path), "directory is not readable")

    documents: List[SourceDocument] = []
    skipped: List[SkippedFile] = []
    errors: List[FileError] = []

    try:
        candidates = sorted(
            (path for path in root_path.rglob("*") if path.is_file()),
            key=lambda path: path.relative_to(root_path).as_posix(),
        )
    except OSError as exc:
        raise CorpusError(str(root_path), f"cannot list directory: {exc.strerror or exc}") from exc

    for path in candidates:
        relative = path.relative_to(root_path).as_posix()
        extension = path.suffix.lower()
        doc_format = EXTENSION_FORMATS.get(extension)
        if doc_format is None:
            reason = f"unrecognized extension {extension}" if extension else "no file extension"
            skipped.append(SkippedFile(path=relative, reason=reason))
            continue
        try:
            content = path.read_bytes().decode("utf-8")
        except UnicodeDecodeError as exc:
            errors.append(FileError(path=relative, message=f"not valid UTF-8 at byte {exc.start}"))
            logger.warning("Skipping undecodable file %s", relative)
            continue
        except OSError as exc:
            errors.append(FileError(path=relative, message=str(exc.strerror or exc)))
            logger.warning("Skipping unreadable file %s: %s", relative, exc)
            continue
        documents.append(
            SourceDocument(
                doc_id=document_id(relative),
                path=relative,
                format=doc_format,
                content=content,
                metadata={"title": path.stem},
            )
        )

    return CorpusManifest(
        root=str(root_path),
        documents=tuple(documents),
        skipped=tuple(skipped),
        errors=tuple(errors),
    )


def manifest_records(manifest: CorpusManifest) -> List[Dict[str, Any]]:
    # 日本語: JSON Lines 出力用のレコード列 / English: One JSON-able record per line
    records: List[Dict[str, Any]] = [
        {
            "record": "summary",
            "root": manifest.root,
            "documents": len(manifest.documents),
            "counts": manifest.counts,
            "skipped": len(manifest.skipped),
            "errors": len(manifest.errors),
        }
    ]
    for document in manifest.documents:
        records.append({"record": "document", **document.descriptor()})
    for item in manifest.skipped:
        records.append({"record": "skipped", "path": item.path, "reason": item.reason})
    for item in manifest.errors:
        records.append({"record": "error", "path": item.path, "message": item.message})
    return records


def chunk_document(doc: SourceDocument, policy: ChunkingPolicy | None = None) -> List[TextChunk]:
    """Sliding character windows of `max_chars`, consecutive windows overlapping by `overlap_chars`."""
    if doc.format != "text":
        raise ValueError(f"chunk_document expects a text document, got {doc.format} ({doc.path})")
    policy = policy or ChunkingPolicy()
    length = len(doc.content)
    chunks: List[TextChunk] = []
    ordinal = 0
    while True:
        start = ordinal * policy.step
        if start >= length:
            break
        end = min(start + policy.max_chars, length)
        chunks.append(
            TextChunk(
                chunk_id=f"{doc.doc_id}#{ordinal}",
                doc_id=doc.doc_id,
                ordinal=ordinal,
                span=(start, end),
                text=doc.content[start:end],
            )
        )
        if end == length:
            break
        ordinal += 1
    return chunks


def chunk_corpus(manifest: CorpusManifest, policy: ChunkingPolicy | None = None) -> List[TextChunk]:
    chunks: List[TextChunk] = []
    for document in manifest.documents_of("text"):
        chunks.extend(chunk_document(document, policy))
    return chunks


@dataclass(frozen=True)
class _Cell:
    raw: str
    kind: str
    value: Any = None
    percent: bool = False


def _infer_cell(raw: str) -> _Cell:
    # 日本語: null → 数値 → 真偽値 → テキストの順で推論 / English: Inference order null, number, boolean, text
    stripped = raw.strip()
    if stripped.lower() in _NULL_LITERALS:
        return _Cell(raw=raw, kind="null")
    match = _NUMBER_PATTERN.match(stripped)
    if match:
        percent = bool(match.group(1))
        number = float(stripped[:-1] if percent else stripped)
        if math.isfinite(number):
            return _Cell(raw=raw, kind="number", value=number, percent=percent)
    lowered = stripped.lower()
    if lowered in _BOOLEAN_LITERALS:
        return _Cell(raw=raw, kind="boolean", value=_BOOLEAN_LITERALS[lowered])
    return _Cell(raw=raw, kind="text", value=raw)


def _json_cell(value: Any) -> _Cell:
    if value is None:
        return _Cell(raw="null", kind="null")
    if isinstance(value, bool):
        return _Cell(raw="true" if value else "false", kind="boolean", value=value)
    if isinstance(value, (int, float)):
        try:
            number = float(value)
        except OverflowError:
            # 日本語: float に収まらない整数はテキスト扱い / English: Integers beyond float range stay text
            number = math.inf
        if not math.isfinite(number):
            return _Cell(raw=json.dumps(value), kind="text", value=json.dumps(value))
        return _Cell(raw=json.dumps(value), kind="number", value=number)
    if isinstance(value, str):
        return _infer_cell(value)
    encoded = json.dumps(value, ensure_ascii=False, sort_keys=True)
    return _Cell(raw=encoded, kind="text", value=encoded)


def _build_table(name: str, header: Sequence[str], cell_rows: Sequence[Sequence[_Cell]], path: str) -> Table:
    columns: List[Column] = []
    kinds: List[str] = []
    for index, column_name in enumerate(header):
        cells = [row[index] for row in cell_rows]
        present = {cell.kind for cell in cells if cell.kind != "null"}
        if present == {"number"}:
            column_type = "number"
        elif present == {"boolean"}:
            column_type = "boolean"
        else:
            column_type = "text"
        unit = "percent" if column_type == "number" and any(cell.percent for cell in cells) else None
        nullable = any(cell.kind == "null" for cell in cells)
        columns.append(Column(name=column_name, type=column_type, nullable=nullable, unit=unit))
        kinds.append(column_type)

    rows = []
    for row in cell_rows:
        values = []
        for cell, column_type in zip(row, kinds):
            if cell.kind == "null":
                values.append(None)
            elif column_type == "text":
                values.append(cell.raw)
            else:
                values.append(cell.value)
        rows.append(tuple(values))

    try:
        schema = TableSchema(name=name, columns=tuple(columns))
    except ValueError as exc:
        raise StructuredParseError(path, str(exc)) from exc
    return Table(schema=schema, rows=tuple(rows))


def _parse_csv(doc: SourceDocument, name: str) -> Table:
    reader = csv.reader(io.StringIO(doc.content, newline=""), strict=True)
    try:
        numbered = list(enumerate(reader))
    except csv.Error as exc:
        raise StructuredParseError(doc.path, f"malformed CSV: {exc}", line=reader.line_num) from exc
    # 日本語: 行番号は空行を除く前に確定 / English: Row numbers are fixed before blank records are dropped
    numbered = [(number, record) for number, record in numbered if record]
    if not numbered:
        raise StructuredParseError(doc.path, "missing header row", line=1)

    header_number, header_record = numbered[0]
    header = [column.strip() for column in header_record]
    for position, column in enumerate(header):
        if not column:
            raise StructuredParseError(doc.path, f"empty column name at position {position}", line=1)
    width = len(header)
    ragged = [number - header_number for number, record in numbered[1:] if len(record) != width]
    if ragged:
        raise StructuredParseError(doc.path, f"ragged rows (expected {width} cells)", rows=ragged)
    cell_rows = [[_infer_cell(raw) for raw in record] for _, record in numbered[1:]]
    return _build_table(name, header, cell_rows, doc.path)


def _flatten(record: Mapping[str, Any]) -> Dict[str, Any]:
    # 日本語: 1 階層のみドット記法で展開 / English: Flatten exactly one nesting level with dotted names
    flat: Dict[str, Any] = {}
    for key, value in record.items():
        if isinstance(value, dict):
            for inner_key, inner_value in value.items():
                flat[f"{key}.{inner_key}"] = inner_value
        else:
            flat[str(key)] = value
    return flat


def _parse_json(doc: SourceDocument, name: str) -> Table:
    try:
        payload = json.loads(doc.content)
    except json.JSONDecodeError as exc:
        raise StructuredParseError(doc.path, f"malformed JSON: {exc.msg}", line=exc.lineno, offset=exc.pos) from exc
    except (ValueError, RecursionError) as exc:
        raise StructuredParseError(doc.path, f"malformed JSON: {exc}") from exc

    if isinstance(payload, dict):
        records: List[Any] = [payload]
    elif isinstance(payload, list):
        records = payload
    else:
        raise StructuredParseError(doc.path, f"top-level JSON {type(payload).__name__} is not a table")

    bad = [index for index, record in enumerate(records) if not isinstance(record, dict)]
    if bad:
        raise StructuredParseError(doc.path, "array elements must be objects", rows=bad)

    flattened = [_flatten(record) for record in records]
    header: List[str] = []
    seen: set[str] = set()
    for record in flattened:
        for key in record:
            if key not in seen:
                seen.add(key)
                header.append(key)
    cell_rows = [[_json_cell(record.get(key)) for key in header] for record in flattened]
    return _build_table(name, header, cell_rows, doc.path)


def parse_structured(doc: SourceDocument, *, table_name: str | None = None) -> Table:
    """Parse a CSV or JSON document into a typed table (pure function of the content)."""
    name = table_name or table_name_for(doc.path)
    if doc.format == "csv":
        return _parse_csv(doc, name)
    if doc.format == "json":
        return _parse_json(doc, name)
    raise ValueError(f"parse_structured expects csv or json, got {doc.format} ({doc.path})")


@dataclass(frozen=True)
class CorpusTables:
    tables: Mapping[str, Table] = field(default_factory=dict)
    errors: Tuple[FileError, ...] = ()


def load_corpus_tables(manifest: CorpusManifest, *, max_workers: int = 4) -> CorpusTables:
    """Parse every csv/json document in parallel; results merge in path order."""
    documents = [*manifest.documents_of("csv"), *manifest.documents_of("json")]
    documents.sort(key=lambda document: document.path)

    def _parse(document: SourceDocument) -> Table | StructuredParseError:
        try:
            return parse_structured(document)
        except StructuredParseError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        outcomes = list(pool.map(_parse, documents))

    tables: Dict[str, Table] = {}
    errors: List[FileError] = []
    for document, outcome in zip(documents, outcomes):
        if isinstance(outcome, StructuredParseError):
            logger.warning("Cannot parse %s: %s", document.path, outcome)
            errors.append(FileError(path=document.path, message=str(outcome)))
            continue
        if outcome.name in tables:
            message = f"duplicate table name {outcome.name}"
            logger.warning("Cannot register %s: %s", document.path, message)
            errors.append(FileError(path=document.path, message=message))
            continue
        tables[outcome.name] = outcome
    return CorpusTables(tables=tables, errors=tuple(errors))
