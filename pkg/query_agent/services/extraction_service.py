"""Model-driven table generation and plan synthesis."""

from __future__ import annotations

import datetime
import json
import logging
import math
import re
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

from dateutil import parser as date_parser

from query_agent.core.errors import PlanSynthesisError, PlanSyntaxError
from query_agent.gateway.model_gateway import ModelGateway
from query_agent.models.corpus_models import TextChunk
from query_agent.models.gateway_models import PromptRequest
from query_agent.models.plan_models import QueryPlan
from query_agent.models.table_models import (
    COLUMN_TYPES,
    Catalog,
    Column,
    ColumnType,
    Row,
    SchemaHint,
    Table,
    TableSchema,
)
from query_agent.services.plan_grammar import PLAN_OPERATOR_NAMES, parse_plan

logger = logging.getLogger("query_agent.extraction")

_FENCE = re.compile(r"```[A-Za-z0-9_-]*\n?(.*?)```", re.DOTALL)
_PLAN_START = re.compile(r"\b(?:" + "|".join(PLAN_OPERATOR_NAMES) + r")\s*\(")
_TRUE_WORDS = {"true", "yes", "y"}
_FALSE_WORDS = {"false", "no", "n"}


def render_catalog(catalog: Catalog) -> str:
    """Schema text sent to the model for plan synthesis."""
    payload = {
        "tables": [
            {
                "name": schema.name,
                "columns": [{"name": c.name, "type": c.type, "unit": c.unit} for c in schema.columns],
            }
            for schema in catalog.tables.values()
        ]
    }
    return json.dumps(payload, ensure_ascii=False, indent=2)


# ---------------------------------------------------------------------------
# 日本語: 表生成 / English: Table generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TableGeneration:
    table: Table
    dropped_rows: int
    raw_outputs: Tuple[str, ...]


class _Nonconforming(ValueError):
    pass


def _coerce_cell(value: Any, column: Column) -> Any:
    """Cell value in the column's representation; raises _Nonconforming otherwise."""
    if value is None or (isinstance(value, str) and value.strip().casefold() in {"", "null", "none"}):
        if not column.nullable:
            raise _Nonconforming(f"null in non-nullable column {column.name}")
        return None

    if column.type == "number":
        if isinstance(value, bool):
            raise _Nonconforming(f"boolean in number column {column.name}")
        if isinstance(value, (int, float)):
            try:
                number = float(value)
            except OverflowError as exc:
                raise _Nonconforming(f"{value!r} is out of range") from exc
        elif isinstance(value, str):
            text = value.strip().replace(",", "")
            if text.endswith("%"):
                text = text[:-1].strip()
            try:
                number = float(text)
            except (ValueError, OverflowError) as exc:
                raise _Nonconforming(f"{value!r} is not a number") from exc
        else:
            raise _Nonconforming(f"{value!r} is not a number")
        if not math.isfinite(number):
            raise _Nonconforming(f"{value!r} is not finite")
        return number

    if column.type == "boolean":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.strip().casefold() in _TRUE_WORDS | _FALSE_WORDS:
            return value.strip().casefold() in _TRUE_WORDS
        raise _Nonconforming(f"{value!r} is not a boolean")

    if column.type == "date":
        if isinstance(value, datetime.datetime):
            return value.date()
        if isinstance(value, datetime.date):
            return value
        if not isinstance(value, str):
            raise _Nonconforming(f"{value!r} is not a date")
        try:
            return date_parser.parse(value).date()
        except (ValueError, OverflowError) as exc:
            raise _Nonconforming(f"{value!r} is not a date") from exc

    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float) and math.isfinite(value):
        return str(int(value)) if value.is_integer() else repr(value)
    raise _Nonconforming(f"{value!r} is not text")


def _json_object(raw: str) -> Optional[Dict[str, Any]]:
    text = raw or ""
    fenced = _FENCE.search(text)
    if fenced:
        text = fenced.group(1)
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end <= start:
        return None
    try:
        payload = json.loads(text[start : end + 1])
    except ValueError:
        return None
    return payload if isinstance(payload, dict) else None


def _inferred_columns(entries: Any) -> List[Column]:
    columns: List[Column] = []
    seen: set[str] = set()
    for entry in entries if isinstance(entries, list) else []:
        if isinstance(entry, str):
            entry = {"name": entry}
        if not isinstance(entry, dict):
            continue
        name = str(entry.get("name") or "").strip()
        if not name or name.casefold() in seen:
            continue
        column_type = str(entry.get("type") or "text").strip().lower()
        unit = entry.get("unit")
        seen.add(name.casefold())
        columns.append(
            Column(
                name=name,
                type=column_type if column_type in COLUMN_TYPES else "text",  # type: ignore[arg-type]
                unit=str(unit) if isinstance(unit, str) and unit.strip() else None,
            )
        )
    return columns


def _response_names(entries: Any) -> List[Optional[str]]:
    names: List[Optional[str]] = []
    for entry in entries if isinstance(entries, list) else []:
        if isinstance(entry, str):
            names.append(entry.strip())
        elif isinstance(entry, dict) and entry.get("name") is not None:
            names.append(str(entry["name"]).strip())
        else:
            names.append(None)
    return names


def _column_mapping(schema: TableSchema, names: Sequence[Optional[str]]) -> List[Optional[int]]:
    # 日本語: 列名で対応付け、全滅かつ列数一致なら位置で対応 / English: Map by name; fall back to position when no name matches and widths agree
    folded = [name.casefold() if name else None for name in names]
    mapping = [folded.index(c.name.casefold()) if c.name.casefold() in folded else None for c in schema.columns]
    if all(index is None for index in mapping) and len(names) == len(schema.columns):
        return list(range(len(schema.columns)))
    return mapping


def _schema_prompt(hint: SchemaHint) -> str:
    if hint.target_schema is None:
        if not hint.column_descriptions:
            return ""
        return json.dumps({"column_descriptions": dict(hint.column_descriptions)}, ensure_ascii=False)
    payload: Dict[str, Any] = hint.target_schema.to_dict()
    if hint.column_descriptions:
        payload["column_descriptions"] = dict(hint.column_descriptions)
    return json.dumps(payload, ensure_ascii=False)


def generate_table(
    chunks: Sequence[TextChunk],
    hint: SchemaHint | None,
    gateway: ModelGateway,
    *,
    table_name: str = "extracted",
) -> TableGeneration:
    """Prompt table_extract per chunk and re-validate every returned row.

    Rows that do not conform are dropped and counted, never repaired.
    Identical rows from overlapping chunks are kept once.
    """
    if not chunks:
        raise ValueError("generate_table needs at least one chunk")
    hint = hint or SchemaHint()
    schema: Optional[TableSchema] = None
    if hint.target_schema is not None:
        schema = TableSchema(name=table_name, columns=hint.target_schema.columns)

    raw_outputs: List[str] = []
    rows: List[Row] = []
    seen_rows: set[Row] = set()
    dropped = 0
    schema_text = _schema_prompt(hint)

    for chunk in chunks:
        if not chunk.text.strip():
            continue
        completion = gateway.complete(
            PromptRequest(template_id="table_extract", variables={"schema": schema_text, "text": chunk.text})
        )
        raw_outputs.append(completion.text)
        payload = _json_object(completion.text)
        if payload is None:
            logger.warning("table_extract output for chunk %s is not a JSON object", chunk.chunk_id)
            continue
        if schema is None:
            columns = _inferred_columns(payload.get("columns"))
            if not columns:
                logger.warning("table_extract output for chunk %s names no usable columns", chunk.chunk_id)
                continue
            schema = TableSchema(name=table_name, columns=tuple(columns))

        names = _response_names(payload.get("columns"))
        if not names:
            names = list(schema.column_names)
        mapping = _column_mapping(schema, names)
        raw_rows = payload.get("rows")
        for raw_row in raw_rows if isinstance(raw_rows, list) else []:
            if isinstance(raw_row, dict):
                lookup = {str(key).casefold(): value for key, value in raw_row.items()}
                values = [lookup.get(c.name.casefold()) for c in schema.columns]
            elif isinstance(raw_row, list) and len(raw_row) == len(names):
                values = [None if index is None else raw_row[index] for index in mapping]
            else:
                dropped += 1
                continue
            try:
                row = tuple(_coerce_cell(value, column) for value, column in zip(values, schema.columns))
            except _Nonconforming as exc:
                logger.debug("Dropping row %r from chunk %s: %s", raw_row, chunk.chunk_id, exc)
                dropped += 1
                continue
            if row in seen_rows:
                continue
            seen_rows.add(row)
            rows.append(row)

    if schema is None:
        schema = TableSchema(name=table_name, columns=())
    if not rows:
        logger.warning("Table generation produced no valid rows (%d dropped)", dropped)
    elif dropped:
        logger.info("Table generation kept %d rows and dropped %d", len(rows), dropped)
    return TableGeneration(table=Table(schema=schema, rows=tuple(rows)), dropped_rows=dropped, raw_outputs=tuple(raw_outputs))


# ---------------------------------------------------------------------------
# 日本語: 計画合成 / English: Plan synthesis
# ---------------------------------------------------------------------------


def _plan_text(raw: str) -> str:
    """The first balanced operator expression in model output, fences stripped."""
    text = raw or ""
    fenced = _FENCE.search(text)
    if fenced:
        text = fenced.group(1)
    start = _PLAN_START.search(text)
    if start is None:
        raise PlanSyntaxError("no plan operator found in model output", position=0)
    depth = 0
    quote: Optional[str] = None
    index = start.start()
    while index < len(text):
        char = text[index]
        if quote:
            if char == "\\" and quote == '"':
                index += 1
            elif char == quote:
                quote = None
        elif char in "\"`":
            quote = char
        elif char == "(":
            depth += 1
        elif char == ")":
            depth -= 1
            if depth == 0:
                return text[start.start() : index + 1]
        index += 1
    return text[start.start() :]


def synthesize_plan(
    nlq: str,
    catalog: Catalog,
    gateway: ModelGateway,
    *,
    reference_quarter: str = "Q4",
) -> QueryPlan:
    """Ask the backend for a plan; one retry with the parse error appended."""
    if not len(catalog):
        raise ValueError("synthesize_plan needs a nonempty catalog")
    variables = {
        "reference_quarter": reference_quarter,
        "catalog": render_catalog(catalog),
        "question": nlq,
        "feedback": "",
    }
    raw_outputs: List[str] = []
    last_error: Optional[PlanSyntaxError] = None
    for attempt in range(2):
        completion = gateway.complete(PromptRequest(template_id="plan_synthesis", variables=dict(variables)))
        raw_outputs.append(completion.text)
        try:
            plan = parse_plan(_plan_text(completion.text))
        except PlanSyntaxError as exc:
            last_error = exc
            logger.info("Plan synthesis attempt %d failed to parse: %s", attempt + 1, exc)
            variables["feedback"] = (
                f"\nYour previous answer could not be parsed ({exc}). Answer with one plan in the grammar only."
            )
            continue
        logger.debug("Synthesized plan on attempt %d: %s", attempt + 1, completion.text)
        return plan
    raise PlanSynthesisError(f"could not parse a plan after 2 attempts: {last_error}", raw_outputs)
