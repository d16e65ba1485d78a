"""Deterministic rulebook behind the mock table_extract and plan_synthesis tasks.

Both functions take and return the same text the http backend would see, so
the extraction service treats mock and model output identically.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from query_agent.models.plan_models import (
    Aggregate,
    AggregateSpec,
    And,
    Comparison,
    Filter,
    Join,
    Limit,
    PlanLiteral,
    Predicate,
    QueryPlan,
    Scan,
    Sort,
)
from query_agent.services.plan_grammar import format_plan

EXTRACTED_COLUMNS: Tuple[Dict[str, object], ...] = (
    {"name": "Quarter", "type": "text", "unit": None},
    {"name": "Sales Metrics", "type": "text", "unit": None},
    {"name": "Change Percentage", "type": "number", "unit": "percent"},
)

_FACT_PATTERN = re.compile(
    r"\b(Q[1-4])\b[^.!?\n]*?\b(sales|revenue|rating|symptoms)\b[^.!?\n]*?"
    r"\b(increased|decreased|was)\b[^.!?\n]*?([+-]?\d+(?:\.\d+)?)(%?)",
    re.IGNORECASE,
)


def mock_table_extract(text: str) -> str:
    """Quarter ... metric ... verb ... number facts become (Quarter, Sales Metrics, Change Percentage) rows."""
    rows: List[List[object]] = []
    for match in _FACT_PATTERN.finditer(text or ""):
        quarter, metric, verb, number, _percent = match.groups()
        value = float(number)
        if verb.lower() == "decreased":
            value = -abs(value)
        elif verb.lower() == "increased":
            value = abs(value)
        rows.append([quarter.upper(), metric.capitalize(), value])
    return json.dumps({"columns": list(EXTRACTED_COLUMNS), "rows": rows})


@dataclass(frozen=True)
class _CatalogTable:
    name: str
    columns: Tuple[Tuple[str, str, Optional[str]], ...]

    def column(self, word: str) -> Optional[Tuple[str, str, Optional[str]]]:
        for form in _word_forms(word):
            for column in self.columns:
                if column[0].casefold() == form:
                    return column
        return None


def _word_forms(word: str) -> List[str]:
    lowered = word.casefold()
    forms = [lowered]
    if lowered.endswith("ies") and len(lowered) > 3:
        forms.append(lowered[:-3] + "y")
    if lowered.endswith("s") and len(lowered) > 1:
        forms.append(lowered[:-1])
    return forms


def _table_forms(name: str) -> List[str]:
    lowered = name.casefold()
    forms = [lowered, lowered + "s"]
    if lowered.endswith("s"):
        forms.append(lowered[:-1])
    return forms


def _read_catalog(catalog_text: str) -> List[_CatalogTable]:
    try:
        payload = json.loads(catalog_text)
    except (TypeError, json.JSONDecodeError):
        return []
    tables: List[_CatalogTable] = []
    for entry in payload.get("tables", []) if isinstance(payload, dict) else []:
        columns = tuple(
            (str(column.get("name")), str(column.get("type")), column.get("unit"))
            for column in entry.get("columns", [])
        )
        tables.append(_CatalogTable(name=str(entry.get("name")), columns=columns))
    return tables


_WORD = re.compile(r"[a-z0-9_]+")


def _words_after(text: str, position: int, limit: int) -> List[str]:
    return _WORD.findall(text[position:])[:limit]


def _words_before(text: str, position: int, limit: int) -> List[str]:
    return list(reversed(_WORD.findall(text[:position])))[:limit]


def _referenced_tables(question: str, tables: Sequence[_CatalogTable]) -> List[_CatalogTable]:
    # 日本語: "all <table>" は全称量化なので参照扱いしない / English: "all <table>" quantifies and is not a reference
    found: List[Tuple[int, str, _CatalogTable]] = []
    for table in tables:
        best: Optional[int] = None
        for form in _table_forms(table.name):
            for match in re.finditer(rf"\b{re.escape(form)}\b", question):
                if re.search(r"\ball\s+$", question[: match.start()]):
                    continue
                if best is None or match.start() < best:
                    best = match.start()
        if best is not None:
            found.append((best, table.name, table))
    found.sort(key=lambda item: (item[0], item[1]))
    return [table for _, _, table in found]


def _resolve(words: Sequence[str], tables: Sequence[_CatalogTable], *, numeric: bool = False):
    for word in words:
        for table in tables:
            column = table.column(word)
            if column is None:
                continue
            if numeric and column[1] != "number":
                continue
            return column
    return None


@dataclass
class _Draft:
    aggregates: List[AggregateSpec]
    filters: List[Tuple[int, Predicate]]
    group_by: List[str]
    top: Optional[int] = None


_AGGREGATE_CUES: Tuple[Tuple[str, str, str], ...] = (
    (r"\b(?:total|sum)\b(?:\s+of)?", "SUM", "total"),
    (r"\b(?:average|mean)\b(?:\s+of)?", "AVG", "avg"),
    (r"\b(?:minimum|lowest)\b(?:\s+of)?", "MIN", "min"),
    (r"\b(?:maximum|highest)\b(?:\s+of)?", "MAX", "max"),
)


def _draft(question: str, scope: Sequence[_CatalogTable], reference_quarter: str) -> _Draft:
    draft = _Draft(aggregates=[], filters=[], group_by=[])
    outputs: set[str] = set()

    for pattern, fn, prefix in _AGGREGATE_CUES:
        for match in re.finditer(pattern, question):
            column = _resolve(_words_after(question, match.end(), 5), scope, numeric=True)
            if column is None:
                continue
            output = f"{prefix}_{column[0]}".casefold().replace(" ", "_")
            if output in outputs:
                continue
            outputs.add(output)
            draft.aggregates.append(AggregateSpec(fn=fn, column=column[0], output=output))  # type: ignore[arg-type]

    if re.search(r"\b(?:how many|number of|count)\b", question) and "count" not in outputs:
        outputs.add("count")
        draft.aggregates.append(AggregateSpec(fn="COUNT", column=None, output="count"))

    quarter_column = _resolve(["quarter"], scope)
    if quarter_column is not None:
        for match in re.finditer(r"\b(?:in|for|during)\s+(?:the\s+)?(q[1-4]|last quarter)\b", question):
            value = reference_quarter if match.group(1) == "last quarter" else match.group(1).upper()
            draft.filters.append(
                (match.start(), Comparison(column=quarter_column[0], op="=", operand=PlanLiteral(value=value, type="text")))
            )
            break

    for match in re.finditer(
        r"\b(more|greater|higher|less|fewer|lower)\s+than\s+([+-]?\d+(?:\.\d+)?)(%?)", question
    ):
        percent = bool(match.group(3))
        before = [word for word in _words_before(question, match.start(), 4) if word not in {"of", "a", "an", "the"}]
        column = _resolve(before, scope, numeric=True)
        if column is None and percent:
            column = next(
                (col for table in scope for col in table.columns if col[1] == "number" and col[2] == "percent"),
                None,
            )
        if column is None:
            continue
        op = ">" if match.group(1) in {"more", "greater", "higher"} else "<"
        literal = PlanLiteral(value=float(match.group(2)), type="number", unit="percent" if percent else None)
        draft.filters.append((match.start(), Comparison(column=column[0], op=op, operand=literal)))  # type: ignore[arg-type]

    for match in re.finditer(r"\b(?:from different|by|per|for each|across)\s+(\w+)", question):
        column = _resolve([match.group(1)], scope)
        if column is not None and column[0] not in draft.group_by:
            draft.group_by.append(column[0])

    top = re.search(r"\btop\s+(\d+)\b", question)
    if top:
        draft.top = int(top.group(1))
    return draft


def mock_plan_synthesis(question: str, catalog_text: str, reference_quarter: str = "Q4") -> str:
    """Keyword grammar mapping a question onto a plan; empty text when the catalog is unusable."""
    tables = _read_catalog(catalog_text)
    if not tables:
        return ""
    lowered = (question or "").casefold()

    referenced = _referenced_tables(lowered, tables)
    if not referenced:
        words = _WORD.findall(lowered)
        referenced = [table for table in tables if any(table.column(word) for word in words)][:1] or [tables[0]]

    base: QueryPlan = Scan(table=referenced[0].name)
    scope = [referenced[0]]
    for table in referenced[1:]:
        shared = [
            column[0]
            for column in scope[0].columns
            if table.column(column[0]) is not None and table.column(column[0])[1] == column[1]
        ]
        if shared:
            base = Join(left=base, right=Scan(table=table.name), key=shared[0])
            scope.append(table)
            break

    draft = _draft(lowered, scope, reference_quarter)
    plan: QueryPlan = base
    if draft.filters:
        predicates = [predicate for _, predicate in sorted(draft.filters, key=lambda item: item[0])]
        plan = Filter(predicate=predicates[0] if len(predicates) == 1 else And(parts=tuple(predicates)), input=plan)

    aggregates = list(draft.aggregates)
    if draft.group_by and not aggregates:
        aggregates.append(AggregateSpec(fn="COUNT", column=None, output="count"))
    if aggregates:
        plan = Aggregate(group_by=tuple(draft.group_by), aggregates=tuple(aggregates), input=plan)

    if draft.top is not None:
        if aggregates:
            sort_column: Optional[str] = aggregates[0].output
        else:
            sort_column = next((col[0] for table in scope for col in table.columns if col[1] == "number"), None)
        if sort_column is not None:
            plan = Sort(column=sort_column, direction="desc", input=plan)
        plan = Limit(n=draft.top, input=plan)
    return format_plan(plan)
