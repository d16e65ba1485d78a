"""Plan validation and the in-memory relational executor."""

from __future__ import annotations

import csv
import datetime
import io
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from query_agent.core.errors import PlanValidationError
from query_agent.models.plan_models import (
    AGGREGATE_FNS,
    COMPARISON_OPS,
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
    Predicate,
    Project,
    QueryPlan,
    Scan,
    Sort,
    ValidatedPlan,
)
from query_agent.models.table_models import Catalog, Column, Provenance, ResultTable, Table, TableSchema

logger = logging.getLogger("query_agent.relexec")

ORDERING_OPS = {"<", "<=", ">", ">="}
NUMERIC_AGGREGATES = {"SUM", "AVG", "MIN", "MAX"}


# ---------------------------------------------------------------------------
# 日本語: スキーマ導出 (検証と実行で共有) / English: Schema derivation shared by validation and execution
# ---------------------------------------------------------------------------


def join_schema(left: TableSchema, right: TableSchema, key: str) -> TableSchema:
    right_key = right.index_of(key)
    right_columns = tuple(column for index, column in enumerate(right.columns) if index != right_key)
    return TableSchema(name=f"{left.name} JOIN {right.name}", columns=left.columns + right_columns)


def aggregate_schema(source: TableSchema, group_by: Sequence[str], aggregates: Sequence[AggregateSpec]) -> TableSchema:
    columns: List[Column] = []
    for name in group_by:
        column = source.column(name)
        assert column is not None
        columns.append(Column(name=column.name, type=column.type, nullable=True, unit=column.unit))
    for spec in aggregates:
        if spec.fn == "COUNT":
            columns.append(Column(name=spec.output, type="number", nullable=False))
            continue
        column = source.column(spec.column or "")
        unit = column.unit if column is not None else None
        columns.append(Column(name=spec.output, type="number", nullable=True, unit=unit))
    return TableSchema(name=source.name, columns=tuple(columns))


def literal_value(literal: PlanLiteral, column: Column) -> Any:
    """Literal coerced to the column's cell representation."""
    if literal.type == "null" or literal.value is None:
        return None
    if column.type == "date" and literal.type == "text":
        return datetime.date.fromisoformat(str(literal.value))
    if literal.type == "number":
        return float(literal.value)
    return literal.value


# ---------------------------------------------------------------------------
# 日本語: 検証 / English: Validation
# ---------------------------------------------------------------------------


def _literal_violation(column: Column, literal: PlanLiteral, op: str) -> Optional[str]:
    if literal.type == "null":
        return None
    if column.type == "number":
        if literal.type != "number":
            return f"literal {literal.value!r} is not comparable with number column {column.name}"
        if literal.unit == "percent" and column.unit != "percent":
            return f"percent literal compared with column {column.name} which has no percent unit"
        return None
    if column.type == "text":
        if literal.type != "text":
            return f"literal {literal.value!r} is not comparable with text column {column.name}"
        return None
    if column.type == "boolean":
        if literal.type != "boolean":
            return f"literal {literal.value!r} is not comparable with boolean column {column.name}"
        if op in ORDERING_OPS:
            return f"ordering comparison {op} on boolean column {column.name}"
        return None
    if literal.type != "text":
        return f"literal {literal.value!r} is not comparable with date column {column.name}"
    try:
        datetime.date.fromisoformat(str(literal.value))
    except ValueError:
        return f"literal {literal.value!r} is not an ISO date for column {column.name}"
    return None


def _check_predicate(predicate: Predicate, schema: TableSchema, violations: List[str]) -> None:
    if isinstance(predicate, Not):
        _check_predicate(predicate.part, schema, violations)
        return
    if isinstance(predicate, (And, Or)):
        for part in predicate.parts:
            _check_predicate(part, schema, violations)
        return
    column = schema.column(predicate.column)
    if column is None:
        violations.append(f"unknown column {predicate.column} in table {schema.name}")
    if predicate.op not in COMPARISON_OPS:
        violations.append(f"unknown comparison operator {predicate.op!r}")
    operand = predicate.operand
    if isinstance(operand, ColumnRef):
        other = schema.column(operand.name)
        if other is None:
            violations.append(f"unknown column {operand.name} in table {schema.name}")
        if column is not None and other is not None:
            if column.type != other.type:
                violations.append(f"cannot compare {column.type} column {column.name} with {other.type} column {other.name}")
            elif column.type == "boolean" and predicate.op in ORDERING_OPS:
                violations.append(f"ordering comparison {predicate.op} on boolean column {column.name}")
        return
    if column is not None:
        problem = _literal_violation(column, operand, predicate.op)
        if problem:
            violations.append(problem)


def _validate(plan: QueryPlan, catalog: Catalog, violations: List[str]) -> Optional[TableSchema]:
    if isinstance(plan, Scan):
        schema = catalog.resolve(plan.table)
        if schema is None:
            violations.append(f"unknown table {plan.table}")
        return schema

    if isinstance(plan, Join):
        left = _validate(plan.left, catalog, violations)
        right = _validate(plan.right, catalog, violations)
        if plan.kind != "inner":
            violations.append(f"unsupported join kind {plan.kind}")
        if left is None or right is None:
            return None
        left_key, right_key = left.column(plan.key), right.column(plan.key)
        if left_key is None:
            violations.append(f"join key {plan.key} missing from table {left.name}")
        if right_key is None:
            violations.append(f"join key {plan.key} missing from table {right.name}")
        if left_key is None or right_key is None:
            return None
        if left_key.type != right_key.type:
            violations.append(f"join key {plan.key} has type {left_key.type} on the left and {right_key.type} on the right")
            return None
        left_names = {column.name.casefold() for column in left.columns}
        clashes = [
            column.name
            for column in right.columns
            if column.name.casefold() != right_key.name.casefold() and column.name.casefold() in left_names
        ]
        for name in clashes:
            violations.append(f"ambiguous column {name} after joining {left.name} and {right.name}")
        return None if clashes else join_schema(left, right, plan.key)

    source = _validate(plan.input, catalog, violations)
    if source is None:
        return None

    if isinstance(plan, Filter):
        _check_predicate(plan.predicate, source, violations)
        return source

    if isinstance(plan, Project):
        seen: set[str] = set()
        columns: List[Column] = []
        for name in plan.columns:
            column = source.column(name)
            if column is None:
                violations.append(f"unknown column {name} in table {source.name}")
                continue
            if column.name.casefold() in seen:
                violations.append(f"column {name} projected twice")
                continue
            seen.add(column.name.casefold())
            columns.append(column)
        if not plan.columns:
            violations.append("projection selects no columns")
        return TableSchema(name=source.name, columns=tuple(columns)) if len(columns) == len(plan.columns) else None

    if isinstance(plan, Aggregate):
        ok = True
        names: set[str] = set()
        for name in plan.group_by:
            if source.column(name) is None:
                violations.append(f"group-by column {name} not in table {source.name}")
                ok = False
            elif name.casefold() in names:
                violations.append(f"group-by column {name} listed twice")
                ok = False
            names.add(name.casefold())
        if not plan.aggregates and not plan.group_by:
            violations.append("aggregate without groups or aggregate functions")
        for spec in plan.aggregates:
            if spec.fn not in AGGREGATE_FNS:
                violations.append(f"unknown aggregate function {spec.fn}")
                ok = False
            if spec.column is None:
                if spec.fn != "COUNT":
                    violations.append(f"{spec.fn} needs a column")
                    ok = False
            else:
                column = source.column(spec.column)
                if column is None:
                    violations.append(f"unknown column {spec.column} in table {source.name}")
                    ok = False
                elif spec.fn in NUMERIC_AGGREGATES and column.type != "number":
                    violations.append(f"{spec.fn} needs a numeric column but {spec.column} is {column.type}")
                    ok = False
            if not spec.output.strip():
                violations.append(f"{spec.fn} output name is empty")
                ok = False
            elif spec.output.casefold() in names:
                violations.append(f"output name {spec.output} is not unique")
                ok = False
            names.add(spec.output.casefold())
        return aggregate_schema(source, plan.group_by, plan.aggregates) if ok else None

    if isinstance(plan, Sort):
        if source.column(plan.column) is None:
            violations.append(f"unknown column {plan.column} in table {source.name}")
        if plan.direction not in ("asc", "desc"):
            violations.append(f"sort direction must be asc or desc, not {plan.direction!r}")
        return source

    if isinstance(plan, Limit):
        if isinstance(plan.n, bool) or not isinstance(plan.n, int) or plan.n < 0:
            violations.append(f"limit must be a non-negative integer, not {plan.n!r}")
        return source

    violations.append(f"unknown plan node {type(plan).__name__}")
    return None


def validate_plan(plan: QueryPlan, catalog: Catalog) -> ValidatedPlan | List[str]:
    """A validated wrapper, or every violation found (never just the first)."""
    violations: List[str] = []
    schema = _validate(plan, catalog, violations)
    if violations or schema is None:
        return violations or ["plan output schema could not be derived"]
    return ValidatedPlan(plan=plan, catalog=catalog, output_schema=schema)


def ensure_valid(plan: QueryPlan, catalog: Catalog) -> ValidatedPlan:
    outcome = validate_plan(plan, catalog)
    if isinstance(outcome, ValidatedPlan):
        return outcome
    raise PlanValidationError(outcome)


# ---------------------------------------------------------------------------
# 日本語: 実行 / English: Execution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Relation:
    schema: TableSchema
    rows: List[Tuple[Any, ...]]
    provenance: List[Provenance]


_COMPARE: Dict[str, Callable[[Any, Any], bool]] = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def _compile_predicate(predicate: Predicate, schema: TableSchema) -> Callable[[Tuple[Any, ...]], bool]:
    if isinstance(predicate, Not):
        inner = _compile_predicate(predicate.part, schema)
        return lambda row: not inner(row)
    if isinstance(predicate, And):
        parts = [_compile_predicate(part, schema) for part in predicate.parts]
        return lambda row: all(part(row) for part in parts)
    if isinstance(predicate, Or):
        parts = [_compile_predicate(part, schema) for part in predicate.parts]
        return lambda row: any(part(row) for part in parts)

    left_index = schema.index_of(predicate.column)
    compare = _COMPARE[predicate.op]
    operand = predicate.operand
    if isinstance(operand, ColumnRef):
        right_index = schema.index_of(operand.name)

        def _columns(row: Tuple[Any, ...]) -> bool:
            left, right = row[left_index], row[right_index]
            # 日本語: null を含む比較は常に偽 / English: Any comparison involving null is false
            return left is not None and right is not None and compare(left, right)

        return _columns

    constant = literal_value(operand, schema.columns[left_index])

    def _literal(row: Tuple[Any, ...]) -> bool:
        value = row[left_index]
        return value is not None and constant is not None and compare(value, constant)

    return _literal


def _aggregate_value(fn: str, values: List[Any], row_count: int) -> Any:
    if fn == "COUNT":
        return float(row_count if values is None else len(values))
    if not values:
        return None
    if fn == "SUM":
        return math.fsum(values)
    if fn == "AVG":
        return math.fsum(values) / len(values)
    if fn == "MIN":
        return min(values)
    return max(values)


def _run(plan: QueryPlan, tables: Mapping[str, Table], catalog: Catalog) -> _Relation:
    if isinstance(plan, Scan):
        schema = catalog.resolve(plan.table)
        assert schema is not None
        table = tables[schema.name]
        return _Relation(
            schema=table.schema,
            rows=list(table.rows),
            provenance=[((table.name, index),) for index in range(len(table.rows))],
        )

    if isinstance(plan, Join):
        left = _run(plan.left, tables, catalog)
        right = _run(plan.right, tables, catalog)
        left_key = left.schema.index_of(plan.key)
        right_key = right.schema.index_of(plan.key)
        buckets: Dict[Any, List[int]] = defaultdict(list)
        for index, row in enumerate(right.rows):
            if row[right_key] is not None:
                buckets[row[right_key]].append(index)
        rows: List[Tuple[Any, ...]] = []
        provenance: List[Provenance] = []
        for left_index, left_row in enumerate(left.rows):
            if left_row[left_key] is None:
                continue
            for right_index in buckets.get(left_row[left_key], ()):
                right_row = right.rows[right_index]
                rows.append(left_row + right_row[:right_key] + right_row[right_key + 1 :])
                provenance.append(tuple(sorted(left.provenance[left_index] + right.provenance[right_index])))
        return _Relation(schema=join_schema(left.schema, right.schema, plan.key), rows=rows, provenance=provenance)

    source = _run(plan.input, tables, catalog)

    if isinstance(plan, Filter):
        keep = _compile_predicate(plan.predicate, source.schema)
        kept = [index for index, row in enumerate(source.rows) if keep(row)]
        return _Relation(
            schema=source.schema,
            rows=[source.rows[index] for index in kept],
            provenance=[source.provenance[index] for index in kept],
        )

    if isinstance(plan, Project):
        indexes = [source.schema.index_of(name) for name in plan.columns]
        schema = TableSchema(name=source.schema.name, columns=tuple(source.schema.columns[i] for i in indexes))
        return _Relation(
            schema=schema,
            rows=[tuple(row[i] for i in indexes) for row in source.rows],
            provenance=list(source.provenance),
        )

    if isinstance(plan, Aggregate):
        schema = aggregate_schema(source.schema, plan.group_by, plan.aggregates)
        group_indexes = [source.schema.index_of(name) for name in plan.group_by]
        # 日本語: グループは初出順、null も 1 グループ / English: Groups in first-appearance order; null is its own group
        groups: Dict[Tuple[Any, ...], List[int]] = {}
        for index, row in enumerate(source.rows):
            groups.setdefault(tuple(row[i] for i in group_indexes), []).append(index)
        if not group_indexes and not groups:
            groups[()] = []

        rows = []
        provenance = []
        for key, members in groups.items():
            values: List[Any] = list(key)
            for spec in plan.aggregates:
                if spec.column is None:
                    values.append(_aggregate_value("COUNT", None, len(members)))  # type: ignore[arg-type]
                    continue
                column_index = source.schema.index_of(spec.column)
                present = [source.rows[i][column_index] for i in members if source.rows[i][column_index] is not None]
                values.append(_aggregate_value(spec.fn, present, len(members)))
            rows.append(tuple(values))
            provenance.append(tuple(sorted(pair for i in members for pair in source.provenance[i])))
        return _Relation(schema=schema, rows=rows, provenance=provenance)

    if isinstance(plan, Sort):
        column_index = source.schema.index_of(plan.column)
        order = list(range(len(source.rows)))
        present = [i for i in order if source.rows[i][column_index] is not None]
        missing = [i for i in order if source.rows[i][column_index] is None]
        # 日本語: 安定ソート、null は常に末尾 / English: Stable sort with nulls last in either direction
        present.sort(key=lambda i: source.rows[i][column_index], reverse=plan.direction == "desc")
        ordered = present + missing
        return _Relation(
            schema=source.schema,
            rows=[source.rows[i] for i in ordered],
            provenance=[source.provenance[i] for i in ordered],
        )

    if isinstance(plan, Limit):
        return _Relation(schema=source.schema, rows=source.rows[: plan.n], provenance=source.provenance[: plan.n])

    raise TypeError(f"not a plan node: {plan!r}")


def execute(plan: ValidatedPlan, tables: Mapping[str, Table]) -> ResultTable:
    """Evaluate a validated plan bottom-up; rows carry the sorted multiset of contributing input rows."""
    relation = _run(plan.plan, tables, plan.catalog)
    return ResultTable(schema=relation.schema, rows=tuple(relation.rows), provenance=tuple(relation.provenance))


# ---------------------------------------------------------------------------
# 日本語: 結果表示 / English: Result rendering
# ---------------------------------------------------------------------------


def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if value.is_integer() and abs(value) < 1e15:
            return str(int(value))
        return repr(value)
    if isinstance(value, datetime.date):
        return value.isoformat()
    return str(value)


def _json_cell(value: Any) -> Any:
    if isinstance(value, datetime.date):
        return value.isoformat()
    if isinstance(value, float) and value.is_integer() and abs(value) < 1e15:
        return int(value)
    return value


def render_text(result: ResultTable) -> str:
    """Aligned plain-text table; percent columns carry a % suffix and nulls print as NULL."""
    headers = [column.name for column in result.schema.columns]
    body: List[List[str]] = []
    for row in result.rows:
        cells = []
        for value, column in zip(row, result.schema.columns):
            if value is None:
                cells.append("NULL")
            elif column.unit == "percent":
                cells.append(format_cell(value) + "%")
            else:
                cells.append(format_cell(value))
        body.append(cells)
    widths = [max([len(header)] + [len(cells[i]) for cells in body]) for i, header in enumerate(headers)]
    lines = [
        "  ".join(header.ljust(width) for header, width in zip(headers, widths)).rstrip(),
        "  ".join("-" * width for width in widths),
    ]
    for cells in body:
        lines.append("  ".join(cell.ljust(width) for cell, width in zip(cells, widths)).rstrip())
    lines.append(f"({len(result.rows)} row{'s' if len(result.rows) != 1 else ''})")
    return "\n".join(lines)


def render_csv(result: ResultTable) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([column.name for column in result.schema.columns])
    for row in result.rows:
        writer.writerow([format_cell(value) for value in row])
    return buffer.getvalue()


def result_to_dict(result: ResultTable) -> Dict[str, Any]:
    return {
        "schema": result.schema.to_dict(),
        "rows": [[_json_cell(value) for value in row] for row in result.rows],
        "provenance": [[[table, index] for table, index in entry] for entry in result.provenance],
    }


def render_json(result: ResultTable) -> str:
    return json.dumps(result_to_dict(result), ensure_ascii=False, sort_keys=True)
