"""Reference evaluator for validated plans.

Rows are plain name -> value dicts and every operator is a nested loop.
Only the test suite relies on it, as an independent check of the executor.
"""

from __future__ import annotations

import datetime
import math
from typing import Any, Dict, List, Mapping, Tuple

from query_agent.models.plan_models import (
    Aggregate,
    And,
    ColumnRef,
    Filter,
    Join,
    Limit,
    Not,
    Or,
    Predicate,
    Project,
    QueryPlan,
    Scan,
    Sort,
    ValidatedPlan,
)
from query_agent.models.table_models import ResultTable, Table

_Row = Tuple[Dict[str, Any], List[Tuple[str, int]]]


def _key(name: str) -> str:
    return name.casefold()


def _operand_value(raw: Any, literal_type: str, column_is_date: bool) -> Any:
    if raw is None or literal_type == "null":
        return None
    if column_is_date and literal_type == "text":
        return datetime.date.fromisoformat(raw)
    if literal_type == "number":
        return float(raw)
    return raw


def _holds(predicate: Predicate, row: Dict[str, Any], date_columns: set[str]) -> bool:
    if isinstance(predicate, Not):
        return not _holds(predicate.part, row, date_columns)
    if isinstance(predicate, And):
        for part in predicate.parts:
            if not _holds(part, row, date_columns):
                return False
        return True
    if isinstance(predicate, Or):
        for part in predicate.parts:
            if _holds(part, row, date_columns):
                return True
        return False

    left = row[_key(predicate.column)]
    if isinstance(predicate.operand, ColumnRef):
        right = row[_key(predicate.operand.name)]
    else:
        literal = predicate.operand
        right = _operand_value(literal.value, literal.type, _key(predicate.column) in date_columns)
    if left is None or right is None:
        return False
    op = predicate.op
    if op == "=":
        return left == right
    if op == "!=":
        return not left == right
    if op == "<":
        return left < right
    if op == "<=":
        return left < right or left == right
    if op == ">":
        return right < left
    return right < left or left == right


def _evaluate(plan: QueryPlan, tables: Mapping[str, Table], date_columns: set[str]) -> List[_Row]:
    if isinstance(plan, Scan):
        table = next(t for name, t in tables.items() if name.casefold() == plan.table.casefold())
        names = [_key(column.name) for column in table.schema.columns]
        return [
            ({name: value for name, value in zip(names, row)}, [(table.name, index)])
            for index, row in enumerate(table.rows)
        ]

    if isinstance(plan, Join):
        left_rows = _evaluate(plan.left, tables, date_columns)
        right_rows = _evaluate(plan.right, tables, date_columns)
        key = _key(plan.key)
        joined: List[_Row] = []
        for left, left_prov in left_rows:
            for right, right_prov in right_rows:
                if left[key] is None or right[key] is None or left[key] != right[key]:
                    continue
                merged = dict(left)
                for name, value in right.items():
                    if name != key:
                        merged[name] = value
                joined.append((merged, left_prov + right_prov))
        return joined

    rows = _evaluate(plan.input, tables, date_columns)

    if isinstance(plan, Filter):
        return [(row, prov) for row, prov in rows if _holds(plan.predicate, row, date_columns)]

    if isinstance(plan, Project):
        return [({_key(name): row[_key(name)] for name in plan.columns}, prov) for row, prov in rows]

    if isinstance(plan, Aggregate):
        group_names = [_key(name) for name in plan.group_by]
        groups: List[Tuple[Tuple[Any, ...], List[_Row]]] = []
        for row, prov in rows:
            key = tuple(row[name] for name in group_names)
            for existing_key, members in groups:
                if existing_key == key:
                    members.append((row, prov))
                    break
            else:
                groups.append((key, [(row, prov)]))
        if not groups and not group_names:
            groups.append(((), []))

        result: List[_Row] = []
        for key, members in groups:
            out: Dict[str, Any] = dict(zip(group_names, key))
            for spec in plan.aggregates:
                if spec.column is None:
                    out[_key(spec.output)] = float(len(members))
                    continue
                values = [row[_key(spec.column)] for row, _ in members if row[_key(spec.column)] is not None]
                if spec.fn == "COUNT":
                    out[_key(spec.output)] = float(len(values))
                elif not values:
                    out[_key(spec.output)] = None
                elif spec.fn == "SUM":
                    out[_key(spec.output)] = math.fsum(values)
                elif spec.fn == "AVG":
                    out[_key(spec.output)] = math.fsum(values) / len(values)
                else:
                    best = values[0]
                    for value in values[1:]:
                        if (spec.fn == "MIN" and value < best) or (spec.fn == "MAX" and best < value):
                            best = value
                    out[_key(spec.output)] = best
            provenance: List[Tuple[str, int]] = []
            for _, prov in members:
                provenance.extend(prov)
            result.append((out, provenance))
        return result

    if isinstance(plan, Sort):
        name = _key(plan.column)
        present = [item for item in rows if item[0][name] is not None]
        missing = [item for item in rows if item[0][name] is None]
        # 日本語: 挿入ソート (安定) / English: Insertion sort keeps equal keys in input order
        ordered: List[_Row] = []
        for item in present:
            position = len(ordered)
            while position > 0:
                before = ordered[position - 1][0][name]
                value = item[0][name]
                out_of_order = value < before if plan.direction == "asc" else before < value
                if not out_of_order:
                    break
                position -= 1
            ordered.insert(position, item)
        return ordered + missing

    if isinstance(plan, Limit):
        return rows[: plan.n]

    raise TypeError(f"not a plan node: {plan!r}")


def oracle_execute(plan: ValidatedPlan, tables: Mapping[str, Table]) -> ResultTable:
    date_columns = {
        _key(column.name) for table in tables.values() for column in table.schema.columns if column.type == "date"
    }
    rows = _evaluate(plan.plan, tables, date_columns)
    names = [_key(column.name) for column in plan.output_schema.columns]
    return ResultTable(
        schema=plan.output_schema,
        rows=tuple(tuple(row[name] for name in names) for row, _ in rows),
        provenance=tuple(tuple(sorted(prov)) for _, prov in rows),
    )
