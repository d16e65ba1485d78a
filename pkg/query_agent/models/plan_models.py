"""Relational plan operator tree and predicate types."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Tuple, Union

from query_agent.models.table_models import Catalog, TableSchema

ComparisonOp = Literal["=", "!=", "<", "<=", ">", ">="]
AggregateFn = Literal["SUM", "AVG", "COUNT", "MIN", "MAX"]
SortDirection = Literal["asc", "desc"]
LiteralType = Literal["number", "text", "boolean", "null"]

COMPARISON_OPS: Tuple[ComparisonOp, ...] = ("=", "!=", "<", "<=", ">", ">=")
AGGREGATE_FNS: Tuple[AggregateFn, ...] = ("SUM", "AVG", "COUNT", "MIN", "MAX")


@dataclass(frozen=True)
class PlanLiteral:
    value: object
    type: LiteralType
    # 日本語: "15%" のような百分率リテラル / English: Set for percent literals such as "15%"
    unit: Optional[str] = None


@dataclass(frozen=True)
class ColumnRef:
    name: str


@dataclass(frozen=True)
class Comparison:
    column: str
    op: ComparisonOp
    operand: Union[PlanLiteral, ColumnRef]


@dataclass(frozen=True)
class And:
    parts: Tuple["Predicate", ...]

    def __post_init__(self) -> None:
        if len(self.parts) < 2:
            raise ValueError("AND needs at least two operands")


@dataclass(frozen=True)
class Or:
    parts: Tuple["Predicate", ...]

    def __post_init__(self) -> None:
        if len(self.parts) < 2:
            raise ValueError("OR needs at least two operands")


@dataclass(frozen=True)
class Not:
    part: "Predicate"


Predicate = Union[Comparison, And, Or, Not]


@dataclass(frozen=True)
class Scan:
    table: str


@dataclass(frozen=True)
class Filter:
    predicate: Predicate
    input: "QueryPlan"


@dataclass(frozen=True)
class Project:
    columns: Tuple[str, ...]
    input: "QueryPlan"


@dataclass(frozen=True)
class Join:
    left: "QueryPlan"
    right: "QueryPlan"
    key: str
    kind: Literal["inner"] = "inner"


@dataclass(frozen=True)
class AggregateSpec:
    fn: AggregateFn
    # 日本語: None は COUNT(*) / English: None stands for COUNT(*)
    column: Optional[str]
    output: str


@dataclass(frozen=True)
class Aggregate:
    group_by: Tuple[str, ...]
    aggregates: Tuple[AggregateSpec, ...]
    input: "QueryPlan"


@dataclass(frozen=True)
class Sort:
    column: str
    direction: SortDirection
    input: "QueryPlan"


@dataclass(frozen=True)
class Limit:
    n: int
    input: "QueryPlan"


QueryPlan = Union[Scan, Filter, Project, Join, Aggregate, Sort, Limit]


@dataclass(frozen=True)
class ValidatedPlan:
    """A plan that passed every validation check against `catalog`."""

    plan: QueryPlan
    catalog: Catalog
    output_schema: TableSchema


def plan_children(plan: QueryPlan) -> Tuple[QueryPlan, ...]:
    if isinstance(plan, Scan):
        return ()
    if isinstance(plan, Join):
        return (plan.left, plan.right)
    return (plan.input,)


def scanned_tables(plan: QueryPlan) -> Tuple[str, ...]:
    if isinstance(plan, Scan):
        return (plan.table,)
    names: list[str] = []
    for child in plan_children(plan):
        names.extend(scanned_tables(child))
    return tuple(names)
