"""Relational table, schema and catalog types."""

from __future__ import annotations

import datetime
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Literal, Mapping, Optional, Tuple

ColumnType = Literal["text", "number", "boolean", "date"]

COLUMN_TYPES: Tuple[ColumnType, ...] = ("text", "number", "boolean", "date")

Cell = Any
Row = Tuple[Cell, ...]


@dataclass(frozen=True)
class Column:
    name: str
    type: ColumnType
    nullable: bool = True
    unit: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "type": self.type, "nullable": self.nullable, "unit": self.unit}


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: Tuple[Column, ...]

    def __post_init__(self) -> None:
        if not str(self.name).strip():
            raise ValueError("table name must be nonempty")
        seen: set[str] = set()
        for column in self.columns:
            if column.type not in COLUMN_TYPES:
                raise ValueError(f"column {column.name} has unknown type {column.type!r}")
            key = column.name.casefold()
            if key in seen:
                raise ValueError(f"duplicate column {column.name} in table {self.name}")
            seen.add(key)

    @property
    def column_names(self) -> Tuple[str, ...]:
        return tuple(column.name for column in self.columns)

    def index_of(self, name: str) -> int | None:
        # 日本語: 列名は大文字小文字を区別せず解決 / English: Column names resolve case-insensitively
        key = name.casefold()
        for index, column in enumerate(self.columns):
            if column.name.casefold() == key:
                return index
        return None

    def column(self, name: str) -> Column | None:
        index = self.index_of(name)
        return None if index is None else self.columns[index]

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "columns": [column.to_dict() for column in self.columns]}


def cell_conforms(value: Cell, column_type: ColumnType) -> bool:
    if value is None:
        return True
    if column_type == "number":
        return isinstance(value, float) and math.isfinite(value)
    if column_type == "boolean":
        return isinstance(value, bool)
    if column_type == "date":
        return isinstance(value, datetime.date)
    return isinstance(value, str)


@dataclass(frozen=True)
class Table:
    schema: TableSchema
    rows: Tuple[Row, ...] = ()

    def __post_init__(self) -> None:
        width = len(self.schema.columns)
        for row_number, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(f"row {row_number} of {self.schema.name} has arity {len(row)}, expected {width}")
            for value, column in zip(row, self.schema.columns):
                if not cell_conforms(value, column.type):
                    raise ValueError(
                        f"row {row_number} of {self.schema.name}: {value!r} does not conform to {column.type}"
                    )

    @property
    def name(self) -> str:
        return self.schema.name


@dataclass(frozen=True)
class Catalog:
    tables: Mapping[str, TableSchema] = field(default_factory=dict)

    @classmethod
    def from_tables(cls, tables: Iterable[Table | TableSchema]) -> "Catalog":
        schemas: Dict[str, TableSchema] = {}
        for table in tables:
            schema = table.schema if isinstance(table, Table) else table
            if schema.name in schemas:
                raise ValueError(f"duplicate table {schema.name} in catalog")
            schemas[schema.name] = schema
        return cls(tables=dict(sorted(schemas.items())))

    def resolve(self, name: str) -> TableSchema | None:
        if name in self.tables:
            return self.tables[name]
        key = name.casefold()
        for table_name, schema in self.tables.items():
            if table_name.casefold() == key:
                return schema
        return None

    def __len__(self) -> int:
        return len(self.tables)


@dataclass(frozen=True)
class SchemaHint:
    target_schema: Optional[TableSchema] = None
    column_descriptions: Mapping[str, str] = field(default_factory=dict)


Provenance = Tuple[Tuple[str, int], ...]


@dataclass(frozen=True)
class ResultTable:
    """Executor output: rows plus, per row, the sorted multiset of contributing input rows.

    A global aggregate over empty input still yields one row; its provenance entry is empty.
    """

    schema: TableSchema
    rows: Tuple[Row, ...] = ()
    provenance: Tuple[Provenance, ...] = ()

    def as_table(self) -> Table:
        return Table(schema=self.schema, rows=self.rows)
