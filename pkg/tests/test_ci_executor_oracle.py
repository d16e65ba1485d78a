import math

import pytest
from hypothesis import event, given, settings
from hypothesis import strategies as st

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
    Project,
    Scan,
    Sort,
    ValidatedPlan,
)
from query_agent.models.table_models import Catalog, Column, Table, TableSchema
from query_agent.services.oracle_service import oracle_execute
from query_agent.services.relexec_service import ensure_valid, execute, join_schema, validate_plan

MAX_ROWS = 8
NULL_SHARE = 0.2

_KEYS = st.sampled_from(["k1", "k2", "k3"])
_NUMBERS = st.one_of(st.integers(-5, 5).map(float), st.floats(-100, 100, allow_nan=False))
_VALUES = {"number": _NUMBERS, "text": st.sampled_from(["a", "b", "c"]), "boolean": st.booleans()}


def _values_for(column):
    return _KEYS if column.name == "k" else _VALUES[column.type]


@st.composite
def random_tables(draw, name):
    """Key column `k` plus one to three typed columns; at least a fifth of the cells are null."""
    kinds = draw(st.lists(st.sampled_from(sorted(_VALUES)), min_size=1, max_size=3))
    columns = (Column(name="k", type="text"),) + tuple(
        Column(name=f"{name}_{index}", type=kind) for index, kind in enumerate(kinds)
    )
    height = draw(st.integers(0, MAX_ROWS))
    rows = [[draw(st.one_of(st.none(), _values_for(column))) for column in columns] for _ in range(height)]

    cells = height * len(columns)
    missing = math.ceil(NULL_SHARE * cells) - sum(value is None for row in rows for value in row)
    if missing > 0:
        for position in draw(st.permutations(range(cells))):
            if missing <= 0:
                break
            row, column = divmod(position, len(columns))
            if rows[row][column] is not None:
                rows[row][column] = None
                missing -= 1
    return Table(schema=TableSchema(name=name, columns=columns), rows=tuple(tuple(row) for row in rows))


@st.composite
def catalogs(draw):
    count = draw(st.integers(1, 2))
    tables = {f"t{index}": draw(random_tables(f"t{index}")) for index in range(count)}
    return Catalog.from_tables(tables.values()), tables


def comparisons(schema):
    options = []
    for column in schema.columns:
        ops = ["=", "!="] if column.type == "boolean" else list(COMPARISON_OPS)
        options.append(
            st.builds(
                lambda op, value, name=column.name, kind=column.type: Comparison(
                    column=name, op=op, operand=PlanLiteral(value=value, type=kind)
                ),
                st.sampled_from(ops),
                _values_for(column),
            )
        )
        options.append(st.just(Comparison(column=column.name, op="=", operand=PlanLiteral(value=None, type="null"))))
        for other in schema.columns:
            if other.type == column.type and other.name != column.name:
                options.append(
                    st.builds(
                        lambda op, left=column.name, right=other.name: Comparison(
                            column=left, op=op, operand=ColumnRef(name=right)
                        ),
                        st.sampled_from(ops),
                    )
                )
    return st.one_of(options)


def predicates(schema):
    return st.recursive(
        comparisons(schema),
        lambda inner: st.one_of(
            st.builds(Not, inner),
            st.lists(inner, min_size=2, max_size=3).map(lambda parts: And(parts=tuple(parts))),
            st.lists(inner, min_size=2, max_size=3).map(lambda parts: Or(parts=tuple(parts))),
        ),
        max_leaves=4,
    )


def _aggregate_choices(schema):
    specs = [AggregateSpec(fn="COUNT", column=None, output="n")]
    for column in schema.columns:
        specs.append(AggregateSpec(fn="COUNT", column=column.name, output=f"count_{column.name}"))
        if column.type == "number":
            specs.extend(
                AggregateSpec(fn=fn, column=column.name, output=f"{fn.lower()}_{column.name}")
                for fn in ("SUM", "AVG", "MIN", "MAX")
            )
    return specs


@st.composite
def valid_scenarios(draw):
    catalog, tables = draw(catalogs())
    names = sorted(tables)
    plan = Scan(table=names[0])
    schema = tables[names[0]].schema
    if len(names) == 2 and draw(st.booleans()):
        plan = Join(left=plan, right=Scan(table=names[1]), key="k")
        schema = join_schema(schema, tables[names[1]].schema, "k")
    if draw(st.booleans()):
        plan = Filter(predicate=draw(predicates(schema)), input=plan)

    shape = draw(st.sampled_from(["plain", "project", "aggregate"]))
    if shape == "project":
        columns = draw(st.lists(st.sampled_from(schema.column_names), min_size=1, max_size=len(schema.columns), unique=True))
        plan = Project(columns=tuple(columns), input=plan)
    elif shape == "aggregate":
        group_by = draw(st.lists(st.sampled_from(schema.column_names), max_size=2, unique=True))
        aggregates = draw(st.lists(st.sampled_from(_aggregate_choices(schema)), min_size=1, max_size=4, unique=True))
        plan = Aggregate(group_by=tuple(group_by), aggregates=tuple(aggregates), input=plan)

    output = validate_plan(plan, catalog)
    assert isinstance(output, ValidatedPlan), output
    if draw(st.booleans()):
        column = draw(st.sampled_from(output.output_schema.column_names))
        plan = Sort(column=column, direction=draw(st.sampled_from(["asc", "desc"])), input=plan)
    if draw(st.booleans()):
        plan = Limit(n=draw(st.integers(0, 6)), input=plan)
    return catalog, tables, plan


@settings(max_examples=200, deadline=None)
@given(catalogs())
def test_generated_tables_stay_small_and_null_heavy(scenario):
    _, tables = scenario
    for table in tables.values():
        cells = [value for row in table.rows for value in row]
        assert len(table.schema.columns) <= 4
        assert len(table.rows) <= MAX_ROWS
        if cells:
            assert sum(value is None for value in cells) >= NULL_SHARE * len(cells)


@settings(max_examples=1000, deadline=None)
@given(valid_scenarios())
def test_executor_agrees_with_reference_evaluator(scenario):
    catalog, tables, plan = scenario
    validated = validate_plan(plan, catalog)
    assert isinstance(validated, ValidatedPlan), validated

    fast = execute(validated, tables)
    slow = oracle_execute(validated, tables)

    assert fast.schema == slow.schema
    assert fast.rows == slow.rows
    assert fast.provenance == slow.provenance


@settings(max_examples=100, deadline=None)
@given(catalogs(), st.data())
def test_filter_keeps_exactly_the_rows_the_predicate_accepts(scenario, data):
    catalog, tables = scenario
    table = tables["t0"]
    predicate = data.draw(predicates(table.schema))

    result = execute(validate_plan(Filter(predicate=predicate, input=Scan(table="t0")), catalog), tables)
    complement = execute(validate_plan(Filter(predicate=Not(part=predicate), input=Scan(table="t0")), catalog), tables)

    kept = {entry[0][1] for entry in result.provenance}
    dropped = {entry[0][1] for entry in complement.provenance}
    assert kept | dropped == set(range(len(table.rows)))
    assert not kept & dropped


# 日本語: 任意 (多くは不正) な計画で検証器を試す / English: Arbitrary, mostly invalid, plans against the validator


@st.composite
def arbitrary_scenarios(draw):
    catalog, tables = draw(catalogs())
    column_names = sorted({column.name for table in tables.values() for column in table.schema.columns} | {"ghost"})
    columns = st.sampled_from(column_names)
    literals = st.one_of(
        _NUMBERS.map(lambda value: PlanLiteral(value=value, type="number")),
        _NUMBERS.map(lambda value: PlanLiteral(value=value, type="number", unit="percent")),
        st.sampled_from(["a", "k1", "2024-01-01"]).map(lambda value: PlanLiteral(value=value, type="text")),
        st.booleans().map(lambda value: PlanLiteral(value=value, type="boolean")),
        st.just(PlanLiteral(value=None, type="null")),
    )
    comparison = st.builds(
        Comparison,
        column=columns,
        op=st.sampled_from(COMPARISON_OPS),
        operand=st.one_of(literals, st.builds(ColumnRef, name=columns)),
    )
    predicate = st.recursive(
        comparison,
        lambda inner: st.one_of(
            st.builds(Not, inner),
            st.lists(inner, min_size=2, max_size=3).map(lambda parts: And(parts=tuple(parts))),
            st.lists(inner, min_size=2, max_size=3).map(lambda parts: Or(parts=tuple(parts))),
        ),
        max_leaves=3,
    )
    aggregate = st.builds(
        AggregateSpec,
        fn=st.sampled_from(AGGREGATE_FNS),
        column=st.one_of(st.none(), columns),
        output=st.sampled_from(["n", "total", "k"]),
    )

    def _extend(inner):
        return st.one_of(
            st.builds(Join, left=inner, right=inner, key=columns),
            st.builds(Filter, predicate=predicate, input=inner),
            st.builds(Project, columns=st.lists(columns, min_size=1, max_size=3).map(tuple), input=inner),
            st.builds(
                Aggregate,
                group_by=st.lists(columns, max_size=2).map(tuple),
                aggregates=st.lists(aggregate, max_size=3).map(tuple),
                input=inner,
            ),
            st.builds(Sort, column=columns, direction=st.sampled_from(["asc", "desc"]), input=inner),
            st.builds(Limit, n=st.integers(-1, 5), input=inner),
        )

    scans = st.builds(Scan, table=st.sampled_from(sorted(tables) + ["missing"]))
    plan = draw(st.recursive(scans, _extend, max_leaves=4))
    return catalog, tables, plan


def _cell_fits(value, column):
    if value is None:
        return True
    if column.type == "number":
        return isinstance(value, float)
    if column.type == "boolean":
        return isinstance(value, bool)
    return isinstance(value, str)


@settings(max_examples=500, deadline=None)
@given(arbitrary_scenarios())
def test_accepted_plans_execute_and_rejected_plans_explain_why(scenario):
    catalog, tables, plan = scenario
    outcome = validate_plan(plan, catalog)

    if isinstance(outcome, ValidatedPlan):
        event("accepted")
        result = execute(outcome, tables)
        columns = outcome.output_schema.columns
        assert result.schema.column_names == outcome.output_schema.column_names
        assert len(result.provenance) == len(result.rows)
        for row in result.rows:
            assert len(row) == len(columns)
            assert all(_cell_fits(value, column) for value, column in zip(row, columns))
        return

    event("rejected")
    assert outcome
    assert all(isinstance(violation, str) and violation for violation in outcome)
    with pytest.raises(PlanValidationError) as exc_info:
        ensure_valid(plan, catalog)
    assert list(exc_info.value.violations) == list(outcome)
