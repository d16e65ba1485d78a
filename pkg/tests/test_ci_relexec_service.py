import datetime
import json

import pytest

from query_agent.core.errors import PlanValidationError
from query_agent.models.plan_models import ValidatedPlan
from query_agent.models.table_models import Catalog, Column, ResultTable, Table, TableSchema
from query_agent.services.plan_grammar import parse_plan
from query_agent.services.relexec_service import (
    ensure_valid,
    execute,
    render_csv,
    render_json,
    render_text,
    result_to_dict,
    validate_plan,
)

READINGS = Table(
    schema=TableSchema(
        name="readings",
        columns=(
            Column(name="site", type="text"),
            Column(name="value", type="number"),
            Column(name="ok", type="boolean"),
            Column(name="day", type="date"),
        ),
    ),
    rows=(
        ("north", 3.0, True, datetime.date(2024, 1, 5)),
        ("south", None, False, datetime.date(2024, 2, 1)),
        (None, 7.0, True, None),
        ("north", 1.0, None, datetime.date(2024, 3, 9)),
        ("south", 3.0, True, datetime.date(2024, 2, 20)),
    ),
)
READINGS_TABLES = {"readings": READINGS}
READINGS_CATALOG = Catalog.from_tables([READINGS])


@pytest.fixture
def demo_catalog(demo_tables):
    return Catalog.from_tables(demo_tables.values())


def _run(text, tables=READINGS_TABLES, catalog=READINGS_CATALOG):
    return execute(ensure_valid(parse_plan(text), catalog), tables)


def test_total_sales_for_a_quarter(demo_tables, demo_catalog):
    plan = parse_plan('Aggregate(group=[], aggs=[SUM(sales) AS total_sales], input=Filter(pred=(quarter = "Q3"), input=Scan(sales)))')

    result = execute(ensure_valid(plan, demo_catalog), demo_tables)

    assert result.rows == ((300.0,),)
    assert result.provenance == ((("sales", 3), ("sales", 4), ("sales", 5)),)
    assert result.schema.column_names == ("total_sales",)


def test_join_filter_and_group_average(demo_tables, demo_catalog):
    plan = parse_plan(
        "Aggregate(group=[manufacturer], aggs=[AVG(rating) AS avg_rating], "
        'input=Filter(pred=((increase > 15%) AND (quarter = "Q4")), '
        "input=Join(left=Scan(products), right=Scan(sales), key=product, kind=inner)))"
    )

    result = execute(ensure_valid(plan, demo_catalog), demo_tables)

    assert result.rows == (("Globex", 3.9),)
    assert result.provenance == ((("products", 1), ("sales", 7)),)


def test_unknown_column_is_named_with_its_table(demo_catalog):
    violations = validate_plan(parse_plan('Filter(pred=(region = "EU"), input=Scan(sales))'), demo_catalog)

    assert violations == ["unknown column region in table sales"]


def test_sum_over_text_is_rejected(demo_catalog):
    violations = validate_plan(
        parse_plan("Aggregate(group=[], aggs=[SUM(product) AS s], input=Scan(sales))"), demo_catalog
    )

    assert violations == ["SUM needs a numeric column but product is text"]


def test_every_violation_is_reported(demo_catalog):
    plan = parse_plan(
        'Aggregate(group=[region], aggs=[SUM(product) AS s], input=Filter(pred=(colour = "red"), input=Scan(sales)))'
    )

    violations = validate_plan(plan, demo_catalog)

    assert len(violations) == 3
    assert "unknown column colour in table sales" in violations


def test_ensure_valid_raises_with_violations(demo_catalog):
    with pytest.raises(PlanValidationError) as exc_info:
        ensure_valid(parse_plan("Scan(inventory)"), demo_catalog)

    assert exc_info.value.violations == ("unknown table inventory",)


def test_literal_types_and_percent_units_are_checked(demo_catalog):
    assert validate_plan(parse_plan('Filter(pred=(sales = "high"), input=Scan(sales))'), demo_catalog)
    assert validate_plan(parse_plan("Filter(pred=(sales > 15%), input=Scan(sales))"), demo_catalog)
    assert isinstance(validate_plan(parse_plan("Filter(pred=(increase > 15), input=Scan(sales))"), demo_catalog), ValidatedPlan)
    assert isinstance(validate_plan(parse_plan("Filter(pred=(increase > 15%), input=Scan(sales))"), demo_catalog), ValidatedPlan)


def test_join_with_clashing_columns_is_ambiguous(demo_catalog):
    violations = validate_plan(parse_plan("Join(left=Scan(sales), right=Scan(sales), key=product)"), demo_catalog)

    assert sorted(violations) == [
        "ambiguous column increase after joining sales and sales",
        "ambiguous column quarter after joining sales and sales",
        "ambiguous column sales after joining sales and sales",
    ]


def test_boolean_ordering_and_bad_dates_are_rejected():
    assert validate_plan(parse_plan("Filter(pred=(ok > false), input=Scan(readings))"), READINGS_CATALOG)
    assert validate_plan(parse_plan('Filter(pred=(day > "last week"), input=Scan(readings))'), READINGS_CATALOG)


def test_aggregate_output_names_must_be_unique():
    violations = validate_plan(
        parse_plan("Aggregate(group=[site], aggs=[COUNT(*) AS site], input=Scan(readings))"), READINGS_CATALOG
    )

    assert violations == ["output name site is not unique"]


def test_comparisons_with_null_are_false_and_not_is_plain_negation():
    assert _run("Filter(pred=(value = null), input=Scan(readings))").rows == ()
    negated = _run("Filter(pred=(NOT (value > 2)), input=Scan(readings))")

    assert [row[:2] for row in negated.rows] == [("south", None), ("north", 1.0)]


def test_date_literals_compare_as_dates():
    result = _run('Project(cols=[site], input=Filter(pred=(day >= "2024-02-01"), input=Scan(readings)))')

    assert result.rows == (("south",), ("north",), ("south",))


def test_groups_keep_first_appearance_and_null_is_its_own_group():
    result = _run("Aggregate(group=[site], aggs=[COUNT(*) AS n, COUNT(value) AS with_value, SUM(value) AS total], input=Scan(readings))")

    assert result.rows == (
        ("north", 2.0, 2.0, 4.0),
        ("south", 2.0, 1.0, 3.0),
        (None, 1.0, 1.0, 7.0),
    )
    assert result.provenance[1] == (("readings", 1), ("readings", 4))


def test_global_aggregate_over_empty_input_yields_one_row():
    result = _run(
        'Aggregate(group=[], aggs=[COUNT(*) AS n, AVG(value) AS mean], input=Filter(pred=(site = "east"), input=Scan(readings)))'
    )

    assert result.rows == ((0.0, None),)
    assert result.provenance == ((),)


def test_grouped_aggregate_over_empty_input_yields_no_rows():
    result = _run('Aggregate(group=[site], aggs=[COUNT(*) AS n], input=Filter(pred=(site = "east"), input=Scan(readings)))')

    assert result.rows == ()


def test_sort_is_stable_with_nulls_last_in_both_directions():
    ascending = _run("Project(cols=[site, value], input=Sort(col=value, dir=asc, input=Scan(readings)))")
    descending = _run("Project(cols=[site, value], input=Sort(col=value, dir=desc, input=Scan(readings)))")

    assert ascending.rows == (("north", 1.0), ("north", 3.0), ("south", 3.0), (None, 7.0), ("south", None))
    assert descending.rows == ((None, 7.0), ("north", 3.0), ("south", 3.0), ("north", 1.0), ("south", None))


def test_limit_takes_a_prefix():
    assert _run("Limit(n=0, input=Scan(readings))").rows == ()
    assert _run("Limit(n=2, input=Scan(readings))").provenance == ((("readings", 0),), (("readings", 1),))


def test_join_skips_null_keys():
    owners = Table(
        schema=TableSchema(name="owners", columns=(Column(name="site", type="text"), Column(name="owner", type="text"))),
        rows=(("south", "Ines"), ("north", "Kofi"), (None, "Nobody")),
    )
    tables = {"readings": READINGS, "owners": owners}
    catalog = Catalog.from_tables(tables.values())

    result = _run("Project(cols=[owner, value], input=Join(left=Scan(readings), right=Scan(owners), key=site))", tables, catalog)

    assert result.rows == (("Kofi", 3.0), ("Ines", None), ("Kofi", 1.0), ("Ines", 3.0))
    assert result.provenance[0] == (("owners", 1), ("readings", 0))


def _sample_result():
    schema = TableSchema(
        name="facts",
        columns=(
            Column(name="product", type="text"),
            Column(name="increase", type="number", unit="percent"),
            Column(name="note", type="text"),
        ),
    )
    return ResultTable(
        schema=schema,
        rows=(("A", 20.0, None), ("B", -4.5, "x")),
        provenance=((("facts", 0),), (("facts", 1),)),
    )


def test_render_text_aligns_columns_and_marks_percent_and_null():
    assert render_text(_sample_result()).splitlines() == [
        "product  increase  note",
        "-------  --------  ----",
        "A        20%       NULL",
        "B        -4.5%     x",
        "(2 rows)",
    ]


def test_render_csv_and_json():
    result = _sample_result()

    assert render_csv(result) == "product,increase,note\nA,20,\nB,-4.5,x\n"
    payload = json.loads(render_json(result))
    assert payload["rows"] == [["A", 20, None], ["B", -4.5, "x"]]
    assert payload["provenance"] == [[["facts", 0]], [["facts", 1]]]
    assert result_to_dict(result)["schema"]["columns"][1]["unit"] == "percent"
