import pytest

from query_agent.core.errors import PlanSyntaxError
from query_agent.models.plan_models import (
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
    Scan,
    Sort,
)
from query_agent.services.plan_grammar import format_identifier, format_plan, parse_plan

CANONICAL_PLANS = [
    'Aggregate(group=[], aggs=[SUM(sales) AS total_sales], input=Filter(pred=(quarter = "Q3"), input=Scan(sales)))',
    "Limit(n=3, input=Sort(col=rating, dir=desc, input=Project(cols=[product, rating], input=Scan(products))))",
    "Aggregate(group=[manufacturer], aggs=[AVG(rating) AS avg_rating, COUNT(*) AS count], "
    "input=Join(left=Scan(products), right=Scan(sales), key=product, kind=inner))",
    "Filter(pred=((NOT (active = true)) OR (note = null)), input=Scan(`Market Share`))",
]


@pytest.mark.parametrize("text", CANONICAL_PLANS)
def test_canonical_text_is_a_fixed_point(text):
    assert format_plan(parse_plan(text)) == text


def test_parse_builds_the_expected_tree():
    plan = parse_plan('Aggregate(group=[], aggs=[SUM(sales) AS total_sales], input=Filter(pred=(quarter = "Q3"), input=Scan(sales)))')

    assert plan == Aggregate(
        group_by=(),
        aggregates=(AggregateSpec(fn="SUM", column="sales", output="total_sales"),),
        input=Filter(
            predicate=Comparison(column="quarter", op="=", operand=PlanLiteral(value="Q3", type="text")),
            input=Scan(table="sales"),
        ),
    )


def test_unparenthesized_predicates_follow_not_and_or_precedence():
    plan = parse_plan("Filter(pred=a = 1 OR b = 2 AND NOT c = 3, input=Scan(t))")

    one = PlanLiteral(value=1.0, type="number")
    two = PlanLiteral(value=2.0, type="number")
    three = PlanLiteral(value=3.0, type="number")
    assert plan.predicate == Or(
        parts=(
            Comparison(column="a", op="=", operand=one),
            And(parts=(Comparison(column="b", op="=", operand=two), Not(part=Comparison(column="c", op="=", operand=three)))),
        )
    )


def test_operator_aliases_and_keyword_case_are_accepted():
    plan = parse_plan("filter(PRED=(x <> 1) and (y ≥ z), INPUT=scan(t))")

    assert plan == Filter(
        predicate=And(
            parts=(
                Comparison(column="x", op="!=", operand=PlanLiteral(value=1.0, type="number")),
                Comparison(column="y", op=">=", operand=ColumnRef(name="z")),
            )
        ),
        input=Scan(table="t"),
    )


def test_percent_and_escaped_string_literals():
    plan = parse_plan('Filter(pred=(increase > 15%) AND (note = "say \\"hi\\""), input=Scan(sales))')

    increase, note = plan.predicate.parts
    assert increase.operand == PlanLiteral(value=15.0, type="number", unit="percent")
    assert note.operand == PlanLiteral(value='say "hi"', type="text")


def test_sort_direction_defaults_to_ascending_and_scan_accepts_named_table():
    plan = parse_plan("Sort(col=sales, input=Scan(table=sales))")

    assert plan == Sort(column="sales", direction="asc", input=Scan(table="sales"))


def test_join_kind_other_than_inner_is_rejected():
    with pytest.raises(PlanSyntaxError):
        parse_plan("Join(left=Scan(a), right=Scan(b), key=id, kind=left)")


@pytest.mark.parametrize(
    ("text", "position"),
    [
        ("Scan(sales", 10),
        ("Sacn(sales)", 0),
        ("Scan(a) Scan(b)", 8),
        ("Limit(n=x, input=Scan(t))", 8),
    ],
)
def test_syntax_errors_carry_positions(text, position):
    with pytest.raises(PlanSyntaxError) as exc_info:
        parse_plan(text)

    assert exc_info.value.position == position


def test_other_malformed_plans_fail():
    for text in (
        "",
        "Limit(n=1.5, input=Scan(t))",
        "Aggregate(group=[], aggs=[SUM(*) AS s], input=Scan(t))",
        "Filter(pred=(a = 1), input=Scan(t), input=Scan(u))",
        "Project(cols=[a], input=Scan(t), extra=Scan(u))",
        "Filter(pred=(a = 1 AND), input=Scan(t))",
    ):
        with pytest.raises(PlanSyntaxError):
            parse_plan(text)


def test_identifiers_that_need_quoting_are_backquoted():
    assert format_identifier("Sales Metrics") == "`Sales Metrics`"
    assert format_identifier("and") == "`and`"
    assert format_identifier("meta.region") == "meta.region"
    with pytest.raises(ValueError):
        format_identifier("bad`name")


def test_format_plan_prints_integral_numbers_without_decimals():
    plan = Limit(
        n=2,
        input=Filter(
            predicate=Comparison(column="sales", op=">=", operand=PlanLiteral(value=100.0, type="number")),
            input=Join(left=Scan(table="a"), right=Scan(table="b"), key="id"),
        ),
    )

    assert format_plan(plan) == "Limit(n=2, input=Filter(pred=(sales >= 100), input=Join(left=Scan(a), right=Scan(b), key=id, kind=inner)))"
