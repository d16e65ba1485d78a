"""Canonical text form of relational plans: tokenizer, parser and printer.

The grammar is documented in docs/plan_grammar.md. The printer always emits
the canonical form; the parser also accepts unparenthesized predicates with the
usual NOT > AND > OR precedence, keyword case variations and the operator
spellings <>, ≠, ≤ and ≥.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

from query_agent.core.errors import PlanSyntaxError
from query_agent.models.plan_models import (
    AGGREGATE_FNS,
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
)

_TOKEN_PATTERN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<quoted>`[^`]*`)
  | (?P<number>[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?%?)
  | (?P<op><=|>=|!=|<>|≠|≤|≥|=|<|>)
  | (?P<punct>[()\[\],*])
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
    """,
    re.VERBOSE,
)

_OP_ALIASES = {"<>": "!=", "≠": "!=", "≤": "<=", "≥": ">="}
_BARE_IDENTIFIER = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")
_RESERVED = {"and", "or", "not", "as", "true", "false", "null"}


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    position: int


def tokenize(text: str) -> List[_Token]:
    tokens: List[_Token] = []
    position = 0
    while position < len(text):
        match = _TOKEN_PATTERN.match(text, position)
        if match is None:
            raise PlanSyntaxError(f"unexpected character {text[position]!r}", position=position)
        kind = match.lastgroup or ""
        if kind != "ws":
            tokens.append(_Token(kind=kind, text=match.group(), position=position))
        position = match.end()
    tokens.append(_Token(kind="end", text="", position=len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self._tokens = tokenize(text)
        self._index = 0

    # 日本語: トークン操作 / English: Token helpers
    @property
    def _current(self) -> _Token:
        return self._tokens[self._index]

    def _advance(self) -> _Token:
        token = self._tokens[self._index]
        if token.kind != "end":
            self._index += 1
        return token

    def _fail(self, message: str) -> PlanSyntaxError:
        token = self._current
        found = token.text or "end of input"
        return PlanSyntaxError(f"{message}, found {found!r}", position=token.position)

    def _expect(self, text: str) -> _Token:
        if self._current.text != text:
            raise self._fail(f"expected {text!r}")
        return self._advance()

    def _at_keyword(self, word: str) -> bool:
        token = self._current
        return token.kind == "ident" and token.text.casefold() == word.casefold()

    def parse(self) -> QueryPlan:
        plan = self._plan()
        if self._current.kind != "end":
            raise self._fail("trailing input after plan")
        return plan

    def _identifier(self) -> str:
        token = self._current
        if token.kind == "ident":
            self._advance()
            return token.text
        if token.kind == "quoted":
            self._advance()
            name = token.text[1:-1]
            if not name:
                raise PlanSyntaxError("empty quoted identifier", position=token.position)
            return name
        raise self._fail("expected identifier")

    def _identifier_list(self) -> Tuple[str, ...]:
        self._expect("[")
        names: List[str] = []
        if self._current.text != "]":
            names.append(self._identifier())
            while self._current.text == ",":
                self._advance()
                names.append(self._identifier())
        self._expect("]")
        return tuple(names)

    def _plan(self) -> QueryPlan:
        token = self._current
        if token.kind != "ident":
            raise self._fail("expected plan operator")
        builder = _OPERATORS.get(token.text.casefold())
        if builder is None:
            raise PlanSyntaxError(f"unknown plan operator {token.text!r}", position=token.position)
        self._advance()
        self._expect("(")
        if builder is _build_scan and self._current.kind in {"ident", "quoted"} and self._tokens[self._index + 1].text != "=":
            table = self._identifier()
            self._expect(")")
            return Scan(table=table)
        arguments = self._arguments()
        self._expect(")")
        return builder(arguments, token.position)

    def _arguments(self) -> Dict[str, object]:
        arguments: Dict[str, object] = {}
        while True:
            name_token = self._current
            if name_token.kind != "ident":
                raise self._fail("expected argument name")
            name = name_token.text.casefold()
            self._advance()
            self._expect("=")
            if name in arguments:
                raise PlanSyntaxError(f"duplicate argument {name!r}", position=name_token.position)
            arguments[name] = self._argument_value(name, name_token)
            if self._current.text != ",":
                return arguments
            self._advance()

    def _argument_value(self, name: str, name_token: _Token) -> object:
        if name in {"input", "left", "right"}:
            return self._plan()
        if name == "pred":
            return self._predicate()
        if name in {"cols", "group"}:
            return self._identifier_list()
        if name == "aggs":
            return self._aggregate_list()
        if name in {"table", "key", "col"}:
            return self._identifier()
        if name in {"dir", "kind"}:
            return self._identifier().casefold()
        if name == "n":
            token = self._current
            if token.kind != "number" or token.text.endswith("%"):
                raise self._fail("expected integer")
            value = float(token.text)
            if not value.is_integer():
                raise PlanSyntaxError("limit must be an integer", position=token.position)
            self._advance()
            return int(value)
        raise PlanSyntaxError(f"unknown argument {name!r}", position=name_token.position)

    def _aggregate_list(self) -> Tuple[AggregateSpec, ...]:
        self._expect("[")
        specs: List[AggregateSpec] = []
        if self._current.text != "]":
            specs.append(self._aggregate())
            while self._current.text == ",":
                self._advance()
                specs.append(self._aggregate())
        self._expect("]")
        return tuple(specs)

    def _aggregate(self) -> AggregateSpec:
        token = self._current
        fn = token.text.upper()
        if token.kind != "ident" or fn not in AGGREGATE_FNS:
            raise self._fail("expected aggregate function")
        self._advance()
        self._expect("(")
        column: str | None
        if self._current.text == "*":
            self._advance()
            column = None
            if fn != "COUNT":
                raise PlanSyntaxError(f"{fn}(*) is not allowed", position=token.position)
        else:
            column = self._identifier()
        self._expect(")")
        if not self._at_keyword("AS"):
            raise self._fail("expected AS")
        self._advance()
        output = self._identifier()
        return AggregateSpec(fn=fn, column=column, output=output)  # type: ignore[arg-type]

    # 日本語: 述語は OR < AND < NOT の優先順位 / English: Predicate precedence OR < AND < NOT
    def _predicate(self) -> Predicate:
        parts = [self._conjunction()]
        while self._at_keyword("OR"):
            self._advance()
            parts.append(self._conjunction())
        return parts[0] if len(parts) == 1 else Or(parts=tuple(parts))

    def _conjunction(self) -> Predicate:
        parts = [self._negation()]
        while self._at_keyword("AND"):
            self._advance()
            parts.append(self._negation())
        return parts[0] if len(parts) == 1 else And(parts=tuple(parts))

    def _negation(self) -> Predicate:
        if self._at_keyword("NOT"):
            self._advance()
            return Not(part=self._negation())
        if self._current.text == "(":
            self._advance()
            inner = self._predicate()
            self._expect(")")
            return inner
        return self._comparison()

    def _comparison(self) -> Comparison:
        column = self._identifier()
        token = self._current
        if token.kind != "op":
            raise self._fail("expected comparison operator")
        self._advance()
        op = _OP_ALIASES.get(token.text, token.text)
        return Comparison(column=column, op=op, operand=self._operand())  # type: ignore[arg-type]

    def _operand(self) -> PlanLiteral | ColumnRef:
        token = self._current
        if token.kind == "number":
            self._advance()
            percent = token.text.endswith("%")
            value = float(token.text[:-1] if percent else token.text)
            if not math.isfinite(value):
                raise PlanSyntaxError("number literal out of range", position=token.position)
            return PlanLiteral(value=value, type="number", unit="percent" if percent else None)
        if token.kind == "string":
            self._advance()
            try:
                return PlanLiteral(value=json.loads(token.text), type="text")
            except json.JSONDecodeError as exc:
                raise PlanSyntaxError("invalid string escape", position=token.position + exc.pos) from exc
        if token.kind == "ident" and token.text.casefold() in {"true", "false"}:
            self._advance()
            return PlanLiteral(value=token.text.casefold() == "true", type="boolean")
        if token.kind == "ident" and token.text.casefold() == "null":
            self._advance()
            return PlanLiteral(value=None, type="null")
        if token.kind in {"ident", "quoted"}:
            return ColumnRef(name=self._identifier())
        raise self._fail("expected literal or column")


def _require(arguments: Dict[str, object], names: Tuple[str, ...], operator: str, position: int) -> None:
    missing = [name for name in names if name not in arguments]
    if missing:
        raise PlanSyntaxError(f"{operator} is missing {', '.join(missing)}", position=position)
    extra = sorted(set(arguments) - set(names) - {"kind"})
    if extra:
        raise PlanSyntaxError(f"{operator} does not take {', '.join(extra)}", position=position)


def _build_scan(arguments: Dict[str, object], position: int) -> QueryPlan:
    _require(arguments, ("table",), "Scan", position)
    return Scan(table=str(arguments["table"]))


def _build_filter(arguments: Dict[str, object], position: int) -> QueryPlan:
    _require(arguments, ("pred", "input"), "Filter", position)
    return Filter(predicate=arguments["pred"], input=arguments["input"])  # type: ignore[arg-type]


def _build_project(arguments: Dict[str, object], position: int) -> QueryPlan:
    _require(arguments, ("cols", "input"), "Project", position)
    return Project(columns=arguments["cols"], input=arguments["input"])  # type: ignore[arg-type]


def _build_join(arguments: Dict[str, object], position: int) -> QueryPlan:
    _require(arguments, ("left", "right", "key"), "Join", position)
    kind = arguments.get("kind", "inner")
    if kind != "inner":
        raise PlanSyntaxError(f"unsupported join kind {kind!r}", position=position)
    return Join(left=arguments["left"], right=arguments["right"], key=str(arguments["key"]))  # type: ignore[arg-type]


def _build_aggregate(arguments: Dict[str, object], position: int) -> QueryPlan:
    _require(arguments, ("group", "aggs", "input"), "Aggregate", position)
    return Aggregate(
        group_by=arguments["group"],  # type: ignore[arg-type]
        aggregates=arguments["aggs"],  # type: ignore[arg-type]
        input=arguments["input"],  # type: ignore[arg-type]
    )


def _build_sort(arguments: Dict[str, object], position: int) -> QueryPlan:
    if "dir" not in arguments:
        arguments = {**arguments, "dir": "asc"}
    _require(arguments, ("col", "dir", "input"), "Sort", position)
    direction = arguments["dir"]
    if direction not in {"asc", "desc"}:
        raise PlanSyntaxError(f"sort direction must be asc or desc, not {direction!r}", position=position)
    return Sort(column=str(arguments["col"]), direction=direction, input=arguments["input"])  # type: ignore[arg-type]


def _build_limit(arguments: Dict[str, object], position: int) -> QueryPlan:
    _require(arguments, ("n", "input"), "Limit", position)
    return Limit(n=int(arguments["n"]), input=arguments["input"])  # type: ignore[arg-type]


_OPERATORS: Dict[str, Callable[[Dict[str, object], int], QueryPlan]] = {
    "scan": _build_scan,
    "filter": _build_filter,
    "project": _build_project,
    "join": _build_join,
    "aggregate": _build_aggregate,
    "sort": _build_sort,
    "limit": _build_limit,
}

PLAN_OPERATOR_NAMES: Tuple[str, ...] = ("Aggregate", "Filter", "Join", "Limit", "Project", "Scan", "Sort")


def parse_plan(text: str) -> QueryPlan:
    """Parse plan text; raises PlanSyntaxError with the character position of the fault."""
    if not isinstance(text, str) or not text.strip():
        raise PlanSyntaxError("empty plan text", position=0)
    return _Parser(text).parse()


def format_identifier(name: str) -> str:
    if _BARE_IDENTIFIER.match(name) and name.casefold() not in _RESERVED:
        return name
    if "`" in name:
        raise ValueError(f"identifier {name!r} cannot contain a back-quote")
    return f"`{name}`"


def format_number(value: float) -> str:
    if math.isfinite(value) and float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def format_literal(literal: PlanLiteral) -> str:
    if literal.type == "null" or literal.value is None:
        return "null"
    if literal.type == "boolean":
        return "true" if literal.value else "false"
    if literal.type == "number":
        suffix = "%" if literal.unit == "percent" else ""
        return format_number(float(literal.value)) + suffix
    return json.dumps(str(literal.value), ensure_ascii=False)


def format_predicate(predicate: Predicate) -> str:
    if isinstance(predicate, Comparison):
        operand = predicate.operand
        rendered = format_identifier(operand.name) if isinstance(operand, ColumnRef) else format_literal(operand)
        return f"({format_identifier(predicate.column)} {predicate.op} {rendered})"
    if isinstance(predicate, Not):
        return f"(NOT {format_predicate(predicate.part)})"
    keyword = " AND " if isinstance(predicate, And) else " OR "
    return "(" + keyword.join(format_predicate(part) for part in predicate.parts) + ")"


def format_plan(plan: QueryPlan) -> str:
    """Render the canonical single-line form."""
    if isinstance(plan, Scan):
        return f"Scan({format_identifier(plan.table)})"
    if isinstance(plan, Filter):
        return f"Filter(pred={format_predicate(plan.predicate)}, input={format_plan(plan.input)})"
    if isinstance(plan, Project):
        columns = ", ".join(format_identifier(column) for column in plan.columns)
        return f"Project(cols=[{columns}], input={format_plan(plan.input)})"
    if isinstance(plan, Join):
        return (
            f"Join(left={format_plan(plan.left)}, right={format_plan(plan.right)}, "
            f"key={format_identifier(plan.key)}, kind={plan.kind})"
        )
    if isinstance(plan, Aggregate):
        groups = ", ".join(format_identifier(column) for column in plan.group_by)
        aggs = ", ".join(
            f"{spec.fn}({'*' if spec.column is None else format_identifier(spec.column)}) AS {format_identifier(spec.output)}"
            for spec in plan.aggregates
        )
        return f"Aggregate(group=[{groups}], aggs=[{aggs}], input={format_plan(plan.input)})"
    if isinstance(plan, Sort):
        return f"Sort(col={format_identifier(plan.column)}, dir={plan.direction}, input={format_plan(plan.input)})"
    if isinstance(plan, Limit):
        return f"Limit(n={plan.n}, input={format_plan(plan.input)})"
    raise TypeError(f"not a plan node: {plan!r}")
