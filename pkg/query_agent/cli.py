"""Command-line surface: index, query, ask, repl and manifest."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence, TextIO

from query_agent.core import config as core_config
from query_agent.core.errors import ConfigError, PlanValidationError, QueryAgentError, UsageError
from query_agent.core.settings import CliConfig, load_cli_config
from query_agent.gateway.model_gateway import ModelGateway
from query_agent.models.entropy_models import EntropyReport
from query_agent.services.graph_service import graph_stats, load_graph, save_graph
from query_agent.services.ingest_service import load_corpus, manifest_records
from query_agent.services.pipeline_service import QueryOutcome, QueryPipeline, index_corpus, load_structured_tables
from query_agent.services.relexec_service import render_text

logger = logging.getLogger("query_agent.cli")

NO_ANCHOR_MESSAGE = "no anchor entities; try --mode table or refine query"
REPL_PROMPT = "query-agent> "


class _ArgumentParser(argparse.ArgumentParser):
    # 日本語: argparse の既定終了 (2) を使用エラー (64) に置き換える / English: Route argparse failures to the usage exit code
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--verbose", action="store_true", default=None, help="debug logging on stderr")

    parser = _ArgumentParser(prog="query-agent", description="Hybrid graph and table question answering.")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    index = commands.add_parser("index", parents=[common], help="build a graph index from a corpus")
    index.add_argument("--corpus", required=True, help="corpus directory")
    index.add_argument("--out", required=True, help="graph file to write")

    query = commands.add_parser("query", parents=[common], help="answer one question")
    query.add_argument("question")
    query.add_argument("--graph", required=True, help="graph file written by index")
    query.add_argument("--mode", choices=("auto", "graph", "table"), default="auto")
    query.add_argument("--corpus", help="corpus directory whose csv/json tables join the catalog")
    query.add_argument("--json", action="store_true", help="print one JSON document")

    ask = commands.add_parser("ask", parents=[common], help="answer with a semantic-entropy check")
    ask.add_argument("question")
    ask.add_argument("--graph", required=True, help="graph file written by index")
    ask.add_argument("--samples", type=int, help="number of sampled answers (>= 2)")
    ask.add_argument("--entropy-threshold", type=float, dest="entropy_threshold", help="review threshold in bits")
    ask.add_argument("--temperature", type=float)
    ask.add_argument("--seed", type=int)
    ask.add_argument("--corpus", help="corpus directory (accepted for symmetry with query)")
    ask.add_argument("--json", action="store_true", help="print one JSON document")

    repl = commands.add_parser("repl", parents=[common], help="interactive question loop")
    repl.add_argument("--graph", required=True, help="graph file written by index")
    repl.add_argument("--corpus", help="corpus directory whose csv/json tables join the catalog")

    manifest = commands.add_parser("manifest", parents=[common], help="list what a corpus contains")
    manifest.add_argument("--corpus", required=True, help="corpus directory")
    return parser


def _configure_logging(verbose: bool, stream: TextIO) -> None:
    level = logging.DEBUG if verbose else getattr(logging, core_config.log_level())
    logging.basicConfig(level=level, stream=stream, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("query_agent").setLevel(level)


def _flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    entropy: Dict[str, Any] = {}
    for flag, key in (
        ("samples", "samples"),
        ("entropy_threshold", "threshold_bits"),
        ("temperature", "temperature"),
        ("seed", "seed"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            entropy[key] = value
    return {"entropy": entropy} if entropy else {}


def _pipeline(args: argparse.Namespace, cfg: CliConfig, stderr: TextIO) -> QueryPipeline:
    graph = load_graph(args.graph)
    tables, errors = load_structured_tables(getattr(args, "corpus", None))
    for error in errors:
        print(f"warning: {error.path}: {error.message}", file=stderr)
    return QueryPipeline(graph=graph, cfg=cfg, gateway=ModelGateway(cfg.backend), tables=tables)


# ---------------------------------------------------------------------------
# 日本語: 出力整形 / English: Output formatting
# ---------------------------------------------------------------------------


def _print_outcome(outcome: QueryOutcome, stdout: TextIO) -> None:
    if outcome.mode == "graph":
        print(f"Answer: {outcome.answer}", file=stdout)
        print(f"Anchors: {', '.join(outcome.retrieval.anchors.anchors)}", file=stdout)
        bundle = outcome.context
        print(f"Context: {len(bundle.chunks)} chunks, {bundle.total_chars} chars", file=stdout)
        for chunk in bundle.chunks:
            print(f"  {chunk.chunk_id}  score={chunk.score:.4f}", file=stdout)
        return
    print(f"Plan: {outcome.plan_text}", file=stdout)
    if outcome.dropped_rows:
        print(f"Dropped {outcome.dropped_rows} nonconforming extracted rows", file=stdout)
    assert outcome.result is not None
    print(render_text(outcome.result), file=stdout)


def _print_report(report: EntropyReport, stdout: TextIO) -> None:
    print(f"Answer: {report.answer}", file=stdout)
    print(f"Entropy: {report.entropy_bits:.6f} bits (threshold {report.threshold_bits:.6f})", file=stdout)
    print(f"Clusters ({len(report.clusters)} from {len(report.samples)} samples):", file=stdout)
    for position, (cluster, probability) in enumerate(zip(report.clusters, report.probabilities)):
        print(f"  [{position}] p={probability:.3f} n={cluster.size} {cluster.representative.text}", file=stdout)
    if report.flag == "review":
        print("REVIEW: sampled answers disagree in meaning; flag for human review", file=stdout)


def _outcome_exit(outcome: QueryOutcome, stdout: TextIO, stderr: TextIO, as_json: bool) -> int:
    if outcome.mode == "graph" and not outcome.has_anchors:
        if as_json:
            print(json.dumps(outcome.to_dict(), ensure_ascii=False, sort_keys=True), file=stdout)
        print(NO_ANCHOR_MESSAGE, file=stderr)
        return core_config.EXIT_NO_ANCHOR
    if as_json:
        print(json.dumps(outcome.to_dict(), ensure_ascii=False, sort_keys=True), file=stdout)
    else:
        _print_outcome(outcome, stdout)
    return core_config.EXIT_OK


# ---------------------------------------------------------------------------
# 日本語: サブコマンド / English: Subcommands
# ---------------------------------------------------------------------------


def cmd_index(args: argparse.Namespace, cfg: CliConfig, stdout: TextIO, stderr: TextIO) -> int:
    report = index_corpus(args.corpus, cfg, ModelGateway(cfg.backend))
    save_graph(report.graph, args.out)
    for skipped in report.manifest.skipped:
        print(f"warning: skipped {skipped.path}: {skipped.reason}", file=stderr)
    for error in report.manifest.errors:
        print(f"warning: {error.path}: {error.message}", file=stderr)
    if not report.chunks:
        print("warning: corpus has no text documents; wrote an empty graph", file=stderr)
    if report.index.dropped_mentions or report.index.dropped_relations:
        print(
            f"warning: dropped {report.index.dropped_mentions} mentions and "
            f"{report.index.dropped_relations} relations that failed validation",
            file=stderr,
        )
    stats = graph_stats(report.graph)
    print(
        f"Indexed {len(report.manifest.documents)} documents into {args.out}: "
        f"{stats['chunks']} chunk nodes, {stats['entities']} entity nodes, "
        f"{stats['mentions']} mention edges, {stats['relations']} relation edges",
        file=stdout,
    )
    return core_config.EXIT_OK


def cmd_query(args: argparse.Namespace, cfg: CliConfig, stdout: TextIO, stderr: TextIO) -> int:
    pipeline = _pipeline(args, cfg, stderr)
    outcome = pipeline.query(args.question, mode=args.mode)
    return _outcome_exit(outcome, stdout, stderr, args.json)


def cmd_ask(args: argparse.Namespace, cfg: CliConfig, stdout: TextIO, stderr: TextIO) -> int:
    pipeline = _pipeline(args, cfg, stderr)
    report = pipeline.ask(args.question)
    if args.json:
        print(json.dumps(report.to_dict(), ensure_ascii=False, sort_keys=True), file=stdout)
    else:
        _print_report(report, stdout)
    return core_config.EXIT_REVIEW if report.flag == "review" else core_config.EXIT_OK


def cmd_manifest(args: argparse.Namespace, cfg: CliConfig, stdout: TextIO, stderr: TextIO) -> int:
    for record in manifest_records(load_corpus(args.corpus)):
        print(json.dumps(record, ensure_ascii=False, sort_keys=True), file=stdout)
    return core_config.EXIT_OK


def cmd_repl(
    args: argparse.Namespace,
    cfg: CliConfig,
    stdout: TextIO,
    stderr: TextIO,
    stdin: Optional[TextIO] = None,
) -> int:
    """One question per line; `:ask Q` adds the entropy check, `:config` and `:quit` are commands."""
    stdin = stdin or sys.stdin
    pipeline = _pipeline(args, cfg, stderr)
    while True:
        stdout.write(REPL_PROMPT)
        stdout.flush()
        line = stdin.readline()
        if not line:
            stdout.write("\n")
            return core_config.EXIT_OK
        text = line.strip()
        if not text:
            continue
        if text == ":quit":
            return core_config.EXIT_OK
        if text == ":config":
            print(cfg.model_dump_json(indent=2), file=stdout)
            continue
        try:
            if text.startswith(":ask"):
                question = text[len(":ask") :].strip()
                if not question:
                    print("usage: :ask QUESTION", file=stderr)
                    continue
                _print_report(pipeline.ask(question), stdout)
                continue
            outcome = pipeline.query(text, mode="auto")
            if outcome.mode == "graph" and not outcome.has_anchors:
                print(NO_ANCHOR_MESSAGE, file=stderr)
                continue
            _print_outcome(outcome, stdout)
        except PlanValidationError as exc:
            for violation in exc.violations:
                print(f"violation: {violation}", file=stderr)
        except (QueryAgentError, ValueError) as exc:
            print(f"error: {exc}", file=stderr)


_COMMANDS = {
    "index": cmd_index,
    "query": cmd_query,
    "ask": cmd_ask,
    "manifest": cmd_manifest,
}


def main(
    argv: Optional[Sequence[str]] = None,
    *,
    stdin: Optional[TextIO] = None,
    stdout: Optional[TextIO] = None,
    stderr: Optional[TextIO] = None,
) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
        if getattr(args, "samples", None) is not None and args.samples < 2:
            raise UsageError("--samples must be at least 2")
    except UsageError as exc:
        print(f"error: {exc}", file=stderr)
        return core_config.EXIT_USAGE
    except SystemExit as exc:
        # 日本語: --help は 0 で終了 / English: --help exits through SystemExit(0)
        return int(exc.code or 0)

    verbose = args.verbose if args.verbose is not None else core_config.verbose_default()
    _configure_logging(bool(verbose), stderr)

    try:
        cfg = load_cli_config(args.config, _flag_overrides(args))
    except ConfigError as exc:
        print(f"error: {exc}", file=stderr)
        return core_config.EXIT_USAGE

    try:
        if args.command == "repl":
            return cmd_repl(args, cfg, stdout, stderr, stdin)
        return _COMMANDS[args.command](args, cfg, stdout, stderr)
    except PlanValidationError as exc:
        print("plan failed validation:", file=stderr)
        for violation in exc.violations:
            print(f"  - {violation}", file=stderr)
        return core_config.EXIT_VALIDATION
    except (QueryAgentError, ValueError, OSError) as exc:
        logger.debug("Command %s failed", args.command, exc_info=True)
        print(f"error: {exc}", file=stderr)
        return core_config.EXIT_FATAL


def run(argv: Optional[List[str]] = None) -> None:
    sys.exit(main(argv))


if __name__ == "__main__":
    run()
