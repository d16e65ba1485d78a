"""MCP server for Query Agent."""

from __future__ import annotations

import asyncio
import json
import logging
from typing import Any, List

try:
    import mcp.types as types
    from mcp.server import Server
    from mcp.server.stdio import stdio_server
    from mcp.types import Tool
except ModuleNotFoundError as exc:
    raise RuntimeError("mcp[cli] is required.") from exc

from query_agent.core import config as core_config
from query_agent.core.errors import PlanValidationError, QueryAgentError
from query_agent.core.settings import load_cli_config
from query_agent.gateway.model_gateway import ModelGateway
from query_agent.services.graph_service import load_graph
from query_agent.services.pipeline_service import QueryPipeline, load_structured_tables

# 日本語: MCP サーバーのインスタンス / English: MCP server instance
mcp_server = Server("query-agent")
logger = logging.getLogger("query_agent.mcp_server")

_pipeline: QueryPipeline | None = None


def get_pipeline() -> QueryPipeline:
    # 日本語: 初回呼び出しでグラフを読み込みキャッシュ / English: Load the graph once on first use
    global _pipeline
    if _pipeline is None:
        graph_path = core_config.mcp_graph_path()
        if not graph_path:
            raise QueryAgentError("QUERY_AGENT_GRAPH is not set")
        cfg = load_cli_config(None)
        tables, _ = load_structured_tables(core_config.mcp_corpus_dir() or None)
        _pipeline = QueryPipeline(graph=load_graph(graph_path), cfg=cfg, gateway=ModelGateway(cfg.backend), tables=tables)
    return _pipeline


def reset_pipeline() -> None:
    global _pipeline
    _pipeline = None


@mcp_server.list_tools()
async def list_tools() -> list[Tool]:
    # 日本語: 提供ツールの一覧 / English: List available MCP tools
    """List available tools."""
    return [
        Tool(
            name="query_corpus",
            description="Answer a question over the indexed corpus through graph retrieval or a relational plan.",
            inputSchema={
                "type": "object",
                "properties": {
                    "question": {"type": "string", "description": "Natural-language question"},
                    "mode": {"type": "string", "enum": ["auto", "graph", "table"], "default": "auto"},
                },
                "required": ["question"],
            },
        ),
        Tool(
            name="ask_with_uncertainty",
            description="Sample several answers and report their semantic entropy and review flag.",
            inputSchema={
                "type": "object",
                "properties": {
                    "question": {"type": "string", "description": "Natural-language question"},
                    "samples": {"type": "integer", "minimum": 2},
                },
                "required": ["question"],
            },
        ),
    ]


def _text(payload: Any) -> List[types.TextContent]:
    return [types.TextContent(type="text", text=json.dumps(payload, ensure_ascii=False, sort_keys=True))]


@mcp_server.call_tool()
async def call_tool(name: str, arguments: Any) -> List[types.TextContent]:
    # 日本語: MCP ツール呼び出しを処理 / English: Handle MCP tool invocation
    """Handle tool calls."""
    arguments = arguments if isinstance(arguments, dict) else {}
    question = str(arguments.get("question") or "").strip()
    if name not in {"query_corpus", "ask_with_uncertainty"}:
        logger.warning("Unknown tool requested: %s", name)
        return [types.TextContent(type="text", text="Error: unknown tool")]
    if not question:
        return [types.TextContent(type="text", text="Error: question is required")]

    try:
        pipeline = get_pipeline()
        if name == "query_corpus":
            mode = arguments.get("mode") or "auto"
            if mode not in {"auto", "graph", "table"}:
                return [types.TextContent(type="text", text=f"Error: unknown mode {mode}")]
            return _text(pipeline.query(question, mode=mode).to_dict())
        samples = arguments.get("samples")
        report = pipeline.ask(question, samples=int(samples) if samples is not None else None)
        return _text(report.to_dict())
    except PlanValidationError as exc:
        return _text({"error": "plan failed validation", "violations": list(exc.violations)})
    except (QueryAgentError, ValueError) as exc:
        logger.exception("Error processing %s.", name, exc_info=exc)
        return [types.TextContent(type="text", text=f"Error: {exc}")]


async def _serve() -> None:
    async with stdio_server() as (read_stream, write_stream):
        await mcp_server.run(read_stream, write_stream, mcp_server.create_initialization_options())


def main() -> None:
    asyncio.run(_serve())


if __name__ == "__main__":
    main()
