"""Core configuration for Query Agent."""

from __future__ import annotations

import os
from pathlib import Path

from dotenv import load_dotenv

# 日本語: ルート直下の secrets.env を起動時に読み込む / English: Load root-level secrets.env on startup
load_dotenv("secrets.env")

# 日本語: プロジェクトルート基準パス / English: Project root directory
BASE_DIR = Path(__file__).resolve().parents[2]

# 日本語: 同梱デモコーパス / English: Bundled demo corpus
DEMO_CORPUS_DIR = BASE_DIR / "demo_corpus"

# 日本語: CLI 終了コード / English: CLI exit-code contract
EXIT_OK = 0
EXIT_FATAL = 1
EXIT_NO_ANCHOR = 2
EXIT_VALIDATION = 3
EXIT_REVIEW = 4
EXIT_USAGE = 64

BACKEND_MODES = ("mock", "http")


def _bool_env(name: str, default: bool) -> bool:
    # 日本語: 真偽値環境変数の安全な解釈 / English: Safely parse boolean environment variable
    raw_value = os.getenv(name)
    if raw_value is None:
        return default
    return str(raw_value).strip().lower() in {"1", "true", "yes", "on"}


def _int_env(name: str, default: int, minimum: int = 1, maximum: int | None = None) -> int:
    # 日本語: 整数環境変数の安全な解釈とクランプ / English: Parse integer env safely and clamp
    raw_value = os.getenv(name, str(default))
    try:
        parsed = int(raw_value)
    except (TypeError, ValueError):
        parsed = default
    if maximum is None:
        return max(minimum, parsed)
    return max(minimum, min(parsed, maximum))


def model_backend_mode() -> str:
    # 日本語: 未知の値は mock に倒す / English: Unknown values fall back to mock
    raw_value = str(os.getenv("MODEL_BACKEND", "mock")).strip().lower()
    if raw_value not in BACKEND_MODES:
        return "mock"
    return raw_value


def model_endpoint() -> str:
    # 日本語: OpenAI 互換エンドポイント / English: OpenAI-compatible endpoint URL
    return str(os.getenv("MODEL_ENDPOINT", "")).strip()


def model_name() -> str:
    raw_value = str(os.getenv("MODEL_NAME", "")).strip()
    return raw_value or "gpt-4o-mini"


def embedding_model_name() -> str:
    raw_value = str(os.getenv("MODEL_EMBEDDING_NAME", "")).strip()
    return raw_value or "text-embedding-3-small"


def http_max_in_flight() -> int:
    # 日本語: 同時リクエスト上限の既定値 (1〜32) / English: Default in-flight cap, clamped to 1-32
    return _int_env("MODEL_MAX_IN_FLIGHT", 4, minimum=1, maximum=32)


def log_level() -> str:
    raw_value = str(os.getenv("QUERY_AGENT_LOG_LEVEL", "WARNING")).strip().upper()
    if raw_value not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
        return "WARNING"
    return raw_value


def verbose_default() -> bool:
    return _bool_env("QUERY_AGENT_VERBOSE", default=False)


def mcp_graph_path() -> str:
    # 日本語: MCP ツールが読むグラフファイル / English: Graph file served by the MCP tools
    return str(os.getenv("QUERY_AGENT_GRAPH", "")).strip()


def mcp_corpus_dir() -> str:
    return str(os.getenv("QUERY_AGENT_CORPUS", "")).strip()
