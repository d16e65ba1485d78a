"""Resolve provider endpoint and credentials for the http backend."""

from __future__ import annotations

import os
from typing import Dict, List
from urllib.parse import urlparse

from query_agent.core.errors import BackendConfigError
from query_agent.core.settings import BackendConfig

# 日本語: プロバイダごとの API キー環境変数の別名 / English: Provider-specific API key aliases
PROVIDER_DEFAULTS: Dict[str, Dict[str, List[str]]] = {
    "openai": {"api_key_aliases": []},
    "claude": {"api_key_aliases": ["CLAUDE_API_KEY", "ANTHROPIC_API_KEY"]},
}

_ALLOWED_SCHEMES = {"http", "https"}
# 日本語: OpenAI 互換 URL から末尾のリソースパスを除去 / English: Trailing resource paths stripped from OpenAI-compatible URLs
_RESOURCE_SUFFIXES = ("/chat/completions", "/completions", "/embeddings")


def resolve_api_key(cfg: BackendConfig) -> str:
    """Read the key from the env var named by `api_key_source` (plus provider aliases)."""
    candidates = [cfg.api_key_source, cfg.api_key_source.lower()]
    for alias in PROVIDER_DEFAULTS.get(cfg.provider, {}).get("api_key_aliases", []):
        candidates.extend([alias, alias.lower()])
    for env_name in candidates:
        value = os.getenv(env_name)
        if value and value.strip():
            return value.strip()
    raise BackendConfigError(
        f"API key for provider '{cfg.provider}' is not set. Please set '{cfg.api_key_source}' in your environment or secrets.env file."
    )


def normalise_endpoint_url(endpoint_url: str) -> str:
    # 日本語: エンドポイント URL の妥当性確認と正規化 / English: Validate and normalize the endpoint URL
    cleaned = (endpoint_url or "").strip().rstrip("/")
    if not cleaned:
        raise BackendConfigError("http backend requires an endpoint URL (MODEL_ENDPOINT)")
    parsed = urlparse(cleaned)
    if parsed.scheme.lower() not in _ALLOWED_SCHEMES or not parsed.netloc:
        raise BackendConfigError(f"endpoint URL must be http(s)://host[:port]/path, got {endpoint_url!r}")
    if parsed.username or parsed.password:
        raise BackendConfigError("endpoint URL must not embed credentials; use the API key env var")
    if parsed.query or parsed.fragment:
        raise BackendConfigError("endpoint URL must not carry a query string or fragment")
    lowered = cleaned.lower()
    for suffix in _RESOURCE_SUFFIXES:
        if lowered.endswith(suffix):
            cleaned = cleaned[: -len(suffix)]
            break
    return cleaned.rstrip("/")
