"""Validated runtime settings (CLI config file, flags, backend)."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from query_agent.core import config as core_config
from query_agent.core.errors import ConfigError


class _StrictModel(BaseModel):
    # 日本語: 未知キーは拒否 / English: Unknown keys are rejected
    model_config = ConfigDict(extra="forbid", frozen=True)


class ChunkingSettings(_StrictModel):
    max_chars: int = Field(default=1000, gt=0)
    overlap_chars: int = Field(default=200, ge=0)

    @model_validator(mode="after")
    def _overlap_below_window(self) -> "ChunkingSettings":
        if self.overlap_chars >= self.max_chars:
            raise ValueError("overlap_chars must be smaller than max_chars")
        return self


class RetrievalWeights(_StrictModel):
    alpha: float = Field(default=0.5, ge=0.0)
    beta: float = Field(default=0.3, ge=0.0)
    gamma: float = Field(default=0.2, ge=0.0)


class RetrievalSettings(_StrictModel):
    hop_limit: int = Field(default=2, ge=0)
    node_budget: int = Field(default=64, gt=0)
    char_budget: int = Field(default=4000, gt=0)
    weights: RetrievalWeights = Field(default_factory=RetrievalWeights)


class BackendConfig(_StrictModel):
    mode: Literal["mock", "http"] = "mock"
    provider: Literal["openai", "claude"] = "openai"
    endpoint_url: str = ""
    api_key_source: str = "MODEL_API_KEY"
    model: str = "gpt-4o-mini"
    embedding_model: str = "text-embedding-3-small"
    timeout_ms: int = Field(default=30_000, gt=0)
    max_retries: int = Field(default=3, ge=0)
    max_in_flight: int = Field(default=4, gt=0)
    embedding_dim: int = Field(default=256, gt=0)

    @model_validator(mode="after")
    def _http_requires_endpoint(self) -> "BackendConfig":
        # 日本語: http モードはエンドポイント必須 / English: http mode needs an endpoint
        if self.mode == "http" and self.provider == "openai" and not self.endpoint_url.strip():
            raise ValueError("http mode requires endpoint_url (set MODEL_ENDPOINT or backend.endpoint_url)")
        return self


class EntropySettings(_StrictModel):
    samples: int = Field(default=5, ge=2)
    threshold_bits: float = Field(default=1.0, ge=0.0)
    oracle: Literal["exact_normalized", "embedding_cosine"] = "exact_normalized"
    tau: float = Field(default=0.8, gt=0.0, le=1.0)
    temperature: float = Field(default=1.0, ge=0.0)
    seed: int = 0


class CliConfig(_StrictModel):
    chunking: ChunkingSettings = Field(default_factory=ChunkingSettings)
    retrieval: RetrievalSettings = Field(default_factory=RetrievalSettings)
    backend: BackendConfig = Field(default_factory=BackendConfig)
    entropy: EntropySettings = Field(default_factory=EntropySettings)
    reference_quarter: Literal["Q1", "Q2", "Q3", "Q4"] = "Q4"


def backend_env_defaults() -> Dict[str, Any]:
    # 日本語: 環境変数はバックエンドの既定値のみを供給 / English: Env vars only seed backend defaults
    return {
        "mode": core_config.model_backend_mode(),
        "endpoint_url": core_config.model_endpoint(),
        "model": core_config.model_name(),
        "embedding_model": core_config.embedding_model_name(),
        "max_in_flight": core_config.http_max_in_flight(),
    }


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def build_cli_config(
    file_values: Dict[str, Any] | None = None,
    flag_values: Dict[str, Any] | None = None,
    *,
    source: str = "<config>",
) -> CliConfig:
    """Merge env defaults < config file < flags and validate the result."""
    layered: Dict[str, Any] = {"backend": backend_env_defaults()}
    if file_values:
        if not isinstance(file_values, dict):
            raise ConfigError(f"{source}: top level must be a JSON object")
        layered = _deep_merge(layered, file_values)
    if flag_values:
        layered = _deep_merge(layered, flag_values)
    try:
        return CliConfig.model_validate(layered)
    except ValidationError as exc:
        problems = []
        for error in exc.errors():
            location = ".".join(str(part) for part in error.get("loc", ()))
            problems.append(f"{location or '<root>'}: {error.get('msg')}")
        raise ConfigError(f"{source}: invalid configuration: " + "; ".join(problems)) from exc


def load_cli_config(path: str | Path | None, flag_values: Dict[str, Any] | None = None) -> CliConfig:
    """Load a JSON config document (optional) and apply flag overrides."""
    if path is None:
        return build_cli_config(None, flag_values)
    config_path = Path(path)
    try:
        raw_text = config_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {config_path}: {exc.strerror or exc}") from exc
    try:
        file_values = json.loads(raw_text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{config_path}: malformed JSON at line {exc.lineno} column {exc.colno}"
        ) from exc
    return build_cli_config(file_values, flag_values, source=str(config_path))
