"""Core package exports."""

from .config import (
    BASE_DIR,
    DEMO_CORPUS_DIR,
    EXIT_FATAL,
    EXIT_NO_ANCHOR,
    EXIT_OK,
    EXIT_REVIEW,
    EXIT_USAGE,
    EXIT_VALIDATION,
    embedding_model_name,
    http_max_in_flight,
    log_level,
    model_backend_mode,
    model_endpoint,
    model_name,
)
from .settings import (
    BackendConfig,
    ChunkingSettings,
    CliConfig,
    EntropySettings,
    RetrievalSettings,
    RetrievalWeights,
    build_cli_config,
    load_cli_config,
)

__all__ = [
    "BASE_DIR",
    "DEMO_CORPUS_DIR",
    "EXIT_OK",
    "EXIT_FATAL",
    "EXIT_NO_ANCHOR",
    "EXIT_VALIDATION",
    "EXIT_REVIEW",
    "EXIT_USAGE",
    "embedding_model_name",
    "http_max_in_flight",
    "log_level",
    "model_backend_mode",
    "model_endpoint",
    "model_name",
    "BackendConfig",
    "ChunkingSettings",
    "CliConfig",
    "EntropySettings",
    "RetrievalSettings",
    "RetrievalWeights",
    "build_cli_config",
    "load_cli_config",
]
