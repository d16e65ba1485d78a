from __future__ import annotations

import logging
import threading
import time
from typing import Any, Callable, Dict, List, Optional, Protocol, Tuple

import numpy as np
import openai
from openai import OpenAI

try:
    import anthropic
    from anthropic import Anthropic
except ImportError:
    anthropic = None
    Anthropic = None

from query_agent.core.errors import (
    BackendConfigError,
    BackendError,
    BackendStatusError,
    BackendUnavailableError,
)
from query_agent.core.settings import BackendConfig
from query_agent.gateway.backend_selection import normalise_endpoint_url, resolve_api_key

logger = logging.getLogger("query_agent.gateway.llm_client")

# 日本語: 指数バックオフの初期待機 (秒) / English: Base delay for exponential backoff, in seconds
BACKOFF_BASE_SECONDS = 0.25


class AdmissionObserver(Protocol):
    def enter(self) -> None: ...

    def exit(self) -> None: ...


def _retryable_errors() -> Tuple[type, ...]:
    errors: List[type] = [openai.APIConnectionError, openai.APITimeoutError, ConnectionError, TimeoutError]
    if anthropic is not None:
        errors.extend([anthropic.APIConnectionError, anthropic.APITimeoutError])
    return tuple(errors)


def _status_of(exc: BaseException) -> Optional[int]:
    status = getattr(exc, "status_code", None)
    return status if isinstance(status, int) else None


def _completion_text(content: Any) -> str:
    # 日本語: Chat Completions は文字列、Messages API はテキストブロック列 / English: Chat completions give a string, the messages API a list of text blocks
    if isinstance(content, str):
        return content
    if isinstance(content, list):
        return "\n".join(block.text for block in content if isinstance(getattr(block, "text", None), str))
    return ""


def fit_embedding(values: List[float], dimension: int) -> np.ndarray:
    # 日本語: 設定次元へ切り詰め/ゼロ埋めして正規化 / English: Truncate or zero-pad to the configured size, then normalize
    vector = np.zeros(dimension, dtype=np.float64)
    raw = np.asarray(list(values)[:dimension], dtype=np.float64)
    vector[: raw.shape[0]] = raw
    if not np.all(np.isfinite(vector)):
        raise BackendError("endpoint returned a non-finite embedding")
    norm = np.linalg.norm(vector)
    return vector if norm == 0.0 else vector / norm


class HttpModelClient:
    """OpenAI-compatible chat/embedding client with bounded admission and retries.

    The `claude` provider routes chat through the Anthropic SDK.
    """

    def __init__(
        self,
        cfg: BackendConfig,
        *,
        client_factory: Optional[Callable[..., Any]] = None,
        sleep: Callable[[float], None] = time.sleep,
        observer: Optional[AdmissionObserver] = None,
    ):
        # 日本語: ネットワーク呼び出し前に認証情報を確認 / English: Resolve credentials before any network call
        api_key = resolve_api_key(cfg)
        self.cfg = cfg
        self.provider = cfg.provider
        self._sleep = sleep
        self._observer = observer
        self._admission = threading.BoundedSemaphore(cfg.max_in_flight)
        timeout = cfg.timeout_ms / 1000.0

        if client_factory is not None:
            base_url = normalise_endpoint_url(cfg.endpoint_url) if cfg.endpoint_url else None
            self.client = client_factory(provider=cfg.provider, base_url=base_url, api_key=api_key, timeout=timeout)
        elif cfg.provider == "claude":
            if Anthropic is None:
                raise BackendConfigError("Anthropic SDK is not installed. Please run `pip install anthropic`.")
            client_kwargs: Dict[str, Any] = {"api_key": api_key, "timeout": timeout, "max_retries": 0}
            if cfg.endpoint_url:
                client_kwargs["base_url"] = normalise_endpoint_url(cfg.endpoint_url)
            self.client = Anthropic(**client_kwargs)
        else:
            self.client = OpenAI(
                base_url=normalise_endpoint_url(cfg.endpoint_url),
                api_key=api_key,
                timeout=timeout,
                max_retries=0,
            )

    def _admitted(self, operation: Callable[[], Any]) -> Any:
        with self._admission:
            if self._observer is not None:
                self._observer.enter()
            try:
                return operation()
            finally:
                if self._observer is not None:
                    self._observer.exit()

    def _with_retries(self, operation: Callable[[], Any], label: str) -> Any:
        # 日本語: 接続失敗のみ再試行し、HTTP ステータスエラーは即座に報告 / English: Retry transport failures only; status errors surface at once
        attempts = self.cfg.max_retries + 1
        retryable = _retryable_errors()
        last_error: Optional[BaseException] = None
        for attempt in range(attempts):
            try:
                return self._admitted(operation)
            except BackendError:
                raise
            except retryable as exc:
                last_error = exc
                logger.warning("%s attempt %d/%d failed: %s", label, attempt + 1, attempts, exc)
            except Exception as exc:
                status = _status_of(exc)
                if status is None:
                    raise BackendError(f"{label} failed: {exc}") from exc
                raise BackendStatusError(status, str(getattr(exc, "message", "") or exc)) from exc
            if attempt + 1 < attempts:
                self._sleep(BACKOFF_BASE_SECONDS * (2**attempt))
        raise BackendUnavailableError(f"{label}: endpoint unreachable ({last_error})", attempts=attempts)

    def chat(self, prompt: str, *, temperature: float, seed: int) -> str:
        messages = [{"role": "user", "content": prompt}]
        if self.provider == "claude":
            return self._with_retries(lambda: self._create_anthropic(messages, temperature), "chat")
        return self._with_retries(lambda: self._create_openai(messages, temperature, seed), "chat")

    def _create_openai(self, messages: List[Dict[str, str]], temperature: float, seed: int) -> str:
        kwargs: Dict[str, Any] = {
            "model": self.cfg.model,
            "messages": messages,
            "temperature": temperature,
            "seed": seed,
        }
        # 日本語: temperature/seed 非対応モデル向けにパラメータを外して再送 / English: Drop unsupported sampling params and resend
        for _ in range(3):
            try:
                response = self.client.chat.completions.create(**kwargs)
                return _completion_text(getattr(response.choices[0].message, "content", ""))
            except Exception as exc:
                status = _status_of(exc)
                err_str = str(exc).lower()
                fixed = False
                if status == 400 and ("unsupported" in err_str or "not supported" in err_str):
                    for name in ("temperature", "seed"):
                        if name in err_str and name in kwargs:
                            kwargs.pop(name)
                            fixed = True
                if not fixed:
                    raise
        response = self.client.chat.completions.create(**kwargs)
        return _completion_text(getattr(response.choices[0].message, "content", ""))

    def _create_anthropic(self, messages: List[Dict[str, str]], temperature: float) -> str:
        kwargs: Dict[str, Any] = {
            "model": self.cfg.model,
            "messages": messages,
            "max_tokens": 1024,
            "temperature": min(temperature, 1.0),
        }
        response = self.client.messages.create(**kwargs)
        return _completion_text(getattr(response, "content", None))

    def embed(self, text: str) -> np.ndarray:
        if self.provider == "claude":
            raise BackendConfigError("the claude provider has no embedding endpoint; use provider openai for embedding_cosine")

        def _call() -> List[float]:
            response = self.client.embeddings.create(model=self.cfg.embedding_model, input=text)
            return list(response.data[0].embedding)

        values = self._with_retries(_call, "embedding")
        return fit_embedding(values, self.cfg.embedding_dim)
