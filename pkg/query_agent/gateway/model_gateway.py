"""Single entry point for model calls: mock rulebook or http endpoint."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, List, Optional

import numpy as np

from query_agent.core.errors import BackendError
from query_agent.core.settings import BackendConfig
from query_agent.gateway.llm_client import AdmissionObserver, HttpModelClient
from query_agent.gateway.mock_backend import canned_question, mock_complete, mock_embedding
from query_agent.gateway.templates import render_prompt
from query_agent.models.gateway_models import Completion, EmbeddingVector, PromptRequest

logger = logging.getLogger("query_agent.gateway")


def cosine_similarity(left: EmbeddingVector, right: EmbeddingVector) -> float:
    # 日本語: ゼロベクトルとの類似度は 0 / English: Similarity with the zero vector is 0
    if left.is_zero or right.is_zero:
        return 0.0
    value = float(np.dot(left.values, right.values) / (np.linalg.norm(left.values) * np.linalg.norm(right.values)))
    return max(-1.0, min(1.0, value))


class ModelGateway:
    """Shareable across threads; mock mode is pure, http mode bounds in-flight requests."""

    def __init__(
        self,
        cfg: Optional[BackendConfig] = None,
        *,
        observer: Optional[AdmissionObserver] = None,
        client_factory: Optional[Callable[..., Any]] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg or BackendConfig()
        self._http: Optional[HttpModelClient] = None
        if self.cfg.mode == "http":
            self._http = HttpModelClient(self.cfg, client_factory=client_factory, sleep=sleep, observer=observer)

    @property
    def mode(self) -> str:
        return self.cfg.mode

    def complete(self, req: PromptRequest) -> Completion:
        # 日本語: テンプレート未束縛はどちらのモードでもエラー / English: Unbound placeholders fail in both modes
        prompt = render_prompt(req.template_id, req.variables)
        started = time.perf_counter()
        if self._http is None:
            text = mock_complete(req)
        else:
            text = self._http.chat(prompt, temperature=req.params.temperature, seed=req.params.seed)
        latency_ms = max(0.0, (time.perf_counter() - started) * 1000.0)
        return Completion(text=text[: req.params.max_output_chars], backend=self.cfg.mode, latency_ms=latency_ms)

    def embed(self, text: str) -> EmbeddingVector:
        if self._http is None:
            return EmbeddingVector(values=mock_embedding(text, self.cfg.embedding_dim))
        if not (text or "").strip():
            return EmbeddingVector(values=np.zeros(self.cfg.embedding_dim, dtype=np.float64))
        return EmbeddingVector(values=self._http.embed(text))

    def sample_answers(self, req: PromptRequest, n: int) -> List[Completion]:
        """Draw `n` answers; sample i uses seed `req.params.seed + i`."""
        if n < 1:
            raise ValueError("n must be at least 1")
        if self._http is None:
            return self._mock_samples(req, n)
        return self._http_samples(req, n)

    def _mock_samples(self, req: PromptRequest, n: int) -> List[Completion]:
        if req.params.temperature == 0:
            completion = self.complete(req)
            return [completion for _ in range(n)]
        entry = canned_question(req.variables.get("question", ""))
        if entry is None:
            completion = self.complete(req)
            return [completion for _ in range(n)]
        limit = req.params.max_output_chars
        # 日本語: (seed + i) で言い換え表を巡回 / English: Rotate the paraphrase table by (seed + i)
        return [
            Completion(text=entry.variants[(req.params.seed + index) % len(entry.variants)][:limit], backend="mock")
            for index in range(n)
        ]

    def _http_samples(self, req: PromptRequest, n: int) -> List[Completion]:
        def _one(index: int) -> Completion | BackendError:
            try:
                return self.complete(req.with_seed(req.params.seed + index))
            except BackendError as exc:
                return exc

        with ThreadPoolExecutor(max_workers=min(n, self.cfg.max_in_flight)) as pool:
            outcomes = list(pool.map(_one, range(n)))
        completions = [outcome for outcome in outcomes if isinstance(outcome, Completion)]
        failures = [outcome for outcome in outcomes if isinstance(outcome, BackendError)]
        if not completions:
            raise BackendError(f"all {n} answer samples failed; first error: {failures[0]}") from failures[0]
        if failures:
            logger.warning("%d of %d answer samples failed; continuing with %d", len(failures), n, len(completions))
        return completions


def complete(req: PromptRequest, cfg: Optional[BackendConfig] = None) -> Completion:
    return ModelGateway(cfg).complete(req)


def embed(text: str, cfg: Optional[BackendConfig] = None) -> EmbeddingVector:
    return ModelGateway(cfg).embed(text)


def sample_answers(req: PromptRequest, n: int, cfg: Optional[BackendConfig] = None) -> List[Completion]:
    return ModelGateway(cfg).sample_answers(req, n)
