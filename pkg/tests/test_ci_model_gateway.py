import threading
import time
from types import SimpleNamespace

import numpy as np
import pytest

from query_agent.core.errors import (
    BackendConfigError,
    BackendError,
    BackendStatusError,
    BackendUnavailableError,
    PromptTemplateError,
)
from query_agent.core.settings import BackendConfig
from query_agent.gateway.backend_selection import normalise_endpoint_url
from query_agent.gateway.mock_backend import PARAPHRASE_TABLE, mock_answer
from query_agent.gateway.model_gateway import ModelGateway, cosine_similarity
from query_agent.gateway.templates import render_prompt, template_placeholders
from query_agent.models.gateway_models import EmbeddingVector, PromptRequest, SamplingParams

LEGAL_QUESTION = PARAPHRASE_TABLE["legal_photo"].question


class StatusFailure(Exception):
    def __init__(self, status_code, message="boom"):
        super().__init__(message)
        self.status_code = status_code


class FakeClient:
    """Scripted stand-in for the OpenAI SDK client."""

    def __init__(self, replies=None, embedding=(1.0,)):
        self.replies = list(replies or [])
        self.calls = []
        self.embedding = embedding
        self.chat = SimpleNamespace(completions=SimpleNamespace(create=self._create))
        self.embeddings = SimpleNamespace(create=self._embed)

    def _create(self, **kwargs):
        self.calls.append(kwargs)
        reply = self.replies.pop(0) if self.replies else "ok"
        if isinstance(reply, Exception):
            raise reply
        message = SimpleNamespace(content=reply)
        return SimpleNamespace(choices=[SimpleNamespace(message=message)])

    def _embed(self, **kwargs):
        self.calls.append(kwargs)
        return SimpleNamespace(data=[SimpleNamespace(embedding=list(self.embedding))])


def _http_gateway(monkeypatch, client, *, sleeps=None, observer=None, **overrides):
    monkeypatch.setenv("MODEL_API_KEY", "test-key")
    cfg = BackendConfig(mode="http", endpoint_url="http://localhost:8000/v1/", **overrides)
    captured = {}

    def factory(**kwargs):
        captured.update(kwargs)
        return client

    gateway = ModelGateway(
        cfg,
        client_factory=factory,
        sleep=(sleeps.append if sleeps is not None else lambda _: None),
        observer=observer,
    )
    return gateway, captured


def _answer_request(question="Who supplies Product B?", context="Globex supplies Product B.", **params):
    return PromptRequest(
        template_id="answer",
        variables={"question": question, "context": context},
        params=SamplingParams(**params),
    )


def test_render_prompt_reports_every_missing_placeholder():
    with pytest.raises(PromptTemplateError) as exc_info:
        render_prompt("relation", {"text": "Acme hired Bob."})

    assert exc_info.value.missing == ("mentions",)
    assert template_placeholders("answer") == ["context", "question"]


def test_render_prompt_keeps_literal_braces():
    prompt = render_prompt("ner", {"text": "Acme"})

    assert '{"text": ..., "type": ...' in prompt
    assert prompt.endswith("Acme")


def test_unknown_template_id_is_rejected():
    with pytest.raises(ValueError):
        PromptRequest(template_id="summarize", variables={})


def test_mock_completion_is_deterministic_and_truncated(gateway):
    request = _answer_request(max_output_chars=7)

    first = gateway.complete(request)
    second = gateway.complete(request)

    assert first.text == second.text == "Globex "
    assert first.backend == "mock"


def test_mock_answer_uses_first_sentence_of_first_block():
    assert mock_answer("Acme builds rockets. It is old.\n\nGlobex sells.") == "Acme builds rockets."
    assert mock_answer("") == "No supporting context was found for this question."


def test_mock_samples_rotate_paraphrases_by_seed(gateway):
    request = _answer_request(question=LEGAL_QUESTION, context="", temperature=1.0, seed=1)

    texts = [completion.text for completion in gateway.sample_answers(request, 4)]

    variants = PARAPHRASE_TABLE["legal_photo"].variants
    assert texts == [variants[1], variants[2], variants[0], variants[1]]


def test_mock_samples_at_zero_temperature_are_identical(gateway):
    request = _answer_request(question=LEGAL_QUESTION, context="", temperature=0.0)

    texts = {completion.text for completion in gateway.sample_answers(request, 5)}

    assert len(texts) == 1


def test_sample_answers_needs_at_least_one(gateway):
    with pytest.raises(ValueError):
        gateway.sample_answers(_answer_request(), 0)


def test_mock_embeddings_are_unit_length_and_blank_is_zero(gateway):
    vector = gateway.embed("Product A sales")
    blank = gateway.embed("   ")

    assert vector.dimension == 256
    assert vector.norm() == pytest.approx(1.0)
    assert blank.is_zero
    assert cosine_similarity(vector, blank) == 0.0
    assert cosine_similarity(vector, gateway.embed("product a SALES")) == pytest.approx(1.0)


def test_cosine_similarity_is_clamped():
    left = EmbeddingVector(values=np.array([1.0, 0.0]))
    right = EmbeddingVector(values=np.array([-1.0, 0.0]))

    assert cosine_similarity(left, right) == pytest.approx(-1.0)


def test_http_mode_without_api_key_fails_before_any_call():
    cfg = BackendConfig(mode="http", endpoint_url="http://localhost:8000/v1")

    with pytest.raises(BackendConfigError):
        ModelGateway(cfg, client_factory=lambda **_: pytest.fail("client must not be built"))


def test_http_completion_passes_seed_and_normalized_url(monkeypatch):
    client = FakeClient(replies=["Globex."])
    gateway, captured = _http_gateway(monkeypatch, client)

    completion = gateway.complete(_answer_request(temperature=0.5, seed=9))

    assert completion.text == "Globex."
    assert completion.backend == "http"
    assert captured["base_url"] == "http://localhost:8000/v1"
    assert captured["api_key"] == "test-key"
    assert client.calls[0]["seed"] == 9
    assert client.calls[0]["temperature"] == 0.5


def test_http_retries_connection_errors_with_backoff(monkeypatch):
    sleeps = []
    client = FakeClient(replies=[ConnectionError("reset"), ConnectionError("reset"), "recovered"])
    gateway, _ = _http_gateway(monkeypatch, client, sleeps=sleeps, max_retries=3)

    assert gateway.complete(_answer_request()).text == "recovered"
    assert sleeps == [0.25, 0.5]


def test_http_gives_up_after_bounded_attempts(monkeypatch):
    sleeps = []
    client = FakeClient(replies=[ConnectionError("down")] * 5)
    gateway, _ = _http_gateway(monkeypatch, client, sleeps=sleeps, max_retries=2)

    with pytest.raises(BackendUnavailableError) as exc_info:
        gateway.complete(_answer_request())

    assert exc_info.value.attempts == 3
    assert len(client.calls) == 3
    assert sleeps == [0.25, 0.5]


def test_http_status_errors_are_not_retried(monkeypatch):
    sleeps = []
    client = FakeClient(replies=[StatusFailure(503)])
    gateway, _ = _http_gateway(monkeypatch, client, sleeps=sleeps)

    with pytest.raises(BackendStatusError) as exc_info:
        gateway.complete(_answer_request())

    assert exc_info.value.status == 503
    assert sleeps == []


def test_http_drops_unsupported_sampling_params(monkeypatch):
    client = FakeClient(replies=[StatusFailure(400, "temperature is not supported by this model"), "fine"])
    gateway, _ = _http_gateway(monkeypatch, client)

    assert gateway.complete(_answer_request(temperature=0.7)).text == "fine"
    assert "temperature" not in client.calls[1]


def test_claude_provider_sends_the_user_turn_and_joins_text_blocks(monkeypatch):
    calls = []

    def create(**kwargs):
        calls.append(kwargs)
        blocks = [SimpleNamespace(text="Globex"), SimpleNamespace(type="tool_use"), SimpleNamespace(text="supplies B.")]
        return SimpleNamespace(content=blocks)

    client = SimpleNamespace(messages=SimpleNamespace(create=create))
    gateway, captured = _http_gateway(monkeypatch, client, provider="claude", model="claude-test")

    completion = gateway.complete(_answer_request(temperature=1.5))

    assert completion.text == "Globex\nsupplies B."
    assert captured["provider"] == "claude"
    assert calls[0]["messages"][0]["role"] == "user"
    assert len(calls[0]["messages"]) == 1
    assert "system" not in calls[0]
    assert calls[0]["temperature"] == 1.0


def test_http_embedding_is_fitted_to_configured_dimension(monkeypatch):
    client = FakeClient(embedding=(3.0, 4.0))
    gateway, _ = _http_gateway(monkeypatch, client, embedding_dim=4)

    vector = gateway.embed("Product A")

    assert np.allclose(vector.values, [0.6, 0.8, 0.0, 0.0])
    assert gateway.embed("  ").is_zero
    assert len(client.calls) == 1


def test_http_sampling_returns_survivors_when_some_samples_fail(monkeypatch):
    client = FakeClient()

    def create(**kwargs):
        if kwargs["seed"] == 1:
            raise StatusFailure(500)
        message = SimpleNamespace(content=f"answer {kwargs['seed']}")
        return SimpleNamespace(choices=[SimpleNamespace(message=message)])

    client.chat = SimpleNamespace(completions=SimpleNamespace(create=create))
    gateway, _ = _http_gateway(monkeypatch, client)

    texts = [completion.text for completion in gateway.sample_answers(_answer_request(temperature=1.0), 3)]

    assert texts == ["answer 0", "answer 2"]


def test_http_sampling_raises_when_every_sample_fails(monkeypatch):
    client = FakeClient(replies=[StatusFailure(500)] * 3)
    gateway, _ = _http_gateway(monkeypatch, client)

    with pytest.raises(BackendError):
        gateway.sample_answers(_answer_request(temperature=1.0), 3)


def test_http_admission_never_exceeds_max_in_flight(monkeypatch):
    class Gauge:
        def __init__(self):
            self.lock = threading.Lock()
            self.current = 0
            self.peak = 0

        def enter(self):
            with self.lock:
                self.current += 1
                self.peak = max(self.peak, self.current)

        def exit(self):
            with self.lock:
                self.current -= 1

    def slow_create(**kwargs):
        time.sleep(0.01)
        message = SimpleNamespace(content="ok")
        return SimpleNamespace(choices=[SimpleNamespace(message=message)])

    client = FakeClient()
    client.chat = SimpleNamespace(completions=SimpleNamespace(create=slow_create))
    gauge = Gauge()
    gateway, _ = _http_gateway(monkeypatch, client, observer=gauge, max_in_flight=2)

    completions = gateway.sample_answers(_answer_request(temperature=1.0), 8)

    assert len(completions) == 8
    assert 1 <= gauge.peak <= 2
    assert gauge.current == 0


def test_normalise_endpoint_url_strips_resource_paths_and_rejects_bad_schemes():
    assert normalise_endpoint_url("https://api.example.com/v1/chat/completions/") == "https://api.example.com/v1"
    with pytest.raises(BackendConfigError):
        normalise_endpoint_url("ftp://api.example.com/v1")
    with pytest.raises(BackendConfigError):
        normalise_endpoint_url("https://user:pw@api.example.com/v1")
