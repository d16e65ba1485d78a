"""Model gateway request and response types."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Mapping, Tuple

import numpy as np

TemplateId = Literal["ner", "relation", "table_extract", "plan_synthesis", "answer", "paraphrase"]
BackendMode = Literal["mock", "http"]

TEMPLATE_IDS: Tuple[TemplateId, ...] = (
    "ner",
    "relation",
    "table_extract",
    "plan_synthesis",
    "answer",
    "paraphrase",
)


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.0
    max_output_chars: int = 4000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.max_output_chars <= 0:
            raise ValueError("max_output_chars must be positive")


@dataclass(frozen=True)
class PromptRequest:
    template_id: TemplateId
    variables: Mapping[str, str] = field(default_factory=dict)
    params: SamplingParams = field(default_factory=SamplingParams)

    def __post_init__(self) -> None:
        if self.template_id not in TEMPLATE_IDS:
            raise ValueError(f"unknown template id {self.template_id!r}")

    def with_seed(self, seed: int) -> "PromptRequest":
        params = SamplingParams(
            temperature=self.params.temperature,
            max_output_chars=self.params.max_output_chars,
            seed=seed,
        )
        return PromptRequest(template_id=self.template_id, variables=self.variables, params=params)


@dataclass(frozen=True)
class Completion:
    text: str
    backend: BackendMode
    latency_ms: float = 0.0


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """Unit-length vector, or all zeros for blank text."""

    values: np.ndarray

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])

    @property
    def is_zero(self) -> bool:
        return not bool(np.any(self.values))

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))
