"""Model gateway package."""

from .model_gateway import ModelGateway, complete, cosine_similarity, embed, sample_answers
from .templates import PROMPT_TEMPLATES, render_prompt

__all__ = [
    "ModelGateway",
    "complete",
    "embed",
    "sample_answers",
    "cosine_similarity",
    "PROMPT_TEMPLATES",
    "render_prompt",
]
