"""Deterministic rule-based stand-in for the model backend.

Every function here is a pure function of its inputs so the whole pipeline
runs offline and repeatably.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from query_agent.models.gateway_models import PromptRequest
from query_agent.services.extraction_rules import mock_plan_synthesis, mock_table_extract

# 日本語: 小さな閉じた語彙 (指標語) / English: Small closed lexicon of metric words
METRIC_LEXICON: Tuple[str, ...] = ("sales", "revenue", "rating", "symptoms")

_QUARTER = re.compile(r"\bQ[1-4]\b")
_NUMBER = re.compile(r"(?<![\w.])[+-]?\d+(?:\.\d+)?%?(?!\w)")
_LEXICON = re.compile(r"\b(?:" + "|".join(METRIC_LEXICON) + r")\b", re.IGNORECASE)
_PLURAL_COORDINATION = re.compile(r"\b([A-Z][a-z]+)s ([A-Z0-9]\w*) and ([A-Z0-9]\w*)\b")
_CAPITALIZED = re.compile(r"[A-Z][A-Za-z0-9&-]*")

_LEADING_STOPWORDS = {
    "a", "an", "the", "in", "on", "at", "for", "of", "and", "or", "but", "to", "from", "with", "by",
    "compare", "find", "list", "show", "what", "which", "who", "how", "when", "where", "why",
    "can", "is", "are", "was", "were", "do", "does", "did", "this", "that", "these", "those",
    "it", "its", "our", "we", "i", "if", "yes", "no", "total", "overall", "during", "after", "before",
}

_PREPOSITIONS = {
    "in", "on", "at", "for", "of", "to", "from", "with", "by", "during", "after", "before",
    "into", "onto", "over", "under", "per", "via",
}
_CONJUNCTIONS = {"and", "or", "but", "nor", "so", "yet", "the", "a", "an"}
_VERB_PHRASE = re.compile(r"^[a-z]+(?: [a-z]+){0,3}$")
_SENTENCE = re.compile(r"\S.*?(?:[.!?](?=\s|$)|$)", re.DOTALL)

NO_CONTEXT_ANSWER = "No supporting context was found for this question."


def _mention(text: str, start: int, end: int, tag: str) -> Dict[str, object]:
    return {"text": text[start:end], "type": tag, "start": start, "end": end}


def _overlaps(start: int, end: int, taken: List[Tuple[int, int]]) -> bool:
    return any(start < other_end and other_start < end for other_start, other_end in taken)


def mock_ner(text: str) -> List[Dict[str, object]]:
    """Quarter tokens, numeric literals, metric lexicon, then Capitalized-Word runs."""
    if not text:
        return []
    found: List[Dict[str, object]] = []
    taken: List[Tuple[int, int]] = []

    def _claim(start: int, end: int, tag: str) -> None:
        if _overlaps(start, end, taken):
            return
        taken.append((start, end))
        found.append(_mention(text, start, end, tag))

    for match in _QUARTER.finditer(text):
        _claim(match.start(), match.end(), "time")
    for match in _NUMBER.finditer(text):
        _claim(match.start(), match.end(), "metric")
    for match in _LEXICON.finditer(text):
        _claim(match.start(), match.end(), "metric")

    # 日本語: "Products A and B" は Product A / Product B に展開 / English: Expand plural coordinations
    for match in _PLURAL_COORDINATION.finditer(text):
        if _overlaps(match.start(), match.end(), taken):
            continue
        head = match.group(1)
        taken.append((match.start(), match.end()))
        for member in (match.group(2), match.group(3)):
            found.append({"text": f"{head} {member}", "type": "other", "start": match.start(), "end": match.end()})

    runs: List[List[Tuple[int, int]]] = []
    for match in _CAPITALIZED.finditer(text):
        if match.start() > 0 and (text[match.start() - 1].isalnum() or text[match.start() - 1] == "_"):
            continue
        if _overlaps(match.start(), match.end(), taken):
            runs.append([])
            continue
        if runs and runs[-1] and text[runs[-1][-1][1] : match.start()] == " ":
            runs[-1].append((match.start(), match.end()))
        else:
            runs.append([(match.start(), match.end())])
    for run in runs:
        while run and text[run[0][0] : run[0][1]].casefold() in _LEADING_STOPWORDS:
            run = run[1:]
        if run:
            _claim(run[0][0], run[-1][1], "other")

    found.sort(key=lambda item: (item["start"], item["end"], item["text"]))
    return found


def mock_relations(text: str, mentions: List[Mapping[str, object]]) -> List[Dict[str, object]]:
    """`<Entity> <verb phrase> <Entity>` within one sentence; a trailing `<prep> <Entity>` folds into the predicate."""
    candidates = sorted(
        (
            mention
            for mention in mentions
            if mention.get("type") != "metric" and isinstance(mention.get("start"), int) and isinstance(mention.get("end"), int)
        ),
        key=lambda mention: (mention["start"], mention["end"]),
    )
    # 日本語: 同一スパンの展開メンションは関係の端点にしない / English: Expanded coordinations share a span and are skipped
    spans = [(mention["start"], mention["end"]) for mention in candidates]
    candidates = [mention for mention in candidates if spans.count((mention["start"], mention["end"])) == 1]

    relations: List[Dict[str, object]] = []
    index = 0
    while index + 1 < len(candidates):
        left, right = candidates[index], candidates[index + 1]
        gap = text[int(left["end"]) : int(right["start"])].strip()
        if not _VERB_PHRASE.match(gap) or gap.split(" ")[0] in _PREPOSITIONS | _CONJUNCTIONS:
            index += 1
            continue
        predicate = gap
        consumed = 1
        if index + 2 < len(candidates):
            following = candidates[index + 2]
            tail_gap = text[int(right["end"]) : int(following["start"])].strip()
            if tail_gap in _PREPOSITIONS:
                predicate = f"{gap} {tail_gap} {following['text']}"
                consumed = 2
        relations.append({"src": left["text"], "predicate": predicate, "dst": right["text"], "confidence": 1.0})
        index += consumed
    return relations


def first_sentence(text: str) -> str:
    collapsed = " ".join(text.split())
    match = _SENTENCE.match(collapsed)
    return match.group(0).strip() if match else collapsed


def mock_answer(context: str) -> str:
    """First sentence of the first (highest-scored) context block."""
    blocks = [block for block in (context or "").split("\n\n") if block.strip()]
    if not blocks:
        return NO_CONTEXT_ANSWER
    return first_sentence(blocks[0])


@dataclass(frozen=True)
class CannedQuestion:
    question_id: str
    question: str
    variants: Tuple[str, ...]


PARAPHRASE_TABLE: Dict[str, CannedQuestion] = {
    "legal_photo": CannedQuestion(
        question_id="legal_photo",
        question="Can I be sued for sharing a photo on social media?",
        variants=(
            "Yes, if copyrighted",
            "No, unless consent is violated",
            "It depends on jurisdiction",
        ),
    ),
    "flu_symptoms": CannedQuestion(
        question_id="flu_symptoms",
        question="What are common influenza symptoms?",
        variants=(
            "Fever, cough, fatigue",
            "Symptoms include sore throat and body aches",
        ),
    ),
}


def canned_question(question: str) -> Optional[CannedQuestion]:
    # 日本語: ID もしくは質問文そのもので引く / English: Look up by id or by question text
    key = " ".join((question or "").split()).casefold()
    for entry in PARAPHRASE_TABLE.values():
        if key in {entry.question_id.casefold(), entry.question.casefold()}:
            return entry
    return None


def mock_paraphrase(question: str, seed: int, fallback: str) -> str:
    entry = canned_question(question)
    if entry is None:
        return fallback
    return entry.variants[seed % len(entry.variants)]


def mock_complete(request: PromptRequest) -> str:
    variables = request.variables
    template_id = request.template_id
    if template_id == "ner":
        return json.dumps(mock_ner(variables.get("text", "")))
    if template_id == "relation":
        try:
            mentions = json.loads(variables.get("mentions", "[]"))
        except json.JSONDecodeError:
            mentions = []
        return json.dumps(mock_relations(variables.get("text", ""), mentions if isinstance(mentions, list) else []))
    if template_id == "table_extract":
        return mock_table_extract(variables.get("text", ""))
    if template_id == "plan_synthesis":
        return mock_plan_synthesis(
            variables.get("question", ""),
            variables.get("catalog", ""),
            variables.get("reference_quarter", "Q4") or "Q4",
        )
    if template_id == "paraphrase":
        return mock_paraphrase(variables.get("question", ""), request.params.seed, variables.get("answer", ""))
    return mock_answer(variables.get("context", ""))


def token_bucket(token: str, dimension: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dimension


def mock_embedding(text: str, dimension: int = 256) -> np.ndarray:
    """Hashed bag of words, L2-normalized; blank text gives the zero vector."""
    vector = np.zeros(dimension, dtype=np.float64)
    for token in re.findall(r"[^\W_]+", (text or "").casefold()):
        vector[token_bucket(token, dimension)] += 1.0
    norm = np.linalg.norm(vector)
    if norm == 0.0:
        return vector
    return vector / norm
