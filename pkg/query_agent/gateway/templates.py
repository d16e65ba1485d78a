"""Prompt templates for every model task."""

from __future__ import annotations

from string import Formatter
from typing import Dict, List, Mapping

from query_agent.core.errors import PromptTemplateError

# 日本語: すべてのタスクは JSON もしくは計画文法で応答させる / English: Every task answers in JSON or the plan grammar
PROMPT_TEMPLATES: Dict[str, str] = {
    "ner": (
        "Tag the named entities in the text below.\n"
        "Allowed types: person, org, product, time, place, metric, other.\n"
        'Answer with a JSON list of objects {{"text": ..., "type": ..., "start": ..., "end": ...}} '
        "where start/end are character offsets into the text and text equals text[start:end].\n\n"
        "Text:\n{text}"
    ),
    "relation": (
        "List the relationships stated between the entities mentioned in the text.\n"
        'Answer with a JSON list of objects {{"src": ..., "predicate": ..., "dst": ..., "confidence": ...}} '
        "where src and dst are exact entity surface forms from the mention list and confidence lies in [0, 1].\n\n"
        "Mentions:\n{mentions}\n\nText:\n{text}"
    ),
    "table_extract": (
        "Convert the facts in the text into a relational table.\n"
        "Target schema (empty means infer one):\n{schema}\n\n"
        'Answer with one JSON object {{"columns": [{{"name": ..., "type": "text|number|boolean|date", "unit": ...}}], '
        '"rows": [[...], ...]}}.\n\n'
        "Text:\n{text}"
    ),
    "plan_synthesis": (
        "Translate the question into one relational plan written in the plan grammar, "
        "for example Aggregate(group=[], aggs=[SUM(sales) AS total_sales], "
        'input=Filter(pred=(quarter = "Q3"), input=Scan(sales))).\n'
        'Relative phrases such as "last quarter" refer to {reference_quarter}.\n'
        "Answer with the plan only.\n\n"
        "Catalog:\n{catalog}\n\nQuestion:\n{question}\n{feedback}"
    ),
    "answer": (
        "Answer the question using only the context. Reply in one or two sentences.\n\n"
        "Context:\n{context}\n\nQuestion:\n{question}"
    ),
    "paraphrase": (
        "Rephrase the answer to the question in different words without changing its meaning.\n\n"
        "Question:\n{question}\n\nAnswer:\n{answer}"
    ),
}


def template_placeholders(template_id: str) -> List[str]:
    template = PROMPT_TEMPLATES.get(template_id)
    if template is None:
        raise PromptTemplateError(template_id, ["<unknown template>"])
    names: List[str] = []
    for _, field_name, _, _ in Formatter().parse(template):
        if field_name and field_name not in names:
            names.append(field_name)
    return names


def render_prompt(template_id: str, variables: Mapping[str, str]) -> str:
    """Fill a template; every placeholder must be bound."""
    placeholders = template_placeholders(template_id)
    missing = [name for name in placeholders if name not in variables]
    if missing:
        raise PromptTemplateError(template_id, missing)
    return PROMPT_TEMPLATES[template_id].format_map({name: str(variables[name]) for name in placeholders})
