"""Answer sampling, semantic clustering and discrete semantic entropy."""

from __future__ import annotations

import logging
import math
import unicodedata
from typing import Dict, List, Sequence

from query_agent.gateway.model_gateway import ModelGateway, cosine_similarity
from query_agent.models.entropy_models import AnswerSample, EntropyReport, EquivalenceOracle, SemanticCluster
from query_agent.models.gateway_models import EmbeddingVector, PromptRequest, SamplingParams

logger = logging.getLogger("query_agent.entropy")


def normalize_answer(text: str) -> str:
    """Case-folded, punctuation stripped, whitespace collapsed."""
    kept = "".join(" " if unicodedata.category(char).startswith("P") else char for char in (text or "").casefold())
    return " ".join(kept.split())


def cluster_answers(
    samples: Sequence[AnswerSample],
    oracle: EquivalenceOracle,
    gateway: ModelGateway | None = None,
) -> List[SemanticCluster]:
    """Greedy sequential clustering against each cluster's representative."""
    if not samples:
        raise ValueError("cluster_answers needs at least one sample")
    if oracle.mode == "embedding_cosine" and gateway is None:
        raise ValueError("embedding equivalence needs a gateway")

    ordered = sorted(samples, key=lambda sample: sample.index)
    embeddings: Dict[int, EmbeddingVector] = {}
    normalized: Dict[int, str] = {}

    def _equivalent(sample: AnswerSample, representative: AnswerSample) -> bool:
        # 日本語: 正規化テキストが同じなら常に同値 / English: Identical normalized text is always equivalent
        if normalized[sample.index] == normalized[representative.index]:
            return True
        if oracle.mode == "exact_normalized":
            return False
        return cosine_similarity(embeddings[sample.index], embeddings[representative.index]) >= oracle.threshold

    for sample in ordered:
        normalized[sample.index] = normalize_answer(sample.text)
        if oracle.mode == "embedding_cosine":
            embeddings[sample.index] = gateway.embed(sample.text)  # type: ignore[union-attr]

    representatives: List[AnswerSample] = []
    members: List[List[int]] = []
    for sample in ordered:
        for position, representative in enumerate(representatives):
            if _equivalent(sample, representative):
                members[position].append(sample.index)
                break
        else:
            representatives.append(sample)
            members.append([sample.index])
    return [
        SemanticCluster(representative=representative, members=tuple(indexes))
        for representative, indexes in zip(representatives, members)
    ]


def cluster_probabilities(clusters: Sequence[SemanticCluster]) -> List[float]:
    total = sum(cluster.size for cluster in clusters)
    if total == 0:
        raise ValueError("clusters must cover at least one sample")
    return [cluster.size / total for cluster in clusters]


def semantic_entropy(clusters: Sequence[SemanticCluster]) -> float:
    """Shannon entropy in bits over cluster mass; exactly 0.0 for a single cluster."""
    probabilities = [p for p in cluster_probabilities(clusters) if p > 0.0]
    if len(probabilities) <= 1:
        return 0.0
    value = -math.fsum(p * math.log2(p) for p in probabilities)
    return min(max(value, 0.0), math.log2(len(probabilities)))


def uncertainty_report(
    question: str,
    n: int,
    oracle: EquivalenceOracle,
    gateway: ModelGateway,
    threshold_bits: float,
    *,
    context: str = "",
    temperature: float = 1.0,
    seed: int = 0,
) -> EntropyReport:
    """Sample n answers, cluster them and flag the result for review above the threshold."""
    if n < 2:
        raise ValueError("uncertainty_report needs at least 2 samples")
    request = PromptRequest(
        template_id="answer",
        variables={"context": context, "question": question},
        params=SamplingParams(temperature=temperature, seed=seed),
    )
    completions = gateway.sample_answers(request, n)
    samples = tuple(AnswerSample(index=index, text=completion.text) for index, completion in enumerate(completions))
    clusters = cluster_answers(samples, oracle, gateway)
    probabilities = cluster_probabilities(clusters)
    entropy_bits = semantic_entropy(clusters)
    flag = "review" if entropy_bits > threshold_bits else "ok"

    # 日本語: 最大クラスタ、同数なら代表番号の小さい方 / English: Largest cluster; ties go to the lowest representative index
    best = min(range(len(clusters)), key=lambda i: (-clusters[i].size, clusters[i].representative.index))
    logger.info(
        "Entropy %.6f bits over %d samples in %d clusters (flag=%s)", entropy_bits, len(samples), len(clusters), flag
    )
    return EntropyReport(
        question=question,
        samples=samples,
        clusters=tuple(clusters),
        probabilities=tuple(probabilities),
        entropy_bits=entropy_bits,
        threshold_bits=threshold_bits,
        flag=flag,
        answer=clusters[best].representative.text,
        answer_cluster=best,
    )
