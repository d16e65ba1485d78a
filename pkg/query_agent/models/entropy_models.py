"""Answer sampling and semantic-entropy report types."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Literal, Tuple

OracleMode = Literal["exact_normalized", "embedding_cosine"]
ReviewFlag = Literal["ok", "review"]


@dataclass(frozen=True)
class AnswerSample:
    index: int
    text: str


@dataclass(frozen=True)
class EquivalenceOracle:
    mode: OracleMode = "exact_normalized"
    threshold: float = 0.8

    def __post_init__(self) -> None:
        if self.mode not in ("exact_normalized", "embedding_cosine"):
            raise ValueError(f"unknown equivalence mode {self.mode!r}")
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must lie in (0, 1]")


@dataclass(frozen=True)
class SemanticCluster:
    representative: AnswerSample
    members: Tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class EntropyReport:
    question: str
    samples: Tuple[AnswerSample, ...]
    clusters: Tuple[SemanticCluster, ...]
    probabilities: Tuple[float, ...]
    entropy_bits: float
    threshold_bits: float
    flag: ReviewFlag
    answer: str
    answer_cluster: int

    def to_dict(self) -> Dict[str, Any]:
        texts = {sample.index: sample.text for sample in self.samples}
        return {
            "question": self.question,
            "answer": self.answer,
            "answer_cluster": self.answer_cluster,
            "entropy_bits": self.entropy_bits,
            "threshold_bits": self.threshold_bits,
            "flag": self.flag,
            "clusters": [
                {
                    "representative": cluster.representative.text,
                    "members": list(cluster.members),
                    "member_texts": [texts[index] for index in cluster.members],
                    "probability": probability,
                }
                for cluster, probability in zip(self.clusters, self.probabilities)
            ],
        }
