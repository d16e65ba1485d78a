import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from query_agent.gateway.mock_backend import PARAPHRASE_TABLE
from query_agent.models.entropy_models import AnswerSample, EquivalenceOracle
from query_agent.services.entropy_service import (
    cluster_answers,
    cluster_probabilities,
    normalize_answer,
    semantic_entropy,
    uncertainty_report,
)

EXACT = EquivalenceOracle()


def _samples(texts):
    return [AnswerSample(index=index, text=text) for index, text in enumerate(texts)]


def _entropy(texts):
    return semantic_entropy(cluster_answers(_samples(texts), EXACT))


def test_normalize_answer_folds_case_punctuation_and_spacing():
    assert normalize_answer("  Yes,   if COPYRIGHTED!! ") == "yes if copyrighted"
    assert normalize_answer("¿Sí?") == "sí"


def test_identical_answers_have_zero_entropy():
    assert _entropy(["Paris", "paris.", " PARIS "]) == 0.0


def test_entropy_of_known_distributions():
    assert _entropy(["a", "b", "c"]) == pytest.approx(math.log2(3))
    assert _entropy(["a", "b", "c"]) == pytest.approx(1.584963, abs=1e-6)
    assert _entropy(["a", "a", "a", "b", "c"]) == pytest.approx(1.370951, abs=1e-6)


def test_clusters_keep_first_member_as_representative():
    clusters = cluster_answers(_samples(["No.", "yes", "NO", "Yes!"]), EXACT)

    assert [(c.representative.text, c.members) for c in clusters] == [("No.", (0, 2)), ("yes", (1, 3))]
    assert cluster_probabilities(clusters) == [0.5, 0.5]


def test_embedding_oracle_merges_reworded_answers(gateway):
    oracle = EquivalenceOracle(mode="embedding_cosine", threshold=0.8)

    clusters = cluster_answers(_samples(["Yes, if copyrighted", "yes if copyrighted!", "It depends on jurisdiction"]), oracle, gateway)

    assert [c.members for c in clusters] == [(0, 1), (2,)]


def test_embedding_oracle_groups_blank_and_punctuation_only_answers(gateway):
    oracle = EquivalenceOracle(mode="embedding_cosine")

    clusters = cluster_answers(_samples(["", "", "?!", "Paris"]), oracle, gateway)

    assert [c.members for c in clusters] == [(0, 1, 2), (3,)]
    assert semantic_entropy(cluster_answers(_samples(["", ""]), oracle, gateway)) == 0.0


def test_embedding_oracle_needs_a_gateway():
    with pytest.raises(ValueError):
        cluster_answers(_samples(["a"]), EquivalenceOracle(mode="embedding_cosine"))


def test_oracle_threshold_must_be_in_range():
    with pytest.raises(ValueError):
        EquivalenceOracle(threshold=0.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(["yes", "Yes!", "no", "maybe", "it depends"]), min_size=1, max_size=12), st.randoms())
def test_entropy_is_bounded_and_order_independent(texts, rng):
    shuffled = list(texts)
    rng.shuffle(shuffled)
    clusters = cluster_answers(_samples(texts), EXACT)

    value = semantic_entropy(clusters)

    assert 0.0 <= value <= math.log2(len(clusters)) + 1e-12
    assert value == _entropy(shuffled)


def test_legal_question_is_flagged_for_review(gateway):
    question = PARAPHRASE_TABLE["legal_photo"].question

    report = uncertainty_report(question, 5, EXACT, gateway, 1.0)

    assert report.entropy_bits == pytest.approx(1.521928, abs=1e-6)
    assert report.flag == "review"
    assert [c.size for c in report.clusters] == [2, 2, 1]
    assert report.answer == "Yes, if copyrighted"
    assert report.answer_cluster == 0
    assert report.to_dict()["clusters"][2]["member_texts"] == ["It depends on jurisdiction"]


def test_zero_temperature_answers_are_consistent(gateway):
    report = uncertainty_report(
        "Who supplies Product B?", 5, EXACT, gateway, 1.0, context="Globex supplies Product B.", temperature=0.0
    )

    assert report.entropy_bits == 0.0
    assert report.flag == "ok"
    assert report.answer == "Globex supplies Product B."


def test_flag_uses_strict_threshold(gateway):
    question = PARAPHRASE_TABLE["flu_symptoms"].question

    report = uncertainty_report(question, 2, EXACT, gateway, 1.0)

    assert report.entropy_bits == pytest.approx(1.0)
    assert report.flag == "ok"


def test_report_needs_two_samples(gateway):
    with pytest.raises(ValueError):
        uncertainty_report("anything", 1, EXACT, gateway, 1.0)
