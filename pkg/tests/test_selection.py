import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualnews.selection import head_truncate, max_worth, tfidf_select, tfidf_weights
from dualnews.textprep import Sentence
from tests.helpers import sentences_from_lengths
from tests.oracles import maxworth_brute

LENGTHS = [100, 200, 150, 300, 120]
SCORES = [0.1, 0.9, 0.5, 0.2, 0.8]


def test_max_worth_worked_example():
    sel = max_worth(sentences_from_lengths(LENGTHS), SCORES, 510)
    assert (sel.start_sentence, sel.end_sentence) == (4, 4)
    assert sel.mean_score == pytest.approx(0.8)
    assert sel.token_len == 120


def test_head_truncation_worked_example():
    sel = head_truncate(sentences_from_lengths(LENGTHS), 510)
    assert (sel.start_sentence, sel.end_sentence) == (0, 2)
    assert sel.token_len == 450


def test_ties_go_to_earliest_start():
    sel = max_worth(sentences_from_lengths([10, 10, 10]), [0.5, 0.5, 0.5], 10)
    assert sel.start_sentence == 0


def test_all_zero_scores_fall_back_to_start_zero():
    sel = max_worth(sentences_from_lengths([5, 5, 5, 5]), [0.0] * 4, 12)
    assert (sel.start_sentence, sel.end_sentence) == (0, 1)
    assert sel.mean_score == 0.0


def test_oversized_sentence_is_its_own_window():
    sel = max_worth(sentences_from_lengths([50, 700, 50]), [0.1, 0.9, 0.1], 510)
    assert (sel.start_sentence, sel.end_sentence) == (1, 1)
    assert sel.token_len == 700


def test_max_worth_input_errors():
    with pytest.raises(ValueError):
        max_worth([], [], 10)
    with pytest.raises(ValueError):
        max_worth(sentences_from_lengths([1, 2]), [0.1], 10)


def test_span_text_joins_selected_sentences():
    sents = [Sentence("One.", 0, 2), Sentence("Two.", 5, 2), Sentence("Three.", 10, 2)]
    sel = max_worth(sents, [0.1, 0.9, 0.8], 4)
    assert sel.text == "Two. Three."
    assert sel.indices == (1, 2)


def test_tfidf_weights_by_hand():
    sents = [Sentence("the cat sat", 0, 3), Sentence("the cat zebra", 12, 3), Sentence("the cat sat", 26, 3)]
    common = math.log(3 / 4) + 1  # df 3
    sat = math.log(3 / 3) + 1  # df 2
    zebra = math.log(3 / 2) + 1  # df 1
    w = tfidf_weights(sents)
    assert w[0] == pytest.approx((2 * common + sat) / 3, abs=1e-12)
    assert w[1] == pytest.approx((2 * common + zebra) / 3, abs=1e-12)
    assert w[2] == w[0]


def test_tfidf_rare_term_sentence_first_and_output_in_document_order():
    sents = [Sentence("the cat sat", 0, 3), Sentence("the cat zebra", 12, 3), Sentence("the cat sat", 26, 3)]
    assert tfidf_select(sents, 3).indices == (1,)
    sel = tfidf_select(sents, 6)
    assert sel.indices == (0, 1)
    assert sel.text == "the cat sat the cat zebra"


def test_tfidf_identical_sentences_give_prefix():
    sents = [Sentence("same words here", 16 * i, 3) for i in range(5)]
    assert tfidf_select(sents, 9).indices == (0, 1, 2)


def test_tfidf_takes_first_pick_even_if_oversized():
    sel = tfidf_select([Sentence("long sentence here", 0, 900)], 10)
    assert sel.indices == (0,)


@st.composite
def instances(draw):
    n = draw(st.integers(1, 30))
    lengths = draw(st.lists(st.integers(1, 400), min_size=n, max_size=n))
    # dyadic scores keep exact ties exact in floating point
    scores = draw(st.lists(st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]), min_size=n, max_size=n))
    budget = draw(st.sampled_from([64, 128, 510]))
    return lengths, scores, budget


@settings(max_examples=300, deadline=None)
@given(instances())
def test_max_worth_matches_brute_force_with_ties(inst):
    lengths, scores, budget = inst
    sel = max_worth(sentences_from_lengths(lengths), scores, budget)
    assert (sel.start_sentence, sel.end_sentence) == maxworth_brute(lengths, scores, budget)


@settings(max_examples=200, deadline=None)
@given(instances())
def test_selection_respects_budget_unless_single_sentence(inst):
    lengths, scores, budget = inst
    sents = sentences_from_lengths(lengths)
    for sel in (max_worth(sents, scores, budget), head_truncate(sents, budget), tfidf_select(sents, budget)):
        assert sel.token_len == sum(lengths[i] for i in sel.indices)
        assert sel.token_len <= budget or len(sel.indices) == 1
