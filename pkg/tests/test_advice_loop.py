from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from review_advisor.advice_loop import (
    STOP_T_MAX,
    STOP_THRESHOLD,
    UNTHEMED,
    AdviceCandidate,
    EvaluatedAdvice,
    LoopConfig,
    RubricScores,
    Track,
    build_recommendation_prompt,
    issue_slot,
    parse_advice,
    parse_evaluation,
    refine,
    run_tracks,
    split_recommendations,
    weighted_score,
)
from review_advisor.errors import MissingScore, ScoreOutOfRange, TooFewRecommendations
from review_advisor.issue_agent import IssueItem

from conftest import scripted

ITEM = IssueItem.create("Shuttle", "Long waits")
FOUR = "1. a\n2. b\n3. c\n4. d"


def _eval(s, feedback="improve"):
    return json.dumps({"SRAC": list(s), "feedback": feedback})


@pytest.mark.parametrize(
    "srac, expected, passed",
    [((5, 5, 5, 4), 4.75, True), ((2, 3, 3, 5), 3.25, False), ((3, 2, 2, 3), 2.5, False), ((4, 4, 3, 3), 3.5, True)],
)
def test_weighted_score_defaults(srac, expected, passed):
    cfg = LoopConfig()
    rec = parse_evaluation({"SRAC": list(srac)}, cfg)
    assert rec.weighted == pytest.approx(expected, abs=1e-12)
    assert rec.passed is passed


def test_custom_weights():
    cfg = LoopConfig(weights=(0.4, 0.3, 0.2, 0.1), eta=4.0)
    assert weighted_score(RubricScores(5, 4, 3, 2), cfg.weights) == pytest.approx(4.0)


@pytest.mark.parametrize("kwargs", [{"weights": (0.5, 0.5, 0.5, 0.5)}, {"weights": (1, 0, 0)}, {"eta": 0.5}, {"t_max": 0}])
def test_loop_config_validation(kwargs):
    with pytest.raises(ValueError):
        LoopConfig(**kwargs)


def test_rubric_range():
    with pytest.raises(ScoreOutOfRange):
        RubricScores(0, 3, 3, 3)


@pytest.mark.parametrize(
    "raw",
    [{"S": 5, "R": 4, "A": "3", "C": 4.0}, {"specificity": 5, "relevance": 4, "actionability": 3, "concision": 4},
     {"scores": {"s": 5, "r": 4, "a": 3, "c": 4}}],
)
def test_evaluation_key_styles(raw):
    assert parse_evaluation(raw).scores == RubricScores(5, 4, 3, 4)


def test_evaluation_ignores_reported_weighted_total():
    rec = parse_evaluation({"SRAC": [1, 1, 1, 1], "weighted": 5.0})
    assert rec.weighted == 1.0 and not rec.passed


@pytest.mark.parametrize("raw", [{"SRAC": [5, 5, 5]}, {"S": 5}, {"SRAC": [5, 5, 5, 6]}, {"SRAC": [5, 5, 5, 4.5]}, []])
def test_evaluation_errors(raw):
    with pytest.raises((MissingScore, ScoreOutOfRange)):
        parse_evaluation(raw)


def test_parse_advice_formats():
    assert parse_advice(FOUR).recommendations == ("a", "b", "c", "d")
    assert parse_advice('["x", "y", "z"]').recommendations == ("x", "y", "z")
    bullets = "Here you go:\n- one\n  continued\n* two\n+ three\n\nThanks!"
    cand = parse_advice(bullets)
    assert cand.recommendations == ("one continued", "two", "three")
    assert any("preamble" in n for n in cand.repairs) and any("trailing" in n for n in cand.repairs)
    six = parse_advice("\n".join(f"{i}) item {i}" for i in range(1, 7)))
    assert len(six.recommendations) == 4
    with pytest.raises(TooFewRecommendations):
        parse_advice("1. only\n2. two")


def test_split_without_markers_is_single_block():
    assert split_recommendations("just   prose\nhere") == (["just prose here"], ["no list markers; single block"])


def test_candidate_bounds():
    with pytest.raises(TooFewRecommendations):
        AdviceCandidate("i", "t", 1, ("a", "b"), "")
    with pytest.raises(TooFewRecommendations):
        AdviceCandidate("i", "t", 1, ("a", "b", "c", " "), "")


def test_revision_prompt_only_with_prior_and_feedback():
    prior = parse_advice(FOUR)
    assert "previous recommendations" in build_recommendation_prompt(ITEM, "more detail", prior).user
    assert "previous recommendations" not in build_recommendation_prompt(ITEM, "", prior).user
    assert "previous recommendations" not in build_recommendation_prompt(ITEM).user


def test_pseudo_issue_slot_truncated():
    item = IssueItem.create(UNTHEMED, "x" * 900)
    assert len(issue_slot(item)) == 500
    assert issue_slot(ITEM) == "Long waits"


def test_refine_passes_on_second_round_and_carries_feedback():
    rec = scripted({"recommend": [FOUR, FOUR]})
    ev = scripted({"evaluate": [_eval((2, 3, 3, 5), "name owners"), _eval((5, 5, 5, 4), "")]})
    out = refine(ITEM, rec, ev, LoopConfig())
    assert len(out.trace) == 2 and out.stop_reason == STOP_THRESHOLD
    assert "name owners" in rec.log[1].user and "name owners" not in rec.log[0].user
    assert rec.log[0].stream == f"{ITEM.issue_id}/track-1"


def test_refine_hits_t_max():
    rec = scripted({"recommend": [FOUR]}, cycle=True)
    ev = scripted({"evaluate": [_eval((1, 1, 1, 1))]}, cycle=True)
    out = refine(ITEM, rec, ev, LoopConfig(t_max=4))
    assert len(out.trace) == 4 and out.stop_reason == STOP_T_MAX and not out.final_eval.passed


def test_refine_without_evaluation():
    rec = scripted({"recommend": [FOUR]})
    ev = scripted({})
    out = refine(ITEM, rec, ev, LoopConfig(), evaluate=False)
    assert len(out.trace) == 1 and out.final_eval is None and out.stop_reason == STOP_T_MAX
    assert ev.calls == 0


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.lists(st.lists(st.integers(1, 5), min_size=4, max_size=4), min_size=5, max_size=5))
def test_stopping_rule(t_max, sequence):
    cfg = LoopConfig(t_max=t_max)
    rec = scripted({"recommend": [FOUR]}, cycle=True)
    ev = scripted({"evaluate": [_eval(s) for s in sequence]})
    out = refine(ITEM, rec, ev, cfg)
    passes = [weighted_score(RubricScores(*s), cfg.weights) >= cfg.eta for s in sequence[:t_max]]
    expected = passes.index(True) + 1 if True in passes else t_max
    assert len(out.trace) == expected
    assert not any(step.passed for step in out.trace[:-1])


def test_evaluated_advice_round_trip():
    rec = scripted({"recommend": [FOUR, FOUR]})
    ev = scripted({"evaluate": [_eval((2, 2, 2, 2)), _eval((5, 5, 5, 5))]})
    out = refine(ITEM, rec, ev, LoopConfig())
    assert EvaluatedAdvice.from_dict(json.loads(json.dumps(out.to_dict()))) == out


def test_run_tracks_isolates_failures_and_reuses_completed():
    good = scripted({"recommend": [FOUR], "evaluate": [_eval((5, 5, 5, 5))]}, name="good")
    bad = scripted({"recommend": ["nope", "still nope", "no"]}, name="bad")
    tracks = [Track("track-1", good, good), Track("track-2", bad, bad)]
    results = run_tracks(ITEM, tracks, LoopConfig())
    assert [r.ok for r in results] == [True, False]
    assert "TooFewRecommendations" in results[1].error
    again = run_tracks(ITEM, tracks[:1], LoopConfig(), completed={"track-1": results[0].advice})
    assert again[0].advice == results[0].advice and good.calls == 2
