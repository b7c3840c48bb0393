from __future__ import annotations

import re

import pytest

from review_advisor import prompts
from review_advisor.advice_loop import AdviceCandidate, EvaluatedAdvice, Iteration, build_evaluation_prompt, build_recommendation_prompt
from review_advisor.clustering import Representative, RepresentativeSet
from review_advisor.issue_agent import IssueItem, build_issue_prompt
from review_advisor.judge import build_judge_request
from review_advisor.ranking import build_ranking_prompt

ITEM = IssueItem.create("Airport shuttle", "Long waits for the airport shuttle")
ADVICE = AdviceCandidate(ITEM.issue_id, "track-1", 1, ("Add a second shuttle.", "Post wait times.", "Text customers."), "")


def _reps(n):
    return RepresentativeSet(
        tuple(Representative(i + 1, f"r{i}", f"Review number {i} about the shuttle.", 3, 0.9) for i in range(n)), n
    )


def _contender(track):
    return EvaluatedAdvice(ITEM.issue_id, track, track, (Iteration(ADVICE, None),), "t_max")


RENDERED = {
    "issue_prompt.txt": lambda: build_issue_prompt(_reps(2)).user,
    "recommendation_prompt.txt": lambda: build_recommendation_prompt(ITEM).user,
    "revision_prompt.txt": lambda: build_recommendation_prompt(ITEM, "Be more specific.", ADVICE).user,
    "evaluation_prompt.txt": lambda: build_evaluation_prompt(ADVICE, ITEM).user,
    "ranking_prompt.txt": lambda: build_ranking_prompt(ITEM, [_contender("a"), _contender("b"), _contender("c")]).user,
    "judge_prompt.txt": lambda: build_judge_request(ADVICE.numbered(), "Car rental", "Theme: x\nIssue: y").user,
    "vanilla_prompt.txt": lambda: prompts.VANILLA.render(count="two", noun="reviews", reviews='"a"\n\n"b"'),
}


@pytest.mark.parametrize("name", sorted(RENDERED))
def test_rendered_prompt_matches_golden(name, golden):
    golden(name, RENDERED[name]())


@pytest.mark.parametrize("name", sorted(RENDERED))
def test_no_unfilled_slots(name):
    assert not re.search(r"\$[A-Za-z_]", RENDERED[name]())


def test_missing_slot_raises():
    with pytest.raises(KeyError):
        prompts.RECOMMENDATION.render(theme="t")


def test_registry_and_fingerprint_stable():
    assert set(prompts.REGISTRY) == {"issue", "recommendation", "revision", "evaluation", "ranking", "judge", "vanilla"}
    assert prompts.get("judge") is prompts.JUDGE
    assert prompts.fingerprint() == prompts.fingerprint()
    assert len(prompts.fingerprint()) == 16


def test_helpers():
    assert prompts.number_word(3) == "three" and prompts.number_word(42) == "42"
    assert prompts.or_list(["first"]) == "first"
    assert prompts.or_list(["first", "second", "third"]) == "first, second or third"


def test_single_review_uses_singular_noun():
    assert "one negative review from" in build_issue_prompt(_reps(1)).user


def test_few_shot_examples_are_the_four_anchor_vectors():
    import json

    examples = json.loads(prompts.EVALUATION_EXAMPLES)
    assert len(examples) == 8
    assert {tuple(e["SRAC"]) for e in examples} >= {(5, 5, 5, 4), (2, 3, 3, 5), (3, 2, 2, 3)}
