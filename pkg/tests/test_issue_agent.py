from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from review_advisor.clustering import Representative, RepresentativeSet
from review_advisor.errors import SchemaError
from review_advisor.issue_agent import IssueItem, extract_issues, flatten_issues, issue_id, parse_issue_map

from conftest import issue_map_violations, scripted

REPS = RepresentativeSet((Representative(1, "r1", "The shuttle was late.", 4, 0.9),), 1)


def test_valid_map_passes_through():
    raw = {"a": {"theme": "Billing", "issues": ["Double charge", "Hidden fees"]}, "b": {"theme": "Staff", "issues": ["Rude"]}}
    m = parse_issue_map(raw)
    assert m.to_json_shape() == raw
    assert m.repairs == ()


def test_repairs_are_applied_and_recorded():
    raw = {
        "a": {"theme": "Billing", "issues": ["x1", "x2", "x1", "x3", "x4", "x5", "x6", ""]},
        "b": {"theme": "billing ", "issues": ["y"]},
        "c": {"theme": "Staff", "issues": ["X2", "z"]},
        "d": {"theme": "Empty", "issues": ["x3"]},
    }
    m = parse_issue_map(raw)
    assert m.to_json_shape() == {
        "a": {"theme": "Billing", "issues": ["x1", "x2", "x3", "x4", "x5"]},
        "c": {"theme": "Staff", "issues": ["z"]},
    }
    assert len(m.repairs) >= 5
    assert issue_map_violations(m, raw) == []


def test_list_of_themes_gets_letter_keys():
    m = parse_issue_map([{"theme": "T", "issues": "single"}])
    assert m.themes[0].key == "a" and m.themes[0].issues == ("single",)


@pytest.mark.parametrize(
    "raw",
    [42, {"a": "nope"}, {"a": {"issues": ["x"]}}, {"a": {"theme": "T", "issues": 3}}, {"a": {"theme": "T", "issues": [1]}},
     {"a": {"theme": "T", "issues": []}}],
)
def test_unreadable_structures_raise(raw):
    with pytest.raises(SchemaError):
        parse_issue_map(raw)


def test_issue_ids_are_stable_and_distinct():
    assert issue_id("A", "b") == issue_id("A", "b") != issue_id("A", "c")
    assert IssueItem.create("A", "b").issue_id == issue_id("A", "b")
    assert len(issue_id("A", "b")) == 12


def test_extract_issues_repairs_bad_json():
    good = {"a": {"theme": "Shuttle", "issues": ["Late shuttle"]}}
    backend = scripted({"issue": ["I think the themes are...", "```json\n" + json.dumps(good) + "\n```"]})
    m, raw, parsed = extract_issues(backend, REPS)
    assert raw == good
    assert [i.issue for i in flatten_issues(m)] == ["Late shuttle"]
    assert len(parsed.repairs) == 1
    req = backend.log[0]
    assert req.tag == "issue" and req.temperature_override == 0.0
    assert '"The shuttle was late."' in req.user


issue_text = st.sampled_from([f"issue {i}" for i in range(12)] + ["Issue 1", " issue 2 "])
theme = st.fixed_dictionaries(
    {"theme": st.sampled_from(["Billing", "Staff", "billing", "Cars"]), "issues": st.lists(issue_text, min_size=1, max_size=9)}
)


@settings(max_examples=200, deadline=None)
@given(st.dictionaries(st.sampled_from("abcdef"), theme, min_size=1, max_size=6))
def test_fuzzed_maps_always_satisfy_rules(raw):
    m = parse_issue_map(raw)
    assert issue_map_violations(m, raw) == []
