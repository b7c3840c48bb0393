from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from review_advisor.corpus import Corpus, Review, filter_by_stars, load_reviews, write_reviews_jsonl
from review_advisor.errors import MalformedRecord

from conftest import write_reviews


def _row(i, stars, text="text"):
    return {"review_id": f"r{i}", "business_id": "b", "stars": stars, "text": f"{text} {i}"}


def test_loads_yelp_jsonl_in_order(tmp_path):
    path = write_reviews(tmp_path / "shop.jsonl", [_row(i, s) for i, s in enumerate([1, 2, 5])])
    corpus = load_reviews(path)
    assert [r.id for r in corpus] == ["r0", "r1", "r2"]
    assert corpus.source_label == "shop"
    assert corpus.reviews[1].stars == 2


def test_float_stars_accepted_when_integral(tmp_path):
    path = write_reviews(tmp_path / "a.jsonl", [_row(0, 4.0)])
    assert load_reviews(path).reviews[0].stars == 4


@pytest.mark.parametrize("bad", [0, 6, 2.5, "x", None, float("nan")])
def test_bad_stars_strict_raises(tmp_path, bad):
    path = tmp_path / "a.jsonl"
    path.write_text(json.dumps(_row(0, 1)) + "\n" + json.dumps(_row(1, bad)) + "\n")
    with pytest.raises(MalformedRecord) as exc:
        load_reviews(path)
    assert exc.value.line_no == 2


def test_lenient_collects_skips_and_keeps_going(tmp_path):
    path = tmp_path / "a.jsonl"
    lines = [json.dumps(_row(0, 1)), "{not json", json.dumps({**_row(2, 1), "text": "  "}), json.dumps(_row(3, 1))]
    path.write_text("\n".join(lines) + "\n")
    corpus = load_reviews(path, lenient=True)
    assert [r.id for r in corpus] == ["r0", "r3"]
    assert [s.line_no for s in corpus.skipped] == [2, 3]


def test_duplicate_ids_keep_first(tmp_path):
    path = write_reviews(tmp_path / "a.jsonl", [_row(0, 1, "first"), {**_row(0, 1, "second")}])
    corpus = load_reviews(path)
    assert len(corpus) == 1 and corpus.reviews[0].text.startswith("first")
    assert "duplicate" in corpus.skipped[0].reason


def test_csv_format(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text('id,business_id,stars,text,date\nx1,b,1,"multi\nline",2024-01-01\nx2,b,3,ok,\n')
    corpus = load_reviews(path, "csv", domain_label="restaurant")
    assert [r.id for r in corpus] == ["x1", "x2"]
    assert corpus.reviews[0].text == "multi\nline"
    assert corpus.reviews[1].date is None
    assert corpus.domain_label == "restaurant"


def test_csv_missing_columns(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text("id,text\n1,hi\n")
    with pytest.raises(MalformedRecord):
        load_reviews(path, "csv")


def test_unknown_format_and_missing_file(tmp_path):
    with pytest.raises(ValueError):
        load_reviews(tmp_path / "a.jsonl", "xml")
    with pytest.raises(FileNotFoundError):
        load_reviews(tmp_path / "nope.jsonl")


def test_filter_rejects_out_of_range():
    corpus = Corpus((Review("a", "b", 1, "t"),))
    with pytest.raises(ValueError):
        filter_by_stars(corpus, {0, 1})


def test_round_trip_dict_and_jsonl(tmp_path):
    reviews = (Review("a", "b", 1, "héllo", "2020-01-01"), Review("c", "b", 5, "bye"))
    corpus = Corpus(reviews, "src", "hospitality")
    assert Corpus.from_dict(json.loads(json.dumps(corpus.to_dict()))) == corpus
    write_reviews_jsonl(tmp_path / "x.jsonl", reviews)
    again = load_reviews(tmp_path / "x.jsonl", source_label="src", domain_label="hospitality")
    assert again == corpus


@given(st.lists(st.integers(1, 5), max_size=40), st.sets(st.integers(1, 5)))
def test_filter_is_order_preserving_subsequence(stars, allowed):
    corpus = Corpus(tuple(Review(f"r{i}", "b", s, "t") for i, s in enumerate(stars)))
    kept = filter_by_stars(corpus, allowed)
    assert [r.id for r in kept] == [r.id for r in corpus if r.stars in allowed]
    assert filter_by_stars(kept, allowed) == kept
