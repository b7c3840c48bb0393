"""Review ingestion and star-rating filters."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

from .errors import MalformedRecord

log = logging.getLogger(__name__)

FORMATS = ("yelp-jsonl", "csv")
DOMAINS = ("automotive", "restaurant", "hospitality", "other")
CSV_COLUMNS = ("id", "business_id", "stars", "text", "date")


@dataclass(frozen=True)
class Review:
    id: str
    business_id: str
    stars: int
    text: str
    date: str | None = None

    def __post_init__(self) -> None:
        if isinstance(self.stars, bool) or self.stars not in (1, 2, 3, 4, 5):
            raise ValueError(f"stars must be an integer in 1..5, got {self.stars!r}")
        if not self.text.strip():
            raise ValueError("review text is empty")


@dataclass(frozen=True)
class SkippedRecord:
    line_no: int
    reason: str


@dataclass(frozen=True)
class Corpus:
    reviews: tuple[Review, ...]
    source_label: str = ""
    domain_label: str = "other"
    skipped: tuple[SkippedRecord, ...] = field(default=())

    def __post_init__(self) -> None:
        ids = [r.id for r in self.reviews]
        if len(set(ids)) != len(ids):
            raise ValueError("review ids must be pairwise distinct")

    def __len__(self) -> int:
        return len(self.reviews)

    def __iter__(self) -> Iterator[Review]:
        return iter(self.reviews)

    @property
    def texts(self) -> list[str]:
        return [r.text for r in self.reviews]

    def to_dict(self) -> dict:
        return {
            "source_label": self.source_label,
            "domain_label": self.domain_label,
            "reviews": [asdict(r) for r in self.reviews],
            "skipped": [asdict(s) for s in self.skipped],
        }

    @classmethod
    def from_dict(cls, data: dict) -> Corpus:
        return cls(
            reviews=tuple(Review(**r) for r in data["reviews"]),
            source_label=data.get("source_label", ""),
            domain_label=data.get("domain_label", "other"),
            skipped=tuple(SkippedRecord(**s) for s in data.get("skipped", [])),
        )


def _coerce_stars(value: object) -> int:
    if isinstance(value, bool):
        raise ValueError(f"stars is not a number: {value!r}")
    if isinstance(value, str):
        value = value.strip()
        try:
            value = float(value)
        except ValueError:
            raise ValueError(f"stars is not a number: {value!r}") from None
    if not isinstance(value, (int, float)) or not math.isfinite(value) or value != int(value):
        raise ValueError(f"stars must be a whole number, got {value!r}")
    stars = int(value)
    if not 1 <= stars <= 5:
        raise ValueError(f"stars out of range 1..5: {stars}")
    return stars


def _yelp_records(path: Path) -> Iterator[tuple[int, dict | str]]:
    # Yields (line_no, fields) or (line_no, error reason).
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                yield line_no, f"invalid JSON: {exc.msg}"
                continue
            if not isinstance(obj, dict):
                yield line_no, "record is not a JSON object"
                continue
            yield line_no, {
                "id": obj.get("review_id"),
                "business_id": obj.get("business_id", ""),
                "stars": obj.get("stars"),
                "text": obj.get("text"),
                "date": obj.get("date"),
            }


def _csv_records(path: Path) -> Iterator[tuple[int, dict | str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return
        missing = [c for c in ("id", "stars", "text") if c not in reader.fieldnames]
        if missing:
            raise MalformedRecord(1, f"CSV header lacks columns {missing}")
        for row in reader:
            # line_num points at the last physical line of the record
            yield reader.line_num, {
                "id": row.get("id"),
                "business_id": row.get("business_id") or "",
                "stars": row.get("stars"),
                "text": row.get("text"),
                "date": row.get("date") or None,
            }


def _build_review(fields: dict) -> Review:
    rid = fields["id"]
    if not isinstance(rid, str) or not rid.strip():
        raise ValueError("missing or non-string review id")
    text = fields["text"]
    if not isinstance(text, str):
        raise ValueError("missing or non-string text")
    text = text.strip()
    if not text:
        raise ValueError("text is empty")
    if fields["stars"] is None:
        raise ValueError("missing stars")
    business_id = fields["business_id"]
    date = fields["date"]
    return Review(
        id=rid,
        business_id=str(business_id) if business_id is not None else "",
        stars=_coerce_stars(fields["stars"]),
        text=text,
        date=str(date) if date is not None else None,
    )


def load_reviews(
    path: str | Path,
    format: str = "yelp-jsonl",
    *,
    lenient: bool = False,
    source_label: str | None = None,
    domain_label: str = "other",
) -> Corpus:
    """Load a review file, preserving file order.

    In strict mode (the default) the first malformed record aborts the load
    with :class:`MalformedRecord`. With ``lenient=True`` bad records are
    collected into ``Corpus.skipped`` instead. Repeated ids keep the first
    occurrence.
    """
    path = Path(path)
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    if not path.is_file():
        raise FileNotFoundError(str(path))

    records = _yelp_records(path) if format == "yelp-jsonl" else _csv_records(path)
    reviews: list[Review] = []
    skipped: list[SkippedRecord] = []
    seen: set[str] = set()
    for line_no, fields in records:
        try:
            if isinstance(fields, str):
                raise ValueError(fields)
            review = _build_review(fields)
        except ValueError as exc:
            if not lenient:
                raise MalformedRecord(line_no, str(exc)) from None
            skipped.append(SkippedRecord(line_no, str(exc)))
            continue
        if review.id in seen:
            log.info("line %d: duplicate review id %r dropped", line_no, review.id)
            skipped.append(SkippedRecord(line_no, f"duplicate review id {review.id!r}"))
            continue
        seen.add(review.id)
        reviews.append(review)

    if skipped:
        log.warning("%s: skipped %d record(s)", path.name, len(skipped))
    return Corpus(
        reviews=tuple(reviews),
        source_label=source_label if source_label is not None else path.stem,
        domain_label=domain_label,
        skipped=tuple(skipped),
    )


def filter_by_stars(corpus: Corpus, allowed: Iterable[int]) -> Corpus:
    allowed = set(allowed)
    if not allowed <= {1, 2, 3, 4, 5}:
        raise ValueError(f"allowed star ratings must be within 1..5, got {sorted(allowed)}")
    return replace(corpus, reviews=tuple(r for r in corpus.reviews if r.stars in allowed))


def write_reviews_jsonl(path: str | Path, reviews: Iterable[Review]) -> None:
    """Write reviews in the yelp-jsonl layout (used for fixtures)."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in reviews:
            row = {"review_id": r.id, "business_id": r.business_id, "stars": r.stars, "text": r.text}
            if r.date is not None:
                row["date"] = r.date
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
