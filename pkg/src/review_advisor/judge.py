"""Eight-dimension LLM-as-a-judge scoring, 0-100 rescaling and run aggregation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence
from xml.sax.saxutils import escape

from . import prompts
from .errors import DuplicateDimension, EmptyRecords, MissingDimension, ScoreOutOfRange
from .gateway import Backend, ChatRequest, complete_parsed, extract_json
from .ranking import FinalAdvice

DIMENSIONS = (
    "actionability",
    "specificity",
    "feasibility",
    "expected_impact",
    "novelty",
    "non_redundancy",
    "bias",
    "reading_clarity",
)
JUDGE_TEMPERATURE = 0.1
NONE_PLACEHOLDER = "(none)"
JUDGE_REPAIR = (
    "Respond again with only the JSON object, giving an integer from 1 to 5 for each of: "
    + ", ".join(DIMENSIONS)
    + "."
)
CSV_COLUMNS = ("variant", "domain", "dimension", "mean")


def rescale(raw: int) -> float:
    """Map a 1-5 Likert rating linearly onto 0-100."""
    if isinstance(raw, bool) or not isinstance(raw, int) or not 1 <= raw <= 5:
        raise ScoreOutOfRange(f"rating must be an integer 1..5, got {raw!r}")
    return 100.0 * (raw - 1) / 4


@dataclass(frozen=True)
class DimensionRating:
    dimension: str
    raw: int
    scaled: float = field(init=False)

    def __post_init__(self) -> None:
        if self.dimension not in DIMENSIONS:
            raise ValueError(f"unknown dimension {self.dimension!r}")
        object.__setattr__(self, "scaled", rescale(self.raw))


def composite(ratings: Sequence[DimensionRating]) -> float:
    counts: dict[str, int] = {}
    for r in ratings:
        counts[r.dimension] = counts.get(r.dimension, 0) + 1
    dupes = sorted(d for d, c in counts.items() if c > 1)
    if dupes:
        raise DuplicateDimension(f"rated more than once: {dupes}")
    missing = [d for d in DIMENSIONS if d not in counts]
    if missing:
        raise MissingDimension(f"no rating for: {missing}")
    return math.fsum(r.scaled for r in ratings) / len(DIMENSIONS)


@dataclass(frozen=True)
class JudgeRecord:
    issue_id: str
    ratings: tuple[DimensionRating, ...]
    composite: float
    judge_backend: str
    theme: str = ""
    issue: str = ""

    def rating(self, dimension: str) -> DimensionRating:
        return next(r for r in self.ratings if r.dimension == dimension)

    def to_dict(self) -> dict:
        return {
            "issue_id": self.issue_id,
            "theme": self.theme,
            "issue": self.issue,
            "judge_backend": self.judge_backend,
            "raw": {r.dimension: r.raw for r in self.ratings},
            "scaled": {r.dimension: r.scaled for r in self.ratings},
            "composite": self.composite,
        }

    @classmethod
    def from_dict(cls, d: dict) -> JudgeRecord:
        ratings = tuple(DimensionRating(dim, d["raw"][dim]) for dim in DIMENSIONS)
        return cls(d["issue_id"], ratings, composite(ratings), d["judge_backend"], d.get("theme", ""), d.get("issue", ""))


def build_judge_request(
    recommendation: str, business_context: str, original_context: str, *, stream: str = ""
) -> ChatRequest:
    user = prompts.JUDGE.render(
        business_context=business_context.strip() or NONE_PLACEHOLDER,
        original_context=original_context.strip() or NONE_PLACEHOLDER,
        recommendation=recommendation,
    )
    return ChatRequest(user=user, temperature_override=JUDGE_TEMPERATURE, tag="judge", stream=stream)


def build_judge_prompt(advice: FinalAdvice, business_context: str, original_context: str) -> ChatRequest:
    return build_judge_request(advice.advice.numbered(), business_context, original_context, stream=advice.issue_id)


def _norm_key(key: Any) -> str:
    return str(key).strip().lower().replace("-", "_").replace(" ", "_")


def parse_ratings(raw: Any) -> tuple[DimensionRating, ...]:
    if not isinstance(raw, Mapping):
        raise MissingDimension(f"judge reply must be a JSON object, got {type(raw).__name__}")
    values = {_norm_key(k): v for k, v in raw.items()}
    nested = values.get("ratings") or values.get("scores")
    if isinstance(nested, Mapping):
        values = {_norm_key(k): v for k, v in nested.items()}
    missing = [d for d in DIMENSIONS if d not in values]
    if missing:
        raise MissingDimension(f"judge omitted: {missing}")
    ratings = []
    for dim in DIMENSIONS:
        v = values[dim]
        if isinstance(v, str) and v.strip().isdigit():
            v = int(v.strip())
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        if isinstance(v, bool) or not isinstance(v, int) or not 1 <= v <= 5:
            raise ScoreOutOfRange(f"{dim} rating must be an integer 1..5, got {v!r}")
        ratings.append(DimensionRating(dim, v))
    return tuple(ratings)


def judge_text(
    backend: Backend,
    recommendation: str,
    business_context: str,
    original_context: str,
    *,
    issue_id: str,
    theme: str = "",
    issue: str = "",
    max_repairs: int = 2,
) -> JudgeRecord:
    request = build_judge_request(recommendation, business_context, original_context, stream=issue_id)
    ratings = complete_parsed(
        backend,
        request,
        lambda text: parse_ratings(extract_json(text, expect=dict)),
        instruction=JUDGE_REPAIR,
        max_repairs=max_repairs,
    ).value
    return JudgeRecord(issue_id, ratings, composite(ratings), backend.name, theme, issue)


def judge_advice(
    backend: Backend, advice: FinalAdvice, business_context: str, original_context: str, **kwargs
) -> JudgeRecord:
    return judge_text(
        backend,
        advice.advice.numbered(),
        business_context,
        original_context,
        issue_id=advice.issue_id,
        theme=advice.theme,
        issue=advice.issue,
        **kwargs,
    )


@dataclass(frozen=True)
class JudgeReport:
    records: tuple[JudgeRecord, ...]
    metadata: Mapping[str, Any]

    @property
    def per_dimension_means(self) -> dict[str, float]:
        n = len(self.records)
        return {d: math.fsum(r.rating(d).scaled for r in self.records) / n for d in DIMENSIONS}

    @property
    def overall_composite_mean(self) -> float:
        return math.fsum(r.composite for r in self.records) / len(self.records)

    @property
    def variant(self) -> str:
        return str(self.metadata.get("label") or self.metadata.get("variant", ""))

    @property
    def domain(self) -> str:
        return str(self.metadata.get("domain_label", ""))

    def to_dict(self) -> dict:
        return {
            "metadata": dict(self.metadata),
            "n_records": len(self.records),
            "per_dimension_means": self.per_dimension_means,
            "overall_composite_mean": self.overall_composite_mean,
        }

    def csv_rows(self) -> list[tuple[str, str, str, float]]:
        rows = [(self.variant, self.domain, d, m) for d, m in self.per_dimension_means.items()]
        rows.append((self.variant, self.domain, "composite", self.overall_composite_mean))
        return rows

    def to_csv(self) -> str:
        return rows_to_csv(CSV_COLUMNS, self.csv_rows())


def aggregate(records: Iterable[JudgeRecord], metadata: Mapping[str, Any] | None = None) -> JudgeReport:
    records = tuple(records)
    if not records:
        raise EmptyRecords("cannot aggregate zero judge records")
    return JudgeReport(records, dict(metadata or {}))


def rows_to_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    # csv writes floats via repr(), so values round-trip exactly through float()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def heatmap_grid(reports: Sequence[JudgeReport]) -> tuple[list[str], list[list[float]]]:
    """Row labels (``variant / domain``) and a rows x dimensions matrix of means."""
    labels = [f"{r.variant} / {r.domain}" if r.domain else r.variant for r in reports]
    values = [[r.per_dimension_means[d] for d in DIMENSIONS] for r in reports]
    return labels, values


def heatmap_csv(reports: Sequence[JudgeReport]) -> str:
    rows = [(r.variant, r.domain, *[r.per_dimension_means[d] for d in DIMENSIONS]) for r in reports]
    return rows_to_csv(("variant", "domain", *DIMENSIONS), rows)


def _color(value: float) -> str:
    # 0 -> pale red, 100 -> deep green
    t = min(max(value / 100.0, 0.0), 1.0)
    r = round(239 + (26 - 239) * t)
    g = round(154 + (152 - 154) * t)
    b = round(154 + (80 - 154) * t)
    return f"#{r:02x}{g:02x}{b:02x}"


def render_heatmap_svg(row_labels: Sequence[str], values: Sequence[Sequence[float]], columns: Sequence[str] = DIMENSIONS) -> str:
    cell_w, cell_h, left, top = 92, 28, 220, 90
    width = left + cell_w * len(columns) + 10
    height = top + cell_h * len(row_labels) + 10
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">'
    ]
    for j, col in enumerate(columns):
        x = left + j * cell_w + cell_w / 2
        out.append(
            f'<text x="{x:.0f}" y="{top - 8}" text-anchor="start" transform="rotate(-35 {x:.0f} {top - 8})">{escape(col)}</text>'
        )
    for i, label in enumerate(row_labels):
        y = top + i * cell_h
        out.append(f'<text x="{left - 6}" y="{y + cell_h / 2 + 4:.0f}" text-anchor="end">{escape(label)}</text>')
        for j, v in enumerate(values[i]):
            x = left + j * cell_w
            out.append(f'<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" fill="{_color(v)}" stroke="#ffffff"/>')
            out.append(f'<text x="{x + cell_w / 2:.0f}" y="{y + cell_h / 2 + 4:.0f}" text-anchor="middle">{v:.1f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
