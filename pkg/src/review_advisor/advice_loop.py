"""Recommendation/evaluation refinement loop and the parallel advice tracks.

Each track alternates a recommendation call and an evaluation call. The
evaluator's four 1-5 scores (specificity, relevance, actionability,
concision) are combined locally into a weighted sum; the loop stops at the
first candidate whose sum reaches the threshold, or after ``t_max`` rounds.
"""

from __future__ import annotations

import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

from . import prompts
from .errors import MissingScore, ReviewAdvisorError, ScoreOutOfRange, TooFewRecommendations
from .gateway import Backend, ChatRequest, complete_parsed, extract_json, sanitize
from .issue_agent import IssueItem

log = logging.getLogger(__name__)

SRAC = ("S", "R", "A", "C")
_SRAC_NAMES = {
    "S": ("s", "specificity"),
    "R": ("r", "relevance"),
    "A": ("a", "actionability"),
    "C": ("c", "concision"),
}
MIN_RECS, MAX_RECS = 3, 4
UNTHEMED = "(unthemed)"
PSEUDO_ISSUE_CHARS = 500
STOP_THRESHOLD = "threshold"
STOP_T_MAX = "t_max"
RECOMMEND_TEMPERATURE = 0.2
EVALUATE_TEMPERATURE = 0.2
ADVICE_REPAIR = (
    "Respond again with only 3 to 4 recommendations as a numbered list, one per line, and no other text."
)
EVAL_REPAIR = (
    'Respond again with only valid JSON of the form {"SRAC": [S, R, A, C], "feedback": "..."} '
    "where each score is an integer from 1 to 5."
)


@dataclass(frozen=True)
class RubricScores:
    S: int
    R: int
    A: int
    C: int

    def __post_init__(self) -> None:
        for name in SRAC:
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or not 1 <= v <= 5:
                raise ScoreOutOfRange(f"{name} score must be an integer 1..5, got {v!r}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.S, self.R, self.A, self.C)


@dataclass(frozen=True)
class LoopConfig:
    weights: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    eta: float = 3.5
    t_max: int = 3

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.weights) != 4:
            raise ValueError("exactly four weights are required (S, R, A, C)")
        if any(w < 0 or w > 1 for w in self.weights):
            raise ValueError("weights must lie in [0, 1]")
        if abs(math.fsum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {math.fsum(self.weights)}")
        if not 1 <= self.eta <= 5:
            raise ValueError("eta must lie in [1, 5]")
        if isinstance(self.t_max, bool) or not isinstance(self.t_max, int) or self.t_max < 1:
            raise ValueError("t_max must be a positive integer")


def weighted_score(scores: RubricScores, weights: Sequence[float]) -> float:
    s = scores.as_tuple()
    return weights[0] * s[0] + weights[1] * s[1] + weights[2] * s[2] + weights[3] * s[3]


@dataclass(frozen=True)
class AdviceCandidate:
    issue_id: str
    track: str
    iteration: int
    recommendations: tuple[str, ...]
    raw_text: str
    repairs: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not MIN_RECS <= len(self.recommendations) <= MAX_RECS:
            raise TooFewRecommendations(f"need {MIN_RECS} to {MAX_RECS} recommendations, got {len(self.recommendations)}")
        if any(not r.strip() for r in self.recommendations):
            raise TooFewRecommendations("empty recommendation")

    def numbered(self) -> str:
        return numbered(self.recommendations)

    def to_dict(self) -> dict:
        return {
            "issue_id": self.issue_id,
            "track": self.track,
            "iteration": self.iteration,
            "recommendations": list(self.recommendations),
            "raw_text": self.raw_text,
            "repairs": list(self.repairs),
        }

    @classmethod
    def from_dict(cls, d: dict) -> AdviceCandidate:
        return cls(
            d["issue_id"], d["track"], d["iteration"], tuple(d["recommendations"]), d["raw_text"], tuple(d.get("repairs", []))
        )


@dataclass(frozen=True)
class EvaluationRecord:
    scores: RubricScores
    feedback: str
    weighted: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "scores": dict(zip(SRAC, self.scores.as_tuple())),
            "feedback": self.feedback,
            "weighted": self.weighted,
            "passed": self.passed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> EvaluationRecord:
        return cls(RubricScores(**d["scores"]), d["feedback"], d["weighted"], d["passed"])


@dataclass(frozen=True)
class Iteration:
    candidate: AdviceCandidate
    evaluation: EvaluationRecord | None

    @property
    def passed(self) -> bool:
        return self.evaluation is not None and self.evaluation.passed

    def to_dict(self) -> dict:
        return {
            "candidate": self.candidate.to_dict(),
            "evaluation": None if self.evaluation is None else self.evaluation.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Iteration:
        ev = d.get("evaluation")
        return cls(AdviceCandidate.from_dict(d["candidate"]), None if ev is None else EvaluationRecord.from_dict(ev))


@dataclass(frozen=True)
class EvaluatedAdvice:
    issue_id: str
    track: str
    backend: str
    trace: tuple[Iteration, ...]
    stop_reason: str

    @property
    def final(self) -> AdviceCandidate:
        return self.trace[-1].candidate

    @property
    def final_eval(self) -> EvaluationRecord | None:
        return self.trace[-1].evaluation

    def to_dict(self) -> dict:
        return {
            "issue_id": self.issue_id,
            "track": self.track,
            "backend": self.backend,
            "stop_reason": self.stop_reason,
            "iterations": len(self.trace),
            "trace": [step.to_dict() for step in self.trace],
        }

    @classmethod
    def from_dict(cls, d: dict) -> EvaluatedAdvice:
        return cls(
            d["issue_id"], d["track"], d["backend"], tuple(Iteration.from_dict(s) for s in d["trace"]), d["stop_reason"]
        )


class RefinementError(ReviewAdvisorError):
    """A track failed mid-loop; ``trace`` holds the iterations completed so far."""

    def __init__(self, issue_id: str, track: str, trace: list[Iteration], cause: BaseException):
        super().__init__(f"{issue_id}/{track} failed after {len(trace)} iteration(s): {cause}")
        self.issue_id = issue_id
        self.track = track
        self.trace = tuple(trace)
        self.cause = cause


def numbered(items: Sequence[str]) -> str:
    return "\n".join(f"{i}. {text}" for i, text in enumerate(items, start=1))


def issue_slot(item: IssueItem) -> str:
    # Pseudo-issues carry a whole review; only the head goes into prompts.
    if item.theme == UNTHEMED and len(item.issue) > PSEUDO_ISSUE_CHARS:
        return item.issue[:PSEUDO_ISSUE_CHARS]
    return item.issue


def build_recommendation_prompt(
    item: IssueItem,
    feedback: str | None = None,
    prior: AdviceCandidate | None = None,
    *,
    stream: str = "",
    temperature: float = RECOMMEND_TEMPERATURE,
) -> ChatRequest:
    user = prompts.RECOMMENDATION.render(theme=item.theme, issue=issue_slot(item))
    if prior is not None and feedback and feedback.strip():
        user += prompts.REVISION.render(prior=prior.numbered(), feedback=feedback.strip())
    elif prior is not None or feedback:
        log.warning("%s: revision requested without both prior advice and feedback; sending first-round prompt", stream or item.issue_id)
    return ChatRequest(user=user, temperature_override=temperature, tag="recommend", stream=stream)


_MARKER = re.compile(r"^(\s*)(?:[-*•+]|\d{1,2}[.)]|\(\d{1,2}\))\s+(.*\S)\s*$")


def split_recommendations(text: str) -> tuple[list[str], list[str]]:
    """Split list-formatted text into items. Returns ``(items, notes)``.

    Lines without a marker continue the previous item unless a blank line
    separates them; text before the first marker or after a blank-line gap
    is dropped. Text with no markers at all comes back as one block.
    """
    items: list[str] = []
    notes: list[str] = []
    indent: int | None = None
    gap = False
    for line in text.splitlines():
        if not line.strip():
            gap = True
            continue
        m = _MARKER.match(line)
        if m and (indent is None or len(m.group(1)) <= indent):
            indent = len(m.group(1)) if indent is None else indent
            items.append(m.group(2).strip())
            gap = False
        elif items and not gap:
            items[-1] = f"{items[-1]} {line.strip()}"
        elif items:
            notes.append(f"trailing text ignored: {line.strip()[:60]!r}")
        elif indent is None and any(_MARKER.match(rest) for rest in text.splitlines()):
            notes.append(f"preamble ignored: {line.strip()[:60]!r}")
    if not items and text.strip():
        return [" ".join(text.split())], ["no list markers; single block"]
    return items, notes


def parse_advice(raw: str, *, issue_id: str = "", track: str = "", iteration: int = 1) -> AdviceCandidate:
    text = sanitize(raw)
    items: list[str] | None = None
    notes: list[str] = []
    if text.startswith("["):
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = None
        if isinstance(value, list) and value and all(isinstance(v, str) for v in value):
            items = [v.strip() for v in value if v.strip()]
    if items is None:
        items, notes = split_recommendations(text)
    if len(items) > MAX_RECS:
        notes.append(f"{len(items)} recommendations; truncated to {MAX_RECS}")
        items = items[:MAX_RECS]
    if len(items) < MIN_RECS:
        raise TooFewRecommendations(f"found {len(items)} recommendation(s); need {MIN_RECS} to {MAX_RECS}")
    return AdviceCandidate(issue_id, track, iteration, tuple(items), raw, tuple(notes))


def build_evaluation_prompt(
    advice: AdviceCandidate,
    item: IssueItem,
    *,
    stream: str = "",
    temperature: float = EVALUATE_TEMPERATURE,
) -> ChatRequest:
    user = prompts.EVALUATION.render(advice="\n" + advice.numbered() + "\n", issue=issue_slot(item), theme=item.theme)
    return ChatRequest(user=user, temperature_override=temperature, tag="evaluate", stream=stream)


def _lookup(raw: Mapping[str, Any], names: Sequence[str]) -> Any:
    lowered = {str(k).strip().lower(): v for k, v in raw.items()}
    for n in names:
        if n in lowered:
            return lowered[n]
    return None


def _as_score(name: str, value: Any) -> int:
    if isinstance(value, str):
        try:
            value = float(value.strip())
        except ValueError:
            raise ScoreOutOfRange(f"{name} score is not a number: {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScoreOutOfRange(f"{name} score is not a number: {value!r}")
    if not math.isfinite(value) or value != int(value) or not 1 <= value <= 5:
        raise ScoreOutOfRange(f"{name} score must be an integer 1..5, got {value!r}")
    return int(value)


def parse_evaluation(raw: Any, cfg: LoopConfig | None = None) -> EvaluationRecord:
    """Validate evaluator JSON and recompute the weighted sum locally.

    Accepts ``{"SRAC": [s, r, a, c]}`` or one key per score (letter or full
    name). Any weighted total the model reports is ignored.
    """
    cfg = cfg or LoopConfig()
    if not isinstance(raw, Mapping):
        raise MissingScore(f"evaluation must be a JSON object, got {type(raw).__name__}")
    srac = _lookup(raw, ("srac", "scores"))
    if isinstance(srac, Mapping):
        raw, srac = srac, None
    if srac is not None:
        if not isinstance(srac, list) or len(srac) != 4:
            raise MissingScore(f"SRAC must be a list of four scores, got {srac!r}")
        values = [_as_score(n, v) for n, v in zip(SRAC, srac)]
    else:
        values = []
        for n in SRAC:
            v = _lookup(raw, _SRAC_NAMES[n])
            if v is None:
                raise MissingScore(f"missing {_SRAC_NAMES[n][1]} score")
            values.append(_as_score(n, v))
    scores = RubricScores(*values)
    feedback = _lookup(raw, ("feedback", "explanation"))
    feedback = "" if feedback is None else str(feedback).strip()
    weighted = weighted_score(scores, cfg.weights)
    return EvaluationRecord(scores, feedback, weighted, weighted >= cfg.eta)


def refine(
    item: IssueItem,
    rec_backend: Backend,
    eval_backend: Backend,
    cfg: LoopConfig,
    *,
    track: str = "track-1",
    evaluate: bool = True,
    max_repairs: int = 2,
    temperatures: Mapping[str, float] | None = None,
    on_iteration: Callable[[Iteration], None] | None = None,
) -> EvaluatedAdvice:
    """Run one track's loop for ``item``.

    Round ``t`` asks for advice conditioned on round ``t-1``'s feedback (none
    in round 1), then scores it. With ``evaluate=False`` a single
    unevaluated round is produced and recorded as stopping at the cap.
    """
    temps = {"recommend": RECOMMEND_TEMPERATURE, "evaluate": EVALUATE_TEMPERATURE, **(temperatures or {})}
    stream = f"{item.issue_id}/{track}"
    trace: list[Iteration] = []
    feedback: str | None = None
    prior: AdviceCandidate | None = None
    rounds = cfg.t_max if evaluate else 1
    stop = STOP_T_MAX
    try:
        for t in range(1, rounds + 1):
            request = build_recommendation_prompt(
                item, feedback, prior, stream=stream, temperature=temps["recommend"]
            )
            got = complete_parsed(
                rec_backend,
                request,
                lambda text: parse_advice(text, issue_id=item.issue_id, track=track, iteration=t),
                instruction=ADVICE_REPAIR,
                max_repairs=max_repairs,
            )
            candidate: AdviceCandidate = got.value
            if got.repairs:
                candidate = AdviceCandidate(
                    candidate.issue_id, track, t, candidate.recommendations, candidate.raw_text,
                    tuple(got.repairs) + candidate.repairs,
                )
            evaluation = None
            if evaluate:
                ereq = build_evaluation_prompt(candidate, item, stream=stream, temperature=temps["evaluate"])
                evaluation = complete_parsed(
                    eval_backend,
                    ereq,
                    lambda text: parse_evaluation(extract_json(text, expect=dict), cfg),
                    instruction=EVAL_REPAIR,
                    max_repairs=max_repairs,
                ).value
            step = Iteration(candidate, evaluation)
            trace.append(step)
            if on_iteration is not None:
                on_iteration(step)
            if step.passed:
                stop = STOP_THRESHOLD
                break
            feedback = evaluation.feedback if evaluation is not None else None
            prior = candidate
    except ReviewAdvisorError as exc:
        raise RefinementError(item.issue_id, track, trace, exc) from exc
    return EvaluatedAdvice(item.issue_id, track, rec_backend.name, tuple(trace), stop)


@dataclass(frozen=True)
class Track:
    label: str
    rec: Backend
    eval: Backend


@dataclass(frozen=True)
class TrackResult:
    track: str
    backend: str
    advice: EvaluatedAdvice | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.advice is not None

    def to_dict(self) -> dict:
        if self.advice is not None:
            return {"status": "ok", **self.advice.to_dict()}
        return {"status": "failed", "track": self.track, "backend": self.backend, "error": self.error}


def run_tracks(
    item: IssueItem,
    tracks: Sequence[Track],
    cfg: LoopConfig,
    *,
    evaluate: bool = True,
    max_workers: int = 3,
    completed: Mapping[str, EvaluatedAdvice] | None = None,
    on_iteration: Callable[[str, Iteration], None] | None = None,
    **refine_kwargs,
) -> list[TrackResult]:
    """Run every track for one issue; results keep the configured track order.

    A failing track is reported, not raised. Tracks listed in ``completed``
    are reused without calling any backend.
    """
    completed = completed or {}

    def one(track: Track) -> TrackResult:
        if track.label in completed:
            return TrackResult(track.label, track.rec.name, advice=completed[track.label])
        hook = None if on_iteration is None else (lambda step: on_iteration(track.label, step))
        try:
            advice = refine(
                item, track.rec, track.eval, cfg, track=track.label, evaluate=evaluate, on_iteration=hook, **refine_kwargs
            )
        except RefinementError as exc:
            log.warning("%s", exc)
            return TrackResult(track.label, track.rec.name, error=f"{type(exc.cause).__name__}: {exc.cause}")
        return TrackResult(track.label, track.rec.name, advice=advice)

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        results = list(pool.map(one, tracks))
    ok = sum(r.ok for r in results)
    if ok < len(results):
        log.warning("issue %s: %d of %d tracks succeeded", item.issue_id, ok, len(results))
    return results
