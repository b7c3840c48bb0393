"""Choose one final advice per issue among the surviving tracks."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from . import prompts
from .advice_loop import AdviceCandidate, EvaluatedAdvice, TrackResult, issue_slot
from .errors import AmbiguousChoice, OutputFormatError, ReviewAdvisorError
from .gateway import Backend, ChatRequest, complete_parsed, extract_json, sanitize
from .issue_agent import IssueItem

log = logging.getLogger(__name__)

RANK_TEMPERATURE = 0.2
SOLE_SURVIVOR = "sole survivor"
RANK_REPAIR = (
    'Respond again with only valid JSON of the form {"choice": <number of the best recommendation>, '
    '"reason": "<short justification>"}.'
)

_ORDINAL_VALUES = {w: i for i, w in enumerate(prompts.ORDINALS, start=1)}
_ORDINAL_VALUES.update({"1st": 1, "2nd": 2, "3rd": 3, "4th": 4, "5th": 5})
_ORDINAL_RE = re.compile(r"\b(" + "|".join(_ORDINAL_VALUES) + r")\b", re.I)
_NUMBERED_RE = re.compile(r"\b(?:option|choice|recommendation|advice|number|no\.?)\s*#?\s*([1-9])\b|#([1-9])\b", re.I)
_BARE_DIGIT_RE = re.compile(r"^\s*([1-9])\s*[.)]?\s*$")


@dataclass(frozen=True)
class FinalAdvice:
    issue_id: str
    theme: str
    issue: str
    chosen_track: str  # backend name of the chosen track
    chosen_label: str  # e.g. "track-2"
    choice_index: int  # 1-based position among live contenders
    advice: AdviceCandidate
    rationale: str
    contenders: tuple[EvaluatedAdvice, ...]
    failed_tracks: tuple[Mapping[str, Any], ...] = ()
    ranked_by: str | None = None

    def to_dict(self) -> dict:
        return {
            "issue_id": self.issue_id,
            "theme": self.theme,
            "issue": self.issue,
            "chosen_track": self.chosen_track,
            "chosen_label": self.chosen_label,
            "choice_index": self.choice_index,
            "rationale": self.rationale,
            "ranked_by": self.ranked_by,
            "advice": self.advice.to_dict(),
            "contenders": [c.to_dict() for c in self.contenders],
            "failed_tracks": [dict(f) for f in self.failed_tracks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> FinalAdvice:
        return cls(
            d["issue_id"],
            d["theme"],
            d["issue"],
            d["chosen_track"],
            d["chosen_label"],
            d["choice_index"],
            AdviceCandidate.from_dict(d["advice"]),
            d["rationale"],
            tuple(EvaluatedAdvice.from_dict(c) for c in d["contenders"]),
            tuple(d.get("failed_tracks", [])),
            d.get("ranked_by"),
        )


def build_ranking_prompt(
    item: IssueItem,
    contenders: Sequence[EvaluatedAdvice],
    *,
    stream: str = "",
    temperature: float = RANK_TEMPERATURE,
) -> ChatRequest:
    n = len(contenders)
    if not 2 <= n <= len(prompts.ORDINALS):
        raise ValueError(f"ranking needs 2 to {len(prompts.ORDINALS)} contenders, got {n}")
    ordinals = prompts.ORDINALS[:n]
    blocks = "\n\n".join(
        f"{word.capitalize()} recommendation:\n{c.final.numbered()}" for word, c in zip(ordinals, contenders)
    )
    user = prompts.RANKING.render(
        count=prompts.number_word(n),
        ordinals=prompts.or_list(ordinals),
        issue=issue_slot(item),
        theme=item.theme,
        blocks=blocks,
        choices=prompts.or_list([str(i) for i in range(1, n + 1)]),
    )
    return ChatRequest(user=user, temperature_override=temperature, tag="rank", stream=stream or item.issue_id)


def _structured_choice(obj: Mapping[str, Any], n: int) -> tuple[int, str]:
    lowered = {str(k).lower(): v for k, v in obj.items()}
    value = lowered.get("choice", lowered.get("best"))
    if isinstance(value, str):
        v = value.strip().lower()
        value = int(v) if v.isdigit() else _ORDINAL_VALUES.get(v)
    if isinstance(value, bool) or not isinstance(value, int):
        raise AmbiguousChoice(f"choice is not a number: {lowered.get('choice')!r}")
    if not 1 <= value <= n:
        raise AmbiguousChoice(f"choice {value} is outside 1..{n}")
    reason = lowered.get("reason", lowered.get("rationale", ""))
    return value, "" if reason is None else str(reason).strip()


def parse_choice(raw: str | Mapping[str, Any], n_contenders: int) -> tuple[int, str]:
    """Read the ranker's pick as ``(choice_index, rationale)``.

    JSON ``{"choice": k, "reason": ...}`` is preferred; otherwise exactly one
    distinct ordinal ("second", "option 2", ...) must appear in the text.
    """
    if isinstance(raw, Mapping):
        return _structured_choice(raw, n_contenders)
    try:
        obj = extract_json(raw, expect=dict)
    except OutputFormatError:
        obj = None
    if obj is not None and any(str(k).lower() in ("choice", "best") for k in obj):
        return _structured_choice(obj, n_contenders)

    text = sanitize(raw)
    found = {_ORDINAL_VALUES[m.group(1).lower()] for m in _ORDINAL_RE.finditer(text)}
    found |= {int(m.group(1) or m.group(2)) for m in _NUMBERED_RE.finditer(text)}
    bare = _BARE_DIGIT_RE.match(text)
    if bare:
        found.add(int(bare.group(1)))
    if len(found) != 1:
        raise AmbiguousChoice(f"expected one ordinal, found {sorted(found) or 'none'}")
    choice = found.pop()
    if not 1 <= choice <= n_contenders:
        raise AmbiguousChoice(f"choice {choice} is outside 1..{n_contenders}")
    because = re.search(r"\bbecause\b", text, re.I)
    rationale = text[because.end() :].strip() if because else text
    return choice, rationale


def select_final(
    item: IssueItem,
    contenders: Sequence[TrackResult],
    backend: Backend | None,
    *,
    temperature: float = RANK_TEMPERATURE,
    max_repairs: int = 2,
) -> FinalAdvice:
    live = [r for r in contenders if r.ok]
    failed = tuple(r.to_dict() for r in contenders if not r.ok)
    if not live:
        raise ReviewAdvisorError(f"issue {item.issue_id}: no surviving tracks to rank")
    advices = [r.advice for r in live]
    if len(live) == 1:
        log.warning("issue %s: only %s survived; selected without ranking", item.issue_id, live[0].track)
        choice, rationale, ranked_by = 1, SOLE_SURVIVOR, None
    else:
        if backend is None:
            raise ReviewAdvisorError("a ranking backend is required for two or more contenders")
        request = build_ranking_prompt(item, advices, temperature=temperature)
        parsed = complete_parsed(
            backend,
            request,
            lambda text: parse_choice(text, len(live)),
            instruction=RANK_REPAIR,
            max_repairs=max_repairs,
        )
        (choice, rationale), ranked_by = parsed.value, backend.name
    chosen = live[choice - 1]
    return FinalAdvice(
        issue_id=item.issue_id,
        theme=item.theme,
        issue=item.issue,
        chosen_track=chosen.backend,
        chosen_label=chosen.track,
        choice_index=choice,
        advice=chosen.advice.final,
        rationale=rationale,
        contenders=tuple(advices),
        failed_tracks=failed,
        ranked_by=ranked_by,
    )
