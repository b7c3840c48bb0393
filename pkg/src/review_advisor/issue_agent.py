"""Theme/issue extraction over the representative reviews."""

from __future__ import annotations

import hashlib
import logging
import string
from dataclasses import dataclass, field
from typing import Any

from . import prompts
from .clustering import RepresentativeSet
from .errors import SchemaError
from .gateway import Backend, ChatRequest, complete_parsed, extract_json

log = logging.getLogger(__name__)

MAX_ISSUES_PER_THEME = 5
ISSUE_TEMPERATURE = 0.0


@dataclass(frozen=True)
class Theme:
    key: str
    name: str
    issues: tuple[str, ...]


@dataclass(frozen=True)
class IssueMap:
    themes: tuple[Theme, ...] = ()
    repairs: tuple[str, ...] = field(default=(), compare=False)

    def to_json_shape(self) -> dict:
        """The ``{"a": {"theme": ..., "issues": [...]}}`` layout the agent is asked for."""
        return {t.key: {"theme": t.name, "issues": list(t.issues)} for t in self.themes}


@dataclass(frozen=True)
class IssueItem:
    theme: str
    issue: str
    issue_id: str

    @classmethod
    def create(cls, theme: str, issue: str) -> IssueItem:
        return cls(theme, issue, issue_id(theme, issue))


def issue_id(theme: str, issue: str) -> str:
    return hashlib.sha256(f"{theme}\x1f{issue}".encode("utf-8")).hexdigest()[:12]


def _norm(text: str) -> str:
    return " ".join(text.split()).casefold()


def build_issue_prompt(representatives: RepresentativeSet) -> ChatRequest:
    if len(representatives) == 0:
        raise ValueError("issue prompt needs at least one representative review")
    n = len(representatives)
    reviews = "\n\n".join(f'"{e.review_text}"' for e in representatives.entries)
    user = prompts.ISSUE.render(
        count=prompts.number_word(n), noun="review" if n == 1 else "reviews", reviews=reviews
    )
    return ChatRequest(user=user, temperature_override=ISSUE_TEMPERATURE, tag="issue", stream="issues")


def _entries(raw: Any) -> list[tuple[str, Any]]:
    if isinstance(raw, dict):
        return [(str(k), v) for k, v in raw.items()]
    if isinstance(raw, list):
        # tolerate a bare list of theme objects; assign keys a, b, c, ...
        letters = string.ascii_lowercase
        return [(letters[i] if i < 26 else f"t{i}", v) for i, v in enumerate(raw)]
    raise SchemaError("$", f"expected an object keyed by theme letters, got {type(raw).__name__}")


def parse_issue_map(raw: Any) -> IssueMap:
    """Validate the agent's JSON and enforce the theme/issue rules.

    Rule violations are repaired rather than rejected: repeated theme names
    are merged into the first, duplicate issues are kept once (under the
    first theme they appear in), themes are cut to five issues, and themes
    left empty are dropped. Every repair is recorded on ``IssueMap.repairs``.
    Structure that cannot be read raises :class:`SchemaError`.
    """
    repairs: list[str] = []
    themes: list[tuple[str, str, list[str]]] = []
    by_name: dict[str, int] = {}

    for key, value in _entries(raw):
        path = f"$.{key}"
        if not isinstance(value, dict):
            raise SchemaError(path, "theme entry must be an object")
        name = value.get("theme")
        if not isinstance(name, str) or not name.strip():
            raise SchemaError(f"{path}.theme", "missing or empty theme name")
        issues = value.get("issues", [])
        if isinstance(issues, str):
            issues = [issues]
        if not isinstance(issues, list):
            raise SchemaError(f"{path}.issues", "issues must be a list of strings")
        cleaned = []
        for i, issue in enumerate(issues):
            if not isinstance(issue, str):
                raise SchemaError(f"{path}.issues[{i}]", "issue must be a string")
            if not issue.strip():
                repairs.append(f"{path}.issues[{i}]: empty issue dropped")
                continue
            cleaned.append(issue.strip())
        name = name.strip()
        if _norm(name) in by_name:
            target = themes[by_name[_norm(name)]]
            repairs.append(f"{path}: repeated theme {name!r} merged into {target[0]!r}")
            target[2].extend(cleaned)
            continue
        by_name[_norm(name)] = len(themes)
        themes.append((key, name, cleaned))

    seen: dict[str, str] = {}
    result: list[Theme] = []
    for key, name, issues in themes:
        kept: list[str] = []
        for issue in issues:
            owner = seen.get(_norm(issue))
            if owner == key:
                repairs.append(f"{key}: duplicate issue {issue!r} merged")
                continue
            if owner is not None:
                repairs.append(f"{key}: issue {issue!r} already under theme {owner!r}; dropped")
                continue
            if len(kept) == MAX_ISSUES_PER_THEME:
                repairs.append(f"{key}: more than {MAX_ISSUES_PER_THEME} issues; {issue!r} truncated")
                continue
            kept.append(issue)
            seen[_norm(issue)] = key
        if not kept:
            repairs.append(f"{key}: theme {name!r} has no issues; dropped")
            continue
        result.append(Theme(key, name, tuple(kept)))

    if not result:
        raise SchemaError("$", "no themes with issues")
    for r in repairs:
        log.info("issue map repair: %s", r)
    return IssueMap(tuple(result), tuple(repairs))


def flatten_issues(issue_map: IssueMap) -> list[IssueItem]:
    return [IssueItem.create(t.name, issue) for t in issue_map.themes for issue in t.issues]


def extract_issues(backend: Backend, representatives: RepresentativeSet, *, max_repairs: int = 2):
    """Run the issue agent. Returns ``(IssueMap, raw_json, Parsed)``."""
    request = build_issue_prompt(representatives)
    holder: dict[str, Any] = {}

    def parse(text: str) -> IssueMap:
        raw = extract_json(text, expect=(dict, list))
        holder["raw"] = raw
        return parse_issue_map(raw)

    parsed = complete_parsed(backend, request, parse, max_repairs=max_repairs)
    return parsed.value, holder["raw"], parsed
