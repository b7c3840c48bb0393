from __future__ import annotations

import json
from pathlib import Path

import pytest

from review_advisor.config import fixture_path, load_config
from review_advisor.gateway import BackendSpec, ScriptedBackend

GOLDEN = Path(__file__).parent / "golden"


def scripted(table: dict, name: str = "scripted", cycle: bool = False) -> ScriptedBackend:
    return ScriptedBackend(BackendSpec(name=name, kind="scripted", script=table, cycle=cycle))


def fixture_config(out_dir: Path, variant: str = "full", script: Path | None = None, **overrides):
    cfg = load_config(fixture_path("fixture_config.toml"))
    cfg = cfg.with_overrides(variant=variant, out_dir=str(out_dir), **overrides)
    return cfg.with_backend_script(script or fixture_path("fixture_script.json"))


def write_reviews(path: Path, rows: list[dict]) -> Path:
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


def tree_bytes(root: Path, skip: tuple[str, ...] = ()) -> dict[str, bytes]:
    return {
        p.relative_to(root).as_posix(): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.relative_to(root).as_posix() not in skip
    }


@pytest.fixture
def golden():
    def check(name: str, text: str) -> None:
        path = GOLDEN / name
        assert path.exists(), f"missing golden file {name}"
        assert text == path.read_text(encoding="utf-8")

    return check


def issue_map_violations(issue_map, raw) -> list[str]:
    """Every rule the extracted theme/issue map must satisfy, as a list of breaches."""
    problems = []
    norm = lambda s: " ".join(s.split()).casefold()  # noqa: E731
    source_issues = set()
    entries = raw.values() if isinstance(raw, dict) else raw
    for v in entries:
        issues = v.get("issues", [])
        for i in [issues] if isinstance(issues, str) else issues:
            source_issues.add(norm(i))
    names = [norm(t.name) for t in issue_map.themes]
    if len(set(names)) != len(names):
        problems.append("repeated theme")
    seen = set()
    for t in issue_map.themes:
        if not 1 <= len(t.issues) <= 5:
            problems.append(f"{t.name}: {len(t.issues)} issues")
        for i in t.issues:
            if norm(i) in seen:
                problems.append(f"issue repeated: {i}")
            seen.add(norm(i))
            if norm(i) not in source_issues:
                problems.append(f"invented issue: {i}")
    return problems


# -- acceptance reporting ----------------------------------------------------------------
# Tests marked ``@pytest.mark.criterion(n, "title")`` get one summary line each.

_CRITERIA: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, [title, True])
    entry[1] = entry[1] and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}")
