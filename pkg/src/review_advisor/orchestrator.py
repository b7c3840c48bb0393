"""Stage runner: run directory layout, variants, resume and cross-run comparison."""

from __future__ import annotations

import logging
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Sequence

from . import prompts, storage
from .advice_loop import (
    UNTHEMED,
    EvaluatedAdvice,
    Iteration,
    Track,
    TrackResult,
    issue_slot,
    run_tracks,
    split_recommendations,
)
from .clustering import ClusterAssignment, RepresentativeSet, cluster, select_top_m
from .config import RunConfig, check_drift
from .corpus import Corpus, filter_by_stars, load_reviews
from .embedding import EmbeddingCache, embed_batch, make_provider
from .errors import IncompleteRun, ReviewAdvisorError, StageError
from .gateway import Backend, ChatRequest, make_backend, sanitize
from .issue_agent import IssueItem, extract_issues, flatten_issues
from .judge import DIMENSIONS, JudgeRecord, aggregate, heatmap_grid, judge_advice, judge_text, render_heatmap_svg, rows_to_csv
from .ranking import FinalAdvice, select_final

log = logging.getLogger(__name__)

CONFIG_FILE = "00_config.json"
STATE_FILE = "stages.json"
REPORT_FILE = "run_report.json"
VANILLA_ID = "vanilla"

# (stage name, number, primary artifacts)
_STAGES: dict[str, tuple[str, tuple[str, ...]]] = {
    "corpus": ("01", ("01_corpus.json",)),
    "embed": ("02", ("02_embeddings.cache",)),
    "cluster": ("03", ("03_clusters.json",)),
    "represent": ("04", ("04_representatives.json",)),
    "issues": ("05", ("05_issues.json", "05_issues.validated.json")),
    "pseudo_issues": ("05", ("05_pseudo_issues.json",)),
    "advice": ("06", ("06_advice",)),
    "vanilla": ("06", ("06_vanilla.json",)),
    "rank": ("07", ("07_final",)),
    "judge": ("08", ("08_judge", "report.csv", "heatmap.svg")),
}


def stages_for(variant: str) -> list[str]:
    head = ["corpus", "embed", "cluster", "represent"]
    if variant == "vanilla":
        return head + ["vanilla", "judge"]
    middle = ["issues"] if variant in ("full", "no_eval") else ["pseudo_issues"]
    return head + middle + ["advice", "rank", "judge"]


def resolve_stage(name: str, variant: str) -> str:
    """Accept a stage name (``cluster``) or number (``03``/``3``) for this variant."""
    order = stages_for(variant)
    key = name.strip().lower().replace("-", "_")
    if key in order:
        return key
    if key.isdigit():
        num = f"{int(key):02d}"
        for stage in order:
            if _STAGES[stage][0] == num:
                return stage
    raise ValueError(f"unknown stage {name!r} for variant {variant}; stages are {', '.join(order)}")


@dataclass
class RunReport:
    variant: str
    label: str
    status: str
    stages: dict[str, dict[str, Any]]
    issues: list[dict[str, Any]]
    calls: dict[str, int]
    judge: dict[str, Any] | None
    timing: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "label": self.label,
            "status": self.status,
            "stages": self.stages,
            "issues": self.issues,
            "calls": self.calls,
            "judge": self.judge,
            # wall-clock data lives under its own key so the rest is reproducible
            "timing": self.timing,
        }


class _Run:
    """Mutable state for one pass over a run directory."""

    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.backends: dict[str, Backend] = {name: make_backend(spec) for name, spec in cfg.backends.items()}
        self.state: dict[str, Any] = self._load_state()
        self.rerun_upstream = False

    # -- bookkeeping ---------------------------------------------------------------

    def _load_state(self) -> dict[str, Any]:
        path = self.out / STATE_FILE
        return storage.read_json(path) if path.exists() else {"stages": {}}

    def save_state(self) -> None:
        storage.write_json(self.out / STATE_FILE, self.state)

    def files_of(self, stage: str) -> list[Path]:
        files: list[Path] = []
        for rel in _STAGES[stage][1]:
            p = self.out / rel
            if p.is_dir():
                files.extend(sorted(f for f in p.rglob("*") if f.is_file() and not f.name.startswith(".")))
            elif p.exists():
                files.append(p)
        return files

    def is_complete(self, stage: str) -> bool:
        entry = self.state["stages"].get(stage)
        if entry is None:
            return False
        for rel, digest in entry["artifacts"].items():
            p = self.out / rel
            if not p.is_file() or storage.sha256_file(p) != digest:
                log.warning("stage %s: artifact %s missing or changed; re-running", stage, rel)
                return False
        return True

    def mark_complete(self, stage: str, calls: dict[str, int], extra: dict[str, Any] | None = None) -> None:
        artifacts = {f.relative_to(self.out).as_posix(): storage.sha256_file(f) for f in self.files_of(stage)}
        self.state["stages"][stage] = {"artifacts": artifacts, "calls": calls, **(extra or {})}
        self.save_state()

    def invalidate_from(self, stage: str) -> None:
        order = stages_for(self.cfg.variant)
        for later in order[order.index(stage) :]:
            self.state["stages"].pop(later, None)
        self.save_state()

    def call_counts(self) -> dict[str, int]:
        return {name: b.calls for name, b in sorted(self.backends.items())}

    def backend(self, name: str | None) -> Backend | None:
        return None if name is None else self.backends[name]

    # -- shared loaders --------------------------------------------------------------

    def corpus(self) -> Corpus:
        return Corpus.from_dict(storage.read_json(self.out / "01_corpus.json"))

    def representatives(self) -> RepresentativeSet:
        return RepresentativeSet.from_dict(storage.read_json(self.out / "04_representatives.json"))

    def items(self) -> list[IssueItem]:
        if self.cfg.variant in ("full", "no_eval"):
            data = storage.read_json(self.out / "05_issues.validated.json")
        else:
            data = storage.read_json(self.out / "05_pseudo_issues.json")
        return [IssueItem(d["theme"], d["issue"], d["issue_id"]) for d in data["items"]]

    def business_context(self, corpus: Corpus) -> str:
        if self.cfg.business_context:
            return self.cfg.business_context
        return f"{corpus.source_label} ({corpus.domain_label})"


# -- stages ------------------------------------------------------------------------------


def _stage_corpus(run: _Run) -> dict[str, Any]:
    c = run.cfg.corpus
    corpus = load_reviews(
        c.path, c.format, lenient=c.lenient, source_label=c.source_label, domain_label=c.domain_label
    )
    kept = filter_by_stars(corpus, c.stars)
    if len(kept) == 0:
        raise ReviewAdvisorError(f"no reviews with stars in {sorted(c.stars)} in {c.path}")
    storage.write_json(run.out / "01_corpus.json", kept.to_dict())
    return {"loaded": len(corpus), "kept": len(kept), "skipped": len(corpus.skipped)}


def _vectors(run: _Run, corpus: Corpus):
    provider = make_provider(run.cfg.embedding)
    cache = EmbeddingCache(run.out / "02_embeddings.cache")
    return embed_batch(provider, corpus.texts, cache)


def _stage_embed(run: _Run) -> dict[str, Any]:
    path = run.out / "02_embeddings.cache"
    if path.exists():
        # the cache only ever holds exact vectors; keep it rather than re-embedding
        log.info("reusing existing embedding cache %s", path)
    vectors = _vectors(run, run.corpus())
    return {"vectors": len(vectors), "dim": int(vectors[0].size)}


def _stage_cluster(run: _Run) -> dict[str, Any]:
    corpus = run.corpus()
    vectors = _vectors(run, corpus)
    cc = run.cfg.clustering
    k = cc.k
    if len(vectors) < k:
        log.warning("only %d reviews for k=%d; clustering with k=%d", len(vectors), k, len(vectors))
        k = len(vectors)
    assignment = cluster(
        vectors, k, run.cfg.seed, method=cc.method, max_iter=cc.max_iter, radius=cc.radius, min_samples=cc.min_samples
    )
    data = assignment.to_dict()
    data["requested_k"] = cc.k
    data["review_ids"] = [r.id for r in corpus.reviews]
    storage.write_json(run.out / "03_clusters.json", data)
    return {"k": assignment.k}


def _stage_represent(run: _Run) -> dict[str, Any]:
    corpus = run.corpus()
    vectors = _vectors(run, corpus)
    assignment = ClusterAssignment.from_dict(storage.read_json(run.out / "03_clusters.json"))
    reps = select_top_m(corpus, assignment, vectors, run.cfg.clustering.m)
    if len(reps) < run.cfg.clustering.m:
        log.warning("only %d representatives available for m=%d", len(reps), run.cfg.clustering.m)
    storage.write_json(run.out / "04_representatives.json", reps.to_dict())
    return {"representatives": len(reps)}


def _items_payload(items: Sequence[IssueItem]) -> list[dict[str, str]]:
    return [{"issue_id": i.issue_id, "theme": i.theme, "issue": i.issue} for i in items]


def _stage_issues(run: _Run) -> dict[str, Any]:
    reps = run.representatives()
    issue_map, raw, parsed = extract_issues(
        run.backend(run.cfg.issue_backend), reps, max_repairs=run.cfg.max_repairs
    )
    items = flatten_issues(issue_map)
    storage.write_json(run.out / "05_issues.json", raw)
    storage.write_json(
        run.out / "05_issues.validated.json",
        {
            "themes": issue_map.to_json_shape(),
            "items": _items_payload(items),
            "rule_repairs": list(issue_map.repairs),
            "format_repairs": list(parsed.repairs),
        },
    )
    return {"themes": len(issue_map.themes), "issues": len(items)}


def _stage_pseudo_issues(run: _Run) -> dict[str, Any]:
    items = [IssueItem.create(UNTHEMED, e.review_text) for e in run.representatives()]
    seen: set[str] = set()
    unique = []
    for item in items:
        if item.issue_id in seen:
            log.warning("representative text repeated; pseudo-issue %s kept once", item.issue_id)
            continue
        seen.add(item.issue_id)
        unique.append(item)
    storage.write_json(run.out / "05_pseudo_issues.json", {"items": _items_payload(unique)})
    return {"issues": len(unique)}


def _track_dir(run: _Run, item: IssueItem, label: str) -> Path:
    return run.out / "06_advice" / item.issue_id / label


def _stage_advice(run: _Run) -> dict[str, Any]:
    cfg = run.cfg
    items = run.items()
    tracks = [
        Track(f"track-{i + 1}", run.backends[name], run.backends[cfg.evaluator_for(i)])
        for i, name in enumerate(cfg.tracks)
    ]
    root = run.out / "06_advice"
    if run.rerun_upstream and root.exists():
        log.warning("upstream stages were re-run; discarding previous %s", root)
        shutil.rmtree(root)
    known = {i.issue_id for i in items}
    if root.exists():
        for stale in sorted(p for p in root.iterdir() if p.is_dir() and p.name not in known):
            log.warning("removing advice for unknown issue %s", stale.name)
            shutil.rmtree(stale)

    def one(item: IssueItem) -> list[TrackResult]:
        completed: dict[str, EvaluatedAdvice] = {}
        for t in tracks:
            tdir = _track_dir(run, item, t.label)
            final = tdir / "final.json"
            if final.exists():
                data = storage.read_json(final)
                if data.get("status") == "ok" and data.get("backend") == t.rec.name:
                    completed[t.label] = EvaluatedAdvice.from_dict(data)
                    continue
            if tdir.exists():
                log.warning("%s/%s: replacing partial artifacts %s", item.issue_id, t.label, sorted(p.name for p in tdir.iterdir()))
                shutil.rmtree(tdir)

        def on_iteration(label: str, step: Iteration) -> None:
            storage.write_json(_track_dir(run, item, label) / f"iter-{step.candidate.iteration}.json", step.to_dict())

        results = run_tracks(
            item,
            tracks,
            cfg.loop,
            evaluate=cfg.uses_evaluation,
            max_workers=len(tracks),
            completed=completed,
            on_iteration=on_iteration,
            max_repairs=cfg.max_repairs,
            temperatures=cfg.temperatures,
        )
        for r in results:
            storage.write_json(_track_dir(run, item, r.track) / "final.json", r.to_dict())
        return results

    with ThreadPoolExecutor(max_workers=max(1, cfg.max_workers)) as pool:
        all_results = list(pool.map(one, items))
    ok = sum(r.ok for results in all_results for r in results)
    return {"issues": len(items), "tracks_ok": ok, "tracks_failed": len(items) * len(tracks) - ok}


def _load_track_results(run: _Run, item: IssueItem) -> list[TrackResult]:
    results = []
    for i, name in enumerate(run.cfg.tracks):
        label = f"track-{i + 1}"
        path = _track_dir(run, item, label) / "final.json"
        if not path.exists():
            results.append(TrackResult(label, name, error="no final artifact"))
            continue
        data = storage.read_json(path)
        if data.get("status") == "ok":
            results.append(TrackResult(label, data["backend"], advice=EvaluatedAdvice.from_dict(data)))
        else:
            results.append(TrackResult(label, data.get("backend", name), error=data.get("error")))
    return results


def _stage_rank(run: _Run) -> dict[str, Any]:
    cfg = run.cfg
    items = run.items()
    ranker = run.backend(cfg.ranker_backend) if len(cfg.tracks) > 1 else None
    root = run.out / "07_final"
    if root.exists():
        shutil.rmtree(root)

    def one(item: IssueItem) -> dict[str, Any]:
        results = _load_track_results(run, item)
        try:
            final = select_final(
                item, results, ranker, temperature=cfg.temperatures["rank"], max_repairs=cfg.max_repairs
            )
            payload = {"status": "ok", **final.to_dict()}
        except ReviewAdvisorError as exc:
            log.warning("issue %s failed at ranking: %s", item.issue_id, exc)
            payload = {
                "status": "failed",
                "issue_id": item.issue_id,
                "theme": item.theme,
                "issue": item.issue,
                "error": f"{type(exc).__name__}: {exc}",
                "failed_tracks": [r.to_dict() for r in results if not r.ok],
            }
        storage.write_json(root / f"{item.issue_id}.json", payload)
        return payload

    with ThreadPoolExecutor(max_workers=max(1, cfg.max_workers)) as pool:
        payloads = list(pool.map(one, items))
    ok = sum(p["status"] == "ok" for p in payloads)
    return {"issues": len(items), "succeeded": ok, "failed": len(items) - ok}


def _vanilla_request(run: _Run, reps: RepresentativeSet) -> ChatRequest:
    n = len(reps)
    reviews = "\n\n".join(f'"{e.review_text}"' for e in reps.entries)
    user = prompts.VANILLA.render(count=prompts.number_word(n), noun="review" if n == 1 else "reviews", reviews=reviews)
    return ChatRequest(user=user, temperature_override=run.cfg.temperatures["vanilla"], tag="vanilla", stream=VANILLA_ID)


def _stage_vanilla(run: _Run) -> dict[str, Any]:
    reps = run.representatives()
    backend = run.backends[run.cfg.tracks[0]]
    response = backend.complete(_vanilla_request(run, reps))
    text = sanitize(response.text)
    if not text:
        raise ReviewAdvisorError(f"{backend.name} returned an empty vanilla answer")
    items, _ = split_recommendations(text)
    storage.write_json(
        run.out / "06_vanilla.json",
        {
            "backend": backend.name,
            "representatives": [e.review_id for e in reps.entries],
            "raw_text": response.text,
            "text": text,
            "recommendations": items,
        },
    )
    return {"recommendations": len(items)}


def _original_context(item: IssueItem) -> str:
    if item.theme == UNTHEMED:
        return f"Customer review: {issue_slot(item)}"
    return f"Theme: {item.theme}\nIssue: {item.issue}"


def _stage_judge(run: _Run) -> dict[str, Any]:
    cfg = run.cfg
    corpus = run.corpus()
    judge = run.backends[cfg.judge_backend]
    context = run.business_context(corpus)
    records: list[JudgeRecord] = []
    failures: list[dict[str, str]] = []

    if cfg.variant == "vanilla":
        data = storage.read_json(run.out / "06_vanilla.json")
        reviews = "\n\n".join(e.review_text for e in run.representatives().entries)
        try:
            records.append(
                judge_text(judge, data["text"], context, reviews, issue_id=VANILLA_ID, max_repairs=cfg.max_repairs)
            )
        except ReviewAdvisorError as exc:
            failures.append({"issue_id": VANILLA_ID, "error": f"{type(exc).__name__}: {exc}"})
    else:
        finals: list[FinalAdvice] = []
        for item in run.items():
            data = storage.read_json(run.out / "07_final" / f"{item.issue_id}.json")
            if data["status"] == "ok":
                finals.append(FinalAdvice.from_dict(data))

        def one(final: FinalAdvice) -> JudgeRecord | dict[str, str]:
            item = IssueItem(final.theme, final.issue, final.issue_id)
            try:
                return judge_advice(judge, final, context, _original_context(item), max_repairs=cfg.max_repairs)
            except ReviewAdvisorError as exc:
                log.warning("judge failed for %s: %s", final.issue_id, exc)
                return {"issue_id": final.issue_id, "error": f"{type(exc).__name__}: {exc}"}

        with ThreadPoolExecutor(max_workers=max(1, cfg.max_workers)) as pool:
            for result in pool.map(one, finals):
                (records if isinstance(result, JudgeRecord) else failures).append(result)

    metadata = {
        "variant": cfg.variant,
        "label": cfg.display_label,
        "domain_label": corpus.domain_label,
        "source_label": corpus.source_label,
        "judge_backend": judge.name,
        "failed": failures,
    }
    report = aggregate(records, metadata)
    storage.write_jsonl(run.out / "08_judge" / "records.jsonl", [r.to_dict() for r in records])
    storage.write_json(run.out / "08_judge" / "report.json", report.to_dict())
    storage.write_text(run.out / "report.csv", report.to_csv())
    labels, values = heatmap_grid([report])
    storage.write_text(run.out / "heatmap.svg", render_heatmap_svg(labels, values))
    return {"records": len(records), "failed": len(failures), "overall_composite_mean": report.overall_composite_mean}


_RUNNERS: dict[str, Callable[[_Run], dict[str, Any]]] = {
    "corpus": _stage_corpus,
    "embed": _stage_embed,
    "cluster": _stage_cluster,
    "represent": _stage_represent,
    "issues": _stage_issues,
    "pseudo_issues": _stage_pseudo_issues,
    "advice": _stage_advice,
    "vanilla": _stage_vanilla,
    "rank": _stage_rank,
    "judge": _stage_judge,
}


# -- public entry points -----------------------------------------------------------------


def _issue_outcomes(run: _Run) -> list[dict[str, Any]]:
    if run.cfg.variant == "vanilla":
        path = run.out / "06_vanilla.json"
        if not path.exists():
            return []
        return [{"issue_id": VANILLA_ID, "status": "ok", "chosen_track": storage.read_json(path)["backend"]}]
    try:
        items = run.items()
    except FileNotFoundError:
        return []
    outcomes = []
    for item in items:
        entry: dict[str, Any] = {"issue_id": item.issue_id, "theme": item.theme, "status": "pending"}
        path = run.out / "07_final" / f"{item.issue_id}.json"
        if path.exists():
            data = storage.read_json(path)
            entry["status"] = data["status"]
            if data["status"] == "ok":
                entry["chosen_track"] = data["chosen_track"]
                entry["chosen_label"] = data["chosen_label"]
            else:
                entry["error"] = data["error"]
        outcomes.append(entry)
    return outcomes


def _report(run: _Run, status: str, timing: dict[str, Any]) -> RunReport:
    order = stages_for(run.cfg.variant)
    stages: dict[str, dict[str, Any]] = {}
    calls: dict[str, int] = {}
    for stage in order:
        entry = run.state["stages"].get(stage)
        if entry is None:
            stages[stage] = {"status": "pending"}
            continue
        stages[stage] = {"status": "done", "artifacts": len(entry["artifacts"]), **entry.get("summary", {})}
        for name, n in entry["calls"].items():
            calls[name] = calls.get(name, 0) + n
    judge = None
    report_path = run.out / "08_judge" / "report.json"
    if "judge" in run.state["stages"] and report_path.exists():
        rep = storage.read_json(report_path)
        judge = {
            "report": "08_judge/report.json",
            "n_records": rep["n_records"],
            "overall_composite_mean": rep["overall_composite_mean"],
        }
    return RunReport(
        variant=run.cfg.variant,
        label=run.cfg.display_label,
        status=status,
        stages=stages,
        issues=_issue_outcomes(run),
        calls=dict(sorted(calls.items())),
        judge=judge,
        timing=timing,
    )


def run_pipeline(config: RunConfig, *, stop_after: str | None = None, rerun: Sequence[str] = ()) -> RunReport:
    """Execute (or continue) the stages for ``config.variant`` inside ``config.out_dir``.

    Stages already recorded as complete, with unchanged artifact checksums,
    are skipped. ``stop_after`` ends the pass after the named stage; ``rerun``
    forces the named stages (and everything after them) to execute again.
    """
    if not config.out_dir:
        raise ValueError("config.out_dir is required")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    snapshot = config.snapshot()
    cfg_path = out / CONFIG_FILE
    if cfg_path.exists():
        check_drift(storage.read_json(cfg_path), snapshot)
    else:
        storage.write_json(cfg_path, snapshot)

    run = _Run(config, out)
    order = stages_for(config.variant)
    last = resolve_stage(stop_after, config.variant) if stop_after else order[-1]
    forced = [resolve_stage(name, config.variant) for name in rerun]
    for stage in forced:
        run.invalidate_from(stage)
    forced_from = min((order.index(s) for s in forced), default=len(order))

    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    stage_seconds: dict[str, float] = {}
    status = "complete"
    for stage in order:
        if run.is_complete(stage):
            log.info("stage %s: complete, skipped", stage)
            stage_seconds[stage] = 0.0
        else:
            run.invalidate_from(stage)
            leftovers = [f.relative_to(out).as_posix() for f in run.files_of(stage)]
            if leftovers and stage not in ("embed", "advice") and order.index(stage) < forced_from:
                log.warning("stage %s: overwriting partial artifacts %s", stage, leftovers[:5])
            log.info("stage %s: running", stage)
            before = run.call_counts()
            t0 = time.perf_counter()
            try:
                summary = _RUNNERS[stage](run)
            except ReviewAdvisorError as exc:
                storage.write_json(
                    out / REPORT_FILE,
                    {**_report(run, "failed", {"started_at": started}).to_dict(), "error": str(exc)},
                )
                raise StageError(stage, exc) from exc
            stage_seconds[stage] = round(time.perf_counter() - t0, 3)
            after = run.call_counts()
            delta = {n: after[n] - before[n] for n in after if after[n] != before[n]}
            run.mark_complete(stage, delta, {"summary": summary})
            run.rerun_upstream = True
        if stage == last and stage != order[-1]:
            status = "partial"
            break

    timing = {
        "started_at": started,
        "finished_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "stage_seconds": stage_seconds,
    }
    report = _report(run, status, timing)
    storage.write_json(out / REPORT_FILE, report.to_dict())
    return report


def load_snapshot(out_dir: str | Path) -> dict:
    path = Path(out_dir) / CONFIG_FILE
    if not path.exists():
        raise IncompleteRun(f"{out_dir} has no {CONFIG_FILE}; nothing to resume")
    return storage.read_json(path)


def resume(
    out_dir: str | Path,
    config: RunConfig | None = None,
    *,
    backend_script: str | Path | None = None,
    rerun: Sequence[str] = (),
) -> RunReport:
    """Continue a run from its stored snapshot, raising ConfigDrift on mismatch."""
    stored = load_snapshot(out_dir)
    cfg = config if config is not None else RunConfig.from_snapshot(stored)
    if backend_script is not None:
        cfg = cfg.with_backend_script(backend_script)
    cfg = replace(cfg, out_dir=str(out_dir))
    check_drift(stored, cfg.snapshot())
    return run_pipeline(cfg, rerun=rerun)


def rejudge(out_dir: str | Path, *, backend_script: str | Path | None = None) -> RunReport:
    return resume(out_dir, backend_script=backend_script, rerun=["judge"])


# -- comparison --------------------------------------------------------------------------


@dataclass(frozen=True)
class RunSummary:
    out_dir: str
    variant: str
    domain: str
    records: tuple[JudgeRecord, ...]
    per_dimension_means: dict[str, float]
    composite: float


@dataclass(frozen=True)
class Comparison:
    runs: tuple[RunSummary, ...]

    @property
    def domains(self) -> list[str]:
        return list(dict.fromkeys(r.domain for r in self.runs))

    @property
    def variants(self) -> list[str]:
        return list(dict.fromkeys(r.variant for r in self.runs))

    def composite(self, variant: str, domain: str) -> float | None:
        for r in self.runs:
            if r.variant == variant and r.domain == domain:
                return r.composite
        return None

    def table_csv(self) -> str:
        """Variant rows by domain columns of composite means."""
        rows = []
        for v in self.variants:
            cells = [self.composite(v, d) for d in self.domains]
            rows.append([v, *("" if c is None else c for c in cells)])
        return rows_to_csv(["variant", *self.domains], rows)

    def deltas_csv(self) -> str:
        """Per-dimension means and their difference from the first run."""
        base = self.runs[0]
        rows = []
        for r in self.runs:
            for d in (*DIMENSIONS, "composite"):
                mean = r.composite if d == "composite" else r.per_dimension_means[d]
                ref = base.composite if d == "composite" else base.per_dimension_means[d]
                rows.append([r.variant, r.domain, d, mean, mean - ref])
        return rows_to_csv(["variant", "domain", "dimension", "mean", "delta_vs_first"], rows)

    def heatmap_svg(self) -> str:
        labels = [f"{r.variant} / {r.domain}" for r in self.runs]
        values = [[r.per_dimension_means[d] for d in DIMENSIONS] for r in self.runs]
        return render_heatmap_svg(labels, values)


def _summarize(out_dir: Path) -> RunSummary:
    report_path = out_dir / "08_judge" / "report.json"
    records_path = out_dir / "08_judge" / "records.jsonl"
    if not (report_path.is_file() and records_path.is_file()):
        raise IncompleteRun(f"{out_dir} has no completed judge stage")
    meta = storage.read_json(report_path)["metadata"]
    records = tuple(JudgeRecord.from_dict(d) for d in storage.read_jsonl(records_path))
    if not records:
        raise IncompleteRun(f"{out_dir} has no judge records")
    report = aggregate(records, meta)
    return RunSummary(
        str(out_dir), report.variant, report.domain, records, report.per_dimension_means, report.overall_composite_mean
    )


def compare_runs(dirs: Sequence[str | Path]) -> Comparison:
    if not dirs:
        raise ValueError("compare_runs needs at least one run directory")
    runs: list[RunSummary] = []
    seen: dict[tuple[str, str], int] = {}
    for d in dirs:
        s = _summarize(Path(d))
        key = (s.variant, s.domain)
        if key in seen:
            seen[key] += 1
            s = replace(s, variant=f"{s.variant} ({seen[key]})")
        else:
            seen[key] = 1
        runs.append(s)
    return Comparison(tuple(runs))


def write_comparison(comparison: Comparison, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    return [
        storage.write_text(out / "comparison.csv", comparison.table_csv()),
        storage.write_text(out / "comparison_dimensions.csv", comparison.deltas_csv()),
        storage.write_text(out / "comparison_heatmap.svg", comparison.heatmap_svg()),
    ]
