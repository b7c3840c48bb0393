"""Run configuration: TOML loading, validation and the drift-checked snapshot."""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

from . import prompts, storage
from .advice_loop import LoopConfig
from .errors import ConfigDrift, ConfigError
from .gateway import BackendSpec, load_script

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

VARIANTS = ("full", "vanilla", "no_issue", "no_eval", "no_issue_no_eval")
DEFAULT_TEMPERATURES = {
    "issue": 0.0,
    "recommend": 0.2,
    "evaluate": 0.2,
    "rank": 0.2,
    "judge": 0.1,
    "vanilla": 0.2,
}
_SECRET_HINTS = ("key", "token", "secret", "password")


def normalize_variant(name: str) -> str:
    v = name.strip().lower().replace("-", "_")
    if v not in VARIANTS:
        raise ConfigError(f"unknown variant {name!r}; expected one of {', '.join(VARIANTS)}")
    return v


@dataclass(frozen=True)
class CorpusConfig:
    path: str
    format: str = "yelp-jsonl"
    stars: tuple[int, ...] = (1,)
    lenient: bool = False
    source_label: str | None = None
    domain_label: str = "other"


@dataclass(frozen=True)
class ClusterConfig:
    method: str = "kmeans"
    k: int = 12
    m: int = 5
    radius: float = 0.35
    min_samples: int = 3
    max_iter: int = 100


@dataclass(frozen=True)
class RunConfig:
    corpus: CorpusConfig
    backends: dict[str, BackendSpec]
    tracks: tuple[str, ...]
    judge_backend: str
    issue_backend: str | None = None
    ranker_backend: str | None = None
    evaluators: tuple[str, ...] | None = None
    variant: str = "full"
    label: str | None = None
    seed: int = 42
    embedding: dict[str, Any] = field(default_factory=lambda: {"kind": "hashed-local", "dim": 256, "seed": 0})
    clustering: ClusterConfig = ClusterConfig()
    loop: LoopConfig = LoopConfig()
    temperatures: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TEMPERATURES))
    business_context: str = ""
    max_workers: int = 4
    max_repairs: int = 2
    backend_script: str | None = None
    out_dir: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", normalize_variant(self.variant))
        self.validate()

    @property
    def uses_issue_agent(self) -> bool:
        return self.variant in ("full", "no_eval")

    @property
    def uses_evaluation(self) -> bool:
        return self.variant in ("full", "no_issue")

    @property
    def display_label(self) -> str:
        return self.label or self.variant

    def evaluator_for(self, i: int) -> str:
        return self.evaluators[i] if self.evaluators else self.tracks[i]

    def validate(self) -> None:
        def need(name: str | None, role: str) -> None:
            if not name:
                raise ConfigError(f"variant {self.variant!r} needs a {role} backend")
            if name not in self.backends:
                raise ConfigError(f"{role} backend {name!r} is not defined under [backends]")

        if not self.tracks:
            raise ConfigError("at least one track backend is required")
        for t in self.tracks:
            need(t, "track")
        need(self.judge_backend, "judge")
        if self.variant != "vanilla":
            if not 1 <= len(self.tracks) <= 5:
                raise ConfigError("between 1 and 5 tracks may be configured")
            if self.evaluators is not None:
                if len(self.evaluators) != len(self.tracks):
                    raise ConfigError("evaluators must list one backend per track")
                for e in self.evaluators:
                    need(e, "evaluator")
            if self.uses_issue_agent:
                need(self.issue_backend, "issue")
            if len(self.tracks) > 1:
                need(self.ranker_backend, "ranking")
        if self.clustering.k < 1 or self.clustering.m < 1:
            raise ConfigError("clustering k and m must be positive")
        if not set(self.corpus.stars) <= {1, 2, 3, 4, 5}:
            raise ConfigError("corpus.stars must be within 1..5")
        missing = set(DEFAULT_TEMPERATURES) - set(self.temperatures)
        if missing:
            raise ConfigError(f"temperatures missing roles {sorted(missing)}")

    def with_overrides(self, **changes: Any) -> RunConfig:
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes) if changes else self

    def with_backend_script(self, path: str | Path) -> RunConfig:
        """Swap every backend for a scripted one reading ``path``."""
        path = str(Path(path).resolve())
        table = load_script(path)
        backends = {name: replace(spec, kind="scripted", script=table) for name, spec in self.backends.items()}
        return replace(self, backends=backends, backend_script=path)

    # -- snapshot ------------------------------------------------------------------

    def snapshot(self) -> dict:
        """JSON-ready record of everything that determines run output.

        Excludes ``out_dir`` so identical runs in different directories
        produce identical snapshots. Credential-like values are redacted.
        """
        corpus_path = Path(self.corpus.path)
        backends = {}
        for name in sorted(self.backends):
            spec = self.backends[name]
            entry = {
                "kind": spec.kind,
                "endpoint": spec.endpoint,
                "model": spec.model,
                "temperature": spec.temperature,
                "max_retries": spec.max_retries,
                "api_key_env": spec.api_key_env,
                "timeout": spec.timeout,
                "max_in_flight": spec.max_in_flight,
                "backoff_base": spec.backoff_base,
                "seed": spec.seed,
                "cycle": spec.cycle,
            }
            if spec.kind == "scripted" and self.backend_script is None:
                entry["script_sha256"] = storage.sha256_text(storage.dumps(spec.script or {}))
                entry["script_path"] = (spec.script or {}).get("_path")
            backends[name] = entry
        snap = {
            "variant": self.variant,
            "label": self.label,
            "seed": self.seed,
            "business_context": self.business_context,
            "max_repairs": self.max_repairs,
            "corpus": {
                "path": str(corpus_path),
                "sha256": storage.sha256_file(corpus_path) if corpus_path.is_file() else None,
                "format": self.corpus.format,
                "stars": sorted(self.corpus.stars),
                "lenient": self.corpus.lenient,
                "source_label": self.corpus.source_label,
                "domain_label": self.corpus.domain_label,
            },
            "embedding": dict(sorted(self.embedding.items())),
            "clustering": vars(self.clustering).copy(),
            "loop": {"weights": list(self.loop.weights), "eta": self.loop.eta, "t_max": self.loop.t_max},
            "temperatures": dict(sorted(self.temperatures.items())),
            "roles": {
                "tracks": list(self.tracks),
                "evaluators": list(self.evaluators) if self.evaluators else None,
                "issue": self.issue_backend,
                "ranker": self.ranker_backend,
                "judge": self.judge_backend,
            },
            "backends": backends,
            "backend_script": None
            if self.backend_script is None
            else {"path": self.backend_script, "sha256": storage.sha256_file(self.backend_script)},
            "prompts": {"version": prompts.PROMPT_VERSION, "fingerprint": prompts.fingerprint()},
        }
        return redact(snap)

    @classmethod
    def from_snapshot(cls, snap: dict, out_dir: str | None = None) -> RunConfig:
        data = {
            "variant": snap["variant"],
            "label": snap.get("label"),
            "seed": snap["seed"],
            "business_context": snap.get("business_context", ""),
            "max_repairs": snap.get("max_repairs", 2),
            "corpus": snap["corpus"],
            "embedding": snap["embedding"],
            "clustering": snap["clustering"],
            "loop": snap["loop"],
            "temperatures": snap["temperatures"],
            "roles": snap["roles"],
            "backends": copy.deepcopy(snap["backends"]),
        }
        script = snap.get("backend_script")
        if script:
            # substituted backends were never loaded from their own scripts
            for entry in data["backends"].values():
                entry["kind"], entry["script_path"] = "scripted", script["path"]
        cfg = from_dict(data, base_dir=Path("."))
        if script:
            cfg = cfg.with_backend_script(script["path"])
        return replace(cfg, out_dir=out_dir)


def redact(obj: Any) -> Any:
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            lk = str(k).lower()
            secret = any(h in lk for h in _SECRET_HINTS) and not lk.endswith("_env") and not lk.endswith("sha256")
            out[k] = "***" if secret and v not in (None, "") else redact(v)
        return out
    if isinstance(obj, list):
        return [redact(v) for v in obj]
    return obj


def snapshot_diff(stored: Any, current: Any, path: str = "") -> list[str]:
    if isinstance(stored, dict) and isinstance(current, dict):
        diffs = []
        for k in sorted(set(stored) | set(current)):
            sub = f"{path}.{k}" if path else str(k)
            if k not in stored or k not in current:
                diffs.append(f"{sub}: present in only one snapshot")
            else:
                diffs.extend(snapshot_diff(stored[k], current[k], sub))
        return diffs
    if stored != current:
        return [f"{path}: {stored!r} -> {current!r}"]
    return []


def check_drift(stored: dict, current: dict) -> None:
    diffs = snapshot_diff(stored, current)
    if diffs:
        raise ConfigDrift(diffs)


def _backend_spec(name: str, raw: dict, base_dir: Path, seed: int) -> BackendSpec:
    raw = dict(raw)
    kind = raw.get("kind", "remote")
    script = None
    if kind == "scripted":
        path = raw.get("script") or raw.get("script_path")
        if not path:
            raise ConfigError(f"scripted backend {name!r} needs a script file")
        path = (base_dir / path).resolve() if not Path(path).is_absolute() else Path(path)
        script = load_script(path)
        script["_path"] = str(path)
    try:
        return BackendSpec(
            name=name,
            kind=kind,
            endpoint=raw.get("endpoint", raw.get("base_url", "")),
            model=raw.get("model", ""),
            temperature=float(raw.get("temperature", 0.2)),
            max_retries=int(raw.get("max_retries", 3)),
            api_key_env=raw.get("api_key_env"),
            timeout=float(raw.get("timeout", 120.0)),
            max_in_flight=int(raw.get("max_in_flight", 4)),
            backoff_base=float(raw.get("backoff_base", 1.0)),
            seed=int(raw.get("seed", seed)),
            script=script,
            cycle=bool(raw.get("cycle", False)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def from_dict(data: dict, base_dir: Path | str = ".") -> RunConfig:
    """Build a :class:`RunConfig` from parsed TOML; relative paths resolve against ``base_dir``."""
    base_dir = Path(base_dir)
    data = copy.deepcopy(data)
    try:
        seed = int(data.get("seed", 42))
        corpus_raw = data["corpus"]
        cpath = Path(corpus_raw["path"])
        corpus = CorpusConfig(
            path=str(cpath if cpath.is_absolute() else (base_dir / cpath).resolve()),
            format=corpus_raw.get("format", "yelp-jsonl"),
            stars=tuple(int(s) for s in corpus_raw.get("stars", [1])),
            lenient=bool(corpus_raw.get("lenient", False)),
            source_label=corpus_raw.get("source_label"),
            domain_label=corpus_raw.get("domain_label", "other"),
        )
        roles = data.get("roles", {})
        backends = {name: _backend_spec(name, raw, base_dir, seed) for name, raw in data.get("backends", {}).items()}
        loop_raw = data.get("loop", {})
        loop = LoopConfig(
            weights=tuple(loop_raw.get("weights", (0.25, 0.25, 0.25, 0.25))),
            eta=float(loop_raw.get("eta", 3.5)),
            t_max=int(loop_raw.get("t_max", 3)),
        )
        clustering = ClusterConfig(**data.get("clustering", {}))
        temperatures = {**DEFAULT_TEMPERATURES, **data.get("temperatures", {})}
        evaluators = roles.get("evaluators")
        return RunConfig(
            corpus=corpus,
            backends=backends,
            tracks=tuple(roles.get("tracks", [])),
            evaluators=tuple(evaluators) if evaluators else None,
            issue_backend=roles.get("issue"),
            ranker_backend=roles.get("ranker"),
            judge_backend=roles.get("judge", ""),
            variant=data.get("variant", "full"),
            label=data.get("label"),
            seed=seed,
            embedding=dict(data.get("embedding", {"kind": "hashed-local", "dim": 256, "seed": 0})),
            clustering=clustering,
            loop=loop,
            temperatures=temperatures,
            business_context=data.get("business_context", ""),
            max_workers=int(data.get("max_workers", 4)),
            max_repairs=int(data.get("max_repairs", 2)),
            out_dir=data.get("out_dir"),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return from_dict(data, base_dir=path.parent)


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture file (``fixture_reviews.jsonl`` and friends)."""
    return Path(str(resources.files("review_advisor") / "data" / name))
