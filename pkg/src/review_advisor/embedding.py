"""Review embeddings: a remote embeddings endpoint or a seeded n-gram hasher.

Vectors are plain 1-D ``numpy.float64`` arrays.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from . import storage
from .errors import DimensionMismatch, ProviderError, ProviderUnreachable, ZeroNormVector
from .transport import Backoff, TransportFailure, bearer_headers, post_json

log = logging.getLogger(__name__)

_WS = re.compile(r"\s+")


class EmbeddingProvider(Protocol):
    kind: str
    dim: int | None

    def identity(self) -> str: ...

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...


@dataclass(frozen=True)
class HashedLocalProvider:
    """Character n-gram feature hashing into ``dim`` buckets, L2-normalised.

    A pure function of (text, dim, seed, ngram): bucket indices come from a
    keyed BLAKE2b digest, so output bytes do not depend on the platform or on
    Python's per-process string hash salt.
    """

    dim: int = 256
    seed: int = 0
    ngram: int = 3
    kind: str = "hashed-local"

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.ngram < 1:
            raise ValueError("ngram must be positive")

    def identity(self) -> str:
        return f"hashed-local:n={self.ngram}:d={self.dim}:seed={self.seed}"

    def features(self, text: str) -> list[str]:
        padded = " " + _WS.sub(" ", text.lower()).strip() + " "
        n = self.ngram
        return [padded[i : i + n] for i in range(len(padded) - n + 1)]

    def _bucket(self, gram: str) -> int:
        digest = hashlib.blake2b(
            gram.encode("utf-8"), digest_size=8, key=f"seed:{self.seed}".encode()
        ).digest()
        return int.from_bytes(digest, "little") % self.dim

    def embed_one(self, text: str) -> np.ndarray:
        counts = np.zeros(self.dim, dtype=np.float64)
        for gram in self.features(text):
            counts[self._bucket(gram)] += 1.0
        # fsum keeps the norm independent of BLAS summation order
        norm = math.sqrt(math.fsum(float(c) * float(c) for c in counts))
        if norm == 0.0:
            raise ZeroNormVector(f"text {text[:40]!r} has no {self.ngram}-gram features")
        return counts / norm

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed_one(t) for t in texts]


@dataclass(frozen=True)
class RemoteEmbeddingProvider:
    """Client for ``POST {base_url}/embeddings`` speaking the common wire format."""

    base_url: str
    model: str
    api_key_env: str | None = None
    dim: int | None = None
    batch_size: int = 64
    max_in_flight: int = 4
    max_retries: int = 3
    timeout: float = 60.0
    backoff_base: float = 1.0
    seed: int = 0
    kind: str = "remote"

    def identity(self) -> str:
        return f"remote:{self.base_url.rstrip('/')}:{self.model}"

    @property
    def url(self) -> str:
        return self.base_url.rstrip("/") + "/embeddings"

    def _embed_chunk(self, chunk: list[str]) -> list[np.ndarray]:
        try:
            payload, _ = post_json(
                self.url,
                {"model": self.model, "input": chunk},
                headers=bearer_headers(self.api_key_env),
                max_retries=self.max_retries,
                backoff=Backoff(base=self.backoff_base, seed=self.seed),
                timeout=self.timeout,
            )
        except TransportFailure as exc:
            if exc.status is None:
                raise ProviderUnreachable(f"{self.url}: {exc}") from None
            raise ProviderError(exc.status, exc.body) from None
        try:
            data = payload["data"]
            if any("index" in d for d in data):
                data = sorted(data, key=lambda d: d["index"])
            vectors = [np.asarray(d["embedding"], dtype=np.float64) for d in data]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderError(200, f"unexpected response shape: {exc}") from None
        if len(vectors) != len(chunk):
            raise ProviderError(200, f"expected {len(chunk)} embeddings, got {len(vectors)}")
        return vectors

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        chunks = [list(texts[i : i + self.batch_size]) for i in range(0, len(texts), self.batch_size)]
        with ThreadPoolExecutor(max_workers=max(1, self.max_in_flight)) as pool:
            results = list(pool.map(self._embed_chunk, chunks))
        return [v for chunk in results for v in chunk]


class EmbeddingCache:
    """Content-addressed vector store persisted as a single JSON file.

    Keys are ``sha256(provider identity, text)``; writes are serialised.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._data: dict[str, list[float]] = {}
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                self._data = json.load(fh)

    @staticmethod
    def key(identity: str, text: str) -> str:
        return hashlib.sha256(f"{identity}\x00{text}".encode("utf-8")).hexdigest()

    def get(self, identity: str, text: str) -> np.ndarray | None:
        values = self._data.get(self.key(identity, text))
        return None if values is None else np.asarray(values, dtype=np.float64)

    def put_many(self, identity: str, texts: Sequence[str], vectors: Sequence[np.ndarray]) -> None:
        with self._lock:
            for text, vec in zip(texts, vectors):
                self._data[self.key(identity, text)] = [float(x) for x in vec]
            if self.path is not None:
                storage.write_text(self.path, json.dumps(self._data, sort_keys=True) + "\n")

    def __len__(self) -> int:
        return len(self._data)


def _validate(vectors: Sequence[np.ndarray], expected_dim: int | None) -> None:
    dims = {v.shape for v in vectors}
    if len(dims) > 1:
        raise DimensionMismatch(f"embedding lengths disagree: {sorted(d[0] for d in dims)}")
    for v in vectors:
        if v.ndim != 1 or v.size == 0:
            raise DimensionMismatch(f"embedding must be a non-empty 1-D vector, got shape {v.shape}")
        if expected_dim is not None and v.size != expected_dim:
            raise DimensionMismatch(f"expected dimension {expected_dim}, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("embedding contains NaN or Inf")


def embed_batch(
    provider: EmbeddingProvider, texts: Sequence[str], cache: EmbeddingCache | None = None
) -> list[np.ndarray]:
    """Embed ``texts`` in order, consulting and filling ``cache`` when given."""
    if not texts:
        return []
    for i, t in enumerate(texts):
        if not isinstance(t, str) or not t.strip():
            raise ValueError(f"text #{i} is empty")

    identity = provider.identity()
    out: list[np.ndarray | None] = [None] * len(texts)
    missing: dict[str, list[int]] = {}
    for i, t in enumerate(texts):
        hit = cache.get(identity, t) if cache is not None else None
        if hit is not None:
            out[i] = hit
        else:
            missing.setdefault(t, []).append(i)

    if missing:
        todo = list(missing)
        fresh = provider.embed(todo)
        if len(fresh) != len(todo):
            raise ProviderError(200, f"provider returned {len(fresh)} vectors for {len(todo)} texts")
        _validate(fresh, provider.dim)
        if cache is not None:
            cache.put_many(identity, todo, fresh)
        for t, vec in zip(todo, fresh):
            for i in missing[t]:
                out[i] = vec
        log.info("embedded %d new text(s), %d from cache", len(todo), len(texts) - sum(map(len, missing.values())))

    vectors = [v for v in out if v is not None]
    _validate(vectors, provider.dim)
    return vectors


def cosine_similarity(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroNormVector("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def make_provider(cfg: dict) -> EmbeddingProvider:
    kind = cfg.get("kind", "hashed-local")
    if kind == "hashed-local":
        return HashedLocalProvider(
            dim=int(cfg.get("dim", 256)), seed=int(cfg.get("seed", 0)), ngram=int(cfg.get("ngram", 3))
        )
    if kind == "remote":
        return RemoteEmbeddingProvider(
            base_url=cfg["base_url"],
            model=cfg["model"],
            api_key_env=cfg.get("api_key_env"),
            dim=cfg.get("dim"),
            batch_size=int(cfg.get("batch_size", 64)),
            max_in_flight=int(cfg.get("max_in_flight", 4)),
            max_retries=int(cfg.get("max_retries", 3)),
            timeout=float(cfg.get("timeout", 60.0)),
            backoff_base=float(cfg.get("backoff_base", 1.0)),
            seed=int(cfg.get("seed", 0)),
        )
    raise ValueError(f"unknown embedding provider kind {kind!r}")
