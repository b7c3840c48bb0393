"""Review clustering and centroid-nearest representative selection."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Corpus
from .errors import DimensionMismatch, TooFewPoints, ZeroNormCentroid, ZeroNormVector

log = logging.getLogger(__name__)

NOISE = -1
METHODS = ("kmeans", "density")
# Similarities within this distance of the best are treated as ties.
TIE_EPS = 1e-12


@dataclass(frozen=True)
class ClusterAssignment:
    labels: tuple[int, ...]
    k: int
    seed: int
    method: str = "kmeans"

    def sizes(self) -> dict[int, int]:
        return dict(Counter(label for label in self.labels if label != NOISE))

    def to_dict(self) -> dict:
        sizes = self.sizes()
        return {
            "method": self.method,
            "k": self.k,
            "seed": self.seed,
            "labels": list(self.labels),
            "sizes": {str(cid): sizes[cid] for cid in sorted(sizes)},
            "noise": sum(1 for label in self.labels if label == NOISE),
        }

    @classmethod
    def from_dict(cls, data: dict) -> ClusterAssignment:
        return cls(tuple(data["labels"]), data["k"], data["seed"], data.get("method", "kmeans"))


@dataclass(frozen=True)
class Representative:
    cluster_id: int
    review_id: str
    review_text: str
    cluster_size: int
    similarity: float


@dataclass(frozen=True)
class RepresentativeSet:
    entries: tuple[Representative, ...]
    m: int
    skipped_clusters: tuple[int, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "entries": [asdict(e) for e in self.entries],
            "skipped_clusters": list(self.skipped_clusters),
        }

    @classmethod
    def from_dict(cls, data: dict) -> RepresentativeSet:
        return cls(
            tuple(Representative(**e) for e in data["entries"]),
            data["m"],
            tuple(data.get("skipped_clusters", [])),
        )


def _unit_rows(vectors: Sequence[np.ndarray]) -> np.ndarray:
    try:
        X = np.vstack([np.asarray(v, dtype=np.float64) for v in vectors])
    except ValueError:
        raise DimensionMismatch("vectors do not share one dimension") from None
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise ZeroNormVector(f"vector #{int(np.argmin(norms))} has zero norm")
    return X / norms[:, None]


def _kmeans_pp(U: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    n = U.shape[0]
    chosen = [int(rng.integers(n))]
    for _ in range(1, k):
        best = (U @ U[chosen].T).max(axis=1)
        d2 = np.clip(1.0 - best, 0.0, None) ** 2
        total = d2.sum()
        if total <= 0:
            break  # every point coincides with a chosen centre
        chosen.append(int(rng.choice(n, p=d2 / total)))
    return chosen


def _spherical_kmeans(U: np.ndarray, k: int, seed: int, max_iter: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    centers = U[_kmeans_pp(U, k, rng)].copy()
    labels = None
    for _ in range(max_iter):
        new = np.argmax(U @ centers.T, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(centers.shape[0]):
            members = U[labels == j]
            if len(members) == 0:
                continue
            c = members.sum(axis=0)
            norm = np.linalg.norm(c)
            if norm > 0:
                centers[j] = c / norm
    return labels


def _density(U: np.ndarray, radius: float, min_samples: int) -> np.ndarray:
    n = U.shape[0]
    near = (1.0 - U @ U.T) <= radius
    neighbours = [np.flatnonzero(near[i]) for i in range(n)]
    core = np.array([len(nb) >= min_samples for nb in neighbours])
    labels = np.full(n, NOISE)
    cid = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = cid
        queue = [i]
        while queue:
            p = queue.pop(0)
            if not core[p]:
                continue
            for q in neighbours[p]:
                if labels[q] == NOISE:
                    labels[q] = cid
                    queue.append(int(q))
        cid += 1
    if cid == 0:
        # No dense region: fall back to the point with the most neighbours.
        i = int(np.argmax([len(nb) for nb in neighbours]))
        labels[neighbours[i]] = 0
    return labels


def cluster(
    vectors: Sequence[np.ndarray],
    k: int,
    seed: int,
    *,
    method: str = "kmeans",
    max_iter: int = 100,
    radius: float = 0.35,
    min_samples: int = 3,
) -> ClusterAssignment:
    """Label every vector with a cluster id in ``1..K`` (or NOISE in density mode).

    ``kmeans`` is spherical k-means with k-means++ seeding from ``seed``;
    clusters that end up empty are dropped, so the returned ``k`` may be
    smaller than requested. ``density`` groups points within cosine distance
    ``radius`` of at least ``min_samples`` neighbours and ignores ``k`` apart
    from the size precondition.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(vectors) < k:
        raise TooFewPoints(f"need at least k={k} vectors, got {len(vectors)}")
    if method not in METHODS:
        raise ValueError(f"unknown clustering method {method!r}")
    U = _unit_rows(vectors)
    raw = _spherical_kmeans(U, k, seed, max_iter) if method == "kmeans" else _density(U, radius, min_samples)

    # Relabel surviving clusters 1..K in order of their internal index.
    used = sorted({int(x) for x in raw if x != NOISE})
    remap = {old: new for new, old in enumerate(used, start=1)}
    labels = tuple(remap.get(int(x), NOISE) for x in raw)
    if method == "kmeans" and len(used) < k:
        log.info("k-means: %d of %d clusters empty and dropped", k - len(used), k)
    return ClusterAssignment(labels=labels, k=len(used), seed=seed, method=method)


def rank_clusters(assignment: ClusterAssignment) -> list[tuple[int, int]]:
    """Cluster ids with sizes, largest first; ties go to the lower id."""
    return sorted(assignment.sizes().items(), key=lambda item: (-item[1], item[0]))


def representative(cluster_members: Sequence[tuple[int, np.ndarray]]) -> tuple[int, float]:
    """Return ``(index, similarity)`` of the member most cosine-similar to the mean vector."""
    if not cluster_members:
        raise ValueError("cluster has no members")
    members = sorted(cluster_members, key=lambda m: m[0])
    X = np.vstack([np.asarray(v, dtype=np.float64) for _, v in members])
    centroid = X.mean(axis=0)
    c_norm = np.linalg.norm(centroid)
    if c_norm == 0:
        raise ZeroNormCentroid("cluster centroid has zero norm")
    x_norms = np.linalg.norm(X, axis=1)
    if np.any(x_norms == 0):
        raise ZeroNormVector("cluster member has zero norm")
    sims = np.clip((X @ centroid) / (x_norms * c_norm), -1.0, 1.0)
    best = sims.max()
    pos = int(np.flatnonzero(sims >= best - TIE_EPS)[0])
    return members[pos][0], float(sims[pos])


def select_top_m(
    corpus: Corpus, assignment: ClusterAssignment, vectors: Sequence[np.ndarray], m: int
) -> RepresentativeSet:
    if m < 1:
        raise ValueError("m must be at least 1")
    if not (len(corpus) == len(assignment.labels) == len(vectors)):
        raise ValueError("corpus, labels and vectors must be aligned")
    ranked = rank_clusters(assignment)
    entries: list[Representative] = []
    skipped: list[int] = []
    for cid, size in ranked:
        if len(entries) == m:
            break
        members = [(i, vectors[i]) for i, label in enumerate(assignment.labels) if label == cid]
        try:
            idx, sim = representative(members)
        except ZeroNormCentroid:
            log.warning("cluster %d is degenerate (zero-norm centroid); skipped", cid)
            skipped.append(cid)
            continue
        review = corpus.reviews[idx]
        entries.append(Representative(cid, review.id, review.text, size, sim))
    if ranked and not entries:
        raise ZeroNormCentroid("every cluster has a zero-norm centroid")
    return RepresentativeSet(tuple(entries), m, tuple(skipped))
