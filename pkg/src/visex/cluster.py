"""Seeded K-means over sentence embeddings and exemplar views for triage.

Lloyd iterations with k-means++ seeding. Empty clusters are retained rather
than re-seeded so cluster indices stay stable for triage labels that
reference them. Nearest-centroid ties break toward the lower index.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, Sentence
from .errors import ValidationError
from .fileio import atomic_write_json, canonical_json, read_json, sha256_text


@dataclass
class ClusterModel:
    n_clusters: int
    centroids: np.ndarray  # (K, d)
    assignment: dict[str, int]  # sentence_id -> cluster index
    objective: float  # sum of squared distances to assigned centroids
    seed: int
    iterations_run: int
    normalized: bool = False

    @property
    def model_id(self) -> str:
        """Content hash binding triage labels to this exact clustering."""
        return sha256_text(canonical_json(self._payload(), indent=None))

    def _payload(self) -> dict:
        return {
            "n_clusters": self.n_clusters,
            "centroids": [[float(x) for x in row] for row in self.centroids],
            "assignment": dict(sorted(self.assignment.items())),
            "objective": float(self.objective),
            "seed": self.seed,
            "iterations_run": self.iterations_run,
            "normalized": self.normalized,
        }

    def cluster_sizes(self) -> list[int]:
        sizes = [0] * self.n_clusters
        for idx in self.assignment.values():
            sizes[idx] += 1
        return sizes


@dataclass
class Exemplar:
    sentence_id: str
    class_id: str
    text: str | None
    distance: float


@dataclass
class ClusterSummary:
    cluster_index: int
    size: int
    exemplars: list[Exemplar] = field(default_factory=list)
    top_sections: dict[str, int] = field(default_factory=dict)


def _maybe_normalize(x: np.ndarray, normalize: bool) -> np.ndarray:
    if not normalize:
        return x
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return x / norms


def _sq_distances_to(x: np.ndarray, centroid: np.ndarray) -> np.ndarray:
    diff = x - centroid
    return np.einsum("ij,ij->i", diff, diff)


def _assign(x: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid per row; argmin takes the first (lowest) index on ties."""
    n = x.shape[0]
    best_d = np.full(n, np.inf)
    best_k = np.zeros(n, dtype=np.int64)
    for k in range(centroids.shape[0]):
        d = _sq_distances_to(x, centroids[k])
        better = d < best_d
        best_d[better] = d[better]
        best_k[better] = k
    return best_k, best_d


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(0, n))
    centroids[0] = x[first]
    dist_sq = _sq_distances_to(x, centroids[0])
    for i in range(1, k):
        total = dist_sq.sum()
        if total <= 0.0:
            # all remaining mass sits on already-chosen points; fall back to uniform
            idx = int(rng.integers(0, n))
        else:
            idx = int(rng.choice(n, p=dist_sq / total))
        centroids[i] = x[idx]
        dist_sq = np.minimum(dist_sq, _sq_distances_to(x, centroids[i]))
    return centroids


def kmeans_fit(corpus: Corpus, k: int, seed: int, max_iter: int = 100,
               normalize: bool = False) -> ClusterModel:
    """Lloyd's algorithm with k-means++ seeding, deterministic per seed.

    Stops when no assignment changes or after max_iter passes. The objective
    is asserted non-increasing after every pass. Whether to L2-normalize the
    embeddings first is controlled by `normalize` (default raw).
    """
    ids, x = corpus.sentence_matrix()
    n = x.shape[0]
    if k <= 0:
        raise ValidationError(f"k must be positive, got {k}")
    if k > n:
        raise ValidationError(f"k={k} exceeds the sentence count {n}")
    if max_iter < 1:
        raise ValidationError(f"max_iter must be >= 1, got {max_iter}")

    x = _maybe_normalize(x, normalize)
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(x, k, rng)
    labels, dists = _assign(x, centroids)
    objective = float(dists.sum())

    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        # update: mean of members; empty clusters keep their previous centroid
        for j in range(k):
            members = labels == j
            if members.any():
                centroids[j] = x[members].mean(axis=0)
        new_labels, dists = _assign(x, centroids)
        new_objective = float(dists.sum())
        assert new_objective <= objective * (1.0 + 1e-12) + 1e-12, (
            f"Lloyd objective increased: {objective} -> {new_objective}"
        )
        objective = new_objective
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels

    assignment = {sid: int(lbl) for sid, lbl in zip(ids, labels)}
    return ClusterModel(
        n_clusters=k,
        centroids=centroids,
        assignment=assignment,
        objective=objective,
        seed=seed,
        iterations_run=iterations,
        normalized=normalize,
    )


def summarize_clusters(model: ClusterModel, corpus: Corpus,
                       n_exemplars: int = 5) -> list[ClusterSummary]:
    """Per-cluster size, nearest-to-centroid exemplars, and section histogram.

    Exemplar distances are Euclidean, recomputed in the space the model was
    fit in (normalized embeddings when the model was fit with normalize).
    """
    if n_exemplars <= 0:
        raise ValidationError(f"n_exemplars must be positive, got {n_exemplars}")
    by_id = corpus.sentences_by_id()
    missing = [sid for sid in model.assignment if sid not in by_id]
    if missing:
        raise ValidationError(
            f"model references sentences absent from the corpus, e.g. {missing[0]!r}"
        )

    members: list[list[Sentence]] = [[] for _ in range(model.n_clusters)]
    for sid, idx in model.assignment.items():
        if not 0 <= idx < model.n_clusters:
            raise ValidationError(f"assignment index {idx} out of range for {sid!r}")
        members[idx].append(by_id[sid])

    summaries = []
    for idx in range(model.n_clusters):
        sentences = sorted(members[idx], key=lambda s: s.sentence_id)
        sections: dict[str, int] = {}
        scored: list[Exemplar] = []
        centroid = model.centroids[idx]
        for sent in sentences:
            sections[sent.section] = sections.get(sent.section, 0) + 1
            vec = sent.embedding
            if model.normalized:
                norm = np.linalg.norm(vec)
                vec = vec / norm if norm > 0 else vec
            dist = float(np.linalg.norm(vec - centroid))
            scored.append(Exemplar(sent.sentence_id, sent.class_id, sent.text, dist))
        scored.sort(key=lambda e: (e.distance, e.sentence_id))
        summaries.append(
            ClusterSummary(
                cluster_index=idx,
                size=len(sentences),
                exemplars=scored[:n_exemplars],
                top_sections=dict(sorted(sections.items(), key=lambda kv: (-kv[1], kv[0]))),
            )
        )
    return summaries


def save_cluster_model(model: ClusterModel, path: str | os.PathLike) -> None:
    atomic_write_json(path, model._payload())


def load_cluster_model(path: str | os.PathLike) -> ClusterModel:
    raw = read_json(path)
    try:
        model = ClusterModel(
            n_clusters=int(raw["n_clusters"]),
            centroids=np.asarray(raw["centroids"], dtype=np.float64),
            assignment={str(k): int(v) for k, v in raw["assignment"].items()},
            objective=float(raw["objective"]),
            seed=int(raw["seed"]),
            iterations_run=int(raw["iterations_run"]),
            normalized=bool(raw.get("normalized", False)),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"bad cluster model file {path}: {exc}") from exc
    if model.centroids.shape[0] != model.n_clusters:
        raise ValidationError(f"centroid count mismatch in {path}")
    return model
