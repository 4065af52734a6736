"""Clustering pipelines: exposure clusters over roles and a task taxonomy.

The K-means core is deterministic under a fixed seed: seeded k-means++
initialization, Lloyd iterations to an assignment fixpoint (capped), ties
broken toward the lowest centroid index, restarts keeping lowest inertia.
The taxonomy pipeline runs normalized task texts through embeddings, a
PCA projection, top-level clusters and per-cluster sub-clusters, then
samples members for human-readable labels.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, ProviderError, UsageError
from .gateway import BatchManager, stable_hash
from .prompts import cluster_label_request

log = logging.getLogger(__name__)

_NON_ALPHA_RE = re.compile(r"[^a-z]+")
_VOWELS = set("aeiou")


class ExposureCluster(str, Enum):
    """Role clusters named in ascending order of centroid mean exposure."""

    LOW = "Low"
    AUGMENTATION = "Augmentation"
    ADAPTATION = "Adaptation"
    AUTOMATION = "Automation"


CLUSTER_NAME_ORDER = (
    ExposureCluster.LOW,
    ExposureCluster.AUGMENTATION,
    ExposureCluster.ADAPTATION,
    ExposureCluster.AUTOMATION,
)


@dataclass(frozen=True)
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    iterations: int


def kmeans(
    points: Sequence[Sequence[float]] | np.ndarray,
    k: int,
    seed: int,
    n_init: int = 10,
    max_iter: int = 300,
) -> KMeansResult:
    """Seeded k-means over row vectors; deterministic for fixed inputs."""
    matrix = np.asarray(points, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise UsageError("kmeans needs a non-empty 2-D point matrix")
    if k < 1 or k > matrix.shape[0]:
        raise UsageError(f"k={k} invalid for {matrix.shape[0]} points")

    root = np.random.default_rng(seed)
    restart_seeds = root.integers(0, 2**63 - 1, size=n_init)
    best: KMeansResult | None = None
    for restart_seed in restart_seeds:
        rng = np.random.default_rng(int(restart_seed))
        centroids = _kmeans_pp(matrix, k, rng)
        result = _lloyd(matrix, centroids, max_iter)
        if best is None or result.inertia < best.inertia:
            best = result
    assert best is not None
    return best


def _pairwise_d2(matrix: np.ndarray, centers: np.ndarray, row_norms: np.ndarray) -> np.ndarray:
    """Squared distances point-to-center without the n*k*d broadcast."""
    d2 = row_norms[:, None] - 2.0 * (matrix @ centers.T) + (centers**2).sum(axis=1)[None, :]
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeans_pp(matrix: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    row_norms = (matrix**2).sum(axis=1)
    chosen = [int(rng.integers(matrix.shape[0]))]
    d2 = _pairwise_d2(matrix, matrix[chosen[-1]][None, :], row_norms)[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            taken = set(chosen)
            chosen.append(next(i for i in range(matrix.shape[0]) if i not in taken))
        else:
            chosen.append(int(rng.choice(matrix.shape[0], p=d2 / total)))
        newest = _pairwise_d2(matrix, matrix[chosen[-1]][None, :], row_norms)[:, 0]
        np.minimum(d2, newest, out=d2)
    return matrix[chosen].copy()


def _lloyd(matrix: np.ndarray, centroids: np.ndarray, max_iter: int) -> KMeansResult:
    n, k = matrix.shape[0], centroids.shape[0]
    row_norms = (matrix**2).sum(axis=1)
    assignments = np.full(n, -1, dtype=int)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        d2 = _pairwise_d2(matrix, centroids, row_norms)
        new_assignments = d2.argmin(axis=1)  # argmin takes the lowest index on ties
        own = d2[np.arange(n), new_assignments].copy()
        for cluster in range(k):
            if not (new_assignments == cluster).any():
                mover = int(own.argmax())
                new_assignments[mover] = cluster
                own[mover] = 0.0
        if (new_assignments == assignments).all():
            break
        assignments = new_assignments
        for cluster in range(k):
            centroids[cluster] = matrix[assignments == cluster].mean(axis=0)
    inertia = float(((matrix - centroids[assignments]) ** 2).sum())
    return KMeansResult(assignments, centroids, inertia, iterations)


@dataclass(frozen=True)
class RoleClusters:
    labels: tuple[ExposureCluster, ...]
    centroids: dict[ExposureCluster, tuple[float, float]]


def cluster_roles(
    role_points: Sequence[tuple[float, float]], seed: int
) -> RoleClusters:
    """Partition (mean, std) exposure pairs into the four named clusters.

    Names follow ascending centroid mean. Raw axes are used directly,
    both being on comparable [0, 1]-bounded scales.
    """
    matrix = np.asarray(role_points, dtype=float)
    if matrix.ndim != 2 or matrix.shape[1] != 2:
        raise UsageError("cluster_roles expects (mean, std) pairs")
    if matrix.shape[0] < len(CLUSTER_NAME_ORDER):
        raise DataError(f"need at least 4 roles, got {matrix.shape[0]}")
    if np.unique(matrix, axis=0).shape[0] < len(CLUSTER_NAME_ORDER):
        raise DataError("degenerate geometry: fewer than 4 distinct (mean, std) points")

    result = kmeans(matrix, k=4, seed=seed)
    order = np.argsort(result.centroids[:, 0], kind="stable")
    name_for = {int(cluster): CLUSTER_NAME_ORDER[rank] for rank, cluster in enumerate(order)}
    labels = tuple(name_for[int(assignment)] for assignment in result.assignments)
    centroids = {
        name_for[int(cluster)]: (
            float(result.centroids[cluster, 0]),
            float(result.centroids[cluster, 1]),
        )
        for cluster in range(4)
    }
    return RoleClusters(labels=labels, centroids=centroids)


@lru_cache(maxsize=1)
def _default_stopwords() -> frozenset[str]:
    raw = resources.files("taskshift.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(word.strip() for word in raw.splitlines() if word.strip())


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        return _default_stopwords()
    return frozenset(
        word.strip() for word in Path(path).read_text("utf-8").splitlines() if word.strip()
    )


def _vowel_groups(word: str) -> int:
    groups = 0
    previous_vowel = False
    for char in word:
        is_vowel = char in _VOWELS
        if is_vowel and not previous_vowel:
            groups += 1
        previous_vowel = is_vowel
    return groups


def _strip_verb_suffix(stem: str) -> str:
    """Fixups after removing -ing/-ed: undouble or restore a final e."""
    if len(stem) < 3:
        return stem
    if stem[-1] == stem[-2] and stem[-1] not in "aeioulsz":
        return stem[:-1]
    if (
        stem[-1] not in _VOWELS
        and stem[-1] not in "wxy"
        and stem[-2] in _VOWELS
        and stem[-3] not in _VOWELS
        and _vowel_groups(stem) <= 2
    ):
        return stem + "e"
    return stem


def lemmatize(word: str) -> str:
    """Suffix-rule lemmatizer: plural stripping, then -ing/-ed removal."""
    if len(word) <= 3:
        return word
    if word.endswith("ies") and len(word) >= 5:
        word = word[:-3] + "y"
    elif len(word) >= 5 and (
        (word.endswith("es") and word[-3] in "sxz") or word.endswith(("ches", "shes"))
    ):
        word = word[:-2]
    elif word.endswith("s") and not word.endswith(("ss", "us", "is")):
        word = word[:-1]
    if word.endswith("ing") and len(word) >= 6:
        word = _strip_verb_suffix(word[:-3])
    elif word.endswith("ed") and len(word) >= 5:
        word = _strip_verb_suffix(word[:-2])
    return word


def normalize_text(text: str, stopwords: frozenset[str] | None = None) -> str:
    """Lowercase, drop digits/punctuation/stopwords, lemmatize, re-join.

    May return an empty string (callers flag those tasks rather than
    clustering them). Idempotent.
    """
    if stopwords is None:
        stopwords = _default_stopwords()
    tokens = [token for token in _NON_ALPHA_RE.sub(" ", text.lower()).split() if token]
    kept = [lemmatize(token) for token in tokens if token not in stopwords]
    return " ".join(token for token in kept if token and token not in stopwords)


@dataclass
class ProjectionModel:
    """Mean-centered projection onto the top principal components."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        return (np.asarray(matrix, dtype=float) - self.mean) @ self.components.T

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProjectionModel":
        return cls(
            mean=np.asarray(data["mean"], dtype=float),
            components=np.asarray(data["components"], dtype=float),
            explained_variance=np.asarray(data["explained_variance"], dtype=float),
            explained_variance_ratio=np.asarray(data["explained_variance_ratio"], dtype=float),
        )


def fit_pca(matrix: np.ndarray, out_dim: int = 25) -> ProjectionModel:
    """Fit a PCA projection; errors if the data cannot support ``out_dim``."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise UsageError("fit_pca expects a 2-D matrix")
    if out_dim < 1 or out_dim > matrix.shape[1]:
        raise UsageError(f"out_dim={out_dim} invalid for {matrix.shape[1]}-dim input")
    mean = matrix.mean(axis=0)
    centered = matrix - mean
    _, singular_values, vt = np.linalg.svd(centered, full_matrices=False)
    if singular_values.size == 0 or singular_values[0] == 0.0:
        rank = 0
    else:
        rank = int((singular_values > singular_values[0] * 1e-10).sum())
    if rank < out_dim:
        raise DataError(f"rank deficiency: achieved rank {rank} < requested {out_dim}")
    components = vt[:out_dim].copy()
    # deterministic sign: largest-magnitude loading of each component is positive
    for row in range(out_dim):
        pivot = int(np.abs(components[row]).argmax())
        if components[row, pivot] < 0:
            components[row] = -components[row]
    eigenvalues = singular_values**2 / matrix.shape[0]
    total = eigenvalues.sum()
    ratios = eigenvalues[:out_dim] / total if total > 0 else np.zeros(out_dim)
    return ProjectionModel(
        mean=mean,
        components=components,
        explained_variance=eigenvalues[:out_dim].copy(),
        explained_variance_ratio=ratios.copy(),
    )


@dataclass
class TaskTaxonomy:
    """Two-level task typology with human-readable labels."""

    category_labels: dict[int, str]
    subcategory_labels: dict[tuple[int, int], str]
    assignments: list[tuple[int, int]]
    label_failures: list[str]

    def label_of(self, index: int) -> tuple[str, str]:
        category, subcategory = self.assignments[index]
        return self.category_labels[category], self.subcategory_labels[(category, subcategory)]


def build_taxonomy(
    tasks: Sequence[str],
    manager: BatchManager,
    seed: int,
    n_categories: int = 10,
    n_subclusters: int = 3,
    pca_dim: int = 25,
    sample_cap: int = 200,
    projection: ProjectionModel | None = None,
) -> tuple[TaskTaxonomy, ProjectionModel]:
    """Cluster normalized task texts and label every (sub-)cluster.

    The projection dimension is clamped to what the corpus can support;
    label-request failures degrade to "cluster-<id>" placeholders.
    """
    minimum = n_categories * n_subclusters
    if len(tasks) < minimum:
        raise UsageError(f"need at least {minimum} tasks, got {len(tasks)}")
    if any(not task for task in tasks):
        raise UsageError("taxonomy input contains empty normalized texts")

    embeddings = manager.embed_texts(tasks)
    if projection is None:
        effective_dim = min(pca_dim, embeddings.shape[1], embeddings.shape[0] - 1)
        if effective_dim < pca_dim:
            log.info("clamping projection from %d to %d dims", pca_dim, effective_dim)
        projection = fit_pca(embeddings, out_dim=effective_dim)
    projected = projection.transform(embeddings)

    top = kmeans(projected, k=n_categories, seed=_subseed(seed, "taxonomy-top"))
    assignments: list[list[int]] = [[category, -1] for category in top.assignments.tolist()]

    label_requests = []
    members_by_cluster: dict[int, np.ndarray] = {}
    for category in range(n_categories):
        members = np.flatnonzero(top.assignments == category)
        members_by_cluster[category] = members
        label_requests.append(
            _label_request(f"label:cat:{category}", tasks, members, seed, sample_cap)
        )

    for category in range(n_categories):
        members = members_by_cluster[category]
        sub_k = min(n_subclusters, int(np.unique(projected[members], axis=0).shape[0]))
        sub = kmeans(projected[members], k=sub_k, seed=_subseed(seed, f"taxonomy-sub-{category}"))
        for local, task_index in enumerate(members.tolist()):
            assignments[task_index][1] = int(sub.assignments[local])
        for subcluster in range(sub_k):
            sub_members = members[sub.assignments == subcluster]
            label_requests.append(
                _label_request(
                    f"label:sub:{category}:{subcluster}", tasks, sub_members, seed, sample_cap
                )
            )

    responses, report = manager.submit_batch(label_requests)
    by_id = {response.request_id: response for response in responses}
    failures = [request_id for request_id, _ in report.failed]

    category_labels: dict[int, str] = {}
    subcategory_labels: dict[tuple[int, int], str] = {}
    for request in label_requests:
        parts = request.request_id.split(":")
        response = by_id.get(request.request_id)
        if parts[1] == "cat":
            category = int(parts[2])
            category_labels[category] = (
                response.payload["label"] if response else f"cluster-{category}"
            )
        else:
            key = (int(parts[2]), int(parts[3]))
            subcategory_labels[key] = (
                response.payload["label"] if response else f"cluster-{key[0]}-{key[1]}"
            )
    if failures:
        log.warning("placeholder labels for failed requests: %s", failures)

    taxonomy = TaskTaxonomy(
        category_labels=category_labels,
        subcategory_labels=subcategory_labels,
        assignments=[(pair[0], pair[1]) for pair in assignments],
        label_failures=failures,
    )
    return taxonomy, projection


def _label_request(request_id: str, tasks: Sequence[str], members: np.ndarray, seed: int, cap: int):
    rng = np.random.default_rng(_subseed(seed, request_id))
    size = min(cap, members.size)
    sampled = rng.choice(members, size=size, replace=False) if size else np.empty(0, dtype=int)
    texts = [tasks[int(index)] for index in np.sort(sampled)]
    if not texts:
        raise ProviderError(f"cannot label an empty cluster ({request_id})")
    return cluster_label_request(request_id, texts)


def _subseed(seed: int, name: str) -> int:
    return (seed * 1_000_003 + stable_hash(name)) % 2**63
