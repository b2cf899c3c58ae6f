"""K-means over per-step unbinding vectors, reported against POS tags.

Farthest-point seeding keeps initialization deterministic for a fixed
seed: the first center is drawn from the generator, each further center
is the point farthest from all chosen centers (ties to the lowest
index).  Purity is the size-weighted majority-tag fraction.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .tensor import ContractViolation

__all__ = ["ClusterReport", "kmeans", "cluster_unbinding_vectors"]


@dataclass
class ClusterReport:
    assignments: np.ndarray
    centers: np.ndarray
    purity: float
    histograms: list[dict[str, int]]
    sizes: list[int]

    def to_dict(self) -> dict:
        return {
            "k": len(self.sizes),
            "purity": self.purity,
            "sizes": self.sizes,
            "histograms": self.histograms,
        }


def _sq_dists(X: np.ndarray, c: np.ndarray) -> np.ndarray:
    diff = X - c
    return np.einsum("ij,ij->i", diff, diff)


def kmeans(X: np.ndarray, k: int, seed: int = 0, max_iter: int = 100
           ) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with farthest-point seeding.

    Requires at least k distinct rows.  Returns (assignments, centers).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ContractViolation("points must be a nonempty 2-d array")
    if k < 1:
        raise ContractViolation("k must be >= 1")
    if np.unique(X, axis=0).shape[0] < k:
        raise ContractViolation(f"fewer than {k} distinct points")
    rng = np.random.default_rng(seed)
    first = int(rng.integers(len(X)))
    centers = [X[first]]
    min_d = _sq_dists(X, centers[0])
    while len(centers) < k:
        nxt = int(np.argmax(min_d))  # ties -> lowest index
        centers.append(X[nxt])
        min_d = np.minimum(min_d, _sq_dists(X, centers[-1]))
    C = np.array(centers)
    assign = None
    for _it in range(max_iter):
        d = np.stack([_sq_dists(X, c) for c in C])
        new_assign = np.argmin(d, axis=0)  # ties -> lowest cluster
        for j in range(k):
            members = X[new_assign == j]
            if len(members):
                C[j] = members.mean(axis=0)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return assign, C


def cluster_unbinding_vectors(traces, k: int, tag_of_word, seed: int = 0,
                              end_id: int | None = None) -> ClusterReport:
    """Cluster every emitted step's u_t and tabulate POS tags per cluster.

    Steps that emit the end token are excluded (they terminate the
    caption rather than realize a word).  ``tag_of_word`` maps a word id
    to its POS tag string.
    """
    if k < 2:
        raise ContractViolation("k must be >= 2")
    vectors = []
    tags = []
    for tr in traces:
        for step in tr.steps:
            if end_id is not None and step.word_id == end_id:
                continue
            vectors.append(step.u)
            tags.append(tag_of_word(step.word_id))
    if not vectors:
        raise ContractViolation("no unbinding vectors in traces")
    X = np.asarray(vectors, dtype=float)
    assign, centers = kmeans(X, k, seed=seed)
    histograms: list[dict[str, int]] = []
    sizes: list[int] = []
    majority_total = 0
    for j in range(k):
        members = [tags[i] for i in range(len(tags)) if assign[i] == j]
        hist = Counter(members)
        histograms.append(dict(sorted(hist.items())))
        sizes.append(len(members))
        if members:
            majority_total += hist.most_common(1)[0][1]
    purity = majority_total / len(tags)
    return ClusterReport(assignments=assign, centers=centers, purity=purity,
                         histograms=histograms, sizes=sizes)
