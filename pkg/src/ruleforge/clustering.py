"""Generalization over constants: differentiable clustering of embeddings.

A constant's embedding is generalized to a centroid.  Soft assignment weights
follow the softmin-of-squared-distance form with sharpness alpha; the loss is
the weight-averaged squared distance summed over the table, and its exact
gradient with respect to the centers drives the joint training loop.  Hard
assignments (argmin distance) feed the latent knowledge base.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class ClusteringError(Exception):
    pass


class EmbeddingSource(str, enum.Enum):
    IDENTITY_SYMBOLIC = "identity_symbolic"
    TOY_ENCODER = "toy_encoder"
    EXTERNAL_FILE = "external_file"


@dataclass
class EmbeddingTable:
    """constant id -> embedding vector, all of one dimension."""

    vectors: dict[int, np.ndarray]
    source: EmbeddingSource = EmbeddingSource.TOY_ENCODER

    def __post_init__(self) -> None:
        dims = {v.shape for v in self.vectors.values()}
        if len(dims) > 1:
            raise ClusteringError(f"mixed embedding shapes {dims}")

    @property
    def dim(self) -> int:
        return next(iter(self.vectors.values())).shape[0]

    def __len__(self) -> int:
        return len(self.vectors)

    def matrix(self) -> tuple[np.ndarray, list[int]]:
        ids = sorted(self.vectors)
        return np.stack([self.vectors[i] for i in ids]), ids

    @staticmethod
    def identity(n_constants: int) -> "EmbeddingTable":
        eye = np.eye(n_constants)
        return EmbeddingTable(
            vectors={i: eye[i] for i in range(n_constants)},
            source=EmbeddingSource.IDENTITY_SYMBOLIC,
        )


@dataclass
class CentroidSet:
    centers: np.ndarray  # (K, dim)
    alpha: float = 20.0

    def __post_init__(self) -> None:
        self.centers = np.asarray(self.centers, dtype=float)
        if self.centers.ndim != 2 or self.centers.shape[0] < 1:
            raise ClusteringError("centers must be a (K, dim) array with K >= 1")
        if not np.all(np.isfinite(self.centers)):
            raise ClusteringError("non-finite centers")
        if self.alpha <= 0:
            raise ClusteringError("alpha must be positive")

    @property
    def k(self) -> int:
        return self.centers.shape[0]


def _sq_distances(e: np.ndarray, centroids: CentroidSet) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    if not np.all(np.isfinite(e)):
        raise ClusteringError("non-finite embedding")
    if e.shape[-1] != centroids.centers.shape[1]:
        raise ClusteringError(f"dim mismatch: {e.shape[-1]} vs {centroids.centers.shape[1]}")
    diff = e[..., None, :] - centroids.centers
    return np.sum(diff * diff, axis=-1)


def g_weights(e: np.ndarray, centroids: CentroidSet) -> np.ndarray:
    """Soft assignment of one embedding: softmax of -alpha * squared distance."""
    logits = -centroids.alpha * _sq_distances(e, centroids)
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=-1, keepdims=True)


def hard_assign(e: np.ndarray, centroids: CentroidSet) -> int:
    """Nearest-centroid index; ties break toward the lowest index."""
    return int(np.argmin(_sq_distances(e, centroids)))


def hard_assign_table(table: EmbeddingTable, centroids: CentroidSet) -> dict[int, int]:
    mat, ids = table.matrix()
    assignment = np.argmin(_sq_distances(mat, centroids), axis=1)
    return {cid: int(a) for cid, a in zip(ids, assignment)}


def cluster_loss(table: EmbeddingTable, centroids: CentroidSet) -> float:
    if not table.vectors:
        raise ClusteringError("empty embedding table")
    mat, _ = table.matrix()
    d2 = _sq_distances(mat, centroids)
    logits = -centroids.alpha * d2
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    return float(np.sum(d2 * w))


def cluster_grad(table: EmbeddingTable, centroids: CentroidSet) -> np.ndarray:
    """Exact gradient of cluster_loss w.r.t. the centers, through both the
    distance term and the assignment weights."""
    mat, _ = table.matrix()  # (n, dim)
    d2 = _sq_distances(mat, centroids)  # (n, K)
    logits = -centroids.alpha * d2
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)

    # dL/dc_k = sum_e 2 (c_k - e) * w_k * (1 + alpha * (<d2, w> - d2_k))
    inner = np.sum(d2 * w, axis=1, keepdims=True)  # (n, 1)
    coeff = w * (1.0 + centroids.alpha * (inner - d2))  # (n, K)
    diff = centroids.centers[None, :, :] - mat[:, None, :]  # (n, K, dim)
    return 2.0 * np.einsum("nk,nkd->kd", coeff, diff)


def init_centroids(table: EmbeddingTable, k: int, seed: int, alpha: float = 20.0) -> CentroidSet:
    """k-means++-style seeding from the table, deterministic under seed."""
    if k > len(table):
        raise ClusteringError(f"K={k} exceeds table size {len(table)}")
    rng = np.random.default_rng(seed)
    mat, _ = table.matrix()
    n = mat.shape[0]
    centers = [mat[rng.integers(n)]]
    while len(centers) < k:
        d2 = np.min(
            np.sum((mat[:, None, :] - np.stack(centers)[None, :, :]) ** 2, axis=-1), axis=1
        )
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with a chosen center
            centers.append(mat[rng.integers(n)])
            continue
        centers.append(mat[rng.choice(n, p=d2 / total)])
    return CentroidSet(centers=np.stack(centers).copy(), alpha=alpha)
