"""Training-set partitions: random blocks, k-means clusters, and the hybrid
scheme with one random communication subset plus clustered remainder.

The k-means here is a small deterministic Lloyd's loop (k-means++ seeding,
empty clusters repaired by stealing the farthest point from the largest
cluster). Cluster sizes are optionally rebalanced to near-equality by moving
boundary points toward the receiving centroid, since committee training
assumes every expert holds about n/M points.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidPartition


class PartitionKind(str, Enum):
    RANDOM = "random"
    DISJOINT = "disjoint"
    GRBCM_HYBRID = "grbcm_hybrid"


@dataclass(frozen=True)
class Partition:
    """Assignment of training indices to M pairwise-disjoint subsets.

    ``communication_index`` marks which subset plays the communication role;
    it is set by the hybrid scheme and may be designated explicitly on other
    kinds (only meaningful when that subset is a uniform random sample).
    """

    subsets: list[np.ndarray]
    kind: PartitionKind
    communication_index: int | None
    seed: int

    @property
    def M(self) -> int:
        return len(self.subsets)

    @property
    def n_points(self) -> int:
        return int(sum(s.size for s in self.subsets))

    def validate(self, n: int) -> None:
        """Check coverage, disjointness, non-emptiness and the communication index."""
        seen = np.concatenate(self.subsets) if self.subsets else np.array([], dtype=int)
        if any(s.size == 0 for s in self.subsets):
            raise InvalidPartition("empty subset")
        if seen.size != n or not np.array_equal(np.sort(seen), np.arange(n)):
            raise InvalidPartition("subsets are not a disjoint cover of 0..n-1")
        if self.communication_index is not None and not (0 <= self.communication_index < self.M):
            raise InvalidPartition("communication_index out of range")

    def with_communication(self, index: int) -> "Partition":
        if not (0 <= index < self.M):
            raise InvalidPartition("communication_index out of range")
        return replace(self, communication_index=index)

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "seed": self.seed,
            "communication_index": self.communication_index,
            "subsets": [s.tolist() for s in self.subsets],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Partition":
        return cls(
            subsets=[np.asarray(s, dtype=int) for s in doc["subsets"]],
            kind=PartitionKind(doc["kind"]),
            communication_index=doc["communication_index"],
            seed=int(doc["seed"]),
        )


def _check_counts(n: int, M: int, minimum_M: int = 1) -> None:
    if M < minimum_M or M > n:
        raise InvalidPartition(f"need {minimum_M} <= M <= n, got M={M}, n={n}")


def random_partition(n: int, M: int, seed: int) -> Partition:
    """Split a uniformly random permutation of 0..n-1 into M near-equal blocks."""
    _check_counts(n, M)
    perm = np.random.default_rng(seed).permutation(n)
    subsets = [np.sort(block) for block in np.array_split(perm, M)]
    return Partition(subsets=subsets, kind=PartitionKind.RANDOM,
                     communication_index=None, seed=seed)


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    closest = np.sum((X - centroids[0]) ** 2, axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centroids[c] = X[idx]
        closest = np.minimum(closest, np.sum((X - centroids[c]) ** 2, axis=1))
    return centroids


def _repair_empty(X: np.ndarray, labels: np.ndarray, centroids: np.ndarray, k: int) -> None:
    sizes = np.bincount(labels, minlength=k)
    for c in np.where(sizes == 0)[0]:
        donors = np.where(sizes >= 2)[0]
        donor = donors[np.argmax(sizes[donors])]
        members = np.where(labels == donor)[0]
        far = members[np.argmax(np.sum((X[members] - centroids[donor]) ** 2, axis=1))]
        labels[far] = c
        sizes[donor] -= 1
        sizes[c] += 1


def _lloyd(X: np.ndarray, k: int, rng: np.random.Generator,
           max_iter: int = 100, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    centroids = _kmeans_pp_init(X, k, rng)
    labels = np.zeros(X.shape[0], dtype=int)
    for _ in range(max_iter):
        labels = np.argmin(cdist(X, centroids, metric="sqeuclidean"), axis=1)
        _repair_empty(X, labels, centroids, k)
        new_centroids = np.vstack([X[labels == c].mean(axis=0) for c in range(k)])
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < tol:
            break
    return labels, centroids


def _near_equal_targets(n: int, k: int, sizes: np.ndarray) -> np.ndarray:
    # clusters that are currently largest keep the +1 remainders: fewer moves
    base, rem = divmod(n, k)
    targets = np.full(k, base, dtype=int)
    if rem:
        targets[np.argsort(-sizes, kind="stable")[:rem]] += 1
    return targets


def _rebalance(X: np.ndarray, labels: np.ndarray, centroids: np.ndarray,
               targets: np.ndarray) -> None:
    k = targets.size
    for _ in range(2 * k + 10):
        sizes = np.bincount(labels, minlength=k)
        over = np.where(sizes > targets)[0]
        under = np.where(sizes < targets)[0]
        if over.size == 0:
            break
        surplus = dict(zip(over.tolist(), (sizes[over] - targets[over]).tolist()))
        deficit = dict(zip(under.tolist(), (targets[under] - sizes[under]).tolist()))
        cand = np.where(np.isin(labels, over))[0]
        d2 = cdist(X[cand], centroids[under], metric="sqeuclidean")
        moved = False
        for flat in np.argsort(d2, axis=None, kind="stable"):
            p_local, u_local = divmod(int(flat), under.size)
            point, dest = int(cand[p_local]), int(under[u_local])
            src = int(labels[point])
            if surplus.get(src, 0) > 0 and deficit[dest] > 0:
                labels[point] = dest
                surplus[src] -= 1
                deficit[dest] -= 1
                moved = True
        if not moved:
            break


def _labels_to_subsets(labels: np.ndarray, k: int, index_map: np.ndarray | None = None) -> list[np.ndarray]:
    subsets = []
    for c in range(k):
        members = np.where(labels == c)[0]
        if index_map is not None:
            members = index_map[members]
        subsets.append(np.sort(members))
    return subsets


def disjoint_partition(X: np.ndarray, M: int, seed: int, rebalance: bool = True) -> Partition:
    """Partition by k-means clusters on the inputs, optionally size-rebalanced."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    _check_counts(n, M)
    if M == 1:
        subsets = [np.arange(n)]
    elif M == n:
        subsets = [np.array([i]) for i in range(n)]
    else:
        rng = np.random.default_rng(seed)
        labels, centroids = _lloyd(X, M, rng)
        if rebalance:
            sizes = np.bincount(labels, minlength=M)
            _rebalance(X, labels, centroids, _near_equal_targets(n, M, sizes))
        subsets = _labels_to_subsets(labels, M)
    return Partition(subsets=subsets, kind=PartitionKind.DISJOINT,
                     communication_index=None, seed=seed)


def grbcm_partition(X: np.ndarray, M: int, seed: int, rebalance: bool = True) -> Partition:
    """One random communication subset of size n // M, k-means on the rest."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    _check_counts(n, M, minimum_M=2)
    rng = np.random.default_rng(seed)
    comm = np.sort(rng.choice(n, size=n // M, replace=False))
    rest = np.setdiff1d(np.arange(n), comm, assume_unique=True)
    child_seed = int(rng.integers(2 ** 31))
    inner = disjoint_partition(X[rest], M - 1, child_seed, rebalance=rebalance)
    subsets = [comm] + [rest[s] for s in inner.subsets]
    return Partition(subsets=subsets, kind=PartitionKind.GRBCM_HYBRID,
                     communication_index=0, seed=seed)
