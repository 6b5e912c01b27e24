"""Exact k-nearest-neighbor queries with deterministic tie handling.

Neighbors of a query point are ordered by (distance, training index)
ascending, so a distance tie always resolves to the lowest training
index. The accelerated index is contractually exact: its output is
bit-identical to the brute-force path (no approximate mode), which the
test suite enforces on random instances including duplicated points.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import DEFAULT_NORM, InvalidInputError, Norm, Sample, _reduce_norm, as_point

__all__ = ["NeighborTable", "knn_query", "neighbor_table", "KnnIndex", "build_index"]

# Relative width of the window around the k-th distance inside which the
# accelerated index re-checks candidates for ties; far wider than any
# float rounding discrepancy, far narrower than genuine distance gaps.
_TIE_RTOL = 1e-9

# Above this training size neighbor_table switches from the dense brute
# force to the spatial index (identical output either way).
_INDEX_THRESHOLD = 512

# Cap on the number of floats materialized per brute-force block.
_BLOCK_BUDGET = 4_000_000


@dataclass(frozen=True, eq=False)
class NeighborTable:
    """Per-evaluation-point neighbor indices and distances.

    Row i holds the k nearest training indices for evaluation point i,
    ordered by (distance, index); distances are nondecreasing along rows.
    """

    k: int
    indices: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        dist = np.asarray(self.distances, dtype=np.float64)
        if idx.ndim != 2 or idx.shape != dist.shape:
            raise InvalidInputError("indices and distances must be matching (n, k) arrays")
        if self.k <= 0 or idx.shape[1] != self.k:
            raise InvalidInputError("k must be positive and match the table width")
        if idx.shape[0] == 0:
            raise InvalidInputError("a neighbor table needs at least one row")
        if np.any(np.diff(dist, axis=1) < 0):
            raise InvalidInputError("row distances must be nondecreasing")
        if self.k > 1 and np.any(np.diff(np.sort(idx, axis=1), axis=1) == 0):
            raise InvalidInputError("each row must hold distinct training indices")
        if np.any(idx < 0):
            raise InvalidInputError("training indices must be nonnegative")
        idx = idx.copy()
        dist = dist.copy()
        idx.flags.writeable = False
        dist.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "distances", dist)

    @property
    def n(self) -> int:
        return self.indices.shape[0]


def _check_k(k: int, m: int) -> int:
    k = int(k)
    if not 1 <= k <= m:
        raise InvalidInputError(f"k must satisfy 1 <= k <= {m}, got {k}")
    return k


def _check_dims(d_query: int, d_train: int) -> None:
    if d_query != d_train:
        raise InvalidInputError(f"dimension mismatch: {d_query} vs {d_train}")


def _rank_block(dist_block: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    # Stable sort on distance: equal distances keep index order, which is
    # exactly the (distance, index) tie rule.
    order = np.argsort(dist_block, axis=1, kind="stable")[:, :k]
    return order.astype(np.int64), np.take_along_axis(dist_block, order, axis=1)


def _brute_table(eval_pts: np.ndarray, train_pts: np.ndarray, k: int, norm: Norm):
    n, d = eval_pts.shape
    m = train_pts.shape[0]
    rows_per_block = max(1, _BLOCK_BUDGET // max(1, m * d))
    idx_out = np.empty((n, k), dtype=np.int64)
    dist_out = np.empty((n, k), dtype=np.float64)
    for start in range(0, n, rows_per_block):
        stop = min(n, start + rows_per_block)
        block = _reduce_norm(eval_pts[start:stop, None, :] - train_pts[None, :, :], norm)
        idx_out[start:stop], dist_out[start:stop] = _rank_block(block, k)
    return idx_out, dist_out


def knn_query(query, train: Sample, k: int, norm: Norm = DEFAULT_NORM):
    """Indices and distances of the k nearest training points to ``query``.

    Results are ordered by (distance, index) ascending and are fully
    deterministic. This is the brute-force reference implementation.
    """
    q = as_point(query)
    _check_dims(q.shape[0], train.dim)
    k = _check_k(k, train.size)
    dist = _reduce_norm(q[None, :] - train.points, norm)
    order = np.argsort(dist, kind="stable")[:k].astype(np.int64)
    return order, dist[order]


class KnnIndex:
    """Spatial index over a training sample, exact under the tie rule.

    A kd-tree proposes candidates; distances are then recomputed with the
    package's canonical norm reduction and re-ranked by (distance, index),
    so queries agree bit for bit with the brute force. Immutable after
    construction; concurrent queries are safe.
    """

    def __init__(self, train: Sample, norm: Norm = DEFAULT_NORM):
        if not isinstance(train, Sample):
            train = Sample(train)
        if train.size == 0:
            raise InvalidInputError("cannot index an empty sample")
        self._train = train.points
        self._norm = norm
        self._p = norm.p
        self._tree = cKDTree(self._train)

    @property
    def size(self) -> int:
        return self._train.shape[0]

    @property
    def norm(self) -> Norm:
        return self._norm

    def query(self, point, k: int):
        idx, dist = self.query_batch(np.asarray(point, dtype=np.float64).reshape(1, -1), k)
        return idx[0], dist[0]

    def query_batch(self, points, k: int):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        _check_dims(pts.shape[1], self._train.shape[1])
        m = self._train.shape[0]
        k = _check_k(k, m)
        if k == m:
            return _brute_table(pts, self._train, k, self._norm)

        kq = k + 1
        d0, i0 = self._tree.query(pts, k=kq, p=self._p)
        d0 = d0.reshape(len(pts), kq)
        i0 = i0.reshape(len(pts), kq)

        cand = self._train[i0[:, :k]]
        dist = _reduce_norm(pts[:, None, :] - cand, norm=self._norm)
        idx = i0[:, :k].astype(np.int64)

        # A row needs the exact tie-resolution pass when the boundary gap
        # or any internal gap falls inside the tie window, or when the
        # recomputed distances are not strictly increasing.
        tol = _TIE_RTOL * (1.0 + d0[:, k - 1])
        risky = (d0[:, k] - d0[:, k - 1]) <= tol
        if k > 1:
            risky |= np.any(np.diff(d0[:, :k], axis=1) <= tol[:, None], axis=1)
            risky |= np.any(np.diff(dist, axis=1) <= 0.0, axis=1)
        for row in np.flatnonzero(risky):
            idx[row], dist[row] = self._query_exact(pts[row], k, float(d0[row, k - 1]))
        return idx, dist

    def _query_exact(self, point: np.ndarray, k: int, radius: float):
        r = radius * (1.0 + 2.0 * _TIE_RTOL)
        cand = self._tree.query_ball_point(point, r, p=self._p)
        cand = np.asarray(cand, dtype=np.int64)
        if cand.size < k:
            # Defensive: radius inflation should always retain >= k points.
            cand = np.arange(self._train.shape[0], dtype=np.int64)
        dist = _reduce_norm(point[None, :] - self._train[cand], norm=self._norm)
        order = np.lexsort((cand, dist))[:k]
        return cand[order], dist[order]


def build_index(train: Sample, norm: Norm = DEFAULT_NORM) -> KnnIndex:
    """Build the accelerated index; queries match brute force bit for bit."""
    return KnnIndex(train, norm)


def neighbor_table(
    eval_sample: Sample,
    train: Sample,
    k: int,
    norm: Norm = DEFAULT_NORM,
    *,
    index: KnnIndex | None = None,
) -> NeighborTable:
    """Neighbor table over all evaluation points; row i equals knn_query(eval[i]).

    Dispatches to the accelerated index for large training samples; both
    paths produce identical tables, and a prebuilt ``index`` may be reused
    across calls with the same training sample.
    """
    if not isinstance(eval_sample, Sample):
        eval_sample = Sample(eval_sample)
    if not isinstance(train, Sample):
        train = Sample(train)
    _check_dims(eval_sample.dim, train.dim)
    k = _check_k(k, train.size)
    if index is not None:
        if index.size != train.size or index.norm is not norm:
            raise InvalidInputError("index does not match the training sample or norm")
        idx, dist = index.query_batch(eval_sample.points, k)
    elif train.size >= _INDEX_THRESHOLD:
        idx, dist = KnnIndex(train, norm).query_batch(eval_sample.points, k)
    else:
        idx, dist = _brute_table(eval_sample.points, train.points, k, norm)
    return NeighborTable(k=k, indices=idx, distances=dist)
