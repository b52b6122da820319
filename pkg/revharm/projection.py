# SPDX-License-Identifier: MIT
# Copyright (C) 2026 The revharm authors

"""
Closest-point projection of points in R^m onto the piecewise linear image
of a triangle mesh. This is the inner kernel of the P-step, so the point
loop is compiled with numba and runs in parallel.

Among faces whose distance is within ``TIE_TOLERANCE`` of the minimum the
lowest face id wins, so the brute-force scan and the bounding volume
hierarchy return identical results.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numba
import numpy as np
from numba import njit, prange

from revharm.errors import MeshError

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-12
BRUTE_FORCE_BELOW = 500
LEAF_SIZE = 8


@njit(cache=True)
def _dot(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        s += a[i] * b[i]
    return s


@njit(cache=True)
def _segment(p, a, b):
    # weight of b on the closest point of segment ab
    ab = b - a
    denom = _dot(ab, ab)
    if denom <= 0.0:
        return 0.0
    t = _dot(p - a, ab) / denom
    return min(max(t, 0.0), 1.0)


@njit(cache=True)
def _closest_weights(p, a, b, c):
    ab = b - a
    ac = c - a
    ab2 = _dot(ab, ab)
    ac2 = _dot(ac, ac)
    abac = _dot(ab, ac)
    if ab2 * ac2 - abac * abac <= 1e-14 * ab2 * ac2 or ab2 <= 0.0 or ac2 <= 0.0:
        # degenerate triangle: closest point on one of its edges
        best = np.inf
        w0 = w1 = w2 = 0.0
        t = _segment(p, a, b)
        q = a + t * ab
        d = _dot(p - q, p - q)
        if d < best:
            best, w0, w1, w2 = d, 1.0 - t, t, 0.0
        t = _segment(p, a, c)
        q = a + t * ac
        d = _dot(p - q, p - q)
        if d < best:
            best, w0, w1, w2 = d, 1.0 - t, 0.0, t
        t = _segment(p, b, c)
        q = b + t * (c - b)
        d = _dot(p - q, p - q)
        if d < best:
            best, w0, w1, w2 = d, 0.0, 1.0 - t, t
        return w0, w1, w2

    ap = p - a
    d1 = _dot(ab, ap)
    d2 = _dot(ac, ap)
    if d1 <= 0.0 and d2 <= 0.0:
        return 1.0, 0.0, 0.0

    bp = p - b
    d3 = _dot(ab, bp)
    d4 = _dot(ac, bp)
    if d3 >= 0.0 and d4 <= d3:
        return 0.0, 1.0, 0.0

    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return 1.0 - v, v, 0.0

    cp = p - c
    d5 = _dot(ab, cp)
    d6 = _dot(ac, cp)
    if d6 >= 0.0 and d5 <= d6:
        return 0.0, 0.0, 1.0

    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return 1.0 - w, 0.0, w

    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return 0.0, 1.0 - w, w

    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return 1.0 - v - w, v, w


@njit(cache=True)
def _face_distance(p, tris, f):
    a = tris[f, 0]
    b = tris[f, 1]
    c = tris[f, 2]
    w0, w1, w2 = _closest_weights(p, a, b, c)
    d = 0.0
    for i in range(p.shape[0]):
        r = p[i] - (w0 * a[i] + w1 * b[i] + w2 * c[i])
        d += r * r
    return np.sqrt(d), w0, w1, w2


@njit(cache=True)
def _brute_force(p, tris):
    best = np.inf
    for f in range(tris.shape[0]):
        d, _, _, _ = _face_distance(p, tris, f)
        if d < best:
            best = d
    for f in range(tris.shape[0]):
        d, w0, w1, w2 = _face_distance(p, tris, f)
        if d <= best + 1e-12:
            return f, d, w0, w1, w2
    return -1, best, 0.0, 0.0, 0.0


@njit(cache=True)
def _box_distance2(p, lo, hi):
    s = 0.0
    for i in range(p.shape[0]):
        if p[i] < lo[i]:
            r = lo[i] - p[i]
            s += r * r
        elif p[i] > hi[i]:
            r = p[i] - hi[i]
            s += r * r
    return s


@njit(cache=True)
def _bvh_query(p, tris, lo, hi, left, right, start, count, order, stack):
    # pass 1: distance to the nearest face, best-first
    best = np.inf
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        if _box_distance2(p, lo[node], hi[node]) > best * best:
            continue
        if left[node] < 0:
            for i in range(start[node], start[node] + count[node]):
                d, _, _, _ = _face_distance(p, tris, order[i])
                if d < best:
                    best = d
            continue
        dl = _box_distance2(p, lo[left[node]], hi[left[node]])
        dr = _box_distance2(p, lo[right[node]], hi[right[node]])
        if dl <= dr:
            stack[top] = right[node]
            stack[top + 1] = left[node]
        else:
            stack[top] = left[node]
            stack[top + 1] = right[node]
        top += 2

    # pass 2: lowest face id within the tie tolerance of the minimum
    limit = best + 1e-12
    found = -1
    fd = best
    f0 = f1 = f2 = 0.0
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        if _box_distance2(p, lo[node], hi[node]) > limit * limit:
            continue
        if left[node] < 0:
            for i in range(start[node], start[node] + count[node]):
                f = order[i]
                if found >= 0 and f > found:
                    continue
                d, w0, w1, w2 = _face_distance(p, tris, f)
                if d <= limit:
                    found, fd, f0, f1, f2 = f, d, w0, w1, w2
            continue
        stack[top] = left[node]
        stack[top + 1] = right[node]
        top += 2
    return found, fd, f0, f1, f2


@njit(cache=True, parallel=True)
def _project_brute(points, tris, faces, weights, dists):
    for i in prange(points.shape[0]):
        f, d, w0, w1, w2 = _brute_force(points[i], tris)
        faces[i] = f
        dists[i] = d
        weights[i, 0] = w0
        weights[i, 1] = w1
        weights[i, 2] = w2


@njit(cache=True, parallel=True)
def _project_bvh(points, tris, lo, hi, left, right, start, count, order, depth, faces, weights, dists):
    for i in prange(points.shape[0]):
        stack = np.empty(2 * depth + 2, dtype=np.int64)
        f, d, w0, w1, w2 = _bvh_query(points[i], tris, lo, hi, left, right, start, count, order, stack)
        faces[i] = f
        dists[i] = d
        weights[i, 0] = w0
        weights[i, 1] = w1
        weights[i, 2] = w2


def closest_point_on_triangle(point: np.ndarray, tri: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Closest point of a triangle in R^m to ``point``.

    Parameters
    ----------
    point : array_like of shape (m,)
    tri : array_like of shape (3, m)

    Returns
    -------
    weights : ndarray of shape (3,)
        Barycentric coordinates of the closest point, non-negative and
        summing to one. Degenerate triangles are handled through their edges.
    distance : float
    """
    point = np.ascontiguousarray(point, dtype=np.float64)
    tri = np.ascontiguousarray(tri, dtype=np.float64).reshape(1, 3, -1)
    if tri.shape[2] != point.shape[0]:
        raise ValueError("point and triangle dimensions differ")
    d, w0, w1, w2 = _face_distance(point, tri, 0)
    return np.array([w0, w1, w2]), float(d)


@dataclass(frozen=True)
class ProjectionResult:
    """Nearest face, barycentric weights and distance for every query point."""

    faces: np.ndarray
    weights: np.ndarray
    distances: np.ndarray


class EmbeddedSurface:
    """
    The faces of a mesh placed in R^m by per-vertex coordinates, with a
    bounding volume hierarchy over their boxes for nearest-face queries.

    Parameters
    ----------
    X : ndarray of shape (n, m)
        Vertex coordinates.
    faces : ndarray of shape (k, 3)
    leaf_size : int, default 8
    brute_force_below : int, default 500
        Surfaces with fewer faces are always scanned exhaustively.
    """

    def __init__(self, X: np.ndarray, faces: np.ndarray, leaf_size: int = LEAF_SIZE,
                 brute_force_below: int = BRUTE_FORCE_BELOW):
        X = np.asarray(X, dtype=np.float64)
        faces = np.asarray(faces, dtype=np.int64)
        if len(faces) == 0:
            raise MeshError("cannot project onto an empty surface")
        if X.ndim != 2 or X.shape[1] < 2:
            raise ValueError("surface coordinates must have shape (n, m) with m >= 2")

        self.X = X
        self.faces = faces
        self.tris = np.ascontiguousarray(X[faces])
        self.brute_force_below = brute_force_below
        self._bvh = None
        if len(faces) >= brute_force_below:
            self._bvh = _build_bvh(self.tris, leaf_size)
            logger.debug("bvh over %d faces in R^%d: %d nodes, depth %d",
                         len(faces), X.shape[1], len(self._bvh[0]), self._bvh[-1])

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def project(self, points: np.ndarray, brute_force: bool = False) -> ProjectionResult:
        """
        Globally nearest face and barycentric weights for every point.

        Parameters
        ----------
        points : ndarray of shape (q, m)
        brute_force : bool, default False
            Scan every face even when a hierarchy is available.
        """
        points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, self.dim)
        q = len(points)
        faces = np.empty(q, dtype=np.int64)
        weights = np.empty((q, 3))
        dists = np.empty(q)
        if q == 0:
            return ProjectionResult(faces, weights, dists)

        if brute_force or self._bvh is None:
            _project_brute(points, self.tris, faces, weights, dists)
        else:
            lo, hi, left, right, start, count, order, depth = self._bvh
            _project_bvh(points, self.tris, lo, hi, left, right, start, count, order, depth,
                         faces, weights, dists)

        np.clip(weights, 0.0, 1.0, out=weights)
        weights /= weights.sum(axis=1, keepdims=True)
        return ProjectionResult(faces, weights, dists)


def project_points(points: np.ndarray, surface: EmbeddedSurface) -> ProjectionResult:
    """Functional form of :meth:`EmbeddedSurface.project`."""
    return surface.project(points)


def set_num_threads(threads: int) -> None:
    """Number of threads used by the parallel projection loops."""
    numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))


def _build_bvh(tris: np.ndarray, leaf_size: int):
    box_lo = tris.min(axis=1)
    box_hi = tris.max(axis=1)
    centroid = tris.mean(axis=1)
    order = np.arange(len(tris), dtype=np.int64)

    lo, hi, left, right, start, count = [], [], [], [], [], []

    def new_node(first, size):
        members = order[first:first + size]
        lo.append(box_lo[members].min(axis=0))
        hi.append(box_hi[members].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(first)
        count.append(size)
        return len(lo) - 1

    depth = 0
    pending = [(new_node(0, len(tris)), 0)]
    while pending:
        node, level = pending.pop()
        depth = max(depth, level)
        first, size = start[node], count[node]
        if size <= leaf_size:
            continue
        members = order[first:first + size]
        spread = centroid[members].max(axis=0) - centroid[members].min(axis=0)
        axis = int(np.argmax(spread))
        half = size // 2
        split = np.argpartition(centroid[members, axis], half, kind="introselect")
        order[first:first + size] = members[split]
        left[node] = new_node(first, half)
        right[node] = new_node(first + half, size - half)
        pending.append((left[node], level + 1))
        pending.append((right[node], level + 1))

    return (np.ascontiguousarray(lo), np.ascontiguousarray(hi), np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64), np.array(start, dtype=np.int64),
            np.array(count, dtype=np.int64), order, depth)
