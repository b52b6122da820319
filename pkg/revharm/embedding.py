# SPDX-License-Identifier: MIT
# Copyright (C) 2026 The revharm authors

"""
Euclidean embeddings of mesh vertices whose pairwise distances approximate
geodesic distances. With such an embedding the geodesic harmonic energy
becomes a quadratic function of the vertex images.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh, LinAlgError, orthogonal_procrustes
from scipy.spatial.distance import cdist

from revharm.errors import MeshError, NumericalError
from revharm.geodesics import GeodesicSolver
from revharm.mesh import MeshOperators, TriangleMesh

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DEFAULT_DIM = 8


@dataclass(frozen=True)
class EmbeddingStress:
    """
    Relative distance errors ``| ||x_u - x_v|| - d(u, v) | / d(u, v)`` over
    sampled vertex pairs.
    """

    median: float
    p95: float
    pairs: int


@dataclass(frozen=True, eq=False)
class MetricEmbedding:
    """
    Embedding ``X`` of shape (n, m), centered (column means 0).

    ``landmarks`` are the vertices whose distances were used to build it,
    empty for embeddings not built from distances.
    """

    X: np.ndarray
    landmarks: np.ndarray
    stress: EmbeddingStress
    method: str = "mds"

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]


def farthest_point_sampling(solver: GeodesicSolver, k: int, seed_vertex: int = 0):
    """
    Pick ``k`` vertices greedily, each the farthest from those already
    picked, starting with ``seed_vertex``.

    Returns
    -------
    landmarks : ndarray of shape (k,)
    dist : ndarray of shape (k, n)
        Distances from every landmark to every vertex.
    """
    n = solver.mesh.n_vertices
    landmarks = np.empty(k, dtype=np.int64)
    dist = np.empty((k, n))
    landmarks[0] = seed_vertex
    dist[0] = solver.distance_matrix([seed_vertex])[0]
    nearest = dist[0].copy()
    for i in range(1, k):
        landmarks[i] = int(np.argmax(nearest))
        dist[i] = solver.distance_matrix([landmarks[i]])[0]
        np.minimum(nearest, dist[i], out=nearest)
    return landmarks, dist


def classical_mds(D: np.ndarray, m: int) -> np.ndarray:
    """
    Classical (Torgerson) scaling of the symmetric distance matrix ``D``
    into ``m`` dimensions. Directions with non-positive eigenvalues are
    returned as zero columns.
    """
    k = len(D)
    sq = D ** 2
    B = -0.5 * (sq - sq.mean(axis=0)[None, :] - sq.mean(axis=1)[:, None] + sq.mean())
    values, vectors = eigh(B, subset_by_index=[k - m, k - 1])
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]
    return vectors * np.sqrt(np.maximum(values, 0.0))


def _relative_stress(D, Z, weights):
    delta = cdist(Z, Z)
    return 0.5 * float((weights * (D - delta) ** 2).sum())


def smacof(D: np.ndarray, Z: np.ndarray, weights: Optional[np.ndarray] = None,
           max_iter: int = 100, tol: float = 1e-6) -> np.ndarray:
    """
    Weighted stress majorization starting from ``Z``.

    Minimizes ``sum_{i<j} w_ij (D_ij - ||z_i - z_j||)^2``. The default
    weights ``1 / D_ij^2`` make this the sum of squared relative errors.
    Every iteration is a Guttman transform, so the stress never increases.
    """
    k = len(D)
    if weights is None:
        weights = np.divide(1.0, D ** 2, out=np.zeros_like(D), where=D > 0)
    weights = weights.copy()
    np.fill_diagonal(weights, 0.0)

    V = -weights
    np.fill_diagonal(V, weights.sum(axis=1))
    try:
        factor = cho_factor(V + 1.0 / k)
    except LinAlgError as err:
        raise NumericalError(f"stress majorization system is singular: {err}") from err

    Z = Z - Z.mean(axis=0)
    stress = _relative_stress(D, Z, weights)
    for iteration in range(max_iter):
        delta = cdist(Z, Z)
        ratio = np.divide(weights * D, delta, out=np.zeros_like(D), where=delta > 0)
        B = -ratio
        np.fill_diagonal(B, ratio.sum(axis=1) - np.diag(ratio))
        update = cho_solve(factor, B @ Z)
        update -= update.mean(axis=0)
        new_stress = _relative_stress(D, update, weights)
        if new_stress > stress:
            break
        Z, improvement, stress = update, stress - new_stress, new_stress
        if improvement <= tol * stress:
            break
    logger.debug("smacof: %d iterations, stress %.6g", iteration + 1, stress)
    return Z


def _triangulate(Z: np.ndarray, sq_landmark: np.ndarray, sq_dist: np.ndarray) -> np.ndarray:
    # Z must be the centered classical scaling of the landmark distances
    mean_sq = sq_landmark.mean(axis=1)
    return (-0.5 * np.linalg.pinv(Z) @ (sq_dist - mean_sq[:, None])).T


def place_points(X: np.ndarray, Z: np.ndarray, dist: np.ndarray, max_iter: int = 100,
                 tol: float = 1e-6, chunk: int = 512) -> np.ndarray:
    """
    Move each row of ``X`` to reduce its own relative stress against the
    fixed anchors ``Z``.

    ``dist`` holds the target distances, one row per anchor and one column
    per row of ``X``. Each point takes majorization steps
    ``x <- sum_l w_l (z_l + d_l (x - z_l) / ||x - z_l||) / sum_l w_l`` with
    ``w_l = 1 / d_l^2``, which never increase its stress.
    """
    X = np.array(X, dtype=np.float64)
    for start in range(0, len(X), chunk):
        d = dist[:, start:start + chunk].T
        w = np.divide(1.0, d ** 2, out=np.zeros_like(d), where=d > 0)
        total = np.maximum(w.sum(axis=1), np.finfo(float).tiny)[:, None]
        x = X[start:start + chunk]
        stress = float((w * (d - cdist(x, Z)) ** 2).sum())
        for _ in range(max_iter):
            diff = x[:, None, :] - Z[None, :, :]
            delta = np.linalg.norm(diff, axis=2)
            ratio = np.divide(d, delta, out=np.zeros_like(d), where=delta > 0)
            update = np.einsum("pl,pld->pd", w, Z[None, :, :] + ratio[:, :, None] * diff) / total
            new_stress = float((w * (d - cdist(update, Z)) ** 2).sum())
            if new_stress > stress:
                break
            x, improvement, stress = update, stress - new_stress, new_stress
            if improvement <= tol * stress:
                break
        X[start:start + chunk] = x
    return X


def distance_stress(X: np.ndarray, sources: np.ndarray, dist: np.ndarray,
                    rng: np.random.Generator, max_pairs: int = 100_000) -> EmbeddingStress:
    """
    Relative error statistics of embedding distances against ``dist``, the
    geodesic distances from ``sources`` to every vertex.
    """
    rows = np.repeat(np.arange(len(sources)), dist.shape[1])
    cols = np.tile(np.arange(dist.shape[1]), len(sources))
    if len(rows) > max_pairs:
        pick = rng.choice(len(rows), size=max_pairs, replace=False)
        rows, cols = rows[pick], cols[pick]
    d = dist[rows, cols]
    keep = d > 0
    rows, cols, d = rows[keep], cols[keep], d[keep]
    if len(d) == 0:
        return EmbeddingStress(0.0, 0.0, 0)
    approx = np.linalg.norm(X[sources[rows]] - X[cols], axis=1)
    rel = np.abs(approx - d) / d
    return EmbeddingStress(float(np.median(rel)), float(np.percentile(rel, 95)), len(d))


def mds_embed(mesh: TriangleMesh, operators: Optional[MeshOperators] = None, m: int = DEFAULT_DIM,
              n_landmarks: Optional[int] = None, full_threshold: int = 2000,
              solver: Optional[GeodesicSolver] = None, seed: int = 0,
              refine_iter: int = 100) -> MetricEmbedding:
    """
    Embed the vertices of ``mesh`` into R^m so that Euclidean distances
    approximate geodesic distances.

    Meshes with at most ``full_threshold`` vertices use all pairwise
    distances. Larger meshes use ``n_landmarks`` (default ``min(n, 1000)``)
    landmarks chosen by farthest point sampling from vertex 0 and place the
    remaining vertices by distance-based triangulation on the classical
    scaling of the landmarks. The landmark coordinates are then refined by
    weighted stress majorization and every placed vertex by majorization
    steps against its distances to the refined landmarks.

    Parameters
    ----------
    mesh : TriangleMesh
    operators : MeshOperators, optional
    m : int, default 8
        Embedding dimension.
    n_landmarks : int, optional
    full_threshold : int, default 2000
    solver : GeodesicSolver, optional
        Geodesic distance provider; a heat method solver by default.
    seed : int, default 0
        Seed of the pair sampling used for the reported stress.
    refine_iter : int, default 100
        Maximum number of stress majorization iterations, 0 disables it.

    Returns
    -------
    embedding : MetricEmbedding

    Raises
    ------
    MeshError
        If the mesh is not connected.
    ValueError
        If ``m < 2`` or ``m > n``.
    """
    n = mesh.n_vertices
    if m < 2:
        raise ValueError("embedding dimension must be at least 2")
    if m > n:
        raise ValueError(f"embedding dimension {m} exceeds the vertex count {n}")
    if not mesh.is_connected:
        raise MeshError(f"metric embedding needs a connected mesh, found {mesh.components[0]} components")

    solver = GeodesicSolver(mesh, operators) if solver is None else solver

    if n <= full_threshold:
        landmarks = np.arange(n)
        dist = solver.distance_matrix(landmarks)
    else:
        k = min(n, 1000) if n_landmarks is None else int(n_landmarks)
        k = max(k, m + 1)
        landmarks, dist = farthest_point_sampling(solver, k)

    D = dist[:, landmarks]
    D = 0.5 * (D + D.T)
    Z0 = classical_mds(D, m)
    Z0 -= Z0.mean(axis=0)
    Z = smacof(D, Z0, max_iter=refine_iter) if refine_iter else Z0

    if len(landmarks) == n:
        X = Z
    else:
        free = np.ones(n, dtype=bool)
        free[landmarks] = False
        placed = _triangulate(Z0, D ** 2, dist[:, free] ** 2)
        if refine_iter:
            rotation, _ = orthogonal_procrustes(Z0, Z)
            placed = place_points(placed @ rotation, Z, dist[:, free], max_iter=refine_iter)
        X = np.empty((n, m))
        X[free] = placed
        X[landmarks] = Z
    X = X - X.mean(axis=0)

    stress = distance_stress(X, landmarks, dist, np.random.default_rng(seed))
    logger.info("embedded %d vertices into R^%d from %d landmarks: median error %.3g, p95 %.3g",
                n, m, len(landmarks), stress.median, stress.p95)
    return MetricEmbedding(X, landmarks, stress, "mds")


def coordinate_embedding(mesh: TriangleMesh, m: int = 3) -> MetricEmbedding:
    """
    The trivial embedding: centered vertex coordinates padded with zero
    columns up to ``m``. Its distances are Euclidean, not geodesic.
    """
    if m < 3:
        raise ValueError("coordinate embedding needs at least 3 dimensions")
    X = np.zeros((mesh.n_vertices, m))
    X[:, :3] = mesh.vertices - mesh.vertices.mean(axis=0)
    return MetricEmbedding(X, np.empty(0, dtype=np.int64), EmbeddingStress(0.0, 0.0, 0), "coordinates")


@dataclass(frozen=True)
class EdgeLengthReport:
    """Relative difference between edge lengths in R^3 and in the embedding."""

    discrepancy: np.ndarray
    flagged: np.ndarray
    threshold: float

    @property
    def max(self) -> float:
        return float(self.discrepancy.max())

    @property
    def median(self) -> float:
        return float(np.median(self.discrepancy))


def embedding_weights_check(mesh: TriangleMesh, operators: Optional[MeshOperators], X: np.ndarray,
                            threshold: float = 0.1) -> EdgeLengthReport:
    """
    Compare every edge length in R^3 with its length in the embedding.

    The cotangent weights of the surface are reused for the embedded mesh,
    which is only sound while the two agree. Edges whose relative length
    change exceeds ``threshold`` are flagged and reported with a warning;
    nothing fails.
    """
    u, v = mesh.edges.T
    surface = np.linalg.norm(mesh.vertices[u] - mesh.vertices[v], axis=1)
    embedded = np.linalg.norm(X[u] - X[v], axis=1)
    discrepancy = np.abs(embedded - surface) / surface
    flagged = np.flatnonzero(discrepancy > threshold)
    if len(flagged):
        logger.warning("%d of %d edges change length by more than %.0f%% in the embedding (max %.3g)",
                       len(flagged), len(u), 100 * threshold, discrepancy.max())
    return EdgeLengthReport(discrepancy, flagged, threshold)


def save_embedding(path: PathLike, X: np.ndarray) -> None:
    """Binary sidecar: int64 ``n``, int64 ``m``, then ``n * m`` float64 row-major."""
    X = np.ascontiguousarray(X, dtype="<f8")
    with open(path, "wb") as file:
        file.write(np.array(X.shape, dtype="<i8").tobytes())
        file.write(X.tobytes())


def load_embedding(path: PathLike) -> np.ndarray:
    with open(path, "rb") as file:
        header = np.frombuffer(file.read(16), dtype="<i8")
        if len(header) != 2:
            raise ValueError(f"{path}: truncated embedding header")
        n, m = (int(x) for x in header)
        payload = np.frombuffer(file.read(), dtype="<f8")
    if payload.size != n * m:
        raise ValueError(f"{path}: expected {n * m} values, found {payload.size}")
    return payload.reshape(n, m).astype(np.float64)


def cached_embedding(mesh: TriangleMesh, operators: Optional[MeshOperators], cache_dir: Optional[PathLike],
                     m: int = DEFAULT_DIM, solver: Optional[GeodesicSolver] = None, **kwargs) -> MetricEmbedding:
    """
    :func:`mds_embed` with an on-disk cache keyed by the mesh digest and the
    parameters. ``cache_dir=None`` disables the cache.
    """
    if cache_dir is None:
        return mds_embed(mesh, operators, m, solver=solver, **kwargs)

    method = "heat" if solver is None else solver.method
    options = "-".join(f"{key}{kwargs[key]}" for key in sorted(kwargs))
    path = Path(cache_dir) / f"{mesh.digest}-m{m}-{method}{'-' + options if options else ''}.emb"
    if path.exists():
        X = load_embedding(path)
        if X.shape == (mesh.n_vertices, m):
            logger.info("using cached embedding %s", path)
            nan = float("nan")
            return MetricEmbedding(X, np.empty(0, dtype=np.int64), EmbeddingStress(nan, nan, 0), "mds")
        logger.warning("ignoring cached embedding %s with shape %s", path, X.shape)

    embedding = mds_embed(mesh, operators, m, solver=solver, **kwargs)
    os.makedirs(cache_dir, exist_ok=True)
    save_embedding(path, embedding.X)
    return embedding
