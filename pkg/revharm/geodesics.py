# SPDX-License-Identifier: MIT
# Copyright (C) 2026 The revharm authors

"""
Geodesic distances on triangle meshes.

The default method is the heat method: diffuse heat from the source for a
short time, normalize the gradient of the result and recover the distance
from a Poisson problem. Both linear systems are factorized once per mesh, so
distances from many sources only cost back substitutions. The ``"dijkstra"``
method runs shortest paths on the edge graph instead.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra
from scipy.sparse.linalg import splu

from revharm.errors import MeshError, NumericalError
from revharm.mesh import MeshOperators, TriangleMesh, compute_operators

logger = logging.getLogger(__name__)

METHODS = ("heat", "dijkstra")


@dataclass(frozen=True, eq=False)
class GeodesicField:
    """Distance from ``source`` to every vertex; ``inf`` where unreachable."""

    source: int
    dist: np.ndarray
    method: str = "heat"


def gradient_operator(mesh: TriangleMesh) -> sparse.csr_matrix:
    """
    Sparse ``(3 k, n)`` matrix mapping vertex values to the constant
    gradient on every face; rows ``3 f .. 3 f + 2`` hold the x, y, z
    components for face ``f``.
    """
    V, F = mesh.vertices, mesh.faces
    k = len(F)
    normal = np.cross(V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]])
    double_area = np.linalg.norm(normal, axis=1)
    if (double_area <= 0).any():
        raise MeshError("zero-area faces", faces=np.flatnonzero(double_area <= 0))
    normal /= double_area[:, None]

    rows, cols, data = [], [], []
    base = 3 * np.arange(k)[:, None] + np.arange(3)
    for c in range(3):
        # edge opposite corner c, counterclockwise
        edge = V[F[:, (c + 2) % 3]] - V[F[:, (c + 1) % 3]]
        rot = np.cross(normal, edge) / double_area[:, None]
        rows.append(base)
        cols.append(np.repeat(F[:, c][:, None], 3, axis=1))
        data.append(rot)

    return sparse.csr_matrix(
        (np.concatenate(data).ravel(), (np.concatenate(rows).ravel(), np.concatenate(cols).ravel())),
        shape=(3 * k, mesh.n_vertices))


class GeodesicSolver:
    """
    Reusable geodesic distance solver for one mesh.

    Parameters
    ----------
    mesh : TriangleMesh
    operators : MeshOperators, optional
        Computed from ``mesh`` when omitted.
    method : {"heat", "dijkstra"}, default "heat"
    time_factor : float, default 1.0
        Heat diffusion time in units of the squared mean edge length.
    chunk_size : int, default 128
        Number of sources solved together.

    Notes
    -----
    The instance is safe to share between threads: the factorizations are
    only used under a lock, everything else works on local arrays.
    """

    def __init__(self, mesh: TriangleMesh, operators: Optional[MeshOperators] = None,
                 method: str = "heat", time_factor: float = 1.0, chunk_size: int = 128):
        if method not in METHODS:
            raise ValueError(f"unknown geodesic method '{method}', expected one of {METHODS}")
        if time_factor <= 0:
            raise ValueError("time_factor has to be positive")

        self.mesh = mesh
        self.method = method
        self.chunk_size = max(1, int(chunk_size))
        self._lock = threading.Lock()
        self._labels = mesh.components[1]

        if method == "heat":
            operators = compute_operators(mesh) if operators is None else operators
            self._prepare_heat(operators, time_factor)
        else:
            u, v = mesh.edges.T
            length = np.linalg.norm(mesh.vertices[u] - mesh.vertices[v], axis=1)
            n = mesh.n_vertices
            self._graph = sparse.csr_matrix((length, (u, v)), shape=(n, n))

    def _prepare_heat(self, operators: MeshOperators, time_factor: float) -> None:
        G = gradient_operator(self.mesh)
        face_weight = sparse.diags(np.repeat(operators.face_areas, 3))
        stiffness = (G.T @ face_weight @ G).tocsc()
        mass = sparse.diags(operators.mass)

        t = time_factor * self.mesh.mean_edge_length ** 2
        # tiny mass shift fixing the additive constant of the Poisson problem
        shift = 1e-10 * stiffness.diagonal().mean() / operators.mass.mean()
        try:
            self._heat = splu((mass + t * stiffness).tocsc())
            self._poisson = splu((stiffness + shift * mass).tocsc())
        except RuntimeError as err:
            raise NumericalError(f"cannot factorize the heat method systems: {err}") from err

        self._gradient = G
        self._divergence = (G.T @ face_weight).tocsr()
        logger.debug("heat method prepared: n=%d, t=%.3g", self.mesh.n_vertices, t)

    def distance_matrix(self, sources: Sequence[int]) -> np.ndarray:
        """
        Distances from every source to every vertex.

        Returns
        -------
        dist : ndarray of shape (len(sources), n)
            ``dist[i, sources[i]] == 0``; ``inf`` for vertices in another
            connected component.
        """
        sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
        n = self.mesh.n_vertices
        if ((sources < 0) | (sources >= n)).any():
            raise ValueError(f"source vertices must lie in [0, {n})")

        out = np.empty((len(sources), n))
        for start in range(0, len(sources), self.chunk_size):
            chunk = sources[start:start + self.chunk_size]
            if self.method == "heat":
                out[start:start + len(chunk)] = self._heat_chunk(chunk)
            else:
                out[start:start + len(chunk)] = dijkstra(self._graph, directed=False, indices=chunk)
        return out

    def _heat_chunk(self, sources: np.ndarray) -> np.ndarray:
        n, b = self.mesh.n_vertices, len(sources)
        delta = np.zeros((n, b))
        delta[sources, np.arange(b)] = 1.0

        with self._lock:
            heat = self._heat.solve(delta)

        grad = (self._gradient @ heat).reshape(-1, 3, b)
        norm = np.linalg.norm(grad, axis=1, keepdims=True)
        direction = np.divide(-grad, norm, out=np.zeros_like(grad), where=norm > 0)
        rhs = self._divergence @ direction.reshape(-1, b)

        with self._lock:
            phi = self._poisson.solve(rhs)

        if not np.isfinite(phi).all():
            raise NumericalError("heat method produced non-finite distances")

        phi = (phi - phi[sources, np.arange(b)]).T
        np.maximum(phi, 0.0, out=phi)
        phi[self._labels[None, :] != self._labels[sources][:, None]] = np.inf
        phi[np.arange(b), sources] = 0.0
        return phi

    def single_source(self, source: int) -> GeodesicField:
        return GeodesicField(int(source), self.distance_matrix([source])[0], self.method)

    def point_distances(self, faces_a: np.ndarray, weights_a: np.ndarray,
                        faces_b: np.ndarray, weights_b: np.ndarray) -> np.ndarray:
        """
        Distances between pairs of surface points ``(faces_a[i], weights_a[i])``
        and ``(faces_b[i], weights_b[i])``.

        Two vertices get the vertex field value; two points on one face get
        their straight-line distance inside the face; every other pair gets
        the barycentric interpolation of the vertex fields of both faces.
        """
        F = self.mesh.faces
        faces_a = np.asarray(faces_a, dtype=np.int64)
        faces_b = np.asarray(faces_b, dtype=np.int64)
        weights_a = np.asarray(weights_a, dtype=np.float64).reshape(-1, 3)
        weights_b = np.asarray(weights_b, dtype=np.float64).reshape(-1, 3)
        va, vb = F[faces_a], F[faces_b]
        out = np.zeros(len(faces_a))

        sources = np.unique(va[weights_a > 0])
        lookup = np.full(self.mesh.n_vertices, -1, dtype=np.int64)
        pair_weight = weights_a[:, :, None] * weights_b[:, None, :]
        for start in range(0, len(sources), self.chunk_size):
            chunk = sources[start:start + self.chunk_size]
            fields = self.distance_matrix(chunk)
            lookup[chunk] = np.arange(len(chunk))
            rows = lookup[va]
            present = (rows >= 0)[:, :, None] & (pair_weight > 0)
            values = fields[np.maximum(rows, 0)[:, :, None], vb[:, None, :]]
            out += np.where(present, pair_weight * values, 0.0).sum(axis=(1, 2))
            lookup[chunk] = -1

        V = self.mesh.vertices
        at_vertex = (weights_a.max(axis=1) >= 1.0) & (weights_b.max(axis=1) >= 1.0)
        same = (faces_a == faces_b) & ~at_vertex
        if same.any():
            pa = np.einsum("ij,ijk->ik", weights_a[same], V[va[same]])
            pb = np.einsum("ij,ijk->ik", weights_b[same], V[vb[same]])
            out[same] = np.linalg.norm(pa - pb, axis=1)
        return out


def single_source(mesh: TriangleMesh, operators: Optional[MeshOperators], v: int,
                  method: str = "heat") -> GeodesicField:
    """
    Approximate geodesic distance from vertex ``v`` to every vertex.

    Build a :class:`GeodesicSolver` instead when distances from more than
    one source are needed.

    Parameters
    ----------
    mesh : TriangleMesh
    operators : MeshOperators or None
    v : int
        Source vertex.
    method : {"heat", "dijkstra"}

    Returns
    -------
    field : GeodesicField
        ``inf`` for vertices that are not connected to ``v``.
    """
    return GeodesicSolver(mesh, operators, method).single_source(v)


def geodesic_voronoi(mesh: TriangleMesh, operators: Optional[MeshOperators], centers: Sequence[int],
                     solver: Optional[GeodesicSolver] = None) -> np.ndarray:
    """
    Assign every vertex to its geodesically nearest center.

    Parameters
    ----------
    mesh : TriangleMesh
    operators : MeshOperators or None
    centers : sequence of int
        Center vertices, duplicates allowed.
    solver : GeodesicSolver, optional
        Reused when given.

    Returns
    -------
    assignment : ndarray of shape (n,)
        Index into ``centers`` of the nearest center. Ties go to the lowest
        index, centers are assigned to (the first occurrence of) themselves
        and vertices that reach no center get -1.

    Raises
    ------
    ValueError
        If ``centers`` is empty.
    """
    centers = np.asarray(centers, dtype=np.int64).reshape(-1)
    if len(centers) == 0:
        raise ValueError("geodesic_voronoi needs at least one center")
    solver = GeodesicSolver(mesh, operators) if solver is None else solver

    dist = solver.distance_matrix(centers)
    assignment = np.argmin(dist, axis=0)
    assignment[~np.isfinite(dist.min(axis=0))] = -1
    unique, first = np.unique(centers, return_index=True)
    assignment[unique] = first
    return assignment


def evaluate_geodesic(mesh: TriangleMesh, operators: Optional[MeshOperators], p, q,
                      solver: Optional[GeodesicSolver] = None) -> float:
    """
    Geodesic distance between two surface points given as
    :class:`~revharm.maps.BarycentricPoint`.
    """
    solver = GeodesicSolver(mesh, operators) if solver is None else solver
    return float(solver.point_distances([p.face], [p.weights], [q.face], [q.weights])[0])
