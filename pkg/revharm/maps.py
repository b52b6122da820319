# SPDX-License-Identifier: MIT
# Copyright (C) 2026 The revharm authors

"""
Precise maps: every source vertex is sent to a point on the target surface,
stored as a target face and three barycentric weights. Equivalently a sparse
matrix with at most three non-zeros per row, all on one face.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from revharm.errors import MapError
from revharm.mesh import TriangleMesh
from revharm.projection import EmbeddedSurface

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

WEIGHT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class BarycentricPoint:
    """A point on a mesh: ``face`` and three convex ``weights``."""

    face: int
    weights: Tuple[float, float, float]

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64).reshape(3)
        if (weights < -WEIGHT_TOLERANCE).any() or (weights > 1 + WEIGHT_TOLERANCE).any():
            raise MapError(f"barycentric weights {weights.tolist()} are not convex")
        weights = np.clip(weights, 0.0, 1.0)
        weights = weights / weights.sum()
        object.__setattr__(self, "face", int(self.face))
        object.__setattr__(self, "weights", tuple(float(w) for w in weights))

    @classmethod
    def at_vertex(cls, mesh: TriangleMesh, v: int) -> "BarycentricPoint":
        """Vertex ``v`` expressed on its lowest incident face."""
        face = int(mesh.vertex_lowest_face[v])
        weights = (mesh.faces[face] == v).astype(np.float64)
        return cls(face, tuple(weights))

    def position(self, mesh: TriangleMesh, coordinates: Optional[np.ndarray] = None) -> np.ndarray:
        coordinates = mesh.vertices if coordinates is None else coordinates
        return np.asarray(self.weights) @ coordinates[mesh.faces[self.face]]


class PreciseMap:
    """
    One barycentric point on the target mesh per source vertex.

    Parameters
    ----------
    faces : array_like of shape (n_source,)
        Target face of every row.
    weights : array_like of shape (n_source, 3)
        Barycentric weights; entries in ``[-1e-9, 1 + 1e-9]`` are clipped
        and every row renormalized to sum to one.
    target : TriangleMesh
        The mesh the rows point into.

    Raises
    ------
    MapError
        If a face id is out of range or a weight is not convex.
    """

    def __init__(self, faces: np.ndarray, weights: np.ndarray, target: TriangleMesh):
        faces = np.array(faces, dtype=np.int64).reshape(-1)
        weights = np.array(weights, dtype=np.float64).reshape(-1, 3)
        if len(faces) != len(weights):
            raise MapError(f"{len(faces)} faces but {len(weights)} weight rows")
        if ((faces < 0) | (faces >= target.n_faces)).any():
            bad = np.flatnonzero((faces < 0) | (faces >= target.n_faces))
            raise MapError(f"rows {bad[:10].tolist()} reference faces outside [0, {target.n_faces})")
        bad_rows = ((weights < -WEIGHT_TOLERANCE) | (weights > 1 + WEIGHT_TOLERANCE)
                    | ~np.isfinite(weights)).any(axis=1)
        if bad_rows.any():
            bad = np.flatnonzero(bad_rows)
            raise MapError(f"rows {bad[:10].tolist()} have weights outside [-1e-9, 1 + 1e-9]")

        np.clip(weights, 0.0, 1.0, out=weights)
        total = weights.sum(axis=1, keepdims=True)
        if (total <= 0).any():
            raise MapError("rows with all-zero weights")
        weights /= total

        faces.setflags(write=False)
        weights.setflags(write=False)
        self.faces = faces
        self.weights = weights
        self.target = target

    def __len__(self) -> int:
        return len(self.faces)

    def __repr__(self) -> str:
        return f"PreciseMap(n_source={len(self)}, n_target={self.target.n_vertices})"

    @property
    def n_source(self) -> int:
        return len(self.faces)

    @property
    def n_target(self) -> int:
        return self.target.n_vertices

    def row(self, i: int) -> BarycentricPoint:
        return BarycentricPoint(int(self.faces[i]), tuple(self.weights[i]))

    def vertex_ids(self) -> np.ndarray:
        """(n_source, 3) target vertex ids of every row."""
        return self.target.faces[self.faces]

    def matrix(self) -> sparse.csr_matrix:
        """The map as a sparse ``n_source x n_target`` matrix."""
        rows = np.repeat(np.arange(len(self)), 3)
        return sparse.csr_matrix((self.weights.ravel(), (rows, self.vertex_ids().ravel())),
                                 shape=(len(self), self.n_target))

    def apply(self, columns: np.ndarray) -> np.ndarray:
        return apply_map(self, columns)

    def canonical(self) -> "PreciseMap":
        """
        Same points, with rows lying exactly on an edge or a vertex moved to
        the lowest-id incident face.
        """
        return PreciseMap(*_canonical_rows(self.target, self.faces, self.weights), self.target)

    def with_rows(self, rows: np.ndarray, other: "PreciseMap") -> "PreciseMap":
        """Copy of this map with ``rows`` taken from ``other``."""
        faces = self.faces.copy()
        weights = self.weights.copy()
        faces[rows] = other.faces[rows]
        weights[rows] = other.weights[rows]
        return PreciseMap(faces, weights, self.target)

    def equals(self, other: "PreciseMap", atol: float = 0.0) -> bool:
        return (len(self) == len(other) and np.array_equal(self.faces, other.faces)
                and np.allclose(self.weights, other.weights, rtol=0.0, atol=atol))

    @classmethod
    def from_vertices(cls, mesh: TriangleMesh, vertices: np.ndarray) -> "PreciseMap":
        """Vertex-to-vertex map, every row on the lowest-id face of its vertex."""
        vertices = np.asarray(vertices, dtype=np.int64).reshape(-1)
        if ((vertices < 0) | (vertices >= mesh.n_vertices)).any():
            raise MapError(f"vertex ids must lie in [0, {mesh.n_vertices})")
        faces = mesh.vertex_lowest_face[vertices]
        if (faces < 0).any():
            raise MapError("vertex not referenced by any face")
        weights = (mesh.faces[faces] == vertices[:, None]).astype(np.float64)
        return cls(faces, weights, mesh)

    @classmethod
    def identity(cls, mesh: TriangleMesh) -> "PreciseMap":
        return cls.from_vertices(mesh, np.arange(mesh.n_vertices))

    @classmethod
    def from_projection(cls, points: np.ndarray, mesh: TriangleMesh,
                        surface: Optional[EmbeddedSurface] = None) -> "PreciseMap":
        """Map every point to its closest point on ``mesh`` (or on ``surface``)."""
        surface = EmbeddedSurface(mesh.vertices, mesh.faces) if surface is None else surface
        result = surface.project(points)
        return cls(result.faces, result.weights, mesh).canonical()


def _canonical_rows(mesh: TriangleMesh, faces: np.ndarray, weights: np.ndarray):
    faces = faces.copy()
    weights = weights.copy()
    corners = mesh.faces[faces]
    support = weights > 0
    count = support.sum(axis=1)

    on_vertex = np.flatnonzero(count == 1)
    if len(on_vertex):
        v = corners[on_vertex][support[on_vertex]]
        lowest = mesh.vertex_lowest_face[v]
        faces[on_vertex] = lowest
        weights[on_vertex] = (mesh.faces[lowest] == v[:, None]).astype(np.float64)

    on_edge = np.flatnonzero(count == 2)
    if len(on_edge):
        ends = corners[on_edge][support[on_edge]].reshape(-1, 2)
        values = weights[on_edge][support[on_edge]].reshape(-1, 2)
        lowest = mesh.edge_lowest_face[mesh.edge_index(ends[:, 0], ends[:, 1])]
        new_corners = mesh.faces[lowest]
        new_weights = np.zeros((len(on_edge), 3))
        for side in range(2):
            new_weights += (new_corners == ends[:, side][:, None]) * values[:, side][:, None]
        faces[on_edge] = lowest
        weights[on_edge] = new_weights

    return faces, weights


def apply_map(P: PreciseMap, columns: np.ndarray) -> np.ndarray:
    """
    Apply a precise map to per-target-vertex data.

    Parameters
    ----------
    P : PreciseMap
    columns : ndarray of shape (n_target,) or (n_target, k)

    Returns
    -------
    result : ndarray of shape (n_source,) or (n_source, k)
        Row ``i`` is the convex combination of the rows of ``columns`` at
        the three corners of row ``i``'s face.

    Raises
    ------
    ValueError
        If ``columns`` does not have one row per target vertex.
    """
    columns = np.asarray(columns)
    if columns.shape[0] != P.n_target:
        raise ValueError(f"expected {P.n_target} rows, got {columns.shape[0]}")
    corners = columns[P.vertex_ids()]
    if columns.ndim == 1:
        return np.einsum("ij,ij->i", P.weights, corners)
    return np.einsum("ij,ij...->i...", P.weights, corners)


def eval_map_at_points(P: PreciseMap, source: TriangleMesh, faces: np.ndarray, weights: np.ndarray,
                       coordinates: Optional[np.ndarray] = None,
                       surface: Optional[EmbeddedSurface] = None) -> PreciseMap:
    """
    Extend the vertex map ``P`` to arbitrary points of the source mesh.

    The images of the three corners of every point's face are blended with
    the point's weights in ``coordinates`` (target vertex positions or an
    embedding of the target) and the blend is projected back onto the
    target surface. When all contributing corner images lie on one target
    face the blend is taken directly in that face.

    Returns
    -------
    images : PreciseMap
        One row per query point.
    """
    faces = np.asarray(faces, dtype=np.int64).reshape(-1)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1, 3)
    target = P.target
    coordinates = target.vertices if coordinates is None else coordinates

    corners = source.faces[faces]
    corner_faces = P.faces[corners]
    corner_weights = P.weights[corners]
    used = weights > 0
    first = corner_faces[np.arange(len(faces)), np.argmax(used, axis=1)]
    direct = ((corner_faces == first[:, None]) | ~used).all(axis=1)

    out_faces = np.empty(len(faces), dtype=np.int64)
    out_weights = np.empty((len(faces), 3))
    out_faces[direct] = first[direct]
    out_weights[direct] = np.einsum("ij,ijk->ik", weights[direct], corner_weights[direct])

    rest = np.flatnonzero(~direct)
    if len(rest):
        images = apply_map(P, coordinates)
        blend = np.einsum("ij,ijk->ik", weights[rest], images[corners[rest]])
        surface = EmbeddedSurface(coordinates, target.faces) if surface is None else surface
        result = surface.project(blend)
        out_faces[rest] = result.faces
        out_weights[rest] = result.weights

    return PreciseMap(out_faces, out_weights, target)


def eval_map_at_point(P: PreciseMap, source: TriangleMesh, p: BarycentricPoint,
                      coordinates: Optional[np.ndarray] = None,
                      surface: Optional[EmbeddedSurface] = None) -> BarycentricPoint:
    """Single-point form of :func:`eval_map_at_points`."""
    return eval_map_at_points(P, source, [p.face], [p.weights], coordinates, surface).row(0)


def invert_pointwise(P12: PreciseMap, mesh1: TriangleMesh, mesh2: TriangleMesh) -> PreciseMap:
    """
    Map every vertex of ``mesh2`` to the vertex of ``mesh1`` whose image
    under ``P12`` is nearest in R^3. Ties go to the lowest vertex id.

    Returns
    -------
    P21 : PreciseMap
        Vertex rows on the lowest-id incident faces of ``mesh1``.
    """
    if P12.target is not mesh2 and P12.n_target != mesh2.n_vertices:
        raise MapError("map target does not match mesh2")
    if P12.n_source != mesh1.n_vertices:
        raise MapError("map source does not match mesh1")

    images = apply_map(P12, mesh2.vertices)
    unique, first = np.unique(images, axis=0, return_index=True)
    tree = cKDTree(unique)
    k = min(8, len(unique))
    dist, idx = tree.query(mesh2.vertices, k=k)
    dist = dist.reshape(len(mesh2.vertices), k)
    idx = idx.reshape(len(mesh2.vertices), k)

    candidates = first[idx]
    tied = dist <= dist[:, :1] + 1e-12 * np.maximum(1.0, dist[:, :1])
    nearest = np.where(tied, candidates, np.iinfo(np.int64).max).min(axis=1)
    return PreciseMap.from_vertices(mesh1, nearest)


def project_onto_mesh(points: np.ndarray, mesh: TriangleMesh) -> PreciseMap:
    """
    Closest points on ``mesh`` of arbitrary points in R^3, e.g. the vertices
    of another tessellation of the same surface.
    """
    return PreciseMap.from_projection(np.asarray(points, dtype=np.float64), mesh)


def save_map(path: PathLike, P: PreciseMap) -> None:
    """
    Write ``P`` as text: a header ``n_source n_target``, then one row
    ``face w1 w2 w3`` per source vertex with 1-based face ids. Weights are
    printed with 17 significant digits, so the round trip is exact.
    """
    with open(path, "wt", encoding="utf8") as file:
        file.write(f"{P.n_source} {P.n_target}\n")
        for face, (w1, w2, w3) in zip((P.faces + 1).tolist(), P.weights.tolist()):
            file.write(f"{face} {w1:.17g} {w2:.17g} {w3:.17g}\n")


def load_map(path: PathLike, target: TriangleMesh, n_source: Optional[int] = None) -> PreciseMap:
    """
    Read a map written by :func:`save_map`.

    Raises
    ------
    MapError
        If the header disagrees with the meshes, a face id is out of range or
        a weight lies outside ``[-1e-9, 1 + 1e-9]``.
    """
    with open(path, "rt", encoding="utf8") as file:
        header = file.readline().split()
        try:
            rows = np.loadtxt(file, ndmin=2)
        except ValueError as err:
            raise MapError(f"{path}: cannot parse map rows: {err}") from None
    if len(header) != 2:
        raise MapError(f"{path}: header must hold the source and target vertex counts")
    count, n_target = int(header[0]), int(header[1])
    if n_target != target.n_vertices:
        raise MapError(f"{path}: map targets {n_target} vertices, mesh has {target.n_vertices}")
    if n_source is not None and count != n_source:
        raise MapError(f"{path}: map has {count} rows, source mesh has {n_source} vertices")
    if rows.size == 0:
        rows = rows.reshape(0, 4)
    if rows.shape != (count, 4):
        raise MapError(f"{path}: expected {count} rows of 4 values, got {rows.shape}")

    faces = rows[:, 0]
    if (faces != np.round(faces)).any():
        raise MapError(f"{path}: face ids must be integers")
    return PreciseMap(faces.astype(np.int64) - 1, rows[:, 1:], target)
