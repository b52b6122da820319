# SPDX-License-Identifier: MIT
# Copyright (C) 2026 The revharm authors

"""
Triangle meshes, OBJ input/output and the discrete operators every other
module works with (cotangent weights, lumped mass, per-face differentials).
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from revharm.errors import MeshError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# faces whose area is below this fraction of their squared longest edge
# are treated as zero-area
_DEGENERATE_AREA_RATIO = 1e-14


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """
    An indexed triangle mesh.

    Vertex order is preserved exactly as given, since vertex ids are the
    contract with landmark and map files. Texture coordinates are optional
    and stored per face corner (``face_uv`` indexes into ``uv``).

    Parameters
    ----------
    vertices : array_like of shape (n, 3)
    faces : array_like of shape (k, 3)
        0-based vertex indices.
    uv : array_like of shape (t, 2), optional
    face_uv : array_like of shape (k, 3), optional
        0-based indices into ``uv`` for every face corner.

    Raises
    ------
    MeshError
        If the arrays have the wrong shape, an index is out of range, a face
        repeats a vertex, an edge borders more than two faces or a
        coordinate is not finite.
    """

    vertices: np.ndarray
    faces: np.ndarray
    uv: Optional[np.ndarray] = None
    face_uv: Optional[np.ndarray] = None

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=np.float64)
        faces = np.array(self.faces, dtype=np.int64)

        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError(f"vertices must have shape (n, 3), got {vertices.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError(f"faces must have shape (k, 3), got {faces.shape}")
        if len(faces) == 0:
            raise MeshError("mesh has no faces")

        finite = np.isfinite(vertices).all(axis=1)
        if not finite.all():
            bad = np.flatnonzero(~finite)
            raise MeshError(f"non-finite coordinates at vertices {bad[:10].tolist()}")

        out_of_range = ((faces < 0) | (faces >= len(vertices))).any(axis=1)
        if out_of_range.any():
            bad = np.flatnonzero(out_of_range)
            raise MeshError(
                f"faces {bad[:10].tolist()} reference vertices outside [0, {len(vertices)})",
                faces=bad)

        repeated = ((faces[:, 0] == faces[:, 1])
                    | (faces[:, 1] == faces[:, 2])
                    | (faces[:, 2] == faces[:, 0]))
        if repeated.any():
            bad = np.flatnonzero(repeated)
            raise MeshError(f"faces {bad[:10].tolist()} repeat a vertex index", faces=bad)

        uv, face_uv = self.uv, self.face_uv
        if (uv is None) != (face_uv is None):
            raise MeshError("uv and face_uv must be given together")
        if uv is not None:
            uv = np.array(uv, dtype=np.float64)
            face_uv = np.array(face_uv, dtype=np.int64)
            if uv.ndim != 2 or uv.shape[1] != 2:
                raise MeshError(f"uv must have shape (t, 2), got {uv.shape}")
            if face_uv.shape != faces.shape:
                raise MeshError("face_uv must have the same shape as faces")
            if ((face_uv < 0) | (face_uv >= len(uv))).any():
                raise MeshError("face_uv references texture coordinates out of range")
            uv, face_uv = _readonly(uv), _readonly(face_uv)

        object.__setattr__(self, "vertices", _readonly(vertices))
        object.__setattr__(self, "faces", _readonly(faces))
        object.__setattr__(self, "uv", uv)
        object.__setattr__(self, "face_uv", face_uv)

        counts = self._edge_face_count
        if counts.max() > 2:
            bad = np.flatnonzero(counts > 2)
            raise MeshError(
                f"{len(bad)} edges border more than two faces, e.g. {self.edges[bad[0]].tolist()}")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def has_uv(self) -> bool:
        return self.uv is not None

    @cached_property
    def _half_edges(self) -> np.ndarray:
        # half-edge h = 3 * face + corner is the edge opposite that corner
        f = self.faces
        pairs = np.stack([f[:, [1, 2]], f[:, [2, 0]], f[:, [0, 1]]], axis=1).reshape(-1, 2)
        return np.sort(pairs, axis=1)

    @cached_property
    def _edge_keys(self) -> Tuple[np.ndarray, np.ndarray]:
        half = self._half_edges
        keys = half[:, 0] * self.n_vertices + half[:, 1]
        unique, inverse = np.unique(keys, return_inverse=True)
        return unique, np.asarray(inverse).reshape(-1)

    @cached_property
    def edges(self) -> np.ndarray:
        """Undirected edges (u < v), each stored once, sorted lexicographically."""
        keys, _ = self._edge_keys
        return _readonly(np.stack([keys // self.n_vertices, keys % self.n_vertices], axis=1))

    @cached_property
    def half_edge_index(self) -> np.ndarray:
        """(k, 3) index into ``edges`` of the edge opposite every face corner."""
        return _readonly(self._edge_keys[1].reshape(-1, 3))

    @cached_property
    def _edge_face_count(self) -> np.ndarray:
        return np.bincount(self._edge_keys[1], minlength=len(self._edge_keys[0]))

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return _readonly(self.edges[self._edge_face_count == 1])

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return _readonly(np.unique(self.boundary_edges))

    @property
    def is_closed(self) -> bool:
        return len(self.boundary_edges) == 0

    @cached_property
    def edge_lowest_face(self) -> np.ndarray:
        """Lowest id among the faces incident to every edge."""
        lowest = np.full(len(self.edges), self.n_faces, dtype=np.int64)
        face_of_half = np.repeat(np.arange(self.n_faces), 3)
        np.minimum.at(lowest, self._edge_keys[1], face_of_half)
        return _readonly(lowest)

    @cached_property
    def vertex_lowest_face(self) -> np.ndarray:
        """Lowest id among the faces incident to every vertex, -1 if unreferenced."""
        lowest = np.full(self.n_vertices, self.n_faces, dtype=np.int64)
        np.minimum.at(lowest, self.faces.ravel(), np.repeat(np.arange(self.n_faces), 3))
        lowest[lowest == self.n_faces] = -1
        return _readonly(lowest)

    def edge_index(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """
        Index into ``edges`` of the undirected edges (a, b), -1 where the
        pair is not an edge of the mesh.
        """
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        keys = np.minimum(a, b) * self.n_vertices + np.maximum(a, b)
        table = self._edge_keys[0]
        pos = np.clip(np.searchsorted(table, keys), 0, len(table) - 1)
        return np.where(table[pos] == keys, pos, -1)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric 0/1 vertex adjacency matrix."""
        u, v = self.edges.T
        n = self.n_vertices
        data = np.ones(2 * len(u))
        return sparse.csr_matrix((data, (np.r_[u, v], np.r_[v, u])), shape=(n, n))

    @cached_property
    def components(self) -> Tuple[int, np.ndarray]:
        """Number of connected components and the component label of every vertex."""
        count, labels = connected_components(self.adjacency, directed=False)
        return count, labels

    @property
    def is_connected(self) -> bool:
        return self.components[0] == 1

    @cached_property
    def mean_edge_length(self) -> float:
        u, v = self.edges.T
        return float(np.linalg.norm(self.vertices[u] - self.vertices[v], axis=1).mean())

    @cached_property
    def face_areas(self) -> np.ndarray:
        return _readonly(triangle_areas(self.vertices, self.faces))

    @cached_property
    def digest(self) -> str:
        """Content hash of vertices and faces (embedding cache key)."""
        h = hashlib.sha1()
        h.update(np.int64(self.n_vertices).tobytes())
        h.update(self.vertices.tobytes())
        h.update(self.faces.tobytes())
        return h.hexdigest()

    def with_vertices(self, vertices: np.ndarray) -> "TriangleMesh":
        """Same connectivity and texture coordinates, new vertex positions."""
        return TriangleMesh(vertices, self.faces, self.uv, self.face_uv)


def triangle_areas(points: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """
    Areas of the triangles ``points[faces]``; ``points`` may live in any
    dimension. Collapsed triangles have area 0.
    """
    p = np.asarray(points, dtype=np.float64)
    e1 = p[faces[:, 1]] - p[faces[:, 0]]
    e2 = p[faces[:, 2]] - p[faces[:, 0]]
    g11 = np.einsum("ij,ij->i", e1, e1)
    g22 = np.einsum("ij,ij->i", e2, e2)
    g12 = np.einsum("ij,ij->i", e1, e2)
    return 0.5 * np.sqrt(np.maximum(g11 * g22 - g12 * g12, 0.0))


def load_mesh(path: PathLike) -> TriangleMesh:
    """
    Read a triangle mesh from an ASCII OBJ file.

    ``v`` and ``f`` records are required, ``vt`` records and the texture
    index of ``f i/t/n`` corners are preserved, everything else is ignored.
    Negative (relative) OBJ indices are resolved.

    Parameters
    ----------
    path : str or Path

    Returns
    -------
    mesh : TriangleMesh

    Raises
    ------
    MeshError
        On unparsable records, non-triangle faces, out-of-range indices or
        degenerate faces. The message names the face.
    """
    vertices, uvs, faces, face_uvs = [], [], [], []
    missing_uv = False

    with open(path, "rt", encoding="utf8") as file:
        for lineno, line in enumerate(file, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tag, *fields = line.split()
            try:
                if tag == "v":
                    if len(fields) < 3:
                        raise ValueError("vertex needs three coordinates")
                    vertices.append([float(x) for x in fields[:3]])
                elif tag == "vt":
                    if len(fields) < 2:
                        raise ValueError("texture coordinate needs two values")
                    uvs.append([float(x) for x in fields[:2]])
                elif tag == "f":
                    if len(fields) != 3:
                        raise MeshError(
                            f"{path}:{lineno}: face {len(faces)} has {len(fields)} corners,"
                            " only triangles are supported", faces=[len(faces)])
                    corner, tex = [], []
                    for token in fields:
                        parts = token.split("/")
                        corner.append(_obj_index(parts[0], len(vertices)))
                        if len(parts) > 1 and parts[1]:
                            tex.append(_obj_index(parts[1], len(uvs)))
                    faces.append(corner)
                    if len(tex) == 3:
                        face_uvs.append(tex)
                    else:
                        missing_uv = True
            except ValueError as err:
                if isinstance(err, MeshError):
                    raise
                raise MeshError(f"{path}:{lineno}: cannot parse '{line}': {err}") from None

    if not faces:
        raise MeshError(f"{path}: no faces found")

    uv = face_uv = None
    if uvs and face_uvs:
        if missing_uv:
            logger.warning("%s: some faces carry no texture indices, dropping texture coordinates", path)
        else:
            uv, face_uv = np.array(uvs), np.array(face_uvs)

    mesh = TriangleMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3), np.array(faces), uv, face_uv)
    logger.debug("loaded %s: %d vertices, %d faces", path, mesh.n_vertices, mesh.n_faces)
    return mesh


def _obj_index(token: str, count: int) -> int:
    index = int(token)
    if index < 0:
        return count + index
    return index - 1


def save_mesh(path: PathLike, mesh: TriangleMesh) -> None:
    """
    Write ``mesh`` as an ASCII OBJ file with 1-based indices.

    Texture coordinates are written as ``vt`` records and referenced from
    every face corner when present. Coordinates are printed with 17
    significant digits so that ``load_mesh`` reproduces them exactly.
    """
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    faces = mesh.faces + 1
    if mesh.has_uv:
        lines += [f"vt {u:.17g} {v:.17g}" for u, v in mesh.uv]
        tex = mesh.face_uv + 1
        lines += [f"f {a}/{ta} {b}/{tb} {c}/{tc}"
                  for (a, b, c), (ta, tb, tc) in zip(faces.tolist(), tex.tolist())]
    else:
        lines += [f"f {a} {b} {c}" for a, b, c in faces.tolist()]

    with open(path, "wt", encoding="utf8") as file:
        file.write("\n".join(lines))
        file.write("\n")


@dataclass(frozen=True, eq=False)
class MeshOperators:
    """
    Discrete operators of a triangle mesh.

    Attributes
    ----------
    W : scipy.sparse.csr_matrix
        The cotangent Laplacian, ``g^T W g = sum_uv w_uv (g_u - g_v)^2``.
    mass : ndarray
        Diagonal of the barycentric lumped mass matrix.
    face_areas : ndarray
    edge_weights : ndarray
        Cotangent weight ``w_uv`` of every edge of ``mesh.edges``.
    clamped : bool
        Whether negative weights were clamped to zero.
    """

    W: sparse.csr_matrix
    mass: np.ndarray
    face_areas: np.ndarray
    edge_weights: np.ndarray
    clamped: bool = False

    @property
    def n(self) -> int:
        return len(self.mass)

    @property
    def s(self) -> float:
        """Total area."""
        return float(self.mass.sum())

    @cached_property
    def A(self) -> sparse.csr_matrix:
        return sparse.diags(self.mass, format="csr")


def compute_operators(mesh: TriangleMesh, clamp_negative: bool = False) -> MeshOperators:
    """
    Build the cotangent Laplacian and the lumped mass matrix of ``mesh``.

    Every edge gets half the cotangent of the angle opposite to it in each
    incident triangle, so boundary edges carry the contribution of their one
    triangle. Every vertex gets a third of the area of its incident faces.

    Parameters
    ----------
    mesh : TriangleMesh
    clamp_negative : bool, default False
        Replace negative edge weights (obtuse triangles) by zero. The
        unclamped weights are the faithful discretization.

    Returns
    -------
    operators : MeshOperators

    Raises
    ------
    MeshError
        If a face has zero area; the message lists the faces.
    """
    V, F = mesh.vertices, mesh.faces
    areas = triangle_areas(V, F)

    longest = np.zeros(len(F))
    for c in range(3):
        edge = V[F[:, (c + 1) % 3]] - V[F[:, c]]
        longest = np.maximum(longest, np.einsum("ij,ij->i", edge, edge))
    degenerate = areas <= _DEGENERATE_AREA_RATIO * longest
    if degenerate.any():
        bad = np.flatnonzero(degenerate)
        raise MeshError(f"{len(bad)} zero-area faces: {bad[:20].tolist()}", faces=bad)

    # cotangent of the angle at every corner
    cot = np.empty((len(F), 3))
    for c in range(3):
        u = V[F[:, (c + 1) % 3]] - V[F[:, c]]
        v = V[F[:, (c + 2) % 3]] - V[F[:, c]]
        cot[:, c] = np.einsum("ij,ij->i", u, v) / (2.0 * areas)

    weights = np.bincount(mesh.half_edge_index.ravel(), weights=0.5 * cot.ravel(),
                          minlength=len(mesh.edges))
    negative = int((weights < 0).sum())
    if negative:
        logger.debug("%d edges with negative cotangent weight%s", negative,
                     ", clamped" if clamp_negative else "")
        if clamp_negative:
            weights = np.maximum(weights, 0.0)

    n = mesh.n_vertices
    u, v = mesh.edges.T
    off = sparse.coo_matrix((-np.r_[weights, weights], (np.r_[u, v], np.r_[v, u])), shape=(n, n))
    diagonal = np.bincount(u, weights=weights, minlength=n) + np.bincount(v, weights=weights, minlength=n)
    W = (off + sparse.diags(diagonal)).tocsr()

    mass = np.bincount(F.ravel(), weights=np.repeat(areas / 3.0, 3), minlength=n)
    if (mass <= 0).any():
        bad = np.flatnonzero(mass <= 0)
        raise MeshError(f"vertices {bad[:10].tolist()} are not referenced by any face")

    return MeshOperators(W=W, mass=_readonly(mass), face_areas=_readonly(areas),
                         edge_weights=_readonly(weights), clamped=clamp_negative)


def face_differentials(source: np.ndarray, faces: np.ndarray, image: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Singular values of the linear map taking every source face to its image.

    Parameters
    ----------
    source : ndarray of shape (n, 3)
        Source vertex positions.
    faces : ndarray of shape (k, 3)
    image : ndarray of shape (n, d), d >= 2
        Image of every source vertex.

    Returns
    -------
    sigma1, sigma2 : ndarray of shape (k,)
        ``sigma1 >= sigma2 >= 0`` for every face.

    Raises
    ------
    MeshError
        If a source face is degenerate.
    """
    source = np.asarray(source, dtype=np.float64)
    image = np.asarray(image, dtype=np.float64)
    e1 = source[faces[:, 1]] - source[faces[:, 0]]
    e2 = source[faces[:, 2]] - source[faces[:, 0]]

    # e1 = (l, 0) and e2 = (x, h) in an orthonormal frame of the face
    l = np.linalg.norm(e1, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.einsum("ij,ij->i", e1, e2) / l
    h = 2.0 * triangle_areas(source, faces) / np.where(l > 0, l, 1.0)
    degenerate = (l <= 0) | (h <= _DEGENERATE_AREA_RATIO * np.maximum(l, np.linalg.norm(e2, axis=1)))
    if degenerate.any():
        bad = np.flatnonzero(degenerate)
        raise MeshError(f"degenerate source faces {bad[:10].tolist()}", faces=bad)

    t1 = image[faces[:, 1]] - image[faces[:, 0]]
    t2 = image[faces[:, 2]] - image[faces[:, 0]]
    j1 = t1 / l[:, None]
    j2 = (t2 - x[:, None] * j1) / h[:, None]

    g11 = np.einsum("ij,ij->i", j1, j1)
    g22 = np.einsum("ij,ij->i", j2, j2)
    g12 = np.einsum("ij,ij->i", j1, j2)
    radius = np.hypot(0.5 * (g11 - g22), g12)
    lam1 = 0.5 * (g11 + g22) + radius
    det = np.maximum(g11 * g22 - g12 * g12, 0.0)
    lam2 = np.divide(det, lam1, out=np.zeros_like(lam1), where=lam1 > 0)
    return np.sqrt(lam1), np.sqrt(np.minimum(lam2, lam1))


def face_differential(face: np.ndarray, image: np.ndarray) -> Tuple[float, float]:
    """
    Singular values ``(sigma1, sigma2)`` of the linear map taking the source
    triangle ``face`` (3 points in R^3) to ``image`` (3 points in R^d).
    """
    face = np.asarray(face, dtype=np.float64).reshape(3, -1)
    image = np.asarray(image, dtype=np.float64).reshape(3, -1)
    sigma1, sigma2 = face_differentials(face, np.array([[0, 1, 2]]), image)
    return float(sigma1[0]), float(sigma2[0])
