# SPDX-License-Identifier: MIT
# Copyright (C) 2026 The revharm authors

"""
Pulling texture coordinates and geometry through a map.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import sparse

from revharm.errors import MapError, MeshError
from revharm.maps import PreciseMap, apply_map
from revharm.mesh import TriangleMesh, triangle_areas

logger = logging.getLogger(__name__)

# faces below this fraction of the target area count as zero-area
ZERO_AREA_RATIO = 1e-12
MAX_REPAIR_PASSES = 100


def transfer_texture(P12: PreciseMap, source: TriangleMesh, target: TriangleMesh) -> TriangleMesh:
    """
    The source mesh with texture coordinates looked up on the target.

    Every source vertex takes the barycentric blend of the texture
    coordinates of the corners of the target face it is mapped to; across
    seams the corners of that face decide.

    Raises
    ------
    MeshError
        If the target has no texture coordinates.
    """
    if not target.has_uv:
        raise MeshError("target mesh has no texture coordinates")
    if P12.n_source != source.n_vertices or P12.n_target != target.n_vertices:
        raise MapError("map does not connect the given meshes")
    corners = target.uv[target.face_uv[P12.faces]]
    uv = np.einsum("ij,ijk->ik", P12.weights, corners)
    return TriangleMesh(source.vertices, source.faces, uv=uv, face_uv=source.faces)


@dataclass(frozen=True)
class RepairReport:
    """
    Outcome of the zero-area face repair: how many smoothing passes ran,
    which vertices moved and which faces are still degenerate.
    """

    passes: int
    moved: np.ndarray
    remaining: np.ndarray

    @property
    def capped(self) -> bool:
        return len(self.remaining) > 0


def _neighbour_average(mesh: TriangleMesh) -> sparse.csr_matrix:
    adjacency = mesh.adjacency
    degree = np.asarray(adjacency.sum(axis=1)).ravel()
    return sparse.diags(1.0 / np.maximum(degree, 1.0)) @ adjacency


def repair_degenerate_faces(mesh: TriangleMesh, threshold: float,
                            max_passes: int = MAX_REPAIR_PASSES) -> Tuple[TriangleMesh, RepairReport]:
    """
    Move the vertices of faces with area below ``threshold`` to the average
    of their 1-ring neighbours until no such face is left, at most
    ``max_passes`` times. All moves of one pass use the positions of the
    previous pass.
    """
    V = np.array(mesh.vertices)
    average = _neighbour_average(mesh)
    moved = np.zeros(mesh.n_vertices, dtype=bool)
    passes = 0

    degenerate = np.flatnonzero(triangle_areas(V, mesh.faces) < threshold)
    while len(degenerate) and passes < max_passes:
        vertices = np.unique(mesh.faces[degenerate])
        V[vertices] = (average @ V)[vertices]
        moved[vertices] = True
        passes += 1
        degenerate = np.flatnonzero(triangle_areas(V, mesh.faces) < threshold)

    report = RepairReport(passes, np.flatnonzero(moved), degenerate)
    if report.capped:
        logger.warning("%d faces are still degenerate after %d repair passes", len(degenerate), passes)
    elif passes:
        logger.info("repaired degenerate faces in %d passes, %d vertices moved", passes, len(report.moved))
    return mesh.with_vertices(V), report


def transfer_connectivity(P12: PreciseMap, source: TriangleMesh, target: TriangleMesh,
                          max_passes: int = MAX_REPAIR_PASSES) -> Tuple[TriangleMesh, RepairReport]:
    """
    Remesh the target with the connectivity of the source: the vertices are
    the images ``P12 V2`` and the faces those of the source. Zero-area faces
    (area below ``1e-12`` times the target area) are repaired by
    :func:`repair_degenerate_faces`.
    """
    if P12.n_source != source.n_vertices or P12.n_target != target.n_vertices:
        raise MapError("map does not connect the given meshes")
    remeshed = TriangleMesh(apply_map(P12, target.vertices), source.faces)
    threshold = ZERO_AREA_RATIO * float(target.face_areas.sum())
    return repair_degenerate_faces(remeshed, threshold, max_passes)
