# SPDX-License-Identifier: MIT
# Copyright (C) 2026 The revharm authors

"""
Everything the solver needs to know about one mesh, computed once.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from revharm.embedding import DEFAULT_DIM, MetricEmbedding, cached_embedding, coordinate_embedding
from revharm.geodesics import GeodesicSolver
from revharm.mesh import MeshOperators, TriangleMesh, compute_operators
from revharm.projection import EmbeddedSurface

logger = logging.getLogger(__name__)

METRICS = ("geodesic", "euclidean")


@dataclass(eq=False)
class Shape:
    """
    A mesh with its operators, metric embedding and geodesic solver.

    Attributes
    ----------
    mesh : TriangleMesh
    operators : MeshOperators
    embedding : MetricEmbedding
    geodesics : GeodesicSolver
    """

    mesh: TriangleMesh
    operators: MeshOperators
    embedding: MetricEmbedding
    geodesics: GeodesicSolver
    _surface: Optional[EmbeddedSurface] = field(default=None, repr=False)

    @property
    def X(self) -> np.ndarray:
        return self.embedding.X

    @property
    def n(self) -> int:
        return self.mesh.n_vertices

    @property
    def s(self) -> float:
        return self.operators.s

    @property
    def surface(self) -> EmbeddedSurface:
        """The faces placed in R^m by the embedding, built on first use."""
        if self._surface is None:
            self._surface = EmbeddedSurface(self.embedding.X, self.mesh.faces)
        return self._surface

    def with_embedding(self, embedding: MetricEmbedding) -> "Shape":
        return Shape(self.mesh, self.operators, embedding, self.geodesics)


def prepare_shape(mesh: TriangleMesh, dim: int = DEFAULT_DIM, metric: str = "geodesic",
                  geodesic_method: str = "heat", clamp_negative: bool = False,
                  cache_dir: Optional[Union[str, Path]] = None, seed: int = 0,
                  n_landmarks: Optional[int] = None) -> Shape:
    """
    Compute operators, geodesic solver and metric embedding of ``mesh``.

    Parameters
    ----------
    mesh : TriangleMesh
    dim : int, default 8
        Embedding dimension.
    metric : {"geodesic", "euclidean"}, default "geodesic"
        ``"euclidean"`` uses the vertex coordinates themselves as embedding.
    geodesic_method : {"heat", "dijkstra"}, default "heat"
    clamp_negative : bool, default False
        Clamp negative cotangent weights to zero.
    cache_dir : path, optional
        Directory for cached embeddings.
    seed : int, default 0
    n_landmarks : int, optional
        Landmark count of the embedding for large meshes.

    Returns
    -------
    shape : Shape
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric '{metric}', expected one of {METRICS}")

    operators = compute_operators(mesh, clamp_negative=clamp_negative)
    logger.info("operators of %d vertices, %d faces: total area %.6g",
                mesh.n_vertices, mesh.n_faces, operators.s)
    geodesics = GeodesicSolver(mesh, operators, method=geodesic_method)

    if metric == "euclidean":
        embedding = coordinate_embedding(mesh, max(dim, 3))
    else:
        kwargs = {"seed": seed}
        if n_landmarks is not None:
            kwargs["n_landmarks"] = n_landmarks
        embedding = cached_embedding(mesh, operators, cache_dir, dim, solver=geodesics, **kwargs)
    return Shape(mesh, operators, embedding, geodesics)
