# SPDX-License-Identifier: MIT
# Copyright (C) 2026 The revharm authors

"""
Quality measures of a map and their cumulative curves.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd

from revharm.errors import MapError
from revharm.maps import PreciseMap, apply_map, eval_map_at_points
from revharm.mesh import TriangleMesh, face_differentials
from revharm.shape import Shape

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

N_THRESHOLDS = 200
PERCENTILE = 99


@dataclass(frozen=True, eq=False)
class CumulativeCurve:
    """
    Fraction of items whose value is at most every threshold.

    ``overflow`` is the fraction above the last threshold, infinite values
    included, so ``fractions[-1] + overflow == 1`` whenever something was
    measured. ``excluded`` counts items without a value.
    """

    thresholds: np.ndarray
    fractions: np.ndarray
    overflow: float
    excluded: int = 0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "threshold": np.r_[self.thresholds, np.inf],
            "fraction": np.r_[self.fractions, self.fractions[-1] + self.overflow if len(self.fractions) else 1.0],
        })

    def to_csv(self, path: PathLike) -> None:
        """``threshold,fraction`` rows, closed by an ``inf`` row reaching 1."""
        self.to_frame().to_csv(path, sep=",", index=False)


def cumulative_curve(values: np.ndarray, weights: Optional[np.ndarray] = None,
                     n_thresholds: int = N_THRESHOLDS, percentile: float = PERCENTILE) -> CumulativeCurve:
    """
    Weighted cumulative distribution of ``values`` on ``n_thresholds``
    uniform thresholds from 0 to the ``percentile``-th percentile of the
    finite values. NaN values are excluded and counted; ``inf`` lands in the
    overflow bucket.
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    weights = np.ones_like(values) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    if weights.shape != values.shape:
        raise ValueError("values and weights must have the same length")

    missing = np.isnan(values)
    values, weights = values[~missing], weights[~missing]
    total = weights.sum()
    finite = np.isfinite(values)

    top = float(np.percentile(values[finite], percentile)) if finite.any() else 0.0
    thresholds = np.linspace(0.0, top, n_thresholds)
    if total <= 0:
        return CumulativeCurve(thresholds, np.zeros(n_thresholds), 0.0, int(missing.sum()))

    order = np.argsort(values, kind="stable")
    sorted_values = values[order]
    cumulative = np.r_[0.0, np.cumsum(weights[order])]
    fractions = cumulative[np.searchsorted(sorted_values, thresholds, side="right")] / total
    overflow = max(0.0, 1.0 - float(fractions[-1]))
    return CumulativeCurve(thresholds, fractions, overflow, int(missing.sum()))


def conformal_distortion(P12: PreciseMap, mesh1: TriangleMesh, mesh2: TriangleMesh,
                         area_weighted: bool = False) -> Tuple[np.ndarray, CumulativeCurve]:
    """
    ``sigma1/sigma2 + sigma2/sigma1 - 2`` of every source face, with
    ``sigma1 >= sigma2`` the singular values of the map from the face to
    its image triangle on ``mesh2``.

    Faces whose image is degenerate get ``inf``. The curve counts faces, or
    weighs them by source area with ``area_weighted``.
    """
    image = apply_map(P12, mesh2.vertices)
    sigma1, sigma2 = face_differentials(mesh1.vertices, mesh1.faces, image)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = (sigma1 - sigma2) ** 2 / (sigma1 * sigma2)
    values[sigma2 <= 0] = np.inf
    weights = mesh1.face_areas if area_weighted else None
    return values, cumulative_curve(values, weights)


def _as_points(mesh: TriangleMesh, gt) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Faces, weights and a validity mask from a map or a vertex id array (-1 missing)."""
    if isinstance(gt, PreciseMap):
        return gt.faces, gt.weights, np.ones(len(gt), dtype=bool)
    ids = np.asarray(gt, dtype=np.int64).reshape(-1)
    valid = (ids >= 0) & (ids < mesh.n_vertices)
    safe = np.where(valid, ids, 0)
    faces = mesh.vertex_lowest_face[safe]
    weights = (mesh.faces[faces] == safe[:, None]).astype(np.float64)
    return faces, weights, valid


def ground_truth_error(P12: PreciseMap, gt, shape2: Shape) -> Tuple[np.ndarray, CumulativeCurve]:
    """
    Geodesic distance between every image point and its ground truth
    location, divided by the square root of the target area.

    Parameters
    ----------
    P12 : PreciseMap
    gt : PreciseMap or array_like of int
        Ground truth points, or target vertex ids with -1 for vertices
        without ground truth.
    shape2 : Shape
        The target.

    Returns
    -------
    errors : ndarray
        NaN where the ground truth is missing.
    curve : CumulativeCurve
    """
    faces, weights, valid = _as_points(shape2.mesh, gt)
    if len(faces) != len(P12):
        raise MapError(f"ground truth has {len(faces)} entries for {len(P12)} source vertices")
    errors = np.full(len(P12), np.nan)
    rows = np.flatnonzero(valid)
    if len(rows):
        d = shape2.geodesics.point_distances(P12.faces[rows], P12.weights[rows], faces[rows], weights[rows])
        errors[rows] = d / np.sqrt(shape2.s)
    if len(rows) < len(P12):
        logger.warning("%d vertices without ground truth are excluded", len(P12) - len(rows))
    return errors, cumulative_curve(errors)


def symmetry_compatibility(P12: PreciseMap, S1: PreciseMap, S2: PreciseMap,
                           shape1: Shape, shape2: Shape) -> Tuple[np.ndarray, CumulativeCurve]:
    """
    ``d_2(S2(P12(v)), P12(S1(v)))`` for every source vertex, divided by the
    square root of the target area. Zero when the map commutes with the
    symmetries.
    """
    if S1.n_source != shape1.n or S2.n_source != shape2.n:
        raise MapError("symmetry maps do not match the meshes")
    mapped_then_flipped = eval_map_at_points(S2, shape2.mesh, P12.faces, P12.weights)
    flipped_then_mapped = eval_map_at_points(P12, shape1.mesh, S1.faces, S1.weights)
    d = shape2.geodesics.point_distances(mapped_then_flipped.faces, mapped_then_flipped.weights,
                                         flipped_then_mapped.faces, flipped_then_mapped.weights)
    values = d / np.sqrt(shape2.s)
    return values, cumulative_curve(values)


def face_labels(mesh: TriangleMesh, vertex_labels: np.ndarray) -> np.ndarray:
    """
    Majority label of the three corners of every face; faces with three
    different labels take the lowest non-negative one.
    """
    labels = np.sort(np.asarray(vertex_labels, dtype=np.int64)[mesh.faces], axis=1)
    out = np.where(labels[:, 1] == labels[:, 2], labels[:, 1], labels[:, 0])
    out = np.where(labels[:, 0] == labels[:, 1], labels[:, 0], out)
    distinct = (labels[:, 0] != labels[:, 1]) & (labels[:, 1] != labels[:, 2])
    lowest = np.where(labels >= 0, labels, np.iinfo(np.int64).max).min(axis=1)
    lowest[lowest == np.iinfo(np.int64).max] = -1
    return np.where(distinct, lowest, out)


def segmentation_compatibility(P12: PreciseMap, seg1: np.ndarray, seg2: np.ndarray,
                               shape1: Shape, mesh2: TriangleMesh) -> float:
    """
    Fraction of the source area whose vertices land on a target face with
    their own label.

    Parameters
    ----------
    seg1 : array_like of shape (n1,)
        Source vertex labels, negative for unlabeled.
    seg2 : array_like of shape (k2,) or (n2,)
        Target face labels, or vertex labels turned into face labels by
        :func:`face_labels`.

    Returns
    -------
    fraction : float
        Matching area over the area of labeled source vertices.
    """
    seg1 = np.asarray(seg1, dtype=np.int64).reshape(-1)
    seg2 = np.asarray(seg2, dtype=np.int64).reshape(-1)
    if len(seg1) != shape1.n:
        raise MapError(f"{len(seg1)} source labels for {shape1.n} vertices")
    if len(seg2) == mesh2.n_faces:
        target = seg2
    elif len(seg2) == mesh2.n_vertices:
        target = face_labels(mesh2, seg2)
    else:
        raise MapError(f"{len(seg2)} target labels fit neither the faces nor the vertices")

    hit = target[P12.faces]
    labeled = (seg1 >= 0) & (hit >= 0)
    if not labeled.all():
        logger.warning("%d vertices without labels are excluded", int((~labeled).sum()))
    mass = shape1.operators.mass
    area = mass[labeled].sum()
    if area <= 0:
        return float("nan")
    return float(mass[labeled & (hit == seg1)].sum() / area)


def reversibility_error(P12: PreciseMap, P21: PreciseMap, shape1: Shape, shape2: Shape) -> np.ndarray:
    """``d_1(v, P21(P12(v)))`` for every source vertex."""
    back = eval_map_at_points(P21, shape2.mesh, P12.faces, P12.weights)
    v = np.arange(shape1.n)
    faces = shape1.mesh.vertex_lowest_face[v]
    weights = (shape1.mesh.faces[faces] == v[:, None]).astype(np.float64)
    return shape1.geodesics.point_distances(faces, weights, back.faces, back.weights)


def load_labels(path: PathLike) -> np.ndarray:
    """One integer label per line."""
    try:
        return np.loadtxt(path, dtype=np.int64, ndmin=1)
    except ValueError as err:
        raise MapError(f"{path}: cannot parse labels: {err}") from None
