# SPDX-License-Identifier: MIT
# Copyright (C) 2026 The revharm authors

"""
Initial maps and auxiliary images for the solver, built from landmark
pairs, from a pointwise map or from a functional map.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.linalg import LinAlgError, cholesky, eigh, solve_triangular
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh

from revharm.errors import MapError, NumericalError
from revharm.geodesics import geodesic_voronoi
from revharm.maps import PreciseMap, apply_map, invert_pointwise
from revharm.mesh import MeshOperators, TriangleMesh
from revharm.shape import Shape

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DEFAULT_BASIS_SIZE = 60

# meshes up to this size get a dense generalized eigensolve
_DENSE_EIGEN_BELOW = 600


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    """
    Corresponding vertex pairs ``(source[i], target[i])``. Target ids may
    repeat, so two features can be sent to one point.
    """

    source: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        source = np.array(self.source, dtype=np.int64).reshape(-1)
        target = np.array(self.target, dtype=np.int64).reshape(-1)
        if len(source) != len(target):
            raise MapError(f"{len(source)} source but {len(target)} target landmarks")
        if len(source) == 0:
            raise MapError("at least one landmark pair is required")
        object.__setattr__(self, "source", source)
        object.__setattr__(self, "target", target)

    def __len__(self) -> int:
        return len(self.source)

    def validate(self, n_source: int, n_target: int) -> "LandmarkSet":
        """Raise :class:`MapError` unless every id lies on its mesh."""
        for name, ids, n in (("source", self.source, n_source), ("target", self.target, n_target)):
            bad = np.flatnonzero((ids < 0) | (ids >= n))
            if len(bad):
                raise MapError(f"{name} landmarks {bad[:10].tolist()} lie outside [0, {n})")
        return self

    def reversed(self) -> "LandmarkSet":
        return LandmarkSet(self.target, self.source)


def load_landmarks(path: PathLike) -> LandmarkSet:
    """Read lines ``p q`` of 1-based vertex ids; ``#`` starts a comment."""
    try:
        pairs = np.loadtxt(path, dtype=np.float64, ndmin=2, comments="#")
    except ValueError as err:
        raise MapError(f"{path}: cannot parse landmarks: {err}") from None
    if pairs.size == 0 or pairs.shape[1] != 2:
        raise MapError(f"{path}: expected lines of two vertex ids")
    if (pairs != np.round(pairs)).any():
        raise MapError(f"{path}: landmark ids must be integers")
    pairs = pairs.astype(np.int64) - 1
    return LandmarkSet(pairs[:, 0], pairs[:, 1])


def save_landmarks(path: PathLike, landmarks: LandmarkSet) -> None:
    np.savetxt(path, np.c_[landmarks.source + 1, landmarks.target + 1], fmt="%d")


def perturb_landmarks(landmarks: LandmarkSet, mesh: TriangleMesh, rings: int,
                      rng: np.random.Generator) -> LandmarkSet:
    """
    Move every target landmark by ``rings`` random steps to a neighbouring
    vertex of ``mesh``, which places it at most ``rings`` rings away.
    """
    adjacency = mesh.adjacency
    target = landmarks.target.copy()
    for _ in range(rings):
        for i, v in enumerate(target):
            neighbours = adjacency.indices[adjacency.indptr[v]:adjacency.indptr[v + 1]]
            if len(neighbours):
                target[i] = neighbours[rng.integers(len(neighbours))]
    return LandmarkSet(landmarks.source, target)


def merge_landmarks(landmarks: LandmarkSet, i: int, j: int) -> LandmarkSet:
    """Send source landmark ``j`` to the target point of landmark ``i``."""
    target = landmarks.target.copy()
    target[j] = target[i]
    return LandmarkSet(landmarks.source, target)


@dataclass(frozen=True, eq=False)
class Initialization:
    """
    Starting point of the solver. The maps are ``None`` for functional map
    initializations, where the first sub-step computes them.
    """

    P12: Optional[PreciseMap]
    P21: Optional[PreciseMap]
    X12: np.ndarray
    X21: np.ndarray


def _cells(shape: Shape, centers: np.ndarray) -> np.ndarray:
    assignment = geodesic_voronoi(shape.mesh, shape.operators, centers, solver=shape.geodesics)
    unreachable = assignment < 0
    if unreachable.any():
        logger.warning("%d vertices reach no landmark and are sent to the first one", unreachable.sum())
        assignment[unreachable] = 0
    return assignment


def init_from_landmarks(landmarks: LandmarkSet, shape1: Shape, shape2: Shape) -> Initialization:
    """
    Send every geodesic Voronoi cell of the source landmarks to its target
    landmark, and every cell of the target landmarks back to its source
    landmark.

    Raises
    ------
    MapError
        If a landmark id is not a vertex of its mesh.
    """
    landmarks.validate(shape1.n, shape2.n)
    cells1 = _cells(shape1, landmarks.source)
    cells2 = _cells(shape2, landmarks.target)
    P12 = PreciseMap.from_vertices(shape2.mesh, landmarks.target[cells1])
    P21 = PreciseMap.from_vertices(shape1.mesh, landmarks.source[cells2])
    logger.info("landmark initialization from %d pairs", len(landmarks))
    return Initialization(P12, P21, apply_map(P12, shape2.X), apply_map(P21, shape1.X))


def init_from_pointwise(P12: PreciseMap, shape1: Shape, shape2: Shape) -> Initialization:
    """Complete ``P12`` by its pointwise inverse; ``X_ij = P_ij X_j``."""
    if P12.n_source != shape1.n or P12.n_target != shape2.n:
        raise MapError(f"map of shape {P12.n_source}x{P12.n_target} does not fit meshes "
                       f"with {shape1.n} and {shape2.n} vertices")
    P21 = invert_pointwise(P12, shape1.mesh, shape2.mesh)
    return Initialization(P12, P21, apply_map(P12, shape2.X), apply_map(P21, shape1.X))


def lb_basis(mesh: TriangleMesh, operators: MeshOperators, k: int = DEFAULT_BASIS_SIZE,
             return_eigenvalues: bool = False):
    """
    The first ``k`` Laplace-Beltrami eigenfunctions, ``W psi = lambda A psi``.

    Parameters
    ----------
    mesh : TriangleMesh
    operators : MeshOperators
    k : int, default 60
    return_eigenvalues : bool, default False

    Returns
    -------
    basis : ndarray of shape (n, k)
        A-orthonormal columns in ascending eigenvalue order.
    eigenvalues : ndarray of shape (k,)
        Only when ``return_eigenvalues`` is set.

    Raises
    ------
    ValueError
        If ``k`` is not in ``[1, n]``.
    NumericalError
        If the eigensolver does not converge.
    """
    n = mesh.n_vertices
    if not 1 <= k <= n:
        raise ValueError(f"basis size {k} must lie in [1, {n}]")

    if n <= _DENSE_EIGEN_BELOW or k >= n - 1:
        try:
            evals, evecs = eigh(operators.W.toarray(), np.diag(operators.mass),
                                subset_by_index=[0, k - 1])
        except LinAlgError as err:
            raise NumericalError(f"dense eigensolver failed: {err}") from err
    else:
        scale = operators.W.diagonal().mean() / operators.mass.mean()
        try:
            evals, evecs = eigsh(operators.W.tocsc(), k=k, M=operators.A.tocsc(),
                                 sigma=-1e-6 * scale, which="LM")
        except (ArpackError, ArpackNoConvergence) as err:
            raise NumericalError(f"eigensolver failed: {err}") from err

    order = np.argsort(evals, kind="stable")
    evals, evecs = evals[order], evecs[:, order]

    # re-orthonormalize in the mass inner product
    gram = evecs.T @ (operators.mass[:, None] * evecs)
    try:
        upper = cholesky(gram)
    except LinAlgError as err:
        raise NumericalError("eigenvectors are not linearly independent") from err
    evecs = solve_triangular(upper, evecs.T, trans="T").T

    # sign convention: largest entry of every column positive
    pivot = evecs[np.argmax(np.abs(evecs), axis=0), np.arange(k)]
    evecs *= np.where(pivot < 0, -1.0, 1.0)

    if return_eigenvalues:
        return evecs, evals
    return evecs


@dataclass(frozen=True, eq=False)
class FunctionalMap:
    """
    Coefficient matrices of a functional map pair: ``C12`` (k1 x k2) takes
    functions on the second mesh to functions on the first, ``C21`` (k2 x k1)
    the other way.
    """

    C12: np.ndarray
    C21: np.ndarray

    def __post_init__(self):
        C12 = np.array(self.C12, dtype=np.float64, ndmin=2)
        C21 = np.array(self.C21, dtype=np.float64, ndmin=2)
        if C12.shape != C21.T.shape:
            raise MapError(f"C12 {C12.shape} and C21 {C21.shape} are not transposed shapes")
        if not (np.isfinite(C12).all() and np.isfinite(C21).all()):
            raise MapError("functional map has non-finite entries")
        object.__setattr__(self, "C12", C12)
        object.__setattr__(self, "C21", C21)

    @property
    def k1(self) -> int:
        return self.C12.shape[0]

    @property
    def k2(self) -> int:
        return self.C12.shape[1]

    @classmethod
    def identity(cls, k: int) -> "FunctionalMap":
        return cls(np.eye(k), np.eye(k))


def save_functional_map(path: PathLike, fmap: FunctionalMap) -> None:
    """Each matrix as a ``rows cols`` header line followed by its rows."""
    with open(path, "wt", encoding="utf8") as file:
        for C in (fmap.C12, fmap.C21):
            file.write(f"{C.shape[0]} {C.shape[1]}\n")
            np.savetxt(file, C, fmt="%.17g")


def load_functional_map(path: PathLike) -> FunctionalMap:
    with open(path, "rt", encoding="utf8") as file:
        tokens = file.read().split()
    blocks = []
    pos = 0
    try:
        for _ in range(2):
            rows, cols = int(tokens[pos]), int(tokens[pos + 1])
            values = np.array(tokens[pos + 2:pos + 2 + rows * cols], dtype=np.float64)
            if values.size != rows * cols:
                raise MapError(f"{path}: truncated {rows}x{cols} block")
            blocks.append(values.reshape(rows, cols))
            pos += 2 + rows * cols
    except (IndexError, ValueError) as err:
        raise MapError(f"{path}: cannot parse functional map: {err}") from None
    if pos != len(tokens):
        raise MapError(f"{path}: {len(tokens) - pos} trailing values")
    return FunctionalMap(*blocks)


def init_from_functional_map(fmap: FunctionalMap, shape1: Shape, shape2: Shape,
                             basis1: Optional[np.ndarray] = None,
                             basis2: Optional[np.ndarray] = None) -> Initialization:
    """
    ``X_ij = Psi_i C_ij Psi_j^T A_j X_j`` with Laplace-Beltrami bases of the
    sizes of ``fmap``. The maps are left unset: the solver starts with
    P-steps.

    Raises
    ------
    MapError
        If a given basis does not match the functional map dimensions.
    """
    if basis1 is None:
        basis1 = lb_basis(shape1.mesh, shape1.operators, fmap.k1)
    if basis2 is None:
        basis2 = lb_basis(shape2.mesh, shape2.operators, fmap.k2)
    if basis1.shape != (shape1.n, fmap.k1) or basis2.shape != (shape2.n, fmap.k2):
        raise MapError(f"bases {basis1.shape} and {basis2.shape} do not match a "
                       f"{fmap.k1}x{fmap.k2} functional map")

    X12 = basis1 @ (fmap.C12 @ (basis2.T @ (shape2.operators.mass[:, None] * shape2.X)))
    X21 = basis2 @ (fmap.C21 @ (basis1.T @ (shape1.operators.mass[:, None] * shape1.X)))
    logger.info("functional map initialization with k1=%d, k2=%d", fmap.k1, fmap.k2)
    return Initialization(None, None, X12, X21)
