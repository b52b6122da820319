# SPDX-License-Identifier: MIT
# Copyright (C) 2026 The revharm authors

"""
Reversible harmonic maps by half-quadratic splitting.

The energy of a map pair ``(P12, P21)`` is approximated in the metric
embeddings ``X1``, ``X2`` of both meshes. Auxiliary images ``X12 ~ P12 X2``
and ``X21 ~ P21 X1`` split it into

* ``E_D(X_ij)      = tr(X_ij^T W_i X_ij) / s_i``
* ``E_R(P_ij, X_ji) = ||P_ij X_ji - X_i||^2_{A_i} / s_i^2``
* ``E_Q(P_ij, X_ij) = ||X_ij - P_ij X_j||^2_{A_i} / (s_i s_j)``

combined as ``alpha E_D + (1 - alpha) E_R + beta E_Q`` over both directions.
Every iteration alternates globally optimal P-steps (closest point
projections) and X-steps (sparse linear solves) while ``beta`` grows.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.linalg import splu

from revharm.errors import MapError, NumericalError
from revharm.initialization import Initialization, LandmarkSet
from revharm.maps import PreciseMap, apply_map
from revharm.mesh import triangle_areas
from revharm.projection import EmbeddedSurface
from revharm.shape import Shape

try:
    from sksparse.cholmod import CholmodError
    from sksparse.cholmod import cholesky as cholmod_cholesky
except ImportError:
    cholmod_cholesky = None

logger = logging.getLogger(__name__)

DIRECTIONS = ("12", "21")
STOP_RULES = ("relative", "absolute")

# relative changes are measured against at least this energy
_ENERGY_FLOOR = 1e-6
# image displacement, relative to sqrt(s_j), below which a map is unchanged
_FIXED_MAP_TOL = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    """
    Parameters of the alternating minimization.

    Parameters
    ----------
    alpha : float, default 5e-4
        Trade-off between smoothness (1) and reversibility (0).
    beta_slope : float, default 5e-3
        ``beta_k = beta_slope * min(k, beta_cap_iter)`` in iteration ``k``.
    beta_cap_iter : int, default 100
    gamma : float, default 0
        Weight of the weak landmark term.
    max_iter : int, default 200
    tol : float, default 1e-9
        Stop when the energy changes less than this between iterations.
        A full iteration that moves no vertex image of either map also
        stops the solver.
    stop : {"relative", "absolute"}, default "relative"
        How the energy change is measured.
    dim : int, default 8
        Embedding dimension.
    geodesic_every : int, default 1
        Evaluate the exact geodesic Dirichlet energy every that many
        iterations for the trace, 0 never.
    """

    alpha: float = 5e-4
    beta_slope: float = 5e-3
    beta_cap_iter: int = 100
    gamma: float = 0.0
    max_iter: int = 200
    tol: float = 1e-9
    stop: str = "relative"
    dim: int = 8
    geodesic_every: int = 1

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.beta_slope <= 0:
            raise ValueError("beta_slope has to be positive")
        if self.beta_cap_iter < 1:
            raise ValueError("beta_cap_iter has to be at least 1")
        if self.gamma < 0:
            raise ValueError("gamma can not be negative")
        if self.max_iter < 0:
            raise ValueError("max_iter can not be negative")
        if self.tol < 0:
            raise ValueError("tol can not be negative")
        if self.stop not in STOP_RULES:
            raise ValueError(f"unknown stop rule '{self.stop}', expected one of {STOP_RULES}")
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        if self.geodesic_every < 0:
            raise ValueError("geodesic_every can not be negative")

    def beta(self, k: int) -> float:
        return self.beta_slope * min(k, self.beta_cap_iter)


@dataclass(frozen=True, eq=False)
class MapProblem:
    """
    The two shapes with everything that shapes the energy.

    ``pinned12`` / ``pinned21`` are source vertices whose rows keep their
    initial value. Nothing is pinned by default, boundaries included.
    """

    shape1: Shape
    shape2: Shape
    config: SolverConfig = field(default_factory=SolverConfig)
    landmarks: Optional[LandmarkSet] = None
    pinned12: Optional[np.ndarray] = None
    pinned21: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.landmarks is not None:
            self.landmarks.validate(self.shape1.n, self.shape2.n)
        for name, pinned, n in (("pinned12", self.pinned12, self.shape1.n),
                                ("pinned21", self.pinned21, self.shape2.n)):
            if pinned is None:
                continue
            pinned = np.unique(np.asarray(pinned, dtype=np.int64))
            if len(pinned) and (pinned[0] < 0 or pinned[-1] >= n):
                raise ValueError(f"{name} holds vertices outside [0, {n})")
            object.__setattr__(self, name, pinned)

    def shapes(self, direction: str) -> Tuple[Shape, Shape]:
        return (self.shape1, self.shape2) if direction == "12" else (self.shape2, self.shape1)

    def pinned(self, direction: str) -> np.ndarray:
        pinned = self.pinned12 if direction == "12" else self.pinned21
        return np.empty(0, dtype=np.int64) if pinned is None else pinned

    def landmark_pairs(self, direction: str) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """Landmarks as ``(vertices on i, vertices on j)``, None without a weak term."""
        if self.landmarks is None or self.config.gamma == 0:
            return None
        if direction == "12":
            return self.landmarks.source, self.landmarks.target
        return self.landmarks.target, self.landmarks.source


def add_weak_landmarks(problem: MapProblem, landmarks: LandmarkSet, gamma: float) -> MapProblem:
    """
    Copy of ``problem`` with the weak landmark term
    ``gamma sum A_1(p) ||X12(p) - X2(q)||^2 + A_2(q) ||X21(q) - X1(p)||^2``.

    The term only involves the auxiliary images, so it changes the X-step
    systems and leaves the P-step alone.
    """
    if gamma < 0:
        raise ValueError("gamma can not be negative")
    return replace(problem, config=replace(problem.config, gamma=float(gamma)), landmarks=landmarks)


@dataclass
class SolverState:
    """Maps, auxiliary images and the current iteration and ``beta``."""

    P12: Optional[PreciseMap]
    P21: Optional[PreciseMap]
    X12: np.ndarray
    X21: np.ndarray
    beta: float = 0.0
    iteration: int = 0

    @classmethod
    def from_initialization(cls, init: Initialization, beta: float = 0.0) -> "SolverState":
        return cls(init.P12, init.P21, np.array(init.X12, dtype=np.float64),
                   np.array(init.X21, dtype=np.float64), beta)

    def P(self, direction: str) -> Optional[PreciseMap]:
        return self.P12 if direction == "12" else self.P21

    def X(self, direction: str) -> np.ndarray:
        return self.X12 if direction == "12" else self.X21

    def set_P(self, direction: str, P: PreciseMap) -> None:
        if direction == "12":
            self.P12 = P
        else:
            self.P21 = P

    def set_X(self, direction: str, X: np.ndarray) -> None:
        if direction == "12":
            self.X12 = X
        else:
            self.X21 = X


def _reverse(direction: str) -> str:
    return direction[::-1]


@dataclass(frozen=True)
class EnergyTerms:
    """Every term of the split energy, both directions."""

    D12: float
    D21: float
    R12: float
    R21: float
    Q12: float
    Q21: float
    L12: float
    L21: float
    alpha: float
    beta: float

    def total_at(self, beta: float) -> float:
        return (self.alpha * (self.D12 + self.D21) + (1.0 - self.alpha) * (self.R12 + self.R21)
                + beta * (self.Q12 + self.Q21) + self.L12 + self.L21)

    @property
    def total(self) -> float:
        return self.total_at(self.beta)


def _dirichlet(W: sparse.spmatrix, X: np.ndarray) -> float:
    return float(np.sum(X * (W @ X)))


def _mass_norm(mass: np.ndarray, Y: np.ndarray) -> float:
    return float(np.sum(mass[:, None] * Y * Y))


def _landmark_energy(problem: MapProblem, state: SolverState, direction: str) -> float:
    pairs = problem.landmark_pairs(direction)
    if pairs is None:
        return 0.0
    p, q = pairs
    shape_i, shape_j = problem.shapes(direction)
    residual = state.X(direction)[p] - shape_j.X[q]
    return problem.config.gamma * float(np.sum(shape_i.operators.mass[p] * np.sum(residual ** 2, axis=1)))


def energy_terms(problem: MapProblem, state: SolverState) -> EnergyTerms:
    """
    Evaluate the split energy at ``state`` with ``state.beta``.

    Returns
    -------
    terms : EnergyTerms
        ``terms.total`` is the quantity the alternating minimization never
        increases while ``beta`` is fixed.
    """
    values = {}
    for d in DIRECTIONS:
        shape_i, shape_j = problem.shapes(d)
        s_i, s_j = shape_i.s, shape_j.s
        mass = shape_i.operators.mass
        P, X_ij, X_ji = state.P(d), state.X(d), state.X(_reverse(d))
        values["D" + d] = _dirichlet(shape_i.operators.W, X_ij) / s_i
        values["R" + d] = _mass_norm(mass, apply_map(P, X_ji) - shape_i.X) / s_i ** 2
        values["Q" + d] = _mass_norm(mass, X_ij - apply_map(P, shape_j.X)) / (s_i * s_j)
        values["L" + d] = _landmark_energy(problem, state, d)
    return EnergyTerms(alpha=problem.config.alpha, beta=state.beta, **values)


def _factorize(H: sparse.spmatrix) -> Callable[[np.ndarray], np.ndarray]:
    if cholmod_cholesky is not None:
        try:
            return cholmod_cholesky(H.tocsc())
        except CholmodError as err:
            logger.warning("cholmod failed (%s), falling back to sparse LU", err)
    try:
        return splu(H.tocsc()).solve
    except RuntimeError as err:
        raise NumericalError(f"singular X-step system: {err}") from err


def x_step_system(problem: MapProblem, state: SolverState, direction: str):
    """
    Normal equations ``H X = rhs`` of the X-step for ``X_ij``.

    ``H = alpha/s_i W_i + (1-alpha)/s_j^2 P_ji^T A_j P_ji + beta/(s_i s_j) A_i``
    plus the weak landmark diagonal.
    """
    cfg = problem.config
    shape_i, shape_j = problem.shapes(direction)
    s_i, s_j = shape_i.s, shape_j.s
    mass_i, mass_j = shape_i.operators.mass, shape_j.operators.mass
    P_ij, P_ji = state.P(direction), state.P(_reverse(direction))

    c_reverse = (1.0 - cfg.alpha) / s_j ** 2
    c_split = state.beta / (s_i * s_j)
    B = P_ji.matrix()

    H = ((cfg.alpha / s_i) * shape_i.operators.W
         + c_reverse * (B.T @ sparse.diags(mass_j) @ B)
         + sparse.diags(np.full(shape_i.n, c_split) * mass_i))
    rhs = c_reverse * (B.T @ (mass_j[:, None] * shape_j.X)) + c_split * mass_i[:, None] * apply_map(P_ij, shape_j.X)

    pairs = problem.landmark_pairs(direction)
    if pairs is not None:
        p, q = pairs
        diagonal = np.bincount(p, weights=cfg.gamma * mass_i[p], minlength=shape_i.n)
        H = H + sparse.diags(diagonal)
        np.add.at(rhs, p, cfg.gamma * mass_i[p][:, None] * shape_j.X[q])

    return H.tocsr(), rhs


def x_step(problem: MapProblem, state: SolverState, direction: str) -> np.ndarray:
    """
    Exact minimizer of the energy over ``X_ij`` with the maps fixed.

    Rows of pinned vertices are held at ``P_ij X_j``.
    """
    H, rhs = x_step_system(problem, state, direction)
    shape_i, shape_j = problem.shapes(direction)
    pinned = problem.pinned(direction)

    if len(pinned) == 0:
        X = _factorize(H)(rhs)
    else:
        free = np.setdiff1d(np.arange(shape_i.n), pinned)
        X = np.empty_like(rhs)
        X[pinned] = apply_map(state.P(direction), shape_j.X)[pinned]
        reduced = rhs[free] - H[free][:, pinned] @ X[pinned]
        X[free] = _factorize(H[free][:, free])(reduced)

    X = np.asarray(X)
    if not np.isfinite(X).all():
        raise NumericalError(f"X-step {direction} produced non-finite values")
    return X


def p_step(problem: MapProblem, state: SolverState, direction: str) -> PreciseMap:
    """
    Globally optimal ``P_ij`` with the auxiliary images fixed.

    Row ``r`` minimizes
    ``a ||p X_ji - X_i(r)||^2 + b ||p X_j - X_ij(r)||^2`` over all points
    ``p`` of the target mesh, with ``a = (1-alpha)/s_i^2`` and
    ``b = beta/(s_i s_j)``. Both terms are one distance in the stacked space
    ``[sqrt(a) X_ji, sqrt(b) X_j]``, so every row is a closest point query.
    Pinned rows are kept.
    """
    cfg = problem.config
    shape_i, shape_j = problem.shapes(direction)
    s_i, s_j = shape_i.s, shape_j.s
    ra = np.sqrt((1.0 - cfg.alpha) / s_i ** 2)
    rb = np.sqrt(state.beta / (s_i * s_j))

    X_ij, X_ji = state.X(direction), state.X(_reverse(direction))
    surface = EmbeddedSurface(np.hstack([ra * X_ji, rb * shape_j.X]), shape_j.mesh.faces)
    queries = np.hstack([ra * shape_i.X, rb * X_ij])

    pinned = problem.pinned(direction)
    if len(pinned) == 0:
        result = surface.project(queries)
        return PreciseMap(result.faces, result.weights, shape_j.mesh)

    previous = state.P(direction)
    free = np.setdiff1d(np.arange(shape_i.n), pinned)
    result = surface.project(queries[free])
    faces = previous.faces.copy()
    weights = previous.weights.copy()
    faces[free] = result.faces
    weights[free] = result.weights
    return PreciseMap(faces, weights, shape_j.mesh)


def image_area(P: PreciseMap, mesh_i, mesh_j) -> float:
    """Total area of the source triangles placed at their image points."""
    return float(triangle_areas(apply_map(P, mesh_j.vertices), mesh_i.faces).sum())


def geodesic_dirichlet_energy(P: PreciseMap, shape_i: Shape, shape_j: Shape) -> float:
    """
    ``sum_uv w_uv d_j(P(u), P(v))^2`` over the edges of the source mesh,
    with distances from the geodesic solver of the target.
    """
    u, v = shape_i.mesh.edges.T
    d = shape_j.geodesics.point_distances(P.faces[u], P.weights[u], P.faces[v], P.weights[v])
    return float(np.sum(shape_i.operators.edge_weights * d ** 2))


def euclidean_dirichlet_energy(P: PreciseMap, shape_i: Shape, shape_j: Shape) -> float:
    """``1/4 sum_uv w_uv ||P(u) - P(v)||^2`` with image points in R^3."""
    return 0.25 * _dirichlet(shape_i.operators.W, apply_map(P, shape_j.mesh.vertices))


def euclidean_harmonic_descent(P: PreciseMap, shape_i: Shape, shape_j: Shape,
                               pinned: Optional[np.ndarray] = None, iterations: int = 200,
                               step: Optional[float] = None) -> PreciseMap:
    """
    Reduce the Euclidean Dirichlet energy by explicit gradient steps
    ``Y -= step A^-1 W Y``, each followed by projecting ``Y`` back onto the
    target surface in R^3.

    Parameters
    ----------
    P : PreciseMap
        Initial map.
    pinned : array_like, optional
        Source vertices that keep their initial image.
    iterations : int, default 200
    step : float, optional
        Defaults to the largest step that keeps the explicit iteration
        stable, ``1 / max_i (sum_j |W_ij| / A_ii)``.
    """
    W = shape_i.operators.W
    mass = shape_i.operators.mass
    if step is None:
        step = 1.0 / float(np.max(np.asarray(abs(W).sum(axis=1)).ravel() / mass))
    free = np.ones(shape_i.n, dtype=bool)
    if pinned is not None:
        free[np.asarray(pinned, dtype=np.int64)] = False

    target = EmbeddedSurface(shape_j.mesh.vertices, shape_j.mesh.faces)
    faces, weights = P.faces.copy(), P.weights.copy()
    for _ in range(iterations):
        Y = apply_map(PreciseMap(faces, weights, shape_j.mesh), shape_j.mesh.vertices)
        Y[free] -= step * (W @ Y)[free] / mass[free, None]
        result = target.project(Y[free])
        faces[free] = result.faces
        weights[free] = result.weights
    return PreciseMap(faces, weights, shape_j.mesh)


@dataclass(frozen=True)
class TraceRecord:
    """Energies and diagnostics after one iteration (0 is the initial state)."""

    iteration: int
    total: float
    D12: float
    D21: float
    R12: float
    R21: float
    Q12: float
    Q21: float
    geodesic: float
    area12: float
    area21: float
    beta: float
    L12: float
    L21: float


TRACE_COLUMNS = {
    "iteration": "iteration",
    "total": "E_total",
    "D12": "E_D12",
    "D21": "E_D21",
    "R12": "E_R12",
    "R21": "E_R21",
    "Q12": "E_Q12",
    "Q21": "E_Q21",
    "geodesic": "E_geodesic",
    "area12": "imageArea12",
    "area21": "imageArea21",
    "beta": "beta",
    "L12": "E_L12",
    "L21": "E_L21",
}


def write_trace(path: Union[str, Path], trace: List[TraceRecord]) -> None:
    """Write the trace as CSV, one row per iteration."""
    frame = pd.DataFrame([asdict(record) for record in trace], columns=list(TRACE_COLUMNS))
    frame.rename(columns=TRACE_COLUMNS).to_csv(path, sep=",", index=False)


@dataclass(frozen=True, eq=False)
class SolverResult:
    """
    Final state, the per-iteration trace and why the iteration stopped,
    ``"converged"`` or ``"max_iter"``.
    """

    state: SolverState
    trace: List[TraceRecord]
    reason: str

    @property
    def P12(self) -> PreciseMap:
        return self.state.P12

    @property
    def P21(self) -> PreciseMap:
        return self.state.P21

    @property
    def iterations(self) -> int:
        return self.state.iteration


class _GeodesicMonitor:
    """Exact geodesic energy of both maps, relative to its first value."""

    def __init__(self, problem: MapProblem):
        self.problem = problem
        self.every = problem.config.geodesic_every
        self.first = None

    def __call__(self, state: SolverState) -> float:
        if self.every == 0 or state.iteration % self.every:
            return float("nan")
        value = sum(geodesic_dirichlet_energy(state.P(d), *self.problem.shapes(d)) / self.problem.shapes(d)[0].s
                    for d in DIRECTIONS)
        if self.first is None:
            self.first = value if value > 0 else 1.0
        return value / self.first


def _record(problem: MapProblem, state: SolverState, terms: EnergyTerms, monitor: _GeodesicMonitor) -> TraceRecord:
    s1, s2 = problem.shape1, problem.shape2
    return TraceRecord(
        iteration=state.iteration, total=terms.total,
        D12=terms.D12, D21=terms.D21, R12=terms.R12, R21=terms.R21, Q12=terms.Q12, Q21=terms.Q21,
        geodesic=monitor(state),
        area12=image_area(state.P12, s1.mesh, s2.mesh),
        area21=image_area(state.P21, s2.mesh, s1.mesh),
        beta=state.beta, L12=terms.L12, L21=terms.L21)


def _converged(config: SolverConfig, before: float, after: float) -> bool:
    change = abs(before - after)
    if config.stop == "absolute":
        return change <= config.tol
    return change <= config.tol * max(abs(before), abs(after), _ENERGY_FLOOR)


def _unchanged(problem: MapProblem, direction: str, before: PreciseMap, after: PreciseMap) -> bool:
    if before.equals(after):
        return True
    target = problem.shapes(direction)[1]
    V = target.mesh.vertices
    moved = float(np.abs(apply_map(after, V) - apply_map(before, V)).max())
    return moved <= _FIXED_MAP_TOL * np.sqrt(target.s)


def run(problem: MapProblem, init: Initialization,
        callback: Optional[Callable[[str, SolverState], None]] = None) -> SolverResult:
    """
    Alternating minimization of the split energy.

    Every iteration ``k`` sets ``beta = config.beta(k)`` and then performs,
    for ``ij = 12`` and ``ij = 21`` in turn, a P-step and an X-step. The
    iteration stops when the total energy changed less than ``config.tol``
    (measured with the current ``beta`` on both sides), when an iteration
    leaves both maps where they were, or after ``config.max_iter``
    iterations.

    Parameters
    ----------
    problem : MapProblem
    init : Initialization
        Without maps (functional map initialization) both maps are first
        computed by P-steps from the initial auxiliary images.
    callback : callable, optional
        ``callback(stage, state)`` with stage ``"start"`` at the beginning
        of every iteration and ``"P12"``, ``"X12"``, ``"P21"``, ``"X21"``
        after the corresponding sub-step.

    Returns
    -------
    result : SolverResult
    """
    cfg = problem.config
    for d in DIRECTIONS:
        X = init.X12 if d == "12" else init.X21
        shape_i, shape_j = problem.shapes(d)
        if X.shape != (shape_i.n, shape_j.X.shape[1]):
            raise MapError(f"X{d} has shape {X.shape}, expected {(shape_i.n, shape_j.X.shape[1])}")

    state = SolverState.from_initialization(init, beta=cfg.beta(1))
    if state.P12 is None or state.P21 is None:
        if len(problem.pinned("12")) or len(problem.pinned("21")):
            raise ValueError("pinned rows need an initial map")
        for d in DIRECTIONS:
            state.set_P(d, p_step(problem, state, d))

    monitor = _GeodesicMonitor(problem)
    previous = energy_terms(problem, state)
    trace = [_record(problem, state, previous, monitor)]
    logger.info("solver start: alpha=%g, energy %.6g", cfg.alpha, previous.total)

    reason = "max_iter"
    for k in range(1, cfg.max_iter + 1):
        state.iteration = k
        state.beta = cfg.beta(k)
        if callback is not None:
            callback("start", state)

        maps = {"12": state.P12, "21": state.P21}
        for d in DIRECTIONS:
            state.set_P(d, p_step(problem, state, d))
            if callback is not None:
                callback("P" + d, state)
            state.set_X(d, x_step(problem, state, d))
            if callback is not None:
                callback("X" + d, state)

        terms = energy_terms(problem, state)
        trace.append(_record(problem, state, terms, monitor))
        logger.debug("iteration %d: beta=%.4g energy=%.10g", k, state.beta, terms.total)

        if _converged(cfg, previous.total_at(state.beta), terms.total):
            reason = "converged"
            break
        if all(_unchanged(problem, d, maps[d], state.P(d)) for d in DIRECTIONS):
            logger.debug("iteration %d left both maps in place", k)
            reason = "converged"
            break
        previous = terms

    logger.info("solver finished after %d iterations (%s), energy %.6g",
                state.iteration, reason, trace[-1].total)
    return SolverResult(state, trace, reason)
