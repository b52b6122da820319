#!/usr/bin/env python
# -*- coding: utf-8 -*-

import unittest

import numpy as np
import pytest
from scipy.linalg import eigh
from scipy.sparse.csgraph import shortest_path

from revharm.errors import MapError
from revharm.initialization import (FunctionalMap, LandmarkSet, init_from_functional_map, init_from_landmarks,
                                    init_from_pointwise, lb_basis, load_functional_map, load_landmarks,
                                    merge_landmarks, perturb_landmarks, save_functional_map, save_landmarks)
from revharm.maps import PreciseMap, apply_map
from revharm.mesh import compute_operators
from revharm.shape import prepare_shape
from revharm.shapes import grid, icosphere
from revharm.solver import MapProblem, SolverConfig, run


def euclidean_shape(mesh):
    return prepare_shape(mesh, dim=3, metric="euclidean")


class LandmarkSetTest(unittest.TestCase):
    def testLengthMismatch(self):
        self.assertRaises(MapError, LandmarkSet, [0, 1], [0])

    def testEmpty(self):
        self.assertRaises(MapError, LandmarkSet, [], [])

    def testValidate(self):
        landmarks = LandmarkSet([0, 5], [1, 2])
        self.assertIs(landmarks.validate(6, 3), landmarks)
        self.assertRaises(MapError, landmarks.validate, 5, 3)
        self.assertRaises(MapError, landmarks.validate, 6, 2)

    def testReversed(self):
        landmarks = LandmarkSet([0, 5], [1, 2]).reversed()
        self.assertEqual(landmarks.source.tolist(), [1, 2])
        self.assertEqual(landmarks.target.tolist(), [0, 5])

    def testMerge(self):
        merged = merge_landmarks(LandmarkSet([0, 1, 2], [7, 8, 9]), 0, 2)
        self.assertEqual(merged.target.tolist(), [7, 8, 7])
        self.assertEqual(merged.source.tolist(), [0, 1, 2])


def test_landmark_file(tmp_path):
    path = tmp_path / "lm.txt"
    path.write_text("# source target\n1 3\n10 4\n")
    landmarks = load_landmarks(path)
    assert landmarks.source.tolist() == [0, 9]
    assert landmarks.target.tolist() == [2, 3]

    save_landmarks(tmp_path / "out.txt", landmarks)
    again = load_landmarks(tmp_path / "out.txt")
    assert again.source.tolist() == [0, 9]
    assert again.target.tolist() == [2, 3]

    for text in ("1 2 3\n", "1 x\n", "1.5 2\n", "# nothing\n"):
        path.write_text(text)
        with pytest.raises(MapError):
            load_landmarks(path)


def test_perturbed_landmarks_stay_within_rings():
    mesh = icosphere(3)
    landmarks = LandmarkSet(np.arange(20), np.arange(20) * 30)
    moved = perturb_landmarks(landmarks, mesh, 2, np.random.default_rng(0))
    hops = shortest_path(mesh.adjacency, unweighted=True, indices=landmarks.target)
    assert np.all(hops[np.arange(20), moved.target] <= 2)
    np.testing.assert_array_equal(moved.source, landmarks.source)


def test_landmark_initialization_sends_cells_to_landmarks():
    """
    every vertex is sent to the target landmark of its source cell
    """
    mesh = icosphere(2)
    shape = euclidean_shape(mesh)
    landmarks = LandmarkSet([0, 40, 100], [1, 41, 101])
    init = init_from_landmarks(landmarks, shape, shape)

    images = init.P12.vertex_ids()[np.arange(mesh.n_vertices), init.P12.weights.argmax(axis=1)]
    assert set(images.tolist()) == {1, 41, 101}
    assert images[0] == 1
    assert images[40] == 41
    assert images[100] == 101

    back = init.P21.vertex_ids()[np.arange(mesh.n_vertices), init.P21.weights.argmax(axis=1)]
    assert set(back.tolist()) == {0, 40, 100}
    np.testing.assert_allclose(init.X12, apply_map(init.P12, shape.X))
    np.testing.assert_allclose(init.X21, apply_map(init.P21, shape.X))


def test_landmark_initialization_ignores_pair_order():
    mesh = icosphere(2)
    rng = np.random.default_rng(8)
    shape = euclidean_shape(mesh.with_vertices(mesh.vertices + rng.normal(scale=0.01, size=mesh.vertices.shape)))
    landmarks = LandmarkSet([0, 40, 100, 150], [1, 41, 101, 151])
    order = [2, 0, 3, 1]
    shuffled = LandmarkSet(landmarks.source[order], landmarks.target[order])

    first = init_from_landmarks(landmarks, shape, shape)
    second = init_from_landmarks(shuffled, shape, shape)
    assert first.P12.equals(second.P12)
    assert first.P21.equals(second.P21)
    np.testing.assert_array_equal(first.X12, second.X12)


def test_landmark_initialization_validates_ids():
    shape = euclidean_shape(icosphere(1))
    with pytest.raises(MapError):
        init_from_landmarks(LandmarkSet([0], [shape.n]), shape, shape)


def test_pointwise_initialization():
    mesh1, mesh2 = grid(4, 4), grid(6, 6)
    shape1, shape2 = euclidean_shape(mesh1), euclidean_shape(mesh2)
    P12 = PreciseMap.from_projection(mesh1.vertices, mesh2)
    init = init_from_pointwise(P12, shape1, shape2)
    assert init.P12 is P12
    assert init.P21.n_source == mesh2.n_vertices
    assert init.X12.shape == (mesh1.n_vertices, 3)
    np.testing.assert_allclose(init.X12, apply_map(P12, shape2.X))

    with pytest.raises(MapError):
        init_from_pointwise(P12, shape2, shape1)


def test_collapsed_pointwise_initialization_can_be_solved():
    """
    a map sending everything to one vertex is a valid starting point
    """
    mesh1, mesh2 = icosphere(1), icosphere(2)
    shape1, shape2 = euclidean_shape(mesh1), euclidean_shape(mesh2)
    P12 = PreciseMap.from_vertices(mesh2, np.full(mesh1.n_vertices, 9))
    init = init_from_pointwise(P12, shape1, shape2)
    np.testing.assert_allclose(init.X12, np.broadcast_to(shape2.X[9], init.X12.shape))
    # every target vertex is equally close to the single image point
    np.testing.assert_allclose(apply_map(init.P21, mesh1.vertices),
                               np.broadcast_to(mesh1.vertices[0], (mesh2.n_vertices, 3)))

    problem = MapProblem(shape1, shape2, SolverConfig(max_iter=2, geodesic_every=0))
    result = run(problem, init)
    assert result.iterations >= 1
    assert np.isfinite([row.total for row in result.trace]).all()


class BasisTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.mesh = icosphere(3)
        cls.ops = compute_operators(cls.mesh)
        cls.basis, cls.evals = lb_basis(cls.mesh, cls.ops, 10, return_eigenvalues=True)

    def testMassOrthonormal(self):
        gram = self.basis.T @ (self.ops.mass[:, None] * self.basis)
        np.testing.assert_allclose(gram, np.eye(10), atol=1e-10)

    def testSphereSpectrum(self):
        self.assertAlmostEqual(self.evals[0], 0.0, places=8)
        np.testing.assert_allclose(self.evals[1:4], 2.0, rtol=0.02)
        np.testing.assert_allclose(self.evals[4:9], 6.0, rtol=0.03)

    def testFirstFunctionIsConstant(self):
        first = self.basis[:, 0]
        np.testing.assert_allclose(first, first.mean(), rtol=1e-6)
        self.assertGreater(first.mean(), 0)

    def testMatchesDenseSolve(self):
        evals, _ = eigh(self.ops.W.toarray(), np.diag(self.ops.mass), subset_by_index=[0, 9])
        np.testing.assert_allclose(self.evals, evals, rtol=1e-6, atol=1e-8)

    def testSignConvention(self):
        pivot = self.basis[np.argmax(np.abs(self.basis), axis=0), np.arange(10)]
        self.assertTrue(np.all(pivot > 0))

    def testSizeRange(self):
        self.assertRaises(ValueError, lb_basis, self.mesh, self.ops, 0)
        self.assertRaises(ValueError, lb_basis, self.mesh, self.ops, self.mesh.n_vertices + 1)


def test_functional_map_validation():
    with pytest.raises(MapError):
        FunctionalMap(np.eye(3), np.eye(4))
    with pytest.raises(MapError):
        FunctionalMap(np.full((2, 2), np.nan), np.eye(2))
    fmap = FunctionalMap(np.ones((3, 4)), np.ones((4, 3)))
    assert (fmap.k1, fmap.k2) == (3, 4)


def test_functional_map_file(tmp_path):
    rng = np.random.default_rng(0)
    fmap = FunctionalMap(rng.normal(size=(5, 6)), rng.normal(size=(6, 5)))
    save_functional_map(tmp_path / "c.fmap", fmap)
    loaded = load_functional_map(tmp_path / "c.fmap")
    np.testing.assert_array_equal(loaded.C12, fmap.C12)
    np.testing.assert_array_equal(loaded.C21, fmap.C21)

    text = (tmp_path / "c.fmap").read_text()
    (tmp_path / "short.fmap").write_text(text.rsplit("\n", 2)[0])
    with pytest.raises(MapError):
        load_functional_map(tmp_path / "short.fmap")
    (tmp_path / "long.fmap").write_text(text + "1.0\n")
    with pytest.raises(MapError):
        load_functional_map(tmp_path / "long.fmap")


def test_full_identity_functional_map_reproduces_coordinates():
    """
    with a complete basis the identity functional map transports every
    function unchanged
    """
    mesh = icosphere(1)
    shape = euclidean_shape(mesh)
    init = init_from_functional_map(FunctionalMap.identity(mesh.n_vertices), shape, shape)
    assert init.P12 is None and init.P21 is None
    np.testing.assert_allclose(init.X12, shape.X, atol=1e-8)
    np.testing.assert_allclose(init.X21, shape.X, atol=1e-8)


def test_truncated_functional_map_is_smooth():
    mesh = icosphere(2)
    shape = euclidean_shape(mesh)
    init = init_from_functional_map(FunctionalMap.identity(4), shape, shape)
    # coordinates of a sphere lie in the span of the first four eigenfunctions
    np.testing.assert_allclose(init.X12, shape.X, atol=0.05)


def test_functional_map_basis_mismatch():
    mesh = icosphere(1)
    shape = euclidean_shape(mesh)
    basis = lb_basis(mesh, shape.operators, 5)
    with pytest.raises(MapError):
        init_from_functional_map(FunctionalMap.identity(6), shape, shape, basis, basis)
