#!/usr/bin/env python
# -*- coding: utf-8 -*-

import unittest
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from revharm.geodesics import (GeodesicSolver, evaluate_geodesic, geodesic_voronoi, gradient_operator,
                               single_source)
from revharm.maps import BarycentricPoint
from revharm.mesh import TriangleMesh, compute_operators
from revharm.shapes import grid, icosphere, strip


def antipode(mesh, v):
    return int(np.argmin(mesh.vertices @ mesh.vertices[v]))


class GeodesicSolverTest(unittest.TestCase):
    def setUp(self):
        self.sphere = icosphere(3)
        self.ops = compute_operators(self.sphere)
        self.solver = GeodesicSolver(self.sphere, self.ops)

    def testUnknownMethod(self):
        self.assertRaises(ValueError, GeodesicSolver, self.sphere, self.ops, method="fmm")
        self.assertRaises(ValueError, GeodesicSolver, self.sphere, self.ops, time_factor=0.0)

    def testSourceOutOfRange(self):
        self.assertRaises(ValueError, self.solver.distance_matrix, [self.sphere.n_vertices])
        self.assertRaises(ValueError, self.solver.distance_matrix, [-1])

    def testSelfDistance(self):
        field = self.solver.single_source(17)
        self.assertEqual(field.dist[17], 0.0)
        self.assertTrue(np.all(field.dist >= 0))
        self.assertTrue(np.all(np.isfinite(field.dist)))

    def testNearSymmetric(self):
        sources = np.arange(0, self.sphere.n_vertices, 37)
        D = self.solver.distance_matrix(sources)[:, sources]
        self.assertLessEqual(np.abs(D - D.T).max(), 0.02 * D.max())

    def testChunksAgree(self):
        sources = np.arange(0, 300, 7)
        whole = self.solver.distance_matrix(sources)
        chunked = GeodesicSolver(self.sphere, self.ops, chunk_size=5).distance_matrix(sources)
        np.testing.assert_allclose(whole, chunked, rtol=1e-10, atol=1e-12)

    def testConcurrentSolves(self):
        sources = list(range(0, 640, 40))
        serial = [self.solver.single_source(v).dist for v in sources]
        with ThreadPoolExecutor(max_workers=4) as pool:
            parallel = list(pool.map(lambda v: self.solver.single_source(v).dist, sources))
        for a, b in zip(serial, parallel):
            np.testing.assert_array_equal(a, b)


def test_sphere_antipodal_distance():
    """
    unit sphere, antipodal vertices are pi apart
    """
    sphere = icosphere(4)
    field = single_source(sphere, compute_operators(sphere), 0)
    assert field.dist[antipode(sphere, 0)] == pytest.approx(np.pi, rel=0.03)


def test_strip_distance_is_arc_length():
    mesh = strip(10.0, 0.5, 40)
    bottom = np.arange(41)
    x = mesh.vertices[bottom, 0]
    far = x >= 2.0
    heat = single_source(mesh, None, 0).dist
    assert np.all(np.abs(heat[bottom][far] - x[far]) <= 0.03 * x[far])
    # the bottom row is a straight edge path
    exact = single_source(mesh, None, 0, method="dijkstra").dist
    np.testing.assert_allclose(exact[bottom], x, atol=1e-12)


def test_dijkstra_is_exact_on_edges():
    mesh = grid(4, 4)
    dist = single_source(mesh, None, 0, method="dijkstra").dist
    assert dist[4] == pytest.approx(1.0)
    assert dist[24] == pytest.approx(np.sqrt(2.0))


def test_disconnected_vertices_are_infinite():
    V = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 0, 0], [6, 0, 0], [5, 1, 0]]
    mesh = TriangleMesh(V, [[0, 1, 2], [3, 4, 5]])
    for method in ("heat", "dijkstra"):
        dist = single_source(mesh, None, 0, method=method).dist
        assert np.all(np.isinf(dist[3:])), method
        assert np.all(np.isfinite(dist[:3])), method


def test_gradient_of_linear_function():
    mesh = grid(3, 3, alternate=True)
    G = gradient_operator(mesh)
    g = 2.0 * mesh.vertices[:, 0] - mesh.vertices[:, 1]
    grad = (G @ g).reshape(-1, 3)
    np.testing.assert_allclose(grad, np.tile([2.0, -1.0, 0.0], (mesh.n_faces, 1)), atol=1e-12)


def test_voronoi_single_center():
    sphere = icosphere(2)
    assignment = geodesic_voronoi(sphere, None, [5])
    assert np.all(assignment == 0)


def test_voronoi_antipodal_centers():
    sphere = icosphere(3)
    a = 0
    b = antipode(sphere, a)
    assignment = geodesic_voronoi(sphere, None, [a, b])
    assert assignment[a] == 0
    assert assignment[b] == 1

    height = sphere.vertices @ sphere.vertices[a]
    ring = 2.0 * sphere.mean_edge_length
    assert np.all(assignment[height > ring] == 0)
    assert np.all(assignment[height < -ring] == 1)


def test_voronoi_minimality_and_duplicates():
    sphere = icosphere(2)
    ops = compute_operators(sphere)
    solver = GeodesicSolver(sphere, ops)
    centers = [3, 40, 3, 100]
    assignment = geodesic_voronoi(sphere, ops, centers, solver=solver)
    assert assignment[3] == 0
    assert assignment[40] == 1
    assert assignment[100] == 3
    assert not np.any(assignment == 2)

    D = solver.distance_matrix(centers)
    others = np.setdiff1d(np.arange(sphere.n_vertices), centers)
    chosen = D[assignment[others], others]
    assert np.all(chosen <= D[:, others].min(axis=0) + 1e-12)


def test_voronoi_needs_centers():
    with pytest.raises(ValueError):
        geodesic_voronoi(icosphere(1), None, [])


def test_evaluate_geodesic_consistency():
    sphere = icosphere(3)
    ops = compute_operators(sphere)
    solver = GeodesicSolver(sphere, ops)
    p = BarycentricPoint.at_vertex(sphere, 10)
    q = BarycentricPoint.at_vertex(sphere, 300)
    assert evaluate_geodesic(sphere, ops, p, q, solver) == pytest.approx(solver.single_source(10).dist[300])

    inside = BarycentricPoint(7, (0.2, 0.3, 0.5))
    assert evaluate_geodesic(sphere, ops, inside, inside, solver) == 0.0


def test_point_distances_flat_square():
    """
    random point pairs on a flat square are Euclidean distances apart
    """
    mesh = grid(20, 20, alternate=True)
    solver = GeodesicSolver(mesh)
    rng = np.random.default_rng(0)
    q = 300
    faces_a = rng.integers(mesh.n_faces, size=q)
    faces_b = rng.integers(mesh.n_faces, size=q)
    weights_a = rng.dirichlet(np.ones(3), size=q)
    weights_b = rng.dirichlet(np.ones(3), size=q)

    pa = np.einsum("ij,ijk->ik", weights_a, mesh.vertices[mesh.faces[faces_a]])
    pb = np.einsum("ij,ijk->ik", weights_b, mesh.vertices[mesh.faces[faces_b]])
    exact = np.linalg.norm(pa - pb, axis=1)
    keep = exact > 0.4

    d = solver.point_distances(faces_a, weights_a, faces_b, weights_b)
    rel = np.abs(d[keep] - exact[keep]) / exact[keep]
    assert np.median(rel) < 0.02
    assert rel.max() < 0.05


def test_point_distances_same_face_is_exact():
    mesh = grid(5, 5)
    solver = GeodesicSolver(mesh)
    d = solver.point_distances([3], [(1.0, 0.0, 0.0)], [3], [(0.0, 0.5, 0.5)])
    corners = mesh.vertices[mesh.faces[3]]
    assert d[0] == pytest.approx(np.linalg.norm(corners[0] - 0.5 * (corners[1] + corners[2])))
