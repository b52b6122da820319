#!/usr/bin/env python
# -*- coding: utf-8 -*-

import unittest

import numpy as np
import pytest

from revharm.errors import MeshError
from revharm.mesh import (TriangleMesh, compute_operators, face_differential, face_differentials, load_mesh,
                          save_mesh, triangle_areas)
from revharm.shapes import disk, enneper, grid, icosphere, random_rotation, scaled, transformed


def equilateral():
    return TriangleMesh([[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]], [[0, 1, 2]])


def write(path, text):
    path.write_text(text)
    return path


class MeshValidationTest(unittest.TestCase):
    def testRepeatedVertex(self):
        with self.assertRaises(MeshError) as ctx:
            TriangleMesh(np.eye(3), [[0, 1, 1]])
        self.assertEqual(ctx.exception.faces.tolist(), [0])

    def testIndexOutOfRange(self):
        self.assertRaises(MeshError, TriangleMesh, np.eye(3), [[0, 1, 3]])
        self.assertRaises(MeshError, TriangleMesh, np.eye(3), [[-1, 1, 2]])

    def testNonFinite(self):
        V = np.eye(3)
        V[1, 1] = np.nan
        self.assertRaises(MeshError, TriangleMesh, V, [[0, 1, 2]])

    def testShapes(self):
        self.assertRaises(MeshError, TriangleMesh, np.zeros((3, 2)), [[0, 1, 2]])
        self.assertRaises(MeshError, TriangleMesh, np.eye(4, 3), [[0, 1, 2, 3]])
        self.assertRaises(MeshError, TriangleMesh, np.eye(3), np.zeros((0, 3), dtype=int))

    def testNonManifoldEdge(self):
        V = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]]
        self.assertRaises(MeshError, TriangleMesh, V, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])

    def testReadOnly(self):
        mesh = equilateral()
        with self.assertRaises(ValueError):
            mesh.vertices[0, 0] = 1.0


def test_single_triangle_obj(tmp_path):
    """
    smallest valid mesh
    """
    path = write(tmp_path / "tri.obj", "# one triangle\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    mesh = load_mesh(path)
    assert mesh.n_vertices == 3
    assert mesh.n_faces == 1
    assert len(mesh.edges) == 3
    assert len(mesh.boundary_edges) == 3


def test_obj_corner_tokens(tmp_path):
    """
    f i/t/n records keep the texture index, negative indices are relative
    """
    text = ("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nvn 0 0 1\n"
            "f -3/-3/1 -2/-2/1 -1/-1/1\n")
    mesh = load_mesh(write(tmp_path / "uv.obj", text))
    assert mesh.faces.tolist() == [[0, 1, 2]]
    assert mesh.has_uv
    assert mesh.face_uv.tolist() == [[0, 1, 2]]


def test_obj_quad_rejected(tmp_path):
    path = write(tmp_path / "quad.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\nf 1 3 4 2\n")
    with pytest.raises(MeshError, match="face 1"):
        load_mesh(path)


def test_obj_parse_errors(tmp_path):
    with pytest.raises(MeshError):
        load_mesh(write(tmp_path / "bad.obj", "v 0 0 zero\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"))
    with pytest.raises(MeshError):
        load_mesh(write(tmp_path / "range.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n"))
    with pytest.raises(MeshError):
        load_mesh(write(tmp_path / "degenerate.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 2\n"))
    with pytest.raises(MeshError):
        load_mesh(write(tmp_path / "empty.obj", "v 0 0 0\n"))


def test_icosphere_round_trip(tmp_path):
    sphere = icosphere(3)
    save_mesh(tmp_path / "sphere.obj", sphere)
    mesh = load_mesh(tmp_path / "sphere.obj")
    assert mesh.n_vertices == 642
    assert mesh.is_closed
    assert np.all(mesh._edge_face_count == 2)
    assert np.array_equal(mesh.vertices, sphere.vertices)
    assert np.array_equal(mesh.faces, sphere.faces)


def test_uv_round_trip(tmp_path):
    square = grid(2, 2)
    uv_mesh = TriangleMesh(square.vertices, square.faces, uv=square.vertices[:, :2], face_uv=square.faces)
    save_mesh(tmp_path / "uv.obj", uv_mesh)
    mesh = load_mesh(tmp_path / "uv.obj")
    assert np.array_equal(mesh.uv, uv_mesh.uv)
    assert np.array_equal(mesh.face_uv, uv_mesh.face_uv)


def test_equilateral_operators():
    """
    every edge of the unit equilateral triangle has weight cot(60)/2
    """
    ops = compute_operators(equilateral())
    assert np.allclose(ops.edge_weights, 1 / (2 * np.sqrt(3)))
    assert ops.s == pytest.approx(np.sqrt(3) / 4)
    assert np.allclose(ops.mass, np.sqrt(3) / 12)


def test_unit_square_operators():
    """
    the diagonal is opposite two right angles and gets weight 0, the sides
    are opposite 45 degree angles and get 1/2
    """
    square = grid(1, 1)
    ops = compute_operators(square)
    diagonal = square.edge_index(0, 3)
    assert ops.edge_weights[diagonal] == pytest.approx(0.0, abs=1e-15)
    sides = np.setdiff1d(np.arange(len(square.edges)), [diagonal])
    assert np.allclose(ops.edge_weights[sides], 0.5)
    assert ops.s == pytest.approx(1.0)


def test_operator_invariants():
    for mesh in (icosphere(2), grid(5, 4, alternate=True), enneper(4)):
        ops = compute_operators(mesh)
        assert abs(ops.W - ops.W.T).max() == 0
        ones = np.ones(mesh.n_vertices)
        assert abs(ones @ (ops.W @ ones)) <= 1e-10 * abs(ops.W).sum()
        assert ops.mass.sum() == pytest.approx(ops.face_areas.sum(), rel=1e-12)
        assert np.all(ops.mass > 0)


def test_dirichlet_of_linear_function():
    mesh = grid(6, 6, width=2.0)
    ops = compute_operators(mesh)
    g = mesh.vertices[:, 0]
    assert g @ (ops.W @ g) == pytest.approx(4.0, rel=1e-12)


def test_scale_covariance():
    mesh = icosphere(2)
    ops = compute_operators(mesh)
    big = compute_operators(scaled(mesh, 3.0))
    assert big.s == pytest.approx(9 * ops.s, rel=1e-12)
    assert np.allclose(big.mass, 9 * ops.mass, rtol=1e-12)
    assert abs(big.W - ops.W).max() <= 1e-12 * abs(ops.W).max()


def test_negative_weights_clamped():
    # an obtuse triangle next to a thin one gives a negative edge weight
    V = [[0, 0, 0], [2, 0, 0], [1, 0.1, 0], [1, -0.1, 0]]
    mesh = TriangleMesh(V, [[0, 1, 2], [1, 0, 3]])
    ops = compute_operators(mesh)
    assert ops.edge_weights.min() < 0
    clamped = compute_operators(mesh, clamp_negative=True)
    assert clamped.edge_weights.min() == 0
    assert clamped.clamped


def test_zero_area_face_reported():
    V = [[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]]
    mesh = TriangleMesh(V, [[0, 1, 3], [0, 1, 2]])
    with pytest.raises(MeshError) as info:
        compute_operators(mesh)
    assert info.value.faces.tolist() == [1]


def test_face_differential_examples():
    tri = np.array([[0, 0, 0], [1, 0, 0], [0.3, 0.8, 0]])
    rng = np.random.default_rng(4)
    R = random_rotation(rng)
    s1, s2 = face_differential(tri, tri @ R.T + 5.0)
    assert s1 == pytest.approx(1.0, rel=1e-12)
    assert s2 == pytest.approx(1.0, rel=1e-12)

    s1, s2 = face_differential(tri, 2 * tri)
    assert (s1, s2) == (pytest.approx(2.0), pytest.approx(2.0))

    collapsed = tri.copy()
    collapsed[:, 1] = 0.0
    s1, s2 = face_differential(tri, collapsed)
    assert s1 > 0
    assert s2 == pytest.approx(0.0, abs=1e-12)


def test_face_differential_stretch():
    mesh = grid(4, 4)
    stretched = mesh.vertices * [2.0, 1.0, 1.0]
    s1, s2 = face_differentials(mesh.vertices, mesh.faces, stretched)
    assert np.allclose(s1, 2.0)
    assert np.allclose(s2, 1.0)


def test_face_differential_rigid_invariance():
    rng = np.random.default_rng(11)
    for _ in range(20):
        tri = rng.normal(size=(3, 3))
        image = rng.normal(size=(3, 3))
        R1, R2 = random_rotation(rng), random_rotation(rng)
        expected = face_differential(tri, image)
        moved = face_differential(tri @ R1.T + rng.normal(size=3), image @ R2.T + rng.normal(size=3))
        assert np.allclose(expected, moved, rtol=1e-9)


def test_triangle_areas_any_dimension():
    tri = np.array([[0, 0], [3, 0], [0, 4]], dtype=float)
    assert triangle_areas(tri, np.array([[0, 1, 2]]))[0] == pytest.approx(6.0)
    high = np.zeros((3, 8))
    high[:, 2:4] = tri
    assert triangle_areas(high, np.array([[0, 1, 2]]))[0] == pytest.approx(6.0)


def test_derived_topology():
    mesh = disk(3)
    assert mesh.n_vertices == 1 + 3 * 3 * 4
    assert mesh.is_connected
    assert not mesh.is_closed
    assert len(mesh.boundary_vertices) == 18
    assert mesh.edge_index(0, 0) == -1
    for f, face in enumerate(mesh.faces[:10]):
        assert mesh.vertex_lowest_face[face[0]] <= f
        assert mesh.edge_lowest_face[mesh.edge_index(face[0], face[1])] <= f


def test_disk_and_enneper_share_connectivity():
    assert np.array_equal(disk(5).faces, enneper(5).faces)
    compute_operators(enneper(5))


def test_digest_tracks_geometry():
    mesh = icosphere(1)
    assert mesh.digest == icosphere(1).digest
    assert mesh.digest != transformed(mesh, np.eye(3), (0.0, 0.0, 1e-9)).digest
