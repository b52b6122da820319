# SPDX-License-Identifier: MIT
# Copyright (C) 2026 The revharm authors

"""
Procedural meshes used by the tests, the benchmarks and the documentation.
"""

from __future__ import annotations

import numpy as np

from revharm.mesh import TriangleMesh

_ICOSAHEDRON_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
])


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriangleMesh:
    """
    Sphere obtained by repeatedly splitting every face of an icosahedron
    into four and pushing the new vertices onto the sphere.

    ``10 * 4**subdivisions + 2`` vertices: 162 for 2, 642 for 3, 2562 for 4.
    """
    t = (1.0 + np.sqrt(5.0)) / 2.0
    V = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    F = _ICOSAHEDRON_FACES.copy()

    for _ in range(subdivisions):
        pairs = np.sort(F[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
        unique, inverse = np.unique(pairs, axis=0, return_inverse=True)
        mid = V[unique[:, 0]] + V[unique[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        m = len(V) + np.asarray(inverse).reshape(-1, 3)
        a, b, c = F.T
        m01, m12, m20 = m.T
        F = np.concatenate([
            np.stack([a, m01, m20], axis=1),
            np.stack([b, m12, m01], axis=1),
            np.stack([c, m20, m12], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ])
        V = np.concatenate([V, mid])

    return TriangleMesh(radius * V, F)


def grid(nx: int = 10, ny: int = 10, width: float = 1.0, height: float = None,
         alternate: bool = False) -> TriangleMesh:
    """
    Flat rectangle ``[0, width] x [0, height]`` in the z = 0 plane, split
    into ``nx * ny`` cells of two triangles. Vertex ``(i, j)`` has id
    ``j * (nx + 1) + i``.

    With ``alternate`` the cell diagonals alternate direction, which gives
    every interior vertex the same valence.
    """
    height = width if height is None else height
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    V = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=1)

    faces = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            b, c, d = a + 1, a + nx + 2, a + nx + 1
            if alternate and (i + j) % 2:
                faces += [[a, b, d], [b, c, d]]
            else:
                faces += [[a, b, c], [a, c, d]]
    return TriangleMesh(V, np.array(faces))


def strip(length: float = 10.0, width: float = 0.5, segments: int = 40) -> TriangleMesh:
    """Thin planar strip, one cell wide."""
    return grid(segments, 1, length, width)


def _disk_layout(rings: int):
    points = [np.zeros((1, 2))]
    angles = [np.zeros(1)]
    ids = [np.zeros(1, dtype=np.int64)]
    count = 1
    for k in range(1, rings + 1):
        theta = 2.0 * np.pi * np.arange(6 * k) / (6 * k)
        points.append(k / rings * np.stack([np.cos(theta), np.sin(theta)], axis=1))
        angles.append(theta)
        ids.append(count + np.arange(6 * k))
        count += 6 * k

    faces = [[0, ids[1][j], ids[1][(j + 1) % 6]] for j in range(6)]
    for k in range(2, rings + 1):
        inner, outer = ids[k - 1], ids[k]
        inner_angle = np.r_[angles[k - 1], 2.0 * np.pi]
        outer_angle = np.r_[angles[k], 2.0 * np.pi]
        i = o = 0
        while i < len(inner) or o < len(outer):
            take_outer = i == len(inner) or (o < len(outer) and outer_angle[o + 1] <= inner_angle[i + 1])
            if take_outer:
                faces.append([inner[i % len(inner)], outer[o], outer[(o + 1) % len(outer)]])
                o += 1
            else:
                faces.append([inner[i], outer[o % len(outer)], inner[(i + 1) % len(inner)]])
                i += 1
    return np.concatenate(points), np.array(faces)


def disk(rings: int = 10, radius: float = 1.0) -> TriangleMesh:
    """
    Flat disk of concentric rings, ring ``k`` holding ``6 k`` vertices.
    ``1 + 3 rings (rings + 1)`` vertices; the outer ring is the boundary.
    """
    uv, faces = _disk_layout(rings)
    V = np.c_[radius * uv, np.zeros(len(uv))]
    return TriangleMesh(V, faces)


def enneper(rings: int = 10, radius: float = 1.5) -> TriangleMesh:
    """
    Enneper minimal surface over the parameter disk of the given radius.

    Uses exactly the triangulation of :func:`disk`, so vertex ``i`` of
    ``disk(rings)`` corresponds to vertex ``i`` of ``enneper(rings)``.
    The surface is embedded for ``radius < sqrt(3)``.
    """
    uv, faces = _disk_layout(rings)
    u, v = radius * uv[:, 0], radius * uv[:, 1]
    V = np.stack([
        u - u ** 3 / 3.0 + u * v ** 2,
        v - v ** 3 / 3.0 + v * u ** 2,
        u ** 2 - v ** 2,
    ], axis=1)
    return TriangleMesh(V, faces)


def scaled(mesh: TriangleMesh, factor: float) -> TriangleMesh:
    return mesh.with_vertices(factor * mesh.vertices)


def transformed(mesh: TriangleMesh, rotation: np.ndarray, translation=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Apply ``x -> rotation @ x + translation`` to every vertex."""
    return mesh.with_vertices(mesh.vertices @ np.asarray(rotation).T + np.asarray(translation))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
