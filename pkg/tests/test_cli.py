#!/usr/bin/env python
# -*- coding: utf-8 -*-

import json

import numpy as np
import pandas as pd
import pytest

from revharm.cli import EXIT_INPUT, EXIT_OK, main
from revharm.initialization import FunctionalMap, LandmarkSet, save_functional_map, save_landmarks
from revharm.maps import apply_map, load_map, project_onto_mesh, save_map
from revharm.mesh import TriangleMesh, load_mesh, save_mesh
from revharm.shapes import grid, icosphere

FAST = ["--metric", "euclidean", "--dim", "3", "--iters", "3", "--geodesic-method", "dijkstra",
        "--trace-geodesic-every", "0", "-q"]


@pytest.fixture
def pair(tmp_path):
    source, target = icosphere(1), icosphere(2)
    save_mesh(tmp_path / "source.obj", source)
    save_mesh(tmp_path / "target.obj", target)
    return str(tmp_path / "source.obj"), str(tmp_path / "target.obj")


def test_map_with_default_initialization(tmp_path, pair):
    out = str(tmp_path / "run")
    assert main(["map", *pair, *FAST, "--out", out]) == EXIT_OK

    source, target = load_mesh(pair[0]), load_mesh(pair[1])
    P12 = load_map(f"{out}.P12.map", target, n_source=source.n_vertices)
    P21 = load_map(f"{out}.P21.map", source, n_source=target.n_vertices)
    assert len(P12) == source.n_vertices
    assert len(P21) == target.n_vertices

    trace = pd.read_csv(f"{out}.trace.csv")
    assert list(trace.columns[:3]) == ["iteration", "E_total", "E_D12"]
    assert trace["iteration"].iloc[0] == 0

    manifest = json.loads((tmp_path / "run.manifest.json").read_text())
    assert manifest["config"]["alpha"] == 5e-4
    assert manifest["config"]["metric"] == "euclidean"
    assert manifest["reason"] in ("converged", "max_iter")
    assert manifest["iterations"] == len(trace) - 1
    assert set(manifest["timings"]) == {"prepare", "initialize", "solve"}


def test_map_with_landmarks(tmp_path, pair):
    save_landmarks(tmp_path / "lm.txt", LandmarkSet([0, 5, 11], [0, 5, 11]))
    out = str(tmp_path / "lm")
    argv = ["map", *pair, *FAST, "--landmarks", str(tmp_path / "lm.txt"), "--weak-landmarks", "--gamma", "1",
            "--out", out, "--trace", str(tmp_path / "lm-trace.csv")]
    assert main(argv) == EXIT_OK
    trace = pd.read_csv(tmp_path / "lm-trace.csv")
    assert (trace["E_L12"] >= 0).all()


def test_identity_landmarks_finish_immediately(tmp_path, pair):
    mesh = load_mesh(pair[0])
    ids = np.arange(mesh.n_vertices)
    save_landmarks(tmp_path / "all.txt", LandmarkSet(ids, ids))
    out = str(tmp_path / "same")
    argv = ["map", pair[0], pair[0], "--metric", "euclidean", "--dim", "3", "--geodesic-method", "dijkstra",
            "--landmarks", str(tmp_path / "all.txt"), "--out", out, "-q"]
    assert main(argv) == EXIT_OK

    manifest = json.loads((tmp_path / "same.manifest.json").read_text())
    assert manifest["reason"] == "converged"
    assert manifest["iterations"] <= 2
    P12 = load_map(f"{out}.P12.map", mesh, n_source=mesh.n_vertices)
    np.testing.assert_allclose(apply_map(P12, mesh.vertices), mesh.vertices, atol=1e-9)


def test_map_with_initial_map(tmp_path, pair):
    source, target = load_mesh(pair[0]), load_mesh(pair[1])
    save_map(tmp_path / "init.map", project_onto_mesh(source.vertices, target))
    assert main(["map", *pair, *FAST, "--init-map", str(tmp_path / "init.map"),
                 "--out", str(tmp_path / "init")]) == EXIT_OK


def test_map_with_functional_map(tmp_path, pair):
    save_functional_map(tmp_path / "c.fmap", FunctionalMap.identity(6))
    argv = ["map", *pair, *FAST, "--fmap", str(tmp_path / "c.fmap"), "--out", str(tmp_path / "fm")]
    assert main([*argv, "--basis-k", "6"]) == EXIT_OK
    assert main([*argv, "--basis-k", "8"]) == EXIT_INPUT


def test_map_input_errors(tmp_path, pair, capsys):
    assert main(["map", pair[0], str(tmp_path / "missing.obj"), *FAST]) == EXIT_INPUT
    assert main(["map", *pair, *FAST, "--weak-landmarks"]) == EXIT_INPUT

    (tmp_path / "quad.obj").write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    assert main(["map", str(tmp_path / "quad.obj"), pair[1], *FAST]) == EXIT_INPUT
    assert "revharm:" in capsys.readouterr().err

    with pytest.raises(SystemExit):
        main(["map", *pair, "--landmarks", "a", "--fmap", "b"])
    with pytest.raises(SystemExit):
        main(["map", *pair, "--alpha", "x"])


def test_eval(tmp_path, pair, capsys):
    source, target = load_mesh(pair[0]), load_mesh(pair[1])
    save_map(tmp_path / "p.map", project_onto_mesh(source.vertices, target))
    out = str(tmp_path / "ev")
    argv = ["eval", *pair, str(tmp_path / "p.map"), "--gt", str(tmp_path / "p.map"), "--out", out,
            "--geodesic-method", "dijkstra"]
    assert main(argv) == EXIT_OK
    printed = capsys.readouterr().out
    assert "conformal distortion" in printed
    assert "ground truth error: median 0" in printed

    curve = pd.read_csv(f"{out}.conformal.csv")
    assert np.isinf(curve["threshold"].iloc[-1])
    assert curve["fraction"].iloc[-1] == pytest.approx(1.0)
    assert (tmp_path / "ev.gt.csv").exists()


def test_transfer(tmp_path):
    square = grid(4, 4)
    textured = TriangleMesh(square.vertices, square.faces, uv=square.vertices[:, :2], face_uv=square.faces)
    save_mesh(tmp_path / "source.obj", grid(3, 3))
    save_mesh(tmp_path / "target.obj", textured)
    save_map(tmp_path / "p.map", project_onto_mesh(grid(3, 3).vertices, textured))
    common = [str(tmp_path / "source.obj"), str(tmp_path / "target.obj"), str(tmp_path / "p.map")]

    assert main(["transfer", *common, "--texture", "--output", str(tmp_path / "tex.obj")]) == EXIT_OK
    result = load_mesh(tmp_path / "tex.obj")
    np.testing.assert_allclose(result.uv, grid(3, 3).vertices[:, :2], atol=1e-12)

    assert main(["transfer", *common, "--connectivity", "--output", str(tmp_path / "remesh.obj")]) == EXIT_OK
    assert load_mesh(tmp_path / "remesh.obj").n_faces == grid(3, 3).n_faces

    # the source has no texture to pull back
    swapped = [common[1], common[0], str(tmp_path / "back.map")]
    save_map(tmp_path / "back.map", project_onto_mesh(square.vertices, grid(3, 3)))
    assert main(["transfer", *swapped, "--texture", "--output", str(tmp_path / "none.obj")]) == EXIT_INPUT
