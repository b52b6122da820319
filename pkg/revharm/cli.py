# SPDX-License-Identifier: MIT
# Copyright (C) 2026 The revharm authors

"""
Command line interface: ``revharm map``, ``revharm eval`` and
``revharm transfer``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

import revharm
from revharm.embedding import DEFAULT_DIM
from revharm.errors import MapError, MeshError, NumericalError, RevharmError
from revharm.geodesics import METHODS
from revharm.initialization import (DEFAULT_BASIS_SIZE, init_from_functional_map, init_from_landmarks,
                                    init_from_pointwise, load_functional_map, load_landmarks, lb_basis)
from revharm.maps import load_map, project_onto_mesh, save_map
from revharm.mesh import load_mesh, save_mesh
from revharm.metrics import (conformal_distortion, ground_truth_error, load_labels, segmentation_compatibility,
                             symmetry_compatibility)
from revharm.projection import set_num_threads
from revharm.shape import METRICS, prepare_shape
from revharm.solver import STOP_RULES, MapProblem, SolverConfig, add_weak_landmarks, run, write_trace
from revharm.transfer import transfer_connectivity, transfer_texture

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


@dataclass
class RunManifest:
    """Everything needed to repeat a run, written next to its outputs."""

    command: List[str]
    version: str
    inputs: Dict[str, Optional[str]]
    config: Dict[str, object]
    seed: int
    outputs: Dict[str, str] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    reason: Optional[str] = None
    iterations: Optional[int] = None

    def write(self, path: str) -> None:
        with open(path, "wt", encoding="utf8") as file:
            json.dump(asdict(self), file, indent=2)
            file.write("\n")


def _config_from_args(args) -> SolverConfig:
    return SolverConfig(alpha=args.alpha, beta_slope=args.beta_slope, beta_cap_iter=args.beta_cap_iter,
                        gamma=args.gamma, max_iter=args.iters, tol=args.tol, stop=args.stop, dim=args.dim,
                        geodesic_every=args.trace_geodesic_every)


def cmd_map(args) -> int:
    config = _config_from_args(args)
    manifest = RunManifest(
        command=list(args.argv), version=revharm.__version__,
        inputs={"source": args.source, "target": args.target, "landmarks": args.landmarks,
                "init_map": args.init_map, "fmap": args.fmap},
        config={**asdict(config), "metric": args.metric, "geodesic_method": args.geodesic_method,
                "basis_k": args.basis_k, "weak_landmarks": args.weak_landmarks},
        seed=args.seed)

    clock = time.perf_counter()
    mesh1, mesh2 = load_mesh(args.source), load_mesh(args.target)
    shapes = [prepare_shape(mesh, dim=config.dim, metric=args.metric, geodesic_method=args.geodesic_method,
                            cache_dir=args.cache_embedding, seed=args.seed)
              for mesh in (mesh1, mesh2)]
    manifest.timings["prepare"] = time.perf_counter() - clock

    clock = time.perf_counter()
    landmarks = None
    if args.landmarks is not None:
        landmarks = load_landmarks(args.landmarks)
        init = init_from_landmarks(landmarks, *shapes)
    elif args.init_map is not None:
        init = init_from_pointwise(load_map(args.init_map, mesh2, n_source=mesh1.n_vertices), *shapes)
    elif args.fmap is not None:
        fmap = load_functional_map(args.fmap)
        if (fmap.k1, fmap.k2) != (args.basis_k, args.basis_k):
            raise MapError(f"functional map is {fmap.k1}x{fmap.k2}, --basis-k is {args.basis_k}")
        bases = [lb_basis(s.mesh, s.operators, args.basis_k) for s in shapes]
        init = init_from_functional_map(fmap, *shapes, *bases)
    else:
        init = init_from_pointwise(project_onto_mesh(mesh1.vertices, mesh2), *shapes)
    manifest.timings["initialize"] = time.perf_counter() - clock

    problem = MapProblem(*shapes, config=config)
    if args.weak_landmarks:
        if landmarks is None:
            raise ValueError("--weak-landmarks needs --landmarks")
        problem = add_weak_landmarks(problem, landmarks, config.gamma)

    clock = time.perf_counter()
    result = run(problem, init)
    manifest.timings["solve"] = time.perf_counter() - clock
    manifest.reason = result.reason
    manifest.iterations = result.iterations

    outputs = {"P12": f"{args.out}.P12.map", "P21": f"{args.out}.P21.map",
               "trace": args.trace or f"{args.out}.trace.csv", "manifest": f"{args.out}.manifest.json"}
    save_map(outputs["P12"], result.P12)
    save_map(outputs["P21"], result.P21)
    write_trace(outputs["trace"], result.trace)
    manifest.outputs = outputs
    manifest.write(outputs["manifest"])
    logger.info("wrote %s", ", ".join(outputs.values()))
    return EXIT_OK


def cmd_eval(args) -> int:
    mesh1, mesh2 = load_mesh(args.source), load_mesh(args.target)
    P12 = load_map(args.map, mesh2, n_source=mesh1.n_vertices)
    needs_shapes = args.gt or args.symmetry or args.segmentation
    shape1 = shape2 = None
    if needs_shapes:
        shape1, shape2 = (prepare_shape(mesh, dim=3, metric="euclidean", geodesic_method=args.geodesic_method)
                          for mesh in (mesh1, mesh2))

    values, curve = conformal_distortion(P12, mesh1, mesh2, area_weighted=args.area_weighted)
    curve.to_csv(f"{args.out}.conformal.csv")
    print(f"conformal distortion: median {np.median(values):.6g}")

    if args.gt:
        gt = load_map(args.gt, mesh2, n_source=mesh1.n_vertices)
        errors, curve = ground_truth_error(P12, gt, shape2)
        curve.to_csv(f"{args.out}.gt.csv")
        print(f"ground truth error: median {np.nanmedian(errors):.6g}")
    if args.symmetry:
        S1 = load_map(args.symmetry[0], mesh1, n_source=mesh1.n_vertices)
        S2 = load_map(args.symmetry[1], mesh2, n_source=mesh2.n_vertices)
        values, curve = symmetry_compatibility(P12, S1, S2, shape1, shape2)
        curve.to_csv(f"{args.out}.symmetry.csv")
        print(f"symmetry compatibility: median {np.median(values):.6g}")
    if args.segmentation:
        fraction = segmentation_compatibility(P12, load_labels(args.segmentation[0]),
                                              load_labels(args.segmentation[1]), shape1, mesh2)
        print(f"segmentation compatibility: {fraction:.6g}")
    return EXIT_OK


def cmd_transfer(args) -> int:
    mesh1, mesh2 = load_mesh(args.source), load_mesh(args.target)
    P12 = load_map(args.map, mesh2, n_source=mesh1.n_vertices)
    if args.texture:
        result = transfer_texture(P12, mesh1, mesh2)
    else:
        result, report = transfer_connectivity(P12, mesh1, mesh2)
        if report.capped:
            print(f"warning: {len(report.remaining)} faces are still degenerate", file=sys.stderr)
    save_mesh(args.output, result)
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("source", help="source mesh (OBJ)")
    parser.add_argument("target", help="target mesh (OBJ)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log debug messages")
    parser.add_argument("-q", "--quiet", action="store_true", help="log warnings and errors only")
    parser.add_argument("--threads", type=int, default=None, help="threads of the projection kernels")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="revharm", description="Reversible harmonic maps between triangle meshes.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {revharm.__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("map", help="compute a pair of maps")
    _add_common(p)
    init = p.add_mutually_exclusive_group()
    init.add_argument("--landmarks", help="landmark file, lines 'p q' of 1-based vertex ids")
    init.add_argument("--init-map", help="initial map file from source to target")
    init.add_argument("--fmap", help="functional map file (C12 then C21)")
    defaults = SolverConfig()
    p.add_argument("--alpha", type=float, default=defaults.alpha)
    p.add_argument("--beta-slope", type=float, default=defaults.beta_slope)
    p.add_argument("--beta-cap-iter", type=int, default=defaults.beta_cap_iter)
    p.add_argument("--gamma", type=float, default=defaults.gamma, help="weight of weak landmark constraints")
    p.add_argument("--weak-landmarks", action="store_true", help="keep the landmarks as weak constraints")
    p.add_argument("--iters", type=int, default=defaults.max_iter)
    p.add_argument("--tol", type=float, default=defaults.tol)
    p.add_argument("--stop", choices=STOP_RULES, default=defaults.stop)
    p.add_argument("--dim", type=int, default=DEFAULT_DIM, help="embedding dimension")
    p.add_argument("--basis-k", type=int, default=DEFAULT_BASIS_SIZE, help="functional map basis size")
    p.add_argument("--metric", choices=METRICS, default="geodesic")
    p.add_argument("--geodesic-method", choices=METHODS, default="heat")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", default=None, help="trace CSV path, '<out>.trace.csv' by default")
    p.add_argument("--trace-geodesic-every", type=int, default=defaults.geodesic_every)
    p.add_argument("--cache-embedding", default=None, metavar="DIR", help="directory of cached embeddings")
    p.add_argument("--out", default="revharm", help="output prefix")
    p.set_defaults(func=cmd_map)

    p = commands.add_parser("eval", help="quality metrics of a map")
    _add_common(p)
    p.add_argument("map", help="map file from source to target")
    p.add_argument("--gt", help="ground truth map file")
    p.add_argument("--symmetry", nargs=2, metavar=("S1", "S2"), help="symmetry map files of both meshes")
    p.add_argument("--segmentation", nargs=2, metavar=("SEG1", "SEG2"), help="label files")
    p.add_argument("--area-weighted", action="store_true", help="weigh conformal distortion by face area")
    p.add_argument("--geodesic-method", choices=METHODS, default="heat")
    p.add_argument("--out", default="revharm", help="output prefix")
    p.set_defaults(func=cmd_eval)

    p = commands.add_parser("transfer", help="texture or connectivity transfer")
    _add_common(p)
    p.add_argument("map", help="map file from source to target")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--texture", action="store_true", help="pull the target texture coordinates to the source")
    mode.add_argument("--connectivity", action="store_true", help="remesh the target with the source faces")
    p.add_argument("--output", required=True, help="output OBJ")
    p.set_defaults(func=cmd_transfer)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    args.argv = argv

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s: %(message)s")
    if args.threads:
        set_num_threads(args.threads)

    try:
        return args.func(args)
    except NumericalError as err:
        print(f"revharm: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (RevharmError, MeshError, MapError, ValueError, OSError) as err:
        print(f"revharm: {err}", file=sys.stderr)
        return EXIT_INPUT
