"""Command line front end: ``medial <subcommand> ...``.

Exit status is 0 on success, 2 on usage errors and the ``exit_code`` of the
raised error class otherwise.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import correspond as corr
from .config import PipelineConfig, load_config
from .errors import FileError, MedialError
from .features import export_features, gsc
from .medial import extract_skeleton, load_skeleton, save_skeleton
from .pipeline import STAGES, run_pipeline
from .recon import miou, reconstruct
from .segment import (augment_features, cluster, load_feature_matrix, save_feature_matrix,
                      save_labels)
from .spectral import (build_graph, load_embedding, map_boundary_to_medial, save_embedding,
                       save_signature, solve_eigens, spectral_signature)
from .voxelio import load_grid, load_mesh, save_grid, voxelize


def _config(args, **overrides):
    base = load_config(args.config) if args.config else PipelineConfig()
    return base.updated(**overrides)


def _points(path):
    if path.lower().endswith((".off", ".obj", ".ply")):
        return load_mesh(path).vertices
    return np.loadtxt(path, ndmin=2)[:, :3]


def cmd_voxelize(args):
    cfg = _config(args, resolution=args.resolution)
    grid = voxelize(load_mesh(args.mesh), cfg.resolution)
    save_grid(grid, args.out)
    print(f"dims {grid.dims[0]} {grid.dims[1]} {grid.dims[2]} occupied {int(grid.occupancy.sum())}")


def cmd_extract(args):
    cfg = _config(args, tau=args.tau)
    skel, _, _ = extract_skeleton(load_grid(args.grid), cfg.tau)
    save_skeleton(skel, args.out)
    print(f"skeletal points {len(skel)}")


def cmd_reconstruct(args):
    rec = reconstruct(load_skeleton(args.skeleton))
    save_grid(rec.as_grid(), args.out)
    print(f"occupied {int(rec.occupancy.sum())}")


def cmd_miou(args):
    if args.mesh:
        cfg = _config(args, resolution=args.resolution, tau=args.tau)
        grid = voxelize(load_mesh(args.mesh), cfg.resolution)
        skel, _, _ = extract_skeleton(grid, cfg.tau)
        value = miou(grid, reconstruct(skel))
    elif args.a and args.b:
        value = miou(load_grid(args.a), load_grid(args.b))
    else:
        args.parser.error("give --mesh, or both --a and --b")
    print("%.6f" % value)


def cmd_spectral(args):
    cfg = _config(args, k=args.k, K=args.K, rho=args.rho)
    mesh = load_mesh(args.mesh)
    skel = load_skeleton(args.skeleton)
    bmap = map_boundary_to_medial(mesh, skel, reconstruct(skel))
    emb = solve_eigens(build_graph(mesh, bmap, cfg.K, cfg.eps, cfg.rho),
                       min(cfg.k, mesh.n_vertices - 1))
    save_embedding(emb, args.out)
    if args.signature:
        save_signature(spectral_signature(mesh, bmap, emb), args.signature)
    print("eigenvalues " + " ".join("%.6g" % v for v in emb.eigenvalues[:5]))


def cmd_correspond(args):
    cfg = _config(args, mode=args.mode, match_k=args.match_k)
    A, B = load_embedding(args.a), load_embedding(args.b)
    mk = min(cfg.match_k, A.k, B.k)
    A, B = A.select(np.arange(mk)), B.select(np.arange(mk))
    va = load_mesh(args.mesh_a).vertices if args.mesh_a else None
    vb = load_mesh(args.mesh_b).vertices if args.mesh_b else None
    al = corr.align_spectra(A, B, va, vb, weights=(cfg.alpha, cfg.beta, cfg.gamma))
    A, B = corr.apply_alignment(A, B, al)
    cmap = corr.match_points(A, B, cfg.mode, va, vb, lam=cfg.drift_lambda,
                             iters=cfg.drift_iters)
    corr.save_map(cmap, args.out)
    if args.gt:
        if vb is None:
            args.parser.error("--gt needs --mesh-b")
        gt = corr.load_map(args.gt).target
        th, frac, _ = corr.eval_correspondence(cmap, gt, load_mesh(args.mesh_b))
        if args.curve:
            corr.save_curve(th, frac, args.curve)
        print("within 5%% of diameter: %.4f" % frac[5])


def cmd_augment(args):
    cfg = _config(args, seg_k=args.k)
    mesh = load_mesh(args.mesh)
    skel = load_skeleton(args.skeleton)
    bmap = map_boundary_to_medial(mesh, skel, reconstruct(skel))
    emb = load_embedding(args.emb) if args.emb else None
    k = min(cfg.seg_k, emb.k) if emb is not None else 0
    weighting = cfg.seg_weighting if args.weighting is None else args.weighting == "on"
    save_feature_matrix(augment_features(mesh, bmap, emb, k, weighting), args.out)


def cmd_segment(args):
    cfg = _config(args, seg_parts=args.parts, seg_subspaces=args.subspaces, seg_seed=args.seed)
    labels = cluster(load_feature_matrix(args.features), cfg.seg_parts, cfg.seg_subspaces,
                     cfg.seg_seed)
    save_labels(labels, args.out)
    print("part sizes " + " ".join(str(c) for c in np.bincount(labels)))


def cmd_gsc(args):
    cfg = _config(args, gsc_k=args.k)
    f = gsc(_points(args.points), load_embedding(args.emb), cfg.gsc_k)
    export_features(f, args.out, args.label)


def cmd_run(args):
    cfg = _config(args)
    man = run_pipeline(cfg, args.mesh, args.out, args.stage, args.mesh_b, args.manifest)
    for name in STAGES:
        rec = man["stages"].get(name)
        if rec:
            print(f"{name:12s} {rec['status']}")


def build_parser():
    p = argparse.ArgumentParser(prog="medial", description="Medial spectral shape pipeline.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="key = value configuration file")
        s.set_defaults(func=func, parser=s)
        return s

    s = add("voxelize", cmd_voxelize, "solid voxelization of a watertight mesh")
    s.add_argument("--mesh", required=True)
    s.add_argument("--resolution", type=int)
    s.add_argument("--out", required=True)

    s = add("extract", cmd_extract, "medial voxels of a grid")
    s.add_argument("--grid", required=True)
    s.add_argument("--tau", type=float)
    s.add_argument("--out", required=True)

    s = add("reconstruct", cmd_reconstruct, "union of skeletal balls")
    s.add_argument("--skeleton", required=True)
    s.add_argument("--out", required=True)

    s = add("miou", cmd_miou, "round-trip or pairwise intersection over union")
    s.add_argument("--mesh")
    s.add_argument("--resolution", type=int)
    s.add_argument("--tau", type=float)
    s.add_argument("--a")
    s.add_argument("--b")

    s = add("spectral", cmd_spectral, "medially weighted spectral embedding")
    s.add_argument("--mesh", required=True)
    s.add_argument("--skeleton", required=True)
    s.add_argument("--k", type=int)
    s.add_argument("--K", type=int)
    s.add_argument("--rho", choices=("radius", "volume"))
    s.add_argument("--signature", help="also write the signature table")
    s.add_argument("--out", required=True)

    s = add("correspond", cmd_correspond, "dense correspondence between two embeddings")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.add_argument("--mode", choices=corr.MODES)
    s.add_argument("--match-k", type=int, dest="match_k")
    s.add_argument("--mesh-a", dest="mesh_a")
    s.add_argument("--mesh-b", dest="mesh_b")
    s.add_argument("--gt", help="ground-truth map for the accuracy curve")
    s.add_argument("--curve")
    s.add_argument("--out", required=True)

    s = add("augment", cmd_augment, "segmentation feature matrix")
    s.add_argument("--mesh", required=True)
    s.add_argument("--skeleton", required=True)
    s.add_argument("--emb")
    s.add_argument("--k", type=int)
    s.add_argument("--weighting", choices=("on", "off"))
    s.add_argument("--out", required=True)

    s = add("segment", cmd_segment, "spectral clustering into parts")
    s.add_argument("--features", required=True)
    s.add_argument("--parts", type=int)
    s.add_argument("--subspaces", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)

    s = add("gsc", cmd_gsc, "9-column neighbor features")
    s.add_argument("--points", required=True, help="mesh file or xyz table")
    s.add_argument("--emb", required=True)
    s.add_argument("--k", type=int)
    s.add_argument("--label", type=int)
    s.add_argument("--out", required=True)

    s = add("run", cmd_run, "staged pipeline with caching and a manifest")
    s.add_argument("--mesh", required=True)
    s.add_argument("--mesh-b", dest="mesh_b")
    s.add_argument("--stage", default="all", choices=STAGES + ("all",))
    s.add_argument("--out", required=True)
    s.add_argument("--manifest")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except MedialError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FileError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
