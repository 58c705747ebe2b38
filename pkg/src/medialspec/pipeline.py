"""Staged end-to-end runs with content-hash caching and a run manifest."""

from __future__ import annotations

import hashlib
import json
import os
import platform
import time
from importlib import metadata

import numpy as np

from .config import PipelineConfig
from .correspond import align_spectra, apply_alignment, match_points, save_map
from .errors import DependencyError, FileError, MedialError
from .features import export_features, gsc
from .medial import extract_skeleton, load_skeleton, save_skeleton
from .recon import miou, reconstruct
from .segment import augment_features, cluster, save_labels
from .spectral import (build_graph, load_embedding, map_boundary_to_medial, save_embedding,
                       solve_eigens)
from .voxelio import load_grid, load_mesh, save_grid, voxelize

STAGES = ("voxelize", "skeleton", "reconstruct", "spectral", "correspond", "segment", "gsc")
UPSTREAM = {
    "voxelize": (),
    "skeleton": ("voxelize",),
    "reconstruct": ("skeleton",),
    "spectral": ("reconstruct",),
    "correspond": ("spectral",),
    "segment": ("spectral",),
    "gsc": ("spectral",),
}
CONFIG_KEYS = {
    "voxelize": ("resolution",),
    "skeleton": ("tau",),
    "reconstruct": (),
    "spectral": ("K", "k", "eps", "rho"),
    "correspond": ("mode", "match_k", "alpha", "beta", "gamma", "drift_iters", "drift_lambda"),
    "segment": ("seg_parts", "seg_subspaces", "seg_seed", "seg_k", "seg_weighting"),
    "gsc": ("gsc_k",),
}
PER_SHAPE = ("voxelize", "skeleton", "reconstruct", "spectral")
ARTIFACTS = {
    "voxelize": "grid.vox",
    "skeleton": "skeleton.txt",
    "reconstruct": "recon.vox",
    "spectral": "embedding.txt",
    "correspond": "map.txt",
    "segment": "labels.txt",
    "gsc": "features.txt",
}


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "numba", "scikit-image"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def stage_keys(config: PipelineConfig, input_hashes):
    """Cache key per stage: upstream keys, inputs and the relevant config subset."""
    keys = {}
    for stage in STAGES:
        payload = {
            "stage": stage,
            "config": config.subset(CONFIG_KEYS[stage]),
            "upstream": [keys[u] for u in UPSTREAM[stage]],
            "inputs": input_hashes if stage == "voxelize" else None,
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        keys[stage] = hashlib.sha256(blob).hexdigest()
    return keys


def _artifact_names(stage, shapes):
    if stage in PER_SHAPE:
        return [prefix + ARTIFACTS[stage] for prefix in shapes]
    return [ARTIFACTS[stage]]


class _Run:
    """Working state of one pipeline run; shapes are keyed by file prefix."""

    def __init__(self, config, meshes, outdir):
        self.config = config
        self.outdir = outdir
        self.meshes = meshes
        self.cache = {}

    def path(self, name):
        return os.path.join(self.outdir, name)

    def mesh(self, prefix):
        if ("mesh", prefix) not in self.cache:
            self.cache[("mesh", prefix)] = load_mesh(self.meshes[prefix])
        return self.cache[("mesh", prefix)]

    def get(self, kind, prefix):
        key = (kind, prefix)
        if key not in self.cache:
            if kind == "reconstruct":
                # cheaper to redo than to reload, and carries the generator map
                self.cache[key] = reconstruct(self.get("skeleton", prefix))
            else:
                loader = {"voxelize": load_grid, "skeleton": load_skeleton,
                          "spectral": load_embedding}[kind]
                self.cache[key] = loader(self.path(prefix + ARTIFACTS[kind]))
        return self.cache[key]

    def bmap(self, prefix):
        if ("bmap", prefix) not in self.cache:
            self.cache[("bmap", prefix)] = map_boundary_to_medial(
                self.mesh(prefix), self.get("skeleton", prefix), self.get("reconstruct", prefix))
        return self.cache[("bmap", prefix)]

    # stage bodies return a metrics dict

    def voxelize(self, prefix):
        grid = voxelize(self.mesh(prefix), self.config.resolution)
        self.cache[("voxelize", prefix)] = grid
        save_grid(grid, self.path(prefix + ARTIFACTS["voxelize"]))
        return {"dims": list(grid.dims), "occupied": int(grid.occupancy.sum())}

    def skeleton(self, prefix):
        skel, _, _ = extract_skeleton(self.get("voxelize", prefix), self.config.tau)
        self.cache[("skeleton", prefix)] = skel
        save_skeleton(skel, self.path(prefix + ARTIFACTS["skeleton"]))
        return {"points": len(skel)}

    def reconstruct(self, prefix):
        rec = reconstruct(self.get("skeleton", prefix))
        self.cache[("reconstruct", prefix)] = rec
        save_grid(rec.as_grid(), self.path(prefix + ARTIFACTS["reconstruct"]))
        return {"miou": miou(self.get("voxelize", prefix), rec)}

    def spectral(self, prefix):
        mesh = self.mesh(prefix)
        k = min(self.config.k, mesh.n_vertices - 1)
        graph = build_graph(mesh, self.bmap(prefix), self.config.K, self.config.eps,
                            self.config.rho)
        emb = solve_eigens(graph, k)
        self.cache[("spectral", prefix)] = emb
        save_embedding(emb, self.path(prefix + ARTIFACTS["spectral"]))
        return {"k": k, "eigenvalues": [float(v) for v in emb.eigenvalues[:5]]}

    def correspond(self):
        c = self.config
        b = "b_" if "b_" in self.meshes else ""
        embA, embB = self.get("spectral", ""), self.get("spectral", b)
        mk = min(c.match_k, embA.k, embB.k)
        embA, embB = embA.select(np.arange(mk)), embB.select(np.arange(mk))
        va, vb = self.mesh("").vertices, self.mesh(b).vertices
        al = align_spectra(embA, embB, va, vb, weights=(c.alpha, c.beta, c.gamma))
        A, B = apply_alignment(embA, embB, al)
        cmap = match_points(A, B, c.mode, va, vb, lam=c.drift_lambda, iters=c.drift_iters)
        save_map(cmap, self.path(ARTIFACTS["correspond"]))
        return {"match_k": mk, "permutation": [int(p) for p in al.perm],
                "signs": [int(s) for s in al.signs]}

    def segment(self):
        c = self.config
        emb = self.get("spectral", "")
        mesh = self.mesh("")
        F = augment_features(mesh, self.bmap(""), emb, k=min(c.seg_k, emb.k),
                             eigen_weighting=c.seg_weighting)
        parts = min(c.seg_parts, mesh.n_vertices)
        labels = cluster(F, parts, c.seg_subspaces, c.seg_seed)
        save_labels(labels, self.path(ARTIFACTS["segment"]))
        return {"parts": parts, "columns": F.names}

    def gsc(self):
        mesh = self.mesh("")
        k = min(self.config.gsc_k, mesh.n_vertices - 1)
        f = gsc(mesh.vertices, self.get("spectral", ""), k)
        export_features(f, self.path(ARTIFACTS["gsc"]))
        return {"k": k}


def _load_manifest(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, ValueError):
        return None


def _write_manifest(manifest, path):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _fresh(record, key, outdir):
    if not record or record.get("key") != key or record.get("status") not in ("ran", "skipped"):
        return False
    for name, digest in record.get("artifacts", {}).items():
        p = os.path.join(outdir, name)
        if not os.path.exists(p) or file_hash(p) != digest:
            return False
    return True


def run_pipeline(config: PipelineConfig, mesh, outdir, stage="all", mesh_b=None,
                 manifest_path=None):
    """Run ``stage`` (or every stage for ``all``) and write the manifest.

    Stages whose cache key and artifacts are unchanged since the previous
    run are marked skipped. A single stage needs fresh upstream artifacts in
    ``outdir``. Returns the manifest dict; failures are recorded in the
    manifest and re-raised.
    """
    config.validate()
    if stage != "all" and stage not in STAGES:
        raise DependencyError(f"unknown stage {stage!r}")
    os.makedirs(outdir, exist_ok=True)
    manifest_path = manifest_path or os.path.join(outdir, "manifest.json")
    meshes = {"": mesh}
    if mesh_b is not None:
        meshes["b_"] = mesh_b
    try:
        inputs = {p or "a": {"path": os.path.abspath(m), "sha256": file_hash(m)}
                  for p, m in meshes.items()}
    except OSError as exc:
        raise FileError(str(exc)) from None
    keys = stage_keys(config, {k: v["sha256"] for k, v in inputs.items()})
    previous = _load_manifest(manifest_path) or {}
    prev_stages = previous.get("stages", {})
    manifest = {
        "inputs": inputs,
        "config": config.to_dict(),
        "versions": _versions(),
        "stages": {},
        "error": None,
    }
    # records of stages not run now are carried over
    for name, rec in prev_stages.items():
        if rec.get("key") == keys.get(name):
            manifest["stages"][name] = dict(rec, status="skipped", seconds=0.0)
    wanted = list(STAGES) if stage == "all" else [stage]
    run = _Run(config, meshes, outdir)
    try:
        for name in wanted:
            if stage != "all":
                for up in UPSTREAM[name]:
                    if not _fresh(prev_stages.get(up), keys[up], outdir):
                        raise DependencyError(f"stage {name!r} needs an up-to-date {up!r} "
                                              f"artifact in {outdir}; run stage 'all' first")
            if _fresh(prev_stages.get(name), keys[name], outdir):
                manifest["stages"][name] = dict(prev_stages[name], status="skipped", seconds=0.0)
                continue
            t0 = time.perf_counter()
            if name in PER_SHAPE:
                metrics = {p or "a": getattr(run, name)(p) for p in meshes}
            else:
                metrics = getattr(run, name)()
            arts = {a: file_hash(run.path(a)) for a in _artifact_names(name, meshes)}
            manifest["stages"][name] = {"status": "ran", "key": keys[name], "artifacts": arts,
                                        "seconds": round(time.perf_counter() - t0, 3),
                                        "metrics": metrics}
    except Exception as exc:
        err = exc if isinstance(exc, MedialError) else \
            FileError(str(exc)) if isinstance(exc, OSError) else None
        manifest["error"] = {"stage": name, "type": type(err or exc).__name__,
                             "message": str(exc), "exit_code": err.exit_code if err else 1}
        manifest["stages"][name] = {"status": "failed", "key": keys[name]}
        _write_manifest(manifest, manifest_path)
        if err is not None and err is not exc:
            raise err from None
        raise
    _write_manifest(manifest, manifest_path)
    return manifest
