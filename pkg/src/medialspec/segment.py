"""Part segmentation by subspace-randomized spectral clustering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.cluster.vq import ClusterError, kmeans2
from scipy.sparse.linalg import eigsh
from scipy.spatial import cKDTree

from .errors import (ConvergenceError, DataError, DomainError, EmptyInputError, FormatError,
                     ShapeError)

N_NEIGHBORS = 15
N_INIT = 10
GEOMETRY_COLUMNS = ("x", "y", "z", "r")


@dataclass
class FeatureMatrix:
    """Standardized per-vertex features.

    ``values`` columns have mean 0 and variance 1; ``mean`` and ``std`` undo
    the standardization. ``weights`` scale columns inside the clusterer only,
    so the stored matrix keeps unit variances.
    """

    values: np.ndarray
    names: list
    mean: np.ndarray
    std: np.ndarray
    weights: np.ndarray

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]

    def weighted(self):
        return self.values * self.weights


def _standardize(X, names, weights):
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    scale = np.maximum(np.abs(mean), 1.0)
    # zero-variance columns carry no information and cannot be standardized
    keep = std > 1e-12 * scale
    X, mean, std = X[:, keep], mean[keep], std[keep]
    names = [nm for nm, k in zip(names, keep) if k]
    return FeatureMatrix((X - mean) / std, names, mean, std, np.asarray(weights, float)[keep])


def augment_features(mesh, bmap, emb=None, k=None, eigen_weighting=True) -> FeatureMatrix:
    """Columns ``[x, y, z, r, phi_1..phi_k]``, standardized.

    With ``eigen_weighting`` the spectral columns get clusterer weights
    ``sqrt(lambda_1 / lambda_i)`` so smooth modes dominate.
    """
    X = np.asarray(mesh.vertices, dtype=np.float64)
    r = np.asarray(bmap.radius, dtype=np.float64)
    if len(r) != len(X):
        raise ShapeError("map and mesh vertex counts differ")
    cols = [X, r[:, None]]
    names = list(GEOMETRY_COLUMNS)
    weights = [1.0] * 4
    if emb is not None:
        k = emb.k if k is None else int(k)
        if k < 0 or k > emb.k:
            raise DomainError(f"k must lie in [0, {emb.k}]")
        if emb.n != len(X):
            raise ShapeError("embedding and mesh vertex counts differ")
        phi = emb.vectors[:, :k]
        lam = emb.eigenvalues[:k]
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(lam))):
            raise DataError("embedding contains non-finite values")
        cols.append(phi)
        names += [f"phi{i + 1}" for i in range(k)]
        if eigen_weighting and k:
            weights += list(np.sqrt(lam[0] / lam))
        else:
            weights += [1.0] * k
    M = np.hstack(cols)
    if not np.all(np.isfinite(M)):
        raise DataError("features contain non-finite values")
    return _standardize(M, names, weights)


def _subspace_graph(Z, n_neighbors):
    n = len(Z)
    dist, idx = cKDTree(Z).query(Z, k=n_neighbors + 1)
    dist, idx = dist[:, 1:], idx[:, 1:]
    # per-point bandwidth: the median distance to its own neighbors
    h = np.median(dist, axis=1)
    pos = h > 0
    h[~pos] = np.median(h[pos]) if np.any(pos) else 1.0
    w = np.exp(-dist ** 2 / (h[:, None] * h[idx]))
    W = sp.coo_matrix((w.ravel(), (np.repeat(np.arange(n), n_neighbors), idx.ravel())),
                      shape=(n, n)).tocsr()
    return W.maximum(W.T)


def fused_similarity(features: FeatureMatrix, subspaces=8, seed=0, n_neighbors=N_NEIGHBORS):
    """Average of kNN Gaussian graphs over random halves of the columns."""
    Z = features.weighted()
    n, d = Z.shape
    nn = min(n_neighbors, n - 1)
    rng = np.random.default_rng(seed)
    size = int(np.ceil(d / 2))
    W = sp.csr_matrix((n, n))
    for _ in range(subspaces):
        cols = np.sort(rng.choice(d, size=size, replace=False))
        W = W + _subspace_graph(Z[:, cols], nn)
    return W / subspaces


def _kmeans(U, k, seed, n_init=N_INIT):
    best, best_cost = None, np.inf
    rng = np.random.default_rng(seed)
    for _ in range(n_init):
        try:
            cent, lab = kmeans2(U, k, minit="++", missing="raise", rng=rng)
        except ClusterError:
            continue
        cost = float(np.sum((U - cent[lab]) ** 2))
        if cost < best_cost - 1e-12:
            best, best_cost = lab, cost
    if best is None:
        raise ConvergenceError("k-means left a cluster empty in every restart")
    return best


def canonical_labels(labels):
    """Relabel so classes are numbered by first appearance."""
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(first))
    return rank[inv.ravel()]


def cluster(features: FeatureMatrix, k_parts=4, subspaces=8, seed=0,
            n_neighbors=N_NEIGHBORS) -> np.ndarray:
    """Spectral clustering on the fused similarity graph.

    Returns one label in ``0..k_parts-1`` per row, numbered by first
    appearance.
    """
    if k_parts < 2:
        raise DomainError("k_parts must be at least 2")
    if subspaces < 1:
        raise DomainError("subspaces must be at least 1")
    n = features.n
    if k_parts > n:
        raise DomainError(f"k_parts={k_parts} exceeds {n} points")
    if features.d == 0:
        raise DataError("feature matrix has no informative column")
    W = fused_similarity(features, subspaces, seed, n_neighbors)
    deg = np.asarray(W.sum(axis=1)).ravel()
    dinv = 1.0 / np.sqrt(np.maximum(deg, 1e-300))
    S = sp.diags(dinv) @ W @ sp.diags(dinv)
    if k_parts + 1 >= n or n <= 200:
        _, U = np.linalg.eigh(S.toarray())
        U = U[:, -k_parts:]
    else:
        # a wide Krylov basis copes with the cluster of eigenvalues near 1
        v0 = np.full(n, 1.0 / np.sqrt(n))
        ncv = min(n, max(2 * k_parts + 1, 40))
        _, U = eigsh(S, k=k_parts, which="LA", ncv=ncv, v0=v0, tol=1e-10, maxiter=100 * n)
    # rows onto the unit sphere before k-means
    U = U / np.maximum(np.linalg.norm(U, axis=1, keepdims=True), 1e-300)
    return canonical_labels(_kmeans(U, k_parts, seed))


def cosegment(feature_list, k_parts=4, subspaces=8, seed=0):
    """Cluster several shapes jointly; returns one label array per shape."""
    names = feature_list[0].names
    if any(f.names != names for f in feature_list):
        raise ShapeError("feature matrices have different columns")
    joint = FeatureMatrix(np.vstack([f.values for f in feature_list]), names,
                          feature_list[0].mean, feature_list[0].std, feature_list[0].weights)
    labels = cluster(joint, k_parts, subspaces, seed)
    cuts = np.cumsum([f.n for f in feature_list])[:-1]
    return np.split(labels, cuts)


def _pairs(c):
    c = np.asarray(c, dtype=np.int64)
    return int(np.sum(c * (c - 1) // 2))


def rand_index_error(labels, gt) -> float:
    """One minus the fraction of vertex pairs on which the partitions agree."""
    a = np.asarray(labels).ravel()
    b = np.asarray(gt).ravel()
    if a.shape != b.shape:
        raise ShapeError("label arrays differ in length")
    n = len(a)
    total = n * (n - 1) // 2
    if total == 0:
        return 0.0
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    ia, ib = ia.ravel(), ib.ravel()
    table = np.bincount(ia * (ib.max() + 1) + ib, minlength=(ia.max() + 1) * (ib.max() + 1))
    same_both = _pairs(table)
    same_a = _pairs(np.bincount(ia))
    same_b = _pairs(np.bincount(ib))
    # pairs split by exactly one partition; dividing this avoids 1 - x cancellation
    disagree = same_a + same_b - 2 * same_both
    return disagree / total


def save_labels(labels, path):
    with open(path, "w", encoding="utf-8") as fh:
        for v in np.asarray(labels, dtype=np.int64):
            fh.write("%d\n" % v)
    return path


def load_labels(path) -> np.ndarray:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise FormatError("expected one integer label", lineno) from None
    if not out:
        raise EmptyInputError(f"{path}: no labels")
    return np.array(out, dtype=np.int64)


def save_feature_matrix(f: FeatureMatrix, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("names %s\n" % " ".join(f.names))
        for key in ("mean", "std", "weights"):
            fh.write(key + " " + " ".join("%.17g" % v for v in getattr(f, key)) + "\n")
        fh.write("rows %d\n" % f.n)
        for row in f.values:
            fh.write(" ".join("%.17g" % v for v in row) + "\n")
    return path


def load_feature_matrix(path) -> FeatureMatrix:
    header, rows = {}, []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            tokens = raw.split()
            if not tokens:
                continue
            if tokens[0] in ("names", "mean", "std", "weights", "rows"):
                header[tokens[0]] = tokens[1:]
                continue
            try:
                rows.append([float(t) for t in tokens])
            except ValueError:
                raise FormatError("bad feature row", lineno) from None
    for key in ("names", "mean", "std", "weights", "rows"):
        if key not in header:
            raise FormatError(f"missing {key!r} record")
    d = len(header["names"])
    if len(rows) != int(header["rows"][0]) or any(len(r) != d for r in rows):
        raise FormatError("feature table does not match its header")
    if not rows:
        raise EmptyInputError(f"{path}: no feature rows")
    vec = {k: np.array([float(t) for t in header[k]]) for k in ("mean", "std", "weights")}
    return FeatureMatrix(np.array(rows), list(header["names"]), vec["mean"], vec["std"],
                         vec["weights"])
