"""Geometry Similarity Connection features for point classifiers."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError, EmptyInputError, FormatError, ShapeError

DEFAULT_GSC_K = 8
COLUMNS = ("x", "y", "z", "mu_x", "mu_y", "mu_z", "sigma_x", "sigma_y", "sigma_z")


@dataclass
class GscFeatures:
    """``(n, 9)`` rows of position, neighbor mean and neighbor spread."""

    values: np.ndarray

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def points(self):
        return self.values[:, :3]

    @property
    def mu(self):
        return self.values[:, 3:6]

    @property
    def sigma(self):
        return self.values[:, 6:9]


def spectral_neighbors(phi, k):
    """``k`` nearest rows of ``phi`` to each row, self excluded.

    Equal distances go to the lower index.
    """
    phi = np.asarray(phi, dtype=np.float64)
    n = len(phi)
    tree = cKDTree(phi)
    q = min(k + 2, n)
    dist, idx = tree.query(phi, k=q)
    dist, idx = dist.reshape(n, q), idx.reshape(n, q)
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        d, j = dist[i], idx[i]
        keep = j != i
        d, j = d[keep], j[keep]
        if len(j) > k and d[k] > d[k - 1]:
            order = np.lexsort((j[:k], d[:k]))
            out[i] = j[:k][order]
            continue
        # a tie crosses the cut: gather every point at the cut distance
        cut = d[k - 1] if len(d) >= k else np.inf
        j = np.array(tree.query_ball_point(phi[i], cut * (1 + 1e-12) + 1e-300), dtype=np.int64)
        j = j[j != i]
        dj = np.linalg.norm(phi[j] - phi[i], axis=1)
        out[i] = j[np.lexsort((j, dj))[:k]]
    return out


def gsc(points, emb, k=DEFAULT_GSC_K) -> GscFeatures:
    """Position plus mean and population deviation of spectral neighbors.

    ``emb`` is a SpectralEmbedding or an ``(n, k)`` coordinate array whose
    rows align with ``points``.
    """
    P = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    phi = np.asarray(getattr(emb, "coords", emb), dtype=np.float64)
    n = len(P)
    if n == 0:
        raise EmptyInputError("no points")
    if phi.ndim != 2 or len(phi) != n:
        raise ShapeError("embedding rows do not align with points")
    k = int(k)
    if k < 1 or k >= n:
        raise DomainError(f"k must satisfy 1 <= k < {n}")
    nb = spectral_neighbors(phi, k)
    Q = P[nb]
    mu = Q.mean(axis=1)
    sigma = Q.std(axis=1)
    return GscFeatures(np.hstack([P, mu, sigma]))


def export_features(f: GscFeatures, path, label=None):
    """Whitespace table with a header row; an integer label column is optional."""
    cols = list(COLUMNS) + (["label"] if label is not None else [])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(" ".join(cols) + "\n")
        for row in f.values:
            line = " ".join("%.17g" % v for v in row)
            if label is not None:
                line += " %d" % int(label)
            fh.write(line + "\n")
    return path


def load_features(path):
    """Returns ``(GscFeatures, label or None)``."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if header[:9] != list(COLUMNS):
            raise FormatError("missing feature header", 1)
        with_label = header[9:] == ["label"]
        rows = []
        for lineno, raw in enumerate(fh, start=2):
            tokens = raw.split()
            if not tokens:
                continue
            if len(tokens) != len(header):
                raise FormatError(f"expected {len(header)} columns", lineno)
            try:
                rows.append([float(t) for t in tokens])
            except ValueError:
                raise FormatError("bad feature row", lineno) from None
    if not rows:
        raise EmptyInputError(f"{path}: no feature rows")
    a = np.array(rows)
    label = None
    if with_label:
        labels = np.unique(a[:, 9])
        if len(labels) != 1:
            raise FormatError("label column must be constant within a file")
        label = int(labels[0])
    return GscFeatures(a[:, :9]), label


def export_feature_set(items, outdir):
    """Write ``(name, GscFeatures, label)`` items as ``outdir/name.txt``.

    Returns the written paths in input order.
    """
    os.makedirs(outdir, exist_ok=True)
    paths = []
    for name, f, label in items:
        paths.append(export_features(f, os.path.join(outdir, f"{name}.txt"), label))
    return paths
