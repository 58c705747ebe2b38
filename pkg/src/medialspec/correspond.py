"""Spectrum alignment, dense point matching and geodesic accuracy curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csgraph
from scipy.sparse.linalg import eigsh
from scipy.spatial import cKDTree
import scipy.sparse as sp

from .errors import FormatError, PreconditionError, ShapeError, DomainError

WEIGHTS = (0.4, 0.3, 0.3)
HIST_BINS = 32
HIST_RANGE = 4.0
N_SAMPLES = 256
MODES = ("nearest", "drift")


@dataclass
class SpectrumAlignment:
    """``perm[a]`` is the column of B paired with column ``a`` of A; B's column
    is multiplied by ``signs[a]``."""

    perm: np.ndarray
    signs: np.ndarray
    cost: np.ndarray

    def inverse(self):
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(len(self.perm))
        return SpectrumAlignment(inv, self.signs[inv], self.cost.T.copy())


def _rms_normalize(E):
    rms = np.sqrt(np.mean(E * E, axis=0))
    rms[rms == 0] = 1.0
    return E / rms


def normalize_positions(points):
    """Center, scale to unit RMS radius and rotate into the PCA frame.

    Axis signs are fixed so the third moment along each axis is nonnegative.
    """
    P = np.asarray(points, dtype=np.float64)
    P = P - P.mean(axis=0)
    P = P / np.sqrt(np.mean(np.sum(P * P, axis=1)))
    _, _, Vt = np.linalg.svd(P, full_matrices=False)
    Q = P @ Vt.T
    skew = np.sum(Q ** 3, axis=0)
    s = np.where(skew < 0, -1.0, 1.0)
    return Q * s


def farthest_point_sample(points, m, start=0):
    """Greedy farthest-point subsample of ``m`` indices, starting at ``start``."""
    P = np.asarray(points, dtype=np.float64)
    m = min(m, len(P))
    out = np.empty(m, dtype=np.int64)
    out[0] = start
    d = np.linalg.norm(P - P[start], axis=1)
    for t in range(1, m):
        out[t] = int(np.argmax(d))
        d = np.minimum(d, np.linalg.norm(P - P[out[t]], axis=1))
    return out


def _histograms(Z):
    edges = np.linspace(-HIST_RANGE, HIST_RANGE, HIST_BINS + 1)
    H = np.empty((Z.shape[1], HIST_BINS))
    for c in range(Z.shape[1]):
        h, _ = np.histogram(np.clip(Z[:, c], -HIST_RANGE, HIST_RANGE), bins=edges)
        H[c] = h / max(h.sum(), 1)
    return H


def align_spectra(embA, embB, pointsA=None, pointsB=None, weights=WEIGHTS,
                  n_samples=N_SAMPLES) -> SpectrumAlignment:
    """Pair and sign-fix eigenvectors of B against those of A.

    The cost of pairing column ``a`` with ``b`` mixes the relative eigenvalue
    gap, the L1 distance of 32-bin value histograms and, when vertex
    positions are given, the mean value difference at farthest-point samples
    of A paired with their spatially nearest B vertices. Histogram and
    spatial terms use the better of the two signs of ``b``.
    """
    if embA.k != embB.k:
        raise ShapeError("embeddings have different k")
    alpha, beta, gamma = weights
    la, lb = embA.eigenvalues, embB.eigenvalues
    denom = la[:, None] + lb[None, :]
    eig = np.abs(la[:, None] - lb[None, :]) / np.where(denom > 0, denom, 1.0)

    ZA, ZB = _rms_normalize(embA.vectors), _rms_normalize(embB.vectors)
    HA, HB, HBn = _histograms(ZA), _histograms(ZB), _histograms(-ZB)
    hist_pos = 0.5 * np.abs(HA[:, None] - HB[None]).sum(-1)
    hist_neg = 0.5 * np.abs(HA[:, None] - HBn[None]).sum(-1)

    if pointsA is not None and pointsB is not None and gamma > 0:
        PA, PB = normalize_positions(pointsA), normalize_positions(pointsB)
        sa = farthest_point_sample(PA, n_samples)
        _, sb = cKDTree(PB).query(PA[sa])
        va, vb = ZA[sa], ZB[sb]
        sp_pos = np.abs(va[:, :, None] - vb[:, None, :]).mean(0) / 2
        sp_neg = np.abs(va[:, :, None] + vb[:, None, :]).mean(0) / 2
    else:
        sp_pos = sp_neg = np.zeros_like(eig)

    pos = beta * hist_pos + gamma * sp_pos
    neg = beta * hist_neg + gamma * sp_neg
    cost = alpha * eig + np.minimum(pos, neg)
    sign = np.where(neg < pos, -1.0, 1.0)
    rows, cols = linear_sum_assignment(cost)
    perm = cols[np.argsort(rows)]
    return SpectrumAlignment(perm, sign[np.arange(len(perm)), perm], cost)


def apply_alignment(embA, embB, al: SpectrumAlignment):
    """Return copies of both embeddings in a common, aligned basis."""
    A = embA.select(np.arange(embA.k))
    B = embB.select(al.perm, al.signs)
    A.aligned = True
    B.aligned = True
    return A, B


@dataclass
class CorrespondenceMap:
    target: np.ndarray
    confidence: np.ndarray = None

    def __len__(self):
        return len(self.target)


def _cpd_nonrigid(Y, X, lam=2.0, beta=2.0, iters=50, sigma2=None, rank=64):
    """Coherent drift of centroids ``Y`` toward ``X`` with a low-rank kernel.

    Returns moved centroids, the final soft-assignment confidences and the
    final variance.
    """
    M, D = Y.shape
    d2 = np.sum((Y[:, None] - Y[None]) ** 2, axis=-1)
    G = np.exp(-d2 / (2 * beta * beta))
    r = min(rank, M - 1)
    if r >= 1 and M > rank + 1:
        v0 = np.ones(M) / np.sqrt(M)
        vals, Q = eigsh(G, k=r, which="LM", v0=v0)
    else:
        vals, Q = scipy.linalg.eigh(G)
    vals = np.clip(vals, 0.0, None)
    W = np.zeros_like(Y)
    T = Y.copy()
    x2 = np.sum(X * X, axis=1)
    conf = np.ones(M)
    for _ in range(iters):
        t2 = np.sum(T * T, axis=1)
        dist = np.maximum(t2[:, None] + x2[None] - 2 * T @ X.T, 0.0)
        logK = -dist / (2 * sigma2)
        # column-wise normalization over centroids, computed stably
        cmax = logK.max(axis=0)
        P = np.exp(logK - cmax)
        P /= P.sum(axis=0, keepdims=True)
        P1 = P.sum(axis=1)
        Np = P1.sum()
        PX = P @ X
        conf = P.max(axis=1)
        c = lam * sigma2
        p1 = np.maximum(P1, 1e-12)
        rhs = PX - p1[:, None] * Y
        U = p1[:, None] * Q
        inner = c * np.eye(len(vals)) + (vals[:, None] * Q.T) @ U
        W = (rhs - U @ np.linalg.solve(inner, (vals[:, None] * Q.T) @ rhs)) / c
        T = Y + Q @ (vals[:, None] * (Q.T @ W))
        t2 = np.sum(T * T, axis=1)
        num = (np.sum(x2 * P.sum(axis=0)) - 2 * np.sum(PX * T) + np.sum(P1 * t2))
        sigma2 = max(num / (Np * D), 1e-12)
    return T, conf, sigma2


TIE_TOL = 1e-9


def _nearest_with_ties(query, X, tree, qpos=None, xpos=None, k=8, band=0.0, anchor=None):
    """Nearest rows of ``X`` to ``query``.

    Candidates within ``band`` (plus ``TIE_TOL`` of the embedding scale) of
    the best distance count as tied. Ties go to the candidate closest to
    ``anchor`` (when given), then closest in normalized position (when
    given), then the lower index.
    """
    k = min(k, len(X))
    dist, idx = tree.query(query, k=k)
    dist = dist.reshape(len(query), k)
    idx = idx.reshape(len(query), k)
    scale = float(np.sqrt(np.mean(np.sum(X * X, axis=1)))) or 1.0
    tied = dist <= dist[:, :1] + band + TIE_TOL * scale
    out = idx[:, 0].copy()
    for r in np.flatnonzero(tied.sum(axis=1) > 1):
        cand = idx[r, tied[r]]
        keys = [cand]
        if qpos is not None:
            keys.append(np.round(np.linalg.norm(xpos[cand] - qpos[r], axis=1) * 1e9))
        if anchor is not None:
            keys.append(np.round(np.linalg.norm(X[cand] - anchor[r], axis=1) / scale / TIE_TOL))
        out[r] = cand[np.lexsort(keys)[0]]
    return out


def match_points(embA, embB, mode="nearest", pointsA=None, pointsB=None, lam=2.0,
                 iters=50) -> CorrespondenceMap:
    """Map each A vertex to a B vertex in the aligned embedding space.

    Vertices with identical embedding coordinates (e.g. graph automorphisms
    created by shared spheres) are separated using vertex positions after
    centroid, scale and principal-axis normalization when ``pointsA`` and
    ``pointsB`` are given.
    """
    if not (embA.aligned and embB.aligned):
        raise PreconditionError("embeddings must be aligned first (align_spectra)")
    if embA.k != embB.k:
        raise ShapeError("embeddings have different k")
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}")
    qpos = xpos = None
    if pointsA is not None and pointsB is not None:
        qpos, xpos = normalize_positions(pointsA), normalize_positions(pointsB)
    A, B = embA.coords, embB.coords
    if mode == "nearest":
        idx = _nearest_with_ties(A, B, cKDTree(B), qpos, xpos)
        return CorrespondenceMap(np.asarray(idx, dtype=np.int64))
    # common normalization so the kernel width is scale free
    center = A.mean(axis=0)
    scale = np.sqrt(np.mean(np.sum((A - center) ** 2, axis=1)))
    scale = scale if scale > 0 else 1.0
    Y, X = (A - center) / scale, (B - center) / scale
    tree = cKDTree(X)
    nn, _ = tree.query(X, k=2)
    s0 = float(np.mean(nn[:, 1]))
    sigma2 = max(s0 * s0, 1e-12)
    T, conf, sigma2 = _cpd_nonrigid(Y, X, lam=lam, iters=iters, sigma2=sigma2)
    # the mixture cannot resolve detail finer than its final width; within
    # that band the undisplaced coordinates decide
    idx = _nearest_with_ties(T, X, tree, qpos, xpos, k=64, band=np.sqrt(sigma2), anchor=Y)
    return CorrespondenceMap(np.asarray(idx, dtype=np.int64), conf)


THRESHOLDS = np.round(np.arange(26) * 0.01, 2)


def edge_graph(mesh):
    e = mesh.edges()
    w = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    n = mesh.n_vertices
    return sp.coo_matrix((np.concatenate([w, w]), (np.concatenate([e[:, 0], e[:, 1]]),
                                                   np.concatenate([e[:, 1], e[:, 0]]))),
                         shape=(n, n)).tocsr()


def geodesic_diameter(mesh, graph=None, sweeps=4):
    """Largest edge-graph distance found by repeated farthest-vertex sweeps."""
    graph = edge_graph(mesh) if graph is None else graph
    src, best = 0, 0.0
    for _ in range(sweeps):
        d = csgraph.dijkstra(graph, indices=src)
        d = np.where(np.isfinite(d), d, -1)
        far = int(np.argmax(d))
        best = max(best, float(d[far]))
        src = far
    return best


def eval_correspondence(cmap: CorrespondenceMap, gt, meshB, thresholds=THRESHOLDS, chunk=256):
    """Fraction of vertices within geodesic ``t * diameter`` of the truth.

    Returns ``(thresholds, fractions, diameter)``.
    """
    target = np.asarray(cmap.target, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if target.shape != gt.shape:
        raise ShapeError("map and ground truth differ in length")
    graph = edge_graph(meshB)
    err = np.empty(len(gt))
    diam = geodesic_diameter(meshB, graph)
    sources = np.unique(gt)
    for s in range(0, len(sources), chunk):
        src = sources[s:s + chunk]
        D = csgraph.dijkstra(graph, indices=src)
        finite = D[np.isfinite(D)]
        if finite.size:
            diam = max(diam, float(finite.max()))
        row = np.searchsorted(src, gt)
        hit = (row < len(src)) & (src[np.minimum(row, len(src) - 1)] == gt)
        err[hit] = D[row[hit], target[hit]]
    thresholds = np.asarray(thresholds, dtype=np.float64)
    frac = np.array([(err <= t * diam + 1e-12 * max(diam, 1.0)).mean() for t in thresholds])
    return thresholds, frac, diam


def save_map(cmap: CorrespondenceMap, path):
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in enumerate(cmap.target):
            fh.write("%d %d\n" % (i, j))
    return path


def load_map(path) -> CorrespondenceMap:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            tokens = raw.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            if len(tokens) != 2:
                raise FormatError("expected 'srcIdx dstIdx'", lineno)
            rows.append((int(tokens[0]), int(tokens[1])))
    rows.sort()
    if [r[0] for r in rows] != list(range(len(rows))):
        raise FormatError("source indices must cover 0..n-1")
    return CorrespondenceMap(np.array([r[1] for r in rows], dtype=np.int64))


def save_curve(thresholds, fractions, path):
    with open(path, "w", encoding="utf-8") as fh:
        for t, f in zip(thresholds, fractions):
            fh.write("%.2f %.17g\n" % (t, f))
    return path
