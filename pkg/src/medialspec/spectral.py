"""Medially weighted boundary graph, its generalized Laplacian spectrum and
the spectral signature.

Boundary vertices are tied to the skeletal point that generated the nearest
reconstructed surface voxel. Two vertices are linked with a weight equal to
the intersection volume of their mapped spheres, and the spectrum of

    (D_deg - W) E = lambda D E,     D = diag(rho(r_i))

gives the per-vertex coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.sparse.linalg import eigsh
from scipy.spatial import cKDTree

from .errors import (ConnectivityError, ConvergenceError, DataError, DomainError,
                     FormatError, PreconditionError, ShapeError)

DEFAULT_K_PAIRS = 16
DEFAULT_EIGENPAIRS = 30
FLOOR_EPS = 1e-6
RHO_MODES = ("radius", "volume")


def sphere_overlap_volume(c1, r1, c2, r2):
    """Volume of the intersection of two balls (vectorized over leading axes)."""
    c1 = np.asarray(c1, dtype=np.float64)
    c2 = np.asarray(c2, dtype=np.float64)
    r1 = np.asarray(r1, dtype=np.float64)
    r2 = np.asarray(r2, dtype=np.float64)
    if np.any(r1 <= 0) or np.any(r2 <= 0):
        raise DomainError("sphere radii must be positive")
    d = np.linalg.norm(c1 - c2, axis=-1)
    d, r1, r2 = np.broadcast_arrays(d, r1, r2)
    out = np.zeros(d.shape)
    rmin = np.minimum(r1, r2)
    inside = d <= np.abs(r1 - r2)
    out[inside] = 4.0 / 3.0 * np.pi * rmin[inside] ** 3
    lens = ~inside & (d < r1 + r2)
    if np.any(lens):
        dd, a, b = d[lens], r1[lens], r2[lens]
        s = a + b - dd
        out[lens] = np.pi * s * s * (dd * dd + 2 * dd * (a + b) - 3 * (a - b) ** 2) / (12 * dd)
    return out if out.ndim else float(out)


def ball_volume(r):
    return 4.0 / 3.0 * np.pi * np.asarray(r, dtype=np.float64) ** 3


@dataclass
class BoundaryMedialMap:
    """Skeletal index, radius, sphere center and association distance per vertex."""

    skeletal: np.ndarray
    radius: np.ndarray
    centers: np.ndarray
    distance: np.ndarray

    def __len__(self):
        return len(self.skeletal)

    def transformed(self, rotation=None, translation=None, scale=1.0):
        """The same association with sphere centers moved rigidly (and scaled)."""
        c = self.centers
        if rotation is not None:
            c = c @ np.asarray(rotation, float).T
        c = c * scale
        if translation is not None:
            c = c + np.asarray(translation, float)
        return BoundaryMedialMap(self.skeletal.copy(), self.radius * scale, c,
                                 self.distance * scale)


def surface_voxels(occ):
    """Occupied voxels with at least one empty 6-neighbor."""
    p = np.pad(occ, 1)
    inner = p[1:-1, 1:-1, 1:-1].copy()
    for a in range(3):
        for s in (0, 2):
            sl = [slice(1, -1)] * 3
            sl[a] = slice(s, s + occ.shape[a])
            inner &= p[tuple(sl)]
    return occ & ~inner


def map_boundary_to_medial(mesh, skel, recon) -> BoundaryMedialMap:
    """Nearest reconstructed surface voxel for each vertex, then its generator."""
    surf = surface_voxels(recon.occupancy)
    idx = np.argwhere(surf)
    if len(idx) == 0:
        raise PreconditionError("reconstruction is empty")
    centers = recon.origin + recon.spacing * idx
    dist, near = cKDTree(centers).query(mesh.vertices)
    gen = recon.generator[tuple(idx[near].T)]
    return BoundaryMedialMap(gen.astype(np.int64), skel.radius[gen].copy(),
                             skel.centers[gen], np.asarray(dist, float))


@dataclass
class MedialGraph:
    """Symmetric overlap weights ``W`` (CSR, zero diagonal) and diagonal ``dsym``."""

    W: sp.csr_matrix
    dsym: np.ndarray

    @property
    def n(self):
        return self.W.shape[0]

    def laplacian(self):
        deg = np.asarray(self.W.sum(axis=1)).ravel()
        return (sp.diags(deg) - self.W).tocsr()

    def weight(self, i, j):
        return float(self.W[i, j])


def _rho(radius, rho):
    if rho == "radius":
        return np.asarray(radius, float).copy()
    if rho == "volume":
        return ball_volume(radius)
    raise DomainError(f"rho must be one of {RHO_MODES}")


def _coupling_pairs(bmap, K, positions):
    """Unordered vertex pairs from shared spheres and the K-best overlap rule.

    Candidates of equal overlap (members of one sphere, or of equal spheres)
    are taken nearest-first by vertex position, then by index. Overlaps and
    distances are ranked on quantized keys so round-off, e.g. after a rigid
    motion, cannot reorder exact ties.
    """
    skel_ids, inverse = np.unique(bmap.skeletal, return_inverse=True)
    members = [[] for _ in skel_ids]
    for v, g in enumerate(inverse):
        members[g].append(v)
    members = [np.array(m, dtype=np.int64) for m in members]
    first = np.array([m[0] for m in members])
    pc = bmap.centers[first]
    pr = bmap.radius[first]
    extent = float(np.ptp(positions, axis=0).max()) or 1.0

    pairs = []
    # all vertices sharing one skeletal point are mutually coupled
    for m in members:
        if len(m) > 1:
            a, b = np.triu_indices(len(m), 1)
            pairs.append(np.stack([m[a], m[b]], axis=1))

    if K > 0 and len(members) > 1:
        tree = cKDTree(pc)
        rmax = pr.max()
        for g in range(len(members)):
            cand = np.array(tree.query_ball_point(pc[g], pr[g] + rmax), dtype=np.int64)
            cand = cand[cand != g]
            if len(cand) == 0:
                continue
            vol = sphere_overlap_volume(pc[g], pr[g], pc[cand], pr[cand])
            keep = vol > 0
            cand, vol = cand[keep], vol[keep]
            if len(cand) == 0:
                continue
            key = np.round(vol / vol.max() * 1e9)
            # spheres by decreasing overlap; only those up to the K-th vertex matter
            order = np.lexsort((cand, -key))
            counts = np.cumsum([len(members[c]) for c in cand[order]])
            last = int(np.searchsorted(counts, K))
            cut = key[order[min(last, len(order) - 1)]]
            use = order[key[order] >= cut]
            verts = np.concatenate([members[c] for c in cand[use]])
            vkey = np.concatenate([np.full(len(members[c]), w)
                                   for c, w in zip(cand[use], key[use])])
            for v in members[g]:
                dist = np.round(np.linalg.norm(positions[verts] - positions[v], axis=1)
                                / extent * 1e9)
                chosen = verts[np.lexsort((verts, dist, -vkey))[:K]]
                pairs.append(np.stack([np.full(len(chosen), v), chosen], axis=1))
    if not pairs:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(pairs)


def build_graph(mesh, bmap: BoundaryMedialMap, K=DEFAULT_K_PAIRS, eps=FLOOR_EPS,
                rho="radius") -> MedialGraph:
    """Assemble the medially weighted boundary graph.

    Edges are mesh edges, vertex pairs sharing a skeletal point, and for each
    vertex up to ``K`` vertices of other spheres with the largest positive
    overlap (equal overlaps: nearest vertex first, then lower index). Each
    unordered pair carries the overlap volume of the mapped spheres; mesh
    edges without overlap get ``eps`` times the smaller ball volume.
    """
    n = mesh.n_vertices
    if len(bmap) != n:
        raise ShapeError("map and mesh vertex counts differ")
    if K < 0:
        raise DomainError("K must be nonnegative")
    mesh_e = mesh.edges()
    coupling = _coupling_pairs(bmap, int(K), np.asarray(mesh.vertices, float))
    allp = np.concatenate([mesh_e, coupling]) if len(coupling) else mesh_e
    allp = np.sort(allp, axis=1)
    allp = allp[allp[:, 0] != allp[:, 1]]
    allp = np.unique(allp, axis=0)
    i, j = allp[:, 0], allp[:, 1]
    w = sphere_overlap_volume(bmap.centers[i], bmap.radius[i], bmap.centers[j], bmap.radius[j])
    floor = eps * ball_volume(np.minimum(bmap.radius[i], bmap.radius[j]))
    w = np.where(w > 0, w, floor)
    # floor applies to mesh edges only; coupling pairs always overlap
    W = sp.coo_matrix((np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                      shape=(n, n)).tocsr()
    W.sum_duplicates()
    ncomp, _ = csgraph.connected_components(W, directed=False)
    if ncomp != 1:
        raise ConnectivityError(f"graph has {ncomp} components; process them separately")
    return MedialGraph(W, _rho(bmap.radius, rho))


@dataclass
class SpectralEmbedding:
    """Nontrivial eigenpairs; ``vectors`` columns are D-orthonormal.

    ``null_value`` and ``null_vector`` keep the removed trivial pair.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    dsym: np.ndarray
    null_value: float = 0.0
    null_vector: np.ndarray = None
    aligned: bool = False

    @property
    def k(self):
        return len(self.eigenvalues)

    @property
    def n(self):
        return self.vectors.shape[0]

    @property
    def coords(self):
        return self.vectors

    def select(self, order, signs=None):
        signs = np.ones(len(order)) if signs is None else np.asarray(signs, float)
        return SpectralEmbedding(self.eigenvalues[order], self.vectors[:, order] * signs,
                                 self.dsym, self.null_value, self.null_vector, self.aligned)

    def residuals(self, graph):
        L = graph.laplacian()
        R = L @ self.vectors - (self.dsym[:, None] * self.vectors) * self.eigenvalues
        return np.linalg.norm(R, axis=0) / np.linalg.norm(self.vectors, axis=0)


def _fix_signs(E):
    pick = np.argmax(np.abs(E), axis=0)
    s = np.sign(E[pick, np.arange(E.shape[1])])
    s[s == 0] = 1.0
    return E * s


def _rayleigh_ritz(L, dsym, E):
    A = E.T @ (L @ E)
    B = E.T @ (dsym[:, None] * E)
    A = (A + A.T) / 2
    B = (B + B.T) / 2
    lam, V = scipy.linalg.eigh(A, B)
    return lam, E @ V


def solve_eigens(g: MedialGraph, k=DEFAULT_EIGENPAIRS, tol=1e-8, maxiter=None) -> SpectralEmbedding:
    """Smallest ``k`` nonzero eigenpairs of ``(D_deg - W) E = lambda D E``.

    Uses shift-invert Lanczos (ARPACK) just below zero, refines the Ritz pairs
    once, drops the trivial pair and flips each vector so its largest entry
    is positive.
    """
    n = g.n
    if not 1 <= k <= n - 1:
        raise DomainError(f"k must lie in [1, {n - 1}]")
    if np.any(g.dsym <= 0):
        raise DomainError("diagonal entries must be positive")
    L = g.laplacian()
    dsym = g.dsym
    m = k + 1
    if m >= n:
        # ARPACK needs fewer pairs than the dimension
        lam, E = scipy.linalg.eigh(L.toarray(), np.diag(dsym))
    else:
        scale = float(np.median(L.diagonal() / dsym))
        sigma = -1e-3 * scale if scale > 0 else -1e-3
        M = sp.diags(dsym).tocsc()
        v0 = np.ones(n) / np.sqrt(n) + np.linspace(-0.5, 0.5, n) / n
        try:
            lam, E = eigsh(L.tocsc(), k=m, M=M, sigma=sigma, which="LM", v0=v0,
                           tol=0, maxiter=maxiter or max(1000, 20 * n))
        except Exception as exc:  # ARPACK reports non-convergence as its own error type
            raise ConvergenceError(f"eigensolver failed: {exc}") from exc
        order = np.argsort(lam)
        lam, E = _rayleigh_ritz(L, dsym, E[:, order])
    if np.any(~np.isfinite(lam)):
        raise ConvergenceError("non-finite eigenvalues")
    E = E[:, :m]
    lam = lam[:m]
    scale = max(abs(lam[-1]), 1e-300)
    res = np.linalg.norm(L @ E - (dsym[:, None] * E) * lam, axis=0) / np.linalg.norm(E, axis=0)
    bound = tol * max(1.0, scale * float(dsym.max()))
    if np.any(res > bound):
        raise ConvergenceError(f"residual {res.max():.3e} exceeds {bound:.3e}")
    E = _fix_signs(E)
    return SpectralEmbedding(np.clip(lam[1:], 0.0, None), E[:, 1:], dsym.copy(),
                             float(lam[0]), E[:, 0].copy())


CHANNELS = ("x", "y", "z", "r")


def channel_matrix(mesh, bmap):
    """Per-vertex channel values (n, 4): x, y, z and the mapped radius."""
    return np.column_stack([mesh.vertices, bmap.radius])


@dataclass
class Signature:
    """Channel projections ``m`` (k, channels) and ``values`` S_C per eigenpair."""

    eigenvalues: np.ndarray
    m: np.ndarray
    values: np.ndarray


def spectral_signature(mesh, bmap, emb: SpectralEmbedding, channels=None) -> Signature:
    """m_ic = c^T D E_i and S_C(i) = lambda_i * sum_c m_ic^2."""
    C = channel_matrix(mesh, bmap) if channels is None else np.asarray(channels, float)
    if C.ndim == 1:
        C = C[:, None]
    if C.shape[0] != emb.n:
        raise ShapeError("channel length does not match the embedding")
    m = (emb.vectors * emb.dsym[:, None]).T @ C
    return Signature(emb.eigenvalues.copy(), m, emb.eigenvalues * np.sum(m * m, axis=1))


def save_embedding(emb: SpectralEmbedding, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("n %d\n" % emb.n)
        fh.write("k %d\n" % emb.k)
        fh.write("eigenvalues " + " ".join("%.17g" % v for v in emb.eigenvalues) + "\n")
        fh.write("dsym " + " ".join("%.17g" % v for v in emb.dsym) + "\n")
        for row in emb.vectors:
            fh.write(" ".join("%.17g" % v for v in row) + "\n")
    return path


def load_embedding(path) -> SpectralEmbedding:
    header = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            tokens = raw.split()
            if not tokens:
                continue
            if tokens[0] in ("n", "k", "eigenvalues", "dsym"):
                header[tokens[0]] = tokens[1:]
                continue
            try:
                rows.append([float(t) for t in tokens])
            except ValueError:
                raise FormatError("bad embedding row", lineno) from None
    for key in ("n", "k", "eigenvalues", "dsym"):
        if key not in header:
            raise FormatError(f"missing {key!r} record")
    n, k = int(header["n"][0]), int(header["k"][0])
    E = np.array(rows, dtype=np.float64).reshape(-1, k) if rows else np.empty((0, k))
    if E.shape[0] != n or len(header["eigenvalues"]) != k:
        raise FormatError("embedding size does not match header")
    if not np.all(np.isfinite(E)):
        raise DataError("embedding contains non-finite values")
    return SpectralEmbedding(np.array(header["eigenvalues"], float), E,
                             np.array(header["dsym"], float))


def save_signature(sig: Signature, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# lambda S_C\n")
        for lam, s in zip(sig.eigenvalues, sig.values):
            fh.write("%.17g %.17g\n" % (lam, s))
    return path


def medial_spectrum(mesh, skel, recon, k=DEFAULT_EIGENPAIRS, K=DEFAULT_K_PAIRS, rho="radius"):
    """Map, graph, embedding and signature in one call."""
    bmap = map_boundary_to_medial(mesh, skel, recon)
    graph = build_graph(mesh, bmap, K=K, rho=rho)
    emb = solve_eigens(graph, k)
    return bmap, graph, emb, spectral_signature(mesh, bmap, emb)
