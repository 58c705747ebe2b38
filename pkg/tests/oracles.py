"""Independent brute-force references for the test suite.

Nothing here imports the package under test; every oracle recomputes its
answer by a different and simpler method than the implementation.
"""

import itertools

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra


# distance transform


def brute_squared_edt(occ):
    """Squared voxel distance from every occupied voxel to the nearest empty one.

    O(n^2) over all (occupied, empty) pairs; 0 on empty voxels.
    """
    occ = np.asarray(occ, bool)
    inside = np.argwhere(occ)
    outside = np.argwhere(~occ)
    out = np.zeros(occ.shape, dtype=np.int64)
    if len(inside) == 0 or len(outside) == 0:
        return out
    for chunk in np.array_split(np.arange(len(inside)), max(1, len(inside) // 512)):
        diff = inside[chunk, None, :] - outside[None, :, :]
        out[tuple(inside[chunk].T)] = np.min(np.sum(diff * diff, axis=-1), axis=1)
    return out


def brute_feature_direction(occ, p):
    """Unit vectors from every nearest empty voxel toward occupied voxel ``p``."""
    outside = np.argwhere(~np.asarray(occ, bool))
    diff = np.asarray(p)[None] - outside
    d2 = np.sum(diff * diff, axis=1)
    best = diff[d2 == d2.min()].astype(float)
    return best / np.linalg.norm(best, axis=1, keepdims=True)


# topology


def _closure_cells(occ):
    # every voxel (i, j, k) is the doubled-coordinate cube (2i+1, 2j+1, 2k+1);
    # its closure holds the 27 cells (2i+1+a, ...) with a in {-1, 0, 1}
    idx = np.argwhere(np.asarray(occ, bool)).astype(np.int64)
    offs = np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=np.int64)
    cells = (2 * idx + 1)[:, None, :] + offs[None]
    return np.unique(cells.reshape(-1, 3), axis=0)


def brute_euler(occ):
    """Euler characteristic of the union of closed unit cubes, by cell enumeration."""
    occ = np.asarray(occ, bool)
    if not occ.any():
        return 0
    # encode cells as integers for a fast unique on large grids
    idx = np.argwhere(occ).astype(np.int64)
    m = 2 * np.array(occ.shape, dtype=np.int64) + 3
    offs = np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=np.int64)
    seen = []
    for off in offs:
        c = 2 * idx + 1 + off
        seen.append((c[:, 0] * m[1] + c[:, 1]) * m[2] + c[:, 2])
    codes = np.unique(np.concatenate(seen))
    z = codes % m[2]
    y = (codes // m[2]) % m[1]
    x = codes // (m[1] * m[2])
    dim = (x % 2) + (y % 2) + (z % 2)
    return int(np.sum((-1) ** dim))


def brute_components(occ, connectivity=26):
    """Connected components from an explicit adjacency graph."""
    occ = np.asarray(occ, bool)
    idx = np.argwhere(occ)
    n = len(idx)
    if n == 0:
        return 0
    lookup = -np.ones(occ.shape, dtype=np.int64)
    lookup[tuple(idx.T)] = np.arange(n)
    rows, cols = [], []
    for off in itertools.product((-1, 0, 1), repeat=3):
        if off == (0, 0, 0):
            continue
        if connectivity == 6 and sum(map(abs, off)) != 1:
            continue
        q = idx + np.array(off)
        ok = np.all((q >= 0) & (q < np.array(occ.shape)), axis=1)
        j = lookup[tuple(q[ok].T)]
        keep = j >= 0
        rows.append(np.flatnonzero(ok)[keep])
        cols.append(j[keep])
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    A = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    return int(connected_components(A, directed=False)[0])


def brute_is_simple(nb):
    """Simplicity of the center of a 3x3x3 boolean block.

    The center is simple iff its attachment set (the part of its cube's
    boundary shared with occupied neighbor cubes) is nonempty, connected
    and has Euler characteristic 1, i.e. is contractible on the sphere.
    """
    nb = np.asarray(nb, bool).copy()
    nb[1, 1, 1] = False
    own = {tuple(c) for c in _closure_cells(np.pad(np.ones((1, 1, 1), bool), 1))}
    own.discard((3, 3, 3))
    shared = {tuple(c) for c in _closure_cells(nb)} & own
    if not shared:
        return False
    euler = sum((-1) ** sum(v % 2 for v in c) for c in shared)
    verts = [c for c in shared if all(v % 2 == 0 for v in c)]
    edges = [c for c in shared if sum(v % 2 for v in c) == 1]
    pos = {v: i for i, v in enumerate(verts)}
    rows, cols = [], []
    for e in edges:
        a = next(i for i in range(3) if e[i] % 2)
        lo, hi = list(e), list(e)
        lo[a] -= 1
        hi[a] += 1
        rows.append(pos[tuple(lo)])
        cols.append(pos[tuple(hi)])
    A = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(verts),) * 2)
    return connected_components(A, directed=False)[0] == 1 and euler == 1


# geometry


def monte_carlo_lens(d, r1, r2, n=10_000_000, seed=0, chunk=1_000_000):
    """Intersection volume of two balls by rejection sampling.

    Centers sit at 0 and ``d`` on the x axis; samples are drawn in the box
    bounding the intersection.
    """
    rng = np.random.default_rng(seed)
    lo = max(-r1, d - r2)
    hi = min(r1, d + r2)
    if hi <= lo:
        return 0.0

    def radial(c, r):
        # largest cross-section radius of a ball over x in [lo, hi]
        x = min(max(c, lo), hi)
        return np.sqrt(max(r * r - (x - c) ** 2, 0.0))

    w = min(radial(0.0, r1), radial(d, r2))
    box = (hi - lo) * (2 * w) ** 2
    hits = 0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        p = rng.uniform((lo, -w, -w), (hi, w, w), size=(m, 3))
        a = np.sum(p * p, axis=1) <= r1 * r1
        p[:, 0] -= d
        b = np.sum(p * p, axis=1) <= r2 * r2
        hits += int(np.count_nonzero(a & b))
        done += m
    return box * hits / n


def sphere_volume(r):
    return 4.0 / 3.0 * np.pi * r ** 3


# spectra


def dense_generalized_eigs(W, dsym):
    """All eigenpairs of (diag(W 1) - W) v = lambda diag(dsym) v, dense."""
    W = np.asarray(W.toarray() if sp.issparse(W) else W, dtype=float)
    L = np.diag(W.sum(axis=1)) - W
    return scipy.linalg.eigh(L, np.diag(np.asarray(dsym, float)))


def principal_angles(A, B, M=None):
    """Principal angles between column spaces, in the ``M`` inner product."""
    if M is not None:
        s = np.sqrt(np.asarray(M, float))[:, None]
        A, B = A * s, B * s
    return scipy.linalg.subspace_angles(A, B)


# partitions


def brute_rand_error(a, b):
    """One minus the fraction of agreeing unordered pairs, by enumeration."""
    n = len(a)
    pairs = list(itertools.combinations(range(n), 2))
    if not pairs:
        return 0.0
    agree = sum((a[i] == a[j]) == (b[i] == b[j]) for i, j in pairs)
    return 1.0 - agree / len(pairs)


# neighbor features


def brute_gsc(points, phi, k):
    """Rows (p, mean, population std) over the k Phi-nearest other points.

    Full stable sort per row, so equal distances keep the lower index.
    """
    P = np.asarray(points, float)
    phi = np.asarray(phi, float)
    n = len(P)
    out = np.zeros((n, 9))
    for i in range(n):
        d2 = np.sum((phi - phi[i]) ** 2, axis=1)
        order = [j for j in np.argsort(d2, kind="stable") if j != i][:k]
        Q = P[order]
        mu = Q.mean(axis=0)
        out[i] = np.concatenate([P[i], mu, np.sqrt(np.mean((Q - mu) ** 2, axis=0))])
    return out


def positional_knn_mean(points, k):
    """Mean position of the k nearest other points in space."""
    P = np.asarray(points, float)
    d2 = np.sum((P[:, None] - P[None]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    nb = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return P[nb].mean(axis=1)


# correspondence


def mesh_edge_graph(vertices, triangles):
    V = np.asarray(vertices, float)
    T = np.asarray(triangles, int)
    e = np.vstack([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
    e = np.unique(np.sort(e, axis=1), axis=0)
    w = np.linalg.norm(V[e[:, 0]] - V[e[:, 1]], axis=1)
    n = len(V)
    A = sp.coo_matrix((w, (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
    return A + A.T


def covered_fraction(vertices, triangles, radius, n_sources=200, seed=0):
    """Expected share of vertices within geodesic ``radius`` of a random vertex.

    This is the chance that a uniformly random target lands within
    ``radius`` of the true one. Returns ``(estimate, standard error)``.
    """
    G = mesh_edge_graph(vertices, triangles)
    n = G.shape[0]
    rng = np.random.default_rng(seed)
    src = rng.choice(n, size=min(n_sources, n), replace=False)
    D = dijkstra(G, directed=False, indices=src)
    share = np.mean(D <= radius, axis=1)
    return float(share.mean()), float(share.std(ddof=1) / np.sqrt(len(src)))


def brute_diameter(vertices, triangles):
    """Largest finite all-pairs edge-graph geodesic."""
    D = dijkstra(mesh_edge_graph(vertices, triangles), directed=False)
    return float(D[np.isfinite(D)].max())
