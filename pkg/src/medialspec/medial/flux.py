"""Gradient of the distance function and its average outward flux."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np

from .distance import DistanceField


@dataclass
class VectorField:
    """Unit vectors (3, nx, ny, nz) on interior voxels; zero vectors elsewhere."""

    grid: object
    q: np.ndarray


@dataclass
class AofField:
    grid: object
    aof: np.ndarray

    @property
    def strength(self):
        """Medial strength, ``-AOF``: large and positive on the medial locus."""
        return -self.aof


def gradient_field(df: DistanceField) -> VectorField:
    """q(a) = (a - b) / |a - b| with b the recorded nearest boundary voxel of a."""
    occ = df.grid.occupancy
    shape = occ.shape
    idx = np.argwhere(occ)
    feat = np.array(np.unravel_index(df.feature[occ], shape)).T
    diff = (idx - feat).astype(np.float64)
    diff /= np.linalg.norm(diff, axis=1, keepdims=True)
    q = np.zeros((3,) + shape)
    for c in range(3):
        q[c][occ] = diff[:, c]
    return VectorField(df.grid, q)


@lru_cache(maxsize=None)
def sphere_directions():
    """60 unit directions: edge-trisection points of the icosahedron."""
    t = (1.0 + 5 ** 0.5) / 2.0
    v = np.array([(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
                  (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)], float)
    dist = np.linalg.norm(v[:, None] - v[None], axis=-1)
    edge = dist[dist > 0].min()
    pts = []
    for a in range(12):
        for b in range(a + 1, 12):
            if abs(dist[a, b] - edge) < 1e-9:
                pts.append(v[a] + (v[b] - v[a]) / 3.0)
                pts.append(v[a] + 2.0 * (v[b] - v[a]) / 3.0)
    pts = np.array(pts)
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


@numba.njit(cache=True)
def _flux_kernel(occ, feature, u, offsets):
    nx, ny, nz = occ.shape
    out = np.zeros((nx, ny, nz))
    fx = (feature // (ny * nz)).astype(np.float64)
    fy = ((feature // nz) % ny).astype(np.float64)
    fz = (feature % nz).astype(np.float64)
    n = u.shape[0]
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if not occ[i, j, k]:
                    continue
                acc = 0.0
                for s in range(n):
                    a = i + offsets[s, 0]
                    b = j + offsets[s, 1]
                    c = k + offsets[s, 2]
                    if a < 1 or b < 1 or c < 1 or a >= nx - 1 or b >= ny - 1 or c >= nz - 1:
                        continue
                    if not occ[a, b, c]:
                        continue
                    x0 = i + u[s, 0]
                    x1 = j + u[s, 1]
                    x2 = k + u[s, 2]
                    # nearest foot point to the sample among those recorded around it
                    best = np.inf
                    vx = 0.0
                    vy = 0.0
                    vz = 0.0
                    for da in range(-1, 2):
                        for db in range(-1, 2):
                            for dc in range(-1, 2):
                                if not occ[a + da, b + db, c + dc]:
                                    continue
                                wx = x0 - fx[a + da, b + db, c + dc]
                                wy = x1 - fy[a + da, b + db, c + dc]
                                wz = x2 - fz[a + da, b + db, c + dc]
                                dd = wx * wx + wy * wy + wz * wz
                                if dd < best:
                                    best = dd
                                    vx = wx
                                    vy = wy
                                    vz = wz
                    if best > 0.0:
                        acc += (vx * u[s, 0] + vy * u[s, 1] + vz * u[s, 2]) / np.sqrt(best)
                out[i, j, k] = acc / n
    return out


def average_outward_flux(vf: VectorField, df: DistanceField, radius=1.0) -> AofField:
    """Mean of <q(p + radius u_k), u_k> over the 60 stencil directions.

    Each sample point ``x = p + radius u_k`` is assigned to its nearest voxel.
    Its foot point ``b`` is the closest to ``x`` among the foot points recorded
    in the 3x3x3 block around that voxel, and the sample contributes
    ``<(x - b) / |x - b|, u_k>``. The field is zero outside the object, so
    samples whose nearest voxel is empty add nothing. ``vf`` is accepted for
    interface symmetry; the foot points in ``df`` determine the field.
    """
    u = sphere_directions() * radius
    offsets = np.rint(u).astype(np.int64)
    aof = _flux_kernel(df.grid.occupancy, df.feature, u, offsets) / radius
    return AofField(df.grid, aof)
