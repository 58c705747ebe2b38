"""Exact Euclidean distance and feature transform.

Separable lower-envelope algorithm (Felzenszwalb & Huttenlocher) run along
the three grid axes. Alongside the squared distance we carry the flat index
of the nearest site, which gives the gradient direction exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..errors import EmptyInputError
from ..voxelio import VoxelGrid

_INF = 1e30


@numba.njit(cache=True)
def _envelope_1d(f, fidx, n, out, outidx, v, z):
    # f: squared distances along the line (>= _INF means no site)
    k = -1
    for q in range(n):
        if f[q] >= _INF:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -np.inf
            z[1] = np.inf
            continue
        while True:
            p = v[k]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p)
            if s <= z[k]:
                k -= 1
                if k < 0:
                    break
            else:
                break
        k += 1
        v[k] = q
        z[k] = s if k > 0 else -np.inf
        z[k + 1] = np.inf
    if k < 0:
        for q in range(n):
            out[q] = _INF
            outidx[q] = -1
        return
    j = 0
    for q in range(n):
        while z[j + 1] < q:
            j += 1
        p = v[j]
        out[q] = (q - p) * (q - p) + f[p]
        outidx[q] = fidx[p]


@numba.njit(cache=True)
def _edt_feature(sites):
    nx, ny, nz = sites.shape
    m = max(nx, ny, nz)
    sq = np.empty((nx, ny, nz))
    feat = np.empty((nx, ny, nz), dtype=np.int64)
    f = np.empty(m)
    fidx = np.empty(m, dtype=np.int64)
    out = np.empty(m)
    outidx = np.empty(m, dtype=np.int64)
    v = np.empty(m, dtype=np.int64)
    z = np.empty(m + 1)
    # axis 0
    for j in range(ny):
        for k in range(nz):
            for i in range(nx):
                f[i] = 0.0 if sites[i, j, k] else _INF
                fidx[i] = (i * ny + j) * nz + k
            _envelope_1d(f, fidx, nx, out, outidx, v, z)
            for i in range(nx):
                sq[i, j, k] = out[i]
                feat[i, j, k] = outidx[i]
    # axis 1
    for i in range(nx):
        for k in range(nz):
            for j in range(ny):
                f[j] = sq[i, j, k]
                fidx[j] = feat[i, j, k]
            _envelope_1d(f, fidx, ny, out, outidx, v, z)
            for j in range(ny):
                sq[i, j, k] = out[j]
                feat[i, j, k] = outidx[j]
    # axis 2
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                f[k] = sq[i, j, k]
                fidx[k] = feat[i, j, k]
            _envelope_1d(f, fidx, nz, out, outidx, v, z)
            for k in range(nz):
                sq[i, j, k] = out[k]
                feat[i, j, k] = outidx[k]
    return sq, feat


def squared_edt(sites):
    """Squared distance (voxel units) to the nearest ``True`` site, plus its flat index.

    Returns ``(sq, feature)``; lines without any site keep ``sq >= 1e30`` and
    ``feature == -1``.
    """
    sites = np.ascontiguousarray(sites, dtype=np.bool_)
    return _edt_feature(sites)


@dataclass
class DistanceField:
    """Distance to the object boundary on interior voxels, 0 elsewhere.

    Attributes
    ----------
    grid : VoxelGrid
    d : float array, object units
    feature : int array, flat index of the nearest empty voxel (interior) or of
        the nearest occupied voxel (exterior)
    """

    grid: VoxelGrid
    d: np.ndarray
    feature: np.ndarray

    @property
    def squared_voxels(self):
        return np.rint((self.d / self.grid.spacing) ** 2)


def distance_transform(grid: VoxelGrid) -> DistanceField:
    occ = grid.occupancy
    if not occ.any():
        raise EmptyInputError("grid has no occupied voxel")
    if occ.all():
        raise EmptyInputError("grid has no empty voxel; distance to boundary undefined")
    sq_in, feat_in = squared_edt(~occ)
    sq_out, feat_out = squared_edt(occ)
    d = np.where(occ, np.sqrt(sq_in) * grid.spacing, 0.0)
    feature = np.where(occ, feat_in, feat_out)
    return DistanceField(grid, d, feature)
