"""Object reconstruction as the union of maximal inscribed balls."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import EmptyInputError, DomainError, ShapeError
from .voxelio import VoxelGrid


@dataclass
class ReconGrid(VoxelGrid):
    """Reconstructed occupancy plus the generator map.

    ``generator[v]`` is the index of the skeletal point whose ball claims
    voxel ``v`` (largest radius, then lowest index); -1 where unoccupied.
    """

    generator: np.ndarray = None

    def as_grid(self) -> VoxelGrid:
        return VoxelGrid(self.occupancy, self.spacing, self.origin)


@numba.njit(cache=True)
def _rasterize(index, rvox2, order, dims, generator):
    nx, ny, nz = dims[0], dims[1], dims[2]
    # balls painted from largest radius down; the first painter of a voxel wins
    for t in range(order.shape[0]):
        s = order[t]
        cx, cy, cz = index[s, 0], index[s, 1], index[s, 2]
        r2 = rvox2[s]
        rr = int(np.floor(np.sqrt(r2) + 1e-9))
        for i in range(max(cx - rr, 0), min(cx + rr + 1, nx)):
            di = (i - cx) * (i - cx)
            for j in range(max(cy - rr, 0), min(cy + rr + 1, ny)):
                dj = di + (j - cy) * (j - cy)
                if dj > r2:
                    continue
                for k in range(max(cz - rr, 0), min(cz + rr + 1, nz)):
                    if generator[i, j, k] >= 0:
                        continue
                    if dj + (k - cz) * (k - cz) <= r2:
                        generator[i, j, k] = s


def reconstruct(skel, geometry=None) -> ReconGrid:
    """Rasterize every skeletal ball (center-in-sphere test, inclusive).

    ``geometry`` is a VoxelGrid (or anything with ``dims``, ``spacing`` and
    ``origin``); it defaults to the geometry stored with the skeleton.
    """
    if len(skel) == 0:
        raise EmptyInputError("skeleton has no points")
    if np.any(skel.radius <= 0):
        raise DomainError("skeletal radii must be positive")
    if geometry is None:
        dims, spacing, origin = skel.dims, skel.spacing, skel.origin
    else:
        dims = tuple(geometry.dims)
        spacing, origin = float(geometry.spacing), np.asarray(geometry.origin, float)
        if dims != tuple(skel.dims) or not np.isclose(spacing, skel.spacing) \
                or not np.allclose(origin, skel.origin):
            raise ShapeError("skeleton and target geometry differ")
    rvox2 = (skel.radius / spacing) ** 2 * (1 + 1e-12)
    # largest radius first, lower index first among equal radii
    order = np.lexsort((np.arange(len(skel)), -skel.radius)).astype(np.int64)
    generator = -np.ones(dims, dtype=np.int64)
    _rasterize(skel.index.astype(np.int64), rvox2, order, np.array(dims, np.int64), generator)
    return ReconGrid(generator >= 0, spacing, np.array(origin, float), generator=generator)


def miou(a, b) -> float:
    """Intersection over union of two occupancies on the same grid."""
    if not a.same_geometry(b):
        raise ShapeError("grids differ in geometry")
    oa, ob = a.occupancy, b.occupancy
    union = np.count_nonzero(oa | ob)
    if union == 0:
        raise EmptyInputError("both grids are empty")
    return np.count_nonzero(oa & ob) / union
