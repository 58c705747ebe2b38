"""Skeletal point sets: extraction driver and ASCII persistence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyInputError, FormatError
from ..voxelio import VoxelGrid
from .distance import DistanceField, distance_transform
from .flux import AofField, average_outward_flux, gradient_field
from .thinning import thin_mask

DEFAULT_TAU = 0.25


@dataclass
class SkeletalPointSet:
    """Medial voxels as ``(x, y, z, r, lambda)`` rows.

    ``index`` holds voxel indices, ``radius`` the distance value in object
    units and ``aof`` the average outward flux at the voxel.
    """

    index: np.ndarray
    radius: np.ndarray
    aof: np.ndarray
    spacing: float
    origin: np.ndarray
    dims: tuple

    def __post_init__(self):
        self.index = np.asarray(self.index, dtype=np.int64).reshape(-1, 3)
        self.radius = np.asarray(self.radius, dtype=np.float64).reshape(-1)
        self.aof = np.asarray(self.aof, dtype=np.float64).reshape(-1)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.dims = tuple(int(x) for x in self.dims)

    def __len__(self):
        return len(self.radius)

    @property
    def centers(self):
        """Sphere centers in object units."""
        return self.origin + self.spacing * self.index

    def mask(self):
        m = np.zeros(self.dims, dtype=bool)
        m[tuple(self.index.T)] = True
        return m

    def subset(self, keep):
        keep = np.asarray(keep)
        return SkeletalPointSet(self.index[keep], self.radius[keep], self.aof[keep],
                                self.spacing, self.origin.copy(), self.dims)


def thin(grid: VoxelGrid, aof: AofField, df: DistanceField, tau=DEFAULT_TAU) -> SkeletalPointSet:
    """Heap-driven AOF thinning of ``grid`` down to its medial voxels."""
    if not grid.occupancy.any():
        raise EmptyInputError("grid has no occupied voxel")
    remaining, _ = thin_mask(grid.occupancy, aof.strength, df.d, tau)
    idx = np.argwhere(remaining)
    sel = tuple(idx.T)
    return SkeletalPointSet(idx, df.d[sel], aof.aof[sel], grid.spacing, grid.origin, grid.dims)


def extract_skeleton(grid: VoxelGrid, tau=DEFAULT_TAU):
    """Distance transform, flux and thinning in one call.

    Returns ``(skeleton, distance_field, aof_field)``.
    """
    df = distance_transform(grid)
    vf = gradient_field(df)
    aof = average_outward_flux(vf, df)
    return thin(grid, aof, df, tau), df, aof


def save_skeleton(skel: SkeletalPointSet, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# medial skeleton: x y z r lambda\n")
        fh.write("dims %d %d %d\n" % skel.dims)
        fh.write("spacing %.17g\n" % skel.spacing)
        fh.write("origin %.17g %.17g %.17g\n" % tuple(skel.origin))
        fh.write("points %d\n" % len(skel))
        for (x, y, z), r, lam in zip(skel.index, skel.radius, skel.aof):
            fh.write("%d %d %d %.17g %.17g\n" % (x, y, z, r, lam))
    return path


def load_skeleton(path) -> SkeletalPointSet:
    header = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if tokens[0] in ("dims", "spacing", "origin", "points"):
                header[tokens[0]] = tokens[1:]
                continue
            if len(tokens) != 5:
                raise FormatError("expected 5 columns: x y z r lambda", lineno)
            try:
                rows.append([float(t) for t in tokens])
            except ValueError:
                raise FormatError("bad skeleton row", lineno) from None
    for key in ("dims", "spacing", "origin", "points"):
        if key not in header:
            raise FormatError(f"missing {key!r} record")
    if len(rows) != int(header["points"][0]):
        raise FormatError("point count does not match header")
    if not rows:
        raise EmptyInputError(f"{path}: skeleton has no points")
    a = np.array(rows)
    return SkeletalPointSet(a[:, :3].astype(np.int64), a[:, 3], a[:, 4],
                            float(header["spacing"][0]), [float(x) for x in header["origin"]],
                            [int(x) for x in header["dims"]])
