"""Brute-force topological counters for voxel sets.

The Euler characteristic is that of the cubical complex formed by the union
of closed unit cubes, which matches 26-connectivity of the object.
"""

import numpy as np
from scipy import ndimage


def _any_shift(occ, axes):
    # closure cell present if any incident cube is occupied; ``axes`` lists the
    # axes along which the cell is shared by two cubes
    p = np.pad(occ, 1)
    out = np.zeros(tuple(s + 1 if a in axes else s for a, s in enumerate(occ.shape)), bool)
    n = occ.shape
    for bits in np.ndindex(*(2,) * len(axes)):
        sl = []
        for a in range(3):
            if a in axes:
                shift = bits[axes.index(a)]
                sl.append(slice(shift, shift + n[a] + 1))
            else:
                sl.append(slice(1, 1 + n[a]))
        out |= p[tuple(sl)]
    return out


def euler_characteristic(occ):
    occ = np.asarray(occ, dtype=bool)
    cubes = int(occ.sum())
    faces = sum(int(_any_shift(occ, [a]).sum()) for a in range(3))
    edges = sum(int(_any_shift(occ, [a for a in range(3) if a != b]).sum()) for b in range(3))
    verts = int(_any_shift(occ, [0, 1, 2]).sum())
    return verts - edges + faces - cubes


def n_components(occ, connectivity=26):
    structure = {26: np.ones((3, 3, 3), bool), 6: ndimage.generate_binary_structure(3, 1)}
    _, n = ndimage.label(np.asarray(occ, bool), structure=structure[connectivity])
    return int(n)
