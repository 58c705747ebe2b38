"""Topology preserving thinning ordered by average outward flux.

Simple points use the 26-object / 6-background connectivity pair. Local
tests work on the 27 cells of the 3x3x3 block around a voxel, indexed
``(dx + 1) * 9 + (dy + 1) * 3 + (dz + 1)`` so the center is cell 13.
"""

from __future__ import annotations

import numba
import numpy as np

from ..errors import EmptyInputError, PreconditionError

CENTER = 13
_OFFS = np.array([(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)])


def _adjacency(cells, max_manhattan, max_cheb=1):
    adj = -np.ones((27, 26), dtype=np.int64)
    for a in cells:
        row = []
        for b in cells:
            if a == b:
                continue
            d = np.abs(_OFFS[a] - _OFFS[b])
            if d.max() <= max_cheb and d.sum() <= max_manhattan:
                row.append(b)
        adj[a, :len(row)] = row
    return adj


_N26 = [c for c in range(27) if c != CENTER]
_N18 = [c for c in range(27) if c != CENTER and np.abs(_OFFS[c]).sum() <= 2]
_N6 = np.array([c for c in range(27) if np.abs(_OFFS[c]).sum() == 1], dtype=np.int64)
ADJ26 = _adjacency(_N26, 3)
ADJ6_N18 = _adjacency(_N18, 1)
IN_N18 = np.array([c in _N18 for c in range(27)])


def _plane_rings():
    # the nine 3x3 planar cross-sections through the center, each as a ring of
    # 8 cells in angular order
    bases = [((0, 1, 0), (0, 0, 1)), ((1, 0, 0), (0, 0, 1)), ((1, 0, 0), (0, 1, 0)),
             ((1, 1, 0), (0, 0, 1)), ((1, -1, 0), (0, 0, 1)),
             ((1, 0, 1), (0, 1, 0)), ((1, 0, -1), (0, 1, 0)),
             ((0, 1, 1), (1, 0, 0)), ((0, 1, -1), (1, 0, 0))]
    ring2d = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]
    rings = np.empty((9, 8), dtype=np.int64)
    for p, (e1, e2) in enumerate(bases):
        for s, (a, b) in enumerate(ring2d):
            off = a * np.array(e1) + b * np.array(e2)
            rings[p, s] = (off[0] + 1) * 9 + (off[1] + 1) * 3 + (off[2] + 1)
    return rings


PLANE_RINGS = _plane_rings()


def _half_plane_masks():
    # occupied ring positions fit in an open half plane through the center iff
    # they lie within 4 cyclically consecutive slots (45 degree steps)
    ok = np.zeros(256, dtype=np.bool_)
    for mask in range(1, 256):
        for start in range(8):
            window = 0
            for t in range(4):
                window |= 1 << ((start + t) % 8)
            if mask & ~window == 0:
                ok[mask] = True
                break
    return ok


HALF_PLANE_OK = _half_plane_masks()


@numba.njit(cache=True)
def _components(cells_on, adj, seeds_mask, stack, label):
    # count components of the cells flagged in cells_on; if seeds_mask is
    # given, count only components touching a seed cell
    for c in range(27):
        label[c] = -1
    count = 0
    for c in range(27):
        if not cells_on[c] or label[c] >= 0:
            continue
        top = 0
        stack[top] = c
        top += 1
        label[c] = count
        touches = seeds_mask[c]
        while top > 0:
            top -= 1
            a = stack[top]
            for t in range(26):
                b = adj[a, t]
                if b < 0:
                    break
                if cells_on[b] and label[b] < 0:
                    label[b] = count
                    touches = touches or seeds_mask[b]
                    stack[top] = b
                    top += 1
        if touches:
            count += 1
    return count


@numba.njit(cache=True)
def _gather(occ, i, j, k, nb):
    t = 0
    for dx in range(-1, 2):
        for dy in range(-1, 2):
            for dz in range(-1, 2):
                nb[t] = occ[i + dx, j + dy, k + dz]
                t += 1


@numba.njit(cache=True)
def _simple_nb(nb, adj26, adj6, in_n18, n6):
    stack = np.empty(27, dtype=np.int64)
    label = np.empty(27, dtype=np.int64)
    on = np.zeros(27, dtype=np.bool_)
    seeds = np.ones(27, dtype=np.bool_)
    for c in range(27):
        on[c] = nb[c] and c != 13
    if _components(on, adj26, seeds, stack, label) != 1:
        return False
    has_bg6 = False
    for t in range(6):
        if not nb[n6[t]]:
            has_bg6 = True
    if not has_bg6:
        return False
    seeds[:] = False
    for t in range(6):
        seeds[n6[t]] = True
    for c in range(27):
        on[c] = (not nb[c]) and in_n18[c]
    return _components(on, adj6, seeds, stack, label) == 1


@numba.njit(cache=True)
def _endpoint_nb(nb, rings, half_ok):
    count = 0
    for c in range(27):
        if c != 13 and nb[c]:
            count += 1
    if count == 1:
        return True
    for p in range(9):
        mask = 0
        for s in range(8):
            if nb[rings[p, s]]:
                mask |= 1 << s
        if half_ok[mask]:
            return True
    return False


def _check_voxel(occ, p):
    p = tuple(int(x) for x in p)
    if not occ[p]:
        raise PreconditionError(f"voxel {p} is not occupied")
    if min(p) < 1 or any(p[a] >= occ.shape[a] - 1 for a in range(3)):
        # pad so the 3x3x3 block exists
        occ = np.pad(occ, 1)
        p = tuple(x + 1 for x in p)
    nb = np.empty(27, dtype=np.bool_)
    _gather(occ.astype(np.bool_), p[0], p[1], p[2], nb)
    return nb


def is_simple(grid, p) -> bool:
    """True iff removing occupied voxel ``p`` preserves topology (26/6)."""
    occ = getattr(grid, "occupancy", grid)
    nb = _check_voxel(np.asarray(occ, dtype=bool), p)
    return bool(_simple_nb(nb, ADJ26, ADJ6_N18, IN_N18, _N6))


def is_endpoint(grid, p) -> bool:
    """Curve end (single 26-neighbor) or rim/corner voxel of a digital surface.

    Rim test: in one of the nine 3x3 planar cross-sections through ``p`` the
    occupied in-plane neighbors are nonempty and lie in an open half plane,
    i.e. the planar curve ends at ``p``.
    """
    occ = getattr(grid, "occupancy", grid)
    nb = _check_voxel(np.asarray(occ, dtype=bool), p)
    return bool(_endpoint_nb(nb, PLANE_RINGS, HALF_PLANE_OK))


@numba.njit(cache=True)
def _less(ka, da, ia, kb, db, ib):
    if ka != kb:
        return ka < kb
    if da != db:
        return da < db
    return ia < ib


@numba.njit(cache=True)
def _push(hk, hd, hi, size, k, d, idx):
    pos = size
    hk[pos] = k
    hd[pos] = d
    hi[pos] = idx
    while pos > 0:
        parent = (pos - 1) // 2
        if _less(hk[pos], hd[pos], hi[pos], hk[parent], hd[parent], hi[parent]):
            hk[pos], hk[parent] = hk[parent], hk[pos]
            hd[pos], hd[parent] = hd[parent], hd[pos]
            hi[pos], hi[parent] = hi[parent], hi[pos]
            pos = parent
        else:
            break
    return size + 1


@numba.njit(cache=True)
def _pop(hk, hd, hi, size):
    top = hi[0]
    size -= 1
    hk[0] = hk[size]
    hd[0] = hd[size]
    hi[0] = hi[size]
    pos = 0
    while True:
        left = 2 * pos + 1
        right = left + 1
        best = pos
        if left < size and _less(hk[left], hd[left], hi[left], hk[best], hd[best], hi[best]):
            best = left
        if right < size and _less(hk[right], hd[right], hi[right], hk[best], hd[best], hi[best]):
            best = right
        if best == pos:
            break
        hk[pos], hk[best] = hk[best], hk[pos]
        hd[pos], hd[best] = hd[best], hd[pos]
        hi[pos], hi[best] = hi[best], hi[pos]
        pos = best
    return top, size


@numba.njit(cache=True)
def _on_boundary(occ, i, j, k):
    return not (occ[i - 1, j, k] and occ[i + 1, j, k] and occ[i, j - 1, k]
                and occ[i, j + 1, k] and occ[i, j, k - 1] and occ[i, j, k + 1])


@numba.njit(cache=True)
def _thin_kernel(occ, strength, dist, tau, adj26, adj6, in_n18, n6, rings, half_ok):
    nx, ny, nz = occ.shape
    cap = 0
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if occ[i, j, k]:
                    cap += 1
    hk = np.empty(cap)
    hd = np.empty(cap)
    hi = np.empty(cap, dtype=np.int64)
    inheap = np.zeros((nx, ny, nz), dtype=np.bool_)
    frozen = np.zeros((nx, ny, nz), dtype=np.bool_)
    nb = np.empty(27, dtype=np.bool_)
    size = 0
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            for k in range(1, nz - 1):
                if occ[i, j, k] and _on_boundary(occ, i, j, k):
                    _gather(occ, i, j, k, nb)
                    if _simple_nb(nb, adj26, adj6, in_n18, n6):
                        size = _push(hk, hd, hi, size, strength[i, j, k], dist[i, j, k],
                                     (i * ny + j) * nz + k)
                        inheap[i, j, k] = True
    removed = 0
    while size > 0:
        idx, size = _pop(hk, hd, hi, size)
        i = idx // (ny * nz)
        j = (idx // nz) % ny
        k = idx % nz
        inheap[i, j, k] = False
        if not occ[i, j, k] or frozen[i, j, k]:
            continue
        _gather(occ, i, j, k, nb)
        if _simple_nb(nb, adj26, adj6, in_n18, n6):
            if strength[i, j, k] > tau and _endpoint_nb(nb, rings, half_ok):
                frozen[i, j, k] = True
            else:
                occ[i, j, k] = False
                removed += 1
        for dx in range(-1, 2):
            for dy in range(-1, 2):
                for dz in range(-1, 2):
                    a = i + dx
                    b = j + dy
                    c = k + dz
                    if not occ[a, b, c] or frozen[a, b, c] or inheap[a, b, c]:
                        continue
                    if not _on_boundary(occ, a, b, c):
                        continue
                    _gather(occ, a, b, c, nb)
                    if _simple_nb(nb, adj26, adj6, in_n18, n6):
                        size = _push(hk, hd, hi, size, strength[a, b, c], dist[a, b, c],
                                     (a * ny + b) * nz + c)
                        inheap[a, b, c] = True
    return occ, frozen, removed


def thin_mask(occupancy, strength, dist, tau):
    """Run the heap-ordered thinning; returns (remaining mask, frozen endpoints mask).

    Voxels are extracted in increasing medial ``strength`` (ties: smaller
    ``dist``, then lexicographic index). A simple voxel is removed unless it is
    an endpoint with strength above ``tau``, in which case it is frozen.
    """
    occ = np.ascontiguousarray(occupancy, dtype=np.bool_).copy()
    if not occ.any():
        raise EmptyInputError("grid has no occupied voxel")
    if occ[0].any() or occ[-1].any() or occ[:, 0].any() or occ[:, -1].any() \
            or occ[:, :, 0].any() or occ[:, :, -1].any():
        raise PreconditionError("occupied voxels touch the grid border; pad the grid")
    strength = np.ascontiguousarray(strength, dtype=np.float64)
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    out, frozen, _ = _thin_kernel(occ, strength, dist, float(tau), ADJ26, ADJ6_N18, IN_N18,
                                  _N6, PLANE_RINGS, HALF_PLANE_OK)
    return out, frozen
