"""Synthetic watertight test solids.

Parametric meshes (box, sphere, cylinder, torus, swept tube, extruded
polygon) are built directly; composite solids (dumbbell, cylinder with a
handle) are extracted from signed distance functions with marching cubes.
Every solid also exposes an exact inside test usable as a ground truth.
"""

from __future__ import annotations

import numpy as np
from skimage import measure

from .voxelio import TriangleMesh


def box_mesh(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)):
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    v = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], float)
    v = lo + v * (hi - lo)
    # vertex index = 4x + 2y + z
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    tris = []
    for a, b, c, d in quads:
        tris += [(a, b, c), (a, c, d)]
    return TriangleMesh(v, tris)


def icosphere(radius=1.0, subdivisions=3, center=(0.0, 0.0, 0.0)):
    t = (1.0 + 5 ** 0.5) / 2.0
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        f = nf
    return TriangleMesh(np.array(verts) * radius + np.asarray(center, float), f)


def _rings_to_tris(n_rings, n_theta, offset=0):
    tris = []
    for r in range(n_rings - 1):
        for k in range(n_theta):
            a = offset + r * n_theta + k
            b = offset + r * n_theta + (k + 1) % n_theta
            c = a + n_theta
            d = b + n_theta
            tris += [(a, b, d), (a, d, c)]
    return tris


def _cap(center_index, ring_start, n_theta, flip):
    tris = []
    for k in range(n_theta):
        a = ring_start + k
        b = ring_start + (k + 1) % n_theta
        tris.append((center_index, b, a) if not flip else (center_index, a, b))
    return tris


def cylinder_mesh(radius=1.0, length=4.0, n_theta=24, n_len=33, n_cap=4):
    """Capped cylinder along z, centered at the origin.

    Wall vertex ``(ring, k)`` sits at angle ``2 pi k / n_theta``; with even
    ``n_theta`` vertex ``k + n_theta / 2`` is diametrically opposite ``k``.
    """
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    zs = np.linspace(-length / 2, length / 2, n_len)
    rings = []
    # bottom cap rings (inner to outer), wall, top cap rings (outer to inner)
    cap_r = radius * np.arange(1, n_cap) / n_cap
    for rr in cap_r:
        rings.append((rr, zs[0]))
    for z in zs:
        rings.append((radius, z))
    for rr in cap_r[::-1]:
        rings.append((rr, zs[-1]))
    v = [[rr * np.cos(th), rr * np.sin(th), z] for rr, z in rings for th in theta]
    v.append([0.0, 0.0, zs[0]])
    v.append([0.0, 0.0, zs[-1]])
    v = np.array(v)
    n_r = len(rings)
    tris = _rings_to_tris(n_r, n_theta)
    bottom, top = len(v) - 2, len(v) - 1
    tris += _cap(bottom, 0, n_theta, flip=False)
    tris += _cap(top, (n_r - 1) * n_theta, n_theta, flip=True)
    mesh = TriangleMesh(v, tris)
    return _orient_outward(mesh)


def cylinder_wall_index(n_theta, n_len, n_cap, ring, k):
    """Vertex index of wall ring ``ring`` (0..n_len-1), angle slot ``k``."""
    return (n_cap - 1 + ring) * n_theta + (k % n_theta)


def torus_mesh(major=2.0, minor=0.75, n_u=48, n_v=24):
    u = 2 * np.pi * np.arange(n_u) / n_u
    w = 2 * np.pi * np.arange(n_v) / n_v
    uu, ww = np.meshgrid(u, w, indexing="ij")
    x = (major + minor * np.cos(ww)) * np.cos(uu)
    y = (major + minor * np.cos(ww)) * np.sin(uu)
    z = minor * np.sin(ww)
    v = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    tris = []
    for i in range(n_u):
        for j in range(n_v):
            a = i * n_v + j
            b = i * n_v + (j + 1) % n_v
            c = ((i + 1) % n_u) * n_v + j
            d = ((i + 1) % n_u) * n_v + (j + 1) % n_v
            tris += [(a, c, d), (a, d, b)]
    return _orient_outward(TriangleMesh(v, tris))


def extrude_polygon(poly, height, fan_from=0):
    """Prism over a simple polygon, fan-triangulated from ``fan_from``.

    The fan vertex must see every other polygon vertex.
    """
    poly = np.asarray(poly, float)
    m = len(poly)
    order = [(fan_from + i) % m for i in range(m)]
    v = np.vstack([np.c_[poly, np.zeros(m)], np.c_[poly, np.full(m, height)]])
    tris = []
    for i in range(1, m - 1):
        a, b, c = order[0], order[i], order[i + 1]
        tris.append((a, c, b))
        tris.append((a + m, b + m, c + m))
    for i in range(m):
        j = (i + 1) % m
        tris += [(i, j, j + m), (i, j + m, i + m)]
    return _orient_outward(TriangleMesh(v, tris))


def l_solid_mesh(size=1.0, arm=0.4, depth=0.4):
    s, a = size, arm
    poly = [(0, 0), (s, 0), (s, a), (a, a), (a, s), (0, s)]
    # (a, a) is the reflex corner and sees every other vertex
    return extrude_polygon(np.array(poly) , depth, fan_from=3)


def _orient_outward(mesh):
    # flip all faces if the signed volume is negative
    v, t = mesh.vertices, mesh.triangles
    vol = np.einsum("ij,ij->i", v[t[:, 0]], np.cross(v[t[:, 1]], v[t[:, 2]])).sum() / 6.0
    if vol < 0:
        mesh.triangles = t[:, ::-1].copy()
    return mesh


def _frames(points):
    # rotation-minimizing frames along a polyline
    tangents = np.gradient(points, axis=0)
    tangents /= np.linalg.norm(tangents, axis=1, keepdims=True)
    ref = np.array([0.0, 0.0, 1.0])
    if abs(tangents[0] @ ref) > 0.9:
        ref = np.array([0.0, 1.0, 0.0])
    normals = np.empty_like(points)
    n = ref - (ref @ tangents[0]) * tangents[0]
    normals[0] = n / np.linalg.norm(n)
    for i in range(1, len(points)):
        n = normals[i - 1] - (normals[i - 1] @ tangents[i]) * tangents[i]
        normals[i] = n / np.linalg.norm(n)
    binormals = np.cross(tangents, normals)
    return tangents, normals, binormals


def bent_centerline(length, n_stations, bend_at, bend_angle, bend_radius):
    """Centerline of a tube in the xy plane, straight except for one circular bend.

    Stations are equally spaced in arclength, so two calls with different
    ``bend_angle`` give isometric parametrizations.
    """
    s = np.linspace(0.0, length, n_stations)
    arc = abs(bend_angle) * bend_radius
    pts = np.zeros((n_stations, 3))
    sign = 1.0 if bend_angle >= 0 else -1.0
    for i, si in enumerate(s):
        if si <= bend_at or arc == 0.0:
            pts[i] = (si, 0.0, 0.0)
        elif si <= bend_at + arc:
            phi = (si - bend_at) / bend_radius
            pts[i] = (bend_at + bend_radius * np.sin(phi),
                      sign * bend_radius * (1 - np.cos(phi)), 0.0)
        else:
            phi = abs(bend_angle)
            base = np.array([bend_at + bend_radius * np.sin(phi),
                             sign * bend_radius * (1 - np.cos(phi)), 0.0])
            d = np.array([np.cos(phi), sign * np.sin(phi), 0.0])
            pts[i] = base + (si - bend_at - arc) * d
    return pts


def tube_mesh(centerline, radii, n_theta=16, n_cap=4):
    """Swept circular tube with hemispherical end caps.

    Vertex order depends only on the station/angle parametrization, so tubes
    swept along isometric centerlines share a vertex correspondence.
    """
    centerline = np.asarray(centerline, float)
    radii = np.broadcast_to(np.asarray(radii, float), (len(centerline),))
    tan, nor, bin_ = _frames(centerline)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    ct, st = np.cos(theta), np.sin(theta)
    rings = []
    # start cap: polar angle from the tip inwards
    for j in range(1, n_cap):
        phi = 0.5 * np.pi * j / n_cap
        r = radii[0] * np.sin(phi)
        c = centerline[0] - tan[0] * radii[0] * np.cos(phi)
        rings.append(c + r * (np.outer(ct, nor[0]) + np.outer(st, bin_[0])))
    for i in range(len(centerline)):
        rings.append(centerline[i] + radii[i] * (np.outer(ct, nor[i]) + np.outer(st, bin_[i])))
    for j in range(n_cap - 1, 0, -1):
        phi = 0.5 * np.pi * j / n_cap
        r = radii[-1] * np.sin(phi)
        c = centerline[-1] + tan[-1] * radii[-1] * np.cos(phi)
        rings.append(c + r * (np.outer(ct, nor[-1]) + np.outer(st, bin_[-1])))
    v = np.vstack(rings + [centerline[0] - tan[0] * radii[0], centerline[-1] + tan[-1] * radii[-1]])
    n_r = len(rings)
    tris = _rings_to_tris(n_r, n_theta)
    tris += _cap(len(v) - 2, 0, n_theta, flip=False)
    tris += _cap(len(v) - 1, (n_r - 1) * n_theta, n_theta, flip=True)
    return _orient_outward(TriangleMesh(v, tris))


def sdf_mesh(sdf, lo, hi, n=64):
    """Marching-cubes surface of ``{sdf < 0}`` sampled on an ``n``-per-axis lattice."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    step = (hi - lo).max() / (n - 1)
    counts = np.ceil((hi - lo) / step).astype(int) + 3
    start = lo - step
    axes = [start[d] + step * np.arange(counts[d]) for d in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vol = sdf(pts.reshape(-1, 3)).reshape(pts.shape[:3])
    # keep samples off the iso level so no vertex lands exactly on a sample
    vol[vol == 0.0] = 1e-12
    verts, faces, _, _ = measure.marching_cubes(vol, level=0.0, spacing=(step, step, step))
    verts = verts + start
    return _orient_outward(TriangleMesh(verts, faces))


def sd_ball(p, center, radius):
    return np.linalg.norm(p - np.asarray(center, float), axis=-1) - radius


def sd_capsule(p, a, b, radius):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=-1) - radius


def sd_cylinder_z(p, radius, z0, z1, center=(0.0, 0.0)):
    q = np.stack([np.hypot(p[:, 0] - center[0], p[:, 1] - center[1]) - radius,
                  np.maximum(z0 - p[:, 2], p[:, 2] - z1)], axis=-1)
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(q.max(axis=-1), 0.0)
    return outside + inside


def sd_torus(p, major, minor, center=(0.0, 0.0, 0.0), axis="z"):
    q = p - np.asarray(center, float)
    if axis == "y":
        q = q[:, [0, 2, 1]]
    elif axis == "x":
        q = q[:, [1, 2, 0]]
    ring = np.hypot(q[:, 0], q[:, 1]) - major
    return np.hypot(ring, q[:, 2]) - minor


class Dumbbell:
    """Two balls joined by a thin cylindrical bar along x."""

    def __init__(self, ball_radius=1.0, separation=4.0, bar_radius=0.35):
        self.ball_radius = ball_radius
        self.separation = separation
        self.bar_radius = bar_radius
        self.c0 = np.array([-separation / 2, 0.0, 0.0])
        self.c1 = np.array([separation / 2, 0.0, 0.0])

    def parts(self, p):
        return np.stack([sd_ball(p, self.c0, self.ball_radius),
                         sd_capsule(p, self.c0, self.c1, self.bar_radius),
                         sd_ball(p, self.c1, self.ball_radius)], axis=-1)

    def sdf(self, p):
        return self.parts(p).min(axis=-1)

    def labels(self, p):
        """0 / 2 for the balls, 1 for the bar; points are assigned to the nearest part surface."""
        return np.argmin(np.abs(self.parts(p)), axis=-1)

    def mesh(self, n=64):
        r = self.ball_radius
        lo = self.c0 - r
        hi = self.c1 + r
        return sdf_mesh(self.sdf, lo, hi, n)


class CylinderWithHandle:
    """Mug-like solid: vertical capped cylinder plus a torus handle on its +x side."""

    def __init__(self, radius=1.0, height=3.0, handle_major=0.8, handle_minor=0.22):
        self.radius = radius
        self.height = height
        self.handle_major = handle_major
        self.handle_minor = handle_minor
        self.handle_center = np.array([radius + 0.25, 0.0, 0.0])

    def parts(self, p):
        return np.stack([sd_cylinder_z(p, self.radius, -self.height / 2, self.height / 2),
                         sd_torus(p, self.handle_major, self.handle_minor,
                                  self.handle_center, axis="y")], axis=-1)

    def sdf(self, p):
        return self.parts(p).min(axis=-1)

    def labels(self, p):
        d = self.parts(p)
        # handle owns only the part sticking out of the body
        return ((d[:, 0] > 1e-9) & (np.abs(d[:, 1]) < np.abs(d[:, 0]))).astype(int)

    def mesh(self, n=64):
        reach = self.handle_center[0] + self.handle_major + self.handle_minor
        lo = np.array([-self.radius, -self.radius, -self.height / 2 - 0.1])
        hi = np.array([reach, self.radius, self.height / 2 + 0.1])
        return sdf_mesh(self.sdf, lo, hi, n)


class LumpySolid:
    """Blend of unequal balls and a capsule with no rigid or mirror symmetry."""

    def __init__(self, smooth=0.25):
        self.smooth = smooth
        self.balls = [((0.0, 0.0, 0.0), 1.0), ((1.3, 0.4, 0.2), 0.7),
                      ((-0.5, 1.1, -0.3), 0.55), ((0.2, -0.6, 0.9), 0.45)]
        self.capsule = ((-0.4, -0.3, -0.2), (-1.9, -0.9, -0.8), 0.3)

    def sdf(self, p):
        d = [sd_ball(p, c, r) for c, r in self.balls] + [sd_capsule(p, *self.capsule)]
        k = self.smooth
        out = d[0]
        for e in d[1:]:
            # polynomial smooth minimum
            h = np.clip(0.5 + 0.5 * (e - out) / k, 0.0, 1.0)
            out = e * (1 - h) + out * h - k * h * (1 - h)
        return out

    def mesh(self, n=40):
        return sdf_mesh(self.sdf, (-2.3, -1.3, -1.2), (2.1, 1.8, 1.45), n)
