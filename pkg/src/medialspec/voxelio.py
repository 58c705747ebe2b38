"""Mesh and voxel-grid I/O and solid voxelization.

Meshes are read from ASCII OFF, OBJ and PLY. Voxelization fills the interior
of a watertight mesh by parity counting of ray/triangle crossings along the
z axis of every voxel column.

Grid convention: ``origin`` is the *center* of voxel ``(0, 0, 0)`` and voxel
``(i, j, k)`` has center ``origin + spacing * (i, j, k)``.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import EmptyInputError, FormatError, ShapeError, VoxelizationError

logger = logging.getLogger(__name__)

PADDING = 2
DEFAULT_RESOLUTION = 128


@dataclass
class TriangleMesh:
    """Triangle mesh with optional per-vertex scalar channels.

    Parameters
    ----------
    vertices : (n, 3) float array
    triangles : (m, 3) int array of vertex indices
    channels : dict of name -> (n,) float array
    """

    vertices: np.ndarray
    triangles: np.ndarray
    channels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        n = len(self.vertices)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= n):
            raise FormatError(f"triangle index out of range for {n} vertices")
        for name, values in list(self.channels.items()):
            values = np.asarray(values, dtype=np.float64)
            if values.shape != (n,):
                raise ShapeError(f"channel {name!r} has shape {values.shape}, expected ({n},)")
            self.channels[name] = values

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def edges(self):
        """Unique undirected edges as a sorted (e, 2) array."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    @property
    def watertight(self):
        if self.n_triangles == 0:
            return False
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    def triangle_areas(self):
        v = self.vertices
        t = self.triangles
        cr = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        return 0.5 * np.linalg.norm(cr, axis=1)

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def transformed(self, rotation=None, translation=None, scale=1.0):
        v = self.vertices * scale
        if rotation is not None:
            v = v @ np.asarray(rotation).T
        if translation is not None:
            v = v + np.asarray(translation)
        return TriangleMesh(v, self.triangles.copy(), dict(self.channels))


def _clean(vertices, triangles, channels=None):
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if len(vertices) == 0 or len(triangles) == 0:
        raise EmptyInputError("mesh has no vertices or no faces")
    mesh = TriangleMesh(vertices, triangles, channels or {})
    t = mesh.triangles
    repeated = (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
    keep = ~repeated & (mesh.triangle_areas() > 0.0)
    if not keep.all():
        logger.info("dropping %d degenerate triangles", int((~keep).sum()))
        mesh.triangles = t[keep]
    if mesh.n_triangles == 0:
        raise EmptyInputError("mesh has no non-degenerate faces")
    return mesh


def _fan(poly):
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def _data_lines(path):
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


def _read_off(path):
    lines = _data_lines(path)
    try:
        lineno, head = next(lines)
    except StopIteration:
        raise EmptyInputError(f"{path}: empty file") from None
    tokens = head.split()
    if not tokens[0].endswith("OFF"):
        raise FormatError("missing OFF header", lineno)
    tokens = tokens[1:]
    if not tokens:
        try:
            lineno, head = next(lines)
        except StopIteration:
            raise FormatError("missing OFF counts", lineno) from None
        tokens = head.split()
    try:
        nv, nf = int(tokens[0]), int(tokens[1])
    except (ValueError, IndexError):
        raise FormatError("bad OFF counts", lineno) from None
    verts, tris = [], []
    for _ in range(nv):
        try:
            lineno, line = next(lines)
            verts.append([float(x) for x in line.split()[:3]])
        except StopIteration:
            raise FormatError("unexpected end of file in vertex block", lineno) from None
        except ValueError:
            raise FormatError("bad vertex coordinates", lineno) from None
        if len(verts[-1]) != 3:
            raise FormatError("vertex needs 3 coordinates", lineno)
    for _ in range(nf):
        try:
            lineno, line = next(lines)
            vals = [int(x) for x in line.split()]
        except StopIteration:
            raise FormatError("unexpected end of file in face block", lineno) from None
        except ValueError:
            raise FormatError("bad face indices", lineno) from None
        if not vals or len(vals) < vals[0] + 1 or vals[0] < 3:
            raise FormatError("malformed face", lineno)
        poly = vals[1:vals[0] + 1]
        if min(poly) < 0 or max(poly) >= nv:
            raise FormatError(f"face index out of range for {nv} vertices", lineno)
        tris.extend(_fan(poly))
    return _clean(np.array(verts, dtype=float).reshape(-1, 3), tris)


def _read_obj(path):
    verts, tris = [], []
    for lineno, line in _data_lines(path):
        tokens = line.split()
        if tokens[0] == "v":
            try:
                verts.append([float(x) for x in tokens[1:4]])
            except ValueError:
                raise FormatError("bad vertex coordinates", lineno) from None
            if len(verts[-1]) != 3:
                raise FormatError("vertex needs 3 coordinates", lineno)
        elif tokens[0] == "f":
            poly = []
            for tok in tokens[1:]:
                try:
                    idx = int(tok.split("/")[0])
                except ValueError:
                    raise FormatError(f"bad face token {tok!r}", lineno) from None
                idx = idx - 1 if idx > 0 else len(verts) + idx
                if idx < 0 or idx >= len(verts):
                    raise FormatError(
                        f"face references vertex {tok.split('/')[0]} of {len(verts)}", lineno)
                poly.append(idx)
            if len(poly) < 3:
                raise FormatError("face needs at least 3 vertices", lineno)
            tris.extend(_fan(poly))
    return _clean(np.array(verts, dtype=float).reshape(-1, 3), tris)


def _read_ply(path):
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FormatError("missing ply magic", 1)
    elements = []  # (name, count, [(prop, is_list)])
    body_start = None
    for i, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            if tokens[1] != "ascii":
                raise FormatError("only ASCII PLY is supported", i)
        elif tokens[0] == "element":
            elements.append((tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property":
            if not elements:
                raise FormatError("property before element", i)
            is_list = tokens[1] == "list"
            elements[-1][2].append((tokens[-1], is_list))
        elif tokens[0] == "end_header":
            body_start = i
            break
        else:
            raise FormatError(f"unexpected header token {tokens[0]!r}", i)
    if body_start is None:
        raise FormatError("missing end_header", len(lines))
    row = body_start
    verts, tris, channels = None, [], {}
    for name, count, props in elements:
        if name == "vertex":
            names = [p for p, _ in props]
            data = np.empty((count, len(names)))
            for j in range(count):
                if row >= len(lines):
                    raise FormatError("unexpected end of file in vertex block", row)
                try:
                    data[j] = [float(x) for x in lines[row].split()[:len(names)]]
                except ValueError:
                    raise FormatError("bad vertex record", row + 1) from None
                row += 1
            try:
                verts = data[:, [names.index("x"), names.index("y"), names.index("z")]]
            except ValueError:
                raise FormatError("vertex element lacks x/y/z", body_start) from None
            for k, nm in enumerate(names):
                if nm not in ("x", "y", "z"):
                    channels[nm] = data[:, k].copy()
        elif name == "face":
            nv = 0 if verts is None else len(verts)
            for _ in range(count):
                if row >= len(lines):
                    raise FormatError("unexpected end of file in face block", row)
                try:
                    vals = [int(x) for x in lines[row].split()]
                except ValueError:
                    raise FormatError("bad face record", row + 1) from None
                poly = vals[1:vals[0] + 1] if vals else []
                if len(poly) < 3 or len(poly) != vals[0]:
                    raise FormatError("malformed face", row + 1)
                if min(poly) < 0 or max(poly) >= nv:
                    raise FormatError(f"face index out of range for {nv} vertices", row + 1)
                tris.extend(_fan(poly))
                row += 1
        else:
            row += count
    if verts is None:
        raise EmptyInputError(f"{path}: no vertex element")
    return _clean(verts, tris, channels)


def load_mesh(path) -> TriangleMesh:
    """Read an ASCII OFF, OBJ or PLY mesh.

    Vertex order is preserved so that external per-vertex label files stay
    index aligned; only zero-area faces are dropped.
    """
    ext = os.path.splitext(str(path))[1].lower()
    readers = {".off": _read_off, ".obj": _read_obj, ".ply": _read_ply}
    if ext not in readers:
        raise FormatError(f"unsupported mesh extension {ext!r}")
    return readers[ext](path)


def export_mesh_scalars(mesh: TriangleMesh, channels, path):
    """Write ``mesh`` as ASCII PLY with one float property per channel."""
    channels = dict(channels or {})
    n = mesh.n_vertices
    cols = [mesh.vertices]
    for name, values in channels.items():
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (n,):
            raise ShapeError(f"channel {name!r} has shape {values.shape}, expected ({n},)")
        cols.append(values[:, None])
    table = np.hstack(cols)
    header = ["ply", "format ascii 1.0", f"element vertex {n}",
              "property double x", "property double y", "property double z"]
    header += [f"property double {name}" for name in channels]
    header += [f"element face {mesh.n_triangles}",
               "property list uchar int vertex_indices", "end_header"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(header) + "\n")
        np.savetxt(fh, table, fmt="%.17g")
        np.savetxt(fh, np.hstack([np.full((mesh.n_triangles, 1), 3), mesh.triangles]), fmt="%d")
    return path


@dataclass
class VoxelGrid:
    """Dense binary occupancy lattice. ``occupancy`` is indexed ``[i, j, k]``."""

    occupancy: np.ndarray
    spacing: float
    origin: np.ndarray

    def __post_init__(self):
        self.occupancy = np.ascontiguousarray(self.occupancy, dtype=bool)
        if self.occupancy.ndim != 3:
            raise ShapeError("occupancy must be a 3D array")
        self.spacing = float(self.spacing)
        if not self.spacing > 0:
            raise ShapeError("spacing must be positive")
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)

    @property
    def dims(self):
        return tuple(int(s) for s in self.occupancy.shape)

    @property
    def count(self):
        return int(self.occupancy.sum())

    def same_geometry(self, other):
        return (self.dims == other.dims and self.spacing == other.spacing
                and np.array_equal(self.origin, other.origin))

    def with_occupancy(self, occupancy):
        return VoxelGrid(occupancy, self.spacing, self.origin.copy())

    def center(self, index):
        return self.origin + self.spacing * np.asarray(index, dtype=np.float64)

    def occupied_centers(self):
        return self.center(np.argwhere(self.occupancy))


@numba.njit(cache=True)
def _column_crossings(v, tris, nx, ny, x0, y0, h, eps_x, eps_y):
    # first pass counts hits per column, second pass stores them
    counts = np.zeros(nx * ny, dtype=np.int64)
    offsets = np.zeros(nx * ny + 1, dtype=np.int64)
    hits = np.empty(0)
    fill = np.zeros(nx * ny, dtype=np.int64)
    for pass_ in range(2):
        if pass_ == 1:
            for c in range(nx * ny):
                offsets[c + 1] = offsets[c] + counts[c]
            hits = np.empty(offsets[-1])
            fill[:] = offsets[:-1]
        for t in range(tris.shape[0]):
            a = v[tris[t, 0]]
            b = v[tris[t, 1]]
            c = v[tris[t, 2]]
            xmin = min(a[0], b[0], c[0])
            xmax = max(a[0], b[0], c[0])
            ymin = min(a[1], b[1], c[1])
            ymax = max(a[1], b[1], c[1])
            i0 = max(0, int(math.ceil((xmin - x0 - eps_x) / h)))
            i1 = min(nx - 1, int(math.floor((xmax - x0 - eps_x) / h)))
            j0 = max(0, int(math.ceil((ymin - y0 - eps_y) / h)))
            j1 = min(ny - 1, int(math.floor((ymax - y0 - eps_y) / h)))
            det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
            if det == 0.0:
                continue
            for i in range(i0, i1 + 1):
                px = x0 + i * h + eps_x
                for j in range(j0, j1 + 1):
                    py = y0 + j * h + eps_y
                    w1 = ((px - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (py - a[1])) / det
                    w2 = ((b[0] - a[0]) * (py - a[1]) - (px - a[0]) * (b[1] - a[1])) / det
                    w0 = 1.0 - w1 - w2
                    if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                        continue
                    col = i * ny + j
                    if pass_ == 0:
                        counts[col] += 1
                    else:
                        hits[fill[col]] = w0 * a[2] + w1 * b[2] + w2 * c[2]
                        fill[col] += 1
    return offsets, hits


@numba.njit(cache=True)
def _parity_fill(offsets, hits, nx, ny, nz, z0, h):
    occ = np.zeros((nx, ny, nz), dtype=np.bool_)
    bad = 0
    for i in range(nx):
        for j in range(ny):
            col = i * ny + j
            zs = np.sort(hits[offsets[col]:offsets[col + 1]])
            if zs.shape[0] % 2 == 1:
                bad += 1
                continue
            for p in range(0, zs.shape[0], 2):
                k0 = max(0, int(math.ceil((zs[p] - z0) / h)))
                k1 = min(nz - 1, int(math.floor((zs[p + 1] - z0) / h)))
                for k in range(k0, k1 + 1):
                    zc = z0 + k * h
                    if zs[p] < zc < zs[p + 1]:
                        occ[i, j, k] = not occ[i, j, k]
    return occ, bad


def grid_geometry(lo, hi, resolution, padding=PADDING, spacing=None):
    """Spacing, dims and origin for a bounding box at the given resolution.

    An explicit ``spacing`` overrides the one implied by ``resolution``.
    """
    extent = np.asarray(hi, float) - np.asarray(lo, float)
    if spacing is None:
        spacing = float(extent.max()) / resolution
    spacing = float(spacing)
    n = np.maximum(1, np.ceil(extent / spacing - 1e-9)).astype(int)
    dims = tuple(int(x) for x in n + 2 * padding)
    origin = np.asarray(lo, float) - (padding - 0.5) * spacing
    return spacing, dims, origin


def voxelize(mesh: TriangleMesh, resolution: int = DEFAULT_RESOLUTION, spacing=None) -> VoxelGrid:
    """Solid voxelization of a watertight mesh.

    ``resolution`` is the voxel count along the longest bounding-box axis.
    Passing ``spacing`` instead fixes the voxel size (useful when several
    poses of one shape must share a lattice scale); the implied count along
    the longest axis must still lie in [8, 512]. The grid carries
    ``PADDING`` empty layers on every side.
    """
    if not mesh.watertight:
        raise VoxelizationError("mesh is not watertight; interior is undefined")
    lo, hi = mesh.bounds()
    if spacing is not None:
        if not spacing > 0:
            raise VoxelizationError("spacing must be positive")
        resolution = int(np.ceil(float(np.max(hi - lo)) / spacing - 1e-9))
    if not 8 <= int(resolution) <= 512:
        raise VoxelizationError(f"resolution {resolution} outside [8, 512]")
    spacing, dims, origin = grid_geometry(lo, hi, int(resolution), spacing=spacing)
    # sub-voxel jitter keeps rays off mesh edges/vertices lying on lattice lines
    eps_x = spacing * 1.234567e-7
    eps_y = spacing * 2.345678e-7
    offsets, hits = _column_crossings(mesh.vertices, mesh.triangles, dims[0], dims[1],
                                      origin[0], origin[1], spacing, eps_x, eps_y)
    occ, bad = _parity_fill(offsets, hits, dims[0], dims[1], dims[2], origin[2], spacing)
    if bad:
        raise VoxelizationError(f"{bad} voxel columns crossed the surface an odd number of times")
    return VoxelGrid(occ, spacing, origin)


def _rle(flat):
    # alternating run lengths, starting with a run of empty voxels
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds)
    if flat.size and flat[0]:
        runs = np.concatenate([[0], runs])
    return runs


def save_grid(grid: VoxelGrid, path):
    runs = _rle(grid.occupancy.ravel())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# medial voxel grid\n")
        fh.write("dims %d %d %d\n" % grid.dims)
        fh.write("spacing %.17g\n" % grid.spacing)
        fh.write("origin %.17g %.17g %.17g\n" % tuple(grid.origin))
        fh.write("rle %d\n" % len(runs))
        for start in range(0, len(runs), 32):
            fh.write(" ".join(str(int(r)) for r in runs[start:start + 32]) + "\n")
    return path


def load_grid(path) -> VoxelGrid:
    header = {}
    runs = []
    for lineno, line in _data_lines(path):
        tokens = line.split()
        if tokens[0] in ("dims", "spacing", "origin", "rle"):
            header[tokens[0]] = (lineno, tokens[1:])
        else:
            try:
                runs.extend(int(t) for t in tokens)
            except ValueError:
                raise FormatError("bad run length", lineno) from None
    for key in ("dims", "spacing", "origin", "rle"):
        if key not in header:
            raise FormatError(f"missing {key!r} record")
    try:
        dims = tuple(int(x) for x in header["dims"][1])
        spacing = float(header["spacing"][1][0])
        origin = [float(x) for x in header["origin"][1]]
    except (ValueError, IndexError):
        raise FormatError("bad grid header") from None
    if len(runs) != int(header["rle"][1][0]):
        raise FormatError("run count does not match rle record", header["rle"][0])
    values = np.zeros(len(runs), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, runs)
    if flat.size != int(np.prod(dims)):
        raise FormatError(f"runs cover {flat.size} voxels, dims need {int(np.prod(dims))}")
    return VoxelGrid(flat.reshape(dims), spacing, origin)
