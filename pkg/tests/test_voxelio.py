import os
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medialspec import shapes
from medialspec.errors import EmptyInputError, FormatError, ShapeError, VoxelizationError
from medialspec.voxelio import (PADDING, TriangleMesh, VoxelGrid, export_mesh_scalars, load_grid,
                                load_mesh, save_grid, voxelize)

import oracles

CUBE_OFF = """OFF
8 12 0
0 0 0
1 0 0
1 1 0
0 1 0
0 0 1
1 0 1
1 1 1
0 1 1
3 0 2 1
3 0 3 2
3 4 5 6
3 4 6 7
3 0 1 5
3 0 5 4
3 1 2 6
3 1 6 5
3 2 3 7
3 2 7 6
3 3 0 4
3 3 4 7
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_load_cube_off(tmp_path):
    m = load_mesh(write(tmp_path, "cube.off", CUBE_OFF))
    assert m.n_vertices == 8
    assert m.n_triangles == 12
    assert m.watertight


def test_obj_index_out_of_range(tmp_path):
    text = "".join(f"v {x} {y} {z}\n" for x, y, z in np.ndindex(2, 2, 2)) + "f 1 2 9\n"
    with pytest.raises(FormatError) as err:
        load_mesh(write(tmp_path, "bad.obj", text))
    assert err.value.line == 9
    assert "9" in str(err.value)


def test_ply_vertex_count_matches_header(tmp_path):
    m = shapes.icosphere(1.0, 2)
    path = export_mesh_scalars(m, {}, str(tmp_path / "s.ply"))
    declared = next(int(line.split()[2]) for line in open(path)
                    if line.startswith("element vertex"))
    assert load_mesh(path).n_vertices == declared == m.n_vertices


def test_off_parse_error_has_line(tmp_path):
    text = CUBE_OFF.replace("1 1 0\n", "1 x 0\n", 1)
    with pytest.raises(FormatError) as err:
        load_mesh(write(tmp_path, "bad.off", text))
    assert err.value.line == 5


def test_empty_mesh(tmp_path):
    with pytest.raises(EmptyInputError):
        load_mesh(write(tmp_path, "e.off", "OFF\n0 0 0\n"))


def test_unknown_extension(tmp_path):
    with pytest.raises(FormatError):
        load_mesh(write(tmp_path, "m.stl", "solid"))


def test_cube_resolution_8():
    g = voxelize(shapes.box_mesh(), 8)
    assert g.dims == (12, 12, 12)
    expect = np.zeros((12, 12, 12), bool)
    expect[PADDING:PADDING + 8, PADDING:PADDING + 8, PADDING:PADDING + 8] = True
    assert np.array_equal(g.occupancy, expect)


def test_sphere_volume_resolution_32():
    g = voxelize(shapes.icosphere(1.0, 4), 32)
    # 32 voxels across the diameter: radius 16 voxels
    ratio = g.count / (4.0 / 3.0 * np.pi * 16 ** 3)
    assert abs(ratio - 1) < 0.05


def test_torus_euler_zero():
    g = voxelize(shapes.torus_mesh(), 64)
    assert oracles.brute_euler(g.occupancy) == 0
    assert oracles.brute_components(g.occupancy) == 1


def test_non_watertight_rejected():
    m = shapes.box_mesh()
    open_mesh = TriangleMesh(m.vertices, m.triangles[:-1])
    with pytest.raises(VoxelizationError):
        voxelize(open_mesh, 16)


def test_resolution_range():
    with pytest.raises(VoxelizationError):
        voxelize(shapes.box_mesh(), 4)


def test_translation_consistency():
    m = shapes.icosphere(1.0, 3)
    g = voxelize(m, 24)
    shift = 3 * g.spacing
    g2 = voxelize(m.transformed(translation=(shift, -2 * g.spacing, 0.0)), 24)
    assert np.array_equal(g.occupancy, g2.occupancy)
    assert np.allclose(g2.origin - g.origin, (shift, -2 * g.spacing, 0.0))


def polyhedron_volume(mesh):
    v = mesh.vertices[mesh.triangles]
    return abs(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum()) / 6


def test_volume_converges_for_sphere():
    m = shapes.icosphere(1.0, 4)
    exact = polyhedron_volume(m)
    vols = []
    for res in (16, 32, 64, 128):
        g = voxelize(m, res)
        vols.append(g.count * g.spacing ** 3)
    vols = np.array(vols)
    err = np.abs(vols - exact) / exact
    assert np.all(np.diff(err) < 0)
    # successive changes shrink overall; single doublings can alias upward
    rel = np.abs(np.diff(vols)) / vols[1:]
    assert rel[-1] < rel[0]


def test_export_reload_channels(tmp_path):
    m = shapes.icosphere(1.0, 2)
    rng = np.random.default_rng(0)
    ch = {"one": np.ones(m.n_vertices), "phi": rng.normal(size=m.n_vertices)}
    m2 = load_mesh(export_mesh_scalars(m, ch, str(tmp_path / "c.ply")))
    assert m2.n_vertices == m.n_vertices and m2.n_triangles == m.n_triangles
    assert np.all(m2.channels["one"] == 1.0)
    assert np.allclose(m2.channels["phi"], ch["phi"], rtol=1e-6)
    assert np.allclose(m2.vertices, m.vertices)


def test_export_plain_and_mismatch(tmp_path):
    m = shapes.box_mesh()
    m2 = load_mesh(export_mesh_scalars(m, {}, str(tmp_path / "p.ply")))
    assert m2.channels == {}
    with pytest.raises(ShapeError):
        export_mesh_scalars(m, {"bad": np.ones(3)}, str(tmp_path / "q.ply"))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2 ** 31 - 1))
def test_grid_roundtrip(nx, ny, nz, seed):
    rng = np.random.default_rng(seed)
    g = VoxelGrid(rng.random((nx, ny, nz)) < 0.5, rng.uniform(0.1, 2), rng.normal(size=3))
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "g.vox")
        save_grid(g, path)
        g2 = load_grid(path)
    assert g2.same_geometry(g)
    assert np.array_equal(g2.occupancy, g.occupancy)


def test_grid_bad_runs(tmp_path):
    path = write(tmp_path, "g.vox", "dims 2 2 2\nspacing 1\norigin 0 0 0\nrle 2\n3 4\n")
    with pytest.raises(FormatError):
        load_grid(path)
