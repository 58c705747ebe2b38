import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from medialspec.errors import EmptyInputError, PreconditionError
from medialspec.medial import (average_outward_flux, distance_transform, extract_skeleton,
                               gradient_field, is_endpoint, is_simple, load_skeleton,
                               save_skeleton, sphere_directions, squared_edt)
from medialspec.medial.thinning import thin_mask
from medialspec.topology import euler_characteristic, n_components
from medialspec.voxelio import VoxelGrid

import oracles


def grid(occ, spacing=1.0):
    return VoxelGrid(occ, spacing, np.zeros(3))


def ball(n, radius):
    c = (n - 1) / 2
    X = np.indices((n, n, n)) - c
    return np.sum(X * X, axis=0) <= radius * radius


def cylinder_x(radius=5, length=40, pad=4):
    side = 2 * radius + 6
    occ = np.zeros((length + 2 * pad, side, side), bool)
    c = (side - 1) / 2
    _, J, K = np.indices(occ.shape)
    occ[:, (J[0] - c) ** 2 + (K[0] - c) ** 2 <= radius * radius] = True
    occ[:pad] = False
    occ[pad + length:] = False
    return occ, c


def solid_torus(major=12, minor=4):
    n = 2 * (major + minor) + 8
    h = 2 * minor + 8
    X = np.indices((n, n, h)).astype(float)
    X[0] -= (n - 1) / 2
    X[1] -= (n - 1) / 2
    X[2] -= (h - 1) / 2
    return (np.hypot(X[0], X[1]) - major) ** 2 + X[2] ** 2 <= minor * minor


# distance transform


def test_single_voxel_distance_is_spacing():
    occ = np.zeros((5, 5, 5), bool)
    occ[2, 2, 2] = True
    df = distance_transform(grid(occ, 0.3))
    assert df.d[2, 2, 2] == pytest.approx(0.3)
    assert np.count_nonzero(df.d) == 1


def test_cube8_max_at_center_block():
    occ = np.zeros((12, 12, 12), bool)
    occ[2:10, 2:10, 2:10] = True
    df = distance_transform(grid(occ))
    assert df.d.max() == 4.0
    assert np.array_equal(np.argwhere(df.d == 4.0), np.argwhere(np.ones((2, 2, 2))) + 5)
    assert np.array_equal(df.d ** 2, oracles.brute_squared_edt(occ))


def test_ball_radius_10():
    df = distance_transform(grid(ball(26, 10), 0.5))
    assert abs(df.d.max() - 10 * 0.5) <= 0.5


def test_empty_grid_rejected():
    with pytest.raises(EmptyInputError):
        distance_transform(grid(np.zeros((4, 4, 4), bool)))


@settings(max_examples=40, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 16), st.integers(1, 16), st.integers(1, 10))))
def test_edt_matches_brute_force(occ):
    if not occ.any() or occ.all():
        return
    sq, _ = squared_edt(~occ)
    assert np.array_equal(np.where(occ, sq, 0).astype(np.int64), oracles.brute_squared_edt(occ))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.1, 0.9))
def test_distance_lipschitz(seed, fill):
    occ = np.random.default_rng(seed).random((10, 10, 10)) < fill
    if not occ.any() or occ.all():
        return
    df = distance_transform(grid(occ, 0.7))
    for a in range(3):
        both = np.logical_and(np.take(occ, range(1, 10), a), np.take(occ, range(9), a))
        step = np.abs(np.diff(df.d, axis=a))[both]
        assert np.all(step <= 0.7 + 1e-12)
    assert np.all(df.d[~occ] == 0)


# gradient


def test_gradient_next_to_wall():
    occ = np.zeros((12, 12, 12), bool)
    occ[2:, :, :] = True
    vf = gradient_field(distance_transform(grid(occ)))
    assert np.allclose(vf.q[:, 2, 6, 6], (1.0, 0.0, 0.0))


def test_gradient_unit_and_ball_center():
    occ = ball(21, 8)
    vf = gradient_field(distance_transform(grid(occ)))
    norms = np.linalg.norm(vf.q, axis=0)
    assert np.allclose(norms[occ], 1.0, atol=1e-9)
    assert np.all(norms[~occ] == 0)
    assert norms[10, 10, 10] == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_gradient_matches_brute_direction(seed):
    rng = np.random.default_rng(seed)
    occ = rng.random((16, 16, 16)) < 0.85
    occ[[0, -1], :, :] = False
    vf = gradient_field(distance_transform(grid(occ)))
    inside = np.argwhere(occ)
    p = inside[rng.integers(len(inside))]
    allowed = oracles.brute_feature_direction(occ, p)
    assert np.min(np.linalg.norm(allowed - vf.q[:, p[0], p[1], p[2]], axis=1)) < 1e-12


# flux


def aof_of(occ):
    df = distance_transform(grid(occ))
    return average_outward_flux(gradient_field(df), df).aof


def test_directions_are_unit_and_balanced():
    u = sphere_directions()
    assert u.shape == (60, 3)
    assert np.allclose(np.linalg.norm(u, axis=1), 1.0)
    assert np.allclose(u.sum(axis=0), 0.0, atol=1e-12)


def test_flux_zero_far_inside_half_space():
    occ = np.zeros((24, 12, 12), bool)
    occ[2:, :, :] = True
    assert abs(aof_of(occ)[8, 6, 6]) < 0.05


def test_flux_ball_center():
    aof = aof_of(ball(25, 10))
    assert abs(aof[12, 12, 12] + 1) < 0.1


def test_flux_slab_mid_plane():
    occ = np.zeros((20, 20, 13), bool)
    occ[:, :, 2:11] = True
    assert aof_of(occ)[10, 10, 6] < -0.2


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_flux_range(seed):
    occ = np.random.default_rng(seed).random((12, 12, 12)) < 0.7
    occ[[0, 1, -1, -2]] = False
    if not occ.any():
        return
    aof = aof_of(occ)
    assert np.all(aof >= -1 - 1e-12) and np.all(aof <= 1 + 1e-12)
    assert np.all(aof[~occ] == 0)


# simple points and endpoints


def line_x(n=7):
    occ = np.zeros((n + 2, 3, 3), bool)
    occ[1:n + 1, 1, 1] = True
    return occ


def test_simple_segment_end_and_middle():
    occ = line_x()
    assert is_simple(occ, (1, 1, 1))
    assert not is_simple(occ, (4, 1, 1))


def test_simple_tunnel_configuration():
    # removing the center of a one-voxel plate opens a hole through it
    plate = np.zeros((3, 3, 3), bool)
    plate[:, :, 1] = True
    assert not is_simple(plate, (1, 1, 1))
    assert not oracles.brute_is_simple(plate)
    # with a cap on one side the center is simple again
    capped = plate.copy()
    capped[1, 1, 2] = True
    assert is_simple(capped, (1, 1, 1))
    assert oracles.brute_is_simple(capped)


@settings(max_examples=300, deadline=None)
@given(arrays(bool, (3, 3, 3)))
def test_simple_matches_attachment_oracle(nb):
    nb = nb.copy()
    nb[1, 1, 1] = True
    assert is_simple(nb, (1, 1, 1)) == oracles.brute_is_simple(nb)


def test_endpoint_examples():
    occ = line_x()
    assert is_endpoint(occ, (1, 1, 1))
    assert not is_endpoint(occ, (4, 1, 1))
    plane = np.zeros((9, 9, 3), bool)
    plane[1:8, 1:8, 1] = True
    assert not is_endpoint(plane, (4, 4, 1))
    assert is_endpoint(plane, (1, 4, 1))
    assert is_endpoint(plane, (1, 1, 1))


def test_unoccupied_query_rejected():
    occ = line_x()
    with pytest.raises(PreconditionError):
        is_simple(occ, (0, 0, 0))
    with pytest.raises(PreconditionError):
        is_endpoint(occ, (0, 0, 0))


# thinning


def test_thin_empty_rejected():
    with pytest.raises(EmptyInputError):
        extract_skeleton(grid(np.zeros((5, 5, 5), bool)))


@pytest.mark.xfail(reason="at the default tau the ball keeps a small medial sheet; "
                   "see the tau=0.5 case",
                   strict=True)
def test_ball_radius_8_default_tau():
    sk, _, _ = extract_skeleton(grid(ball(24, 8)))
    assert len(sk) <= 8


def test_ball_radius_8_higher_tau():
    sk, _, _ = extract_skeleton(grid(ball(24, 8)), tau=0.5)
    assert 1 <= len(sk) <= 8
    assert np.linalg.norm(sk.index - 11.5, axis=1).max() <= 2


def test_cylinder_axis():
    occ, c = cylinder_x()
    sk, _, _ = extract_skeleton(grid(occ))
    off = np.hypot(sk.index[:, 1] - c, sk.index[:, 2] - c)
    # away from the caps, whose rims end in short medial sheets
    middle = (sk.index[:, 0] >= 9) & (sk.index[:, 0] <= 38)
    assert off[middle].max() <= 1.0
    assert n_components(sk.mask()) == 1
    sk5, _, _ = extract_skeleton(grid(occ), tau=0.5)
    assert np.hypot(sk5.index[:, 1] - c, sk5.index[:, 2] - c).max() <= 1.0


def test_torus_homotopy():
    occ = solid_torus()
    sk, _, _ = extract_skeleton(grid(occ))
    assert oracles.brute_euler(sk.mask()) == 0
    assert oracles.brute_components(sk.mask()) == 1


@pytest.mark.parametrize("make", [lambda: ball(18, 6), lambda: cylinder_x(4, 20)[0], solid_torus,
                                  lambda: np.pad(np.ones((6, 10, 4), bool), 2)])
def test_thinning_invariants(make):
    occ = make()
    df = distance_transform(grid(occ))
    aof = average_outward_flux(gradient_field(df), df)
    remaining, frozen = thin_mask(occ, aof.strength, df.d, 0.25)
    # homotopy
    assert oracles.brute_euler(remaining) == oracles.brute_euler(occ)
    assert oracles.brute_components(remaining) == oracles.brute_components(occ)
    assert not np.any(remaining & ~occ)
    # thinness
    p = np.pad(remaining, 1)
    full = np.ones(occ.shape, bool)
    for off in np.ndindex(3, 3, 3):
        full &= p[off[0]:off[0] + occ.shape[0], off[1]:off[1] + occ.shape[1],
                  off[2]:off[2] + occ.shape[2]]
    assert full[remaining].mean() <= 0.05
    # medial strength of kept endpoints beats that of removed voxels
    removed = occ & ~remaining
    if frozen.any():
        assert np.abs(aof.aof[frozen]).mean() > np.abs(aof.aof[removed]).mean()


def test_skeleton_radius_and_membership():
    occ = ball(18, 6)
    sk, df, _ = extract_skeleton(grid(occ, 0.25))
    assert np.all(occ[tuple(sk.index.T)])
    assert np.allclose(sk.radius, df.d[tuple(sk.index.T)])
    assert np.all(sk.radius > 0)


def test_thinning_deterministic():
    occ = solid_torus()
    a, _, _ = extract_skeleton(grid(occ))
    b, _, _ = extract_skeleton(grid(occ))
    assert np.array_equal(a.index, b.index)


def test_skeleton_roundtrip(tmp_path):
    sk, _, _ = extract_skeleton(grid(ball(18, 6), 0.125))
    path = save_skeleton(sk, str(tmp_path / "s.txt"))
    sk2 = load_skeleton(path)
    assert np.array_equal(sk2.index, sk.index)
    assert np.array_equal(sk2.radius, sk.radius)
    assert np.array_equal(sk2.aof, sk.aof)
    assert sk2.dims == sk.dims and sk2.spacing == sk.spacing


def test_topology_helpers_match_oracle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        occ = rng.random((7, 6, 5)) < 0.55
        assert euler_characteristic(occ) == oracles.brute_euler(occ)
        assert n_components(occ) == oracles.brute_components(occ)
