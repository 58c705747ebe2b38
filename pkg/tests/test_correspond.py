import numpy as np
import pytest

from medialspec import shapes
from medialspec.correspond import (CorrespondenceMap, align_spectra, apply_alignment,
                                   eval_correspondence, farthest_point_sample, load_map,
                                   match_points, normalize_positions, save_map)
from medialspec.errors import DomainError, FormatError, PreconditionError, ShapeError

import oracles


def aligned_pair(emb, other=None, P=None, Q=None):
    other = emb if other is None else other
    al = align_spectra(emb, other, P, Q)
    return apply_alignment(emb, other, al)


def test_self_alignment_is_identity(small_cylinder):
    c = small_cylinder
    P = c.mesh.vertices
    al = align_spectra(c.emb, c.emb, P, P)
    assert np.array_equal(al.perm, np.arange(c.emb.k))
    assert np.all(al.signs == 1)


def test_recovers_flipped_and_swapped_columns(lumpy_small):
    emb, P = lumpy_small.emb, lumpy_small.mesh.vertices
    order = np.arange(emb.k)
    order[[2, 3]] = order[[3, 2]]
    signs = np.ones(emb.k)
    signs[1] = -1
    B = emb.select(order, signs)
    al = align_spectra(emb, B, P, P)
    A2, B2 = apply_alignment(emb, B, al)
    assert np.allclose(A2.vectors, B2.vectors)
    assert np.array_equal(al.perm[order], np.arange(emb.k))


def test_inverse_is_involution(lumpy_small):
    emb, P = lumpy_small.emb, lumpy_small.mesh.vertices
    B = emb.select(np.arange(emb.k)[::-1], -np.ones(emb.k))
    al = align_spectra(emb, B, P, P)
    back = al.inverse().inverse()
    assert np.array_equal(back.perm, al.perm)
    assert np.array_equal(back.signs, al.signs)
    assert np.array_equal(al.perm[al.inverse().perm], np.arange(emb.k))


def test_alignment_errors(small_cylinder, small_ball):
    with pytest.raises(ShapeError):
        align_spectra(small_cylinder.emb, small_ball.emb)


def test_nearest_self_map_is_identity(small_cylinder):
    c = small_cylinder
    P = c.mesh.vertices
    A, B = aligned_pair(c.emb, P=P, Q=P)
    cmap = match_points(A, B, "nearest", P, P)
    assert np.array_equal(cmap.target, np.arange(c.mesh.n_vertices))


def test_nearest_maps_are_inverse_permutations(lumpy_small):
    emb, P = lumpy_small.emb, lumpy_small.mesh.vertices
    perm = np.random.default_rng(3).permutation(emb.n)
    # B is A with its vertices renumbered
    B = type(emb)(emb.eigenvalues, emb.vectors[perm], emb.dsym[perm])
    A2, B2 = aligned_pair(emb, B, P, P[perm])
    fwd = match_points(A2, B2, "nearest", P, P[perm]).target
    bwd = match_points(B2, A2, "nearest", P[perm], P).target
    assert np.array_equal(perm[fwd], np.arange(emb.n))
    assert np.array_equal(fwd[bwd], np.arange(emb.n))


def test_drift_self_map(small_cylinder):
    c = small_cylinder
    P = c.mesh.vertices
    A, B = aligned_pair(c.emb, P=P, Q=P)
    near = match_points(A, B, "nearest", P, P).target
    drift = match_points(A, B, "drift", P, P)
    assert np.mean(drift.target == np.arange(len(P))) >= np.mean(near == np.arange(len(P)))
    assert drift.confidence.shape == (len(P),)
    assert np.all((drift.confidence > 0) & (drift.confidence <= 1))


def test_match_preconditions(small_cylinder, small_ball):
    emb = small_cylinder.emb
    with pytest.raises(PreconditionError):
        match_points(emb, emb)
    A, B = aligned_pair(emb)
    with pytest.raises(DomainError):
        match_points(A, B, "exact")
    C, D = aligned_pair(small_ball.emb)
    with pytest.raises(ShapeError):
        match_points(A, D)


def test_normalize_positions_invariance(rng):
    P = rng.normal(size=(200, 3)) * (3, 2, 1)
    R = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    Q = 2.5 * P @ R.T + (1, -2, 4)
    # same frame up to the sign convention, which is fixed by the third moment
    assert np.allclose(normalize_positions(P), normalize_positions(Q), atol=1e-8)
    N = normalize_positions(P)
    assert np.allclose(N.mean(0), 0, atol=1e-12)
    assert np.mean(np.sum(N * N, axis=1)) == pytest.approx(1.0)


def test_farthest_point_sample(rng):
    P = rng.random((50, 3))
    s = farthest_point_sample(P, 10)
    assert s[0] == 0 and len(np.unique(s)) == 10
    d = np.linalg.norm(P[s[1]] - P[0])
    assert d == pytest.approx(np.linalg.norm(P - P[0], axis=1).max())


@pytest.fixture(scope="module")
def tube():
    line = shapes.bent_centerline(6.0, 31, 2.0, 0.8, 1.0)
    return shapes.tube_mesh(line, np.full(31, 0.3), n_theta=10, n_cap=3)


def test_eval_exact_and_constant_maps(tube):
    n = tube.n_vertices
    gt = np.arange(n)
    t, f, diam = eval_correspondence(CorrespondenceMap(gt.copy()), gt, tube)
    assert np.all(f == 1.0)
    assert diam == pytest.approx(oracles.brute_diameter(tube.vertices, tube.triangles))
    t, f, _ = eval_correspondence(CorrespondenceMap(np.zeros(n, np.int64)), gt, tube)
    assert f[0] == pytest.approx(1 / n)


def test_eval_random_map_matches_chance(tube):
    n = tube.n_vertices
    gt = np.arange(n)
    rng = np.random.default_rng(7)
    t, f, diam = eval_correspondence(CorrespondenceMap(rng.integers(0, n, n)), gt, tube)
    assert np.all(np.diff(f) >= 0)
    for i in (5, 10, 20):
        est, se = oracles.covered_fraction(tube.vertices, tube.triangles, t[i] * diam,
                                           n_sources=n, seed=1)
        # the map's own sampling noise dominates the oracle's
        sigma = np.sqrt(est * (1 - est) / n) + se
        assert abs(f[i] - est) < 4 * sigma
    _, full, _ = eval_correspondence(CorrespondenceMap(rng.integers(0, n, n)), gt, tube,
                                     thresholds=[1.0])
    assert full[0] == 1.0


def test_eval_length_mismatch(tube):
    with pytest.raises(ShapeError):
        eval_correspondence(CorrespondenceMap(np.arange(3)), np.arange(4), tube)


def test_map_roundtrip(tmp_path, rng):
    cmap = CorrespondenceMap(rng.integers(0, 100, 57))
    path = save_map(cmap, str(tmp_path / "m.txt"))
    assert np.array_equal(load_map(path).target, cmap.target)
    bad = tmp_path / "bad.txt"
    bad.write_text("0 1\n2 3\n")
    with pytest.raises(FormatError):
        load_map(str(bad))
    bad.write_text("0 1 2\n")
    with pytest.raises(FormatError) as err:
        load_map(str(bad))
    assert err.value.line == 1
