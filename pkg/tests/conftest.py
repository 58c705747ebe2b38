import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from medialspec import shapes  # noqa: E402
from medialspec.medial import extract_skeleton  # noqa: E402
from medialspec.recon import reconstruct  # noqa: E402
from medialspec.spectral import build_graph, map_boundary_to_medial, solve_eigens  # noqa: E402
from medialspec.voxelio import voxelize  # noqa: E402

# criterion lines collected by test_acceptance, echoed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])


class Prepared:
    """Mesh, grid, skeleton, reconstruction, map and embedding of one shape."""

    def __init__(self, mesh, resolution, k=10, rho="radius", tau=0.25):
        self.mesh = mesh
        self.grid = voxelize(mesh, resolution)
        self.skel, self.df, self.aof = extract_skeleton(self.grid, tau)
        self.recon = reconstruct(self.skel)
        self.bmap = map_boundary_to_medial(mesh, self.skel, self.recon)
        self.graph = build_graph(mesh, self.bmap, rho=rho)
        self.emb = solve_eigens(self.graph, min(k, mesh.n_vertices - 1))


@pytest.fixture(scope="session")
def small_cylinder():
    """Coarse cylinder shared by the spectral, segmentation and feature tests."""
    return Prepared(shapes.cylinder_mesh(n_theta=16, n_len=17, n_cap=3), 48, k=10)


@pytest.fixture(scope="session")
def small_ball():
    # the higher threshold collapses the ball skeleton to its center cluster
    return Prepared(shapes.icosphere(1.0, 3), 40, k=6, tau=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def lumpy_small():
    """Asymmetric solid whose low eigenvalues are well separated."""
    return Prepared(shapes.LumpySolid().mesh(20), 48, k=8)


@pytest.fixture(scope="session")
def dumbbell():
    """Dumbbell with its analytic part labels, volume-weighted graph, 30 modes."""
    solid = shapes.Dumbbell()
    p = Prepared(solid.mesh(64), 128, k=30, rho="volume")
    p.gt = solid.labels(p.mesh.vertices)
    return p
