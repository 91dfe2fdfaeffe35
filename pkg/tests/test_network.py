import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flock import config as cf
from flock import network as nw
from flock.errors import DimensionError, FrameworkError

import oracles

TRIANGLE = nw.Framework(3, 2, ((0, 1), (1, 2), (2, 0)), (1.0, 1.0, 1.0))
PRESET_FRAMEWORKS = {name: cf.preset(name).framework for name in ("triangle2d", "hexad2d", "tetra3d")}


def tetra_positions(side=1.0):
    return np.array(cf.TETRA_LAYOUT) * side / cf.SIDE


def test_incidence_two_agents():
    g = nw.Graph(2, ((0, 1),))
    np.testing.assert_array_equal(nw.incidence_matrix(g), [[1.0], [-1.0]])


def test_incidence_triangle_columns():
    B = nw.incidence_matrix(TRIANGLE)
    assert B.shape == (3, 3)
    for col in B.T:
        assert sorted(col) == [-1.0, 0.0, 1.0]
    np.testing.assert_array_equal(B.sum(axis=0), 0.0)


@pytest.mark.parametrize("fw", PRESET_FRAMEWORKS.values(), ids=PRESET_FRAMEWORKS.keys())
def test_laplacian_is_bbt(fw):
    B = nw.incidence_matrix(fw)
    L = nw.laplacian(fw)
    np.testing.assert_array_equal(L, B @ B.T)
    np.testing.assert_array_equal(L, L.T)
    np.testing.assert_array_equal(L.sum(axis=1), 0.0)
    w, V = np.linalg.eigh(L)
    assert abs(w[0]) < 1e-12 and w[1] > 1e-9
    assert np.linalg.matrix_rank(L) == fw.n - 1
    np.testing.assert_allclose(np.abs(V[:, 0]), 1 / math.sqrt(fw.n), atol=1e-12)


@pytest.mark.parametrize(
    "graph, spectrum",
    [
        (nw.Graph(3, ((0, 1), (1, 2), (2, 0))), [0, 3, 3]),
        (nw.Graph(3, ((0, 1), (1, 2))), [0, 1, 3]),
        (nw.Graph(4, ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))), [0, 4, 4, 4]),
    ],
    ids=["K3", "path3", "K4"],
)
def test_laplacian_spectrum_and_connectivity(graph, spectrum):
    np.testing.assert_allclose(np.linalg.eigvalsh(nw.laplacian(graph)), spectrum, atol=1e-12)
    assert nw.algebraic_connectivity(graph) == pytest.approx(spectrum[1], abs=1e-12)


def test_relative_positions_examples():
    fw = nw.Framework(2, 2, ((0, 1),), (1.0,))
    np.testing.assert_array_equal(nw.relative_positions(fw, [0, 0, 1, 0]), [-1, 0])
    np.testing.assert_array_equal(nw.relative_positions(TRIANGLE, np.ones(6)), 0.0)


def test_relative_positions_dimension_mismatch():
    with pytest.raises(DimensionError):
        nw.relative_positions(TRIANGLE, np.zeros(5))


@given(arrays(float, 6, elements=st.floats(-100, 100)), arrays(float, 2, elements=st.floats(-100, 100)))
def test_blockwise_and_translation_invariance(q, c):
    z = nw.relative_positions(TRIANGLE, q)
    Q = q.reshape(3, 2)
    expected = np.concatenate([Q[a] - Q[b] for a, b in TRIANGLE.edges])
    np.testing.assert_array_equal(z, expected)
    np.testing.assert_allclose(nw.relative_positions(TRIANGLE, q + np.tile(c, 3)), z, atol=1e-9)


@pytest.mark.parametrize("name", PRESET_FRAMEWORKS)
def test_rigidity_matrix_annihilates_translations(name, rng):
    fw = PRESET_FRAMEWORKS[name]
    for _ in range(20):
        q = rng.normal(scale=100, size=fw.n * fw.d)
        c = rng.normal(size=fw.d)
        R = nw.rigidity_matrix(fw, q)
        assert np.abs(R @ np.tile(c, fw.n)).max() <= 1e-9 * np.abs(R).max()
        assert nw.numerical_rank(R) <= nw.rigid_edge_count(fw.n, fw.d)


@pytest.mark.parametrize("name", PRESET_FRAMEWORKS)
def test_rigidity_matrix_is_half_jacobian(name, rng):
    fw = PRESET_FRAMEWORKS[name]
    for _ in range(5):
        q = rng.uniform(-2, 2, size=fw.n * fw.d)
        J = oracles.central_jacobian(oracles.squared_lengths(fw.edges, fw.d), q)
        np.testing.assert_allclose(nw.rigidity_matrix(fw, q), 0.5 * J, atol=1e-6)


def test_rigidity_ranks():
    q = np.array([0, 0, 1, 0, 0, 1.0])
    assert nw.numerical_rank(nw.rigidity_matrix(TRIANGLE, q)) == 3
    assert nw.is_infinitesimally_minimally_rigid(TRIANGLE, q)
    collinear = np.array([0, 0, 1, 0, 2, 0.0])
    assert nw.numerical_rank(nw.rigidity_matrix(TRIANGLE, collinear)) < 3
    assert not nw.is_infinitesimally_minimally_rigid(TRIANGLE, collinear)
    tetra = PRESET_FRAMEWORKS["tetra3d"]
    assert nw.numerical_rank(nw.rigidity_matrix(tetra, tetra_positions().ravel())) == 6
    assert nw.is_infinitesimally_minimally_rigid(tetra, tetra_positions().ravel())
    coplanar = tetra_positions().copy()
    coplanar[:, 2] = 0.0
    assert not nw.is_infinitesimally_minimally_rigid(tetra, coplanar.ravel())


def test_distance_error_examples():
    fw = nw.Framework(2, 2, ((0, 1),), (5.0,))
    assert nw.distance_errors(fw, [3, 4, 0, 0])[0] == 0.0
    fw2 = nw.Framework(2, 2, ((0, 1),), (2.0,))
    assert nw.distance_errors(fw2, [1, 0, 0, 0])[0] == -3.0
    q = np.array(cf.TRIANGLE_LAYOUT).ravel()
    np.testing.assert_allclose(nw.distance_errors(PRESET_FRAMEWORKS["triangle2d"], q), 0.0, atol=1e-9)


@given(st.floats(0, 2 * math.pi), arrays(float, 2, elements=st.floats(-50, 50)),
       arrays(float, 6, elements=st.floats(-10, 10)))
def test_distance_errors_rigid_motion_invariance(theta, shift, q):
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    moved = (q.reshape(3, 2) @ rot.T + shift).ravel()
    np.testing.assert_allclose(nw.distance_errors(TRIANGLE, moved), nw.distance_errors(TRIANGLE, q), atol=1e-8)


@pytest.mark.parametrize(
    "kwargs, match",
    [
        (dict(n=1, d=2, edges=(), desired_lengths=()), "at least 2"),
        (dict(n=3, d=4, edges=((0, 1),), desired_lengths=(1.0,)), "dimension"),
        (dict(n=3, d=2, edges=((0, 1), (1, 2)), desired_lengths=(1.0, 1.0)), "edges"),
        (dict(n=3, d=2, edges=((0, 1), (1, 1), (2, 0)), desired_lengths=(1.0, 1.0, 1.0)), "self-loop"),
        (dict(n=3, d=2, edges=((0, 1), (1, 0), (2, 0)), desired_lengths=(1.0, 1.0, 1.0)), "duplicate"),
        (dict(n=3, d=2, edges=((0, 1), (1, 2), (2, 0)), desired_lengths=(1.0, 0.0, 1.0)), r"> 0"),
        (dict(n=3, d=2, edges=((0, 1), (1, 2), (2, 5)), desired_lengths=(1.0, 1.0, 1.0)), "missing agent"),
        (dict(n=4, d=2, edges=((0, 1), (1, 2), (2, 0), (0, 1)), desired_lengths=(1.0,) * 4), None),
    ],
)
def test_framework_invariants(kwargs, match):
    with pytest.raises(FrameworkError, match=match):
        nw.Framework(**kwargs)


def test_disconnected_framework_rejected():
    # K5 minus one edge has the 9 edges n=6 needs in the plane, but agent 5 is isolated.
    edges = tuple((a, b) for a in range(5) for b in range(a + 1, 5))[:-1]
    assert len(edges) == nw.rigid_edge_count(6, 2)
    with pytest.raises(FrameworkError, match="connected"):
        nw.Framework(6, 2, edges, (1.0,) * 9)


def test_from_layout_lengths():
    fw = nw.Framework.from_layout(cf.HEXAD_EDGES, cf.HEXAD_LAYOUT)
    np.testing.assert_allclose(fw.desired_lengths, cf.SIDE)
    assert fw.neighbors(0) == [1, 2]
