import numpy as np
import pytest

from mfg.grid import Grid, cell_average_density, mass, weighted_l2, spacetime_l2


def test_torus_laplacian_matches_analytic():
    g = Grid("torus", N_h=64, N_T=4, T=1.0)
    x = g.coords()[0]
    u = np.sin(2 * np.pi * x)
    lap = g.laplacian(u)
    exact = -4 * np.pi ** 2 * np.sin(2 * np.pi * x)
    assert np.max(np.abs(lap - exact)) <= 1e-2 * np.max(np.abs(exact))


def test_torus_laplacian_2d_matches_analytic():
    g = Grid("torus", N_h=48, N_T=4, T=1.0, dim=2)
    y, x = g.coords()
    u = np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    lap = g.laplacian(u)
    exact = -8 * np.pi ** 2 * u
    assert np.max(np.abs(lap - exact)) <= 2e-2 * np.max(np.abs(exact))


def test_nabla_slots_match_onesided_quotients():
    g = Grid("torus", N_h=4, N_T=4, T=1.0)
    u = np.array([0.0, 1.0, 0.0, 0.0])
    nab = g.nabla(u)
    assert nab[1, 0] == pytest.approx(-4.0)   # forward difference at i=1
    assert nab[1, 1] == pytest.approx(4.0)    # backward difference at i=1


def test_time_diff():
    g = Grid("torus", N_h=4, N_T=2, T=1.0)
    w = np.zeros((3, 4))
    w[1] = 1.0
    d = g.time_diff(w)
    assert d.shape == (2, 4)
    assert np.allclose(d[0], 2.0)
    assert np.allclose(d[1], -2.0)


def test_summation_identities_on_torus():
    rng = np.random.default_rng(0)
    g = Grid("torus", N_h=16, N_T=4, T=1.0)
    u = rng.standard_normal(16)
    v = rng.standard_normal(16)
    dplus = (g.shift_plus(u) - u) / g.h
    assert abs(dplus.sum()) <= 1e-12
    # discrete integration by parts: <D+ u, v> = -<u, D- v>
    dminus_v = (v - g.shift_minus(v)) / g.h
    assert abs(np.dot(dplus, v) + np.dot(u, dminus_v)) <= 1e-10
    # laplacian is self-adjoint on the torus
    assert abs(np.dot(g.laplacian(u), v) - np.dot(u, g.laplacian(v))) <= 1e-10


def test_mirror_tables_on_interval():
    g = Grid("interval", N_h=4, N_T=1, T=1.0, bounds=(0.0, 1.0))
    assert g.n_space == 5
    assert g.im[0][0] == 1     # mirror ghost below the left endpoint
    assert g.ip[0][4] == 3     # mirror ghost above the right endpoint
    u = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    lap = g.laplacian(u)
    h2 = g.h ** 2
    assert lap[0] == pytest.approx(2 * (u[1] - u[0]) / h2)
    assert lap[2] == pytest.approx((u[3] - 2 * u[2] + u[1]) / h2)


def test_face_nodes_and_flat():
    g = Grid("rectangle", N_h=4, N_T=1, T=1.0, bounds=((0, 1), (0, 1)))
    assert g.flat(2, 3) == 2 * 5 + 3
    left = g.face_nodes("left")
    assert list(left) == [g.flat(i, 0) for i in range(5)]
    top = g.face_nodes("top")
    assert list(top) == [g.flat(4, i) for i in range(5)]


def test_boundary_roles_validated():
    with pytest.raises(ValueError):
        Grid("interval", N_h=4, N_T=1, T=1.0, boundary={"left": {"type": "door"}})
    with pytest.raises(ValueError):
        Grid("torus", N_h=4, N_T=1, T=1.0, boundary={"left": {"type": "wall"}})
    g = Grid("interval", N_h=4, N_T=1, T=1.0,
             boundary={"left": {"type": "exit", "cost": 0.0}})
    assert g.boundary["right"]["type"] == "wall"


def test_cell_average_density_normalizes():
    g = Grid("torus", N_h=32, N_T=4, T=1.0)
    m0 = cell_average_density(g, lambda x: 1.0 + 0.5 * np.sin(2 * np.pi * x))
    assert abs(mass(g, m0) - 1.0) <= 1e-12
    assert np.all(m0 >= 0)
    m1 = cell_average_density(g, np.ones(32))
    assert np.allclose(m1, 1.0)


def test_norm_helpers():
    g = Grid("torus", N_h=8, N_T=4, T=2.0)
    w = np.ones(8)
    assert weighted_l2(g, w) == pytest.approx(1.0)
    wt = np.ones((4, 8))
    assert spacetime_l2(g, wt) == pytest.approx(np.sqrt(2.0))
