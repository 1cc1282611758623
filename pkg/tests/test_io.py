import json

import numpy as np

from mfg.grid import Grid
from mfg import io as mio


# Golden bytes for a 3x3 torus with one time step, written out by hand.
# Node values encode their own indices (u = 100*level + 10*iy + ix,
# m = level + iy/4 + ix/8, all exact in binary) so row k of level t must be
# the node (iy, ix) = divmod(k, 3): time-major, then y, then x.
GOLDEN_2D = """\
t,x,y,u,m
0,0,0,0,0
0,0.33333333333333331,0,1,0.125
0,0.66666666666666663,0,2,0.25
0,0,0.33333333333333331,10,0.25
0,0.33333333333333331,0.33333333333333331,11,0.375
0,0.66666666666666663,0.33333333333333331,12,0.5
0,0,0.66666666666666663,20,0.5
0,0.33333333333333331,0.66666666666666663,21,0.625
0,0.66666666666666663,0.66666666666666663,22,0.75
1,0,0,100,1
1,0.33333333333333331,0,101,1.125
1,0.66666666666666663,0,102,1.25
1,0,0.33333333333333331,110,1.25
1,0.33333333333333331,0.33333333333333331,111,1.375
1,0.66666666666666663,0.33333333333333331,112,1.5
1,0,0.66666666666666663,120,1.5
1,0.33333333333333331,0.66666666666666663,121,1.625
1,0.66666666666666663,0.66666666666666663,122,1.75
"""


def test_fields_golden_2d(tmp_path):
    g = Grid("torus", 3, 1, 1.0, dim=2)
    lev = np.arange(2)[:, None, None]
    iy = np.arange(3)[None, :, None]
    ix = np.arange(3)[None, None, :]
    U = (100.0 * lev + 10.0 * iy + 1.0 * ix).reshape(2, 9)
    M = (1.0 * lev + iy / 4.0 + ix / 8.0).reshape(2, 9)

    path = tmp_path / "fields.csv"
    mio.export_fields(path, g, U, M)
    assert path.read_text() == GOLDEN_2D

    # same inputs, same bytes
    mio.export_fields(tmp_path / "again.csv", g, U, M)
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()

    cols = mio.read_fields(path)
    assert list(cols) == ["t", "x", "y", "u", "m"]
    for k in range(18):
        t_idx, rest = divmod(k, 9)
        iy_k, ix_k = divmod(rest, 3)
        assert cols["t"][k] == float(t_idx)
        assert cols["x"][k] == ix_k * g.h
        assert cols["y"][k] == iy_k * g.h
        assert cols["u"][k] == U[t_idx, rest]


def test_fields_roundtrip_bitwise_1d(tmp_path):
    rng = np.random.default_rng(7)
    g = Grid("torus", 16, 5, 0.8)
    U = rng.standard_normal((6, 16)) * np.exp(rng.uniform(-30, 30, (6, 16)))
    M = rng.standard_normal((6, 16))

    path = tmp_path / "f.csv"
    mio.export_fields(path, g, U, M)
    rows = path.read_text().strip().split("\n")
    assert rows[0] == "t,x,u,m"
    assert len(rows) - 1 == 6 * 16

    cols = mio.read_fields(path)
    assert np.array_equal(cols["u"], U.ravel())
    assert np.array_equal(cols["m"], M.ravel())
    assert np.array_equal(cols["t"], np.repeat(g.times(), 16))
    assert np.array_equal(cols["x"], np.tile(g.coords()[0], 6))


def test_fields_roundtrip_bitwise_2d(tmp_path):
    rng = np.random.default_rng(11)
    g = Grid("torus", 8, 3, 1.0, dim=2)
    U = rng.standard_normal((4, 64))
    M = np.abs(rng.standard_normal((4, 64)))

    path = tmp_path / "f.csv"
    mio.export_fields(path, g, U, M)
    rows = path.read_text().strip().split("\n")
    assert len(rows) - 1 == 4 * 64

    cols = mio.read_fields(path)
    assert np.array_equal(cols["u"], U.ravel())
    assert np.array_equal(cols["m"], M.ravel())
    # x varies fastest, y next, both tiled over time
    X1 = g.coords()[1].ravel()
    X0 = g.coords()[0].ravel()
    assert np.array_equal(cols["x"], np.tile(X1, 4))
    assert np.array_equal(cols["y"], np.tile(X0, 4))


def test_fields_single_level(tmp_path):
    g = Grid("torus", 8, 3, 1.0, dim=2)
    rng = np.random.default_rng(3)
    u = rng.standard_normal(64)
    m = np.abs(rng.standard_normal(64))
    path = tmp_path / "stat.csv"
    mio.export_fields(path, g, u, m, times=[0.0])
    cols = mio.read_fields(path)
    assert len(cols["t"]) == 64
    assert np.all(cols["t"] == 0.0)
    assert np.array_equal(cols["u"], u)


def test_huggett_csv(tmp_path):
    rng = np.random.default_rng(5)
    x = np.linspace(-0.15, 4.0, 12)
    V = rng.standard_normal((12, 2))
    M = np.abs(rng.standard_normal((12, 2)))
    path = tmp_path / "h.csv"
    mio.export_huggett(path, x, (0.1, 0.2), V, M, r=0.034, masses=(0.4, 0.6))

    text = path.read_text().split("\n")
    assert text[0] == "# r,0.034000000000000002"
    assert text[1] == "# mu1,0.40000000000000002"
    assert text[2] == "# mu2,0.59999999999999998"
    assert text[3] == "x,income,v,m"

    scalars, cols = mio.read_huggett(path)
    assert scalars["r"] == 0.034
    assert scalars["mu1"] == 0.4 and scalars["mu2"] == 0.6
    assert len(cols["x"]) == 24
    # income-major: first block is the low income, x repeats per block
    assert np.all(cols["income"][:12] == 0.1)
    assert np.all(cols["income"][12:] == 0.2)
    assert np.array_equal(cols["x"], np.tile(x, 2))
    assert np.array_equal(cols["v"], V.T.ravel())
    assert np.array_equal(cols["m"], M.T.ravel())


def test_turnpike_csv(tmp_path):
    t = np.linspace(0.0, 2.0, 9)
    d = np.exp(-3.0 * t) + 1e-9
    path = tmp_path / "turnpike.csv"
    mio.export_turnpike(path, t, d)
    rows = path.read_text().strip().split("\n")
    assert rows[0] == "t,distance"
    assert len(rows) == 10
    cols = mio.read_fields(path)
    assert np.array_equal(cols["t"], t)
    assert np.array_equal(cols["distance"], d)


def test_report_json(tmp_path):
    path = tmp_path / "report.json"
    rec = {
        "zeta": np.float64(1.5),
        "alpha": np.int64(3),
        "mass": np.array([1.0, 2.0]),
        "name": "demo",
    }
    mio.write_report(path, rec)
    text = path.read_text()
    # keys come out sorted so identical runs give identical bytes
    assert text.index('"alpha"') < text.index('"mass"') < text.index('"zeta"')
    back = json.loads(text)
    assert back["zeta"] == 1.5
    assert back["alpha"] == 3
    assert back["mass"] == [1.0, 2.0]


def test_export_is_atomic(tmp_path):
    # a failed write must not leave a truncated file behind
    g = Grid("torus", 4, 1, 1.0)
    target = tmp_path / "out" / "f.csv"
    try:
        mio.export_fields(target, g, np.zeros((2, 4)), np.zeros((2, 4)))
    except OSError:
        pass
    assert not target.exists()
