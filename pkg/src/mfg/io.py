"""Flat-file output: field CSVs, turnpike traces, JSON run reports.

Floats are written with %.17g so every double round-trips through the file
bitwise; reports serialize with sorted keys. Identical solver output therefore
produces identical bytes, which is what the reproducibility checks diff.

Writers go through a temp file and an atomic rename, so readers never see a
half-written artifact.
"""

import json
import os

import numpy as np


def _write_atomic(path, text):
    path = os.fspath(path)
    tmp = path + ".part"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _g(v):
    return "%.17g" % v


def export_fields(path, grid, U, M, times=None):
    """Write value/density trajectories as CSV, one row per node per level.

    Rows are time-major; within a level nodes follow the grid's flat order
    (x fastest, then y). Columns are t,x,u,m in 1D and t,x,y,u,m in 2D.
    Pass times=[0.0] with single-level arrays for stationary output.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if times is None:
        times = grid.times()
    times = np.asarray(times, dtype=float)
    if U.shape != M.shape or U.shape != (len(times), grid.n_space):
        raise ValueError("field shapes %s/%s do not match %d levels x %d nodes"
                         % (U.shape, M.shape, len(times), grid.n_space))

    cs = grid.coords()
    if grid.dim == 1:
        header = "t,x,u,m"
        space_cols = (cs[0],)
    else:
        # axis 0 of the flat node order is y, axis 1 is x
        header = "t,x,y,u,m"
        space_cols = (cs[1].ravel(), cs[0].ravel())

    lines = [header]
    for k, t in enumerate(times):
        ts = _g(t)
        u_lev, m_lev = U[k], M[k]
        for j in range(grid.n_space):
            cells = [ts] + [_g(c[j]) for c in space_cols]
            cells.append(_g(u_lev[j]))
            cells.append(_g(m_lev[j]))
            lines.append(",".join(cells))
    _write_atomic(path, "\n".join(lines) + "\n")


def read_fields(path):
    """Read a CSV written here back into a dict of named float columns."""
    with open(path) as fh:
        rows = [ln for ln in fh.read().split("\n") if ln and ln[0] != "#"]
    names = rows[0].split(",")
    data = np.array([[float(c) for c in ln.split(",")] for ln in rows[1:]])
    return {name: data[:, j] for j, name in enumerate(names)}


def export_huggett(path, x, incomes, V, M, r, masses):
    """Wealth-equilibrium CSV: scalar block, then x,income,v,m income-major."""
    V = np.asarray(V, dtype=float)
    M = np.asarray(M, dtype=float)
    lines = ["# r," + _g(r),
             "# mu1," + _g(masses[0]),
             "# mu2," + _g(masses[1]),
             "x,income,v,m"]
    for j, y in enumerate(incomes):
        ys = _g(y)
        for i in range(len(x)):
            lines.append(",".join((_g(x[i]), ys, _g(V[i, j]), _g(M[i, j]))))
    _write_atomic(path, "\n".join(lines) + "\n")


def read_huggett(path):
    """Return (scalars, columns) for a wealth-equilibrium CSV."""
    with open(path) as fh:
        rows = [ln for ln in fh.read().split("\n") if ln]
    scalars = {}
    body = 0
    for ln in rows:
        if ln[0] != "#":
            break
        key, val = ln[1:].strip().split(",")
        scalars[key] = float(val)
        body += 1
    names = rows[body].split(",")
    data = np.array([[float(c) for c in ln.split(",")] for ln in rows[body + 1:]])
    return scalars, {name: data[:, j] for j, name in enumerate(names)}


def export_turnpike(path, times, distances):
    lines = ["t,distance"]
    for t, d in zip(times, distances):
        lines.append(_g(t) + "," + _g(d))
    _write_atomic(path, "\n".join(lines) + "\n")


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError("cannot serialize %r" % type(obj))


def write_report(path, record):
    text = json.dumps(record, sort_keys=True, indent=2, default=_json_default)
    _write_atomic(path, text + "\n")


def read_report(path):
    with open(path) as fh:
        return json.load(fh)
