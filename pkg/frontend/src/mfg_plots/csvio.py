"""Readers for the solver's public CSV schemas.

Files are parsed, never written or modified. All readers raise SchemaError
when a file parses as text but does not match the documented layout, and
let OSError through untouched.
"""

import numpy as np


class SchemaError(ValueError):
    """The file is readable but does not match the expected CSV schema."""


def read_table(path):
    """Generic reader: optional '# key,value' scalar block, then a header
    row, then float rows. Returns (scalars, columns)."""
    with open(path) as fh:
        lines = [ln for ln in fh.read().split("\n") if ln.strip()]
    scalars = {}
    k = 0
    while k < len(lines) and lines[k].lstrip().startswith("#"):
        body = lines[k].lstrip()[1:]
        parts = [p.strip() for p in body.split(",")]
        if len(parts) != 2 or not parts[0]:
            raise SchemaError("%s: bad scalar line %r" % (path, lines[k]))
        try:
            scalars[parts[0]] = float(parts[1])
        except ValueError:
            raise SchemaError("%s: non-numeric scalar %r" % (path, lines[k]))
        k += 1
    if k >= len(lines):
        raise SchemaError("%s: no header row" % path)
    names = [c.strip() for c in lines[k].split(",")]
    if len(set(names)) != len(names) or any(not n for n in names):
        raise SchemaError("%s: bad header %r" % (path, lines[k]))
    rows = lines[k + 1:]
    if not rows:
        raise SchemaError("%s: no data rows" % path)
    parsed = []
    for ln in rows:
        cells = ln.split(",")
        if len(cells) != len(names):
            raise SchemaError("%s: row %r does not match the %d-column "
                              "header" % (path, ln, len(names)))
        try:
            parsed.append([float(c) for c in cells])
        except ValueError:
            raise SchemaError("%s: non-numeric row %r" % (path, ln))
    data = np.array(parsed)
    return scalars, {name: data[:, j] for j, name in enumerate(names)}


def _require_columns(path, columns, needed):
    missing = [c for c in needed if c not in columns]
    if missing:
        raise SchemaError("%s: missing columns %s (have %s)"
                          % (path, ", ".join(missing),
                             ", ".join(columns) or "none"))


def read_fields(path):
    """Field trajectories: t,x,u,m rows (t,x,y,u,m in 2D), time-major.

    Returns a dict with 't' (levels,), the node coordinates, and 'u', 'm'
    shaped (levels, nx) in 1D or (levels, ny, nx) in 2D; within a level x
    varies fastest, matching the writer.
    """
    _, cols = read_table(path)
    _require_columns(path, cols, ("t", "x", "u", "m"))
    t = cols["t"]
    tl = np.unique(t)
    if t.size % tl.size:
        raise SchemaError("%s: level blocks have unequal length" % path)
    per = t.size // tl.size
    if not np.array_equal(t.reshape(tl.size, per),
                          np.repeat(tl[:, None], per, axis=1)):
        raise SchemaError("%s: rows are not time-major" % path)
    u = cols["u"].reshape(tl.size, per)
    m = cols["m"].reshape(tl.size, per)
    x = cols["x"][:per]
    if "y" not in cols:
        return {"t": tl, "x": x, "u": u, "m": m}
    y = cols["y"][:per]
    xu, yu = np.unique(x), np.unique(y)
    if xu.size * yu.size != per:
        raise SchemaError("%s: node block is not a full x-y product" % path)
    if not np.array_equal(x.reshape(yu.size, xu.size),
                          np.repeat(xu[None, :], yu.size, axis=0)):
        raise SchemaError("%s: x must vary fastest within a level" % path)
    shape = (tl.size, yu.size, xu.size)
    return {"t": tl, "x": xu, "y": yu,
            "u": u.reshape(shape), "m": m.reshape(shape)}


def read_turnpike(path):
    """Distance-to-stationary curve: t,distance rows."""
    _, cols = read_table(path)
    _require_columns(path, cols, ("t", "distance"))
    return cols["t"], cols["distance"]


def read_huggett(path):
    """Wealth equilibrium: '# r/mu1/mu2' scalars, then x,income,v,m rows
    income-major. Returns (scalars, dict with x, incomes, v, m) where v and
    m are shaped (incomes, nodes)."""
    scalars, cols = read_table(path)
    missing = [k for k in ("r", "mu1", "mu2") if k not in scalars]
    if missing:
        raise SchemaError("%s: missing scalars %s"
                          % (path, ", ".join(missing)))
    _require_columns(path, cols, ("x", "income", "v", "m"))
    inc = cols["income"]
    levels = np.unique(inc)
    if levels.size != 2:
        raise SchemaError("%s: expected two income levels, found %d"
                          % (path, levels.size))
    if inc.size % levels.size:
        raise SchemaError("%s: income blocks have unequal length" % path)
    per = inc.size // levels.size
    if not np.array_equal(inc.reshape(levels.size, per),
                          np.repeat(levels[:, None], per, axis=1)):
        raise SchemaError("%s: rows are not income-major" % path)
    x = cols["x"][:per]
    if x.size < 2:
        raise SchemaError("%s: need at least two wealth nodes" % path)
    return scalars, {"x": x, "incomes": levels,
                     "v": cols["v"].reshape(levels.size, per),
                     "m": cols["m"].reshape(levels.size, per)}
