"""Uniform grids on the torus, an interval, or a rectangle, plus the
finite-difference operators every other module builds on.

Space is discretized with N_h cells per axis (N_h nodes on a periodic axis,
N_h + 1 on a bounded one, endpoints included), time with N_T implicit steps
of size dt = T / N_T.  Spatial fields are C-ordered numpy arrays of shape
grid.space_shape; space-time fields stack levels along axis 0.

Sign and slot conventions used throughout:

    time_diff(W)[n]   = (W[n+1] - W[n]) / dt
    laplacian(W)[i]   = -(2 W_i - W_{i+1} - W_{i-1}) / h^2   (per axis, summed)
    nabla(W)[..., 2a]   = forward difference along axis a
    nabla(W)[..., 2a+1] = backward difference along axis a

Bounded axes close the stencils with mirror ghosts (reflection across the
boundary node), which is the homogeneous-Neumann wall rule; rows that need a
different role (exit, entrance) are overwritten at assembly time by the
consumers of `face_nodes`.
"""

import numpy as np
import scipy.sparse as sp

VALID_KINDS = ("torus", "interval", "rectangle")
WALL = {"type": "wall"}


def _check_role(role):
    t = role.get("type")
    if t == "wall":
        return
    if t == "exit":
        float(role["cost"])
        return
    if t == "entrance":
        float(role["flux"])
        float(role["cost"])
        return
    raise ValueError(f"unknown boundary role {role!r}")


class Grid:
    """Geometry, spacing, and index bookkeeping for one problem.

    Parameters
    ----------
    kind : 'torus' | 'interval' | 'rectangle'
    N_h : cells per spatial axis (equal spacing on every axis is enforced)
    N_T : time steps
    T : horizon
    dim : spatial dimension for the torus (1 or 2); bounded kinds fix it
    length : torus circumference (torus only)
    bounds : (a, b) for an interval, ((a0, b0), (a1, b1)) for a rectangle
    boundary : face -> role dict for bounded grids; faces are 'left'/'right'
        in 1D and 'left'/'right'/'bottom'/'top' in 2D ('left' is the minimum
        of the last axis, 'bottom' the minimum of axis 0). Defaults to walls.
    """

    def __init__(self, kind, N_h, N_T, T, dim=None, length=1.0, bounds=None,
                 boundary=None):
        if kind not in VALID_KINDS:
            raise ValueError(f"kind must be one of {VALID_KINDS}, got {kind!r}")
        if N_h < 2 or N_T < 1:
            raise ValueError("need N_h >= 2 and N_T >= 1")
        self.kind = kind
        self.N_h = int(N_h)
        self.N_T = int(N_T)
        self.T = float(T)
        self.dt = self.T / self.N_T
        fixed = {"interval": 1, "rectangle": 2}
        if kind in fixed:
            if dim is not None and dim != fixed[kind]:
                raise ValueError(f"{kind} is {fixed[kind]}-dimensional")
            self.dim = fixed[kind]
        else:
            self.dim = 1 if dim is None else int(dim)
            if self.dim not in (1, 2):
                raise ValueError("dim must be 1 or 2")
        self.periodic = kind == "torus"

        if kind == "torus":
            if bounds is not None:
                raise ValueError("torus takes length, not bounds")
            self.length = float(length)
            self.h = self.length / self.N_h
            self.axis_nodes = (self.N_h,) * self.dim
            self.origins = (0.0,) * self.dim
        else:
            if kind == "interval":
                bounds = (0.0, 1.0) if bounds is None else bounds
                bounds = (tuple(map(float, bounds)),)
            else:
                bounds = ((0.0, 1.0), (0.0, 1.0)) if bounds is None else bounds
                bounds = tuple(tuple(map(float, b)) for b in bounds)
            widths = [b - a for a, b in bounds]
            if any(w <= 0 for w in widths):
                raise ValueError("bounds must be increasing")
            h = widths[0] / self.N_h
            if any(abs(w / self.N_h - h) > 1e-12 * abs(h) for w in widths):
                raise ValueError("axes must share one spacing h")
            self.bounds = bounds
            self.h = h
            self.axis_nodes = (self.N_h + 1,) * self.dim
            self.origins = tuple(a for a, _ in bounds)

        self.space_shape = self.axis_nodes
        self.n_space = int(np.prod(self.space_shape))

        if self.periodic:
            if boundary:
                raise ValueError("torus has no boundary")
            self.boundary = None
        else:
            faces = ("left", "right") if self.dim == 1 else ("left", "right", "bottom", "top")
            boundary = dict(boundary or {})
            for face in boundary:
                if face not in faces:
                    raise ValueError(f"unknown face {face!r}")
                _check_role(boundary[face])
            for face in faces:
                boundary.setdefault(face, WALL)
            self.boundary = boundary

        self._build_tables()

    # -- index tables ------------------------------------------------------

    def _build_tables(self):
        idx = np.arange(self.n_space).reshape(self.space_shape)
        self.ip = []   # flat index of +1 neighbor along each axis
        self.im = []   # flat index of -1 neighbor
        for a in range(self.dim):
            if self.periodic:
                plus = np.roll(idx, -1, axis=a)
                minus = np.roll(idx, 1, axis=a)
            else:
                plus = np.empty_like(idx)
                minus = np.empty_like(idx)
                n = self.axis_nodes[a]
                sl = [slice(None)] * self.dim

                def take(i):
                    s = list(sl)
                    s[a] = i
                    return idx[tuple(s)]

                def put(dest, i, val):
                    s = list(sl)
                    s[a] = i
                    dest[tuple(s)] = val

                put(plus, slice(0, n - 1), take(slice(1, n)))
                put(plus, n - 1, take(n - 2))       # mirror ghost
                put(minus, slice(1, n), take(slice(0, n - 1)))
                put(minus, 0, take(1))              # mirror ghost
            self.ip.append(plus.ravel())
            self.im.append(minus.ravel())

    def flat(self, *multi):
        """Flat C-order index of a node given its per-axis indices."""
        return int(np.ravel_multi_index(multi, self.space_shape))

    def face_nodes(self, face):
        """Flat indices of the nodes on one boundary face."""
        if self.periodic:
            raise ValueError("torus has no faces")
        idx = np.arange(self.n_space).reshape(self.space_shape)
        axis = {"left": -1, "right": -1, "bottom": 0, "top": 0}[face]
        last = {"left": 0, "right": self.axis_nodes[-1] - 1,
                "bottom": 0, "top": self.axis_nodes[0] - 1}[face]
        if self.dim == 1:
            if face in ("bottom", "top"):
                raise ValueError("1D grid has faces 'left' and 'right'")
            return np.array([idx[last]])
        sl = [slice(None), slice(None)]
        sl[axis] = last
        return idx[tuple(sl)].ravel()

    def coords(self):
        """Per-axis coordinate arrays, each shaped space_shape."""
        axes = [self.origins[a] + self.h * np.arange(self.axis_nodes[a])
                for a in range(self.dim)]
        if self.dim == 1:
            return (axes[0],)
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def times(self):
        return self.dt * np.arange(self.N_T + 1)

    def with_time(self, N_T, T):
        """Same spatial layout on a different time interval."""
        if self.kind == "torus":
            return Grid("torus", self.N_h, N_T, T, dim=self.dim,
                        length=self.length)
        bounds = self.bounds[0] if self.kind == "interval" else self.bounds
        return Grid(self.kind, self.N_h, N_T, T, bounds=bounds,
                    boundary=self.boundary)

    # -- difference operators ---------------------------------------------

    def shift_plus(self, w, axis=0):
        flat = np.asarray(w).reshape(-1, self.n_space)
        out = flat[:, self.ip[axis]]
        return out.reshape(np.shape(w))

    def shift_minus(self, w, axis=0):
        flat = np.asarray(w).reshape(-1, self.n_space)
        out = flat[:, self.im[axis]]
        return out.reshape(np.shape(w))

    def laplacian(self, w):
        """Second-difference Laplacian with periodic or mirror closure."""
        out = np.zeros_like(np.asarray(w, dtype=float))
        for a in range(self.dim):
            out += self.shift_plus(w, a) + self.shift_minus(w, a) - 2.0 * np.asarray(w)
        return out / self.h ** 2

    def nabla(self, w):
        """One-sided gradient pairs, shape w.shape + (2*dim,).

        Slot 2a holds the forward difference along axis a at the node, slot
        2a+1 the backward difference (the forward difference at the previous
        node), matching the (p1, p2) argument order of the discrete
        Hamiltonians.
        """
        w = np.asarray(w, dtype=float)
        out = np.empty(w.shape + (2 * self.dim,))
        for a in range(self.dim):
            out[..., 2 * a] = (self.shift_plus(w, a) - w) / self.h
            out[..., 2 * a + 1] = (w - self.shift_minus(w, a)) / self.h
        return out

    def time_diff(self, w):
        """Forward time difference (W^{n+1} - W^n)/dt along axis 0."""
        w = np.asarray(w, dtype=float)
        return (w[1:] - w[:-1]) / self.dt

    # -- sparse operators --------------------------------------------------

    def shift_matrix(self, axis, direction):
        """Sparse permutation-like matrix taking w to its +/-1 neighbor values."""
        n = self.n_space
        table = self.ip[axis] if direction > 0 else self.im[axis]
        return sp.csr_matrix((np.ones(n), (np.arange(n), table)), shape=(n, n))

    def laplacian_matrix(self):
        n = self.n_space
        out = sp.csr_matrix((n, n))
        eye = sp.identity(n, format="csr")
        for a in range(self.dim):
            out = out + (self.shift_matrix(a, +1) + self.shift_matrix(a, -1) - 2.0 * eye)
        return (out / self.h ** 2).tocsr()

    def dplus_matrix(self, axis):
        eye = sp.identity(self.n_space, format="csr")
        return ((self.shift_matrix(axis, +1) - eye) / self.h).tocsr()

    def dminus_matrix(self, axis):
        eye = sp.identity(self.n_space, format="csr")
        return ((eye - self.shift_matrix(axis, -1)) / self.h).tocsr()


def cell_average_density(grid, m0, gauss_points=3):
    """Nodal density from a callable or array, normalized so h^d sum = 1.

    A callable is averaged over each node's cell with a tensor Gauss rule;
    an array is taken as nodal values.  Either way the result is rescaled
    exactly, so the discrete mass convention h^d * sum(M) = 1 holds to
    rounding.
    """
    if callable(m0):
        xg, wg = np.polynomial.legendre.leggauss(gauss_points)
        xg = 0.5 * grid.h * xg       # offsets within a cell of width h
        wg = 0.5 * wg                # weights summing to 1
        coords = grid.coords()
        vals = np.zeros(grid.space_shape)
        if grid.dim == 1:
            for o, w in zip(xg, wg):
                vals += w * np.asarray(m0(coords[0] + o), dtype=float)
        else:
            for ox, wx in zip(xg, wg):
                for oy, wy in zip(xg, wg):
                    vals += wx * wy * np.asarray(
                        m0(coords[0] + ox, coords[1] + oy), dtype=float)
    else:
        vals = np.array(m0, dtype=float).reshape(grid.space_shape)
    if np.any(vals < 0):
        raise ValueError("initial density must be nonnegative")
    total = vals.sum() * grid.h ** grid.dim
    if total <= 0:
        raise ValueError("initial density must have positive mass")
    return vals / total


def mass(grid, m):
    """Discrete total mass h^d * sum of one density level."""
    return float(np.sum(m) * grid.h ** grid.dim)


def weighted_l2(grid, w):
    """Space-weighted l2 norm (h^d sum w^2)^(1/2) of one level."""
    return float(np.sqrt(grid.h ** grid.dim * np.sum(np.square(w))))


def spacetime_l2(grid, w):
    """(dt h^d sum w^2)^(1/2) over a stack of levels."""
    return float(np.sqrt(grid.dt * grid.h ** grid.dim * np.sum(np.square(w))))
