"""Coupled backward-forward steppers for the discrete mean field system.

The backward (value) equation is stepped implicitly with a damped Newton
method per time level:

    (U^n - U^{n+1})/dt - nu lap U^n + H(x, nabla U^n) = f(x, M^{n+1})

and the forward (density) equation reuses its structure: the transport
operator is minus the transpose of the Newton advection block, so on a torus
each forward step solves the transposed factorization of the matching
backward step.  On bounded grids the forward matrix is assembled in flux
form face by face, which keeps the scheme conservative, and boundary roles
(wall, entrance, exit) become row edits and sources.  Either way the step
matrix has the M-matrix sign pattern, so densities stay nonnegative and
h^d sum M evolves only through the declared boundary fluxes.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from mfg.grid import cell_average_density, mass


class SolverError(RuntimeError):
    """A nonlinear or linear solve failed to reach its tolerance."""


# -- couplings -------------------------------------------------------------

class LocalCoupling:
    """Pointwise cost f(x, m) given as callables."""

    local = True

    def __init__(self, f, df=None):
        self._f = f
        self._df = df

    def value(self, x, m):
        return np.asarray(self._f(x, np.asarray(m, dtype=float)), dtype=float)

    def deriv(self, x, m):
        if self._df is not None:
            return np.asarray(self._df(x, np.asarray(m, dtype=float)), dtype=float)
        eps = 1e-7
        return (self.value(x, np.asarray(m) + eps) - self.value(x, np.asarray(m) - eps)) / (2 * eps)

    def deriv_apply(self, x, m, dm):
        return self.deriv(x, m) * np.asarray(dm)

    def mfc_value(self, x, m):
        m = np.asarray(m, dtype=float)
        return self.value(x, m) + m * self.deriv(x, m)


class PowerCoupling(LocalCoupling):
    """f(x, m) = m^a - offset(x), with the primitives the duality layer needs.

    F is the antiderivative in m, F* its convex conjugate on {m >= 0}:
    F*(y) = a/(a+1) * (y + offset)_+^{(a+1)/a}.
    """

    def __init__(self, a=2.0, offset=None):
        self.a = float(a)
        self.offset = offset

    def _off(self, x):
        if self.offset is None:
            return 0.0
        return np.asarray(self.offset(*x), dtype=float)

    def value(self, x, m):
        m = np.maximum(np.asarray(m, dtype=float), 0.0)
        return m ** self.a - self._off(x)

    def deriv(self, x, m):
        m = np.maximum(np.asarray(m, dtype=float), 0.0)
        return self.a * m ** (self.a - 1.0)

    def mfc_value(self, x, m):
        m = np.maximum(np.asarray(m, dtype=float), 0.0)
        return (1.0 + self.a) * m ** self.a - self._off(x)

    def primitive(self, x, m):
        m = np.maximum(np.asarray(m, dtype=float), 0.0)
        return m ** (self.a + 1.0) / (self.a + 1.0) - self._off(x) * m

    def conjugate(self, x, y):
        s = np.maximum(np.asarray(y, dtype=float) + self._off(x), 0.0)
        return self.a / (self.a + 1.0) * s ** ((self.a + 1.0) / self.a)

    def conj_deriv(self, x, y):
        s = np.maximum(np.asarray(y, dtype=float) + self._off(x), 0.0)
        return s ** (1.0 / self.a)

    def conj_deriv2(self, x, y, cap=1e-8):
        # zero on the inactive side; the blowup at the kink (a > 1) is capped
        s = np.asarray(y, dtype=float) + self._off(x)
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = (1.0 / self.a) * np.maximum(s[pos], cap) ** (1.0 / self.a - 1.0)
        return out


class LinearCoupling(LocalCoupling):
    """f(x, m) = c m; F*(y) = (y_+)^2 / (2c)."""

    def __init__(self, c=1.0):
        self.c = float(c)

    def value(self, x, m):
        return self.c * np.asarray(m, dtype=float)

    def deriv(self, x, m):
        return np.full(np.shape(m), self.c)

    def mfc_value(self, x, m):
        return 2.0 * self.c * np.asarray(m, dtype=float)

    def primitive(self, x, m):
        return 0.5 * self.c * np.asarray(m, dtype=float) ** 2

    def conjugate(self, x, y):
        return np.maximum(np.asarray(y, dtype=float), 0.0) ** 2 / (2.0 * self.c)

    def conj_deriv(self, x, y):
        return np.maximum(np.asarray(y, dtype=float), 0.0) / self.c

    def conj_deriv2(self, x, y, cap=1e-8):
        return (np.asarray(y, dtype=float) > 0).astype(float) / self.c


class NonlocalCoupling:
    """f = (I - lap)^{-2} m, a smoothing cost with a symmetric PSD kernel."""

    local = False

    def __init__(self, grid):
        self.grid = grid
        n = grid.n_space
        A = (sp.identity(n, format="csc") - grid.laplacian_matrix().tocsc())
        self._lu = spla.splu(A)

    def _apply(self, v):
        return self._lu.solve(self._lu.solve(np.asarray(v, dtype=float)))

    def value(self, x, m):
        return self._apply(m)

    def deriv_apply(self, x, m, dm):
        return self._apply(dm)

    def mfc_value(self, x, m):
        raise SolverError("planner transform needs a local coupling")


class ZeroTerminal:
    def value(self, x, m):
        return np.zeros(np.shape(m))

    def deriv_apply(self, x, m, dm):
        return np.zeros(np.shape(m))


class FunctionTerminal:
    """Terminal cost phi(x), independent of the final density."""

    def __init__(self, phi):
        self._phi = phi

    def value(self, x, m):
        return np.broadcast_to(np.asarray(self._phi(*x), dtype=float),
                               np.shape(m)).copy()

    def deriv_apply(self, x, m, dm):
        return np.zeros(np.shape(m))


class LocalTerminal:
    """Terminal cost phi(x, m) with an explicit density derivative."""

    def __init__(self, phi, dphi):
        self._phi = phi
        self._dphi = dphi

    def value(self, x, m):
        return np.asarray(self._phi(x, np.asarray(m, dtype=float)), dtype=float)

    def deriv_apply(self, x, m, dm):
        return np.asarray(self._dphi(x, np.asarray(m, dtype=float))) * np.asarray(dm)


class ArrayTerminal:
    """Terminal cost pinned to nodal values (time-splitting restarts)."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float).ravel().copy()

    def value(self, x, m):
        return self.values.copy()

    def deriv_apply(self, x, m, dm):
        return np.zeros(np.shape(m))


# -- boundary plans ----------------------------------------------------------

class BoundaryPlan:
    """Resolved boundary roles: value rows, density rows, and sources.

    u_nodes/u_values: Dirichlet rows of the backward equation (exits and
    entrances pin the value to the posted cost).  m_zero_nodes: density
    rows pinned to zero (exits).  m_source: per-node inflow density rate,
    adding dt * h^d * sum(m_source) of mass per step.  exit_faces lists
    (interior node, exit node, axis) triples for flux accounting.
    """

    def __init__(self, grid):
        self.grid = grid
        self.u_nodes = np.zeros(0, dtype=int)
        self.u_values = np.zeros(0)
        self.m_zero_nodes = np.zeros(0, dtype=int)
        self.m_source = np.zeros(grid.n_space)
        self.exit_faces = []
        self.entrance_flux = 0.0

    @property
    def trivial(self):
        return (self.u_nodes.size == 0 and self.m_zero_nodes.size == 0
                and self.entrance_flux == 0.0)


def _face_cost(grid, nodes, cost):
    if callable(cost):
        coords = tuple(c.ravel()[nodes] for c in grid.coords())
        return np.asarray(cost(*coords), dtype=float)
    return np.full(nodes.size, float(cost))


def _inward_axis(grid, face):
    axis = {"left": grid.dim - 1, "right": grid.dim - 1, "bottom": 0, "top": 0}[face]
    step = 1 if face in ("left", "bottom") else -1
    return axis, step


def resolve_boundary(grid):
    plan = BoundaryPlan(grid)
    if grid.periodic or not grid.boundary:
        return plan
    u_nodes, u_values = [], []
    for face, role in grid.boundary.items():
        if role["type"] == "wall":
            continue
        nodes = grid.face_nodes(face)
        u_nodes.append(nodes)
        u_values.append(_face_cost(grid, nodes, role["cost"]))
        if role["type"] == "exit":
            plan.m_zero_nodes = np.concatenate([plan.m_zero_nodes, nodes])
            axis, step = _inward_axis(grid, face)
            table = grid.ip[axis] if step > 0 else grid.im[axis]
            for node in nodes:
                plan.exit_faces.append((int(table[node]), int(node), axis,
                                        step))
        else:
            flux = float(role["flux"])
            plan.m_source[nodes] += flux / (nodes.size * grid.h ** grid.dim)
            plan.entrance_flux += flux
    if u_nodes:
        cat = np.concatenate(u_nodes)
        vals = np.concatenate(u_values)
        _, keep = np.unique(cat, return_index=True)
        plan.u_nodes = cat[keep]
        plan.u_values = vals[keep]
    return plan


# -- cached per-grid operators ----------------------------------------------

def _ops(grid):
    cache = getattr(grid, "_core_ops", None)
    if cache is not None:
        return cache
    n = grid.n_space
    dplus = [grid.dplus_matrix(a) for a in range(grid.dim)]
    dminus = [grid.dminus_matrix(a) for a in range(grid.dim)]
    faces = []
    idx = np.arange(n).reshape(grid.space_shape)
    for a in range(grid.dim):
        if grid.periodic:
            i = idx.ravel()
            j = grid.ip[a]
        else:
            sl_i = [slice(None)] * grid.dim
            sl_j = [slice(None)] * grid.dim
            sl_i[a] = slice(0, grid.axis_nodes[a] - 1)
            sl_j[a] = slice(1, grid.axis_nodes[a])
            i = idx[tuple(sl_i)].ravel()
            j = idx[tuple(sl_j)].ravel()
        faces.append((i, j))
    rows, cols, vals = [], [], []
    for i, j in faces:
        rows += [i, i, j, j]
        cols += [i, j, j, i]
        vals += [-np.ones(i.size), np.ones(i.size),
                 -np.ones(i.size), np.ones(i.size)]
    dflux = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n)) / grid.h ** 2
    cache = {
        "lap": grid.laplacian_matrix().tocsr(),
        "dplus": dplus,
        "dminus": dminus,
        "eye": sp.identity(n, format="csr"),
        "dflux": dflux.tocsr(),
        "faces": faces,
    }
    grid._core_ops = cache
    return cache


def advection_matrix(grid, hp):
    """Flux-form transport operator T(., hp) acting on densities.

    Row i of the result times M gives (G_{i+1/2} - G_{i-1/2})/h summed over
    axes, with the face value G = M_i Hp_fwd(i) + M_j Hp_bwd(j).  Columns sum
    to zero, so the forward step conserves mass; off-diagonal signs follow
    from Hp_fwd <= 0 <= Hp_bwd.
    """
    ops = _ops(grid)
    n = grid.n_space
    rows, cols, vals = [], [], []
    for a, (i, j) in enumerate(ops["faces"]):
        g1 = hp[i, 2 * a] / grid.h
        g2 = hp[j, 2 * a + 1] / grid.h
        rows += [i, i, j, j]
        cols += [i, j, i, j]
        vals += [g1, g2, -g1, -g2]
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n))


# -- backward sweep ----------------------------------------------------------

def hjb_jacobian(grid, ham, nu, x, u, z=None, plan=None):
    ops = _ops(grid)
    hp = ham.grad(x, grid.nabla(u), z) if z is not None else ham.grad(x, grid.nabla(u))
    J = ops["eye"] / grid.dt - nu * ops["lap"]
    for s in range(2 * grid.dim):
        D = ops["dplus"][s // 2] if s % 2 == 0 else ops["dminus"][s // 2]
        J = J + sp.diags(hp[:, s]) @ D
    if plan is not None and plan.u_nodes.size:
        J = J.tolil()
        J[plan.u_nodes, :] = 0.0
        J[plan.u_nodes, plan.u_nodes] = 1.0
    return J.tocsc()


def hjb_residual_level(grid, ham, nu, x, u, u_next, f, z=None, plan=None):
    r = (u - u_next) / grid.dt - nu * grid.laplacian(u) - f
    r = r + (ham.value(x, grid.nabla(u), z) if z is not None
             else ham.value(x, grid.nabla(u)))
    if plan is not None and plan.u_nodes.size:
        r[plan.u_nodes] = u[plan.u_nodes] - plan.u_values
    return r


def hjb_step(grid, ham, nu, x, u_next, f, z=None, plan=None, u_guess=None,
             tol=1e-10, max_iter=100):
    """One implicit backward step by damped Newton; returns (u, lu_of_J)."""
    u = np.array(u_next if u_guess is None else u_guess, dtype=float)
    r = hjb_residual_level(grid, ham, nu, x, u, u_next, f, z, plan)
    rn = np.max(np.abs(r))
    for _ in range(max_iter):
        if rn <= tol:
            break
        lu = spla.splu(hjb_jacobian(grid, ham, nu, x, u, z, plan))
        du = lu.solve(-r)
        alpha = 1.0
        while alpha > 2.0 ** -20:
            u_try = u + alpha * du
            r_try = hjb_residual_level(grid, ham, nu, x, u_try, u_next, f, z, plan)
            rn_try = np.max(np.abs(r_try))
            if rn_try < rn * (1.0 - 1e-4 * alpha) or rn_try <= tol:
                break
            alpha *= 0.5
        else:
            raise SolverError("backward step line search stalled")
        u, r, rn = u_try, r_try, rn_try
    else:
        raise SolverError(f"backward step did not reach {tol} (residual {rn:.2e})")
    return u, spla.splu(hjb_jacobian(grid, ham, nu, x, u, z, plan))


def hjb_backward(grid, ham, nu, x, f_levels, terminal_values, z_levels=None,
                 plan=None, u_guess_levels=None, tol=1e-10):
    """Backward sweep; returns U of shape (N_T+1, n) and the per-level LUs."""
    n = grid.n_space
    U = np.zeros((grid.N_T + 1, n))
    U[-1] = terminal_values
    lus = [None] * grid.N_T
    for lev in range(grid.N_T - 1, -1, -1):
        z = None if z_levels is None else z_levels[lev]
        guess = None if u_guess_levels is None else u_guess_levels[lev]
        U[lev], lus[lev] = hjb_step(grid, ham, nu, x, U[lev + 1], f_levels[lev],
                                    z=z, plan=plan, u_guess=guess, tol=tol)
    return U, lus


# -- forward sweep -----------------------------------------------------------

def kfp_matrix(grid, ham, nu, x, u, z=None, plan=None):
    """Flux-form forward step matrix I/dt - nu D - T at drift from u."""
    ops = _ops(grid)
    hp = ham.grad(x, grid.nabla(u), z) if z is not None else ham.grad(x, grid.nabla(u))
    K = ops["eye"] / grid.dt - nu * ops["dflux"] - advection_matrix(grid, hp)
    if plan is not None and plan.m_zero_nodes.size:
        K = K.tolil()
        K[plan.m_zero_nodes, :] = 0.0
        K[plan.m_zero_nodes, plan.m_zero_nodes] = 1.0
    return K.tocsc()


def exit_face_flux(grid, ham, nu, x, u, m, plan, z=None):
    """Outflow rate through each registered exit face at the state (u, m)."""
    if not plan.exit_faces:
        return np.zeros(0)
    hp = ham.grad(x, grid.nabla(u), z) if z is not None else ham.grad(x, grid.nabla(u))
    out = np.zeros(len(plan.exit_faces))
    scale = grid.h ** (grid.dim - 1)
    for k, (i, j, a, step) in enumerate(plan.exit_faces):
        # the face between interior node i and exit node j, counted outward;
        # on a minus-side exit (step > 0) outward is the -axis direction, so
        # the upwind branch pairing flips along with the sign
        if step > 0:
            adv = m[i] * hp[i, 2 * a + 1] + m[j] * hp[j, 2 * a]
        else:
            adv = -(m[i] * hp[i, 2 * a] + m[j] * hp[j, 2 * a + 1])
        dif = nu * (m[i] - m[j]) / grid.h
        out[k] = (adv + dif) * scale
    return out


def kfp_forward(grid, ham, nu, x, U, m0_values, z_levels=None, plan=None,
                lus=None):
    """Forward sweep; returns (M, info) with mass and boundary-flux traces.

    On a torus with per-level LUs from the backward sweep, each step solves
    the transposed backward factorization; otherwise the flux-form matrix is
    assembled and factorized per level.  Initial mass placed on exit nodes is
    annihilated by the Dirichlet row in the first step; it shows up in the
    absorbed-mass trace but not in the face fluxes, so start from an initial
    density that vanishes on exits.
    """
    n = grid.n_space
    M = np.zeros((grid.N_T + 1, n))
    M[0] = m0_values
    use_transpose = (plan is None or plan.trivial) and lus is not None \
        and grid.periodic
    src = None if plan is None else plan.m_source
    masses = np.zeros(grid.N_T + 1)
    masses[0] = mass(grid, M[0])
    absorbed = np.zeros(grid.N_T)
    exit_flux = np.zeros((grid.N_T, len(plan.exit_faces) if plan else 0))
    for lev in range(grid.N_T):
        z = None if z_levels is None else z_levels[lev]
        rhs = M[lev] / grid.dt
        if src is not None:
            rhs = rhs + src
        if use_transpose:
            M[lev + 1] = lus[lev].solve(rhs, trans="T")
        else:
            if plan is not None and plan.m_zero_nodes.size:
                rhs = rhs.copy()
                rhs[plan.m_zero_nodes] = 0.0
            K = kfp_matrix(grid, ham, nu, x, U[lev], z=z, plan=plan)
            M[lev + 1] = spla.splu(K).solve(rhs)
            if plan is not None and plan.m_zero_nodes.size:
                M[lev + 1][plan.m_zero_nodes] = 0.0
        masses[lev + 1] = mass(grid, M[lev + 1])
        if plan is not None:
            inflow = plan.entrance_flux
            absorbed[lev] = masses[lev] - masses[lev + 1] + grid.dt * inflow
            if plan.exit_faces:
                exit_flux[lev] = exit_face_flux(grid, ham, nu, x, U[lev],
                                                M[lev + 1], plan, z=z)
    return M, {"mass": masses, "absorbed": absorbed, "exit_flux": exit_flux}


# -- linearized sweeps (for the outer Newton solver) -------------------------

def linearized_hjb_backward(grid, lus, df_levels, dphi):
    n = grid.n_space
    dU = np.zeros((grid.N_T + 1, n))
    dU[-1] = dphi
    for lev in range(grid.N_T - 1, -1, -1):
        dU[lev] = lus[lev].solve(df_levels[lev] + dU[lev + 1] / grid.dt)
    return dU


def linearized_kfp_forward(grid, ham, nu, x, U, M, lus, dU, z_levels=None):
    n = grid.n_space
    dM = np.zeros((grid.N_T + 1, n))
    for lev in range(grid.N_T):
        z = None if z_levels is None else z_levels[lev]
        q = grid.nabla(U[lev])
        dq = grid.nabla(dU[lev])
        dhp = ham.dgrad(x, q, dq, z) if z is not None else ham.dgrad(x, q, dq)
        rhs = dM[lev] / grid.dt + advection_matrix(grid, dhp) @ M[lev + 1]
        dM[lev + 1] = lus[lev].solve(rhs, trans="T")
    return dM


# -- problem bundle ----------------------------------------------------------

class MFGProblem:
    """Grid, Hamiltonian, couplings, and initial data for one population.

    mode='mfg' solves the fixed point of the game; mode='mfc' solves the
    planner's problem for the same primitives: the backward equation sees
    the transformed cost f + m f' and congestion weight z + m z', while the
    forward transport keeps the base weight (the control-to-drift map is
    unchanged).
    """

    def __init__(self, grid, ham, nu, coupling, terminal, m0, mode="mfg",
                 name=None):
        if mode not in ("mfg", "mfc"):
            raise ValueError("mode must be 'mfg' or 'mfc'")
        self.grid = grid
        self.ham = ham
        self.nu = float(nu)
        self.coupling = coupling
        self.terminal = terminal
        self.mode = mode
        self.name = name
        self.plan = resolve_boundary(grid)
        if callable(m0):
            m0_vals = cell_average_density(grid, m0).ravel()
            if self.plan.m_zero_nodes.size:
                # the initial datum must satisfy the exit constraint M = 0
                m0_vals[self.plan.m_zero_nodes] = 0.0
                m0_vals /= m0_vals.sum() * grid.h ** grid.dim
        else:
            # nodal values from a restart or time split: trust the caller's
            # mass (it may be < 1 after absorption), only pin the exits
            m0_vals = np.asarray(m0, dtype=float).ravel().copy()
            if self.plan.m_zero_nodes.size:
                m0_vals[self.plan.m_zero_nodes] = 0.0
        self.m0 = m0_vals
        self.x = tuple(c.ravel() for c in grid.coords())

    def variant(self, grid=None, nu=None, m0=None, terminal=None, mode=None):
        """Clone with selected pieces replaced (continuation, restarts)."""
        return MFGProblem(self.grid if grid is None else grid,
                          self.ham,
                          self.nu if nu is None else nu,
                          self.coupling,
                          self.terminal if terminal is None else terminal,
                          self.m0 if m0 is None else m0,
                          mode=self.mode if mode is None else mode,
                          name=self.name)

    @property
    def congested(self):
        return hasattr(self.ham, "z_of")

    def _f(self, m):
        if self.mode == "mfc":
            return self.coupling.mfc_value(self.x, m)
        return self.coupling.value(self.x, m)

    def _z_hjb(self, m):
        if self.mode == "mfc":
            return self.ham.z_mfc(m)
        return self.ham.z_of(m)

    def data_from(self, M):
        """Frozen per-level data (costs and congestion weights) from a
        density path, the fixed-point variable of the solvers."""
        nt = self.grid.N_T
        f = np.stack([self._f(M[lev + 1]) for lev in range(nt)])
        term = self.terminal.value(self.x, M[nt])
        data = {"f": f, "terminal": term, "z_hjb": None, "z_kfp": None}
        if self.congested:
            data["z_hjb"] = np.stack([self._z_hjb(M[lev + 1]) for lev in range(nt)])
            data["z_kfp"] = np.stack([self.ham.z_of(M[lev + 1]) for lev in range(nt)])
        return data

    def hjb(self, data, u_guess_levels=None, tol=1e-10):
        return hjb_backward(self.grid, self.ham, self.nu, self.x, data["f"],
                            data["terminal"], z_levels=data["z_hjb"],
                            plan=self.plan, u_guess_levels=u_guess_levels,
                            tol=tol)

    def kfp(self, U, data, lus=None):
        use_lus = lus if (self.mode == "mfg" and not self.congested) else None
        return kfp_forward(self.grid, self.ham, self.nu, self.x, U, self.m0,
                           z_levels=data["z_kfp"], plan=self.plan, lus=use_lus)

    def residual(self, U, M):
        """Sup norm of the full discrete system at (U, M)."""
        g = self.grid
        data = self.data_from(M)
        worst = float(np.max(np.abs(U[-1] - data["terminal"])))
        worst = max(worst, float(np.max(np.abs(M[0] - self.m0))))
        for lev in range(g.N_T):
            z_h = None if data["z_hjb"] is None else data["z_hjb"][lev]
            z_k = None if data["z_kfp"] is None else data["z_kfp"][lev]
            r = hjb_residual_level(g, self.ham, self.nu, self.x, U[lev],
                                   U[lev + 1], data["f"][lev], z=z_h,
                                   plan=self.plan)
            worst = max(worst, float(np.max(np.abs(r))))
            K = kfp_matrix(g, self.ham, self.nu, self.x, U[lev], z=z_k,
                           plan=self.plan)
            rk = K @ M[lev + 1] - M[lev] / g.dt - self.plan.m_source
            if self.plan.m_zero_nodes.size:
                rk[self.plan.m_zero_nodes] = M[lev + 1][self.plan.m_zero_nodes]
            worst = max(worst, float(np.max(np.abs(rk))))
        return worst
