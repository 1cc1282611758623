"""Duality-based solvers for potential games on the torus.

The system is recast as a convex program in the density/momentum pair
sigma = (M, W):

    minimize   Theta(M, W) = sum_{n>=1} [ Ltilde(x, M^n, W^{n-1}) + F(x, M^n) ]
                             + Phi-term at n = N_T
    subject to Sigma(M, W) := (A M - B W, M^0) = (0, m0)

where A is the implicit heat step, B the flux divergence acting on the
one-sided momentum slots, and Ltilde(x, m, w) = m Hstar(x, w/m) on
{m > 0, w in K}, 0 at (0, 0), +inf elsewhere.  The adjoints are plain
Euclidean transposes: B* U = -nabla U and A* U is the backward heat step
with one-sided closures at n = 0 and n = N_T.

Two algorithms are provided.  The splitting method (admm_solve) works on
the dual variables U with the augmented constraint Q = Lambda* U; its
multiplier IS the primal pair (M, W), and the pointwise prox optimality
makes M >= 0 and W in K exact at every iteration.  The primal-dual method
(chambolle_pock_solve) iterates sigma directly, alternating a pointwise
prox of Theta with a projection-type prox whose normal equations reduce,
after eliminating the initial-level multiplier, to the SPD Schur operator
Lambda Lambda* - P0 / dt^2.

Both need the normal operator Lambda Lambda* = A A* + B B*, fourth order in
space, solved by multigrid-preconditioned stabilized bi-CG (solve_dual_linear).
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from mfg.grid import spacetime_l2
from mfg.hamiltonian import project_K, in_K
from mfg.linalg import Hierarchy, bicgstab, power_norm_estimate
from mfg.core import SolverError, ZeroTerminal, FunctionTerminal, ArrayTerminal
from mfg.hamiltonian import GodunovQuadratic


# -- constraint operators ----------------------------------------------------

def apply_A(grid, nu, M):
    """(A M)^n = (M^{n+1} - M^n)/dt - nu lap M^{n+1}, n = 0..N_T-1."""
    M = np.asarray(M, dtype=float)
    return (M[1:] - M[:-1]) / grid.dt - nu * grid.laplacian(M[1:])


def apply_Astar(grid, nu, U):
    """Plain-transpose of apply_A; one-sided closures at both ends."""
    U = np.asarray(U, dtype=float)
    out = np.zeros((grid.N_T + 1, grid.n_space))
    out[0] = -U[0] / grid.dt
    if grid.N_T > 1:
        out[1:-1] = (U[:-1] - U[1:]) / grid.dt - nu * grid.laplacian(U[:-1])
    out[-1] = U[-1] / grid.dt - nu * grid.laplacian(U[-1])
    return out


def apply_B(grid, W):
    """(B W)^n_i = sum_a [D^-(W_slot2a) + D^+(W_slot2a+1)]_i."""
    W = np.asarray(W, dtype=float)
    out = np.zeros(W.shape[:-1])
    for a in range(grid.dim):
        wf = W[..., 2 * a]
        wb = W[..., 2 * a + 1]
        out += (wf - grid.shift_minus(wf, a)) / grid.h
        out += (grid.shift_plus(wb, a) - wb) / grid.h
    return out


def apply_Bstar(grid, U):
    """B* U = -nabla U, levelwise."""
    return -grid.nabla(np.asarray(U, dtype=float))


def apply_Lambda(grid, nu, M, W):
    return apply_A(grid, nu, M) - apply_B(grid, W)


def apply_LambdaStar(grid, nu, U):
    """Lambda* U = (A* U, +nabla U)."""
    return apply_Astar(grid, nu, U), grid.nabla(np.asarray(U, dtype=float))


def assemble_A(grid, nu):
    n = grid.n_space
    L = grid.laplacian_matrix()
    eye = sp.identity(n, format="csr")
    E1 = sp.eye(grid.N_T, grid.N_T + 1, k=1, format="csr")
    E0 = sp.eye(grid.N_T, grid.N_T + 1, k=0, format="csr")
    return (sp.kron(E1, eye / grid.dt - nu * L)
            - sp.kron(E0, eye / grid.dt)).tocsr()


def dual_normal_matrix(grid, nu, level0_shift=0.0):
    """Lambda Lambda* = A A^T - 2 kron(I, lap), optionally minus P0/dt^2."""
    A = assemble_A(grid, nu)
    L = grid.laplacian_matrix()
    out = (A @ A.T - 2.0 * sp.kron(sp.identity(grid.N_T, format="csr"), L))
    if level0_shift:
        e0 = sp.csr_matrix(([level0_shift], ([0], [0])),
                           shape=(grid.N_T, grid.N_T))
        out = out + sp.kron(e0, sp.identity(grid.n_space, format="csr"))
    return out.tocsr()


class DualLinearSolver:
    """Reusable solver for the space-time normal operator.

    strategy: 'semi' coarsens only the space axes of the multigrid
    hierarchy, 'full' all axes, 'direct' factorizes once.  level0_shift
    adds c * P0 to the operator (the primal-dual method needs -1/dt^2).
    """

    def __init__(self, grid, nu, strategy="semi", tol=1e-8, eta=(2, 2),
                 level0_shift=0.0):
        self.grid = grid
        self.tol = tol
        self.eta = eta
        self.mat = dual_normal_matrix(grid, nu, level0_shift)
        self.strategy = strategy
        if strategy == "direct":
            self.lu = spla.splu(self.mat.tocsc())
            self.hier = None
        else:
            axes = [(grid.N_T, False, strategy == "full")]
            axes += [(na, True, True) for na in grid.axis_nodes]
            # cubic space transfers: the operator is fourth order in space
            self.hier = Hierarchy(self.mat, axes, order=4)
            self.lu = None
        self.last_iters = 0.0

    def solve(self, rhs, tol=None, x0=None, maxiter=400):
        shape = np.shape(rhs)
        b = np.asarray(rhs, dtype=float).ravel()
        if self.lu is not None:
            self.last_iters = 0.0
            return self.lu.solve(b).reshape(shape)
        x, info = bicgstab(self.mat, b,
                           M=self.hier.preconditioner(*self.eta),
                           tol=self.tol if tol is None else tol,
                           maxiter=maxiter,
                           x0=None if x0 is None else np.ravel(x0))
        self.last_iters = info["iters"]
        if not info["converged"]:
            raise SolverError("dual normal solve stalled at relative "
                              f"residual {info['true_residual']:.2e}")
        return x.reshape(shape)


def solve_dual_linear(grid, nu, rhs, strategy="semi", tol=1e-8, eta=(2, 2)):
    """One-shot multigrid-preconditioned solve of Lambda Lambda* x = rhs."""
    return DualLinearSolver(grid, nu, strategy, tol, eta).solve(rhs)


def lambda_norm_estimate(grid, nu, iters=20, seed=0):
    """Power-iteration estimate of the constraint operator norm."""
    nM = (grid.N_T + 1) * grid.n_space
    nW = grid.N_T * grid.n_space * 2 * grid.dim

    def matvec(v):
        M = v[:nM].reshape(grid.N_T + 1, grid.n_space)
        W = v[nM:].reshape(grid.N_T, grid.n_space, 2 * grid.dim)
        return apply_Lambda(grid, nu, M, W).ravel()

    def rmatvec(u):
        U = u.reshape(grid.N_T, grid.n_space)
        aU, bU = apply_LambdaStar(grid, nu, U)
        return np.concatenate([aU.ravel(), bU.ravel()])

    return power_norm_estimate(matvec, rmatvec, nM + nW, iters=iters, seed=seed)


# -- objective values ---------------------------------------------------------

def theta_value(grid, ham, coupling, terminal, x, M, W):
    """Physical objective h^d dt sum [Ltilde + F] + h^d sum Phi(M^{N_T}).

    Ltilde carries the sentinel semantics: +inf when m < 0, when m = 0 with
    w != 0, or when w leaves the cone K; exact 0 at (0, 0).
    """
    M = np.asarray(M, dtype=float)
    W = np.asarray(W, dtype=float)
    total = 0.0
    for n in range(1, grid.N_T + 1):
        m = M[n]
        w = W[n - 1]
        feas = in_K(w)
        if np.any(m < 0) or np.any(~feas & (np.abs(w).max(axis=-1) > 0)):
            return np.inf
        zero_group = (m == 0)
        if np.any(zero_group & (np.abs(w).max(axis=-1) > 0)):
            return np.inf
        pos = ~zero_group
        lt = np.zeros(grid.n_space)
        if np.any(pos):
            gamma = w[pos] / m[pos, None]
            hstar, gfeas = ham.conjugate(tuple(c[pos] for c in x), gamma)
            if np.any(~gfeas):
                return np.inf
            lt[pos] = m[pos] * hstar
        total += float(np.sum(lt))
        if coupling is not None:
            total += float(np.sum(coupling.primitive(x, m)))
    value = grid.dt * grid.h ** grid.dim * total
    if terminal is not None:
        phi = terminal.value(x, M[-1])
        value += grid.h ** grid.dim * float(np.sum(phi * M[-1]))
    return value


def dual_value(grid, ham, coupling, terminal, x, nu, U, m0):
    """h^d sum m0 U^0 - h^d dt sum F*((A*U)^n + H(nabla U^{n-1}) - shift_n)."""
    aU = apply_Astar(grid, nu, U)
    bU = grid.nabla(np.asarray(U, dtype=float))
    shift = _terminal_shift(grid, terminal, x)
    total = 0.0
    for n in range(1, grid.N_T + 1):
        c = aU[n] + ham.value(x, bU[n - 1])
        total += float(np.sum(coupling.conjugate(x, c - shift[n - 1])))
    hd = grid.h ** grid.dim
    return hd * float(np.sum(m0 * U[0])) - hd * grid.dt * total


def _terminal_shift(grid, terminal, x):
    """Per-group shift rows (levels n = 1..N_T): phi/dt on the last row."""
    shift = np.zeros((grid.N_T, grid.n_space))
    if terminal is None or isinstance(terminal, ZeroTerminal):
        return shift
    if not isinstance(terminal, (FunctionTerminal, ArrayTerminal)):
        raise SolverError("duality solvers need a density-independent "
                          "terminal cost")
    shift[-1] = terminal.value(x, np.zeros(grid.n_space)) / grid.dt
    return shift


# -- pointwise prox of the dual integrand -------------------------------------

def _hess_diag(ham, x, b):
    """Diagonal of the slot Hessian for separable kinds at b."""
    return ham.dgrad(x, b, np.ones_like(b))


def prox_pointwise_dual(ham, coupling, x, shift, sig_m, sig_w, abar, bbar, r,
                        tol=1e-10, max_iter=200, init=None):
    """Groupwise minimizer of

        F*(a + H(x, b) - shift) - sig_m a - <sig_w, b>
            + (r/2) [(a - abar)^2 + |b - bbar|^2]

    over (a, b), vectorized across groups with a damped Newton method whose
    model Hessian caps the conjugate curvature at kinks; the rI term keeps
    it positive definite, so every step is a descent direction.
    """
    if not getattr(ham, "separable", False):
        raise SolverError("pointwise dual prox needs a separable kind")
    N = abar.shape[0]
    nq = bbar.shape[1]
    a = abar.copy() if init is None else init[0].copy()
    b = bbar.copy() if init is None else init[1].copy()

    def pieces(a, b):
        c = a + ham.value(x, b) - shift
        val = (coupling.conjugate(x, c) - sig_m * a - np.sum(sig_w * b, axis=-1)
               + 0.5 * r * ((a - abar) ** 2 + np.sum((b - bbar) ** 2, axis=-1)))
        return c, val

    c, val = pieces(a, b)
    # settled: at tolerance, or pinned at the precision floor of a conjugate
    # boundary (see the backtracking note below); settled groups never move
    settled = np.zeros(N, dtype=bool)
    for _ in range(max_iter):
        Fp = coupling.conj_deriv(x, c)
        Hq = ham.grad(x, b)
        ga = Fp - sig_m + r * (a - abar)
        gb = Fp[:, None] * Hq - sig_w + r * (b - bbar)
        gnorm = np.maximum(np.abs(ga), np.max(np.abs(gb), axis=-1))
        settled |= gnorm <= tol
        if bool(np.all(settled)):
            break
        Fpp = coupling.conj_deriv2(x, c)
        Hqq = _hess_diag(ham, x, b)
        # group Hessian: Fpp [1, Hq][1, Hq]^T + diag(0, Fp Hqq) + r I
        D = 1 + nq
        Hmat = np.zeros((N, D, D))
        v = np.concatenate([np.ones((N, 1)), Hq], axis=1)
        Hmat += Fpp[:, None, None] * v[:, :, None] * v[:, None, :]
        for s in range(nq):
            Hmat[:, 1 + s, 1 + s] += Fp * Hqq[:, s]
        Hmat[:, np.arange(D), np.arange(D)] += r
        gvec = np.concatenate([ga[:, None], gb], axis=1)
        step = -np.linalg.solve(Hmat, gvec[..., None])[..., 0]
        decrease = np.sum(step * gvec, axis=1)     # negative for descent

        def force(idx, a_t, b_t):
            x_t = None if x is None else tuple(ax[idx] for ax in x)
            c_t = a_t + ham.value(x_t, b_t) - shift[idx]
            Fp_t = coupling.conj_deriv(x_t, c_t)
            ga_t = Fp_t - sig_m[idx] + r * (a_t - abar[idx])
            gb_t = (Fp_t[:, None] * ham.grad(x_t, b_t) - sig_w[idx]
                    + r * (b_t - bbar[idx]))
            return np.maximum(np.abs(ga_t), np.max(np.abs(gb_t), axis=-1))

        # Nearly-converged groups sit below the rounding noise of the
        # objective, where an Armijo test on values rejects real progress;
        # they backtrack on the gradient norm instead.  An unguarded full
        # step here can cycle forever: at a vacuum point the conjugate's
        # curvature blows up like an inverse square root across the
        # boundary, so crossing it turns a 1e-7 step into a 1e-4 gradient.
        # By the same square root, the smallest representable move across
        # the boundary shifts the gradient by ~sqrt(eps); a group there can
        # never reach a tighter tol, so when no damping helps it is settled
        # at its precision floor and keeps its coordinates.
        relaxed = ~settled & (gnorm <= 1e-6)
        a_new = a.copy()
        b_new = b.copy()
        if np.any(relaxed):
            ridx = np.nonzero(relaxed)[0]
            al = np.ones(ridx.size)
            pending = np.ones(ridx.size, bool)
            for _ in range(30):
                if not np.any(pending):
                    break
                sel = ridx[pending]
                a_t = a[sel] + al[pending] * step[sel, 0]
                b_t = b[sel] + al[pending, None] * step[sel, 1:]
                ok = force(sel, a_t, b_t) < gnorm[sel]
                hit = pending.copy()
                hit[pending] = ok
                a_new[ridx[hit]] = a_t[ok]
                b_new[ridx[hit]] = b_t[ok]
                pending = pending & ~hit
                al[pending] *= 0.5
            settled[ridx[pending]] = True
        alpha = np.ones(N)
        active = ~settled & ~relaxed
        for _ in range(40):
            if not np.any(active):
                break
            a_try = a + alpha * step[:, 0]
            b_try = b + alpha[:, None] * step[:, 1:]
            c_try, val_try = pieces(a_try, b_try)
            ok = active & (val_try <= val + 1e-4 * alpha * decrease)
            a_new[ok] = a_try[ok]
            b_new[ok] = b_try[ok]
            active = active & ~ok
            alpha[active] *= 0.5
        a, b = a_new, b_new
        c, val = pieces(a, b)
    else:
        raise SolverError("pointwise prox did not reach tolerance")
    return a, b


# -- splitting solver ---------------------------------------------------------

def _duality_guards(problem):
    if not problem.grid.periodic:
        raise SolverError("duality solvers run on the torus")
    if problem.mode != "mfg":
        raise SolverError("duality solvers address the game fixed point")
    if problem.congested:
        raise SolverError("duality solvers need a density-free Hamiltonian")
    for attr in ("conjugate", "conj_deriv", "conj_deriv2", "primitive"):
        if not hasattr(problem.coupling, attr):
            raise SolverError("coupling lacks the conjugate interface")


def _extract_full_U(problem, U, M):
    full = np.zeros((problem.grid.N_T + 1, problem.grid.n_space))
    full[:-1] = U
    full[-1] = problem.terminal.value(problem.x, M[-1])
    return full


def admm_solve(problem, r=1.0, tol=1e-6, max_iter=20000, residual_target=None,
               check_every=25, linear_strategy=None, linear_tol=1e-11):
    """Augmented-constraint splitting on the dual problem.

    Iterates (U-solve, pointwise prox, multiplier ascent); the multiplier is
    the primal (M, W) pair, nonnegative densities and cone-feasible momenta
    by prox optimality.  Stops when the augmented-constraint and multiplier
    residuals drop below tol, and additionally (if residual_target is set)
    when the discrete system residual of the extracted solution does.
    """
    _duality_guards(problem)
    g = problem.grid
    nu = problem.nu
    x = problem.x
    nt, n, nq = g.N_T, g.n_space, 2 * g.dim
    if linear_strategy is None:
        linear_strategy = "direct" if nt * n <= 40000 else "semi"
    lin = DualLinearSolver(g, nu, linear_strategy, tol=linear_tol)
    x_rep = tuple(np.tile(c, nt) for c in x)
    shift = _terminal_shift(g, problem.terminal, x).ravel()

    U = np.zeros((nt, n))
    QM = np.zeros((nt + 1, n))
    QW = np.zeros((nt, n, nq))
    sM = np.tile(problem.m0, (nt + 1, 1))
    sW = np.zeros((nt, n, nq))
    prox_init = None
    hist = {"primal": [], "dual": [], "mfg_residual": None,
            "linear_iters": []}
    delta0 = np.zeros(nt)

    for it in range(1, max_iter + 1):
        rhs = r * apply_Lambda(g, nu, QM, QW) - apply_Lambda(g, nu, sM, sW)
        rhs[0] += problem.m0 / g.dt
        U = lin.solve(rhs / r, x0=U)
        hist["linear_iters"].append(lin.last_iters)
        aU, bU = apply_LambdaStar(g, nu, U)

        a, b = prox_pointwise_dual(
            problem.ham, problem.coupling, x_rep, shift,
            sM[1:].ravel(), sW.reshape(-1, nq),
            aU[1:].ravel(), bU.reshape(-1, nq), r, init=prox_init)
        prox_init = (a, b)
        QM_new = np.empty_like(QM)
        QM_new[0] = aU[0] + sM[0] / r
        QM_new[1:] = a.reshape(nt, n)
        QW_new = b.reshape(nt, n, nq)

        sM = sM + r * (aU - QM_new)
        sW = sW + r * (bU - QW_new)

        prim = np.sqrt(g.dt * g.h ** g.dim *
                       (np.sum((aU - QM_new) ** 2) + np.sum((bU - QW_new) ** 2)))
        dQ = apply_Lambda(g, nu, QM_new - QM, QW_new - QW)
        dual = r * spacetime_l2(g, dQ)
        QM, QW = QM_new, QW_new
        hist["primal"].append(prim)
        hist["dual"].append(dual)

        if prim <= tol and dual <= tol:
            if residual_target is None:
                break
            if it % check_every == 0 or prim <= tol * 1e-2:
                M = sM.copy()
                M[0] = problem.m0
                res = problem.residual(_extract_full_U(problem, U, M), M)
                hist["mfg_residual"] = res
                if res <= residual_target:
                    break
    else:
        raise SolverError("splitting solver hit the iteration cap")

    M = sM.copy()
    M[0] = problem.m0
    W = sW.copy()
    U_full = _extract_full_U(problem, U, M)
    hist["iterations"] = it
    hist["linear_iters_last"] = lin.last_iters
    return U_full, M, W, hist


# -- primal-dual solver --------------------------------------------------------

def _theta_prox(problem, x, shift, mbar, wbar, r):
    """Pointwise prox of Theta at (mbar, wbar) with step r.

    Minimizing over w in K first gives w* = m/(m+r) P_K(wbar); the reduced
    scalar problem g(m) = |pi|^2/(2(m+r)) + F(m) + shift m + (m-mbar)^2/(2r)
    is strictly convex; its derivative is increasing, solved by bisection.
    """
    pi = project_K(wbar)
    pi2 = np.sum(pi * pi, axis=-1)
    f0 = problem.coupling.value

    def gprime(m):
        return (-pi2 / (2.0 * (m + r) ** 2) + f0(x, m) + shift
                + (m - mbar) / r)

    need = gprime(np.zeros_like(mbar)) < 0.0
    up = np.maximum(mbar, 1.0)
    for _ in range(80):
        bad = need & (gprime(up) < 0.0)
        if not np.any(bad):
            break
        up[bad] *= 2.0
    lo = np.zeros_like(up)
    for _ in range(64):
        mid = 0.5 * (lo + up)
        neg = gprime(mid) < 0.0
        lo = np.where(neg, mid, lo)
        up = np.where(neg, up, mid)
    m = np.where(need, 0.5 * (lo + up), 0.0)
    w = (m / (m + r))[..., None] * pi
    return m, w


def chambolle_pock_solve(problem, r=None, s=None, tau=1.0, tol=1e-6,
                         max_iter=50000, residual_target=None, check_every=25,
                         linear_strategy=None, linear_tol=1e-11):
    """Primal-dual iteration on sigma = (M, W) with the affine constraint.

    One leg is the pointwise prox of Theta, the other the tilted projection
    onto the constraint set, computed through the SPD Schur operator
    Lambda Lambda* - P0/dt^2 after eliminating the initial-level multiplier.
    Step sizes must satisfy r s < 1 (the coupling operator is an identity);
    the conservative default r = s = 0.95 / |Lambda| is kept from the
    reference configuration.
    """
    _duality_guards(problem)
    if not isinstance(problem.ham, GodunovQuadratic):
        raise SolverError("the density prox is worked out for the quadratic "
                          "upwind Hamiltonian only")
    g = problem.grid
    nu = problem.nu
    x = problem.x
    nt, n, nq = g.N_T, g.n_space, 2 * g.dim
    if r is None or s is None:
        nrm = lambda_norm_estimate(g, nu)
        r = s = 0.95 / nrm
    if linear_strategy is None:
        linear_strategy = "direct" if nt * n <= 40000 else "semi"
    lin = DualLinearSolver(g, nu, linear_strategy, tol=linear_tol,
                           level0_shift=-1.0 / g.dt ** 2)
    x_rep = tuple(np.tile(c, nt) for c in x)
    shift_rows = _terminal_shift(g, problem.terminal, x)

    sM = np.tile(problem.m0, (nt + 1, 1))
    sW = np.zeros((nt, n, nq))
    sM_bar, sW_bar = sM.copy(), sW.copy()
    yM = np.zeros((nt + 1, n))
    yW = np.zeros((nt, n, nq))
    U = np.zeros((nt, n))
    hist = {"step": [], "mfg_residual": None, "linear_iters": []}

    for it in range(1, max_iter + 1):
        vM = yM + s * sM_bar
        vW = yW + s * sW_bar
        rhs = apply_Lambda(g, nu, vM, vW)
        rhs[0] += (vM[0] - s * problem.m0) / g.dt
        U = lin.solve(rhs, x0=U)
        hist["linear_iters"].append(lin.last_iters)
        aU = apply_Astar(g, nu, U)
        phi = (vM[0] - s * problem.m0) - aU[0]
        yM = aU.copy()
        yM[0] += phi
        yW = g.nabla(U)

        mbar = sM - r * yM
        wbar = sW - r * yW
        sM_old, sW_old = sM, sW
        sM = np.empty_like(sM_old)
        sM[0] = mbar[0]
        m, w = _theta_prox(problem, x_rep, shift_rows.ravel(),
                           mbar[1:].ravel(), wbar.reshape(-1, nq), r)
        sM[1:] = m.reshape(nt, n)
        sW = w.reshape(nt, n, nq)
        sM_bar = sM + tau * (sM - sM_old)
        sW_bar = sW + tau * (sW - sW_old)

        step = np.sqrt(g.dt * g.h ** g.dim * np.sum((sM - sM_old) ** 2))
        hist["step"].append(step)
        if step <= tol:
            if residual_target is None:
                break
            if it % check_every == 0 or step <= tol * 1e-2:
                M = sM.copy()
                M[0] = problem.m0
                res = problem.residual(_extract_full_U(problem, -U, M), M)
                hist["mfg_residual"] = res
                if res <= residual_target:
                    break
    else:
        raise SolverError("primal-dual solver hit the iteration cap")

    M = sM.copy()
    M[0] = problem.m0
    W = sW.copy()
    # the Schur solve recovers the constraint multiplier; the value
    # function is its negative (sigma* lies in dTheta*(-Sigma* lambda))
    U_full = _extract_full_U(problem, -U, M)
    hist["iterations"] = it
    hist["initial_level_gap"] = float(np.max(np.abs(sM[0] - problem.m0)))
    return U_full, M, W, hist
