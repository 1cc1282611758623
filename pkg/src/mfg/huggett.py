"""Stationary two-income wealth equilibrium on a bounded interval.

Agents carry wealth x in [x_low, x_high] and an income state y_j switched by
a two-state Poisson clock with intensities lam1 (leave state 1) and lam2.
The value functions solve a state-constrained stationary HJB system built
from the C^1 envelope split of the CRRA Hamiltonian (nondecreasing branch on
the forward quotient, nonincreasing on the backward one).  The stationary
density is the kernel of the transpose of the linearized HJB operator, read
as g_j(x_i) at interior nodes and as a point mass mu_j = h m_{0,j} at the
borrowing limit.  The market clears by driving aggregate wealth to zero in
the interest rate.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from mfg.core import SolverError
from mfg.hamiltonian import HuggettCRRA


class NonConvergence(SolverError):
    pass


class InfeasibleRate(SolverError):
    pass


class SingularityBeyondNullspace(SolverError):
    pass


class NoBracket(SolverError):
    pass


class HuggettParams:
    """Model constants and the wealth grid.

    Switching intensities may be zero (the incomes then decouple); incomes
    must satisfy y1 < y2 and consumption feasibility y + r x > 0 is checked
    per candidate rate, not here.  The default truncation point sits far
    above the upper edge of the equilibrium distribution (near x = 0.5), so
    the right state constraint binds only off equilibrium; widening it
    further moves the equilibrium rate at the 1e-8 level while coarsening
    the mesh a node buys.
    """

    def __init__(self, rho=0.05, gamma=2.0, lam1=0.25, lam2=0.25,
                 y1=0.1, y2=0.2, x_low=-0.15, x_high=3.5, N_h=200):
        if rho <= 0 or gamma <= 0:
            raise ValueError("rho and gamma must be positive")
        if lam1 < 0 or lam2 < 0:
            raise ValueError("switching intensities must be nonnegative")
        if not y1 < y2:
            raise ValueError("incomes must satisfy y1 < y2")
        if not x_low < x_high:
            raise ValueError("empty wealth interval")
        if N_h < 8:
            raise ValueError("need at least 8 cells")
        self.rho = float(rho)
        self.gamma = float(gamma)
        self.lam1 = float(lam1)
        self.lam2 = float(lam2)
        self.y1 = float(y1)
        self.y2 = float(y2)
        self.x_low = float(x_low)
        self.x_high = float(x_high)
        self.N_h = int(N_h)
        self.h = (self.x_high - self.x_low) / self.N_h
        self.x = np.linspace(self.x_low, self.x_high, self.N_h + 1)

    @property
    def incomes(self):
        return (self.y1, self.y2)

    @property
    def intensities(self):
        return (self.lam1, self.lam2)

    def group_mass_targets(self):
        lam_tot = self.lam1 + self.lam2
        if lam_tot == 0.0:
            # degenerate clock: no switching, split the population evenly
            return (0.5, 0.5)
        return (self.lam2 / lam_tot, self.lam1 / lam_tot)


class HuggettSolution:
    def __init__(self, V, M, r, params):
        self.V = V
        self.M = M
        self.r = float(r)
        self.params = params
        self.x = params.x
        self.h = params.h

    def group_masses(self):
        return (self.h * float(self.M[:, 0].sum()),
                self.h * float(self.M[:, 1].sum()))

    def aggregate_wealth(self):
        return self.h * float(np.sum(self.x[:, None] * self.M))


def _check_feasible(params, r):
    for y in params.incomes:
        e_ends = (y + r * params.x_low, y + r * params.x_high)
        if min(e_ends) <= 0.0:
            raise InfeasibleRate(
                "income y + r x hits zero on the grid at r=%.6g" % r)


def _hams(params, r):
    return tuple(HuggettCRRA(params.gamma, r, y) for y in params.incomes)


def envelope_terms(params, r, V):
    """Envelope values and derivatives at the one-sided slopes of V.

    Returns four (N_h+1, 2) arrays (up value, down value, up derivative,
    down derivative).  The up pair lives on the forward quotient, defined at
    nodes 0..N-1; the down pair lives on the backward quotient at nodes
    1..N.  Undefined rows are zero.
    """
    n1 = params.N_h + 1
    up_val = np.zeros((n1, 2))
    dn_val = np.zeros((n1, 2))
    up_grad = np.zeros((n1, 2))
    dn_grad = np.zeros((n1, 2))
    for j, ham in enumerate(_hams(params, r)):
        xi = np.diff(V[:, j]) / params.h
        hu, _, gu, _ = ham.envelopes((params.x[:-1],), xi)
        _, hd, _, gd = ham.envelopes((params.x[1:],), xi)
        up_val[:-1, j] = hu
        up_grad[:-1, j] = gu
        dn_val[1:, j] = hd
        dn_grad[1:, j] = gd
    return up_val, dn_val, up_grad, dn_grad


def _residual(params, r, V):
    up_val, dn_val, _, _ = envelope_terms(params, r, V)
    R = -params.rho * V.copy()
    for j, ham in enumerate(_hams(params, r)):
        lam = params.intensities[j]
        k = 1 - j
        R[:, j] += lam * (V[:, k] - V[:, j])
        R[:, j] += up_val[:, j] + dn_val[:, j]
        # interior rows carry the full envelope sum minus the kink value;
        # each boundary row keeps only its inward-looking branch
        R[1:-1, j] -= ham.util(ham.income((params.x[1:-1],)))
    return R


def linearized_operator(params, r, V):
    """Sparse derivative of the scheme's drift-and-switch part at V.

    The Newton matrix for the HJB is this minus rho I; its transpose is the
    stationary Fokker-Planck operator.
    """
    n1 = params.N_h + 1
    h = params.h
    _, _, up_grad, dn_grad = envelope_terms(params, r, V)
    rows, cols, vals = [], [], []
    idx = np.arange(n1)
    for j in range(2):
        base = j * n1
        other = (1 - j) * n1
        lam = params.intensities[j]
        gu = up_grad[:-1, j] / h
        gd = dn_grad[1:, j] / h
        # forward branch: rows 0..N-1 touch columns i and i+1
        rows += [base + idx[:-1], base + idx[:-1]]
        cols += [base + idx[:-1] + 1, base + idx[:-1]]
        vals += [gu, -gu]
        # backward branch: rows 1..N touch columns i and i-1
        rows += [base + idx[1:], base + idx[1:]]
        cols += [base + idx[1:], base + idx[1:] - 1]
        vals += [gd, -gd]
        # Poisson switch
        rows += [base + idx, base + idx]
        cols += [other + idx, base + idx]
        vals += [np.full(n1, lam), np.full(n1, -lam)]
    A = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(2 * n1, 2 * n1))
    return A.tocsr()


def stationary_hjb_solve(params, r, tol=1e-10, max_iter=100):
    """Damped Newton on the envelope scheme; returns V of shape (N_h+1, 2).

    The iteration starts from the autarky value u(y + r x)/rho.  Each Newton
    matrix is an irreducibly diagonally dominant M-matrix (the envelopes have
    one-signed derivatives and the diagonal keeps the -rho margin), so the
    sparse factorization never breaks down.
    """
    _check_feasible(params, r)
    n1 = params.N_h + 1
    V = np.empty((n1, 2))
    for j, ham in enumerate(_hams(params, r)):
        V[:, j] = ham.util(ham.income((params.x,))) / params.rho
    eye = sp.identity(2 * n1, format="csr")
    R = _residual(params, r, V)
    gap = float(np.max(np.abs(R)))
    for _ in range(max_iter):
        if gap <= tol:
            return V
        J = linearized_operator(params, r, V) - params.rho * eye
        d = spla.splu(J.tocsc()).solve(-R.ravel(order="F"))
        d = d.reshape((n1, 2), order="F")
        # the envelope terms are maxima of affine functions of V, so full
        # steps are the policy-iteration update and converge globally; the
        # halving brake only guards the consumption-floor region, where the
        # reported slope is not the slope of the clamped value
        alpha = 1.0
        accepted = False
        while alpha >= 2.0 ** -30:
            R_t = _residual(params, r, V + alpha * d)
            gap_t = float(np.max(np.abs(R_t)))
            if gap_t <= max(tol, 10.0 * gap):
                V = V + alpha * d
                R, gap = R_t, gap_t
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            raise NonConvergence(
                "step rejected at residual %.3e" % gap)
    if gap <= tol:
        return V
    raise NonConvergence("Newton stopped at residual %.3e" % gap)


def stationary_fp_solve(params, r, V):
    """Stationary density dual to the linearized scheme at V.

    Solves A^T m = 0 with the two redundant rows (one per income group, taken
    at the borrowing-limit node) replaced by the group-mass normalizations.
    The replaced equations are implied by the kept ones, which is checked a
    posteriori; a violation means the rank deficit exceeds the two expected
    null directions.
    """
    n1 = params.N_h + 1
    A = linearized_operator(params, r, V)
    B = A.T.tolil()
    targets = params.group_mass_targets()
    rhs = np.zeros(2 * n1)
    for j in range(2):
        row = j * n1
        B.rows[row] = list(range(j * n1, (j + 1) * n1))
        B.data[row] = [params.h] * n1
        rhs[row] = targets[j]
    try:
        m = spla.splu(B.tocsc()).solve(rhs)
    except RuntimeError as exc:
        raise SingularityBeyondNullspace(str(exc))
    if not np.all(np.isfinite(m)):
        raise SingularityBeyondNullspace("non-finite stationary density")
    scale = float(np.max(np.abs(m))) + 1.0
    kept = A.T @ m
    for j in range(2):
        if abs(kept[j * n1]) > 1e-8 * scale:
            raise SingularityBeyondNullspace(
                "replaced row violated by %.3e" % abs(kept[j * n1]))
    if float(m.min()) < -1e-9 * scale:
        raise SingularityBeyondNullspace(
            "negative density %.3e" % float(m.min()))
    np.maximum(m, 0.0, out=m)
    return m.reshape((n1, 2), order="F")


def _wealth_at(params, r):
    V = stationary_hjb_solve(params, r)
    M = stationary_fp_solve(params, r, V)
    w = params.h * float(np.sum(params.x[:, None] * M))
    return w, V, M


def equilibrium_r_solve(params, wealth_tol=1e-8):
    """Interest rate clearing the asset market, with the fields at the root.

    Brent's method runs on r -> aggregate wealth over [1e-4, rho - 1e-4]; if
    the sign does not change there, the lower edge walks toward -0.05 but
    never past the rate where some income y + r x touches zero (for r < 0
    the binding corner is the top of the grid).
    """
    cache = {}

    def wealth(r):
        if r not in cache:
            cache[r] = _wealth_at(params, r)
        return cache[r][0]

    lo = 1e-4
    hi = params.rho - 1e-4
    if not lo < hi:
        raise NoBracket("discount rate leaves no room for a bracket")
    w_lo, w_hi = wealth(lo), wealth(hi)
    if np.sign(w_lo) == np.sign(w_hi) and w_lo != 0.0:
        r_floor = -0.05
        if params.x_high > 0:
            r_floor = max(r_floor, -params.y1 / params.x_high * (1 - 1e-9))
        found = False
        cand = lo
        while cand > r_floor:
            cand = max(cand - 0.005, r_floor)
            if np.sign(wealth(cand)) != np.sign(w_hi):
                lo = cand
                found = True
                break
        if not found:
            raise NoBracket(
                "aggregate wealth has one sign on [%.4g, %.4g]"
                % (r_floor, hi))
    r_star = brentq(wealth, lo, hi, xtol=1e-13, maxiter=300)
    w, V, M = cache.get(r_star, (None, None, None))
    if V is None:
        w, V, M = _wealth_at(params, r_star)
    if abs(w) > wealth_tol:
        raise NonConvergence("market residual %.3e at r=%.8g" % (w, r_star))
    return HuggettSolution(V, M, r_star, params)


def boundary_diagnostics(solution):
    """Borrowing-limit atoms, density blowup rate, and drift sign pattern.

    The blowup exponent is the least-squares slope of log g_1 against
    log(x - x_low) over the first 8 interior nodes; the drift at a node is
    the sum of the two envelope derivatives there (at most one branch is
    active when V is concave).
    """
    params = solution.params
    M, V = solution.M, solution.V
    h, x = params.h, params.x
    _, _, up_grad, dn_grad = envelope_terms(params, solution.r, V)
    drift = up_grad + dn_grad
    inner = slice(1, params.N_h)
    lx = np.log(x[1:9] - params.x_low)
    lg = np.log(np.maximum(M[1:9, 0], 1e-300))
    slope = float(np.polyfit(lx, lg, 1)[0])
    d2 = drift[inner, 1]
    signs = np.sign(d2)
    nz = signs[signs != 0.0]
    changes = int(np.count_nonzero(nz[1:] != nz[:-1]))
    xbar = float("nan")
    if nz.size and nz[0] > 0:
        nonpos = np.nonzero(signs <= 0.0)[0]
        if nonpos.size:
            xbar = float(x[inner][nonpos[0]])
    return {
        "mu1": h * float(M[0, 0]),
        "mu2": h * float(M[0, 1]),
        "blowup_exponent": slope,
        "drift1_max": float(np.max(drift[inner, 0])),
        "drift2_sign_changes": changes,
        "xbar": xbar,
    }
