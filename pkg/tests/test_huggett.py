import numpy as np
import pytest
from scipy.integrate import solve_ivp

from mfg.hamiltonian import HuggettCRRA
from mfg.huggett import (HuggettParams, HuggettSolution, stationary_hjb_solve,
                         stationary_fp_solve, equilibrium_r_solve,
                         boundary_diagnostics, linearized_operator,
                         envelope_terms, InfeasibleRate, NoBracket)


def _decoupled_value_oracle(gamma, rho, r, y, x_nodes):
    """Value of the single-income saving problem by an independent route.

    Differentiating the stationary equation -rho v + H(x, v') = 0 and using
    v' = u'(c) turns it into a policy ODE c' = (rho - r) c / (gamma (c - s))
    with s(x) = y + r x, c(x_low) = s(x_low), and a square-root departure
    c ~ s + sqrt(2 nu1 (x - x_low)), nu1 = (rho - r) s(x_low) / gamma.  The
    value integrates v' = c^(-gamma) from v(x_low) = u(s(x_low)) / rho.
    The map c -> c' is contracting in c, so the asymptotic start is benign.
    """
    x_low = float(x_nodes[0])
    s0 = y + r * x_low
    nu1 = (rho - r) * s0 / gamma
    delta = 1e-9
    c0 = s0 + np.sqrt(2.0 * nu1 * delta)
    v_low = s0 ** (1.0 - gamma) / (1.0 - gamma) / rho
    z0 = [c0, v_low + s0 ** (-gamma) * delta]

    def rhs(x, z):
        c = z[0]
        s = y + r * x
        return [(rho - r) * c / (gamma * (c - s)), c ** (-gamma)]

    sol = solve_ivp(rhs, (x_low + delta, float(x_nodes[-1])), z0,
                    method="RK45", rtol=1e-11, atol=1e-13, dense_output=True)
    assert sol.success
    v = sol.sol(np.maximum(x_nodes, x_low + delta))[1]
    v[0] = v_low
    return v


def test_decoupled_value_matches_consumption_ode_oracle():
    # zero switching decouples the incomes into scalar saving problems; the
    # scheme is first order with constant ~ s^(-2), so incomes of order one
    # keep the target accuracy inside a tractable grid
    params = HuggettParams(lam1=0.0, lam2=0.0, y1=2.0, y2=3.0, N_h=8000)
    r = 0.02
    V = stationary_hjb_solve(params, r)
    for j, y in enumerate((params.y1, params.y2)):
        v_ref = _decoupled_value_oracle(params.gamma, params.rho, r, y,
                                        params.x)
        assert np.max(np.abs(V[:, j] - v_ref)) <= 1e-4


def test_decoupled_value_first_order_at_default_incomes():
    # same cross-check at the default income scale: the gap to the oracle
    # shrinks linearly with the mesh
    r = 0.02
    errs = []
    for n in (1000, 2000, 4000):
        params = HuggettParams(lam1=0.0, lam2=0.0, N_h=n)
        V = stationary_hjb_solve(params, r)
        v_ref = _decoupled_value_oracle(params.gamma, params.rho, r,
                                        params.y1, params.x)
        errs.append(np.max(np.abs(V[:, 0] - v_ref)))
    assert errs[1] / errs[0] <= 0.6
    assert errs[2] / errs[1] <= 0.6


def test_decoupled_density_is_boundary_atom():
    # with no income switching every agent hits the limit and stays
    params = HuggettParams(lam1=0.0, lam2=0.0, N_h=60)
    r = 0.02
    V = stationary_hjb_solve(params, r)
    M = stationary_fp_solve(params, r, V)
    expected = np.zeros_like(M)
    expected[0, :] = 0.5 / params.h
    assert np.max(np.abs(M - expected)) <= 1e-12 / params.h


def test_value_nondecreasing_in_wealth():
    params = HuggettParams(N_h=120)
    V = stationary_hjb_solve(params, 0.03)
    assert np.all(np.diff(V, axis=0) >= 0.0)


def test_envelope_term_is_flow_utility_below_kink():
    # wherever the forward slope sits under the kink, the nondecreasing
    # envelope contributes exactly u(y + r x)
    params = HuggettParams(N_h=50)
    r = 0.03
    rng = np.random.default_rng(2)
    # slopes drawn on (0, 300) straddle the kink, which runs from ~24 at the
    # top of the grid to ~110 at the borrowing limit
    V = np.cumsum(rng.uniform(0.0, 300.0, size=(51, 2)) * params.h, axis=0)
    up_val, dn_val, up_grad, dn_grad = envelope_terms(params, r, V)
    ham1 = HuggettCRRA(params.gamma, r, params.y1)
    xi_r = np.diff(V[:, 0]) / params.h
    pm = ham1.p_min((params.x[:-1],))
    below = xi_r < pm
    assert below.any() and (~below).any()
    flow = ham1.util(ham1.income((params.x[:-1],)))
    assert np.array_equal(up_val[:-1, 0][below], flow[below])
    assert np.all(up_grad[:-1, 0][below] == 0.0)


def test_adjoint_identity():
    # the density is built to annihilate the linearized operator
    params = HuggettParams(N_h=24)
    r = 0.03
    V = stationary_hjb_solve(params, r)
    M = stationary_fp_solve(params, r, V)
    A = linearized_operator(params, r, V)
    resid = A.T @ M.ravel(order="F")
    assert np.max(np.abs(resid)) <= 1e-12
    rng = np.random.default_rng(4)
    for _ in range(50):
        W = rng.standard_normal(M.size)
        assert abs(float((A @ W) @ M.ravel(order="F"))) <= 1e-12 * M.size


def test_group_masses_and_positivity():
    params = HuggettParams(N_h=200)
    r = 0.03
    V = stationary_hjb_solve(params, r)
    M = stationary_fp_solve(params, r, V)
    assert np.min(M) >= 0.0
    lam_tot = params.lam1 + params.lam2
    assert abs(params.h * M[:, 0].sum() - params.lam2 / lam_tot) <= 1e-10
    assert abs(params.h * M[:, 1].sum() - params.lam1 / lam_tot) <= 1e-10
    assert abs(params.h * M.sum() - 1.0) <= 1e-10


def test_no_boundary_atom_when_drift_points_up():
    # a rate above the discount rate makes saving attractive: nothing
    # sticks at the borrowing limit
    params = HuggettParams(N_h=150)
    r = 0.06
    V = stationary_hjb_solve(params, r)
    M = stationary_fp_solve(params, r, V)
    assert params.h * M[0, 0] <= 1e-10
    assert params.h * M[0, 1] <= 1e-10
    assert np.min(M) >= 0.0


def test_equilibrium_properties():
    params = HuggettParams(N_h=200)
    sol = equilibrium_r_solve(params)
    assert sol.r < params.rho
    assert abs(sol.aggregate_wealth()) <= 1e-8
    m1, m2 = sol.group_masses()
    lam_tot = params.lam1 + params.lam2
    assert abs(m1 - params.lam2 / lam_tot) <= 1e-10
    assert abs(m2 - params.lam1 / lam_tot) <= 1e-10
    diag = boundary_diagnostics(sol)
    assert diag["mu1"] > 0.0
    assert diag["mu1"] >= 10.0 * diag["mu2"]
    assert diag["drift1_max"] < 0.0
    assert -0.7 <= diag["blowup_exponent"] <= -0.3
    assert diag["drift2_sign_changes"] == 1
    assert params.x_low < diag["xbar"] < params.x_high


def test_vanishing_second_atom_under_refinement():
    # the high-income point mass is a pure discretization artifact: it
    # shrinks linearly with the mesh and drops below 1e-3 once the cell
    # width resolves the corner drift
    mus = []
    for n in (200, 400, 800):
        sol = equilibrium_r_solve(HuggettParams(N_h=n))
        mus.append(boundary_diagnostics(sol)["mu2"])
    assert mus[1] / mus[0] <= 0.6
    assert mus[2] / mus[1] <= 0.6
    sol = equilibrium_r_solve(HuggettParams(N_h=2400))
    assert boundary_diagnostics(sol)["mu2"] <= 1e-3


def test_refinement_convergence():
    # values converge and the distributions converge in the integral sense
    r = 0.03
    sizes = [50, 100, 200]
    out = []
    for n in sizes:
        params = HuggettParams(N_h=n)
        V = stationary_hjb_solve(params, r)
        M = stationary_fp_solve(params, r, V)
        out.append((params, V, M))
    v_gaps, cdf_gaps = [], []
    for (p_c, V_c, M_c), (p_f, V_f, M_f) in zip(out, out[1:]):
        stride = p_f.N_h // p_c.N_h
        v_gaps.append(np.max(np.abs(V_f[::stride] - V_c)))
        cdf_f = p_f.h * np.cumsum(M_f, axis=0)
        cdf_c = p_c.h * np.cumsum(M_c, axis=0)
        cdf_gaps.append(p_c.h * np.sum(np.abs(cdf_f[::stride] - cdf_c)))
    assert v_gaps[1] < v_gaps[0]
    assert cdf_gaps[1] < cdf_gaps[0]


def test_infeasible_rate_raises():
    params = HuggettParams(N_h=40)
    with pytest.raises(InfeasibleRate):
        stationary_hjb_solve(params, 0.7)


def test_no_bracket_raises():
    # with a zero borrowing limit the aggregate wealth stays positive at
    # every feasible rate, so no equilibrium bracket exists
    params = HuggettParams(x_low=0.0, N_h=40)
    with pytest.raises(NoBracket):
        equilibrium_r_solve(params)
