"""Whole-system solvers built on the time steppers.

The fixed-point variable everywhere is the frozen coupling data (per-level
costs, terminal values, and congestion weights when present): the map Xi
solves the backward equation with that data, pushes the density forward
through the resulting drift, and evaluates fresh data on the new density.
A solution of the coupled system is a fixed point of Xi.

Solvers: damped Picard iteration; Jacobian-free Newton with viscosity
continuation (directional derivatives through the linearized backward and
forward sweeps, never a formed Jacobian); the recursive time-splitting
solver built on short-horizon Picard; and the half-horizon restart loop
for long-time stationary behavior.
"""

import time

import numpy as np
import scipy.sparse.linalg as spla

from mfg.core import (SolverError, ArrayTerminal,
                      linearized_hjb_backward, linearized_kfp_forward)
from mfg.grid import mass
from mfg.linalg import bicgstab


class MaxIterExceeded(SolverError):
    """Fixed-point iteration ran out of budget; .report has the history."""

    def __init__(self, msg, report):
        super().__init__(msg)
        self.report = report


class StageFailure(SolverError):
    """One continuation stage failed; carries the viscosity and report."""

    def __init__(self, nu, report, msg):
        super().__init__(msg)
        self.nu = nu
        self.report = report


class NoConvergence(SolverError):
    """Restart loop still drifting after the allowed passes."""

    def __init__(self, msg, report):
        super().__init__(msg)
        self.report = report


# -- the coupling map ---------------------------------------------------------

def xi_map(data, problem):
    """One application of the coupling map: data -> fresh data."""
    fresh, _, _, _ = _xi_eval(data, problem)
    return fresh


def _xi_eval(data, problem, u_guess=None):
    U, lus = problem.hjb(data, u_guess_levels=u_guess)
    M, kinfo = problem.kfp(U, data, lus)
    return problem.data_from(M), U, M, lus


def initial_data(problem):
    """Data of the constant-in-time extension of the initial density."""
    return problem.data_from(np.tile(problem.m0, (problem.grid.N_T + 1, 1)))


def _pack(data):
    return np.concatenate([data["f"].ravel(), data["terminal"]])


def _unpack(vec, grid):
    nt, n = grid.N_T, grid.n_space
    return {"f": vec[:nt * n].reshape(nt, n), "terminal": vec[nt * n:],
            "z_hjb": None, "z_kfp": None}


def _data_gap(a, b):
    gap = 0.0
    for key in ("f", "terminal", "z_hjb", "z_kfp"):
        if a[key] is not None:
            gap = max(gap, float(np.max(np.abs(a[key] - b[key]))))
    return gap


def dxi_apply(problem, U, M, lus, e_data):
    """Directional derivative of Xi at the point that produced (U, M, lus)."""
    g = problem.grid
    dU = linearized_hjb_backward(g, lus, e_data["f"], e_data["terminal"])
    dM = linearized_kfp_forward(g, problem.ham, problem.nu, problem.x,
                                U, M, lus, dU)
    df = np.stack([problem.coupling.deriv_apply(problem.x, M[lev + 1],
                                                dM[lev + 1])
                   for lev in range(g.N_T)])
    dterm = problem.terminal.deriv_apply(problem.x, M[g.N_T], dM[g.N_T])
    return {"f": df, "terminal": dterm, "z_hjb": None, "z_kfp": None}


def _finish_report(rep, grid, M):
    masses = np.array([mass(grid, M[n]) for n in range(grid.N_T + 1)])
    rep["mass_drift"] = float(np.max(np.abs(masses - masses[0])))
    rep["min_density"] = float(np.min(M))
    hist = rep["residual_history"]
    rep["monotone"] = bool(all(b <= a * (1 + 1e-12)
                               for a, b in zip(hist, hist[1:])))
    return rep


# -- damped Picard ------------------------------------------------------------

def picard_solve(problem, delta=0.5, tol=1e-9, max_iter=400, data0=None):
    """Damped iteration data <- (1-delta) data + delta Xi(data)."""
    if not 0.0 < delta <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    start = time.perf_counter()
    data = initial_data(problem) if data0 is None else data0
    history = []
    u_guess = None
    for it in range(1, max_iter + 1):
        fresh, U, M, lus = _xi_eval(data, problem, u_guess)
        u_guess = U[:-1]
        gap = _data_gap(fresh, data)
        history.append(gap)
        data = {k: (None if data[k] is None
                    else (1.0 - delta) * data[k] + delta * fresh[k])
                for k in data}
        if gap <= tol:
            rep = {"outer_iterations": it, "inner_linear_iterations": 0.0,
                   "residual_history": history,
                   "wall_time": time.perf_counter() - start}
            return U, M, _finish_report(rep, problem.grid, M)
    rep = {"outer_iterations": max_iter, "inner_linear_iterations": 0.0,
           "residual_history": history,
           "wall_time": time.perf_counter() - start}
    raise MaxIterExceeded(
        f"damped iteration stalled at change {history[-1]:.3e} "
        f"after {max_iter} iterations", _finish_report(rep, problem.grid, M))


# -- Jacobian-free Newton -----------------------------------------------------

def newton_solve(problem, tol=1e-9, max_iter=30, inner_tol=1e-4,
                 inner_maxiter=200, data0=None, fd_jacobian=False,
                 fd_eps=1e-6):
    """Newton iterations on (Id - Xi)(data) = 0, matrix-free.

    Each direction solves (Id - DXi) d = -(data - Xi(data)) by stabilized
    bi-CG where DXi acts through one linearized backward and one linearized
    forward sweep reusing the factorizations of the current point; damping
    halves the step until the fixed-point gap decreases (floor 2^-20).
    """
    if problem.mode != "mfg" or problem.congested:
        raise SolverError("the matrix-free Newton handles the plain game "
                          "fixed point; use the damped iteration otherwise")
    start = time.perf_counter()
    g = problem.grid
    size = g.N_T * g.n_space + g.n_space
    data = initial_data(problem) if data0 is None else data0
    fresh, U, M, lus = _xi_eval(data, problem)
    gap = _data_gap(fresh, data)
    history = [gap]
    inner_total = 0.0
    for it in range(1, max_iter + 1):
        if gap <= tol:
            break
        G = _pack(data) - _pack(fresh)
        if fd_jacobian:
            base = _pack(fresh)

            def matvec(v, _d=_pack(data)):
                nrm = np.max(np.abs(v))
                if nrm == 0:
                    return v
                eps = fd_eps / nrm
                bumped = xi_map(_unpack(_d + eps * v, g), problem)
                return v - (_pack(bumped) - base) / eps
        else:
            def matvec(v):
                e = dxi_apply(problem, U, M, lus, _unpack(v, g))
                return v - _pack(e)

        op = spla.LinearOperator((size, size), matvec=matvec)
        d, info = bicgstab(op, -G, tol=inner_tol, maxiter=inner_maxiter)
        inner_total += info["iters"]
        alpha = 1.0
        accepted = False
        while alpha >= 2.0 ** -20:
            trial = _unpack(_pack(data) + alpha * d, g)
            fresh_t, U_t, M_t, lus_t = _xi_eval(trial, problem)
            gap_t = _data_gap(fresh_t, trial)
            if gap_t <= (1.0 - 1e-4 * alpha) * gap:
                data, fresh, U, M, lus, gap = trial, fresh_t, U_t, M_t, lus_t, gap_t
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            raise SolverError(f"Newton damping hit the floor at nu="
                              f"{problem.nu:g}, gap {gap:.3e}")
        history.append(gap)
    else:
        if gap > tol:
            err = SolverError(f"Newton did not reach {tol:g} at nu="
                              f"{problem.nu:g} (gap {gap:.3e})")
            err.report = {"residual_history": history}
            raise err
    rep = {"outer_iterations": len(history) - 1,
           "inner_linear_iterations": inner_total,
           "residual_history": history,
           "wall_time": time.perf_counter() - start}
    return U, M, _finish_report(rep, g, M)


class ContinuationSchedule:
    """Strictly decreasing viscosities from nu_start down to nu_target."""

    def __init__(self, nu_start=1.0, factor=0.5, nu_target=0.0,
                 stage_tol=1e-8):
        if not 0.0 < factor < 1.0:
            raise ValueError("factor must lie in (0, 1)")
        if nu_target < 0.0:
            raise ValueError("target viscosity must be nonnegative")
        self.nu_start = float(nu_start)
        self.factor = float(factor)
        self.nu_target = float(nu_target)
        self.stage_tol = float(stage_tol)

    def stages(self):
        if self.nu_start <= self.nu_target * (1.0 + 1e-12):
            return [self.nu_target]
        out = []
        nu = self.nu_start
        while nu > self.nu_target * (1.0 + 1e-12) and len(out) < 64:
            out.append(nu)
            nu *= self.factor
        out.append(self.nu_target)
        return out


def newton_continuation_solve(problem, schedule=None, tol=1e-9, **kwargs):
    """Newton stages along decreasing viscosity with warm starts."""
    if schedule is None:
        schedule = ContinuationSchedule(nu_target=problem.nu)
    start = time.perf_counter()
    stages = schedule.stages()
    data = None
    stage_reports = []
    U = M = None
    for j, nu_k in enumerate(stages):
        last = j == len(stages) - 1
        prob_k = problem.variant(nu=nu_k)
        stage_tol = tol if last else max(schedule.stage_tol, tol)
        try:
            U, M, rep = newton_solve(prob_k, tol=stage_tol, data0=data,
                                     **kwargs)
        except SolverError as exc:
            raise StageFailure(nu_k, getattr(exc, "report", None),
                               f"stage nu={nu_k:g} failed: {exc}") from exc
        rep["nu"] = nu_k
        stage_reports.append(rep)
        data = prob_k.data_from(M)
    total = {"outer_iterations": sum(r["outer_iterations"]
                                     for r in stage_reports),
             "inner_linear_iterations": sum(r["inner_linear_iterations"]
                                            for r in stage_reports),
             "residual_history": stage_reports[-1]["residual_history"],
             "stages": stage_reports,
             "wall_time": time.perf_counter() - start}
    return U, M, _finish_report(total, problem.grid, M)


# -- recursive time splitting -------------------------------------------------

def recursive_solve(k, K, m_tilde, problem, J, elementary_tol=1e-9,
                    elementary_delta=0.5, counter=None):
    """Divide-and-conquer in time on [kT/K, T].

    At the deepest level returns the terminal pair; otherwise alternates J
    rounds of {recurse on the right part with the current seam density,
    short-horizon damped Picard on the left subinterval with the terminal
    values the recursion produced}.  The seam density the recursion sees
    improves round by round.
    """
    g = problem.grid
    if g.N_T % K != 0:
        raise SolverError("time steps must split evenly across the levels")
    m_tilde = np.asarray(m_tilde, dtype=float)
    if k == K:
        u_end = problem.terminal.value(problem.x, m_tilde)
        return u_end[None, :], m_tilde[None, :]
    nt_sub = g.N_T // K
    sub_grid = g.with_time(nt_sub, g.T / K)
    M_seg = np.tile(m_tilde, (nt_sub + 1, 1))
    U_seg = np.zeros_like(M_seg)
    U_right = M_right = None
    for _ in range(J):
        U_right, M_right = recursive_solve(k + 1, K, M_seg[-1], problem, J,
                                           elementary_tol, elementary_delta,
                                           counter)
        sub = problem.variant(grid=sub_grid, m0=m_tilde,
                              terminal=ArrayTerminal(U_right[0]))
        U_seg, M_seg, _ = picard_solve(sub, delta=elementary_delta,
                                       tol=elementary_tol)
        if counter is not None:
            counter["leaf_calls"] = counter.get("leaf_calls", 0) + 1
    return (np.concatenate([U_seg, U_right[1:]]),
            np.concatenate([M_seg, M_right[1:]]))


# -- long-time restarts -------------------------------------------------------

def _time_variation(grid, U, M):
    """Distance of the trajectory from its mid-horizon slice; the value
    function is compared after removing the per-level spatial mean (it
    carries a linear-in-time drift in the ergodic regime)."""
    mid = grid.N_T // 2
    v_m = float(np.max(np.abs(M - M[mid])))
    Ut = U - U.mean(axis=1, keepdims=True)
    v_u = float(np.max(np.abs(Ut - Ut[mid])))
    return v_m, v_u


def ergodic_longtime_solve(problem, outer_iters=100, tol=1e-6,
                           inner="newton", inner_kwargs=None):
    """Half-horizon restarts toward the stationary regime.

    Each pass solves the finite-horizon problem, then restarts with the
    mid-horizon value as terminal condition and the mid-horizon density as
    initial condition, progressively washing out both end layers.  Stops
    when the whole trajectory is stationary to tol and returns the mid
    slices.
    """
    start = time.perf_counter()
    kwargs = dict(inner_kwargs or {})
    cur = problem
    history = []
    for outer in range(1, outer_iters + 1):
        if inner == "newton":
            U, M, rep = newton_continuation_solve(cur, **kwargs)
        elif inner == "picard":
            U, M, rep = picard_solve(cur, **kwargs)
        else:
            U, M, rep = inner(cur, **kwargs)
        v_m, v_u = _time_variation(problem.grid, U, M)
        history.append(v_m + v_u)
        mid = problem.grid.N_T // 2
        if v_m + v_u <= tol:
            report = {"outer_iterations": outer,
                      "residual_history": history,
                      "inner_last": rep,
                      "wall_time": time.perf_counter() - start}
            return U[mid], M[mid], _finish_report(report, problem.grid, M)
        cur = cur.variant(m0=M[mid], terminal=ArrayTerminal(U[mid]))
    raise NoConvergence(
        f"restart loop still varying by {history[-1]:.3e} "
        f"after {outer_iters} passes", {"residual_history": history})
