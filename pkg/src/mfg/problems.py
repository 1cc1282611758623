"""Catalog of the benchmark problems the command line and test suite run.

Five models: a quadratic game on the torus (1D or 2D), a low-viscosity
ergodic demo with a smoothing nonlocal cost, a two-crowd corridor with
congestion and entry/exit doors, an evacuation corridor compared between
the game and the planner solutions, and the stationary two-income wealth
model.  Each registry entry documents desk-scale defaults at which it
solves in minutes.
"""

import numpy as np

from mfg.grid import Grid
from mfg.hamiltonian import (GodunovQuadratic, GodunovPower, Congestion2D,
                             CongestionPower)
from mfg.core import (MFGProblem, SolverError, PowerCoupling, LocalCoupling,
                      NonlocalCoupling, ZeroTerminal, ArrayTerminal,
                      resolve_boundary, hjb_backward, kfp_forward,
                      exit_face_flux)
from mfg.huggett import HuggettParams


# -- two crowds sharing a corridor --------------------------------------------

def crowd_discomfort(eps=0.01, cap=4.0):
    """Running cost phi(x, m_own, m_other) for one crowd among two.

    A constant cost of staying, a penalty for being locally in minority,
    and a penalty for total densities beyond the comfort cap.
    """
    def phi(x, own, other):
        tot = own + other
        minority = np.maximum(0.5 - own / (tot + eps), 0.0)
        return 0.5 + 0.5 * minority + np.maximum(tot - cap, 0.0)
    return phi


class TwoPopulationProblem:
    """Two crowds on a shared corridor, each with its own doors.

    The populations live on the same space-time layout but carry their own
    boundary roles (an entrance on one side, an exit on the other,
    mirrored).  They interact through the congestion weight
    z_i = 1/(1 + m_i + a m_j) and through the discomfort cost
    phi(x, m_i, m_j).  One refresh recomputes both populations from the
    same frozen density pair, so relabelling the populations relabels
    every iterate exactly, floating point included.
    """

    def __init__(self, grids, ham, nu, discomfort, terminals, m0s, name=None):
        if (grids[0].N_T != grids[1].N_T
                or grids[0].n_space != grids[1].n_space):
            raise ValueError("populations must share the space-time layout")
        self.grids = tuple(grids)
        self.ham = ham
        self.nu = float(nu)
        self.discomfort = discomfort
        self.terminals = tuple(terminals)
        self.name = name
        self.plans = tuple(resolve_boundary(g) for g in self.grids)
        self.xs = tuple(tuple(c.ravel() for c in g.coords())
                        for g in self.grids)
        vals = []
        for m0, plan in zip(m0s, self.plans):
            v = np.asarray(m0, dtype=float).ravel().copy()
            if plan.m_zero_nodes.size:
                v[plan.m_zero_nodes] = 0.0
            vals.append(v)
        self.m0s = tuple(vals)

    @property
    def grid(self):
        return self.grids[0]

    def stack(self, a, b):
        """Concatenate the population pair along the node axis; the restart
        driver treats the pair as one flat field."""
        return np.concatenate([a, b], axis=-1)

    def split(self, arr):
        n = self.grid.n_space
        arr = np.asarray(arr)
        return arr[..., :n], arr[..., n:]

    def variant(self, m0=None, terminal=None):
        m0s = self.m0s if m0 is None else self.split(np.asarray(m0, float))
        terms = self.terminals
        if terminal is not None:
            stacked = np.asarray(terminal.value(None, None), dtype=float)
            terms = tuple(ArrayTerminal(v) for v in self.split(stacked))
        return TwoPopulationProblem(self.grids, self.ham, self.nu,
                                    self.discomfort, terms, m0s,
                                    name=self.name)

    def _sweep(self, Ms, guesses):
        """Refresh both populations from the frozen density pair."""
        Us, fresh, infos = [], [], []
        for i in (0, 1):
            own, other = Ms[i][1:], Ms[1 - i][1:]
            f = self.discomfort(self.xs[i], own, other)
            z = self.ham.z_of(own, other)
            term = self.terminals[i].value(self.xs[i], Ms[i][-1])
            U, _ = hjb_backward(self.grids[i], self.ham, self.nu,
                                self.xs[i], f, term, z_levels=z,
                                plan=self.plans[i],
                                u_guess_levels=guesses[i])
            M, info = kfp_forward(self.grids[i], self.ham, self.nu,
                                  self.xs[i], U, self.m0s[i],
                                  z_levels=z, plan=self.plans[i])
            Us.append(U)
            fresh.append(M)
            infos.append(info)
        return Us, fresh, infos

    def picard(self, delta=0.5, tol=1e-9, max_iter=400):
        """Damped iteration on the density pair; returns stacked fields."""
        if not 0.0 < delta <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        g = self.grid
        Ms = [np.tile(m0, (g.N_T + 1, 1)) for m0 in self.m0s]
        guesses = [None, None]
        history = []
        for it in range(1, max_iter + 1):
            Us, fresh, infos = self._sweep(Ms, guesses)
            guesses = [U[:-1] for U in Us]
            gap = max(float(np.max(np.abs(f - m)))
                      for f, m in zip(fresh, Ms))
            history.append(gap)
            Ms = [(1.0 - delta) * m + delta * f
                  for m, f in zip(Ms, fresh)]
            if gap <= tol:
                rep = {"outer_iterations": it,
                       "residual_history": history,
                       "min_density": float(min(np.min(m) for m in fresh)),
                       "mass_final": [float(np.sum(m[-1]) * g.h)
                                      for m in fresh]}
                return self.stack(*Us), self.stack(*fresh), rep
        raise SolverError("two-population sweep stalled at change "
                          f"{history[-1]:.3e} after {max_iter} iterations")

    def flux_balance(self, u_pair, m_pair):
        """Total entry rate and total exit rate at one field pair."""
        total_in = sum(p.entrance_flux for p in self.plans)
        total_out = 0.0
        for i in (0, 1):
            z = self.ham.z_of(m_pair[i], m_pair[1 - i])
            flux = exit_face_flux(self.grids[i], self.ham, self.nu,
                                  self.xs[i], u_pair[i], m_pair[i],
                                  self.plans[i], z=z)
            total_out += float(np.sum(flux))
        return float(total_in), total_out


def two_population_inner(problem, **kwargs):
    """Inner-solver adapter handing the pair sweep to the restart driver."""
    return problem.picard(**kwargs)


# -- registry ------------------------------------------------------------------

def _hbar(X):
    return np.sin(2 * np.pi * X) + np.cos(2 * np.pi * X)


def _build_quadratic(N_h, N_T, nu, T, params):
    # f(x, m) = m^2 - hbar(x); the 1D reduction keeps the x1 part of hbar
    dim = int(params.get("dim", 1))
    if dim not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    g = Grid("torus", N_h, N_T, T, dim=dim)
    if dim == 1:
        offset = _hbar
        m0 = lambda X: 1.0 + 0.3 * np.cos(2 * np.pi * X)
    else:
        offset = lambda X0, X1: _hbar(X0) + np.sin(2 * np.pi * X1)
        m0 = lambda X0, X1: 1.0 + 0.3 * np.cos(2 * np.pi * X0)
    return MFGProblem(g, GodunovQuadratic(dim=dim), nu,
                      PowerCoupling(2.0, offset), ZeroTerminal(), m0,
                      name="example1_quadratic")


def _build_ergodic_demo(N_h, N_T, nu, T, params):
    # robustness demo: beta = 3/2 Hamiltonian with an oscillatory potential
    # and the smoothing cost (I - lap)^{-2} m; run through the long-time
    # restarts, the density concentrates as the viscosity vanishes
    g = Grid("torus", N_h, N_T, T, dim=2)
    pot = lambda X0, X1: (np.sin(2 * np.pi * X1) + np.sin(2 * np.pi * X0)
                          + np.cos(4 * np.pi * X0))
    ham = GodunovPower(1.5, 1.0, potential=pot, dim=2)
    m0 = lambda X0, X1: np.ones_like(X0)
    return MFGProblem(g, ham, nu, NonlocalCoupling(g), ZeroTerminal(), m0,
                      name="ergodic_demo")


def _build_two_population(N_h, N_T, nu, T, params):
    entry_flux = float(params.get("entry_flux", 1.0))
    exit_cost = float(params.get("exit_cost", -4.0))
    entrance_cost = float(params.get("entrance_cost", 0.0))
    enter = {"type": "entrance", "flux": entry_flux, "cost": entrance_cost}
    leave = {"type": "exit", "cost": exit_cost}
    g0 = Grid("interval", N_h, N_T, T,
              boundary={"left": dict(enter), "right": dict(leave)})
    g1 = Grid("interval", N_h, N_T, T,
              boundary={"left": dict(leave), "right": dict(enter)})
    ham = Congestion2D(a_self=1.0, a_other=5.0, dim=1)
    zero = np.zeros(g0.n_space)
    return TwoPopulationProblem((g0, g1), ham, nu, crowd_discomfort(),
                                (ZeroTerminal(), ZeroTerminal()),
                                (zero, zero.copy()), name="two_population")


def _build_evacuation(N_h, N_T, nu, T, params):
    exit_cost = float(params.get("exit_cost", 0.0))
    g = Grid("interval", N_h, N_T, T,
             boundary={"right": {"type": "exit", "cost": exit_cost}})
    x = g.coords()[0]
    m0 = np.where((x >= 0.15) & (x <= 0.55), 4.0, 0.0)
    stay = LocalCoupling(lambda xs, m: np.ones(np.shape(m)),
                         lambda xs, m: np.zeros(np.shape(m)))
    return MFGProblem(g, CongestionPower(c=8.0, alpha=0.75), nu, stay,
                      ZeroTerminal(), m0, name="evacuation")


def _build_huggett(N_h, N_T, nu, T, params):
    kwargs = {k: float(v) for k, v in params.items()}
    return HuggettParams(N_h=N_h, **kwargs)


class ProblemEntry:
    """One catalog row: how to build the problem and how to run it."""

    def __init__(self, name, kind, description, defaults, params, solvers,
                 build):
        self.name = name
        self.kind = kind
        self.description = description
        self.defaults = dict(defaults)
        self.params = tuple(params)
        self.solvers = tuple(solvers)
        self._build = build

    def build(self, N_h, N_T, nu, T, params=None):
        params = dict(params or {})
        unknown = sorted(set(params) - set(self.params))
        if unknown:
            raise ValueError(f"unknown parameters for {self.name}: "
                             + ", ".join(unknown))
        return self._build(N_h, N_T, nu, T, params)


REGISTRY = {
    "example1_quadratic": ProblemEntry(
        "example1_quadratic", "horizon",
        "quadratic game on the torus with f = m^2 - hbar(x)",
        {}, ("dim",),
        ("newton", "picard", "recursive", "admm", "cp"),
        _build_quadratic),
    "ergodic_demo": ProblemEntry(
        "ergodic_demo", "ergodic",
        "near-deterministic ergodic game with a smoothing nonlocal cost",
        {"nu": 0.001, "N_T": 32, "T": 2.0, "solver": "picard"}, (),
        ("picard", "newton"),
        _build_ergodic_demo),
    "two_population": ProblemEntry(
        "two_population", "two_population",
        "two crowds with mirrored doors, congestion, and discomfort costs",
        {"nu": 0.3, "N_h": 64, "N_T": 32, "T": 4.0, "solver": "picard"},
        ("entry_flux", "exit_cost", "entrance_cost"),
        ("picard",),
        _build_two_population),
    "evacuation_mfg_vs_mfc": ProblemEntry(
        "evacuation_mfg_vs_mfc", "comparison",
        "congested corridor with one exit, game against planner",
        {"nu": 0.05, "N_h": 64, "T": 0.5, "solver": "picard",
         "solver_params": {"delta": 0.4, "tol": 1e-8}},
        ("exit_cost",),
        ("picard",),
        _build_evacuation),
    "huggett": ProblemEntry(
        "huggett", "huggett",
        "stationary two-income wealth distribution and interest rate",
        {"N_h": 200, "solver": "picard"},
        ("rho", "gamma", "lam1", "lam2", "y1", "y2", "x_low", "x_high"),
        ("picard",),
        _build_huggett),
}


def entries():
    return list(REGISTRY.values())


def get_entry(name):
    if name not in REGISTRY:
        known = ", ".join(sorted(REGISTRY))
        raise KeyError(f"unknown problem {name!r}; known: {known}")
    return REGISTRY[name]


def build_problem(name, N_h=32, N_T=64, nu=0.5, T=1.0, params=None):
    """Build a catalog problem at explicit sizes (defaults not applied)."""
    return get_entry(name).build(N_h, N_T, nu, T, params)
