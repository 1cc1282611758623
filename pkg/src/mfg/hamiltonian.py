"""Monotone discrete Hamiltonians for upwind schemes.

Each kind consumes the one-sided gradient pairs produced by `grid.nabla`:
slot 2a is the forward difference along axis a, slot 2a+1 the backward one.
The Godunov family projects those slots onto K = (R_- x R_+)^d (forward
slots clipped above 0, backward slots below), which is what makes the
resulting scheme monotone: values never increase in a forward slot and
never decrease in a backward slot.

The common surface is duck-typed:

    value(x, q, z=None)        -> (...,)
    grad(x, q, z=None)         -> (..., 2d)     gradient in q
    dgrad(x, q, dq, z=None)    -> (..., 2d)     Hessian action (kink side:
                                                 strictly active slots only)
    conjugate(x, gamma)        -> (vals, feasible-mask), Legendre transform
    kink_margin(x, q, z=None)  -> (...,)        distance to the nearest kink

`x` is a tuple of coordinate arrays (or None when unused); `z` carries
pointwise congestion weights for the density-dependent kinds.
"""

import numpy as np

EVEN = slice(0, None, 2)
ODD = slice(1, None, 2)


def project_K(q):
    """Clip forward slots to R_-, backward slots to R_+."""
    out = np.array(q, dtype=float, copy=True)
    out[..., EVEN] = np.minimum(out[..., EVEN], 0.0)
    out[..., ODD] = np.maximum(out[..., ODD], 0.0)
    return out


def in_K(w, tol=0.0):
    w = np.asarray(w)
    return np.all(w[..., EVEN] <= tol, axis=-1) & np.all(w[..., ODD] >= -tol, axis=-1)


def active_mask(q):
    """1 on slots that survive the projection (strict inequality at kinks)."""
    q = np.asarray(q)
    out = np.zeros(q.shape)
    out[..., EVEN] = (q[..., EVEN] < 0.0).astype(float)
    out[..., ODD] = (q[..., ODD] > 0.0).astype(float)
    return out


class GodunovQuadratic:
    """H(q) = |P_K q|^2 / 2, the upwind form of H0(p) = |p|^2 / 2."""

    separable = True

    def __init__(self, dim=1):
        self.dim = dim
        self.nq = 2 * dim

    def value(self, x, q, z=None):
        p = project_K(q)
        return 0.5 * np.sum(p * p, axis=-1)

    def grad(self, x, q, z=None):
        return project_K(q)

    def dgrad(self, x, q, dq, z=None):
        return active_mask(q) * np.asarray(dq)

    def conjugate(self, x, gamma):
        g = np.asarray(gamma, dtype=float)
        return 0.5 * np.sum(g * g, axis=-1), in_K(g)

    def kink_margin(self, x, q, z=None):
        return np.min(np.abs(np.asarray(q)), axis=-1)

    def reference(self, x, p):
        """Continuous H0 at a plain gradient p, for consistency checks."""
        p = np.atleast_1d(p)
        return 0.5 * np.sum(p * p, axis=-1)


class GodunovPower:
    """H(x, q) = g(x) + c |P_K q|^beta with beta > 1."""

    separable = False

    def __init__(self, beta, c=1.0, potential=None, dim=1):
        if beta <= 1:
            raise ValueError("need beta > 1")
        self.beta = float(beta)
        self.c = float(c)
        self.potential = potential
        self.dim = dim
        self.nq = 2 * dim

    def _pot(self, x):
        if self.potential is None:
            return 0.0
        return np.asarray(self.potential(*x), dtype=float)

    def value(self, x, q, z=None):
        p = project_K(q)
        s = np.sqrt(np.sum(p * p, axis=-1))
        return self._pot(x) + self.c * s ** self.beta

    def grad(self, x, q, z=None):
        p = project_K(q)
        s = np.sqrt(np.sum(p * p, axis=-1))
        fac = np.zeros_like(s)
        pos = s > 0
        fac[pos] = self.c * self.beta * s[pos] ** (self.beta - 2.0)
        return fac[..., None] * p

    def dgrad(self, x, q, dq, z=None):
        p = project_K(q)
        dp = active_mask(q) * np.asarray(dq)
        s = np.sqrt(np.sum(p * p, axis=-1))
        s_eff = np.maximum(s, 1e-10)          # caps the kink curvature
        a = self.c * self.beta * s_eff ** (self.beta - 2.0)
        b = self.c * self.beta * (self.beta - 2.0) * s_eff ** (self.beta - 4.0)
        inner = np.sum(p * dp, axis=-1)
        return a[..., None] * dp + (b * inner)[..., None] * p

    def conjugate(self, x, gamma):
        g = np.asarray(gamma, dtype=float)
        s = np.sqrt(np.sum(g * g, axis=-1))
        bstar = self.beta / (self.beta - 1.0)
        cstar = (self.beta - 1.0) * self.c * (self.beta * self.c) ** (-bstar)
        return cstar * s ** bstar - self._pot(x), in_K(g)

    def kink_margin(self, x, q, z=None):
        q = np.asarray(q)
        s = np.sqrt(np.sum(project_K(q) ** 2, axis=-1))
        return np.minimum(np.min(np.abs(q), axis=-1), s)

    def reference(self, x, p):
        p = np.atleast_1d(p)
        s = np.sqrt(np.sum(p * p, axis=-1))
        return self._pot(x) + self.c * s ** self.beta


class Congestion2D:
    """H(q; m_self, m_other) = |P_K q|^2 / (1 + a_self m_self + a_other m_other).

    Works in any spatial dimension despite the name (the 2d slots are the
    per-axis one-sided pairs); the weight z is supplied per node, either
    directly or via `z_of`.
    """

    separable = True

    def __init__(self, a_self=1.0, a_other=5.0, c=1.0, dim=1):
        self.a_self = float(a_self)
        self.a_other = float(a_other)
        self.c = float(c)
        self.dim = dim
        self.nq = 2 * dim

    def z_of(self, m_self, m_other=0.0):
        return self.c / (1.0 + self.a_self * np.asarray(m_self)
                         + self.a_other * np.asarray(m_other))

    def dz(self, m_self, m_other=0.0):
        denom = (1.0 + self.a_self * np.asarray(m_self)
                 + self.a_other * np.asarray(m_other)) ** 2
        return -self.c * self.a_self / denom, -self.c * self.a_other / denom

    def value(self, x, q, z):
        p = project_K(q)
        return np.asarray(z) * np.sum(p * p, axis=-1)

    def grad(self, x, q, z):
        return 2.0 * np.asarray(z)[..., None] * project_K(q)

    def dgrad(self, x, q, dq, z):
        return 2.0 * np.asarray(z)[..., None] * active_mask(q) * np.asarray(dq)

    def conjugate(self, x, gamma, z=1.0):
        g = np.asarray(gamma, dtype=float)
        return np.sum(g * g, axis=-1) / (4.0 * np.asarray(z)), in_K(g)

    def kink_margin(self, x, q, z=None):
        return np.min(np.abs(np.asarray(q)), axis=-1)


class CongestionPower:
    """H(q; m) = c |P_K q|^2 / (1 + m)^alpha, the evacuation-corridor form.

    `z_mfc` carries the control-problem transform z + m dz/dm, which is what
    the planner's backward equation uses while the transport keeps `z_of`.
    """

    separable = True

    def __init__(self, c=8.0, alpha=0.75, dim=1):
        self.c = float(c)
        self.alpha = float(alpha)
        self.dim = dim
        self.nq = 2 * dim

    def z_of(self, m):
        return self.c / (1.0 + np.asarray(m)) ** self.alpha

    def dz(self, m):
        return -self.c * self.alpha / (1.0 + np.asarray(m)) ** (self.alpha + 1.0)

    def z_mfc(self, m):
        m = np.asarray(m)
        return self.z_of(m) + m * self.dz(m)

    value = Congestion2D.value
    grad = Congestion2D.grad
    dgrad = Congestion2D.dgrad
    conjugate = Congestion2D.conjugate
    kink_margin = Congestion2D.kink_margin


class HuggettCRRA:
    """Envelope splitting of H(x, p) = (y + r x) p + gamma/(1-gamma) p^(1-1/gamma).

    The two slots are (forward quotient, backward quotient); the value is
    H_up(q0) + H_down(q1) - min_p H, so exactly the envelope whose drift has
    the matching sign acts on each slot.  Max-type convention: the scheme
    using it is -rho v + H = 0, so this kind is nonDEcreasing in the forward
    slot (the property checker reports that, by design).
    """

    separable = True

    def __init__(self, gamma=2.0, r=0.03, y=0.1):
        self.gamma = float(gamma)
        self.r = float(r)
        self.y = float(y)
        self.dim = 1
        self.nq = 2
        self.p_floor = 1e-10

    def income(self, x):
        return self.y + self.r * np.asarray(x[0], dtype=float)

    def util(self, c):
        c = np.asarray(c, dtype=float)
        if self.gamma == 1.0:
            return np.log(c)
        return c ** (1.0 - self.gamma) / (1.0 - self.gamma)

    def p_min(self, x):
        e = self.income(x)
        if np.any(e <= 0):
            raise ValueError("income y + r x must stay positive on the grid")
        return e ** (-self.gamma)

    def _H(self, e, p):
        # below the consumption floor the value continues linearly with the
        # floor slope, so the (value, derivative) pair stays the pair of one
        # convex function; the steep continuation stands in for the +inf
        # barrier the exact transform has at p <= 0
        p = np.asarray(p, dtype=float)
        pc = np.maximum(p, self.p_floor)
        if self.gamma == 1.0:
            val = e * pc - 1.0 - np.log(pc)
        else:
            val = e * pc + self.gamma / (1.0 - self.gamma) * pc ** (1.0 - 1.0 / self.gamma)
        return val + self._Hp(e, pc) * (p - pc)

    def _Hp(self, e, p):
        p = np.maximum(p, self.p_floor)
        return e - p ** (-1.0 / self.gamma)

    def envelopes(self, x, p):
        """(H_up, H_down, H_up', H_down') at slope p."""
        e = self.income(x)
        pm = self.p_min(x)
        hmin = self.util(e)
        p = np.asarray(p, dtype=float)
        up_active = p >= pm
        dn_active = p <= pm
        h_up = np.where(up_active, self._H(e, p), hmin)
        h_dn = np.where(dn_active, self._H(e, p), hmin)
        g_up = np.where(up_active, self._Hp(e, p), 0.0)
        g_dn = np.where(dn_active, self._Hp(e, p), 0.0)
        return h_up, h_dn, g_up, g_dn

    def value(self, x, q, z=None):
        q = np.asarray(q, dtype=float)
        e = self.income(x)
        up, _, _, _ = self.envelopes(x, q[..., 0])
        _, dn, _, _ = self.envelopes(x, q[..., 1])
        return up + dn - self.util(e)

    def grad(self, x, q, z=None):
        q = np.asarray(q, dtype=float)
        _, _, g_up, _ = self.envelopes(x, q[..., 0])
        _, _, _, g_dn = self.envelopes(x, q[..., 1])
        return np.stack([g_up, g_dn], axis=-1)

    def consumption(self, p):
        return np.maximum(p, self.p_floor) ** (-1.0 / self.gamma)

    def kink_margin(self, x, q, z=None):
        q = np.asarray(q, dtype=float)
        pm = self.p_min(x)
        m0 = np.abs(q[..., 0] - pm)
        m1 = np.abs(q[..., 1] - pm)
        return np.minimum(np.minimum(m0, m1),
                          np.minimum(q[..., 0], q[..., 1]) - self.p_floor)


def conjugate_separable(ham, x, gamma, z=None, tol=1e-12, iters=200):
    """Slotwise numeric Legendre transform for separable Godunov kinds.

    Within K the projection is the identity, so the supremum splits per
    slot; each scalar concave problem is solved by bisection on the
    stationarity equation.  Returns (values, feasible-mask).
    """
    g = np.asarray(gamma, dtype=float)
    feas = in_K(g)
    flat = g.reshape(-1, g.shape[-1])
    vals = np.zeros(flat.shape[0])
    for k in range(flat.shape[0]):
        total = 0.0
        for s in range(flat.shape[-1]):
            target = flat[k, s]
            sign = -1.0 if s % 2 == 0 else 1.0   # slot sign inside K
            lo, hi = 0.0, 1.0
            e = np.zeros(flat.shape[-1])
            e[s] = sign

            def slope(t):
                gr = ham.grad(x, t * e, z) if z is not None else ham.grad(x, t * e)
                return float(np.asarray(gr)[..., s].reshape(-1)[0])

            while abs(slope(hi * 1.0)) < abs(target) and hi < 1e8:
                hi *= 2.0
            for _ in range(iters):
                mid = 0.5 * (lo + hi)
                if abs(slope(mid)) < abs(target):
                    lo = mid
                else:
                    hi = mid
                if hi - lo < tol:
                    break
            t = 0.5 * (lo + hi)
            q = t * e
            val = ham.value(x, q, z) if z is not None else ham.value(x, q)
            total += target * t * sign - float(np.asarray(val).reshape(-1)[0])
        vals[k] = total
    return vals.reshape(g.shape[:-1]), feas


def check_properties(ham, x=None, z=None, n_samples=400, box=3.0, seed=0,
                     reference=None):
    """Empirical audit of the structural properties a monotone kind must have.

    Returns a report dict; violations are counted, never raised, so a
    deliberately broken kind can be inspected.  Checks: slot monotonicity
    signs, consistency with the continuous Hamiltonian on matched slots,
    midpoint convexity, and fitted growth constants c1..c4 with
    <H_q, q> - H >= c1 |H_q|^2 - c2 and |H_q| <= c3 |q| + c4.
    """
    rng = np.random.default_rng(seed)
    nq = ham.nq
    q = rng.uniform(-box, box, size=(n_samples, nq))
    kw = {} if z is None else {"z": z}
    val = ham.value(x, q, **kw)
    gr = ham.grad(x, q, **kw)

    eps = 1e-4
    mono_bad = 0
    for s in range(nq):
        dq = np.zeros(nq)
        dq[s] = eps
        dv = ham.value(x, q + dq, **kw) - val
        if s % 2 == 0:
            mono_bad += int(np.sum(dv > 1e-12))
        else:
            mono_bad += int(np.sum(dv < -1e-12))

    p = rng.uniform(-box, box, size=(n_samples, ham.dim))
    qp = np.repeat(p, 2, axis=-1)
    ref = reference(x, p) if reference is not None else (
        ham.reference(x, p) if hasattr(ham, "reference") else None)
    consistency = (float(np.max(np.abs(ham.value(x, qp, **kw) - ref)))
                   if ref is not None else None)

    q2 = rng.uniform(-box, box, size=(n_samples, nq))
    mid = ham.value(x, 0.5 * (q + q2), **kw)
    convex_bad = int(np.sum(mid > 0.5 * (val + ham.value(x, q2, **kw)) + 1e-10))

    growth = np.sum(gr * q, axis=-1) - val
    gn2 = np.sum(gr * gr, axis=-1)
    c2 = max(0.0, -float(np.min(growth))) + 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = (growth + c2) / gn2
    c1 = float(np.min(ratios[gn2 > 1e-12], initial=np.inf))
    qn = np.sqrt(np.sum(q * q, axis=-1))
    c4 = float(np.max(np.sqrt(gn2)[qn <= 1.0], initial=0.0))
    big = qn > 1.0
    c3 = float(np.max((np.sqrt(gn2)[big] - c4) / qn[big], initial=0.0))

    return {
        "monotone_violations": mono_bad,
        "consistency_max_err": consistency,
        "midpoint_convexity_violations": convex_bad,
        "c1": c1, "c2": c2, "c3": max(c3, 0.0), "c4": c4,
    }


def registered_kinds(dim=1):
    """Name -> (hamiltonian, sampler) for every registered kind.

    The sampler draws (x, q, z) tuples away from kinks, for the
    derivative-consistency audits.
    """

    def godunov_sampler(ham, margin=1e-3):
        def sample(rng, n):
            q = rng.uniform(-3, 3, size=(n, ham.nq))
            bad = ham.kink_margin(None, q) < margin
            while np.any(bad):
                q[bad] = rng.uniform(-3, 3, size=(int(bad.sum()), ham.nq))
                bad = ham.kink_margin(None, q) < margin
            return None, q, None
        return sample

    def congestion_sampler(ham):
        base = godunov_sampler(ham)

        def sample(rng, n):
            _, q, _ = base(rng, n)
            z = ham.z_of(rng.uniform(0.0, 4.0, size=n),
                         rng.uniform(0.0, 4.0, size=n)) \
                if isinstance(ham, Congestion2D) else \
                ham.z_of(rng.uniform(0.0, 4.0, size=n))
            return None, q, z
        return sample

    def huggett_sampler(ham, margin=1e-3):
        def sample(rng, n):
            x = (rng.uniform(0.0, 2.0, size=n),)
            q = rng.uniform(0.05, 3.0, size=(n, 2))
            bad = ham.kink_margin(x, q) < margin
            while np.any(bad):
                q[bad] = rng.uniform(0.05, 3.0, size=(int(bad.sum()), 2))
                bad = ham.kink_margin(x, q) < margin
            return x, q, None
        return sample

    quad = GodunovQuadratic(dim=dim)
    power = GodunovPower(beta=1.5, c=1.0, dim=dim)
    cong = Congestion2D(dim=dim)
    evac = CongestionPower(dim=dim)
    hug = HuggettCRRA()
    return {
        "godunov_quadratic": (quad, godunov_sampler(quad)),
        "godunov_power": (power, godunov_sampler(power)),
        "congestion": (cong, congestion_sampler(cong)),
        "congestion_power": (evac, congestion_sampler(evac)),
        "huggett_crra": (hug, huggett_sampler(hug)),
    }
