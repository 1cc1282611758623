"""Geometric-Galerkin multigrid and the Krylov pieces built on it.

The target systems are space-time normal operators: symmetric positive
definite, fourth order in space, so plain Krylov stalls and the natural
preconditioner is a V-cycle over a hierarchy obtained by halving axes.
Transfers are per-axis linear interpolation P with restriction R = P^T / 2
per coarsened axis (full weighting); coarse operators are Galerkin products
R A P, and the coarsest level is solved exactly.

Axes are described by (size, periodic, coarsen) triples in C order, so the
same machinery does semi-coarsening (space only, the time axis rides along
with an identity transfer) and full coarsening.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def prolong_axis(n_fine, periodic, order=2):
    """Interpolation from the halved axis back to size n_fine.

    Periodic axes need even size and halve exactly; order 2 fills midpoints
    linearly, order 4 with the cubic stencil (-1, 9, 9, -1)/16.  Interpolation
    order matters: transfers must sum to at least the operator's differential
    order, so fourth-order operators (the biharmonic part of the space-time
    normal systems) need the cubic variant to keep the V-cycle contraction
    level-independent.  Node-centered bounded axes are linear only; they keep
    their endpoints (odd size) or extend constantly past the top coarse node
    (even size).
    """
    if periodic:
        if n_fine % 2:
            raise ValueError("periodic axis must have even size to coarsen")
        nc = n_fine // 2
        rows, cols, vals = [], [], []
        for j in range(nc):
            rows.append(2 * j)
            cols.append(j)
            vals.append(1.0)
            if order == 4 and nc >= 4:
                rows += [2 * j + 1] * 4
                cols += [(j - 1) % nc, j, (j + 1) % nc, (j + 2) % nc]
                vals += [-1.0 / 16, 9.0 / 16, 9.0 / 16, -1.0 / 16]
            else:
                rows += [2 * j + 1, 2 * j + 1]
                cols += [j, (j + 1) % nc]
                vals += [0.5, 0.5]
        return sp.csr_matrix((vals, (rows, cols)), shape=(n_fine, nc))
    if order != 2:
        raise ValueError("bounded axes interpolate linearly")
    nc = (n_fine + 1) // 2
    rows, cols, vals = [], [], []
    for j in range(nc):
        rows.append(2 * j)
        cols.append(j)
        vals.append(1.0)
        if 2 * j + 1 < n_fine:
            if j + 1 < nc:
                rows += [2 * j + 1, 2 * j + 1]
                cols += [j, j + 1]
                vals += [0.5, 0.5]
            else:
                rows.append(2 * j + 1)   # constant extension at the top
                cols.append(j)
                vals.append(1.0)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_fine, nc))


def transfer_pair(axes, order=2):
    """(P, R, coarse_axes) for one halving step.

    axes: list of (size, periodic, coarsen) in C order.  Axes with
    coarsen=False get identity transfers.  R = P^T / 2 on each coarsened
    axis, so <P xc, yf> = 2^k <xc, R yf> with k coarsened axes.  order
    applies to coarsened periodic axes; bounded axes stay linear (they
    carry second-order couplings only in the systems solved here).
    """
    Ps, Rs, coarse = [], [], []
    for size, periodic, coarsen in axes:
        if coarsen:
            P = prolong_axis(size, periodic, order=order if periodic else 2)
            Ps.append(P)
            Rs.append((P.T * 0.5).tocsr())
            coarse.append((P.shape[1], periodic, True))
        else:
            Ps.append(sp.identity(size, format="csr"))
            Rs.append(sp.identity(size, format="csr"))
            coarse.append((size, periodic, False))
    P = Ps[0]
    R = Rs[0]
    for Pa, Ra in zip(Ps[1:], Rs[1:]):
        P = sp.kron(P, Pa, format="csr")
        R = sp.kron(R, Ra, format="csr")
    return P, R, coarse


def _can_halve(axes, min_size):
    sizes = [s for s, _, c in axes if c]
    if not sizes:
        return False
    return all(s % 2 == 0 and s // 2 >= min_size for s, _, c in axes if c)


class Hierarchy:
    """Galerkin multigrid hierarchy with cached smoother factor per level."""

    def __init__(self, A, axes, min_size=4, max_levels=12, order=2):
        self.ops = [A.tocsr()]
        self.P = []
        self.R = []
        ax = list(axes)
        while len(self.ops) < max_levels and _can_halve(ax, min_size):
            P, R, ax = transfer_pair(ax, order=order)
            self.P.append(P)
            self.R.append(R)
            self.ops.append((R @ self.ops[-1] @ P).tocsr())
        # forward Gauss-Seidel sweeps solve with the lower triangle; the
        # natural-order factorization of a triangular matrix has no fill
        self.tril_lu = [spla.splu(sp.tril(A_l, format="csc"), permc_spec="NATURAL")
                        for A_l in self.ops[:-1]]
        self.coarse_lu = spla.splu(self.ops[-1].tocsc())
        self.levels = len(self.ops)

    def smooth(self, level, b, x, sweeps):
        A = self.ops[level]
        L = self.tril_lu[level]
        for _ in range(sweeps):
            r = b - A @ x
            x = x + L.solve(r)
        return x

    def vcycle(self, b, x=None, eta1=2, eta2=2, level=0):
        if x is None:
            x = np.zeros_like(b)
        if level == self.levels - 1:
            return self.coarse_lu.solve(b)
        x = self.smooth(level, b, x, eta1)
        r = b - self.ops[level] @ x
        rc = self.R[level] @ r
        xc = self.vcycle(rc, None, eta1, eta2, level + 1)
        x = x + self.P[level] @ xc
        return self.smooth(level, b, x, eta2)

    def preconditioner(self, eta1=2, eta2=2):
        n = self.ops[0].shape[0]

        def apply(b):
            return self.vcycle(np.asarray(b, dtype=float), None, eta1, eta2)

        return spla.LinearOperator((n, n), matvec=apply)


def bicgstab(A, b, M=None, tol=1e-8, maxiter=500, x0=None):
    """Stabilized bi-conjugate gradients with optional preconditioning.

    Returns (x, info); info['iters'] counts in halves, since the method can
    stop after the first of its two substeps.  info['converged'] reflects
    the true relative residual against b.
    """
    matvec = (lambda v: A @ v) if not isinstance(A, spla.LinearOperator) else A.matvec
    prec = (lambda v: v) if M is None else (M.matvec if isinstance(M, spla.LinearOperator) else M)
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return x * 0, {"iters": 0.0, "converged": True, "resids": [0.0]}
    r = b - matvec(x)
    r0 = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    iters = 0.0
    resids = [np.linalg.norm(r) / bnorm]
    for _ in range(maxiter):
        rho_new = np.dot(r0, r)
        if rho_new == 0.0:
            break
        beta = (rho_new / rho) * (alpha / omega) if iters > 0 else 0.0
        p = r + beta * (p - omega * v) if iters > 0 else r.copy()
        rho = rho_new
        phat = prec(p)
        v = matvec(phat)
        denom = np.dot(r0, v)
        if denom == 0.0:
            break
        alpha = rho / denom
        s = r - alpha * v
        if np.linalg.norm(s) / bnorm < tol:
            x = x + alpha * phat
            iters += 0.5
            resids.append(np.linalg.norm(b - matvec(x)) / bnorm)
            break
        shat = prec(s)
        t = matvec(shat)
        tt = np.dot(t, t)
        if tt == 0.0:
            x = x + alpha * phat
            iters += 0.5
            resids.append(np.linalg.norm(b - matvec(x)) / bnorm)
            break
        omega = np.dot(t, s) / tt
        x = x + alpha * phat + omega * shat
        r = s - omega * t
        iters += 1.0
        resids.append(np.linalg.norm(r) / bnorm)
        if resids[-1] < tol:
            break
    true_res = np.linalg.norm(b - matvec(x)) / bnorm
    return x, {"iters": iters, "converged": true_res < 10 * tol,
               "resids": resids, "true_residual": true_res}


def power_norm_estimate(matvec, rmatvec, n, iters=20, seed=0):
    """Operator 2-norm estimate by power iteration on the normal map."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        w = rmatvec(matvec(v))
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        sigma = np.sqrt(nw)
        v = w / nw
    return sigma
