"""Optimization and special-function kernels.

* :func:`solve_lp` -- dense two-phase simplex with Bland's rule.
* :func:`solve_simplex_qp` -- penalized least squares over a product of unit
  simplices, one primal active-set solve per block.
* :func:`chisq_quantile` -- chi-square quantiles.

The inner loops are compiled with numba; the batched entry points
(:func:`solve_lp_batch`, :func:`solve_qp_blocks`) let callers push thousands
of small problems through one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy import stats

from .errors import InvalidDegrees, SolverStalled, ValidationError

FEAS_TOL = 1e-8
OPT_TOL = 1e-8
QP_TOL = 1e-9

# status codes shared by the compiled kernels
OPTIMAL, INFEASIBLE, UNBOUNDED, STALLED = 0, 1, 2, 3
_STATUS_NAMES = {OPTIMAL: "optimal", INFEASIBLE: "infeasible", UNBOUNDED: "unbounded", STALLED: "stalled"}

# eigenvalues of the outcome-space Gram matrix below this fraction of the
# largest are treated as exact zeros
_EIG_CUTOFF = 1e-11
_PIVOT_TOL = 1e-11
# accepted scaled multiplier violation for weights whose entry makes no progress
_TABU_TOL = 1e-6


# ---------------------------------------------------------------------------
# linear programming


@nb.njit(cache=True)
def _pivot(tab, z, r, s):
    m = tab.shape[0]
    piv = tab[r, s]
    for j in range(tab.shape[1]):
        tab[r, j] /= piv
    for i in range(m):
        if i != r:
            f = tab[i, s]
            if f != 0.0:
                for j in range(tab.shape[1]):
                    tab[i, j] -= f * tab[r, j]
                tab[i, s] = 0.0
    f = z[s]
    if f != 0.0:
        for j in range(z.shape[0]):
            z[j] -= f * tab[r, j]
        z[s] = 0.0


@nb.njit(cache=True)
def _bland_loop(tab, z, basis, ncols, opt_tol, maxit):
    """Bland-rule pivoting until optimal (0), unbounded (2) or stalled (3)."""
    m = tab.shape[0]
    rhs = tab.shape[1] - 1
    it = 0
    while it < maxit:
        s = -1
        for j in range(ncols):
            if z[j] < -opt_tol:
                s = j
                break
        if s < 0:
            return OPTIMAL, it
        r = -1
        best = np.inf
        for i in range(m):
            a = tab[i, s]
            if a > _PIVOT_TOL:
                ratio = tab[i, rhs] / a
                if r < 0 or ratio < best - 1e-13 * (1.0 + abs(best)):
                    r = i
                    best = ratio
                elif ratio <= best + 1e-13 * (1.0 + abs(best)) and basis[i] < basis[r]:
                    r = i
                    best = min(best, ratio)
        if r < 0:
            return UNBOUNDED, it
        _pivot(tab, z, r, s)
        basis[r] = s
        it += 1
    return STALLED, it


@nb.njit(cache=True)
def _simplex_core(A, b, c, maximize, feas_tol, opt_tol, maxit, x_out, y_out):
    """Two-phase simplex for min/max c'x s.t. Ax = b, x >= 0.

    Writes the basic solution into ``x_out`` and equality duals into ``y_out``.
    Returns (status, value, pivots).
    """
    m, n = A.shape
    N = n + m
    tab = np.zeros((m, N + 1))
    sgn = np.ones(m)
    for i in range(m):
        if b[i] < 0.0:
            sgn[i] = -1.0
        for j in range(n):
            tab[i, j] = sgn[i] * A[i, j]
        tab[i, n + i] = 1.0
        tab[i, N] = sgn[i] * b[i]
    basis = np.empty(m, dtype=np.int64)
    for i in range(m):
        basis[i] = n + i
    # phase 1: minimize the sum of artificials
    z = np.zeros(N + 1)
    for j in range(n):
        acc = 0.0
        for i in range(m):
            acc += tab[i, j]
        z[j] = -acc
    acc = 0.0
    for i in range(m):
        acc += tab[i, N]
    z[N] = -acc
    status, it1 = _bland_loop(tab, z, basis, n, opt_tol, maxit)
    if status == STALLED:
        return STALLED, np.nan, it1
    if -z[N] > feas_tol:
        return INFEASIBLE, np.nan, it1
    # drive zero-level artificials out of the basis; rows with no pivot are redundant
    for i in range(m):
        if basis[i] >= n:
            s = -1
            big = _PIVOT_TOL
            for j in range(n):
                if abs(tab[i, j]) > big:
                    big = abs(tab[i, j])
                    s = j
            if s >= 0:
                tab[i, N] = 0.0
                _pivot(tab, z, i, s)
                basis[i] = s
    # phase 2
    cost = np.empty(n)
    for j in range(n):
        cost[j] = -c[j] if maximize else c[j]
    z[:] = 0.0
    for j in range(n):
        z[j] = cost[j]
    for i in range(m):
        bi = basis[i]
        if bi < n and cost[bi] != 0.0:
            f = cost[bi]
            for j in range(N + 1):
                z[j] -= f * tab[i, j]
    status, it2 = _bland_loop(tab, z, basis, n, opt_tol, maxit)
    x_out[:] = 0.0
    for i in range(m):
        if basis[i] < n:
            x_out[basis[i]] = tab[i, N]
    for i in range(m):
        y_out[i] = -sgn[i] * z[n + i]
        if maximize:
            y_out[i] = -y_out[i]
    if status != OPTIMAL:
        return status, np.nan, it1 + it2
    value = 0.0
    for j in range(n):
        value += c[j] * x_out[j]
    return OPTIMAL, value, it1 + it2


@nb.njit(cache=True)
def _lp_batch(A_stack, a_idx, b, c_stack, c_idx, maximize, feas_tol, opt_tol, maxit):
    B = a_idx.shape[0]
    m = A_stack.shape[1]
    n = A_stack.shape[2]
    x = np.zeros((B, n))
    y = np.zeros((B, m))
    val = np.empty(B)
    status = np.empty(B, dtype=np.int64)
    for t in range(B):
        st, v, _ = _simplex_core(
            A_stack[a_idx[t]], b[t], c_stack[c_idx[t]], maximize[t], feas_tol, opt_tol, maxit, x[t], y[t]
        )
        status[t] = st
        val[t] = v
    return val, x, y, status


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """Optimize ``objective' x`` subject to ``A x = b`` and ``x >= 0``.

    Parameters
    ----------
    objective : ndarray, shape (n,)
    A : ndarray, shape (m, n)
    b : ndarray, shape (m,)
    sense : {"max", "min"}
    """

    objective: np.ndarray
    A: np.ndarray
    b: np.ndarray
    sense: str = "max"

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float)
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape != (b.size, c.size):
            raise ValidationError(f"constraint matrix {A.shape} does not match b ({b.size}) and c ({c.size})")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValidationError("LP data must be finite")
        if self.sense not in ("max", "min"):
            raise ValidationError("sense must be 'max' or 'min'")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True, eq=False)
class LpSolution:
    """Outcome of :func:`solve_lp`.

    ``point`` and ``dual`` are filled only when ``status == "optimal"``.
    """

    status: str
    value: float
    point: np.ndarray | None
    dual: np.ndarray | None = None


def solve_lp(prog: LinearProgram, feas_tol: float = FEAS_TOL, opt_tol: float = OPT_TOL) -> LpSolution:
    """Solve a dense LP in equality form by the two-phase simplex method.

    Bland's smallest-index rule picks both the entering and the leaving
    variable, so the method terminates on degenerate problems. The returned
    point is a basic solution.

    Returns
    -------
    LpSolution
        ``status`` is "optimal", "infeasible" or "unbounded".
    """
    m, n = prog.A.shape
    x = np.zeros(n)
    y = np.zeros(m)
    maxit = 50 * (m + n) + 1000
    st, val, _ = _simplex_core(prog.A, prog.b, prog.objective, prog.sense == "max", feas_tol, opt_tol, maxit, x, y)
    if st == STALLED:
        raise SolverStalled("simplex iteration cap reached", best=x)
    if st != OPTIMAL:
        return LpSolution(_STATUS_NAMES[st], np.nan, None, None)
    return LpSolution("optimal", float(val), x, y)


def solve_lp_batch(A_stack, a_idx, b, c_stack, c_idx, maximize, feas_tol=FEAS_TOL, opt_tol=OPT_TOL):
    """Solve many LPs that share a few constraint matrices and objectives.

    Parameters
    ----------
    A_stack : ndarray, shape (NA, m, n)
    a_idx : ndarray of int, shape (B,)
        Constraint matrix used by each problem.
    b : ndarray, shape (B, m)
    c_stack : ndarray, shape (NC, n)
    c_idx : ndarray of int, shape (B,)
    maximize : ndarray of bool, shape (B,)

    Returns
    -------
    values, points, duals, status
        Status codes: 0 optimal, 1 infeasible, 2 unbounded, 3 stalled.
    """
    A_stack = np.ascontiguousarray(A_stack, dtype=float)
    m, n = A_stack.shape[1:]
    maxit = 50 * (m + n) + 1000
    return _lp_batch(
        A_stack,
        np.ascontiguousarray(a_idx, dtype=np.int64),
        np.ascontiguousarray(b, dtype=float),
        np.ascontiguousarray(c_stack, dtype=float),
        np.ascontiguousarray(c_idx, dtype=np.int64),
        np.ascontiguousarray(maximize, dtype=np.bool_),
        feas_tol,
        opt_tol,
        maxit,
    )


# ---------------------------------------------------------------------------
# quadratic programming over unit simplices


@nb.njit(cache=True)
def _jacobi_eigh(S, vals, vecs):
    """Cyclic Jacobi eigen-decomposition of a small symmetric matrix (in place)."""
    n = S.shape[0]
    for i in range(n):
        for j in range(n):
            vecs[i, j] = 1.0 if i == j else 0.0
    for sweep in range(60):
        off = 0.0
        diag = 0.0
        for i in range(n):
            diag += S[i, i] * S[i, i]
            for j in range(i + 1, n):
                off += S[i, j] * S[i, j]
        if off <= 1e-32 * diag or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = S[p, q]
                if apq == 0.0:
                    continue
                theta = (S[q, q] - S[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                S[p, p] -= t * apq
                S[q, q] += t * apq
                S[p, q] = 0.0
                S[q, p] = 0.0
                for k in range(n):
                    if k == p or k == q:
                        continue
                    skp = S[k, p]
                    skq = S[k, q]
                    S[k, p] = c * skp - s * skq
                    S[p, k] = S[k, p]
                    S[k, q] = s * skp + c * skq
                    S[q, k] = S[k, q]
                for k in range(n):
                    vkp = vecs[k, p]
                    vkq = vecs[k, q]
                    vecs[k, p] = c * vkp - s * vkq
                    vecs[k, q] = s * vkp + c * vkq
    for i in range(n):
        vals[i] = S[i, i]


@nb.njit(cache=True)
def _subproblem_small(A, c, e, lam, free_idx, nf, G, gv, V, x, mc, me):
    """Weight-space form of :func:`_subproblem` when ``nf`` is below the row count.

    A_F' (A_F A_F' + lam)^+ on the numerical range equals V (D + lam)^-1 V' A_F'
    over the same nonzero spectrum of A_F' A_F = V D V'. ``G``, ``gv`` and
    ``V`` must be contiguous and sized ``nf``.
    """
    n = A.shape[0]
    if nf == 1:
        x[0] = 1.0
        x[1] = 0.0
        return 0.0
    for a in range(nf):
        ma = free_idx[a]
        bc = 0.0
        be = 0.0
        for r in range(n):
            bc += A[r, ma] * c[r]
            be += A[r, ma] * e[r]
        mc[a] = bc
        me[a] = be
        for b in range(a, nf):
            mb = free_idx[b]
            acc = 0.0
            for r in range(n):
                acc += A[r, ma] * A[r, mb]
            G[a, b] = acc
            G[b, a] = acc
    _jacobi_eigh(G, gv, V)
    top = 0.0
    for i in range(nf):
        if gv[i] > top:
            top = gv[i]
    cut = _EIG_CUTOFF * top
    for f in range(2 * nf):
        x[f] = 0.0
    for i in range(nf):
        if gv[i] > cut:
            uc = 0.0
            ue = 0.0
            for r in range(nf):
                uc += V[r, i] * mc[r]
                ue += V[r, i] * me[r]
            d = gv[i] + lam
            for r in range(nf):
                x[r] += V[r, i] * uc / d
                x[nf + r] += V[r, i] * ue / d
    sc = 0.0
    se = 0.0
    for f in range(nf):
        sc += x[f]
        se += x[nf + f]
    half_nu = (1.0 - sc) / se
    for f in range(nf):
        x[f] = x[f] + half_nu * x[nf + f]
    return half_nu


@nb.njit(cache=True)
def _subproblem(A, c, e, lam, free_idx, nf, S, vals, vecs, x, mc, me):
    """Minimize ||A_F x - c||^2 + lam ||x||^2 subject to sum(x) = 1 on the free set.

    Uses the outcome-space identity x = A_F' (A_F A_F' + lam I)^+ h with the
    Gram pseudo-inverse restricted to its numerical range, so directions the
    free columns cannot reach are dropped instead of amplified by 1/lam.
    ``A' e = 1`` holds by construction, which makes the multiplier of the sum
    constraint enter through h = c + (nu/2) e.
    """
    n = A.shape[0]
    for i in range(n):
        for j in range(i, n):
            acc = 0.0
            for f in range(nf):
                m = free_idx[f]
                acc += A[i, m] * A[j, m]
            S[i, j] = acc
            S[j, i] = acc
    if n <= 12:
        _jacobi_eigh(S, vals, vecs)
    else:
        w, v = np.linalg.eigh(S)
        vals[:] = w
        vecs[:, :] = v
    top = 0.0
    for i in range(n):
        if vals[i] > top:
            top = vals[i]
    cut = _EIG_CUTOFF * top
    mc[:] = 0.0
    me[:] = 0.0
    for i in range(n):
        if vals[i] > cut:
            uc = 0.0
            ue = 0.0
            for r in range(n):
                uc += vecs[r, i] * c[r]
                ue += vecs[r, i] * e[r]
            d = vals[i] + lam
            for r in range(n):
                mc[r] += vecs[r, i] * uc / d
                me[r] += vecs[r, i] * ue / d
    sc = 0.0
    se = 0.0
    for f in range(nf):
        m = free_idx[f]
        xc = 0.0
        xe = 0.0
        for r in range(n):
            xc += A[r, m] * mc[r]
            xe += A[r, m] * me[r]
        x[f] = xc
        x[nf + f] = xe
        sc += xc
        se += xe
    half_nu = (1.0 - sc) / se
    for f in range(nf):
        x[f] = x[f] + half_nu * x[nf + f]
    return half_nu


@nb.njit(cache=True)
def _block_value(L, P, w, lam, pi):
    J, M = L.shape
    v = 0.0
    for j in range(J):
        fit = 0.0
        for m in range(M):
            fit += L[j, m] * pi[m]
        r = P[j] - fit
        v += w[j] * r * r
    for m in range(M):
        v += lam * pi[m] * pi[m]
    return v


@nb.njit(cache=True)
def _gradient(L, P, w, lam, pi, g, res):
    J, M = L.shape
    for j in range(J):
        fit = 0.0
        for m in range(M):
            fit += L[j, m] * pi[m]
        res[j] = w[j] * (fit - P[j])
    for m in range(M):
        acc = 0.0
        for j in range(J):
            acc += L[j, m] * res[j]
        g[m] = 2.0 * (acc + lam * pi[m])


@nb.njit(cache=True)
def _qp_block(L, P, w, lam, pi, warm, tol, maxit, ws, Gs, Vs):
    """Primal active-set solve of one simplex block.

    Minimizes sum_j w_j (P_j - (L pi)_j)^2 + lam ||pi||^2 over the unit
    simplex; ``pi`` holds the warm start on entry (if ``warm``) and the
    solution on exit. Returns (status, iterations, kkt_residual).
    """
    J, M = L.shape
    n = J + 1
    tau2 = 0.0
    for j in range(J):
        if w[j] > tau2:
            tau2 = w[j]
    if tau2 <= 0.0:
        tau2 = 1.0
    tau = np.sqrt(tau2)
    # augmented design: the extra row tau * 1' is constant on the simplex and
    # supplies a vector e with A' e = 1
    A, c, e, S, vals, vecs, x, g, mc, me, res, sw, free_idx, free, tabu = ws
    for j in range(J):
        sw[j] = np.sqrt(w[j])
    e[:] = 0.0
    gscale = lam
    for m in range(M):
        col = 0.0
        for j in range(J):
            A[j, m] = sw[j] * L[j, m]
            col += A[j, m] * A[j, m]
        A[J, m] = tau
        if col + lam > gscale:
            gscale = col + lam
    if gscale <= 0.0:
        gscale = 1.0
    for j in range(J):
        c[j] = sw[j] * P[j]
    c[J] = tau
    e[J] = 1.0 / tau

    free[:] = False
    if warm:
        tot = 0.0
        for m in range(M):
            if pi[m] < 0.0:
                pi[m] = 0.0
            tot += pi[m]
        if tot > 0.0:
            for m in range(M):
                pi[m] /= tot
                free[m] = pi[m] > 0.0
        else:
            warm = False
    if not warm:
        best = np.inf
        bm = 0
        for m in range(M):
            v = lam
            for j in range(J):
                r = P[j] - L[j, m]
                v += w[j] * r * r
            if v < best:
                best = v
                bm = m
        pi[:] = 0.0
        pi[bm] = 1.0
        free[bm] = True

    # weights whose entry produced a zero-length step; barred until progress
    tabu[:] = False
    entered = -1
    kkt = np.inf
    for it in range(maxit):
        nf = 0
        for m in range(M):
            if free[m]:
                free_idx[nf] = m
                nf += 1
        if nf < n:
            _subproblem_small(A, c, e, lam, free_idx, nf, Gs[nf], Gs[0][nf], Vs[nf], x, mc, me)
        else:
            _subproblem(A, c, e, lam, free_idx, nf, S, vals, vecs, x, mc, me)
        neg = False
        for f in range(nf):
            if x[f] < 0.0:
                neg = True
                break
        if neg:
            # step towards x until the first free weight hits zero
            t = 1.0
            blk = -1
            for f in range(nf):
                if x[f] < 0.0:
                    m = free_idx[f]
                    r = pi[m] / (pi[m] - x[f])
                    if r < t:
                        t = r
                        blk = m
            if blk == entered and t <= 0.0:
                tabu[blk] = True
            elif t > 0.0:
                tabu[:] = False
            entered = -1
            for f in range(nf):
                m = free_idx[f]
                pi[m] = pi[m] + t * (x[f] - pi[m])
            if blk >= 0:
                pi[blk] = 0.0
                free[blk] = False
            for f in range(nf):
                m = free_idx[f]
                if pi[m] <= 0.0:
                    pi[m] = 0.0
                    free[m] = False
            continue
        for f in range(nf):
            pi[free_idx[f]] = x[f]
        tot = 0.0
        for m in range(M):
            tot += pi[m]
        for m in range(M):
            pi[m] /= tot
        _gradient(L, P, w, lam, pi, g, res)
        nu = 0.0
        for f in range(nf):
            nu += g[free_idx[f]]
        nu /= nf
        stat = 0.0
        for f in range(nf):
            d = abs(g[free_idx[f]] - nu)
            if d > stat:
                stat = d
        worst = 0.0
        wm = -1
        barred = 0.0
        for m in range(M):
            if not free[m]:
                d = g[m] - nu
                if tabu[m]:
                    barred = min(barred, d)
                elif d < worst:
                    worst = d
                    wm = m
        kkt = max(stat, -worst, -barred) / gscale
        if wm < 0 or -worst <= tol * gscale:
            if -barred <= _TABU_TOL * gscale:
                return OPTIMAL, it + 1, kkt
            return STALLED, it + 1, kkt
        free[wm] = True
        entered = wm
    return STALLED, maxit, kkt


@nb.njit(cache=True)
def _qp_batch(L_stack, l_idx, targets, weights, lam, pi, warm, tol, maxit):
    B = l_idx.shape[0]
    values = np.empty(B)
    kkt = np.empty(B)
    status = np.empty(B, dtype=np.int64)
    iters = np.empty(B, dtype=np.int64)
    J, M = L_stack.shape[1], L_stack.shape[2]
    n = J + 1
    # scratch shared by all blocks; every field is reset inside _qp_block
    ws = (
        np.empty((n, M)), np.empty(n), np.empty(n), np.empty((n, n)), np.empty(n),
        np.empty((n, n)), np.empty(2 * M), np.empty(M), np.empty(n), np.empty(n),
        np.empty(J), np.empty(J), np.empty(M, dtype=np.int64),
        np.empty(M, dtype=np.bool_), np.empty(M, dtype=np.bool_),
    )
    # contiguous per-size scratch for the weight-space path; Gs[0] row f holds
    # the eigenvalues of size f
    Gs = [np.empty((n, n))]
    Vs = [np.empty((n, n))]
    for f in range(1, n):
        Gs.append(np.empty((f, f)))
        Vs.append(np.empty((f, f)))
    for t in range(B):
        L = L_stack[l_idx[t]]
        st, it, r = _qp_block(L, targets[t], weights[t], lam[t], pi[t], warm[t], tol, maxit, ws, Gs, Vs)
        status[t] = st
        iters[t] = it
        kkt[t] = r
        values[t] = _block_value(L, targets[t], weights[t], lam[t], pi[t])
    return values, kkt, status, iters


def solve_qp_blocks(L_stack, l_idx, targets, weights, ridge, warm=None, tol: float = QP_TOL):
    """Solve many independent simplex-constrained penalized least-squares blocks.

    Block ``t`` minimizes
    ``sum_j weights[t, j] (targets[t, j] - (L @ pi)_j)**2 + ridge[t] ||pi||**2``
    over the unit simplex with ``L = L_stack[l_idx[t]]``.

    Parameters
    ----------
    L_stack : ndarray, shape (NL, J, M)
    l_idx : ndarray of int, shape (B,)
    targets, weights : ndarray, shape (B, J)
    ridge : float or ndarray, shape (B,)
    warm : ndarray, shape (B, M), optional
        Feasible starting points; rows of zeros fall back to a cold start.

    Returns
    -------
    pi : ndarray, shape (B, M)
    values : ndarray, shape (B,)
    kkt : ndarray, shape (B,)
        Scaled KKT residuals.
    status : ndarray of int, shape (B,)
        0 for converged, 3 for blocks that hit the iteration cap.
    """
    L_stack = np.ascontiguousarray(L_stack, dtype=float)
    l_idx = np.ascontiguousarray(l_idx, dtype=np.int64)
    B = l_idx.shape[0]
    M = L_stack.shape[2]
    lam = np.broadcast_to(np.asarray(ridge, dtype=float), (B,)).copy()
    if np.any(lam < 0):
        raise ValidationError("ridge penalty must be nonnegative")
    if warm is None:
        pi = np.zeros((B, M))
        use = np.zeros(B, dtype=np.bool_)
    else:
        pi = np.array(warm, dtype=float, copy=True).reshape(B, M)
        use = pi.sum(axis=1) > 0
    values, kkt, status, _ = _qp_batch(
        L_stack,
        l_idx,
        np.ascontiguousarray(targets, dtype=float),
        np.ascontiguousarray(weights, dtype=float),
        lam,
        pi,
        use,
        tol,
        40 + 8 * M,
    )
    return pi, values, kkt, status


@dataclass(frozen=True, eq=False)
class SimplexQP:
    """Blockwise penalized least squares over unit simplices.

    Block ``k`` minimizes
    ``sum_j weights[k, j] (target[k, j] - (design[k] @ pi_k)_j)**2 + ridge ||pi_k||**2``.

    Parameters
    ----------
    design : ndarray, shape (K, J, M)
    target : ndarray, shape (K, J)
    weights : ndarray, shape (K, J)
        Nonnegative data weights.
    ridge : float
        Penalty ``lambda >= 0``.
    """

    design: np.ndarray
    target: np.ndarray
    weights: np.ndarray
    ridge: float = 0.0

    def __post_init__(self):
        D = np.asarray(self.design, dtype=float)
        if D.ndim == 2:
            D = D[None]
        K, J, _ = D.shape
        t = np.asarray(self.target, dtype=float).reshape(K, J)
        w = np.asarray(self.weights, dtype=float).reshape(K, J)
        if np.any(w < 0) or self.ridge < 0:
            raise ValidationError("weights and ridge must be nonnegative")
        object.__setattr__(self, "design", D)
        object.__setattr__(self, "target", t)
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True, eq=False)
class QpSolution:
    """Per-block minimizers, objective values and scaled KKT residuals."""

    weights: np.ndarray
    values: np.ndarray
    kkt_residual: np.ndarray

    @property
    def value(self) -> float:
        return float(self.values.sum())


def solve_simplex_qp(qp: SimplexQP, tol: float = QP_TOL, warm=None) -> QpSolution:
    """Solve every block of ``qp`` by a primal active-set method.

    Raises
    ------
    SolverStalled
        If some block hits the iteration cap; ``best`` holds the iterate.
    """
    K = qp.design.shape[0]
    pi, values, kkt, status = solve_qp_blocks(
        qp.design, np.arange(K), qp.target, qp.weights, np.full(K, float(qp.ridge)), warm, tol
    )
    if np.any(status != OPTIMAL):
        raise SolverStalled("active-set iteration cap reached", best=pi)
    return QpSolution(pi, values, kkt)


# ---------------------------------------------------------------------------
# chi-square quantiles


def chisq_quantile(df: int, p: float) -> float:
    """Quantile of the chi-square distribution with ``df`` degrees of freedom.

    Raises
    ------
    InvalidDegrees
        If ``df`` is not a positive integer.
    """
    if int(df) != df or df < 1:
        raise InvalidDegrees(f"degrees of freedom must be a positive integer, got {df}")
    if not 0.0 < p < 1.0:
        raise ValidationError("p must lie strictly between 0 and 1")
    return float(stats.chi2.ppf(p, int(df)))
