"""Identified sets, model projections and sharp effect bounds for binary choice.

The individual-effect distribution of each history is approximated by a
mixture on a fixed grid of effect values (including +-inf). For every slope
on a finite grid, a penalized least-squares fit over mixture weights measures
how far the observed cell probabilities are from the model; slopes whose fit
is within ``epsilon`` of the best form the estimated identified set. Effect
bounds then follow from linear programs over mixture weights that reproduce
the fitted (projected) probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .choice_model import LikelihoodKernel, as_link, cell_likelihood, effect_integrand, likelihood_tensor
from .errors import LpInfeasible, SolverStalled, ValidationError
from .panel_core import CellProbabilities, EffectQuery, SupportIndex, binary_outcomes
from .solvers import OPTIMAL, solve_lp_batch, solve_qp_blocks

POPULATION_N = 1e6
ZERO_CELL_FLOOR = 1e-8
TIE_TOL = 1e-10
# largest likelihood tensor (in floats) kept in memory across the slope grid
_CACHE_LIMIT = 3e7


def alpha_grid_qp() -> np.ndarray:
    """Default grid for the fitting step: -inf, -4, -3.6, ..., 4, +inf (23 points)."""
    return np.concatenate(([-np.inf], np.round(np.arange(-40, 41, 4) / 10.0, 10), [np.inf]))


def alpha_grid_lp() -> np.ndarray:
    """Default grid for the bound LPs: -inf, -8, -7.9, ..., 8, +inf (163 points)."""
    return np.concatenate(([-np.inf], np.round(np.arange(-80, 81) / 10.0, 10), [np.inf]))


def scalar_beta_grid(lo: float = -3.0, hi: float = 3.0, step: float = 0.01) -> np.ndarray:
    """Evenly spaced scalar slopes, shape (G, 1), rounded to kill drift."""
    count = int(round((hi - lo) / step)) + 1
    return np.round(lo + step * np.arange(count), 12)[:, None]


def effective_n(cells: CellProbabilities) -> float:
    """Sample size used for penalties and weights; population cells count as 1e6."""
    return float(cells.n_eff) if cells.n_eff > 0 else POPULATION_N


@dataclass(frozen=True, eq=False)
class GridConfig:
    """Grids and tuning constants for the set estimator.

    Parameters
    ----------
    beta_grid : array_like, shape (G,) or (G, d)
    alpha_grid_qp, alpha_grid_lp : array_like
        Sorted effect grids with endpoints -inf and +inf.
    lam : float, optional
        Ridge penalty; ``1 / (n log n)`` when omitted.
    epsilon : float, optional
        Membership cutoff; ``log n / n`` when omitted.
    weight_iterations : int
        Number of fitting passes; passes after the first use the chi-square
        weights implied by the previous fit.
    """

    beta_grid: np.ndarray = field(default_factory=scalar_beta_grid)
    alpha_grid_qp: np.ndarray = field(default_factory=alpha_grid_qp)
    alpha_grid_lp: np.ndarray = field(default_factory=alpha_grid_lp)
    lam: float | None = None
    epsilon: float | None = None
    weight_iterations: int = 3

    def __post_init__(self):
        b = np.asarray(self.beta_grid, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        if b.ndim != 2 or len(b) == 0 or not np.all(np.isfinite(b)):
            raise ValidationError("beta_grid must be a nonempty finite grid")
        object.__setattr__(self, "beta_grid", b)
        for name in ("alpha_grid_qp", "alpha_grid_lp"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.ndim != 1 or np.any(np.diff(a) <= 0) or a[0] != -np.inf or a[-1] != np.inf:
                raise ValidationError(f"{name} must be strictly increasing from -inf to +inf")
            object.__setattr__(self, name, a)
        if self.lam is not None and self.lam < 0:
            raise ValidationError("lam must be nonnegative")
        if self.epsilon is not None and self.epsilon < 0:
            raise ValidationError("epsilon must be nonnegative")
        if self.weight_iterations < 1:
            raise ValidationError("weight_iterations must be at least 1")

    def ridge(self, n: float) -> float:
        return float(self.lam) if self.lam is not None else 1.0 / (n * np.log(n))

    def cutoff(self, n: float) -> float:
        return float(self.epsilon) if self.epsilon is not None else np.log(n) / n

    def replace(self, **changes) -> "GridConfig":
        fields = dict(
            beta_grid=self.beta_grid,
            alpha_grid_qp=self.alpha_grid_qp,
            alpha_grid_lp=self.alpha_grid_lp,
            lam=self.lam,
            epsilon=self.epsilon,
            weight_iterations=self.weight_iterations,
        )
        fields.update(changes)
        return GridConfig(**fields)


@dataclass(frozen=True, eq=False)
class MixingDistribution:
    """Discrete distribution of the individual effect."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.support, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if s.shape != w.shape or len(np.unique(s)) != len(s):
            raise ValidationError("support points must be distinct and match the weights")
        if np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-10:
            raise ValidationError("mixing weights must lie on the unit simplex")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "weights", np.clip(w, 0.0, None))

    def atoms(self, tol: float = 0.0) -> "MixingDistribution":
        """Only the support points with weight above ``tol``."""
        keep = self.weights > tol
        w = self.weights[keep]
        return MixingDistribution(self.support[keep], w / w.sum())


def _require_full_outcomes(index: SupportIndex):
    if index.J != 2**index.T or not np.array_equal(index.outcomes, binary_outcomes(index.T)):
        raise ValidationError("model fitting needs all 2**T binary outcome patterns enumerated")


class ModelGrid:
    """Likelihood tensors and batched fitting on a fixed slope/effect grid.

    This is the computational core shared by point estimation and inference.
    All methods accept a stack of S probability tables at once.

    Parameters
    ----------
    index : SupportIndex
    link : LinkFunction or str
    grid : GridConfig
    """

    def __init__(self, index: SupportIndex, link, grid: GridConfig):
        _require_full_outcomes(index)
        if grid.beta_grid.shape[1] != index.d:
            raise ValidationError(f"beta grid has dimension {grid.beta_grid.shape[1]}, regressors have {index.d}")
        self.index = index
        self.link = as_link(link)
        self.grid = grid
        self.kernel = LikelihoodKernel(self.link, index)
        self.betas = grid.beta_grid
        self.G, self.K, self.J = len(self.betas), index.K, index.J
        self.M = len(grid.alpha_grid_qp)
        self._lqp = None
        if self.G * self.K * self.J * self.M <= _CACHE_LIMIT:
            self._lqp = likelihood_tensor(self.kernel, grid.alpha_grid_qp, self.betas)
        self._lp_cache: dict = {}

    def lqp(self, g) -> np.ndarray:
        """Fitting-grid likelihoods at slope positions ``g``, shape (len(g), K, J, M)."""
        g = np.atleast_1d(g)
        if self._lqp is not None:
            return self._lqp[g]
        return likelihood_tensor(self.kernel, self.grid.alpha_grid_qp, self.betas[g])

    def _chunks(self, S):
        per_beta = max(1, S) * self.K * self.J * self.M
        step = self.G if self._lqp is not None else max(1, int(_CACHE_LIMIT // per_beta))
        for start in range(0, self.G, step):
            yield np.arange(start, min(self.G, start + step))

    def fit(self, rows, weights, lam, warm=None, present=None):
        """Fit every (table, slope, history) block.

        Parameters
        ----------
        rows, weights : ndarray, shape (S, K, J)
        lam : float
        warm : ndarray, shape (S, G, K, M), optional
        present : ndarray of bool, shape (K,), optional
            Histories to fit; others get zero weights and zero value.

        Returns
        -------
        pi : ndarray, shape (S, G, K, M)
        values : ndarray, shape (S, G, K)
        """
        rows = np.asarray(rows, dtype=float)
        S = rows.shape[0]
        ks = np.arange(self.K) if present is None else np.flatnonzero(present)
        pi = np.zeros((S, self.G, self.K, self.M))
        values = np.zeros((S, self.G, self.K))
        for gs in self._chunks(S):
            L = self.lqp(gs).reshape(len(gs) * self.K, self.J, self.M)
            s_i, g_i, k_i = (a.ravel() for a in np.meshgrid(np.arange(S), np.arange(len(gs)), ks, indexing="ij"))
            w0 = None if warm is None else warm[s_i, gs[g_i], k_i]
            p, v, _, status = solve_qp_blocks(L, g_i * self.K + k_i, rows[s_i, k_i], weights[s_i, k_i], lam, w0)
            if np.any(status != OPTIMAL):
                raise SolverStalled("mixture fit did not converge", best=p)
            pi[s_i, gs[g_i], k_i] = p
            values[s_i, gs[g_i], k_i] = v
        return pi, values

    def predicted(self, pi, g) -> np.ndarray:
        """Model probabilities ``sum_m pi_m L(Y^j | X^k, alpha_m, beta_g)``.

        ``pi`` has shape (S, K, M) for slope positions ``g`` of shape (S,).
        """
        L = self.lqp(np.asarray(g))  # (S, K, J, M)
        out = np.einsum("skjm,skm->skj", L, pi)
        out = np.clip(out, 0.0, None)
        return out / out.sum(axis=2, keepdims=True)

    def lp_pieces(self, g: int):
        """Constraint matrices (K, J+1, M_lp) and integrand-free likelihoods at slope ``g``."""
        if g not in self._lp_cache:
            L = likelihood_tensor(self.kernel, self.grid.alpha_grid_lp, self.betas[g])  # (K, J, M)
            ones = np.ones((self.K, 1, L.shape[2]))
            self._lp_cache[g] = np.concatenate([L, ones], axis=1)
            if len(self._lp_cache) > 64:
                self._lp_cache.pop(next(iter(self._lp_cache)))
        return self._lp_cache[g]

    def lp_integrand(self, g: int, query: EffectQuery) -> np.ndarray:
        """Effect integrand on the LP grid at slope ``g``, shape (M_lp,)."""
        return effect_integrand(self.kernel, self.grid.alpha_grid_lp, self.betas[g], query)

    def lp_bounds(self, g, k, pstar_rows, query: EffectQuery):
        """Sharp lower and upper effect bounds for blocks ``(g[t], k[t])``.

        Parameters
        ----------
        g, k : ndarray of int, shape (B,)
        pstar_rows : ndarray, shape (B, J)
            Projected probabilities the mixtures must reproduce.

        Returns
        -------
        lower, upper : ndarray, shape (B,)
        lower_mix, upper_mix : ndarray, shape (B, M_lp)
            Basic optimal mixture weights.
        """
        g = np.asarray(g, dtype=np.int64)
        k = np.asarray(k, dtype=np.int64)
        B = len(g)
        if B == 0:
            empty = np.zeros(0)
            return empty, empty, np.zeros((0, len(self.grid.alpha_grid_lp))), np.zeros((0, len(self.grid.alpha_grid_lp)))
        ug, ginv = np.unique(g, return_inverse=True)
        A_stack = np.concatenate([self.lp_pieces(int(u)) for u in ug])  # (U*K, J+1, M)
        c_stack = np.stack([self.lp_integrand(int(u), query) for u in ug])
        a_idx = np.concatenate([ginv * self.K + k] * 2)
        c_idx = np.concatenate([ginv] * 2)
        b = np.concatenate([pstar_rows, np.ones((B, 1))], axis=1)
        b = np.concatenate([b, b])
        maximize = np.concatenate([np.zeros(B, bool), np.ones(B, bool)])
        val, x, _, status = solve_lp_batch(A_stack, a_idx, b, c_stack, c_idx, maximize)
        if np.any(status != OPTIMAL):
            bad = int(np.flatnonzero(status != OPTIMAL)[0] % B)
            raise LpInfeasible(
                f"effect-bound LP failed (status {int(status[status != OPTIMAL][0])}) at beta={self.betas[g[bad]].tolist()}, k={int(k[bad])}"
            )
        return val[:B], val[B:], x[:B], x[B:]


def chi_square_weights(rows, p_x, n, floor: float = ZERO_CELL_FLOOR):
    """Weights ``n P_k / Pi_jk`` with zero cells capped at ``n P_k / floor``."""
    return n * np.asarray(p_x)[..., :, None] / np.maximum(rows, floor)


@dataclass(frozen=True, eq=False)
class IdentifiedSet:
    """Grid estimate of the identified slope set with per-slope fits.

    Attributes
    ----------
    beta_grid : ndarray, shape (G, d)
    objective : ndarray, shape (G,)
        Penalized distance at each slope from the final fitting pass.
    members : ndarray of bool, shape (G,)
    weights_qp : ndarray, shape (G, K, M)
        Fitted mixture weights on ``grid.alpha_grid_qp``.
    cells : CellProbabilities
        The input cells.
    argmin : int
        Grid position of the smallest objective.
    near_tie : bool
        True if another slope is within 1e-10 of the minimum.
    """

    beta_grid: np.ndarray
    objective: np.ndarray
    members: np.ndarray
    weights_qp: np.ndarray
    cells: CellProbabilities
    grid: GridConfig
    model: ModelGrid
    argmin: int
    near_tie: bool
    epsilon: float
    lam: float

    @property
    def member_betas(self) -> np.ndarray:
        return self.beta_grid[self.members]

    @property
    def min_value(self) -> float:
        return float(self.objective[self.argmin])

    def mixture(self, g: int, k: int) -> MixingDistribution:
        return MixingDistribution(self.grid.alpha_grid_qp, self.weights_qp[g, k])

    def projected_rows(self, g) -> np.ndarray:
        """Projected conditional probabilities at slope positions ``g``, shape (len(g), K, J)."""
        g = np.atleast_1d(g)
        return self.model.predicted(self.weights_qp[g], g)

    def projected(self, g: int | None = None) -> CellProbabilities:
        """Projected cells at slope ``g`` (default: the minimizer)."""
        g = self.argmin if g is None else g
        rows = self.projected_rows(g)[0]
        rows = np.where(self.cells.present[:, None], rows, 0.0)
        return self.cells.with_rows(rows)


def md_objective(cells: CellProbabilities, beta, grid: GridConfig, weights=None, link="logit"):
    """Penalized minimum-distance fit at a single slope.

    Parameters
    ----------
    cells : CellProbabilities
    beta : array_like, shape (d,)
    grid : GridConfig
        Supplies the effect grid and the ridge penalty.
    weights : ndarray, shape (K, J), optional
        Cell weights; defaults to ``n P_k``.
    link : str or LinkFunction

    Returns
    -------
    value : float
        Sum over histories of the weighted squared misfit plus ridge penalty.
    mixtures : list of MixingDistribution
        Fitted mixture per history (absent histories get None).
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    model = ModelGrid(cells.index, link, grid.replace(beta_grid=beta[None, :]))
    n = effective_n(cells)
    if weights is None:
        weights = np.broadcast_to(n * cells.p_x[:, None], (cells.K, cells.J))
    pi, values = model.fit(
        cells.p_y_given_x[None], np.asarray(weights, dtype=float)[None], grid.ridge(n), present=cells.present
    )
    mixtures = [
        MixingDistribution(grid.alpha_grid_qp, pi[0, 0, k]) if cells.present[k] else None for k in range(cells.K)
    ]
    return float(values[0, 0].sum()), mixtures


def fit_identified_sets(model: ModelGrid, rows, p_x, present, n, lam, iterations, scheme="iterated", warm=None):
    """Batched slope-grid fits for a stack of probability tables.

    Parameters
    ----------
    rows : ndarray, shape (S, K, J)
    scheme : {"iterated", "chisq"}
        "iterated" starts from weights ``n P_k`` and refits ``iterations - 1``
        times with chi-square weights built from the previous projection;
        "chisq" does one pass with weights ``n P_k / rows``.

    Returns
    -------
    objective : ndarray, shape (S, G)
    pi : ndarray, shape (S, G, K, M)
    """
    rows = np.asarray(rows, dtype=float)
    S = rows.shape[0]
    p_x = np.asarray(p_x, dtype=float)
    if scheme == "chisq":
        w = chi_square_weights(rows, p_x, n)
        pi, vals = model.fit(rows, w, lam, warm=warm, present=present)
        return vals.sum(axis=2), pi
    w = np.broadcast_to(n * p_x[None, :, None], rows.shape).copy()
    pi = warm
    for it in range(iterations):
        pi, vals = model.fit(rows, w, lam, warm=pi, present=present)
        obj = vals.sum(axis=2)
        if it + 1 < iterations:
            best = np.argmin(obj, axis=1)
            pstar = model.predicted(pi[np.arange(S), best], best)
            w = chi_square_weights(pstar, p_x, n)
    return obj, pi


def _member_mask(objective, eps):
    lo = objective.min(axis=-1, keepdims=True)
    return objective <= lo + eps


def estimate_identified_set(cells: CellProbabilities, grid: GridConfig, link="logit", scheme="iterated") -> IdentifiedSet:
    """Estimate the identified slope set on ``grid.beta_grid``.

    The first pass weighs every cell of history ``k`` by ``n P_k``; later
    passes use ``n P_k / P*_jk`` with the projection from the previous pass.
    Members are slopes whose penalized distance is within ``epsilon`` of the
    grid minimum.

    Parameters
    ----------
    cells : CellProbabilities
        Must enumerate all 2**T binary outcome patterns.
    grid : GridConfig
    link : str or LinkFunction
    scheme : {"iterated", "chisq"}
        Weighting scheme, see :func:`fit_identified_sets`.
    """
    model = ModelGrid(cells.index, link, grid)
    n = effective_n(cells)
    lam = grid.ridge(n)
    eps = grid.cutoff(n)
    obj, pi = fit_identified_sets(
        model, cells.p_y_given_x[None], cells.p_x, cells.present, n, lam, grid.weight_iterations, scheme
    )
    obj, pi = obj[0], pi[0]
    order = np.argsort(obj, kind="stable")
    best = int(order[0])
    tie = len(obj) > 1 and obj[order[1]] - obj[best] <= TIE_TOL
    return IdentifiedSet(
        beta_grid=grid.beta_grid,
        objective=obj,
        members=_member_mask(obj, eps),
        weights_qp=pi,
        cells=cells,
        grid=grid,
        model=model,
        argmin=best,
        near_tie=bool(tie),
        epsilon=eps,
        lam=lam,
    )


def project_probabilities(cells: CellProbabilities, grid: GridConfig, link="logit") -> CellProbabilities:
    """Closest model-compatible cells under the weighted quadratic distance."""
    return estimate_identified_set(cells, grid, link).projected()


def effect_bounds_lp(projected: CellProbabilities, beta, k: int, query: EffectQuery, grid: GridConfig, link="logit"):
    """Sharp bounds on the effect for history ``k`` at a fixed slope.

    Extremizes the mixture average of the effect integrand over weights on
    ``grid.alpha_grid_lp`` that reproduce ``projected`` row ``k`` exactly.

    Returns
    -------
    lower, upper : float

    Raises
    ------
    LpInfeasible
        If no mixture reproduces the row (the input was not projected).
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    model = ModelGrid(projected.index, link, grid.replace(beta_grid=beta[None, :]))
    lo, hi, _, _ = model.lp_bounds([0], [k], projected.p_y_given_x[[k]], query)
    return float(lo[0]), float(hi[0])


@dataclass(frozen=True, eq=False)
class EffectBounds:
    """Effect bounds over the members of an identified set.

    Attributes
    ----------
    lower, upper : ndarray, shape (K,)
        Per-history bounds (NaN for absent histories).
    aggregate : tuple of float
        Bounds on the history-mass weighted average effect.
    member_lower, member_upper : ndarray, shape (G_members, K)
        Bounds at each member slope.
    """

    lower: np.ndarray
    upper: np.ndarray
    aggregate: tuple
    member_lower: np.ndarray
    member_upper: np.ndarray
    member_betas: np.ndarray

    def for_history(self, k: int) -> tuple:
        return float(self.lower[k]), float(self.upper[k])


def effect_bounds(setid: IdentifiedSet, query: EffectQuery, k: int | None = None):
    """Min and max of the LP bounds over the member slopes.

    Returns an :class:`EffectBounds`, or the ``(lower, upper)`` pair for
    history ``k`` when ``k`` is given.
    """
    cells = setid.cells
    gs = np.flatnonzero(setid.members)
    ks = np.flatnonzero(cells.present)
    g_i, k_i = (a.ravel() for a in np.meshgrid(gs, ks, indexing="ij"))
    pstar = setid.projected_rows(gs)  # (len(gs), K, J)
    rows = pstar[np.searchsorted(gs, g_i), k_i]
    lo, hi, _, _ = setid.model.lp_bounds(g_i, k_i, rows, query)
    mlo = np.full((len(gs), cells.K), np.nan)
    mhi = np.full((len(gs), cells.K), np.nan)
    mlo[np.searchsorted(gs, g_i), k_i] = lo
    mhi[np.searchsorted(gs, g_i), k_i] = hi
    px = cells.p_x[ks]
    agg = (float(np.min(mlo[:, ks] @ px)), float(np.max(mhi[:, ks] @ px)))
    out = EffectBounds(
        lower=np.nanmin(mlo, axis=0) if len(ks) == cells.K else _nan_reduce(mlo, np.min),
        upper=np.nanmax(mhi, axis=0) if len(ks) == cells.K else _nan_reduce(mhi, np.max),
        aggregate=agg,
        member_lower=mlo,
        member_upper=mhi,
        member_betas=setid.beta_grid[gs],
    )
    return out if k is None else out.for_history(k)


def _nan_reduce(a, fn):
    out = np.full(a.shape[1], np.nan)
    ok = ~np.all(np.isnan(a), axis=0)
    out[ok] = fn(a[:, ok], axis=0)
    return out


# ---------------------------------------------------------------------------
# fixed-effects maximum likelihood estimand


@dataclass(frozen=True, eq=False)
class FemleResult:
    """Fixed-effects maximum likelihood estimand and implied effects.

    Attributes
    ----------
    beta_tilde : ndarray, shape (d,)
    alpha_hat : ndarray, shape (K, J)
        Profile effects at ``beta_tilde``; +-inf for constant outcome patterns.
    q_tilde : list of MixingDistribution
        Implied effect distribution per history (masses ``P_jk``).
    effects : ndarray, shape (K,)
        Implied per-history effects.
    effect_identified : float
        Switcher-mass weighted average of ``effects``.
    effect_average : float
        History-mass weighted average of ``effects``.
    objective : ndarray, shape (G,)
        Profiled log-likelihood over the slope grid.
    """

    beta_tilde: np.ndarray
    alpha_hat: np.ndarray
    q_tilde: list
    effects: np.ndarray
    effect_identified: float
    effect_average: float
    objective: np.ndarray


def profile_alpha(kernel: LikelihoodKernel, beta, tol: float = 1e-13, maxit: int = 200) -> np.ndarray:
    """Per-(history, outcome) maximizer of the likelihood over the effect.

    Constant all-zero (all-one) outcome patterns give -inf (+inf). Otherwise a
    Newton iteration on the score, which is strictly decreasing for
    log-concave links, with a bisection fallback whenever a step leaves the
    current bracket.

    Returns
    -------
    ndarray, shape (K, J)
    """
    link = kernel.link
    z = kernel.linear_index(beta)  # (K, T)
    y = kernel.index.outcomes.astype(float)  # (J, T)
    K, T = z.shape
    J = y.shape[0]
    s = y.sum(axis=1)
    out = np.empty((K, J))
    out[:, s == 0] = -np.inf
    out[:, s == T] = np.inf
    mixed = np.flatnonzero((s > 0) & (s < T))
    if len(mixed) == 0:
        return out
    Y = np.broadcast_to(y[mixed][None], (K, len(mixed), T))
    Z = np.broadcast_to(z[:, None, :], Y.shape)

    def score(a):
        u = Z + a[..., None]
        return np.sum(Y * link.hazard(u) - (1 - Y) * link.hazard(-u), axis=-1)

    def slope(a):
        u = Z + a[..., None]
        return np.sum(Y * link.hazard_slope(u) + (1 - Y) * link.hazard_slope(-u), axis=-1)

    span = 40.0 + np.abs(z).max()
    lo = np.full((K, len(mixed)), -span)
    hi = np.full((K, len(mixed)), span)
    ybar = s[mixed] / T
    a = -z.mean(axis=1)[:, None] + np.log(ybar / (1 - ybar))[None, :]
    a = np.clip(a, lo, hi)
    for _ in range(maxit):
        sc = score(a)
        lo = np.where(sc > 0, a, lo)
        hi = np.where(sc < 0, a, hi)
        step = sc / slope(a)
        cand = a - step
        bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        new = np.where(bad, 0.5 * (lo + hi), cand)
        done = np.abs(new - a) <= tol * (1.0 + np.abs(a))
        a = new
        if np.all(done) or np.all(sc == 0):
            break
    out[:, mixed] = a
    return out


def _profile_loglik(kernel, cells, beta):
    alpha = profile_alpha(kernel, beta)
    with np.errstate(divide="ignore"):
        logl = np.log(cell_likelihood(kernel, alpha, beta))
    w = cells.joint()
    return float(np.sum(np.where(w > 0, w * logl, 0.0))), alpha


def femle(cells: CellProbabilities, link="logit", beta_grid=None, query: EffectQuery | None = None) -> FemleResult:
    """Fixed-effects maximum likelihood estimand on population or sample cells.

    Each (history, outcome) cell gets its own effect, profiled out in closed
    form or by Newton; the profiled log-likelihood is maximized over
    ``beta_grid`` and, for scalar slopes, polished by a bounded scalar search
    between the neighbours of the best grid point.

    Parameters
    ----------
    cells : CellProbabilities
    link : str or LinkFunction
    beta_grid : array_like, optional
        Defaults to [-3, 3] in steps of 0.01.
    query : EffectQuery, optional
        Effect to report; defaults to moving a scalar regressor from 0 to 1.
    """
    _require_full_outcomes(cells.index)
    kernel = LikelihoodKernel(as_link(link), cells.index)
    grid = scalar_beta_grid() if beta_grid is None else np.asarray(beta_grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    objective = np.array([_profile_loglik(kernel, cells, b)[0] for b in grid])
    g = int(np.argmax(objective))
    beta = grid[g]
    if grid.shape[1] == 1 and len(grid) > 1:
        lo = grid[max(g - 1, 0), 0]
        hi = grid[min(g + 1, len(grid) - 1), 0]
        res = optimize.minimize_scalar(
            lambda b: -_profile_loglik(kernel, cells, np.array([b]))[0],
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-10},
        )
        if -res.fun >= objective[g]:
            beta = np.array([res.x])
    _, alpha = _profile_loglik(kernel, cells, beta)
    if query is None:
        query = EffectQuery((1,) * cells.index.d if cells.index.d > 1 else 1, (0,) * cells.index.d if cells.index.d > 1 else 0)
    delta = effect_integrand(kernel, alpha, beta, query)  # (K, J)
    effects = np.sum(cells.p_y_given_x * delta, axis=1)
    q_tilde = []
    for k in range(cells.K):
        atoms: dict = {}
        for j in range(cells.J):
            if cells.p_y_given_x[k, j] > 0:
                atoms[alpha[k, j]] = atoms.get(alpha[k, j], 0.0) + cells.p_y_given_x[k, j]
        q_tilde.append(MixingDistribution(np.array(list(atoms)), np.array(list(atoms.values()))) if atoms else None)
    switch = np.array(
        [query.tilde_periods(h).any() and query.bar_periods(h).any() for h in cells.index.histories]
    ) & cells.present
    share = cells.p_x[switch].sum()
    ident = float(cells.p_x[switch] @ effects[switch] / share) if share > 0 else float("nan")
    avg = float(cells.p_x[cells.present] @ effects[cells.present])
    return FemleResult(beta, alpha, q_tilde, effects, ident, avg, objective)
