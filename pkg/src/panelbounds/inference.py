"""Confidence regions for identified sets and effect bounds.

Candidate data-generating processes are multinomial redraws of the observed
cell frequencies. The modified projection keeps the candidates that pass a
chi-square goodness-of-fit test and maps each of them through the model
projection; the perturbed bootstrap takes the most conservative simulated
quantiles over the accepted candidates. Nonparametric bounds get normal or
unit-resampling intervals.

All randomness is counter-based: draw ``r`` of stream ``s`` uses the seed
sequence ``[seed, s, r]`` (plus an inner counter), so results do not depend
on how work is split across processes.
"""

from __future__ import annotations

import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import BudgetExceeded, EmptyRegionDiagnostic, ValidationError
from .linear_fe import partition_support
from .npbounds import OutcomeBounds, dynamic_bounds, dynamic_unit_scores, static_bounds
from .panel_core import (
    CellProbabilities,
    EffectQuery,
    PanelDataset,
    cell_frequencies,
    cell_means,
    enumerate_support,
)
from .setid import GridConfig, ModelGrid, _member_mask, fit_identified_sets
from .solvers import OPTIMAL, chisq_quantile, solve_lp_batch

STREAM_CANDIDATES = 1
STREAM_INNER = 2
STREAM_RESAMPLE = 3
# tables per worker task; fixed so that splitting never changes results
CHUNK = 64


def counter_rng(seed: int, *counters: int) -> np.random.Generator:
    """Independent generator for a (seed, stream, index, ...) key."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, counters)])))


def _pool_map(fn, tasks, threads: int):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    ctx = multiprocessing.get_context("fork") if os.name == "posix" else None
    with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as ex:
        return list(ex.map(fn, *zip(*tasks)))


# ---------------------------------------------------------------------------
# goodness of fit


def gof_statistics(rows, p: CellProbabilities, n: float) -> np.ndarray:
    """``W(Pi, P)`` for a stack of candidate rows, shape (S, K, J) -> (S,)."""
    rows = np.asarray(rows, dtype=float)
    P = p.p_y_given_x
    use = (p.p_x > 0)[:, None] & np.ones_like(P, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = (P - rows) ** 2 / rows
    term = np.where(rows > 0, term, np.where(P > 0, np.inf, 0.0))
    term = np.where(use, term, 0.0)
    return n * np.einsum("k,skj->s", p.p_x, term)


def gof_statistic(pi: CellProbabilities, p: CellProbabilities, n: float) -> float:
    """Chi-square distance ``n sum_k P_k sum_j (P_jk - Pi_jk)**2 / Pi_jk``.

    Only histories with ``P_k > 0`` enter; a zero ``Pi_jk`` where
    ``P_jk > 0`` gives ``inf``.
    """
    return float(gof_statistics(pi.p_y_given_x[None], p, n)[0])


@dataclass(frozen=True)
class GofRegion:
    """Cell tables within the chi-square critical value of the observed cells."""

    center: CellProbabilities
    n: float
    level: float
    critical: float = field(default=float("nan"))

    def __post_init__(self):
        if not 0.0 < self.level < 1.0:
            raise ValidationError("level must lie in (0, 1)")
        if np.isnan(self.critical):
            object.__setattr__(self, "critical", chisq_quantile(self.df, self.level))

    @property
    def df(self) -> int:
        return self.center.K * (self.center.J - 1)

    def statistic(self, pi: CellProbabilities) -> float:
        return gof_statistic(pi, self.center, self.n)

    def contains(self, pi: CellProbabilities) -> bool:
        return self.statistic(pi) <= self.critical


def _row_counts(p: CellProbabilities, n: float) -> np.ndarray:
    return np.rint(n * p.p_x).astype(np.int64)


def _draw_rows(p: CellProbabilities, counts, rng) -> np.ndarray:
    P = p.p_y_given_x
    draw = rng.multinomial(counts, np.where(p.present[:, None], P, 1.0 / P.shape[1]))
    with np.errstate(invalid="ignore", divide="ignore"):
        rows = draw / counts[:, None]
    return np.where(counts[:, None] > 0, rows, P)


def sample_dgp_candidate(p: CellProbabilities, n: float, rng: np.random.Generator) -> CellProbabilities:
    """Multinomial redraw of every row with ``round(n P_k)`` trials.

    Rows with no trials are kept as they are.
    """
    counts = _row_counts(p, n)
    return p.with_rows(_draw_rows(p, counts, rng), n_eff=n)


def sample_candidates(p: CellProbabilities, n: float, seed: int, stream: int, start: int, stop: int, *extra) -> np.ndarray:
    """Candidate rows for draws ``start..stop-1``, shape (stop - start, K, J)."""
    counts = _row_counts(p, n)
    return np.stack([_draw_rows(p, counts, counter_rng(seed, stream, *extra, r)) for r in range(start, stop)])


# ---------------------------------------------------------------------------
# functionals of the projected model


@dataclass(frozen=True)
class Functional:
    """Scalar target evaluated on the projected model.

    Parameters
    ----------
    kind : {"upper", "lower", "beta_upper", "beta_lower"}
        Upper or lower effect bound for history ``k``, or the largest or
        smallest ``c' beta`` over the member slopes.
    k : int, optional
    query : EffectQuery
    c : tuple of float, optional
        Defaults to the first coordinate.
    """

    kind: str
    k: int | None = None
    query: EffectQuery = field(default_factory=lambda: EffectQuery(1, 0))
    c: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("upper", "lower", "beta_upper", "beta_lower"):
            raise ValidationError(f"unknown functional kind {self.kind!r}")
        if self.kind in ("upper", "lower") and self.k is None:
            raise ValidationError("effect-bound functionals need a history index k")

    @classmethod
    def parse(cls, tag: str, query: EffectQuery | None = None) -> "Functional":
        """Parse tags like ``upper:0``, ``lower:3`` or ``beta_upper``."""
        kind, _, k = tag.partition(":")
        return cls(kind, int(k) if k else None, query or EffectQuery(1, 0))


@dataclass
class StageResult:
    """Per-table member sets and effect bounds from a batch of fits."""

    objective: np.ndarray  # (S, G)
    members: np.ndarray  # (S, G) bool
    lower: np.ndarray  # (S, K)
    upper: np.ndarray  # (S, K)
    agg_lower: np.ndarray  # (S,)
    agg_upper: np.ndarray  # (S,)


def evaluate_tables(
    model: ModelGrid,
    rows,
    p_x,
    present,
    n: float,
    eps: float,
    query: EffectQuery,
    ks=None,
    scheme: str = "chisq",
    iterations: int = 3,
    warm=None,
) -> StageResult:
    """Project each table, form its member set and extremize the effect bounds.

    Parameters
    ----------
    rows : ndarray, shape (S, K, J)
    ks : sequence of int, optional
        Histories whose bounds are needed; defaults to all present ones.
    warm : ndarray, shape (G, K, M), optional
        Mixture weights used as the starting point for every table.
    """
    rows = np.asarray(rows, dtype=float)
    S = rows.shape[0]
    lam = model.grid.ridge(n)
    if warm is not None:
        warm = np.broadcast_to(warm, (S,) + warm.shape)
    obj, pi = fit_identified_sets(model, rows, p_x, present, n, lam, iterations, scheme, warm=warm)
    mem = _member_mask(obj, eps)
    K = model.K
    ks = np.flatnonzero(present) if ks is None else np.asarray(ks, dtype=np.int64)
    lower = np.full((S, K), np.nan)
    upper = np.full((S, K), np.nan)
    agg_lo = np.full(S, np.nan)
    agg_hi = np.full(S, np.nan)
    if len(ks):
        s_i, g_i = np.nonzero(mem)
        pstar = model.predicted(pi[s_i, g_i], g_i)  # (B, K, J)
        bs, kk = np.meshgrid(np.arange(len(s_i)), ks, indexing="ij")
        bs, kk = bs.ravel(), kk.ravel()
        lo, hi, _, _ = model.lp_bounds(g_i[bs], kk, pstar[bs, kk], query)
        lo = lo.reshape(len(s_i), len(ks))
        hi = hi.reshape(len(s_i), len(ks))
        px = np.asarray(p_x)[ks]
        alo = lo @ px
        ahi = hi @ px
        for s in range(S):
            sel = s_i == s
            lower[s, ks] = lo[sel].min(axis=0)
            upper[s, ks] = hi[sel].max(axis=0)
            agg_lo[s] = alo[sel].min()
            agg_hi[s] = ahi[sel].max()
    return StageResult(obj, mem, lower, upper, agg_lo, agg_hi)


def functional_values(model: ModelGrid, stage: StageResult, functional: Functional) -> np.ndarray:
    """Values of ``functional`` for every table of ``stage``, shape (S,)."""
    if functional.kind == "upper":
        return stage.upper[:, functional.k]
    if functional.kind == "lower":
        return stage.lower[:, functional.k]
    c = np.zeros(model.index.d) if functional.c is None else np.asarray(functional.c, dtype=float)
    if functional.c is None:
        c[0] = 1.0
    vals = model.betas @ c
    masked = np.where(stage.members, vals[None, :], np.nan)
    return np.nanmax(masked, axis=1) if functional.kind == "beta_upper" else np.nanmin(masked, axis=1)


def _ks_for(functional: Functional | None, present):
    if functional is None:
        return None
    if functional.kind in ("upper", "lower"):
        if not present[functional.k]:
            raise ValidationError(f"history {functional.k} has no observations")
        return [functional.k]
    return []


# ---------------------------------------------------------------------------
# modified projection


@dataclass(frozen=True, eq=False)
class ProjectionRegion:
    """Simultaneous confidence regions from the modified (or canonical) projection.

    Attributes
    ----------
    beta_members : ndarray of bool, shape (G,)
        Union of the member sets over accepted candidates.
    effect_lower, effect_upper : ndarray, shape (K,)
        Smallest lower and largest upper effect bound per history.
    aggregate : tuple of float
    accepted, draws : int
    min_statistic : float
    critical : float
    """

    beta_grid: np.ndarray
    beta_members: np.ndarray
    effect_lower: np.ndarray
    effect_upper: np.ndarray
    aggregate: tuple
    accepted: int
    draws: int
    min_statistic: float
    critical: float
    canonical: bool = False

    @property
    def member_betas(self) -> np.ndarray:
        return self.beta_grid[self.beta_members]

    @property
    def empty(self) -> bool:
        return not bool(self.beta_members.any())


def _stage1(p, n, seed, start, stop, critical):
    rows = sample_candidates(p, n, seed, STREAM_CANDIDATES, start, stop)
    W = gof_statistics(rows, p, n)
    return rows[W <= critical], float(W.min()) if len(W) else np.inf


def _nan_extreme(a, fn):
    """Column-wise ``fn`` ignoring NaN; all-NaN columns stay NaN."""
    out = np.full(a.shape[1], np.nan)
    ok = ~np.all(np.isnan(a), axis=0)
    if ok.any():
        sub = a[:, ok]
        fill = np.inf if fn is np.min else -np.inf
        out[ok] = fn(np.where(np.isnan(sub), fill, sub), axis=0)
    return out


def _stage2(model, rows, p_x, present, n, eps, query, scheme, iterations, warm):
    st = evaluate_tables(model, rows, p_x, present, n, eps, query, scheme=scheme, iterations=iterations, warm=warm)
    return (
        st.members.any(axis=0),
        _nan_extreme(st.lower, np.min),
        _nan_extreme(st.upper, np.max),
        (float(st.agg_lower.min()), float(st.agg_upper.max())),
    )


def _canonical_stage2(model, rows, p_x, query):
    """Members and bounds from raw (unprojected) candidate rows via LP feasibility."""
    S, K, J = rows.shape
    mem = np.zeros(model.G, dtype=bool)
    lower = np.full(K, np.inf)
    upper = np.full(K, -np.inf)
    agg = [np.inf, -np.inf]
    B = S * K
    b = np.concatenate([rows, np.ones((S, K, 1))], axis=2).reshape(B, J + 1)
    a_idx = np.tile(np.arange(K), S)
    sense = np.concatenate([np.zeros(B, bool), np.ones(B, bool)])
    for g in range(model.G):
        val, _, _, status = solve_lp_batch(
            model.lp_pieces(g),
            np.concatenate([a_idx, a_idx]),
            np.concatenate([b, b]),
            model.lp_integrand(g, query)[None],
            np.zeros(2 * B, np.int64),
            sense,
        )
        ok = (status[:B] == OPTIMAL) & (status[B:] == OPTIMAL)
        feasible = ok.reshape(S, K).all(axis=1)
        if not feasible.any():
            continue
        mem[g] = True
        lo = val[:B].reshape(S, K)[feasible]
        hi = val[B:].reshape(S, K)[feasible]
        lower = np.minimum(lower, lo.min(axis=0))
        upper = np.maximum(upper, hi.max(axis=0))
        agg[0] = min(agg[0], float((lo @ p_x).min()))
        agg[1] = max(agg[1], float((hi @ p_x).max()))
    return mem, lower, upper, tuple(agg)


def modified_projection(
    p: CellProbabilities,
    n: float,
    level: float,
    grid: GridConfig,
    draws: int = 50_000,
    query: EffectQuery | None = None,
    link="logit",
    seed: int = 0,
    canonical: bool = False,
    scheme: str = "iterated",
    threads: int = 1,
) -> ProjectionRegion:
    """Project a goodness-of-fit confidence region for the cells onto the model.

    Stage 1 draws ``draws - 1`` multinomial candidates (the observed cells are
    always draw 0) and keeps those with ``W(Pi, P)`` at most the chi-square
    critical value with ``K (J - 1)`` degrees of freedom. Stage 2 projects
    each kept candidate, forms its member set with the cutoff rule and
    extremizes the effect bounds; the region is the union over candidates.

    With ``canonical`` the candidates are not projected: a slope belongs to
    the region only if some candidate is reproduced exactly by a mixture at
    that slope, which typically leaves the region empty.

    Raises
    ------
    EmptyRegionDiagnostic
        If no candidate passes the test (only possible when the observed
        cells themselves fail, e.g. because of empty cells).
    """
    if draws < 1:
        raise ValidationError("draws must be at least 1")
    query = query or EffectQuery(1, 0)
    region = GofRegion(p, n, level)
    model = ModelGrid(p.index, link, grid)
    starts = list(range(1, draws, CHUNK * 16))
    tasks = [(p, n, seed, a, min(draws, a + CHUNK * 16), region.critical) for a in starts]
    parts = _pool_map(_stage1, tasks, threads)
    w0 = gof_statistics(p.p_y_given_x[None], p, n)[0]
    kept = [p.p_y_given_x[None]] if w0 <= region.critical else []
    kept += [r for r, _ in parts if len(r)]
    min_w = min([w0] + [m for _, m in parts])
    if not kept:
        raise EmptyRegionDiagnostic("no candidate passed the goodness-of-fit test", min_w)
    rows = np.concatenate(kept)
    eps = grid.cutoff(n)
    if canonical:
        chunks = [(model, rows[a : a + CHUNK], p.p_x, query) for a in range(0, len(rows), CHUNK)]
        res = _pool_map(_canonical_stage2, chunks, threads)
        mem = np.any([r[0] for r in res], axis=0)
        lower = np.min([r[1] for r in res], axis=0)
        upper = np.max([r[2] for r in res], axis=0)
        agg = (min(r[3][0] for r in res), max(r[3][1] for r in res))
        lower = np.where(np.isfinite(lower), lower, np.nan)
        upper = np.where(np.isfinite(upper), upper, np.nan)
        agg = tuple(a if np.isfinite(a) else float("nan") for a in agg)
    else:
        base = _base_fit(model, p, n, scheme, grid.weight_iterations)
        tasks = [
            (model, rows[a : a + CHUNK], p.p_x, p.present, n, eps, query, scheme, grid.weight_iterations, base)
            for a in range(0, len(rows), CHUNK)
        ]
        res = _pool_map(_stage2, tasks, threads)
        mem = np.any([r[0] for r in res], axis=0)
        lower = _nan_extreme(np.stack([r[1] for r in res]), np.min)
        upper = _nan_extreme(np.stack([r[2] for r in res]), np.max)
        agg = (min(r[3][0] for r in res), max(r[3][1] for r in res))
    return ProjectionRegion(
        beta_grid=grid.beta_grid,
        beta_members=mem,
        effect_lower=lower,
        effect_upper=upper,
        aggregate=agg,
        accepted=len(rows),
        draws=draws,
        min_statistic=float(min_w),
        critical=region.critical,
        canonical=canonical,
    )


# ---------------------------------------------------------------------------
# perturbed bootstrap


@dataclass(frozen=True)
class BootstrapPlan:
    """Settings for the perturbed bootstrap.

    Parameters
    ----------
    R : int
        Number of accepted candidate processes (the observed cells count as
        the first one).
    gamma : float
        Level of the goodness-of-fit screen.
    alpha1, alpha2 : float
        Lower and upper tail probabilities; coverage is ``1 - alpha1 -
        alpha2 - gamma``.
    inner_reps : int
        Simulated samples per candidate.
    seed : int
    max_draws : int, optional
        Candidate budget; defaults to ``100 R``.
    """

    R: int = 100
    gamma: float = 0.01
    alpha1: float = 0.02
    alpha2: float = 0.02
    inner_reps: int = 200
    seed: int = 0
    max_draws: int | None = None

    def __post_init__(self):
        if self.R < 1 or self.inner_reps < 1:
            raise ValidationError("R and inner_reps must be at least 1")
        if min(self.alpha1, self.alpha2) < 0 or self.alpha1 + self.alpha2 >= 1:
            raise ValidationError("alpha1, alpha2 must be nonnegative with sum below 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValidationError("gamma must lie in (0, 1)")

    @property
    def budget(self) -> int:
        return self.max_draws if self.max_draws is not None else 100 * self.R


@dataclass(frozen=True, eq=False)
class BootstrapInterval:
    """Perturbed-bootstrap interval and its ingredients.

    Attributes
    ----------
    lower, upper : float
    theta_hat : float
    theta_candidates : ndarray, shape (R,)
        ``theta*`` at each accepted candidate.
    q_low, q_high : ndarray, shape (R,)
        Per-candidate quantiles of the simulated ``theta_hat - theta*``.
    draws : int
        Candidates drawn to reach ``R`` acceptances.
    """

    lower: float
    upper: float
    theta_hat: float
    theta_candidates: np.ndarray
    q_low: np.ndarray
    q_high: np.ndarray
    draws: int


def _base_fit(model, p, n, scheme, iterations, warm=None):
    """Mixture weights for the observed cells, the warm start for nearby tables."""
    lam = model.grid.ridge(n)
    if warm is not None:
        warm = warm[None]
    _, pi = fit_identified_sets(model, p.p_y_given_x[None], p.p_x, p.present, n, lam, iterations, scheme, warm)
    return pi[0]


def _theta(model, rows, p_x, present, n, functional, scheme, iterations, warm=None):
    st = evaluate_tables(
        model, rows, p_x, present, n, 0.0, functional.query, ks=_ks_for(functional, present), scheme=scheme,
        iterations=iterations, warm=warm,
    )
    return functional_values(model, st, functional)


def _inner(model, cand_rows, r, p, n, functional, plan, scheme, iterations, warm):
    """Simulated ``theta_hat - theta*`` under candidate ``r``."""
    cand = p.with_rows(cand_rows, n_eff=n)
    # inner tables scatter around the candidate, so its own fit is the closer start
    warm = _base_fit(model, cand, n, scheme, iterations, warm)
    theta_r = _theta(model, cand_rows[None], p.p_x, p.present, n, functional, scheme, iterations, warm)[0]
    sims = sample_candidates(cand, n, plan.seed, STREAM_INNER, 0, plan.inner_reps, r)
    vals = np.concatenate(
        [
            _theta(model, sims[a : a + CHUNK], p.p_x, p.present, n, functional, scheme, iterations, warm)
            for a in range(0, len(sims), CHUNK)
        ]
    )
    return theta_r, vals - theta_r


def perturbed_bootstrap(
    p: CellProbabilities,
    n: float,
    theta: Functional | str,
    plan: BootstrapPlan,
    grid: GridConfig,
    link="logit",
    scheme: str = "chisq",
    threads: int = 1,
) -> BootstrapInterval:
    """Interval ``[theta_hat - max_r q_r(1 - a1), theta_hat - min_r q_r(a2)]``.

    ``theta_hat`` is the functional at the observed cells with a zero
    cutoff. Candidates are multinomial redraws kept when they pass the
    goodness-of-fit test at level ``gamma``; the observed cells are the
    first candidate. For each candidate the law of ``theta_hat - theta*``
    is simulated with ``inner_reps`` samples of the same design, and
    ``theta*`` is always evaluated on the projected candidate.

    Raises
    ------
    BudgetExceeded
        If fewer than ``R`` candidates pass within ``plan.budget`` draws.
    """
    functional = Functional.parse(theta) if isinstance(theta, str) else theta
    model = ModelGrid(p.index, link, grid)
    iters = grid.weight_iterations
    base = _base_fit(model, p, n, scheme, iters)
    theta_hat = float(_theta(model, p.p_y_given_x[None], p.p_x, p.present, n, functional, scheme, iters, base)[0])
    crit = chisq_quantile(p.K * (p.J - 1), 1.0 - plan.gamma)
    accepted = [p.p_y_given_x]
    drawn = 0
    while len(accepted) < plan.R:
        if drawn >= plan.budget:
            raise BudgetExceeded(f"only {len(accepted)} of {plan.R} candidates passed in {drawn} draws", len(accepted))
        stop = min(plan.budget, drawn + CHUNK) + 1
        rows = sample_candidates(p, n, plan.seed, STREAM_CANDIDATES, drawn + 1, stop)
        W = gof_statistics(rows, p, n)
        for i in np.flatnonzero(W <= crit):
            if len(accepted) < plan.R:
                accepted.append(rows[i])
                last = drawn + 1 + int(i)
        drawn = stop - 1
    tasks = [(model, accepted[r], r, p, n, functional, plan, scheme, iters, base) for r in range(plan.R)]
    res = _pool_map(_inner, tasks, threads)
    thetas = np.array([t for t, _ in res])
    q_hi = np.array([np.quantile(s, 1.0 - plan.alpha1) for _, s in res])
    q_lo = np.array([np.quantile(s, plan.alpha2) for _, s in res])
    return BootstrapInterval(
        lower=theta_hat - float(q_hi.max()),
        upper=theta_hat - float(q_lo.min()),
        theta_hat=theta_hat,
        theta_candidates=thetas,
        q_low=q_lo,
        q_high=q_hi,
        draws=last if plan.R > 1 else 0,
    )


# ---------------------------------------------------------------------------
# nonparametric bounds


@dataclass(frozen=True)
class NpBoundsInterval:
    """Confidence statements for the nonparametric bounds.

    Attributes
    ----------
    estimate : tuple of float
        ``(mu_lower, mu_upper)`` point estimates.
    lower_ci, upper_ci : tuple of float
        Two-sided intervals for each bound.
    region : tuple of float
        ``(lower_ci[0], upper_ci[1])``, covering the whole bound interval.
    se : tuple of float, optional
        Standard errors (normal method only).
    """

    estimate: tuple
    lower_ci: tuple
    upper_ci: tuple
    region: tuple
    se: tuple | None = None


def static_unit_scores(dataset: PanelDataset, query: EffectQuery, bounds: OutcomeBounds, monotone: bool = False):
    """Per-unit contributions whose means are the static bound estimates.

    Every piece of the static bounds is a history-mass weighted average of
    period means, hence an average over units; with the monotone refinement
    pieces that are cut to zero contribute nothing.

    Returns
    -------
    psi_lower, psi_upper : ndarray, shape (n,)
    """
    index = enumerate_support(dataset)
    cells = cell_frequencies(dataset, index)
    part = partition_support(index, cells, query)
    est = static_bounds(cell_means(dataset, index, query), cells, part, query, bounds, monotone) if monotone else None
    k_of = index.locate_histories(dataset.x)
    y = dataset.y.astype(float) / query.distance
    bl, bu = bounds.b_lower, bounds.b_upper
    n = dataset.n
    lo = np.full(n, bl - bu)
    hi = np.full(n, bu - bl)
    group = np.full(index.K, "none", dtype=object)
    group[part.k_star], group[part.k_tilde], group[part.k_bar] = "star", "tilde", "bar"
    masks_t = np.array([query.tilde_periods(h) for h in index.histories])
    masks_b = np.array([query.bar_periods(h) for h in index.histories])
    for k in range(index.K):
        rows = k_of == k
        mt = (y[rows] * masks_t[k]).sum(axis=1) / max(masks_t[k].sum(), 1)
        mb = (y[rows] * masks_b[k]).sum(axis=1) / max(masks_b[k].sum(), 1)
        if group[k] == "star":
            lo[rows] = hi[rows] = mt - mb
        elif group[k] == "tilde":
            lo[rows], hi[rows] = mt - bu, mt - bl
        elif group[k] == "bar":
            lo[rows], hi[rows] = bl - mb, bu - mb
    if est is not None and est.monotone_sign:
        for k in range(index.K):
            if group[k] == "star":
                continue
            rows = k_of == k
            piece_lo, piece_hi = lo[rows].sum(), hi[rows].sum()
            if est.monotone_sign > 0 and piece_lo < 0:
                lo[rows] = 0.0
            if est.monotone_sign < 0 and piece_hi > 0:
                hi[rows] = 0.0
    return lo, hi


def _bound_scores(dataset, query, bounds, model, monotone):
    if model == "dynamic":
        contrast, never_t, never_b = dynamic_unit_scores(dataset, query)
        bl, bu = bounds.b_lower, bounds.b_upper
        return contrast + bl * never_t - bu * never_b, contrast + bu * never_t - bl * never_b
    return static_unit_scores(dataset, query, bounds, monotone)


def _point_bounds(dataset, query, bounds, model, monotone):
    if model == "dynamic":
        est = dynamic_bounds(dataset, None, query, bounds)
    else:
        index = enumerate_support(dataset)
        cells = cell_frequencies(dataset, index)
        part = partition_support(index, cells, query)
        est = static_bounds(cell_means(dataset, index, query), cells, part, query, bounds, monotone)
    return est.mu_lower, est.mu_upper


def np_bounds_ci(
    dataset: PanelDataset,
    query: EffectQuery,
    bounds: OutcomeBounds,
    level: float = 0.95,
    method: str = "normal",
    reps: int = 200,
    model: str = "static",
    monotone: bool = False,
    seed: int = 0,
) -> NpBoundsInterval:
    """Normal or unit-bootstrap intervals for the estimated bounds.

    ``normal`` uses the sample variance of the per-unit scores whose means
    are the bound estimates; ``bootstrap`` resamples units with replacement
    ``reps`` times and takes percentile intervals.
    """
    if not 0.0 < level < 1.0:
        raise ValidationError("level must lie in (0, 1)")
    if model not in ("static", "dynamic"):
        raise ValidationError("model must be 'static' or 'dynamic'")
    est = _point_bounds(dataset, query, bounds, model, monotone)
    a = 1.0 - level
    if method == "normal":
        psi_l, psi_u = _bound_scores(dataset, query, bounds, model, monotone)
        n = dataset.n
        se = tuple(float(np.sqrt(np.var(s) / n)) for s in (psi_l, psi_u))
        z = float(stats.norm.ppf(1.0 - a / 2.0))
        lci = (est[0] - z * se[0], est[0] + z * se[0])
        uci = (est[1] - z * se[1], est[1] + z * se[1])
        return NpBoundsInterval(est, lci, uci, (lci[0], uci[1]), se)
    if method != "bootstrap":
        raise ValidationError("method must be 'normal' or 'bootstrap'")
    if reps < 1:
        raise ValidationError("reps must be at least 1 for the bootstrap")
    draws = np.empty((reps, 2))
    for r in range(reps):
        idx = counter_rng(seed, STREAM_RESAMPLE, r).integers(0, dataset.n, dataset.n)
        draws[r] = _point_bounds(dataset.take(idx), query, bounds, model, monotone)
    ql, qu = a / 2.0, 1.0 - a / 2.0
    lci = (float(np.quantile(draws[:, 0], ql)), float(np.quantile(draws[:, 0], qu)))
    uci = (float(np.quantile(draws[:, 1], ql)), float(np.quantile(draws[:, 1], qu)))
    return NpBoundsInterval(est, lci, uci, (lci[0], uci[1]))
