import math

import numpy as np
import pytest
from conftest import design_cells
from oracles import effect_row, lp_vertex_enumeration, simplex_grid_search

from panelbounds.choice_model import LikelihoodKernel, as_link, likelihood_tensor
from panelbounds.errors import ValidationError
from panelbounds.linear_fe import partition_support
from panelbounds.npbounds import OutcomeBounds, identify_mu_k, static_bounds
from panelbounds.panel_core import CellProbabilities, EffectQuery, SupportIndex, population_cell_means
from panelbounds.setid import (
    GridConfig,
    MixingDistribution,
    alpha_grid_lp,
    alpha_grid_qp,
    effect_bounds,
    effect_bounds_lp,
    estimate_identified_set,
    femle,
    md_objective,
    profile_alpha,
    project_probabilities,
    scalar_beta_grid,
)

Q = EffectQuery(1, 0)
FAST = GridConfig(beta_grid=scalar_beta_grid(0.0, 2.0, 0.05))


def model_cells(T, beta, link="logit", seed=0, alphas=None):
    """Cells generated exactly by a mixture on the fitting grid."""
    rng = np.random.default_rng(seed)
    idx = SupportIndex.full_binary(T)
    alphas = alpha_grid_qp() if alphas is None else alphas
    L = likelihood_tensor(LikelihoodKernel(as_link(link), idx), alphas, [beta])
    pi = rng.dirichlet(np.ones(len(alphas)), size=idx.K)
    rows = np.einsum("kjm,km->kj", L, pi)
    px = rng.dirichlet(np.ones(idx.K) * 5)
    return CellProbabilities(px, rows / rows.sum(axis=1, keepdims=True), 0, idx), pi


def test_grid_defaults_and_validation():
    assert len(alpha_grid_qp()) == 23 and len(alpha_grid_lp()) == 163
    assert alpha_grid_qp()[1] == -4.0 and alpha_grid_lp()[2] == pytest.approx(-7.9)
    g = GridConfig()
    assert g.ridge(1000) == pytest.approx(1 / (1000 * math.log(1000)))
    assert g.cutoff(1000) == pytest.approx(math.log(1000) / 1000)
    with pytest.raises(ValidationError):
        GridConfig(alpha_grid_qp=np.array([-1.0, 0.0, np.inf]))
    with pytest.raises(ValidationError):
        GridConfig(lam=-1.0)
    with pytest.raises(ValidationError):
        MixingDistribution(np.array([0.0, 1.0]), np.array([0.3, 0.3]))


def test_md_objective_exact_fit_and_penalty_limit():
    cells, _ = model_cells(2, 1.0)
    val, mix = md_objective(cells, [1.0], GridConfig(lam=0.0))
    assert val < 1e-10
    val, mix = md_objective(cells, [1.0], GridConfig(lam=1e13))
    for m in mix:
        np.testing.assert_allclose(m.weights, 1 / 23, atol=1e-6)


def test_md_objective_feasible_point_bound():
    cells, pi = model_cells(3, 0.5, seed=4)
    lam = 1e-3
    val, _ = md_objective(cells, [0.5], GridConfig(lam=lam))
    assert val <= lam * np.sum(pi**2) + 1e-12


def test_md_objective_matches_grid_search():
    rng = np.random.default_rng(5)
    idx = SupportIndex.full_binary(2)
    alphas = np.array([-np.inf, -1.0, 0.5, 2.0, np.inf])
    rows = rng.dirichlet(np.ones(4), size=4)
    px = np.full(4, 0.25)
    cells = CellProbabilities(px, rows, 500, idx)
    w = rng.uniform(0.5, 2.0, (4, 4))
    lam = 0.02
    grid = GridConfig(alpha_grid_qp=alphas, lam=lam)
    val, _ = md_objective(cells, [0.7], grid, weights=w)
    L = likelihood_tensor(LikelihoodKernel(as_link("logit"), idx), alphas, [0.7])
    ref = sum(simplex_grid_search(L[k], rows[k], w[k], lam)[0] for k in range(4))
    assert val <= ref + 1e-12
    assert val == pytest.approx(ref, abs=1e-5)


def test_logit_t2_point_identified():
    cells = design_cells(2)
    s = estimate_identified_set(cells, FAST)
    members = np.flatnonzero(s.members)
    assert np.all(np.diff(members) == 1)
    betas = s.member_betas[:, 0]
    assert betas.min() - 1e-12 <= 1.0 <= betas.max() + 1e-12
    assert betas.max() - betas.min() <= 2 * 0.05 + 1e-12
    assert np.all(s.objective[s.members] <= s.min_value + s.epsilon)


def test_probit_t2_interval():
    s = estimate_identified_set(design_cells(2, "probit"), FAST, link="probit")
    betas = s.member_betas[:, 0]
    assert betas.max() - betas.min() > 0


def test_misspecified_cells():
    rng = np.random.default_rng(8)
    idx = SupportIndex.full_binary(2)
    rows = rng.dirichlet(np.ones(4) * 0.3, size=4)
    cells = CellProbabilities(np.full(4, 0.25), rows, 0, idx)
    s = estimate_identified_set(cells, FAST)
    assert s.members.any() and s.min_value > 0
    assert np.abs(s.projected().p_y_given_x - rows).max() > 1e-3


def test_projection_fixes_model_points_and_is_idempotent():
    cells, _ = model_cells(2, 1.0, seed=2)
    p1 = project_probabilities(cells, FAST)
    np.testing.assert_allclose(p1.p_y_given_x, cells.p_y_given_x, atol=1e-6)
    rng = np.random.default_rng(9)
    mis = cells.with_rows(rng.dirichlet(np.ones(4), size=4))
    a = project_probabilities(mis, FAST)
    b = project_probabilities(a, FAST)
    np.testing.assert_allclose(b.p_y_given_x, a.p_y_given_x, atol=1e-5)
    np.testing.assert_allclose(a.p_y_given_x.sum(axis=1), 1.0, atol=1e-14)


def test_projection_matches_brute_force():
    # single unweighted pass with no ridge: P* is the closest fit over a tiny grid
    rng = np.random.default_rng(21)
    idx = SupportIndex.full_binary(2)
    alphas = np.array([-np.inf, -1.0, 0.0, 1.0, np.inf])
    betas = np.array([0.0, 0.5, 1.0, 1.5])
    rows = rng.dirichlet(np.ones(4), size=4)
    px = np.array([0.1, 0.2, 0.3, 0.4])
    cells = CellProbabilities(px, rows, 0, idx)
    grid = GridConfig(beta_grid=betas, alpha_grid_qp=alphas, lam=0.0, weight_iterations=1)
    got = project_probabilities(cells, grid).p_y_given_x
    kern = LikelihoodKernel(as_link("logit"), idx)
    best = None
    for b in betas:
        L = likelihood_tensor(kern, alphas, [b])
        fits = [simplex_grid_search(L[k], rows[k], np.full(4, px[k]), 0.0) for k in range(4)]
        total = sum(f[0] for f in fits)
        if best is None or total < best[0]:
            best = (total, np.array([L[k] @ fits[k][1] for k in range(4)]))
    np.testing.assert_allclose(got, best[1], atol=1e-4)


def test_effect_bounds_lp_examples():
    zero, _ = model_cells(2, 0.0, seed=3)
    for k in range(4):
        assert effect_bounds_lp(zero, [0.0], k, Q, GridConfig()) == (0.0, 0.0)
    proj = project_probabilities(design_cells(2), FAST)
    lo, hi = effect_bounds_lp(proj, [1.0], 1, Q, GridConfig())  # history (0, 1) switches
    assert hi - lo < 1e-7


def test_effect_bounds_lp_matches_vertex_enumeration():
    cells, _ = model_cells(2, 0.8, seed=13)
    grid = GridConfig(alpha_grid_lp=alpha_grid_qp())
    L = likelihood_tensor(LikelihoodKernel(as_link("logit"), cells.index), alpha_grid_qp(), [0.8])
    c = effect_row("logit", alpha_grid_qp(), 0.8)
    for k in (0, 3):
        A = np.vstack([L[k], np.ones(23)])
        b = np.append(cells.p_y_given_x[k], 1.0)
        ref = lp_vertex_enumeration(c, A, b)
        got = effect_bounds_lp(cells, [0.8], k, Q, grid)
        np.testing.assert_allclose(got, ref, atol=1e-6)


def test_lp_mixtures_are_sparse():
    cells, _ = model_cells(3, 0.8, seed=14)
    grid = GridConfig(beta_grid=[[0.8]])
    from panelbounds.setid import ModelGrid

    model = ModelGrid(cells.index, "logit", grid)
    _, _, xlo, xhi = model.lp_bounds(np.zeros(8, int), np.arange(8), cells.p_y_given_x, Q)
    assert np.all((xlo > 1e-12).sum(axis=1) <= cells.J)
    assert np.all((xhi > 1e-12).sum(axis=1) <= cells.J)


def test_effect_bounds_singleton_and_epsilon_monotone():
    cells = design_cells(2)
    grid = FAST.replace(epsilon=0.0)
    s = estimate_identified_set(cells, grid)
    assert s.members.sum() == 1
    g = s.argmin
    eb = effect_bounds(s, Q)
    for k in range(4):
        assert eb.for_history(k) == pytest.approx(effect_bounds_lp(s.projected(g), s.beta_grid[g], k, Q, grid), abs=1e-12)
    wide = effect_bounds(estimate_identified_set(cells, FAST.replace(epsilon=1e-3)), Q)
    assert np.all(wide.lower <= eb.lower + 1e-12) and np.all(wide.upper >= eb.upper - 1e-12)
    assert wide.aggregate[0] <= eb.aggregate[0] + 1e-12 and wide.aggregate[1] >= eb.aggregate[1] - 1e-12


def test_aggregate_nested_in_nonparametric_bounds():
    cells = design_cells(2)
    agg = effect_bounds(estimate_identified_set(cells, FAST), Q).aggregate
    part = partition_support(cells.index, cells, Q)
    means = population_cell_means(cells, Q)
    gm = static_bounds(means, cells, part, Q, OutcomeBounds(), monotone=True)
    g = static_bounds(means, cells, part, Q, OutcomeBounds())
    assert gm.mu_lower - 1e-6 <= agg[0] <= agg[1] <= gm.mu_upper + 1e-6
    assert g.mu_lower <= gm.mu_lower + 1e-12 and gm.mu_upper <= g.mu_upper + 1e-12


@pytest.mark.parametrize("beta", [0.25, 0.5, 1.0])
def test_femle_doubles_slope(beta):
    res = femle(design_cells(2, beta=beta))
    assert res.beta_tilde[0] == pytest.approx(2 * beta, abs=1e-3)


def test_profile_alpha_two_periods():
    idx = SupportIndex.full_binary(2)
    kern = LikelihoodKernel(as_link("probit"), idx)
    a = profile_alpha(kern, [0.6])
    assert np.all(a[:, 0] == -np.inf) and np.all(a[:, 3] == np.inf)
    xsum = idx.histories[:, :, 0].sum(axis=1)
    np.testing.assert_allclose(a[:, 1], -0.6 * xsum / 2, atol=1e-9)
    np.testing.assert_allclose(a[:, 2], -0.6 * xsum / 2, atol=1e-9)


def test_femle_structure_and_identified_effect():
    cells = design_cells(2)
    res = femle(cells)
    for k, q in enumerate(res.q_tilde):
        assert q.weights.sum() == pytest.approx(1.0)
    means = population_cell_means(cells, Q)
    switch = [1, 2]
    mu = np.array([identify_mu_k(means, cells.index, k, Q) for k in switch])
    mu_i = float(cells.p_x[switch] @ mu / cells.p_x[switch].sum())
    assert res.effect_identified == pytest.approx(mu_i, abs=1e-6)


def test_femle_attenuation_at_unswitched_history():
    from panelbounds.simlab import StaticDgp, true_effects

    cells = design_cells(2)
    res = femle(cells)
    mu = true_effects(StaticDgp(2, 0.5, 1.0, "logit"), Q)
    ub = effect_bounds(estimate_identified_set(cells, FAST), Q)
    assert abs(res.effects[0]) <= ub.upper[0] + 1e-9
    assert abs(res.effects[0]) <= abs(mu[0]) + 1e-9
