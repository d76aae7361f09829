import math

import numpy as np
import pytest
from conftest import design_cells
from oracles import count_cells, design_matrix

from panelbounds.errors import UnsupportedExactCells, ValidationError
from panelbounds.panel_core import EffectQuery
from panelbounds.setid import GridConfig, MixingDistribution, effect_bounds, estimate_identified_set, scalar_beta_grid
from panelbounds.simlab import (
    MarkovDgp,
    StaticDgp,
    _polar_normal,
    exact_cells,
    generate,
    honore_tamer_alpha,
    markov_bound_decay,
    markov_cells,
    normal_threshold_mass,
    table1_surface,
    true_effects,
)


def phi_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def test_honore_tamer_masses():
    ht = honore_tamer_alpha()
    assert len(ht.support) == 31 and ht.support[0] == -3.0 and ht.support[-1] == 3.0
    assert abs(ht.weights.sum() - 1.0) <= 1e-15
    mid = ht.weights[15]
    assert mid == pytest.approx(phi_cdf(0.1) - phi_cdf(-0.1), abs=1e-14)
    assert mid == pytest.approx(0.0797, abs=1e-4)
    np.testing.assert_allclose(ht.weights, ht.weights[::-1], atol=1e-15)
    assert ht.weights[0] == pytest.approx(phi_cdf(-2.9), abs=1e-15)


def test_dgp_validation():
    with pytest.raises(ValidationError):
        StaticDgp(1)
    with pytest.raises(ValidationError):
        StaticDgp(2, p_x=1.0)
    with pytest.raises(ValidationError):
        StaticDgp(2, link="cauchy")
    with pytest.raises(UnsupportedExactCells):
        exact_cells(StaticDgp(2, alpha_spec="normal_plus_correlated"))
    with pytest.raises(ValidationError):
        exact_cells(StaticDgp(9))


def test_history_masses_t2():
    cells = exact_cells(StaticDgp(2, 0.5))
    np.testing.assert_allclose(cells.p_x, 0.25, atol=1e-15)
    c = exact_cells(StaticDgp(3, 0.3))
    s = c.index.histories[:, :, 0].sum(axis=1)
    np.testing.assert_allclose(c.p_x, 0.3**s * 0.7 ** (3 - s), atol=1e-15)


def test_zero_slope_rows_depend_on_regressor_mean_only():
    cells = exact_cells(StaticDgp(3, 0.4, 0.0, "probit"))
    h = cells.index.histories[:, :, 0]
    for s in range(4):
        rows = cells.p_y_given_x[h.sum(axis=1) == s]
        np.testing.assert_allclose(rows - rows[:1], 0.0, atol=1e-15)


@pytest.mark.parametrize("link,T", [("logit", 2), ("probit", 3)])
def test_exact_cells_against_independent_sum(link, T):
    p, beta = 0.4, 0.7
    cells = exact_cells(StaticDgp(T, p, beta, link))
    a = np.round(np.arange(-15, 16) * 0.2, 12)
    cuts = [phi_cdf((a[i] + a[i + 1]) / 2) for i in range(30)]
    w = np.diff(np.concatenate(([0.0], cuts, [1.0])))
    for k, h in enumerate(cells.index.histories[:, :, 0]):
        shift = math.sqrt(T) * (h.mean() - p) / math.sqrt(p * (1 - p))
        row = design_matrix(link, h, shift + a, beta) @ w
        np.testing.assert_allclose(cells.p_y_given_x[k], row, atol=1e-13)


def test_generate_is_reproducible():
    dgp = StaticDgp(3, 0.5, 1.0, "probit")
    a, b = generate(dgp, 500, 42), generate(dgp, 500, 42)
    assert a.y.tobytes() == b.y.tobytes() and a.x.tobytes() == b.x.tobytes()
    c = generate(dgp, 500, 43)
    assert c.y.tobytes() != a.y.tobytes()
    with pytest.raises(ValidationError):
        generate(dgp, 0, 1)


@pytest.mark.parametrize("link", ["logit", "probit"])
def test_generate_matches_exact_cells(link):
    dgp = StaticDgp(2, 0.5, 1.0, link)
    n = 40_000
    data = generate(dgp, n, 7)
    p_x, p_y = count_cells(data.y, data.x[:, :, 0])
    cells = exact_cells(dgp)
    tol = 4 / math.sqrt(n)
    for k, h in enumerate(cells.index.histories[:, :, 0]):
        assert abs(p_x.get(tuple(h), 0.0) - cells.p_x[k]) <= tol
        for j, pat in enumerate(cells.index.outcomes):
            assert abs(p_y.get((tuple(h), tuple(pat)), 0.0) - cells.p_y_given_x[k, j]) <= tol


def test_saturated_slope():
    data = generate(StaticDgp(4, 0.5, 50.0, "probit", "correlated"), 2000, 3)
    assert np.all(data.y[data.x[:, :, 0] == 1] == 1)


def test_polar_normal_moments():
    z = _polar_normal(np.random.Generator(np.random.PCG64(0)), 200_000)
    assert abs(z.mean()) < 0.01 and abs(z.std() - 1) < 0.01
    assert abs(np.mean(z <= 1.0) - phi_cdf(1.0)) < 0.005


def test_table1_patterns():
    zero = table1_surface([3], [0.3], beta=0.0)[0]
    assert zero["bias_within"] == 0.0 and zero["bias_avg"] == 0.0
    rows = {(r["T"], r["p_x"]): r for r in table1_surface([3, 6], [0.1, 0.5])}
    for T in (3, 6):
        assert abs(rows[(T, 0.1)]["bias_within"]) > abs(rows[(T, 0.5)]["bias_within"])
    for p in (0.1, 0.5):
        gap = lambda T: abs(rows[(T, p)]["beta_w"] - rows[(T, p)]["beta_avg"])
        assert gap(6) > gap(3)


def test_markov_iid_envelope():
    dgp = MarkovDgp(MixingDistribution(np.array([0.0]), np.array([1.0])), 0.5, 0.5)
    assert dgp.epsilon == 0.5
    for row in markov_bound_decay(dgp, range(2, 9)):
        assert row["width"] <= row["envelope"] + 1e-12
        assert row["envelope"] == pytest.approx(2 * 0.5 ** (row["T"] - 1))
        assert row["mu_lower"] - 1e-12 <= row["mu0"] <= row["mu_upper"] + 1e-12


def test_markov_history_masses_iid():
    dgp = MarkovDgp(MixingDistribution(np.array([0.0]), np.array([1.0])), 0.5, 0.5)
    cells, means, mu0 = markov_cells(dgp, 4)
    np.testing.assert_allclose(cells.p_x, 1 / 16, atol=1e-15)
    assert mu0 == pytest.approx(phi_cdf(1.0) - 0.5)


def test_markov_absorbing_width_stays_positive():
    alpha = MixingDistribution(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))
    dgp = MarkovDgp(alpha, np.array([1.0, 0.5]), np.array([0.5, 0.5]))
    widths = [r["width"] for r in markov_bound_decay(dgp, range(2, 11))]
    assert min(widths) > 0.25


def test_markov_draws_match_exact_masses():
    alpha = MixingDistribution(np.array([-1.0, 1.0]), np.array([0.3, 0.7]))
    dgp = MarkovDgp(alpha, np.array([0.8, 0.6]), np.array([0.7, 0.4]), T=3)
    data = generate(dgp, 50_000, 5)
    cells, _, _ = markov_cells(dgp, 3)
    p_x, _ = count_cells(data.y, data.x[:, :, 0])
    for k, h in enumerate(cells.index.histories[:, :, 0]):
        assert abs(p_x.get(tuple(h), 0.0) - cells.p_x[k]) <= 4 / math.sqrt(50_000)


@pytest.mark.parametrize("T", range(1, 11))
def test_normal_threshold_mass(T):
    assert normal_threshold_mass(T) == pytest.approx(1 / (T + 1), abs=1e-6)


def test_true_effects_match_integrand_average():
    dgp = StaticDgp(2, 0.5, 1.0, "logit", "correlated")
    mu = true_effects(dgp)
    shift = math.sqrt(2) * (np.array([0, 0.5, 0.5, 1]) - 0.5) / 0.5
    ref = 1 / (1 + np.exp(-(1 + shift))) - 1 / (1 + np.exp(-shift))
    np.testing.assert_allclose(mu, ref, atol=1e-14)


def test_unswitched_bounds_shrink_faster_than_cubic():
    scaled = []
    for T in range(2, 7):
        s = estimate_identified_set(design_cells(T), GridConfig(beta_grid=scalar_beta_grid(0.9, 1.1, 0.05)))
        eb = effect_bounds(s, EffectQuery(1, 0))
        scaled.append((eb.upper[0] - eb.lower[0]) * T**3)
    assert np.all(np.diff(scaled) < 0)
