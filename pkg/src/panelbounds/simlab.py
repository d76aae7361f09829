"""Data-generating processes and their exact population cell probabilities.

Two static binary-choice designs are provided: an effect that is a
deterministic function of the regressor mean (so it is a point mass given
the history), and the same effect plus an independent discrete component on
31 atoms. A Markov regressor design serves the bound-decay experiments.
Everything that can be computed as a finite sum is computed exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .choice_model import LikelihoodKernel, _pattern_product, as_link
from .errors import UnsupportedExactCells, ValidationError
from .linear_fe import partition_support, within_plim
from .npbounds import OutcomeBounds, static_bounds
from .panel_core import CellMeans, CellProbabilities, EffectQuery, PanelDataset, SupportIndex, binary_outcomes
from .setid import MixingDistribution

MAX_EXACT_T = 8
MAX_MARKOV_T = 14

ALPHA_SPECS = ("correlated", "honore_tamer_plus_correlated", "normal_plus_correlated")


def honore_tamer_alpha() -> MixingDistribution:
    """31 atoms at -3.0, -2.8, ..., 3.0 with normal-CDF midpoint masses.

    The last mass is the complement of the others so the total is exactly 1.
    """
    a = np.round(np.arange(-15, 16) * 0.2, 12)
    cuts = special.ndtr((a[1:] + a[:-1]) / 2.0)
    w = np.diff(np.concatenate(([0.0], cuts)))
    w = np.append(w, 1.0 - w.sum())
    return MixingDistribution(a, w)


def correlated_alpha(share, T: int, p_x: float):
    """``sqrt(T) (share - p) / sqrt(p (1 - p))`` for regressor share ``share``."""
    return np.sqrt(T) * (np.asarray(share, dtype=float) - p_x) / np.sqrt(p_x * (1.0 - p_x))


@dataclass(frozen=True)
class StaticDgp:
    """Binary choice with i.i.d. binary regressor and a correlated effect.

    ``Y_t = 1{X_t beta + alpha + e_t >= 0}`` with standard logistic or normal
    errors.

    Parameters
    ----------
    T : int
    p_x : float
        Probability that the regressor equals one.
    beta_star : float
    link : {"logit", "probit"}
    alpha_spec : str
        "correlated" uses only the regressor-mean component;
        "honore_tamer_plus_correlated" adds the 31-atom component;
        "normal_plus_correlated" adds a standard normal component (no exact
        cells).
    """

    T: int
    p_x: float = 0.5
    beta_star: float = 1.0
    link: str = "logit"
    alpha_spec: str = "honore_tamer_plus_correlated"

    def __post_init__(self):
        if self.T < 2:
            raise ValidationError("T must be at least 2")
        if not 0.0 < self.p_x < 1.0:
            raise ValidationError("p_x must lie strictly between 0 and 1")
        if self.alpha_spec not in ALPHA_SPECS:
            raise ValidationError(f"alpha_spec must be one of {ALPHA_SPECS}")
        as_link(self.link)

    def history_masses(self, histories) -> np.ndarray:
        h = np.asarray(histories)[..., 0]
        s = h.sum(axis=1)
        return self.p_x**s * (1.0 - self.p_x) ** (self.T - s)

    def conditional_alpha(self, histories):
        """Effect atoms and masses given each history, shapes (K, M)."""
        share = np.asarray(histories)[..., 0].mean(axis=1)
        shift = correlated_alpha(share, self.T, self.p_x)[:, None]
        if self.alpha_spec == "correlated":
            return shift, np.ones_like(shift)
        if self.alpha_spec == "normal_plus_correlated":
            raise UnsupportedExactCells("a continuous effect component has no finite-sum cells; simulate instead")
        ht = honore_tamer_alpha()
        return shift + ht.support[None, :], np.broadcast_to(ht.weights, (len(share), len(ht.weights)))


def exact_cells(dgp: StaticDgp) -> CellProbabilities:
    """Population history masses and outcome-pattern probabilities.

    Raises
    ------
    UnsupportedExactCells
        For continuous effect components.
    ValidationError
        If ``T`` exceeds 8 (full outcome enumeration).
    """
    if dgp.T > MAX_EXACT_T:
        raise ValidationError(f"exact cells enumerate 2**T outcomes; T is capped at {MAX_EXACT_T}")
    index = SupportIndex.full_binary(dgp.T)
    atoms, mass = dgp.conditional_alpha(index.histories)
    kernel = LikelihoodKernel(as_link(dgp.link), index)
    z = kernel.linear_index(np.array([dgp.beta_star]))[:, :, None] + atoms[:, None, :]  # (K, T, M)
    F = kernel.link.cdf
    L = _pattern_product(F(z), F(-z), index.outcomes, False)  # (K, J, M)
    rows = np.einsum("kjm,km->kj", L, mass)
    rows = rows / rows.sum(axis=1, keepdims=True)
    return CellProbabilities(dgp.history_masses(index.histories), rows, 0, index)


def true_effects(dgp: StaticDgp, query: EffectQuery | None = None) -> np.ndarray:
    """Per-history average effect ``E[F(x~ b + a) - F(x- b + a) | X^k] / D``."""
    query = query or EffectQuery(1, 0)
    index = SupportIndex.full_binary(dgp.T)
    atoms, mass = dgp.conditional_alpha(index.histories)
    F = as_link(dgp.link).cdf
    b = dgp.beta_star
    delta = F(query.x_tilde[0] * b + atoms) - F(query.x_bar[0] * b + atoms)
    return np.sum(mass * delta, axis=1) / query.distance


def _polar_normal(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normals by Marsaglia's polar method (rejection on the unit disc)."""
    out = np.empty(size)
    filled = 0
    while filled < size:
        need = size - filled
        u = rng.random((need // 2 + 8, 2)) * 2.0 - 1.0
        s = np.sum(u * u, axis=1)
        ok = (s > 0.0) & (s < 1.0)
        u, s = u[ok], s[ok]
        f = np.sqrt(-2.0 * np.log(s) / s)
        z = (u * f[:, None]).ravel()[:need]
        out[filled : filled + len(z)] = z
        filled += len(z)
    return out


def _errors(rng: np.random.Generator, link: str, shape) -> np.ndarray:
    size = int(np.prod(shape))
    if as_link(link).kind == "logit":
        u = rng.random(size)
        # inverse CDF; u == 0 has probability 2**-53 per draw, map it to the far tail
        e = special.logit(np.clip(u, 1e-300, None))
    else:
        e = _polar_normal(rng, size)
    return e.reshape(shape)


def generate(dgp, n: int, seed: int) -> PanelDataset:
    """Simulate ``n`` units from a :class:`StaticDgp` or :class:`MarkovDgp`.

    Draws use a PCG64 stream seeded by ``seed``; logistic errors come from
    the inverse CDF and normal errors from the polar method.
    """
    if n < 1:
        raise ValidationError("n must be at least 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    if isinstance(dgp, MarkovDgp):
        x, alpha = dgp.draw_regressors(rng, n)
        link, beta = dgp.link, dgp.beta
    else:
        T = dgp.T
        x = (rng.random((n, T)) < dgp.p_x).astype(np.int64)
        alpha = correlated_alpha(x.mean(axis=1), T, dgp.p_x)
        if dgp.alpha_spec == "honore_tamer_plus_correlated":
            ht = honore_tamer_alpha()
            pick = np.searchsorted(np.cumsum(ht.weights), rng.random(n), side="right")
            alpha = alpha + ht.support[np.minimum(pick, len(ht.weights) - 1)]
        elif dgp.alpha_spec == "normal_plus_correlated":
            alpha = alpha + _polar_normal(rng, n)
        link, beta = dgp.link, dgp.beta_star
    e = _errors(rng, link, x.shape)
    y = (x * beta + alpha[:, None] + e >= 0).astype(np.int64)
    return PanelDataset(y, x)


# ---------------------------------------------------------------------------
# linear fixed-effects bias surface


def table1_surface(T_list, p_list, beta: float = 1.0) -> list[dict]:
    """Relative biases of the within and switcher-average limits.

    Uses the probit design with the regressor-mean effect only, where the
    effect of moving the regressor from 0 to 1 is
    ``Phi(beta + alpha) - Phi(alpha)`` at the history's effect value.

    Returns
    -------
    list of dict
        Keys: T, p_x, mu0, beta_w, beta_avg, bias_within, bias_avg.
        Relative biases are reported as 0 when ``mu0`` is 0.
    """
    out = []
    query = EffectQuery(1, 0)
    for T in T_list:
        for p in p_list:
            dgp = StaticDgp(int(T), float(p), beta, "probit", "correlated")
            cells = exact_cells(dgp)
            mu = true_effects(dgp, query)
            mu0 = float(cells.p_x @ mu)
            bw = within_plim(cells, mu).plim
            part = partition_support(cells.index, cells, query)
            ps = cells.p_x[part.k_star]
            b = float(ps @ mu[part.k_star] / ps.sum())
            rel = (lambda v: 0.0 if mu0 == 0.0 else (v - mu0) / mu0)
            out.append(dict(T=int(T), p_x=float(p), mu0=mu0, beta_w=bw, beta_avg=b, bias_within=rel(bw), bias_avg=rel(b)))
    return out


# ---------------------------------------------------------------------------
# Markov regressors and bound decay


@dataclass(frozen=True, eq=False)
class MarkovDgp:
    """Binary regressor that is a stationary Markov chain given the effect.

    The state is the last ``order`` regressor values. From the all-zeros
    state the chain stays at zero with probability ``stay_zero``; from the
    all-ones state it stays at one with ``stay_one``; from any other state
    the next value is one with probability ``mixed_one``.

    Parameters
    ----------
    alpha : MixingDistribution
    stay_zero, stay_one : array_like
        One value per effect atom.
    order : int
    mixed_one : float
    beta : float
        Slope in the outcome equation ``1{X beta + alpha + e >= 0}``.
    link : str
    T : int
        Periods drawn by :func:`generate`.
    """

    alpha: MixingDistribution
    stay_zero: np.ndarray
    stay_one: np.ndarray
    order: int = 1
    mixed_one: float = 0.5
    beta: float = 1.0
    link: str = "probit"
    T: int = 5

    def __post_init__(self):
        m = len(self.alpha.support)
        for name in ("stay_zero", "stay_one"):
            v = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (m,)).copy()
            if np.any((v < 0) | (v > 1)):
                raise ValidationError(f"{name} must lie in [0, 1]")
            object.__setattr__(self, name, v)
        if self.order < 1:
            raise ValidationError("order must be at least 1")
        if not 0.0 <= self.mixed_one <= 1.0:
            raise ValidationError("mixed_one must lie in [0, 1]")

    @property
    def epsilon(self) -> float:
        """Largest ``e`` with both staying probabilities at most ``1 - e``."""
        return float(1.0 - max(self.stay_zero.max(), self.stay_one.max()))

    def _prob_one(self):
        """P(next = 1 | state) per atom, shape (A, 2**order); state bits oldest first."""
        S = 2**self.order
        p = np.full((len(self.stay_zero), S), self.mixed_one)
        p[:, 0] = 1.0 - self.stay_zero
        p[:, S - 1] = self.stay_one
        return p

    def stationary(self) -> np.ndarray:
        """Stationary distribution over states per atom, shape (A, 2**order).

        For chains with several closed classes the all-zeros class is chosen
        when ``stay_zero == 1`` (and all-ones when only ``stay_one == 1``).
        """
        S = 2**self.order
        p1 = self._prob_one()
        out = np.empty_like(p1)
        for a in range(len(p1)):
            P = np.zeros((S, S))
            for s in range(S):
                nxt0 = (s << 1) & (S - 1)
                P[s, nxt0] += 1.0 - p1[a, s]
                P[s, nxt0 | 1] += p1[a, s]
            if self.stay_zero[a] == 1.0:
                pi = np.zeros(S)
                pi[0] = 1.0
            elif self.stay_one[a] == 1.0:
                pi = np.zeros(S)
                pi[S - 1] = 1.0
            else:
                A = np.vstack([P.T - np.eye(S), np.ones(S)])
                rhs = np.zeros(S + 1)
                rhs[-1] = 1.0
                pi = np.linalg.lstsq(A, rhs, rcond=None)[0]
                pi = np.clip(pi, 0.0, None)
                pi /= pi.sum()
            out[a] = pi
        return out

    def history_probabilities(self, histories) -> np.ndarray:
        """P(X = X^k | alpha_a), shape (A, K), for binary histories (K, T)."""
        h = np.asarray(histories, dtype=np.int64)
        J = self.order
        if h.shape[1] < J:
            raise ValidationError("T must be at least the Markov order")
        weights = 1 << np.arange(J - 1, -1, -1)
        state = h[:, :J] @ weights
        prob = self.stationary()[:, state]
        p1 = self._prob_one()
        for t in range(J, h.shape[1]):
            step = np.where(h[None, :, t] == 1, p1[:, state], 1.0 - p1[:, state])
            prob = prob * step
            state = ((state << 1) & (2**J - 1)) | h[:, t]
        return prob

    def draw_regressors(self, rng: np.random.Generator, n: int, T: int | None = None):
        T = T or self.T
        pick = np.searchsorted(np.cumsum(self.alpha.weights), rng.random(n), side="right")
        pick = np.minimum(pick, len(self.alpha.weights) - 1)
        S = 2**self.order
        pi = self.stationary()[pick]
        state = np.minimum((pi.cumsum(axis=1) <= rng.random(n)[:, None]).sum(axis=1), S - 1)
        x = np.empty((n, T), dtype=np.int64)
        for t in range(self.order):
            x[:, t] = (state >> (self.order - 1 - t)) & 1
        p1 = self._prob_one()
        for t in range(self.order, T):
            x[:, t] = rng.random(n) < p1[pick, state]
            state = ((state << 1) & (S - 1)) | x[:, t]
        return x, self.alpha.support[pick]


def markov_cells(dgp: MarkovDgp, T: int, query: EffectQuery | None = None):
    """History masses and exact cell means for a Markov design.

    Only the history masses and per-period conditional means enter the
    static bounds, so outcome patterns are not enumerated: the returned
    cells carry a single placeholder pattern.

    Returns
    -------
    cells : CellProbabilities
    means : CellMeans
    mu0 : float
        Average effect over the marginal effect distribution.
    """
    if T > MAX_MARKOV_T:
        raise ValidationError(f"history enumeration is capped at T={MAX_MARKOV_T}")
    query = query or EffectQuery(1, 0)
    hist = binary_outcomes(T)
    joint = dgp.alpha.weights[:, None] * dgp.history_probabilities(hist)  # (A, K)
    p_x = joint.sum(axis=0)
    F = as_link(dgp.link).cdf
    a = dgp.alpha.support
    m = F(hist[None, :, :] * dgp.beta + a[:, None, None])  # (A, K, T)
    present = p_x > 0
    with np.errstate(invalid="ignore"):
        m_bar = np.einsum("ak,akt->kt", joint, m) / p_x[:, None]
    m_bar = np.where(present[:, None], m_bar, 0.0) / query.distance
    index = SupportIndex(hist[:, :, None], np.zeros((1, T), dtype=np.int64))
    rows = np.where(present[:, None], 1.0, 0.0)
    cells = CellProbabilities(p_x / p_x.sum(), rows, 0, index, present=present)
    delta = F(query.x_tilde[0] * dgp.beta + a) - F(query.x_bar[0] * dgp.beta + a)
    mu0 = float(dgp.alpha.weights @ delta) / query.distance
    return cells, CellMeans(m_bar, present), mu0


def markov_bound_decay(dgp: MarkovDgp, T_range, bounds: OutcomeBounds | None = None) -> list[dict]:
    """Static bound widths on exact Markov cells, with the exponential envelope.

    Returns
    -------
    list of dict
        Keys: T, mu_lower, mu_upper, mu0, width, max_error, envelope.
        ``envelope`` is ``2 (B_u - B_l) (1 - e)**(T - order)``.
    """
    bounds = bounds or OutcomeBounds(0.0, 1.0)
    query = EffectQuery(1, 0)
    out = []
    for T in T_range:
        cells, means, mu0 = markov_cells(dgp, int(T), query)
        part = partition_support(cells.index, cells, query)
        est = static_bounds(means, cells, part, query, bounds)
        env = 2.0 * bounds.width * (1.0 - dgp.epsilon) ** (int(T) - dgp.order)
        out.append(
            dict(
                T=int(T),
                mu_lower=est.mu_lower,
                mu_upper=est.mu_upper,
                mu0=mu0,
                width=est.width,
                max_error=max(abs(est.mu_lower - mu0), abs(est.mu_upper - mu0)),
                envelope=env,
            )
        )
    return out


def normal_threshold_mass(T: int) -> float:
    """Mass of the all-ones history when ``X_t = 1{alpha - e_t > 0}``, both standard normal.

    Computed by adaptive quadrature of ``Phi(a)**T phi(a)``.
    """
    if T < 1:
        raise ValidationError("T must be at least 1")
    f = lambda a: special.ndtr(a) ** T * np.exp(-0.5 * a * a) / np.sqrt(2.0 * np.pi)
    val, _ = integrate.quad(f, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12)
    return float(val)
