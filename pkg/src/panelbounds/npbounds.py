"""Nonparametric bounds on average marginal effects for bounded outcomes.

Histories in which both query values occur identify their effect from
within-unit contrasts. For the remaining histories only one side of the
contrast is observed and the other is replaced by the outcome bounds. The
predetermined case uses first-occurrence partitions instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SignConflict, SignNotIdentified, ValidationError
from .linear_fe import SupportPartition
from .panel_core import CellMeans, CellProbabilities, EffectQuery, PanelDataset, SupportIndex

SIGN_TOL = 1e-9


@dataclass(frozen=True)
class OutcomeBounds:
    """Bounds on the outcome's conditional mean per unit of the distance."""

    b_lower: float = 0.0
    b_upper: float = 1.0

    def __post_init__(self):
        if not self.b_lower <= self.b_upper:
            raise ValidationError("b_lower must not exceed b_upper")

    @property
    def width(self) -> float:
        return self.b_upper - self.b_lower


@dataclass(frozen=True)
class BoundsEstimate:
    """Lower and upper bound with their decomposition.

    Attributes
    ----------
    mu_lower, mu_upper : float
    identified_component : float
        Mass-weighted identified effects (static) or the first-occurrence
        contrast (predetermined).
    partition_masses : dict
        Masses of the unidentified groups.
    monotone_sign : int or None
        Sign used by the monotone refinement, if requested.
    """

    mu_lower: float
    mu_upper: float
    identified_component: float
    partition_masses: dict = field(default_factory=dict)
    monotone_sign: int | None = None

    @property
    def width(self) -> float:
        return self.mu_upper - self.mu_lower


def _period_mean(row, mask):
    return float(np.mean(row[mask]))


def identify_mu_k(means: CellMeans, index: SupportIndex, k: int, query: EffectQuery, bounds: OutcomeBounds | None = None):
    """Effect for history ``k``: a point if both values occur, else an interval.

    When several periods carry the same query value the cell means are
    averaged over them.

    Returns
    -------
    float or tuple of float

    Raises
    ------
    IndexError
        If ``k`` is out of range.
    ValidationError
        If an interval is needed but ``bounds`` is missing.
    """
    if not 0 <= k < index.K:
        raise IndexError(f"history {k} out of range 0..{index.K - 1}")
    h = index.histories[k]
    t_mask = query.tilde_periods(h)
    b_mask = query.bar_periods(h)
    row = means.m_bar[k]
    if t_mask.any() and b_mask.any():
        return _period_mean(row, t_mask) - _period_mean(row, b_mask)
    if bounds is None:
        raise ValidationError("outcome bounds are needed for histories without both query values")
    bl, bu = bounds.b_lower, bounds.b_upper
    if t_mask.any():
        m = _period_mean(row, t_mask)
        return (m - bu, m - bl)
    if b_mask.any():
        m = _period_mean(row, b_mask)
        return (bl - m, bu - m)
    return (bl - bu, bu - bl)


def _effect_sign(values) -> int:
    sign = 0
    for v in values:
        if abs(v) > SIGN_TOL:
            s = 1 if v > 0 else -1
            if sign == 0:
                sign = s
            elif s != sign:
                raise SignConflict("switching histories disagree on the sign of the effect")
    return sign


def static_bounds(
    means: CellMeans,
    cells: CellProbabilities,
    partition: SupportPartition,
    query: EffectQuery,
    bounds: OutcomeBounds,
    monotone: bool = False,
) -> BoundsEstimate:
    """Bounds on the average effect for strictly exogenous regressors.

    Parameters
    ----------
    means : CellMeans
    cells : CellProbabilities
        Supplies the history masses.
    partition : SupportPartition
    query : EffectQuery
    bounds : OutcomeBounds
    monotone : bool
        If set, the sign of the effect identified on switching histories is
        imposed on the unidentified pieces.

    Raises
    ------
    SignNotIdentified
        If ``monotone`` is set but no history contains both query values.
    SignConflict
        If switching histories give effects of both signs.
    """
    index = cells.index
    px = cells.p_x
    bl, bu = bounds.b_lower, bounds.b_upper
    mu_star = np.array([identify_mu_k(means, index, int(k), query) for k in partition.k_star])
    ident = float(px[partition.k_star] @ mu_star) if len(mu_star) else 0.0
    lower_pieces = [partition.p0 * (bl - bu)]
    upper_pieces = [partition.p0 * (bu - bl)]
    for k in partition.k_tilde:
        lo, hi = identify_mu_k(means, index, int(k), query, bounds)
        lower_pieces.append(px[k] * lo)
        upper_pieces.append(px[k] * hi)
    for k in partition.k_bar:
        lo, hi = identify_mu_k(means, index, int(k), query, bounds)
        lower_pieces.append(px[k] * lo)
        upper_pieces.append(px[k] * hi)
    sign = None
    if monotone:
        if len(partition.k_star) == 0:
            raise SignNotIdentified("no history contains both query values")
        sign = _effect_sign(mu_star)
        if sign > 0:
            lower_pieces = [max(p, 0.0) for p in lower_pieces]
        elif sign < 0:
            upper_pieces = [min(p, 0.0) for p in upper_pieces]
    return BoundsEstimate(
        mu_lower=ident + float(np.sum(lower_pieces)),
        mu_upper=ident + float(np.sum(upper_pieces)),
        identified_component=ident,
        partition_masses=partition.masses(px),
        monotone_sign=sign,
    )


def first_occurrence(x: np.ndarray, value) -> np.ndarray:
    """Period of the first occurrence of ``value`` in each history, -1 if never.

    Parameters
    ----------
    x : ndarray, shape (n, T, d)
    """
    hit = np.all(x == np.asarray(value), axis=2)
    first = np.argmax(hit, axis=1)
    return np.where(hit.any(axis=1), first, -1)


def dynamic_unit_scores(dataset: PanelDataset, query: EffectQuery):
    """Per-unit first-occurrence contrast and never-occurrence indicators.

    Returns
    -------
    contrast : ndarray, shape (n,)
        ``Y`` at the first ``x_tilde`` period minus ``Y`` at the first
        ``x_bar`` period (missing terms are zero), divided by D.
    never_tilde, never_bar : ndarray of bool, shape (n,)
    """
    ft = first_occurrence(dataset.x, query.x_tilde)
    fb = first_occurrence(dataset.x, query.x_bar)
    rows = np.arange(dataset.n)
    y = dataset.y.astype(float)
    yt = np.where(ft >= 0, y[rows, np.maximum(ft, 0)], 0.0)
    yb = np.where(fb >= 0, y[rows, np.maximum(fb, 0)], 0.0)
    return (yt - yb) / query.distance, ft < 0, fb < 0


def dynamic_bounds(dataset: PanelDataset, index: SupportIndex | None, query: EffectQuery, bounds: OutcomeBounds) -> BoundsEstimate:
    """Bounds for predetermined regressors from first-occurrence partitions.

    Each unit contributes its outcome at the first period with ``x_tilde``
    minus its outcome at the first period with ``x_bar``; units that never
    reach a value contribute the corresponding outcome bound instead.

    Parameters
    ----------
    dataset : PanelDataset
    index : SupportIndex or None
        Accepted for interface symmetry; if given, every observed history
        must be listed in it.
    query : EffectQuery
    bounds : OutcomeBounds
    """
    if index is not None:
        index.locate_histories(dataset.x)
    contrast, never_t, never_b = dynamic_unit_scores(dataset, query)
    delta = float(contrast.mean())
    pt = float(never_t.mean())
    pb = float(never_b.mean())
    bl, bu = bounds.b_lower, bounds.b_upper
    return BoundsEstimate(
        mu_lower=delta + bl * pt - bu * pb,
        mu_upper=delta + bu * pt - bl * pb,
        identified_component=delta,
        partition_masses={"never_tilde": pt, "never_bar": pb},
    )
