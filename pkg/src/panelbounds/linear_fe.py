"""Linear fixed-effects slopes and the average slope over switching units.

For a binary regressor the within estimator converges to a variance-weighted
average of the history-specific effects, which differs from the average
effect whenever effects vary across histories. The switcher average slope
instead targets the plain mass-weighted average over histories in which both
regressor values occur.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDesign, NoIdentifiedUnits, ValidationError
from .panel_core import CellProbabilities, EffectQuery, PanelDataset, SupportIndex


def _binary_scalar(x: np.ndarray) -> np.ndarray:
    if x.shape[-1] != 1 or not np.all((x == 0) | (x == 1)):
        raise ValidationError("this estimator needs a binary scalar regressor")
    return x[..., 0].astype(float)


def within_estimator(dataset: PanelDataset) -> float:
    """Least-squares slope after removing unit means from the regressor.

    Raises
    ------
    DegenerateDesign
        If no unit's regressor varies over time.
    """
    x = _binary_scalar(dataset.x)
    dx = x - x.mean(axis=1, keepdims=True)
    den = float(np.sum(dx * dx))
    if den <= 0.0:
        raise DegenerateDesign("regressor is constant within every unit")
    return float(np.sum(dx * dataset.y) / den)


@dataclass(frozen=True, eq=False)
class WithinDecomposition:
    """Limit of the within estimator as a weighted average of effects.

    Attributes
    ----------
    per_k_share : ndarray
        Fraction of periods with regressor equal to 1, per history.
    per_k_variance : ndarray
        ``share * (1 - share)``.
    weights : ndarray
        ``P_k * variance_k`` normalized to sum to one.
    plim : float
    """

    per_k_variance: np.ndarray
    per_k_share: np.ndarray
    weights: np.ndarray
    plim: float


def within_plim(cells: CellProbabilities, effects) -> WithinDecomposition:
    """Probability limit of the within estimator given per-history effects.

    Parameters
    ----------
    cells : CellProbabilities
        Binary scalar regressor histories and their masses.
    effects : array_like, shape (K,)

    Raises
    ------
    DegenerateDesign
        If every history with positive mass is constant.
    """
    share = _binary_scalar(cells.index.histories).mean(axis=1)
    var = share * (1.0 - share)
    mass = cells.p_x * var
    total = mass.sum()
    if total <= 0.0:
        raise DegenerateDesign("no history with positive mass has regressor variation")
    w = mass / total
    effects = np.asarray(effects, dtype=float)
    plim = float(np.sum(w[w > 0] * effects[w > 0]))
    return WithinDecomposition(var, share, w, plim)


@dataclass(frozen=True)
class ChamberlainEstimate:
    """Average slope over switching units and their sample share."""

    beta_hat: float
    identified_share: float
    n_star: int


def unit_slopes(dataset: PanelDataset, query: EffectQuery):
    """Per-unit difference of period averages at ``x_tilde`` and ``x_bar``.

    Returns
    -------
    slopes : ndarray, shape (n,)
        NaN for units that do not switch.
    switch : ndarray of bool, shape (n,)
    """
    xt = np.all(dataset.x == np.array(query.x_tilde), axis=2)
    xb = np.all(dataset.x == np.array(query.x_bar), axis=2)
    nt = xt.sum(axis=1)
    nb = xb.sum(axis=1)
    switch = (nt > 0) & (nb > 0)
    y = dataset.y.astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        slopes = ((xt * y).sum(axis=1) / nt - (xb * y).sum(axis=1) / nb) / query.distance
    return np.where(switch, slopes, np.nan), switch


def chamberlain_estimator(dataset: PanelDataset, query: EffectQuery) -> ChamberlainEstimate:
    """Average over switching units of the within-unit outcome contrast.

    Raises
    ------
    NoIdentifiedUnits
        If no unit has both query values in its history.
    """
    slopes, switch = unit_slopes(dataset, query)
    n_star = int(switch.sum())
    if n_star == 0:
        raise NoIdentifiedUnits("no unit has both query values in its regressor history")
    return ChamberlainEstimate(float(np.mean(slopes[switch])), n_star / dataset.n, n_star)


@dataclass(frozen=True, eq=False)
class SupportPartition:
    """Histories grouped by which query values they contain.

    Attributes
    ----------
    k_star : ndarray of int
        Both values occur.
    k_tilde : ndarray of int
        Only ``x_tilde`` occurs.
    k_bar : ndarray of int
        Only ``x_bar`` occurs.
    k_none : ndarray of int
        Neither occurs.
    p0 : float
        Mass not covered by the three groups above (histories with neither
        value plus any unobserved mass).
    """

    k_star: np.ndarray
    k_tilde: np.ndarray
    k_bar: np.ndarray
    k_none: np.ndarray
    p0: float

    def masses(self, p_x) -> dict:
        p_x = np.asarray(p_x)
        return {
            "p0": self.p0,
            "k_star": float(p_x[self.k_star].sum()),
            "k_tilde": float(p_x[self.k_tilde].sum()),
            "k_bar": float(p_x[self.k_bar].sum()),
        }


def partition_support(index: SupportIndex, cells: CellProbabilities, query: EffectQuery) -> SupportPartition:
    """Classify observed histories by the presence of ``x_tilde`` and ``x_bar``."""
    if cells.K != index.K:
        raise ValidationError(f"cells cover {cells.K} histories, the index has {index.K}")
    has_t = np.array([query.tilde_periods(h).any() for h in index.histories], dtype=bool)
    has_b = np.array([query.bar_periods(h).any() for h in index.histories], dtype=bool)
    obs = cells.present
    k_star = np.flatnonzero(obs & has_t & has_b)
    k_tilde = np.flatnonzero(obs & has_t & ~has_b)
    k_bar = np.flatnonzero(obs & ~has_t & has_b)
    k_none = np.flatnonzero(obs & ~has_t & ~has_b)
    covered = cells.p_x[k_star].sum() + cells.p_x[k_tilde].sum() + cells.p_x[k_bar].sum()
    return SupportPartition(k_star, k_tilde, k_bar, k_none, float(max(0.0, 1.0 - covered)))
