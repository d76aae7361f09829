"""Discrete panel data: histories, outcome patterns and cell frequencies.

Regressor histories and outcome patterns are enumerated in lexicographic
order with the earliest period most significant, so cell indices are
reproducible across runs and machines.
"""

from __future__ import annotations

import csv
import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import UnbalancedPanel, UnknownHistory, UnsupportedOutcomeAlphabet, ValidationError

ROW_SUM_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Balanced panel of integer-coded outcomes and regressors.

    Parameters
    ----------
    y : array_like, shape (n, T)
        Outcome histories.
    x : array_like, shape (n, T) or (n, T, d)
        Regressor histories; a 2-d array is read as a scalar regressor.
    ids : sequence, optional
        Unit labels, kept only for writing the panel back out.
    """

    y: np.ndarray
    x: np.ndarray
    ids: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.y)
        x = np.asarray(self.x)
        if y.ndim != 2:
            raise ValidationError("y must have shape (n, T)")
        if x.ndim == 2:
            x = x[:, :, None]
        if x.ndim != 3 or x.shape[:2] != y.shape:
            raise ValidationError("x must have shape (n, T) or (n, T, d) matching y")
        n, T = y.shape
        if n < 1:
            raise ValidationError("a panel needs at least one unit")
        if T < 2:
            raise ValidationError("a panel needs at least two periods")
        if not (np.issubdtype(y.dtype, np.integer) and np.issubdtype(x.dtype, np.integer)):
            if not (np.all(y == np.round(y)) and np.all(x == np.round(x))):
                raise ValidationError("outcomes and regressors must be integer coded")
        object.__setattr__(self, "y", _frozen(y.astype(np.int64)))
        object.__setattr__(self, "x", _frozen(x.astype(np.int64)))
        ids = tuple(self.ids) if len(self.ids) else tuple(range(1, n + 1))
        if len(ids) != n:
            raise ValidationError("ids must have one entry per unit")
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def T(self) -> int:
        return self.y.shape[1]

    @property
    def d(self) -> int:
        return self.x.shape[2]

    def take(self, rows) -> "PanelDataset":
        """Return the sub-panel (or resample) given by unit positions ``rows``."""
        rows = np.asarray(rows)
        return PanelDataset(self.y[rows], self.x[rows], tuple(range(1, rows.size + 1)))


@dataclass(frozen=True, eq=False)
class SupportIndex:
    """Ordered regressor histories ``X^1..X^K`` and outcome patterns ``Y^1..Y^J``.

    Parameters
    ----------
    histories : ndarray, shape (K, T, d)
    outcomes : ndarray, shape (J, T)
    """

    histories: np.ndarray
    outcomes: np.ndarray
    _hist_pos: dict = field(default=None, repr=False, compare=False)
    _out_pos: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        h = np.asarray(self.histories, dtype=np.int64)
        if h.ndim == 2:
            h = h[:, :, None]
        o = np.asarray(self.outcomes, dtype=np.int64)
        if h.ndim != 3 or o.ndim != 2 or h.shape[1] != o.shape[1]:
            raise ValidationError("histories (K, T, d) and outcomes (J, T) must share T")
        hist_pos = {row.tobytes(): i for i, row in enumerate(h.reshape(len(h), -1))}
        out_pos = {row.tobytes(): i for i, row in enumerate(o)}
        if len(hist_pos) != len(h) or len(out_pos) != len(o):
            raise ValidationError("histories and outcomes must be pairwise distinct")
        object.__setattr__(self, "histories", _frozen(h))
        object.__setattr__(self, "outcomes", _frozen(o))
        object.__setattr__(self, "_hist_pos", hist_pos)
        object.__setattr__(self, "_out_pos", out_pos)

    @property
    def K(self) -> int:
        return self.histories.shape[0]

    @property
    def J(self) -> int:
        return self.outcomes.shape[0]

    @property
    def T(self) -> int:
        return self.outcomes.shape[1]

    @property
    def d(self) -> int:
        return self.histories.shape[2]

    @classmethod
    def full_binary(cls, T: int, d: int = 1) -> "SupportIndex":
        """All ``2**(T*d)`` binary histories and all ``2**T`` binary outcomes."""
        hist = np.array(list(itertools.product((0, 1), repeat=T * d)), dtype=np.int64)
        return cls(hist.reshape(-1, T, d), binary_outcomes(T))

    def locate_histories(self, x: np.ndarray) -> np.ndarray:
        """History position of each unit; raises UnknownHistory if one is missing."""
        x = np.ascontiguousarray(np.asarray(x, dtype=np.int64).reshape(len(x), -1))
        pos = np.empty(len(x), dtype=np.int64)
        for i, row in enumerate(x):
            k = self._hist_pos.get(row.tobytes())
            if k is None:
                raise UnknownHistory(f"history {row.tolist()} of unit {i} is not in the support list")
            pos[i] = k
        return pos

    def locate_outcomes(self, y: np.ndarray) -> np.ndarray:
        y = np.ascontiguousarray(np.asarray(y, dtype=np.int64))
        pos = np.empty(len(y), dtype=np.int64)
        for i, row in enumerate(y):
            j = self._out_pos.get(row.tobytes())
            if j is None:
                raise UnknownHistory(f"outcome pattern {row.tolist()} of unit {i} is not enumerated")
            pos[i] = j
        return pos


def binary_outcomes(T: int) -> np.ndarray:
    """All ``2**T`` binary patterns in lexicographic order."""
    return np.array(list(itertools.product((0, 1), repeat=T)), dtype=np.int64).reshape(-1, T)


@dataclass(frozen=True, eq=False)
class CellProbabilities:
    """History masses ``P_k`` and conditional outcome masses ``P_jk``.

    Parameters
    ----------
    p_x : ndarray, shape (K,)
    p_y_given_x : ndarray, shape (K, J)
        Rows of absent histories are zero and flagged in ``present``.
    n_eff : float
        Sample size behind the frequencies, 0 for population objects.
    index : SupportIndex
    present : ndarray of bool, shape (K,), optional
        False marks histories with no observations. Defaults to ``p_x > 0``.
    """

    p_x: np.ndarray
    p_y_given_x: np.ndarray
    n_eff: float
    index: SupportIndex
    present: np.ndarray = None

    def __post_init__(self):
        px = np.asarray(self.p_x, dtype=float)
        py = np.asarray(self.p_y_given_x, dtype=float)
        if px.shape != (self.index.K,) or py.shape != (self.index.K, self.index.J):
            raise ValidationError("cell arrays do not match the support index")
        present = px > 0 if self.present is None else np.asarray(self.present, dtype=bool)
        if np.any(px < 0) or np.any(py < 0):
            raise ValidationError("cell probabilities must be nonnegative")
        if abs(px.sum() - 1.0) > ROW_SUM_TOL * max(1, len(px)):
            raise ValidationError("history masses must sum to one")
        sums = py.sum(axis=1)
        if np.any(np.abs(sums[present] - 1.0) > ROW_SUM_TOL * max(1, py.shape[1])):
            raise ValidationError("conditional outcome rows must sum to one")
        py = np.where(present[:, None], py, 0.0)
        object.__setattr__(self, "p_x", _frozen(px))
        object.__setattr__(self, "p_y_given_x", _frozen(py))
        object.__setattr__(self, "present", _frozen(present))

    @property
    def K(self) -> int:
        return self.index.K

    @property
    def J(self) -> int:
        return self.index.J

    def joint(self) -> np.ndarray:
        """Joint masses ``P_k * P_jk``, shape (K, J)."""
        return self.p_x[:, None] * self.p_y_given_x

    def with_rows(self, p_y_given_x: np.ndarray, n_eff: float | None = None) -> "CellProbabilities":
        """Copy with replaced conditional rows (same histories and masses)."""
        return CellProbabilities(
            self.p_x, p_y_given_x, self.n_eff if n_eff is None else n_eff, self.index, self.present
        )


@dataclass(frozen=True)
class EffectQuery:
    """Marginal effect of moving the regressor from ``x_bar`` to ``x_tilde``.

    Scalars are promoted to length-1 vectors.
    """

    x_tilde: tuple
    x_bar: tuple
    distance: float = 1.0

    def __post_init__(self):
        xt = tuple(int(v) for v in np.atleast_1d(self.x_tilde))
        xb = tuple(int(v) for v in np.atleast_1d(self.x_bar))
        if len(xt) != len(xb):
            raise ValidationError("x_tilde and x_bar must have the same dimension")
        if xt == xb:
            raise ValidationError("x_tilde and x_bar must differ")
        if not self.distance > 0:
            raise ValidationError("distance must be positive")
        object.__setattr__(self, "x_tilde", xt)
        object.__setattr__(self, "x_bar", xb)
        object.__setattr__(self, "distance", float(self.distance))

    def tilde_periods(self, history: np.ndarray) -> np.ndarray:
        """Boolean mask of periods at which ``history`` (T, d) equals ``x_tilde``."""
        return np.all(np.asarray(history).reshape(len(history), -1) == np.array(self.x_tilde), axis=1)

    def bar_periods(self, history: np.ndarray) -> np.ndarray:
        return np.all(np.asarray(history).reshape(len(history), -1) == np.array(self.x_bar), axis=1)


@dataclass(frozen=True, eq=False)
class CellMeans:
    """Per-history period means ``E[Y_t | X = X^k] / D``.

    Parameters
    ----------
    m_bar : ndarray, shape (K, T)
        Rows of absent histories are zero and flagged in ``present``.
    present : ndarray of bool, shape (K,)
    """

    m_bar: np.ndarray
    present: np.ndarray


def enumerate_support(dataset: PanelDataset, full_outcomes: bool = False) -> SupportIndex:
    """Distinct observed histories and outcome patterns in lexicographic order.

    Parameters
    ----------
    dataset : PanelDataset
    full_outcomes : bool
        Enumerate all ``2**T`` binary outcome patterns instead of the observed ones.

    Raises
    ------
    UnsupportedOutcomeAlphabet
        If ``full_outcomes`` is set and some outcome is not 0/1.
    """
    flat = dataset.x.reshape(dataset.n, -1)
    hist = np.unique(flat, axis=0).reshape(-1, dataset.T, dataset.d)
    if full_outcomes:
        if not np.all((dataset.y == 0) | (dataset.y == 1)):
            raise UnsupportedOutcomeAlphabet("full outcome enumeration needs binary outcomes")
        outcomes = binary_outcomes(dataset.T)
    else:
        outcomes = np.unique(dataset.y, axis=0)
    return SupportIndex(hist, outcomes)


def _history_counts(dataset: PanelDataset, index: SupportIndex):
    kpos = index.locate_histories(dataset.x)
    return kpos, np.bincount(kpos, minlength=index.K)


def cell_frequencies(dataset: PanelDataset, index: SupportIndex) -> CellProbabilities:
    """Sample proportions ``P_k`` and ``P_jk``.

    Histories listed in ``index`` but never observed get a zero row and
    ``present = False``.
    """
    kpos, nk = _history_counts(dataset, index)
    jpos = index.locate_outcomes(dataset.y)
    counts = np.zeros((index.K, index.J))
    np.add.at(counts, (kpos, jpos), 1.0)
    present = nk > 0
    py = np.divide(counts, nk[:, None], out=np.zeros_like(counts), where=present[:, None])
    return CellProbabilities(nk / dataset.n, py, dataset.n, index, present)


def cell_means(dataset: PanelDataset, index: SupportIndex, query: EffectQuery) -> CellMeans:
    """Sample means ``m_hat[k, t] = mean of Y_t over units with history k``, divided by D."""
    kpos, nk = _history_counts(dataset, index)
    sums = np.zeros((index.K, index.T))
    np.add.at(sums, kpos, dataset.y.astype(float))
    present = nk > 0
    m = np.divide(sums, nk[:, None], out=np.zeros_like(sums), where=present[:, None])
    return CellMeans(m / query.distance, present)


def population_cell_means(cells: CellProbabilities, query: EffectQuery) -> CellMeans:
    """Cell means implied by conditional outcome masses (numeric outcome codes)."""
    m = cells.p_y_given_x @ cells.index.outcomes.astype(float)
    return CellMeans(m / query.distance, cells.present.copy())


def read_panel_csv(path: str | Path) -> PanelDataset:
    """Load a long-format panel with header ``id,t,y,x1[,x2,...]``.

    Rows may come in any order. Every unit must have one row for each of the
    same set of periods.

    Raises
    ------
    ValidationError
        On a bad header, non-integer values or duplicate (id, t) rows.
    UnbalancedPanel
        If units do not share the same periods; ``rows`` lists the offenders.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        xcols = header[3:]
        if header[:3] != ["id", "t", "y"] or not xcols or xcols != [f"x{i + 1}" for i in range(len(xcols))]:
            raise ValidationError(f"{path}: header must be id,t,y,x1[,x2,...], got {','.join(header)}")
        units: dict = defaultdict(dict)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                uid, t, y, *xs = (int(c) for c in row)
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: values must be integers") from None
            if t in units[uid]:
                raise ValidationError(f"{path}:{lineno}: duplicate row for id={uid}, t={t}")
            units[uid][t] = (lineno, y, xs)
    if not units:
        raise ValidationError(f"{path}: no data rows")
    periods = sorted(set().union(*(u.keys() for u in units.values())))
    bad = []
    for uid, obs in units.items():
        missing = [t for t in periods if t not in obs]
        if missing:
            lines = sorted(v[0] for v in obs.values())
            bad.append(f"id={uid} (lines {lines}) missing t={missing}")
    if bad:
        raise UnbalancedPanel(f"{path}: unbalanced panel, {len(bad)} unit(s) with missing periods", bad)
    ids = sorted(units)
    y = np.array([[units[u][t][1] for t in periods] for u in ids], dtype=np.int64)
    x = np.array([[units[u][t][2] for t in periods] for u in ids], dtype=np.int64)
    return PanelDataset(y, x, tuple(ids))


def write_panel_csv(dataset: PanelDataset, path: str | Path) -> None:
    """Write ``dataset`` in the long format read by :func:`read_panel_csv`."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "t", "y"] + [f"x{i + 1}" for i in range(dataset.d)])
        for i, uid in enumerate(dataset.ids):
            for t in range(dataset.T):
                w.writerow([uid, t + 1, int(dataset.y[i, t])] + [int(v) for v in dataset.x[i, t]])
