"""Binary-choice likelihood kernels with a scalar location effect.

The conditional probability of an outcome pattern ``Y`` given a regressor
history ``X``, individual effect ``alpha`` and slope ``beta`` is the product
over periods of ``F(X_t'beta + alpha)`` for ones and ``1 - F(.)`` for zeros.
The effect ``alpha`` may be infinite; the kernels select factors instead of
raising to powers, so ``0**0`` never occurs and the boundary masses are
exactly 0 or 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ValidationError
from .panel_core import EffectQuery, SupportIndex

# switch to log-domain products from this many periods on
LOG_DOMAIN_T = 20


def logit_cdf(x):
    """Logistic CDF, exact at +-inf and stable for large ``|x|``."""
    return special.expit(x)


def probit_cdf(x):
    """Standard normal CDF, exact at +-inf."""
    return special.ndtr(x)


def _logit_pdf(x):
    p = special.expit(x)
    return p * special.expit(-np.asarray(x, dtype=float))


def _probit_pdf(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class LinkFunction:
    """Symmetric CDF ``F`` linking the latent index to choice probabilities.

    Parameters
    ----------
    kind : {"logit", "probit"}
    """

    kind: str

    def __post_init__(self):
        if self.kind not in ("logit", "probit"):
            raise ValidationError(f"unknown link {self.kind!r}; use 'logit' or 'probit'")

    def cdf(self, x):
        return logit_cdf(x) if self.kind == "logit" else probit_cdf(x)

    def pdf(self, x):
        return _logit_pdf(x) if self.kind == "logit" else _probit_pdf(x)

    def log_cdf(self, x):
        """``log F(x)`` without underflow for very negative ``x``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "logit":
            return -np.logaddexp(0.0, -x)
        return special.log_ndtr(x)

    def hazard(self, x):
        """``f(x) / F(x)``, the derivative of ``log F``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "logit":
            return special.expit(-x)
        with np.errstate(over="ignore", invalid="ignore"):
            out = np.exp(-0.5 * x * x - 0.5 * np.log(2 * np.pi) - special.log_ndtr(x))
        # asymptotic value for the far left tail, where both logs underflow
        return np.where(x < -37.0, -x, out)

    def hazard_slope(self, x):
        """Derivative of :meth:`hazard`; negative because ``F`` is log-concave."""
        x = np.asarray(x, dtype=float)
        if self.kind == "logit":
            return -_logit_pdf(x)
        h = self.hazard(x)
        return -h * (x + h)


LOGIT = LinkFunction("logit")
PROBIT = LinkFunction("probit")


def as_link(link) -> LinkFunction:
    return link if isinstance(link, LinkFunction) else LinkFunction(str(link))


@dataclass(frozen=True)
class LikelihoodKernel:
    """Likelihood of the enumerated outcome patterns for each history.

    Parameters
    ----------
    link : LinkFunction
    index : SupportIndex
        Outcomes must be binary.
    """

    link: LinkFunction
    index: SupportIndex

    def __post_init__(self):
        object.__setattr__(self, "link", as_link(self.link))
        if not np.all((self.index.outcomes == 0) | (self.index.outcomes == 1)):
            raise ValidationError("likelihood kernels need binary outcomes")

    def linear_index(self, beta) -> np.ndarray:
        """``X_t^k' beta`` for every history and period, shape (K, T).

        ``beta`` may also be a grid of shape (G, d), giving shape (G, K, T).
        """
        beta = np.asarray(beta, dtype=float)
        d = self.index.d
        hist = self.index.histories.astype(float)
        if beta.ndim <= 1:
            b = np.atleast_1d(beta)
            if b.shape != (d,):
                raise ValidationError(f"beta has dimension {b.size}, regressors have {d}")
            return hist @ b
        if beta.shape[-1] != d:
            raise ValidationError(f"beta has dimension {beta.shape[-1]}, regressors have {d}")
        return np.einsum("ktd,gd->gkt", hist, beta)


def _pattern_product(prob_one, prob_zero, outcomes, log_domain):
    """Product over periods selecting ``prob_one`` where Y=1, else ``prob_zero``.

    ``prob_*`` have shape (..., T, M); returns shape (..., J, M).
    """
    y = outcomes.astype(bool)  # (J, T)
    T = y.shape[1]
    ones = prob_one[..., None, :, :]
    zeros = prob_zero[..., None, :, :]
    sel = y[..., None]  # (J, T, 1)
    if not log_domain:
        out = np.where(sel[:, 0], ones[..., 0, :], zeros[..., 0, :])
        for t in range(1, T):
            out = out * np.where(sel[:, t], ones[..., t, :], zeros[..., t, :])
        return out
    with np.errstate(divide="ignore"):
        lo = np.log(ones)
        lz = np.log(zeros)
    acc = np.where(sel[:, 0], lo[..., 0, :], lz[..., 0, :])
    for t in range(1, T):
        acc = acc + np.where(sel[:, t], lo[..., t, :], lz[..., t, :])
    return np.exp(acc)


def likelihood_tensor(kernel: LikelihoodKernel, alphas, beta) -> np.ndarray:
    """Likelihood of every (history, outcome, effect) triple.

    Parameters
    ----------
    kernel : LikelihoodKernel
    alphas : array_like, shape (M,)
        Effect values; may contain +-inf.
    beta : array_like, shape (d,) or (G, d)

    Returns
    -------
    ndarray
        Shape (K, J, M), or (G, K, J, M) for a grid of ``beta``.
    """
    alphas = np.asarray(alphas, dtype=float)
    z = kernel.linear_index(beta)[..., None] + alphas  # (..., K, T, M)
    F = kernel.link.cdf
    return _pattern_product(F(z), F(-z), kernel.index.outcomes, kernel.index.T >= LOG_DOMAIN_T)


def likelihood(kernel: LikelihoodKernel, j: int, k: int, alpha: float, beta) -> float:
    """Probability of outcome pattern ``j`` given history ``k``, ``alpha`` and ``beta``."""
    z = kernel.linear_index(beta)[k] + float(alpha)  # (T,)
    y = kernel.index.outcomes[j].astype(bool)
    F = kernel.link.cdf
    p = np.where(y, F(z), F(-z))
    if kernel.index.T >= LOG_DOMAIN_T:
        with np.errstate(divide="ignore"):
            return float(np.exp(np.sum(np.log(p))))
    return float(np.prod(p))


def effect_integrand(kernel: LikelihoodKernel, alpha, beta, query: EffectQuery):
    """``[F(x_tilde'beta + alpha) - F(x_bar'beta + alpha)] / D``.

    Vectorized over ``alpha``. Zero at infinite ``alpha``.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    alpha = np.asarray(alpha, dtype=float)
    if beta.shape[-1] != len(query.x_tilde):
        raise ValidationError("beta and query dimensions differ")
    F = kernel.link.cdf
    hi = np.asarray(query.x_tilde, dtype=float) @ beta.T
    lo = np.asarray(query.x_bar, dtype=float) @ beta.T
    hi = np.asarray(hi)[..., None] if beta.ndim > 1 else hi
    lo = np.asarray(lo)[..., None] if beta.ndim > 1 else lo
    out = (F(hi + alpha) - F(lo + alpha)) / query.distance
    # both terms saturate at infinite alpha; the difference must be exactly 0
    return np.where(np.isinf(alpha), 0.0, out)


def cell_likelihood(kernel: LikelihoodKernel, alpha, beta) -> np.ndarray:
    """Likelihood of pattern ``j`` given history ``k`` at its own effect ``alpha[k, j]``.

    Parameters
    ----------
    alpha : array_like, shape (K, J)

    Returns
    -------
    ndarray, shape (K, J)
    """
    alpha = np.asarray(alpha, dtype=float)
    u = kernel.linear_index(beta)[:, None, :] + alpha[:, :, None]  # (K, J, T)
    y = kernel.index.outcomes.astype(bool)[None]
    F = kernel.link.cdf
    p = np.where(y, F(u), F(-u))
    if kernel.index.T >= LOG_DOMAIN_T:
        with np.errstate(divide="ignore"):
            return np.exp(np.log(p).sum(axis=-1))
    return p.prod(axis=-1)
