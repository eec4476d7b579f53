"""Univariate imputation methods.

Each method takes the observed responses ``y_o`` with their design rows
``X_o``, the design rows ``X_m`` of the cells to fill, and a random stream,
and returns one simulated value per row of ``X_m``. Parameter uncertainty is
propagated by drawing the model parameters before drawing the values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import statkernel as sk
from .errors import FitError

GAUSSIAN = "gaussian"
PMM = "pmm"
INTERVAL = "interval"
POISSON = "poisson"
LOGIT = "logit"
ORDERED = "ordered"
MULTINOMIAL = "multinomial"
TWO_PART = "two_part"

METHODS = (GAUSSIAN, PMM, INTERVAL, POISSON, LOGIT, ORDERED, MULTINOMIAL, TWO_PART)
CONTINUOUS = (GAUSSIAN, PMM, INTERVAL)
_GLM_FAMILY = {
    POISSON: sk.Family.POISSON,
    LOGIT: sk.Family.LOGIT,
    ORDERED: sk.Family.ORDERED_LOGIT,
    MULTINOMIAL: sk.Family.MULTINOMIAL_LOGIT,
}


@dataclass(frozen=True)
class ImputerSpec:
    """Method for one variable.

    ``q`` is the PMM donor-pool size. ``transform='log'`` fits on the log of
    the response and maps draws back with ``exp`` (PMM returns the donor's
    untransformed value). For ``two_part`` the ownership step is always a
    logit and ``amount`` gives the method for the positive part.
    """

    method: str
    q: int = 10
    transform: str = "none"
    amount: "ImputerSpec | None" = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown imputation method {self.method!r}")
        if self.q < 1:
            raise ValueError("PMM needs q >= 1")
        if self.transform not in ("none", "log"):
            raise ValueError(f"unknown transform {self.transform!r}")
        if self.method == TWO_PART:
            if self.amount is None or self.amount.method not in CONTINUOUS:
                raise ValueError("two_part needs a continuous amount method")

    def with_q(self, q):
        amount = self.amount.with_q(q) if self.amount is not None else None
        return ImputerSpec(self.method, q, self.transform, amount)


def _empty(X_m):
    return np.asarray(X_m).shape[0] == 0


def impute_gaussian(y_o, X_o, X_m, rng):
    """Posterior-predictive draws from the normal linear model."""
    X_m = np.asarray(X_m, float)
    if _empty(X_m):
        return np.empty(0)
    fit = sk.fit_linear(y_o, X_o)
    beta, sigma2 = sk.draw_linear_posterior(fit, rng)
    mean = X_m @ beta
    if sigma2 == 0:
        return mean
    return mean + np.sqrt(sigma2) * rng.standard_normal(mean.size)


def pmm_donors(y_o, X_o, X_m, q, rng):
    """Indices into ``y_o`` of the donors chosen by predictive mean matching.

    Donor candidates for a missing row are the ``q`` observed rows with the
    smallest ``|x_m' beta* - x_j' beta_hat|``, ties going to the earlier row;
    one candidate is drawn uniformly.
    """
    X_o = np.asarray(X_o, float)
    X_m = np.asarray(X_m, float)
    n_o = X_o.shape[0]
    if n_o < q:
        raise FitError(f"PMM needs at least q={q} donors, found {n_o}")
    if _empty(X_m):
        return np.empty(0, dtype=int)
    fit = sk.fit_linear(y_o, X_o)
    beta_star, _ = sk.draw_linear_posterior(fit, rng)
    pred_o = X_o @ fit.beta_hat
    pred_m = X_m @ beta_star
    picks = rng.integers(0, q, size=pred_m.size)
    donors = np.empty(pred_m.size, dtype=int)
    for i, target in enumerate(pred_m):
        d = np.abs(target - pred_o)
        if q < n_o:
            cutoff = np.partition(d, q - 1)[q - 1]
            cand = np.flatnonzero(d <= cutoff)
        else:
            cand = np.arange(n_o)
        cand = cand[np.argsort(d[cand], kind="stable")[:q]]
        donors[i] = cand[picks[i]]
    return donors


def impute_pmm(y_o, X_o, X_m, q, rng):
    """Predictive mean matching; every value is copied from an observed donor."""
    donors = pmm_donors(y_o, X_o, X_m, q, rng)
    return np.asarray(y_o, float)[donors]


def impute_interval(y_o, X_o, X_m, bounds, rng):
    """Interval-regression draws truncated to each missing row's bounds.

    ``y_o`` is either an array of point observations or a ``(lo, hi)`` pair of
    arrays for interval/censored observations. ``bounds`` is a ``(lo, hi)``
    pair with one entry per row of ``X_m``; a row with ``lo == hi`` is set to
    that value.
    """
    X_m = np.asarray(X_m, float)
    if _empty(X_m):
        return np.empty(0)
    if isinstance(y_o, tuple):
        ylo, yhi = (np.asarray(v, float) for v in y_o)
    else:
        ylo = yhi = np.asarray(y_o, float)
    lo, hi = (np.asarray(v, float) for v in bounds)
    if lo.shape != (X_m.shape[0],) or hi.shape != lo.shape:
        raise ValueError("one (lo, hi) bound pair per missing row is required")
    if np.any(lo > hi):
        raise FitError("empty imputation interval (lo > hi)")
    fit = sk.fit_interval_regression(ylo, yhi, X_o)
    factor = sk._psd_factor(fit.covariance)
    theta = fit.params + factor @ rng.standard_normal(fit.params.size)
    beta, sigma = theta[:-1], float(np.exp(theta[-1]))
    mean = X_m @ beta
    out = lo.copy()
    open_rows = lo < hi
    if open_rows.any():
        out[open_rows] = sk.sample_truncated_normal(
            mean[open_rows], sigma, lo[open_rows], hi[open_rows], rng
        )
    return out


def _non_constant(X_o, X_m):
    keep = np.ptp(X_o, axis=0) > 0
    return X_o[:, keep], X_m[:, keep]


def impute_glm(family, y_o, X_o, X_m, rng):
    """Draw from a logit, Poisson, ordered or multinomial logit model.

    Categorical fits are always run on the augmented data of
    :func:`statkernel.augment_perfect_prediction`. For ordered logit the
    columns constant over ``X_o`` (the intercept) are dropped since the
    cutpoints take their role.
    """
    family = sk.Family(family)
    X_o = np.asarray(X_o, float)
    X_m = np.asarray(X_m, float)
    if _empty(X_m):
        return np.empty(0)
    y_o = np.asarray(y_o, float)
    if family is sk.Family.ORDERED_LOGIT:
        X_o, X_m = _non_constant(X_o, X_m)
        if X_o.shape[1] == 0:
            X_o = np.zeros((X_o.shape[0], 1))
            X_m = np.zeros((X_m.shape[0], 1))
    if family is not sk.Family.LOGIT and family in sk.CATEGORICAL and np.unique(y_o).size == 1:
        return np.full(X_m.shape[0], y_o[0])
    weights = None
    y_fit, X_fit = y_o, X_o
    if family in sk.CATEGORICAL:
        y_fit, X_fit, weights = sk.augment_perfect_prediction(y_o, X_o, family)
    fit = sk.fit_glm(family, y_fit, X_fit, weights)
    params = sk.draw_glm_params(fit, rng)
    if family is sk.Family.ORDERED_LOGIT:
        k = fit.n_features
        params = np.concatenate([params[:k], np.sort(params[k:])])
    if family is sk.Family.POISSON:
        lam = np.exp(np.clip(X_m @ params, None, 700.0))
        return rng.poisson(lam).astype(float)
    if family is sk.Family.LOGIT:
        p = fit.predict(X_m, params)
        return (rng.random(p.size) < p).astype(float)
    probs = fit.predict(X_m, params)
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(probs.shape[0])
    idx = (u[:, None] > cdf).sum(axis=1)
    return fit.categories[np.minimum(idx, fit.categories.size - 1)]


def impute_two_part(spec: ImputerSpec, y_o, X_o, X_m, rng, bounds=None):
    """Logit for zero-vs-positive, then ``spec.amount`` on the positive rows.

    The amount model is fitted on the positive observed rows only. When the
    observed ownership is constant the selection step is degenerate: all
    zeros, or all positive.
    """
    X_o = np.asarray(X_o, float)
    X_m = np.asarray(X_m, float)
    y_o = np.asarray(y_o, float)
    if np.any(y_o < 0):
        raise FitError("two-part response must be non-negative")
    if _empty(X_m):
        return np.empty(0)
    owned = (y_o > 0).astype(float)
    if not owned.any():
        return np.zeros(X_m.shape[0])
    if owned.all():
        draw_owned = np.ones(X_m.shape[0])
    else:
        draw_owned = impute_glm(sk.Family.LOGIT, owned, X_o, X_m, rng)
    out = np.zeros(X_m.shape[0])
    pos = draw_owned == 1
    if pos.any():
        sub_bounds = None
        if bounds is not None:
            sub_bounds = tuple(np.asarray(b, float)[pos] for b in bounds)
        keep = y_o > 0
        out[pos] = draw(spec.amount, y_o[keep], X_o[keep], X_m[pos], rng, sub_bounds)
    return out


def draw(spec: ImputerSpec, y_o, X_o, X_m, rng, bounds=None):
    """Dispatch to the method in ``spec``, applying its response transform."""
    y_o = np.asarray(y_o, float)
    X_m = np.asarray(X_m, float)
    if _empty(X_m):
        return np.empty(0)
    method = spec.method
    if method == TWO_PART:
        return impute_two_part(spec, y_o, X_o, X_m, rng, bounds)
    log = spec.transform == "log"
    if log and np.any(y_o <= 0):
        raise FitError("log transform needs strictly positive responses")
    y_fit = np.log(y_o) if log else y_o
    if method == PMM:
        return y_o[pmm_donors(y_fit, X_o, X_m, spec.q, rng)]
    if method == GAUSSIAN:
        vals = impute_gaussian(y_fit, X_o, X_m, rng)
    elif method == INTERVAL:
        if bounds is None:
            bounds = (np.full(X_m.shape[0], -np.inf), np.full(X_m.shape[0], np.inf))
        if log:
            with np.errstate(divide="ignore"):
                bounds = tuple(np.log(np.asarray(b, float)) for b in bounds)
        vals = impute_interval(y_fit, X_o, X_m, bounds, rng)
    else:
        return impute_glm(_GLM_FAMILY[method], y_o, X_o, X_m, rng)
    return np.exp(vals) if log else vals
