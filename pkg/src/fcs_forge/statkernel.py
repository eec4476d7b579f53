"""Estimators and random draws that the univariate imputers are built on.

Linear least squares, Newton/IRLS fits for logit, Poisson, ordered logit and
multinomial logit, maximum-likelihood interval regression, the parameter
draws used to propagate estimation uncertainty, and truncated normal sampling.

All random draws go through a ``numpy.random.Generator`` backed by PCG64
(see :func:`make_rng`), so a fixed seed replays the same sequence.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import linalg, optimize, special

from .errors import ConvergenceError, FitError, RankDeficientError, SeparationError

RANK_TOL = 1e-10
SCORE_TOL = 1e-8
LOGLIK_RTOL = 1e-10
MAX_ITER = 100
SEPARATION_EPS = 1e-10
SEPARATION_STREAK = 3
PSEUDO_WEIGHT = 0.01


def make_rng(seed: int) -> np.random.Generator:
    """Return the package's random stream: PCG64 seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(int(seed)))


class Family(str, Enum):
    LOGIT = "logit"
    POISSON = "poisson"
    ORDERED_LOGIT = "ordered_logit"
    MULTINOMIAL_LOGIT = "multinomial_logit"


CATEGORICAL = (Family.LOGIT, Family.ORDERED_LOGIT, Family.MULTINOMIAL_LOGIT)


def _column_names(names, k):
    if names is None:
        return [f"x{i}" for i in range(k)]
    names = list(names)
    if len(names) != k:
        raise ValueError(f"{len(names)} names given for {k} columns")
    return names


def _as_design(X, weights=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("design must be a 2-d array with at least one column")
    if not np.all(np.isfinite(X)):
        raise ValueError("design matrix contains non-finite entries")
    if weights is None:
        return X, np.ones(X.shape[0])
    w = np.asarray(weights, dtype=float)
    if w.shape != (X.shape[0],) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite, non-negative and one per row")
    return X, w


# -- linear model ---------------------------------------------------------


@dataclass
class LinearFit:
    beta_hat: np.ndarray
    sigma2_hat: float
    xtx_inverse: np.ndarray
    dof: int
    names: list


def fit_linear(y, X, names=None) -> LinearFit:
    """Least-squares fit via column-pivoted QR.

    Raises ``RankDeficientError`` naming the columns whose pivot falls below
    ``RANK_TOL`` times the largest pivot.
    """
    X, _ = _as_design(X)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    names = _column_names(names, k)
    if y.shape != (n,) or not np.all(np.isfinite(y)):
        raise ValueError("response must be finite with one value per design row")
    if n <= k:
        raise FitError(f"need more observations than columns (n={n}, k={k})")
    q, r, piv = linalg.qr(X, mode="economic", pivoting=True)
    pivots = np.abs(np.diag(r))
    bad = pivots <= RANK_TOL * pivots[0] if pivots[0] > 0 else np.ones(k, bool)
    if bad.any():
        raise RankDeficientError([names[piv[i]] for i in np.flatnonzero(bad)])
    coef = linalg.solve_triangular(r, q.T @ y)
    beta = np.empty(k)
    beta[piv] = coef
    resid = y - X @ beta
    rss = float(resid @ resid)
    # exact fits leave only rounding noise in the residuals
    if rss <= (1e-12 * max(1.0, float(np.linalg.norm(y)))) ** 2:
        rss = 0.0
    rinv = linalg.solve_triangular(r, np.eye(k))
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(piv, piv)] = rinv @ rinv.T
    xtx_inv = 0.5 * (xtx_inv + xtx_inv.T)
    dof = n - k
    return LinearFit(beta, rss / dof, xtx_inv, dof, names)


def draw_linear_posterior(fit: LinearFit, rng: np.random.Generator):
    """Draw ``(beta*, sigma2*)`` from the posterior under a flat prior.

    ``sigma2* = sigma2_hat * dof / chi2_dof`` and
    ``beta* | sigma2* ~ N(beta_hat, sigma2* (X'X)^-1)``.
    """
    if fit.dof < 1:
        raise FitError("posterior draw needs at least one residual degree of freedom")
    if fit.sigma2_hat == 0:
        warnings.warn("zero residual variance; returning the point estimate", RuntimeWarning)
        return fit.beta_hat.copy(), 0.0
    sigma2 = fit.sigma2_hat * fit.dof / rng.chisquare(fit.dof)
    chol = np.linalg.cholesky(fit.xtx_inverse)
    z = rng.standard_normal(fit.beta_hat.size)
    return fit.beta_hat + np.sqrt(sigma2) * (chol @ z), float(sigma2)


# -- generalized linear models ----------------------------------------------


@dataclass
class GlmFit:
    family: Family
    beta_hat: np.ndarray
    covariance: np.ndarray
    converged: bool
    log_likelihood: float
    n_iter: int
    n_features: int
    categories: np.ndarray | None = None
    names: list | None = None

    def unpack(self, params=None):
        """Split a flat parameter vector into its family-specific pieces.

        Logit/Poisson: the coefficient vector. Ordered logit: ``(beta,
        cutpoints)``. Multinomial logit: a ``(k, K-1)`` coefficient matrix with
        the first category as reference.
        """
        p = self.beta_hat if params is None else np.asarray(params, float)
        k = self.n_features
        if self.family is Family.ORDERED_LOGIT:
            return p[:k], p[k:]
        if self.family is Family.MULTINOMIAL_LOGIT:
            return p.reshape(-1, k).T
        return p

    def predict(self, X, params=None):
        """Fitted means (logit/Poisson) or ``(n, K)`` category probabilities."""
        X = np.asarray(X, float)
        if X.ndim == 1:
            X = X[:, None]
        if self.family is Family.LOGIT:
            return special.expit(X @ self.unpack(params))
        if self.family is Family.POISSON:
            return np.exp(X @ self.unpack(params))
        if self.family is Family.ORDERED_LOGIT:
            beta, cuts = self.unpack(params)
            return _ordered_probabilities(X @ beta, np.sort(cuts))
        B = self.unpack(params)
        eta = np.column_stack([np.zeros(X.shape[0]), X @ B])
        return special.softmax(eta, axis=1)


def _ordered_probabilities(eta, cuts):
    cdf = special.expit(cuts[None, :] - eta[:, None])
    upper = np.column_stack([cdf, np.ones(eta.size)])
    lower = np.column_stack([np.zeros(eta.size), cdf])
    return np.clip(upper - lower, 0.0, 1.0)


def _category_codes(y, family):
    y = np.asarray(y, dtype=float)
    if family is Family.LOGIT:
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("logit response must be 0/1")
        return np.array([0.0, 1.0]), y.astype(int)
    cats = np.unique(y)
    if cats.size < 2:
        raise FitError(f"{family.value} needs at least two observed categories")
    return cats, np.searchsorted(cats, y)


def _logit_terms(params, X, y, w):
    eta = X @ params
    ll = float(np.sum(w * (y * eta - np.logaddexp(0.0, eta))))
    p = special.expit(eta)
    grad = X.T @ (w * (y - p))
    hess = -(X * (w * p * (1 - p))[:, None]).T @ X
    return ll, grad, hess, p


def _poisson_terms(params, X, y, w):
    eta = X @ params
    mu = np.exp(eta)
    ll = float(np.sum(w * (y * eta - mu - special.gammaln(y + 1))))
    grad = X.T @ (w * (y - mu))
    hess = -(X * (w * mu)[:, None]).T @ X
    return ll, grad, hess, None


def _ordered_terms(params, X, codes, w, n_cat):
    n, k = X.shape
    beta, cuts = params[:k], params[k:]
    if np.any(np.diff(cuts) <= 0):
        return -np.inf, None, None, None
    eta = X @ beta
    has_a = codes < n_cat - 1
    has_b = codes > 0
    a = np.where(has_a, cuts[np.minimum(codes, n_cat - 2)] - eta, np.inf)
    b = np.where(has_b, cuts[np.maximum(codes - 1, 0)] - eta, -np.inf)
    Fa, Fb = special.expit(a), special.expit(b)
    # P(y=k) = F(a) - F(b); use the complementary form in the upper tail
    prob = np.where(b > 0, special.expit(-b) - special.expit(-a), Fa - Fb)
    prob = np.maximum(prob, 1e-300)
    fa = np.where(has_a, Fa * (1 - Fa), 0.0)
    fb = np.where(has_b, Fb * (1 - Fb), 0.0)
    dfa = fa * (1 - 2 * Fa)
    dfb = fb * (1 - 2 * Fb)
    P = k + n_cat - 1
    Ea = np.zeros((n, P))
    Eb = np.zeros((n, P))
    Ea[:, :k] = -X
    Eb[:, :k] = -X
    rows = np.arange(n)
    Ea[rows[has_a], k + codes[has_a]] = 1.0
    Eb[rows[has_b], k + codes[has_b] - 1] = 1.0
    Ea[~has_a] = 0.0
    Eb[~has_b] = 0.0
    dp = fa[:, None] * Ea - fb[:, None] * Eb
    ll = float(np.sum(w * np.log(prob)))
    grad = dp.T @ (w / prob)
    hess = (
        (Ea * (w * dfa / prob)[:, None]).T @ Ea
        - (Eb * (w * dfb / prob)[:, None]).T @ Eb
        - (dp * (w / prob**2)[:, None]).T @ dp
    )
    return ll, grad, hess, prob


def _multinomial_terms(params, X, codes, w, n_cat):
    n, k = X.shape
    B = params.reshape(n_cat - 1, k).T
    eta = np.column_stack([np.zeros(n), X @ B])
    logp = eta - special.logsumexp(eta, axis=1, keepdims=True)
    P = np.exp(logp)
    ll = float(np.sum(w * logp[np.arange(n), codes]))
    Y = np.zeros((n, n_cat))
    Y[np.arange(n), codes] = 1.0
    resid = (Y - P)[:, 1:] * w[:, None]
    grad = (X.T @ resid).T.ravel()
    m = n_cat - 1
    hess = np.empty((m * k, m * k))
    for j in range(m):
        for l in range(j, m):
            delta = 1.0 if j == l else 0.0
            c = w * P[:, j + 1] * (delta - P[:, l + 1])
            block = -(X * c[:, None]).T @ X
            hess[j * k:(j + 1) * k, l * k:(l + 1) * k] = block
            hess[l * k:(l + 1) * k, j * k:(j + 1) * k] = block.T
    return ll, grad, hess, P[np.arange(n), codes]


def _newton_direction(grad, hess):
    info = -hess
    try:
        c = linalg.cho_factor(info)
        return linalg.cho_solve(c, grad)
    except linalg.LinAlgError:
        return np.linalg.lstsq(info, grad, rcond=None)[0]


def _extreme(fitted):
    if fitted is None:
        return False
    return bool(np.any(fitted < SEPARATION_EPS) or np.any(fitted > 1 - SEPARATION_EPS))


def _recession_rows(family, X, codes, n_cat):
    """Linear forms in a direction ``d`` that are >= 0 when every row's
    log-likelihood stays non-decreasing along ``d``; extra forms only order cutpoints."""
    n, k = X.shape
    if family is Family.LOGIT:
        return (2.0 * codes - 1.0)[:, None] * X, np.empty((0, k))
    if family is Family.MULTINOMIAL_LOGIT:
        m = n_cat - 1
        rows = []
        for c in range(n_cat):
            sel = X[codes == c]
            for j in range(n_cat):
                if j == c:
                    continue
                r = np.zeros((sel.shape[0], m * k))
                if c > 0:
                    r[:, (c - 1) * k:c * k] += sel
                if j > 0:
                    r[:, (j - 1) * k:j * k] -= sel
                rows.append(r)
        return np.vstack(rows), np.empty((0, m * k))
    m = n_cat - 1
    upper = codes < m
    lower = codes > 0
    ru = np.zeros((int(upper.sum()), k + m))
    ru[:, :k] = -X[upper]
    ru[np.arange(ru.shape[0]), k + codes[upper]] = 1.0
    rl = np.zeros((int(lower.sum()), k + m))
    rl[:, :k] = X[lower]
    rl[np.arange(rl.shape[0]), k + codes[lower] - 1] = -1.0
    order = np.zeros((m - 1, k + m))
    for j in range(m - 1):
        order[j, k + j], order[j, k + j + 1] = -1.0, 1.0
    return np.vstack([ru, rl]), order


def has_separation(family, y, X, weights=None) -> bool:
    """Exact check for (quasi-)complete separation of a categorical GLM.

    The MLE fails to exist exactly when some direction raises at least one
    row's log-likelihood while lowering none. That is a linear feasibility
    problem, solved with ``scipy.optimize.linprog`` over a unit box.
    """
    family = Family(family)
    if family is Family.POISSON:
        raise ValueError("separation check applies to categorical families")
    X, w = _as_design(X, weights)
    cats, codes = _category_codes(y, family)
    keep = w > 0
    X, codes = X[keep], codes[keep]
    scale = np.max(np.abs(X), axis=0)
    X = X / np.where(scale > 0, scale, 1.0)
    rows, order = _recession_rows(family, X, codes, cats.size)
    A = np.vstack([rows, order])
    res = optimize.linprog(-rows.sum(axis=0), A_ub=-A, b_ub=np.zeros(A.shape[0]),
                           bounds=[(-1.0, 1.0)] * A.shape[1], method="highs")
    if res.status != 0:
        return False
    slack = rows @ res.x
    return bool(slack.max() > 1e-6 and slack.min() > -1e-7)


def fit_glm(family, y, X, weights=None, names=None) -> GlmFit:
    """Maximum-likelihood GLM fit by Newton steps with step halving.

    ``family`` is a :class:`Family` (or its string value). The design ``X``
    must carry its own intercept for logit, Poisson and multinomial fits and
    must *not* carry one for ordered logit (cutpoints absorb it).

    Converges when the largest absolute score falls below ``SCORE_TOL`` or the
    relative log-likelihood change falls below ``LOGLIK_RTOL``. The covariance
    is the inverse observed information at the optimum.
    """
    family = Family(family)
    X, w = _as_design(X, weights)
    n, k = X.shape
    names = _column_names(names, k)
    y = np.asarray(y, dtype=float)
    if y.shape != (n,):
        raise ValueError("response must have one value per design row")
    categories = None
    if family is Family.POISSON:
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise ValueError("Poisson response must be non-negative integers")
        ybar = np.average(y, weights=w)
        if ybar <= 0:
            raise SeparationError("all counts are zero; the Poisson intercept diverges")
        x0 = np.linalg.lstsq(X, np.full(n, np.log(ybar)), rcond=None)[0]

        def terms(p):
            return _poisson_terms(p, X, y, w)
    elif family is Family.LOGIT:
        categories, codes = _category_codes(y, family)
        yy = codes.astype(float)
        x0 = np.zeros(k)

        def terms(p):
            return _logit_terms(p, X, yy, w)
    else:
        categories, codes = _category_codes(y, family)
        n_cat = categories.size
        if family is Family.ORDERED_LOGIT:
            share = np.cumsum(np.bincount(codes, weights=w, minlength=n_cat))[:-1] / w.sum()
            share = np.clip(share, 1e-6, 1 - 1e-6)
            x0 = np.concatenate([np.zeros(k), special.logit(share)])
            if np.any(np.diff(x0[k:]) <= 0):
                x0[k:] = np.linspace(-1, 1, n_cat - 1)

            def terms(p):
                return _ordered_terms(p, X, codes, w, n_cat)
        else:
            x0 = np.zeros(k * (n_cat - 1))

            def terms(p):
                return _multinomial_terms(p, X, codes, w, n_cat)

    params = x0
    ll, grad, hess, fitted = terms(params)
    if not np.isfinite(ll):
        raise FitError("starting values have zero likelihood")
    converged = False
    prev_step = None
    streak = 0
    finite_mle = None

    def separated():
        nonlocal finite_mle
        if finite_mle is None:
            finite_mle = family is Family.POISSON or not has_separation(family, y, X, w)
        return not finite_mle

    it = 0
    for it in range(1, MAX_ITER + 1):
        if np.max(np.abs(grad)) < SCORE_TOL:
            converged = True
            break
        step = _newton_direction(grad, hess)
        scale = 1.0
        for _ in range(50):
            cand = params + scale * step
            res = terms(cand)
            if np.isfinite(res[0]) and res[0] >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            scale *= 0.5
        else:
            raise ConvergenceError(f"{family.value}: line search failed", last_iterate=params)
        ll_new, grad, hess, fitted = res
        step_size = float(np.max(np.abs(scale * step)))
        params = cand
        # diverging: extreme fits while Newton steps stop shrinking, several times running
        if _extreme(fitted) and prev_step is not None and step_size > 0.5 * prev_step:
            streak += 1
            if streak >= SEPARATION_STREAK and separated():
                raise SeparationError()
        else:
            streak = 0
        prev_step = step_size
        rel = abs(ll_new - ll) / max(abs(ll_new), 1e-300)
        ll = ll_new
        if rel < LOGLIK_RTOL and np.max(np.abs(grad)) < 1e-6:
            converged = True
            break
    if not converged:
        if _extreme(fitted) and separated():
            raise SeparationError()
        raise ConvergenceError(
            f"{family.value} did not converge in {MAX_ITER} iterations", last_iterate=params
        )
    cov = np.linalg.pinv(-hess, hermitian=True)
    cov = 0.5 * (cov + cov.T)
    return GlmFit(family, params, cov, True, ll, it, k, categories, names)


def _psd_factor(cov):
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(cov)
    scale = max(1.0, float(np.max(np.abs(vals)))) if vals.size else 1.0
    if vals.size and vals.min() < -1e-8 * scale:
        raise FitError("covariance matrix is not positive semi-definite (near-singular fit)")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def draw_glm_params(fit: GlmFit, rng: np.random.Generator) -> np.ndarray:
    """Perturb the estimate: ``beta* ~ N(beta_hat, V_hat)``."""
    if not fit.converged:
        raise FitError("cannot draw parameters from a non-converged fit")
    factor = _psd_factor(fit.covariance)
    z = rng.standard_normal(fit.beta_hat.size)
    return fit.beta_hat + factor @ z


# -- truncated normal --------------------------------------------------------


def sample_truncated_normal(mean, sd, lo, hi, rng: np.random.Generator):
    """Inverse-CDF draws from ``N(mean, sd^2)`` truncated to ``[lo, hi]``.

    Arguments broadcast against each other. Upper-tail intervals are mapped
    to the lower tail by symmetry so the CDF differences keep their precision.
    A zero ``sd`` returns the mean, or the nearest bound (with a warning) when
    the mean lies outside.
    """
    mean, sd, lo, hi = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (mean, sd, lo, hi))
    )
    scalar = mean.ndim == 0
    mean, sd, lo, hi = (np.atleast_1d(v).ravel() for v in (mean, sd, lo, hi))
    if np.any(~(lo < hi)):
        raise ValueError("truncation bounds must satisfy lo < hi")
    if np.any(sd < 0):
        raise ValueError("sd must be non-negative")
    u = rng.random(mean.size)
    out = np.empty(mean.size)
    dead = sd == 0
    if dead.any():
        m = mean[dead]
        clipped = np.clip(m, lo[dead], hi[dead])
        if np.any(clipped != m):
            warnings.warn("sd=0 with mean outside bounds; returning nearest bound", RuntimeWarning)
        out[dead] = clipped
    live = ~dead
    if live.any():
        mu, s, l, h = mean[live], sd[live], lo[live], hi[live]
        a = (l - mu) / s
        b = (h - mu) / s
        flip = a > 0
        aa = np.where(flip, -b, a)
        bb = np.where(flip, -a, b)
        pa = special.ndtr(aa)
        pb = special.ndtr(bb)
        width = pb - pa
        with np.errstate(divide="ignore", invalid="ignore"):
            z = special.ndtri(pa + u[live] * width)
        degenerate = ~(width > 0) | ~np.isfinite(z)
        if degenerate.any():
            # deep lower tail: density ~ exp(-bb * (bb - x)); truncated exponential
            lam = np.maximum(-bb[degenerate], 1e-12)
            span = bb[degenerate] - aa[degenerate]
            ud = u[live][degenerate]
            t = -np.log1p(-ud * -np.expm1(-lam * span)) / lam
            z[degenerate] = bb[degenerate] - t
        z = np.where(flip, -z, z)
        out[live] = np.clip(mu + s * z, l, h)
    return float(out[0]) if scalar else out


# -- perfect prediction --------------------------------------------------------


def augment_perfect_prediction(y, X, family, weights=None):
    """Append low-weight pseudo-observations that rule out perfect prediction.

    For every non-constant column and every outcome category two rows are
    added, with all columns at their means except that column, set to its
    mean plus and minus one standard deviation. Each pseudo-row has weight
    ``PSEUDO_WEIGHT``; original rows keep their weights (1 by default).
    Logit fits always use the categories {0, 1}.
    """
    family = Family(family)
    if family not in CATEGORICAL:
        raise ValueError(f"augmentation applies to categorical families, not {family.value}")
    X, w = _as_design(X, weights)
    y = np.asarray(y, dtype=float)
    cats = np.array([0.0, 1.0]) if family is Family.LOGIT else np.unique(y)
    means = X.mean(axis=0)
    sds = X.std(axis=0)
    varying = np.flatnonzero(sds > 0)
    base_rows = []
    if varying.size == 0:
        base_rows = [means, means]
    for c in varying:
        for sign in (1.0, -1.0):
            row = means.copy()
            row[c] += sign * sds[c]
            base_rows.append(row)
    base = np.array(base_rows)
    X_aug = np.vstack([X] + [base] * cats.size)
    y_aug = np.concatenate([y, np.repeat(cats, base.shape[0])])
    w_aug = np.concatenate([w, np.full(base.shape[0] * cats.size, PSEUDO_WEIGHT)])
    return y_aug, X_aug, w_aug


# -- interval regression -------------------------------------------------------


@dataclass
class IntervalFit:
    beta_hat: np.ndarray
    log_sigma_hat: float
    covariance: np.ndarray
    converged: bool
    log_likelihood: float

    @property
    def params(self):
        return np.append(self.beta_hat, self.log_sigma_hat)


def _log_interval_mass(a, b):
    """log(Phi(b) - Phi(a)) for a < b, stable in both tails."""
    flip = a > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    lhi = special.log_ndtr(hi)
    llo = special.log_ndtr(lo)
    with np.errstate(divide="ignore"):
        return lhi + np.log1p(-np.exp(llo - lhi))


def _interval_negll(params, X, lo, hi, point):
    k = X.shape[1]
    beta, log_s = params[:k], params[k]
    s = np.exp(log_s)
    eta = X @ beta
    ll = 0.0
    g_eta = np.zeros(eta.size)
    g_ls = 0.0
    if point.any():
        r = (lo[point] - eta[point]) / s
        ll += np.sum(-log_s - 0.5 * np.log(2 * np.pi) - 0.5 * r**2)
        g_eta[point] = r / s
        g_ls += np.sum(-1.0 + r**2)
    iv = ~point
    if iv.any():
        a = (lo[iv] - eta[iv]) / s
        b = (hi[iv] - eta[iv]) / s
        logP = _log_interval_mass(a, b)
        ll += np.sum(logP)
        # phi(x)/P computed in log space; phi(+-inf) = 0
        with np.errstate(over="ignore", invalid="ignore"):
            ra = np.where(np.isfinite(a), np.exp(-0.5 * a**2 - 0.5 * np.log(2 * np.pi) - logP), 0.0)
            rb = np.where(np.isfinite(b), np.exp(-0.5 * b**2 - 0.5 * np.log(2 * np.pi) - logP), 0.0)
            g_eta[iv] = (ra - rb) / s
            g_ls += np.sum(np.where(np.isfinite(a), ra * a, 0.0) - np.where(np.isfinite(b), rb * b, 0.0))
    grad = np.append(X.T @ g_eta, g_ls)
    return -ll, -grad


def fit_interval_regression(lo, hi, X, names=None) -> IntervalFit:
    """Gaussian latent-variable ML fit for point, interval and censored data.

    Row ``i`` is a point observation when ``lo[i] == hi[i]``, interval
    censored when both are finite, and left/right censored when ``lo`` is
    ``-inf`` or ``hi`` is ``+inf``. Parameters are ``(beta, log sigma)``.
    """
    X, _ = _as_design(X)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n, k = X.shape
    if lo.shape != (n,) or hi.shape != (n,):
        raise ValueError("bounds must have one value per design row")
    if np.any(lo > hi):
        raise ValueError("interval rows need lo <= hi")
    if np.any(np.isinf(lo) & np.isinf(hi)):
        raise ValueError("rows with both bounds infinite carry no information")
    if n <= k:
        raise FitError(f"need more observations than columns (n={n}, k={k})")
    point = lo == hi
    mid = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), np.where(np.isfinite(lo), lo, hi))
    start = fit_linear(mid, X, names)
    s0 = np.sqrt(max(start.sigma2_hat, 1e-8 * max(1.0, np.var(mid))))
    x0 = np.append(start.beta_hat, np.log(s0))
    res = optimize.minimize(
        _interval_negll, x0, args=(X, lo, hi, point), jac=True, method="BFGS",
        options={"gtol": 1e-8, "maxiter": 1000},
    )
    params = res.x
    _, grad = _interval_negll(params, X, lo, hi, point)
    if not np.all(np.isfinite(params)) or np.max(np.abs(grad)) > 1e-4 * max(1.0, n):
        raise ConvergenceError("interval regression did not converge", last_iterate=params)
    # observed information by central differences of the analytic gradient
    P = params.size
    hess = np.empty((P, P))
    for j in range(P):
        h = 1e-5 * max(1.0, abs(params[j]))
        e = np.zeros(P)
        e[j] = h
        gp = _interval_negll(params + e, X, lo, hi, point)[1]
        gm = _interval_negll(params - e, X, lo, hi, point)[1]
        hess[:, j] = (gp - gm) / (2 * h)
    hess = 0.5 * (hess + hess.T)
    cov = np.linalg.pinv(hess, hermitian=True)
    cov = 0.5 * (cov + cov.T)
    return IntervalFit(params[:k], float(params[k]), cov, True, float(-res.fun))
