import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fcs_forge import statkernel as sk
from fcs_forge.errors import ConvergenceError, FitError, RankDeficientError, SeparationError

LOGIT_X = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0]
LOGIT_Y = [0, 1, 0, 0, 1, 1]
POISSON_X = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
POISSON_Y = [1, 0, 2, 4, 3, 7]

# frozen from newton_oracle below (pure-Python scalar Newton iterations)
LOGIT_BETA = (0.0, 0.9234750394584018)
LOGIT_COV = (0.8956416766466989, 0.0, 0.6817326792108767)
POISSON_BETA = (-0.42197783480266465, 0.4661755317572869)
POISSON_COV = (0.45698231913692805, -0.10743967341790123, 0.028991657906417792)


def newton_oracle(x, y, family):
    """Intercept-plus-slope Newton iterations written out with scalars."""
    b0 = math.log(sum(y) / len(y)) if family == "poisson" else 0.0
    b1 = 0.0
    for _ in range(100):
        g0 = g1 = h00 = h01 = h11 = 0.0
        for xi, yi in zip(x, y):
            eta = b0 + b1 * xi
            if family == "logit":
                mu = 1.0 / (1.0 + math.exp(-eta))
                v = mu * (1.0 - mu)
            else:
                mu = v = math.exp(eta)
            g0 += yi - mu
            g1 += (yi - mu) * xi
            h00 += v
            h01 += v * xi
            h11 += v * xi * xi
        det = h00 * h11 - h01 * h01
        d0 = (h11 * g0 - h01 * g1) / det
        d1 = (h00 * g1 - h01 * g0) / det
        b0, b1 = b0 + d0, b1 + d1
        if abs(d0) + abs(d1) < 1e-15:
            break
    return (b0, b1), (h11 / det, -h01 / det, h00 / det)


def design(x):
    return np.column_stack([np.ones(len(x)), x])


def normal_equations_2x2(x, y):
    """Closed-form intercept/slope solve of X'X b = X'y."""
    n = len(x)
    sx, sy = sum(x), sum(y)
    sxx = sum(v * v for v in x)
    sxy = sum(a * b for a, b in zip(x, y))
    det = n * sxx - sx * sx
    return ((sxx * sy - sx * sxy) / det, (n * sxy - sx * sy) / det)


# -- fit_linear ---------------------------------------------------------------


def test_fit_linear_noiseless():
    X = design([0.0, 1.0, 2.0, 3.0, 4.0])
    c = np.array([1.5, -2.0])
    fit = sk.fit_linear(X @ c, X)
    np.testing.assert_allclose(fit.beta_hat, c, atol=1e-12)
    assert fit.sigma2_hat == 0.0
    assert fit.dof == 3


def test_fit_linear_five_point_hand_dataset():
    x = [1.0, 2.0, 4.0, 5.0, 7.0]
    y = [2.1, 3.9, 8.2, 9.8, 14.1]
    b0, b1 = normal_equations_2x2(x, y)
    fit = sk.fit_linear(y, design(x))
    np.testing.assert_allclose(fit.beta_hat, [b0, b1], rtol=0, atol=1e-10)
    resid = [yi - b0 - b1 * xi for xi, yi in zip(x, y)]
    assert fit.sigma2_hat == pytest.approx(sum(r * r for r in resid) / 3, rel=1e-10)


def test_fit_linear_duplicate_column_names_it():
    X = np.column_stack([np.ones(6), np.arange(6.0), np.arange(6.0)])
    with pytest.raises(RankDeficientError) as err:
        sk.fit_linear(np.arange(6.0) ** 2, X, names=["const", "a", "b"])
    assert err.value.columns == ["b"] or err.value.columns == ["a"]


def test_fit_linear_needs_more_rows_than_columns():
    with pytest.raises(FitError):
        sk.fit_linear([1.0, 2.0], design([0.0, 1.0]))


def test_fit_linear_random_instances_match_normal_equations():
    rng = np.random.default_rng(101)
    for _ in range(100):
        n, k = rng.integers(5, 40), rng.integers(1, 5)
        X = rng.standard_normal((n, k))
        y = rng.standard_normal(n)
        ref = np.linalg.solve(X.T @ X, X.T @ y)
        fit = sk.fit_linear(y, X)
        assert np.max(np.abs(fit.beta_hat - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))
        np.testing.assert_allclose(fit.xtx_inverse, np.linalg.inv(X.T @ X), atol=1e-10)


# -- draw_linear_posterior ---------------------------------------------------------


def _noisy_fit(n=12, seed=3):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    return sk.fit_linear(1.0 + 2.0 * x + rng.standard_normal(n), design(x))


def test_posterior_sigma2_inverse_chi2_moment():
    fit = _noisy_fit()
    rng = sk.make_rng(7)
    draws = np.array([sk.draw_linear_posterior(fit, rng)[1] for _ in range(10_000)])
    d = fit.dof
    mean = fit.sigma2_hat * d / (d - 2)
    sd = mean * math.sqrt(2.0 / (d - 4))
    assert abs(draws.mean() - mean) < 3 * sd / math.sqrt(draws.size)


def test_posterior_beta_covariance_given_sigma():
    fit = _noisy_fit(n=40)
    rng = sk.make_rng(8)
    draws = [sk.draw_linear_posterior(fit, rng) for _ in range(10_000)]
    L = np.linalg.cholesky(fit.xtx_inverse)
    # whitened draws are standard normal when beta* | sigma2* ~ N(beta_hat, sigma2* V)
    z = np.array([np.linalg.solve(L, b - fit.beta_hat) / math.sqrt(s) for b, s in draws])
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=0.04)
    np.testing.assert_allclose(np.cov(z.T), np.eye(2), atol=0.05)


def test_posterior_degenerate_and_seeded():
    X = design([0.0, 1.0, 2.0, 3.0])
    fit = sk.fit_linear(X @ [1.0, 1.0], X)
    with pytest.warns(RuntimeWarning):
        beta, s2 = sk.draw_linear_posterior(fit, sk.make_rng(1))
    np.testing.assert_array_equal(beta, fit.beta_hat)
    assert s2 == 0.0
    noisy = _noisy_fit()
    a = sk.draw_linear_posterior(noisy, sk.make_rng(5))
    b = sk.draw_linear_posterior(noisy, sk.make_rng(5))
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1] == b[1]


# -- fit_glm ------------------------------------------------------------------


def test_oracle_matches_frozen_values():
    beta, cov = newton_oracle(LOGIT_X, LOGIT_Y, "logit")
    np.testing.assert_allclose(beta, LOGIT_BETA, atol=1e-12)
    np.testing.assert_allclose(cov, LOGIT_COV, atol=1e-12)
    beta, cov = newton_oracle(POISSON_X, POISSON_Y, "poisson")
    np.testing.assert_allclose(beta, POISSON_BETA, atol=1e-12)
    np.testing.assert_allclose(cov, POISSON_COV, atol=1e-12)


@pytest.mark.parametrize(
    "family, x, y, beta, cov",
    [
        ("logit", LOGIT_X, LOGIT_Y, LOGIT_BETA, LOGIT_COV),
        ("poisson", POISSON_X, POISSON_Y, POISSON_BETA, POISSON_COV),
    ],
)
def test_glm_matches_newton_oracle(family, x, y, beta, cov):
    fit = sk.fit_glm(family, y, design(x))
    assert fit.converged
    np.testing.assert_allclose(fit.beta_hat, beta, atol=1e-6)
    V = fit.covariance
    np.testing.assert_allclose([V[0, 0], V[0, 1], V[1, 1]], cov, atol=1e-6)


def test_logit_symmetric_four_points_has_zero_slope():
    fit = sk.fit_glm("logit", [0, 1, 0, 1], design([-1.0, -1.0, 1.0, 1.0]))
    assert abs(fit.beta_hat[1]) < 1e-10
    assert abs(fit.beta_hat[0]) < 1e-10


def test_poisson_constant_only_is_log_mean():
    y = np.array([0, 1, 3, 2, 5, 1, 0, 4])
    fit = sk.fit_glm("poisson", y, np.ones((y.size, 1)))
    assert fit.beta_hat[0] == pytest.approx(math.log(y.mean()), abs=1e-10)


def test_glm_score_small_at_convergence():
    rng = np.random.default_rng(4)
    X = design(rng.standard_normal(200))
    y = (rng.random(200) < 1 / (1 + np.exp(-(0.3 + X[:, 1])))).astype(float)
    fit = sk.fit_glm("logit", y, X)
    p = fit.predict(X)
    assert np.max(np.abs(X.T @ (y - p))) < 1e-6


def test_separation_raises():
    x = np.array([-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])
    y = (x > 0).astype(float)
    with pytest.raises(SeparationError):
        sk.fit_glm("logit", y, design(x))


def test_weighted_fit_equals_replicated_rows():
    X = design(LOGIT_X)
    w = np.array([1.0, 2.0, 1.0, 3.0, 1.0, 2.0])
    rep = np.repeat(np.arange(6), w.astype(int))
    a = sk.fit_glm("logit", LOGIT_Y, X, weights=w)
    b = sk.fit_glm("logit", np.asarray(LOGIT_Y)[rep], X[rep])
    np.testing.assert_allclose(a.beta_hat, b.beta_hat, atol=1e-8)


def test_ordered_logit_cutpoints_increasing():
    rng = np.random.default_rng(9)
    x = rng.standard_normal(400)
    latent = 0.8 * x + rng.logistic(size=400)
    y = np.digitize(latent, [-1.0, 0.0, 1.5])
    fit = sk.fit_glm("ordered_logit", y, x[:, None])
    beta, cuts = fit.unpack()
    assert np.all(np.diff(cuts) > 0)
    assert beta[0] == pytest.approx(0.8, abs=0.25)
    probs = fit.predict(x[:5, None])
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_multinomial_probabilities_sum_to_one():
    rng = np.random.default_rng(10)
    x = rng.standard_normal(300)
    y = rng.integers(0, 3, 300)
    fit = sk.fit_glm("multinomial_logit", y, design(x))
    probs = fit.predict(design(x))
    assert np.max(np.abs(probs.sum(axis=1) - 1)) <= 1e-12
    # constant-only design: fitted probabilities equal the sample shares
    c = sk.fit_glm("multinomial_logit", y, np.ones((300, 1)))
    np.testing.assert_allclose(c.predict(np.ones((1, 1)))[0], np.bincount(y) / 300, atol=1e-8)


def test_nonconvergence_carries_last_iterate(monkeypatch):
    monkeypatch.setattr(sk, "MAX_ITER", 1)
    rng = np.random.default_rng(0)
    X = design(rng.standard_normal(50))
    y = rng.poisson(np.exp(1 + X[:, 1]))
    with pytest.raises(ConvergenceError) as err:
        sk.fit_glm("poisson", y, X)
    assert err.value.last_iterate is not None


# -- draw_glm_params ------------------------------------------------------------


def test_draw_glm_params_zero_covariance_and_seed():
    fit = sk.fit_glm("logit", LOGIT_Y, design(LOGIT_X))
    zero = sk.GlmFit(fit.family, fit.beta_hat, np.zeros((2, 2)), True, 0.0, 1, 2)
    np.testing.assert_array_equal(sk.draw_glm_params(zero, sk.make_rng(1)), fit.beta_hat)
    a = sk.draw_glm_params(fit, sk.make_rng(3))
    b = sk.draw_glm_params(fit, sk.make_rng(3))
    np.testing.assert_array_equal(a, b)


def test_draw_glm_params_monte_carlo_covariance():
    fit = sk.fit_glm("poisson", POISSON_Y, design(POISSON_X))
    rng = sk.make_rng(12)
    draws = np.array([sk.draw_glm_params(fit, rng) for _ in range(10_000)])
    np.testing.assert_allclose(np.cov(draws.T), fit.covariance, rtol=0.05)


def test_draw_glm_params_rejects_non_psd():
    bad = sk.GlmFit(sk.Family.LOGIT, np.zeros(2), np.array([[1.0, 0.0], [0.0, -1.0]]), True, 0.0, 1, 2)
    with pytest.raises(FitError):
        sk.draw_glm_params(bad, sk.make_rng(0))


# -- truncated normal ------------------------------------------------------------------


def test_truncated_normal_untruncated_moments():
    rng = sk.make_rng(2)
    z = sk.sample_truncated_normal(np.zeros(10_000), 1.0, -np.inf, np.inf, rng)
    assert abs(z.mean()) < 3 / 100
    assert abs(z.var() - 1) < 3 * math.sqrt(2) / 100


def test_truncated_normal_one_sided_mean():
    rng = sk.make_rng(21)
    z = sk.sample_truncated_normal(np.zeros(10_000), 1.0, 0.0, np.inf, rng)
    half_normal_mean = math.sqrt(2 / math.pi)
    assert abs(z.mean() - half_normal_mean) < 3 * math.sqrt(1 - 2 / math.pi) / 100


def test_truncated_normal_degenerate_sd():
    rng = sk.make_rng(0)
    assert sk.sample_truncated_normal(1.5, 0.0, 0.0, 2.0, rng) == 1.5
    with pytest.warns(RuntimeWarning):
        assert sk.sample_truncated_normal(5.0, 0.0, 0.0, 2.0, rng) == 2.0


def test_truncated_normal_rejects_empty_interval():
    with pytest.raises(ValueError):
        sk.sample_truncated_normal(0.0, 1.0, 1.0, 1.0, sk.make_rng(0))


@settings(max_examples=300, deadline=None)
@given(
    mean=st.floats(-50, 50),
    sd=st.floats(1e-3, 20),
    lo=st.floats(-60, 60),
    width=st.floats(1e-9, 40),
    seed=st.integers(0, 2**32 - 1),
)
def test_truncated_normal_containment(mean, sd, lo, width, seed):
    hi = lo + width
    if not lo < hi:
        return
    v = sk.sample_truncated_normal(mean, sd, lo, hi, sk.make_rng(seed))
    assert lo <= v <= hi


def test_truncated_normal_far_tail_stays_finite():
    v = sk.sample_truncated_normal(np.zeros(100), 1.0, 40.0, 41.0, sk.make_rng(4))
    assert np.all((v >= 40) & (v <= 41))
    assert v.mean() < 40.1


# -- augmentation --------------------------------------------------------------------


def test_augmentation_makes_separated_data_finite():
    x = np.array([-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])
    y = (x > 0).astype(float)
    ya, Xa, wa = sk.augment_perfect_prediction(y, design(x), "logit")
    np.testing.assert_array_equal(wa[:6], 1.0)
    assert np.all(wa[6:] == sk.PSEUDO_WEIGHT)
    fit = sk.fit_glm("logit", ya, Xa, weights=wa)
    assert fit.converged and np.all(np.isfinite(fit.beta_hat))


def test_augmentation_barely_moves_well_behaved_fit():
    X = design(LOGIT_X)
    plain = sk.fit_glm("logit", LOGIT_Y, X)
    ya, Xa, wa = sk.augment_perfect_prediction(LOGIT_Y, X, "logit")
    aug = sk.fit_glm("logit", ya, Xa, weights=wa)
    assert np.max(np.abs(aug.beta_hat - plain.beta_hat)) < 0.01


def test_augmentation_rejects_poisson():
    with pytest.raises(ValueError):
        sk.augment_perfect_prediction([1, 2], np.ones((2, 1)), "poisson")


def test_rng_reproducible():
    a = sk.make_rng(42).random(5)
    b = sk.make_rng(42).random(5)
    np.testing.assert_array_equal(a, b)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sk.make_rng(0)


# -- exact separation check ------------------------------------------------------


def test_has_separation_cases():
    x = np.linspace(-1, 1, 40)
    assert sk.has_separation("logit", (x > 0).astype(float), design(x))
    # quasi-complete: overlap only at x = 0
    xq = np.array([-2.0, -1.0, 0.0, 0.0, 1.0, 2.0])
    assert sk.has_separation("logit", [0, 0, 0, 1, 1, 1], design(xq))
    assert not sk.has_separation("logit", LOGIT_Y, design(LOGIT_X))
    rng = np.random.default_rng(0)
    z = rng.standard_normal(300)
    cats = np.digitize(z, [-0.5, 0.5]).astype(float)
    noisy = np.digitize(z + rng.standard_normal(300), [-0.5, 0.5]).astype(float)
    for fam, X in (("multinomial_logit", design(z)), ("ordered_logit", z[:, None])):
        assert sk.has_separation(fam, cats, X)
        assert not sk.has_separation(fam, noisy, X)
    with pytest.raises(ValueError):
        sk.has_separation("poisson", [1, 2], design([0.0, 1.0]))


def test_steep_but_finite_mle_is_not_separation():
    # augmented rows make the MLE finite although its slope is large
    x = np.linspace(-1, 1, 40)
    y, X, w = sk.augment_perfect_prediction((x > 0).astype(float), design(x), sk.Family.LOGIT)
    assert not sk.has_separation("logit", y, X, w)
    fit = sk.fit_glm("logit", y, X, w)
    assert fit.converged and 20 < fit.beta_hat[1] < 200
    assert np.all(np.isfinite(fit.covariance))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_separation_check_agrees_with_geometry(seed):
    # one covariate: separated exactly when the class ranges do not overlap
    rng = np.random.default_rng(seed)
    x = np.round(rng.normal(size=12), 1)
    y = (rng.random(12) < 0.5).astype(float)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    lo0, hi0 = x[y == 0].min(), x[y == 0].max()
    lo1, hi1 = x[y == 1].min(), x[y == 1].max()
    separated = hi0 <= lo1 or hi1 <= lo0
    assert sk.has_separation("logit", y, design(x)) == separated
