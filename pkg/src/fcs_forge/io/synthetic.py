"""Synthetic data with known truth for testing the imputation engine.

Two generating models are available. ``gaussian`` draws a fully observed
driver ``z`` and jointly normal ``x1..xK`` whose conditional distributions
are linear, so Gaussian chained equations are correctly specified. The
``monetary`` model mimics a life-history survey: spell sequences of
maternity benefits, first wages and first self-employment incomes, followed
by pension, current and end-of-main-job earnings, each with its own
eligibility rule and with ineligible cells at the ``-99`` sentinel.

Missingness is MCAR with a given rate, or MAR through a logistic model on
fully observed columns whose intercept is calibrated so the average
probability equals the rate. Both use the same uniforms, so MAR with zero
coefficients yields exactly the MCAR mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .dataset import INELIGIBLE, MISSING, OBSERVED, Column, ColumnarDataset


@dataclass(frozen=True)
class Mechanism:
    """``kind`` is ``mcar`` or ``mar``; MAR coefficients act on standardized columns."""

    kind: str = "mar"
    rate: float = 0.3
    coefficients: dict = field(default_factory=lambda: {"z": 1.0})

    def __post_init__(self):
        if self.kind not in ("mcar", "mar"):
            raise ValueError(f"unknown missingness mechanism {self.kind!r}")
        if not 0 < self.rate < 1:
            raise ValueError("missingness rate must lie in (0, 1)")


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 1000
    kind: str = "gaussian"
    means: tuple = (1.0, -0.5, 2.0)
    z_coefficients: tuple = (0.8, -0.6, 0.5)
    noise_cov: tuple = ((1.0, 0.5, 0.3), (0.5, 1.0, 0.4), (0.3, 0.4, 1.0))
    mechanism: Mechanism = field(default_factory=Mechanism)
    spells: tuple = (3, 3, 1)
    countries: tuple = ("DE", "AT", "IT", "ES")

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.kind not in ("gaussian", "monetary"):
            raise ValueError(f"unknown synthetic model {self.kind!r}")
        k = len(self.means)
        if len(self.z_coefficients) != k or np.shape(self.noise_cov) != (k, k):
            raise ValueError("means, z_coefficients and noise_cov disagree in size")


@dataclass
class Truth:
    means: dict
    full_means: dict
    spec: SyntheticSpec


def missing_mask(rng, drivers: dict, mech: Mechanism, n: int, candidates=None):
    """Missingness indicators over ``candidates`` (all rows by default)."""
    cand = np.ones(n, bool) if candidates is None else np.asarray(candidates, bool)
    u = rng.random(n)
    if mech.kind == "mcar" or not any(mech.coefficients.values()):
        p = np.full(n, mech.rate)
    else:
        lin = np.zeros(n)
        for name, coef in mech.coefficients.items():
            v = np.asarray(drivers[name], float)
            sd = v[cand].std()
            lin += coef * (v - v[cand].mean()) / (sd if sd > 0 else 1.0)
        idx = np.flatnonzero(cand)
        if idx.size == 0:
            return np.zeros(n, bool)
        alpha = optimize.brentq(lambda a: special.expit(a + lin[idx]).mean() - mech.rate, -50, 50, xtol=1e-12)
        p = special.expit(alpha + lin)
    return cand & (u < p)


def _dataset(ids, columns):
    return ColumnarDataset(ids, {c.name: c for c in columns})


def _gaussian(spec: SyntheticSpec, rng):
    n = spec.n
    k = len(spec.means)
    z = rng.standard_normal(n)
    L = np.linalg.cholesky(np.asarray(spec.noise_cov, float))
    X = np.asarray(spec.means) + np.outer(z, spec.z_coefficients) + rng.standard_normal((n, k)) @ L.T
    names = [f"x{j + 1}" for j in range(k)]
    ids = np.array([str(i + 1) for i in range(n)], dtype=object)
    obs = np.zeros(n, np.int8)
    full = [Column("z", "real", z, obs.copy())] + [Column(nm, "real", X[:, j], obs.copy()) for j, nm in enumerate(names)]
    masked = [Column("z", "real", z, obs.copy())]
    drivers = {"z": z}
    for j, nm in enumerate(names):
        m = missing_mask(rng, drivers, spec.mechanism, n)
        masked.append(Column(nm, "real", X[:, j], np.where(m, MISSING, OBSERVED)))
    truth = Truth(dict(zip(names, map(float, spec.means))), {nm: float(X[:, j].mean()) for j, nm in enumerate(names)}, spec)
    return _dataset(ids, full), _dataset(ids.copy(), masked), truth


def _monetary(spec: SyntheticSpec, rng):
    n = spec.n
    H1, H2, H3 = spec.spells
    ids = np.array([str(i + 1) for i in range(n)], dtype=object)
    country = rng.choice(np.array(spec.countries, dtype=object), size=n)
    south = np.isin(country, ("IT", "ES", "PT", "GR", "CY", "MT")).astype(float)
    age = np.round(rng.uniform(50, 90, n), 1)
    female = (rng.random(n) < 0.5).astype(float)
    edu = (rng.random(n) < 0.4).astype(float)
    ability = 0.4 * rng.standard_normal(n) + 0.3 * edu - 0.2 * south

    cols = {"country": ("label", country, None), "age": ("real", age, None),
            "female": ("binary", female, None), "edu": ("binary", edu, None)}

    def add(name, kind, values, eligible=None):
        cols[name] = (kind, values, eligible)

    interrupt = female * (rng.random(n) < 0.7)
    kids = rng.integers(1, H1 + 1, n)
    add("interrupt", "binary", interrupt)
    prev = np.zeros(n)
    for h in range(1, H1 + 1):
        elig = (interrupt == 1) & (kids >= h)
        add(f"mat_{h}", "binary", elig.astype(float))
        own = rng.random(n) < special.expit(0.3 + 1.2 * (prev > 0) - 0.4 * south)
        amt = np.exp(5.5 + 0.6 * ability + 0.1 * h + 0.3 * rng.standard_normal(n))
        y = np.where(own, np.round(amt, 2), 0.0)
        add(f"Y1_{h}", "real", y, elig)
        prev = np.where(elig, y, 0.0)

    n_jobs = rng.integers(1, H2 + 1, n)
    for h in range(1, H2 + 1):
        elig = (n_jobs >= h) & (rng.random(n) < 0.85)
        add(f"emp_{h}", "binary", elig.astype(float))
        amt = np.exp(6.8 + ability + 0.08 * h + 0.25 * rng.standard_normal(n))
        add(f"Y2_{h}", "real", np.round(amt, 2), elig)
    for h in range(1, H3 + 1):
        elig = rng.random(n) < 0.45
        add(f"self_{h}", "binary", elig.astype(float))
        amt = np.exp(7.0 + 0.9 * ability + 0.35 * rng.standard_normal(n))
        add(f"Y3_{h}", "real", np.round(amt, 2), elig)

    retired = (age >= 62) | (rng.random(n) < 0.1)
    add("retired", "binary", retired.astype(float))
    pension = np.where(rng.random(n) < 0.85, np.round(np.exp(6.6 + 0.8 * ability + 0.3 * rng.standard_normal(n)), 2), 0.0)
    add("Y4", "real", pension, retired)
    working = ~retired
    cur_self = working & (rng.random(n) < 0.3)
    cur_emp = working & ~cur_self
    add("cur_emp", "binary", cur_emp.astype(float))
    add("cur_self", "binary", cur_self.astype(float))
    add("Y5", "real", np.round(np.exp(7.3 + ability + 0.2 * rng.standard_normal(n)), 2), cur_emp)
    add("Y6", "real", np.round(np.exp(7.4 + ability + 0.3 * rng.standard_normal(n)), 2), cur_self)
    main_self = rng.random(n) < 0.3
    add("main_emp", "binary", (~main_self).astype(float))
    add("main_self", "binary", main_self.astype(float))
    add("Y7", "real", np.round(np.exp(7.2 + ability + 0.2 * rng.standard_normal(n)), 2), ~main_self)
    add("Y8", "real", np.round(np.exp(7.3 + ability + 0.3 * rng.standard_normal(n)), 2), main_self)

    # age doubles as the generic MAR driver ``z``
    drivers = {"age": age, "edu": edu, "female": female, "z": age}
    full, masked, means = [], [], {}
    for name, (kind, values, elig) in cols.items():
        state = np.zeros(n, np.int8)
        if elig is not None:
            state[~elig] = INELIGIBLE
            means[name] = float(values[elig].mean()) if elig.any() else float("nan")
        full.append(Column(name, kind, values, state.copy()))
        mstate = state.copy()
        if elig is not None:
            mstate[missing_mask(rng, drivers, spec.mechanism, n, elig)] = MISSING
        masked.append(Column(name, kind, values, mstate))
    truth = Truth(means, dict(means), spec)
    return _dataset(ids, full), _dataset(ids.copy(), masked), truth


def generate_synthetic(spec: SyntheticSpec, seed: int):
    """Return ``(full, masked, truth)`` for ``spec`` drawn with ``seed``."""
    rng = np.random.Generator(np.random.PCG64(seed))
    if spec.kind == "gaussian":
        return _gaussian(spec, rng)
    return _monetary(spec, rng)
