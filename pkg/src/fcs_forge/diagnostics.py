"""Checks on imputed data: densities, response weighting, rates and pooling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import statkernel as sk
from .currency import nearest_rank
from .errors import DataError, FitError

GRID_POINTS = 512
WEIGHT_CAP = 50.0


@dataclass
class KdeCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid)) if hasattr(np, "trapezoid") else float(np.trapz(self.density, self.grid))


def silverman_bandwidth(values) -> float:
    """``0.9 min(sd, IQR / 1.34) n^(-1/5)``, falling back to whichever spread is positive."""
    v = np.asarray(values, float)
    sd = v.std(ddof=1) if v.size > 1 else 0.0
    q75, q25 = np.percentile(v, [75, 25])
    iqr = (q75 - q25) / 1.34
    spread = min(sd, iqr) if iqr > 0 else sd
    if not spread > 0:
        raise DataError("cannot choose a bandwidth: all values are equal")
    return 0.9 * spread * v.size ** (-0.2)


def default_grid(values, bandwidth, points=GRID_POINTS):
    v = np.asarray(values, float)
    return np.linspace(v.min() - 3 * bandwidth, v.max() + 3 * bandwidth, points)


def kde_estimate(values, weights=None, bandwidth=None, grid=None) -> KdeCurve:
    """Weighted Gaussian kernel density on an evenly spaced grid.

    With no ``grid``, 512 points span the data range widened by three
    bandwidths on each side. The default bandwidth is Silverman's rule on the
    unweighted values.
    """
    v = np.asarray(values, float)
    if v.size < 2:
        raise DataError("a density estimate needs at least two values")
    if not np.all(np.isfinite(v)):
        raise DataError("density values must be finite")
    w = np.ones(v.size) if weights is None else np.asarray(weights, float)
    if w.shape != v.shape or np.any(w < 0) or not w.sum() > 0:
        raise DataError("weights must be non-negative, one per value, with a positive sum")
    h = silverman_bandwidth(v) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise DataError("bandwidth must be positive")
    g = default_grid(v, h) if grid is None else np.asarray(grid, float)
    dens = np.zeros(g.size)
    for start in range(0, v.size, 2048):
        u = (g[:, None] - v[None, start:start + 2048]) / h
        dens += np.exp(-0.5 * u * u) @ w[start:start + 2048]
    dens /= w.sum() * h * math.sqrt(2 * math.pi)
    return KdeCurve(g, dens, h)


# -- response weighting --------------------------------------------------------


def _logit_propensity(resp, X):
    try:
        fit = sk.fit_glm(sk.Family.LOGIT, resp, X)
    except FitError:
        y, Xa, w = sk.augment_perfect_prediction(resp, X, sk.Family.LOGIT)
        fit = sk.fit_glm(sk.Family.LOGIT, y, Xa, w)
    return fit.predict(X)


def _dummies(labels):
    cats = sorted(set(labels))
    return np.column_stack([(labels == c).astype(float) for c in cats[1:]]) if len(cats) > 1 else np.empty((len(labels), 0))


def fit_ipw_weights(responded, predictors, countries=None, policy=None, cap: float = WEIGHT_CAP):
    """Inverse response-propensity weights for responders (NaN for the others).

    A logit of ``responded`` on an intercept, ``predictors`` and country
    dummies is fitted separately in each macro-region of ``policy`` (or once
    over all rows when ``countries`` is None). Weights are ``1 / p`` capped at
    ``cap``.
    """
    r = np.asarray(responded, float)
    Z = np.asarray(predictors, float)
    if Z.ndim == 1:
        Z = Z[:, None]
    n = r.size
    if Z.shape[0] != n:
        raise DataError("one predictor row per respondent is required")
    p = np.empty(n)
    if countries is None:
        groups = [np.arange(n)]
        labels = None
    else:
        labels = np.asarray(countries, dtype=object)
        if policy is None:
            from .engine import PoolingPolicy

            policy = PoolingPolicy()
        regions = policy.region_array(labels)
        groups = [np.flatnonzero(regions == reg) for reg in policy.regions if np.any(regions == reg)]
    for idx in groups:
        parts = [np.ones((idx.size, 1)), Z[idx]]
        if labels is not None:
            parts.append(_dummies(labels[idx]))
        X = np.column_stack(parts)
        keep = np.ones(X.shape[1], bool)
        keep[1:] = np.ptp(X[:, 1:], axis=0) > 0
        p[idx] = _logit_propensity(r[idx], X[:, keep])
    w = np.full(n, np.nan)
    resp = r == 1
    w[resp] = np.minimum(1.0 / p[resp], cap)
    return w


# -- response rates ------------------------------------------------------------


@dataclass(frozen=True)
class ResponseRateRow:
    group: str
    E: int
    R1: int
    R2: int
    R3: int

    @property
    def RR1(self):
        return self.R1 / self.E

    @property
    def RR2(self):
        return self.R2 / self.E

    @property
    def RR3(self):
        return self.R3 / self.E

    def formatted(self):
        return (self.group, self.E, self.R1, f"{self.RR1:.2f}", self.R2, f"{self.RR2:.2f}", self.R3, f"{self.RR3:.2f}")


def response_rate_table(eligible, answered, converted, kept, groups=None):
    """Counts ``E >= R1 >= R2 >= R3`` per group plus an ``ALL`` row.

    ``R1`` counts answers, ``R2`` successful conversions and ``R3`` values
    kept after trimming. Groups without eligible respondents are left out.
    """
    masks = [np.asarray(m, bool) for m in (eligible, answered, converted, kept)]
    n = masks[0].size
    if any(m.size != n for m in masks):
        raise DataError("all masks must have the same length")
    names = ("answered", "converted", "kept")
    for outer, inner, name in zip(masks, masks[1:], names):
        bad = np.flatnonzero(inner & ~outer)
        if bad.size:
            raise DataError(f"{name} is not nested in its parent mask at rows {bad[:20].tolist()}")
    g = np.full(n, "ALL", dtype=object) if groups is None else np.asarray(groups, dtype=object)
    rows = []
    keys = [] if groups is None else sorted(set(g.tolist()), key=str)
    for key in keys:
        sel = g == key
        counts = [int(m[sel].sum()) for m in masks]
        if counts[0] > 0:
            rows.append(ResponseRateRow(str(key), *counts))
    total = [int(m.sum()) for m in masks]
    if total[0] > 0:
        rows.append(ResponseRateRow("ALL", *total))
    return rows


# -- summaries and pooling -----------------------------------------------------


def summary_quartiles(values):
    """Mean and nearest-rank 25th, 50th and 75th percentiles."""
    v = np.sort(np.asarray(values, float))
    if v.size == 0:
        raise DataError("summary needs at least one value")
    return float(v.mean()), float(nearest_rank(v, 0.25)), float(nearest_rank(v, 0.5)), float(nearest_rank(v, 0.75))


@dataclass(frozen=True)
class PooledEstimate:
    point: float
    within_var: float
    between_var: float
    total_var: float
    M: int

    @property
    def se(self) -> float:
        return math.sqrt(self.total_var)


def rubin_pool(estimates, variances) -> PooledEstimate:
    """Combine per-replicate estimates: ``T = W + (1 + 1/M) B``."""
    q = np.asarray(estimates, float)
    u = np.asarray(variances, float)
    M = q.size
    if M < 2:
        raise DataError("pooling needs at least two replicates")
    if u.shape != q.shape or np.any(u < 0):
        raise DataError("one non-negative variance per estimate is required")
    W = float(u.mean())
    B = float(q.var(ddof=1))
    return PooledEstimate(float(q.mean()), W, B, W + (1 + 1 / M) * B, M)


def pooled_mean(replicate_values) -> PooledEstimate:
    """Rubin-pooled mean, with the squared standard error of the mean as within variance."""
    est = [float(np.mean(v)) for v in replicate_values]
    var = [float(np.var(v, ddof=1) / len(v)) for v in replicate_values]
    return rubin_pool(est, var)


# -- distribution comparison ---------------------------------------------------


@dataclass
class DistributionReport:
    variable: str
    curves: dict
    summaries: dict
    mixture_residual: float
    bandwidth: float
    extra: dict = field(default_factory=dict)


def compare_distributions(variable, observed, imputed, ipw_weights=None, bandwidth=None) -> DistributionReport:
    """Observed, imputed, completed and IPW-weighted densities on a common grid.

    ``imputed`` holds one array of imputed values per replicate. The mixture
    residual is the largest deviation between each completed density and the
    count-weighted average of the observed and imputed densities.
    """
    obs = np.asarray(observed, float)
    reps = [np.asarray(r, float) for r in imputed]
    everything = np.concatenate([obs] + reps) if reps else obs
    h = silverman_bandwidth(obs) if bandwidth is None else float(bandwidth)
    grid = default_grid(everything, h)
    curves = {"observed": kde_estimate(obs, bandwidth=h, grid=grid)}
    summaries = {"observed": summary_quartiles(obs)}
    if ipw_weights is not None:
        curves["ipw"] = kde_estimate(obs, np.asarray(ipw_weights, float), h, grid)
    residual = 0.0
    for m, imp in enumerate(reps, start=1):
        comp = np.concatenate([obs, imp])
        c_comp = kde_estimate(comp, bandwidth=h, grid=grid)
        curves[f"completed_{m}"] = c_comp
        summaries[f"completed_{m}"] = summary_quartiles(comp)
        if imp.size:
            c_imp = kde_estimate(imp, bandwidth=h, grid=grid) if imp.size >= 2 else _single_point(imp, h, grid)
            curves[f"imputed_{m}"] = c_imp
            summaries[f"imputed_{m}"] = summary_quartiles(imp)
            mix = (obs.size * curves["observed"].density + imp.size * c_imp.density) / comp.size
            residual = max(residual, float(np.max(np.abs(c_comp.density - mix))))
        else:
            residual = max(residual, float(np.max(np.abs(c_comp.density - curves["observed"].density))))
    if ipw_weights is not None:
        w = np.asarray(ipw_weights, float)
        summaries["ipw_mean"] = (float(np.sum(w * obs) / np.sum(w)),)
    return DistributionReport(variable, curves, summaries, residual, h)


def _single_point(v, h, grid):
    u = (grid - v[0]) / h
    return KdeCurve(grid, np.exp(-0.5 * u * u) / (h * math.sqrt(2 * math.pi)), h)


def _fmt(x):
    return repr(float(x))


def write_report(report: DistributionReport, out_dir) -> list:
    """Write ``<var>_curves.csv`` and ``<var>_summary.csv``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = list(report.curves)
    grid = next(iter(report.curves.values())).grid
    curves_path = out / f"{report.variable}_curves.csv"
    with open(curves_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["grid"] + names)
        for i, g in enumerate(grid):
            w.writerow([_fmt(g)] + [_fmt(report.curves[k].density[i]) for k in names])
    summary_path = out / f"{report.variable}_summary.csv"
    with open(summary_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["series", "mean", "p25", "p50", "p75"])
        for k, vals in report.summaries.items():
            if len(vals) == 4:
                w.writerow([k] + [_fmt(x) for x in vals])
        if "ipw_mean" in report.summaries:
            w.writerow(["ipw", _fmt(report.summaries["ipw_mean"][0]), "", "", ""])
        w.writerow(["bandwidth", _fmt(report.bandwidth), "", "", ""])
        w.writerow(["mixture_residual", _fmt(report.mixture_residual), "", "", ""])
    return [curves_path, summary_path]


def write_response_rates(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["group", "E", "R1", "RR1", "R2", "RR2", "R3", "RR3"])
        for r in rows:
            w.writerow(r.formatted())
