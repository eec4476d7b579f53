"""Fully conditional specification (chained equations) imputation engine.

A plan is a sequence of blocks run one after the other on each replicate.
An :class:`FcsBlock` imputes a set of variables by monotone initialization
followed by ``burn_in`` sweeps, each variable refitted on its observed rows
and redrawn conditional on the latest values of all others. A
:class:`TwofoldBlock` nests an outer iteration over several chains, each of
which walks through a sequence of spells (``Y1_1, Y1_2, ...``) with AR(1)
lag features, or through a plain list of variables.

Predictors, eligibility rules and bounds are expressions over columns (see
:mod:`fcs_forge.expressions`). Ineligible cells enter designs as 0; cells a
block has to impute but has not initialized yet are left out of the design
during the initialization pass only.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import expressions as ex
from . import imputers as im
from .errors import BoundsError, DataError, FcsForgeError, ImputationError, PlanError, PoolingError
from .io.dataset import INELIGIBLE, MISSING, OBSERVED, Column, ColumnarDataset
from .io.store import ImputedStore
from .statkernel import make_rng

DEFAULT_REGIONS = {
    "SAX": ("AT", "DE", "NL", "CH"),
    "NO": ("DK", "EE", "FI", "LV", "LT", "SE"),
    "CE": ("CZ", "HU", "PL", "SK"),
    "MED": ("CY", "GR", "IT", "MT", "PT", "ES"),
    "BAL": ("BG", "HR", "RO", "SI"),
    "MIX": ("BE", "FR", "IE", "IL", "LU"),
}
DEFAULT_BURN_IN = 10
DEFAULT_REPLICATES = 5
LAG_OWN = "lag_own"
LAG_AMOUNT = "lag_amount"


@dataclass(frozen=True)
class PoolingPolicy:
    """Macro-region pooling.

    A variable is fitted per region with country dummies when the region has
    at least ``min_cell`` observed eligible rows; otherwise its region's rows
    are imputed from a fit pooled over all regions with region dummies.
    ``force_pooled`` always uses the pooled fit.
    """

    regions: dict = field(default_factory=lambda: dict(DEFAULT_REGIONS))
    min_cell: int = 50
    country_column: str = "country"
    force_pooled: bool = False

    def __post_init__(self):
        seen = {}
        for r, countries in self.regions.items():
            for c in countries:
                if c in seen:
                    raise PlanError(f"country {c} is in regions {seen[c]} and {r}")
                seen[c] = r
        if self.min_cell < 1:
            raise PlanError("min_cell must be >= 1")

    def region_array(self, countries) -> np.ndarray:
        lookup = {c: r for r, cs in self.regions.items() for c in cs}
        out = np.empty(len(countries), dtype=object)
        unknown = set()
        for i, c in enumerate(countries):
            r = lookup.get(c)
            if r is None:
                unknown.add(str(c))
            out[i] = r
        if unknown:
            raise PoolingError(f"countries not assigned to any region: {sorted(unknown)}")
        return out


@dataclass(frozen=True)
class BoundsRule:
    lo: str | None = None
    hi: str | None = None

    def render(self, h):
        return BoundsRule(
            None if self.lo is None else ex.render(self.lo, h),
            None if self.hi is None else ex.render(self.hi, h),
        )


@dataclass(frozen=True)
class VariableRole:
    name: str
    imputer: im.ImputerSpec
    predictors: tuple = ()
    eligibility: str | None = None
    bounds: BoundsRule | None = None
    pool: PoolingPolicy | None = None

    def __post_init__(self):
        object.__setattr__(self, "predictors", tuple(self.predictors))
        for p in self.predictors:
            if self.name in ex.parse(p).names:
                raise PlanError(f"variable {self.name!r} cannot predict itself")


@dataclass(frozen=True)
class FcsBlock:
    name: str
    variables: tuple
    burn_in: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise PlanError(f"block {self.name!r} declares a variable twice")


def pmm_neighbors(h: int, q: int = 10, full_until: int = 7, floor: int = 3) -> int:
    """Donor count for spell ``h``: ``q`` up to ``full_until``, then one fewer per spell."""
    if h <= full_until:
        return q
    return max(min(floor, q), q - (h - full_until))


@dataclass(frozen=True)
class SpellChainSpec:
    """A sequence of spell variables ``{name}_1 .. {name}_{spells}``.

    Predictor, eligibility and bounds templates may use ``{h}``, ``{h-1}``;
    the names ``lag_own`` and ``lag_amount`` refer to the previous spell's
    ownership indicator and amount (both 0 at the first spell), and
    ``seqmean(Yj)`` to the average over chain ``Yj``'s spells with ineligible
    spells counted as 0. Spells up to ``regional_spells`` use the pooling
    policy; later spells use the pooled fit.
    """

    name: str
    spells: int
    imputer: im.ImputerSpec
    predictors: tuple = ()
    eligibility: str | None = None
    bounds: BoundsRule | None = None
    pool: PoolingPolicy | None = None
    regional_spells: int | None = None
    q_full_until: int = 7
    q_floor: int = 3

    def __post_init__(self):
        object.__setattr__(self, "predictors", tuple(self.predictors))
        if self.spells < 1:
            raise PlanError(f"chain {self.name!r} needs at least one spell")

    def column(self, h: int) -> str:
        return f"{self.name}_{h}"

    @property
    def columns(self):
        return [self.column(h) for h in range(1, self.spells + 1)]

    def q_schedule(self):
        return [pmm_neighbors(h, self.imputer.q, self.q_full_until, self.q_floor) for h in range(1, self.spells + 1)]

    def role(self, h: int) -> VariableRole:
        pool = self.pool
        if pool is not None and self.regional_spells is not None and h > self.regional_spells:
            pool = replace(pool, force_pooled=True)
        return VariableRole(
            self.column(h),
            self.imputer.with_q(pmm_neighbors(h, self.imputer.q, self.q_full_until, self.q_floor)),
            tuple(ex.render(p, h) for p in self.predictors),
            None if self.eligibility is None else ex.render(self.eligibility, h),
            None if self.bounds is None else self.bounds.render(h),
            pool,
        )


@dataclass(frozen=True)
class VariableChain:
    """A chain of distinct variables updated in declaration order."""

    name: str
    variables: tuple

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))

    @property
    def columns(self):
        return [v.name for v in self.variables]


@dataclass(frozen=True)
class TwofoldBlock:
    name: str
    chains: tuple
    burn_in: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "chains", tuple(self.chains))
        names = [c.name for c in self.chains]
        if len(set(names)) != len(names):
            raise PlanError(f"block {self.name!r} declares a chain twice")


@dataclass(frozen=True)
class ChainSpec:
    blocks: tuple
    burn_in: int = DEFAULT_BURN_IN
    replicates: int = DEFAULT_REPLICATES
    base_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if self.burn_in < 1:
            raise PlanError("burn_in must be >= 1")
        if self.replicates < 0:
            raise PlanError("replicates must be >= 0")
        targets = [c for b in self.blocks for c in block_columns(b)]
        dup = {c for c in targets if targets.count(c) > 1}
        if dup:
            raise PlanError(f"columns imputed by more than one block or chain: {sorted(dup)}")

    def replicate_seed(self, m: int) -> int:
        return int(self.base_seed) ^ int(m)


def block_columns(block):
    if isinstance(block, FcsBlock):
        return [v.name for v in block.variables]
    return [c for ch in block.chains for c in ch.columns]


# -- state ---------------------------------------------------------------------


class ChainState:
    """Working copy of one replicate.

    ``versions[col]`` is the iteration at which ``col`` was last drawn; ``-1``
    marks a column with cells still to initialize, and columns without any
    cells to impute are absent.
    """

    def __init__(self, dataset: ColumnarDataset, rng, trace: bool = False):
        self.dataset = dataset
        self.kinds = dataset.schema
        self.values = {k: c.values.copy() for k, c in dataset.columns.items()}
        self.status = {k: c.state.copy() for k, c in dataset.columns.items()}
        self.targets = {}
        self.versions = {}
        self.chains = {}
        self.rng = rng
        self.t = 0
        self.trace = [] if trace else None
        self.location = {}

    @property
    def n(self):
        return self.dataset.n

    def require(self, name):
        if name not in self.values:
            raise PlanError(f"unknown column {name!r}")

    def numeric(self, name):
        self.require(name)
        if self.kinds[name] == "label":
            return self.values[name]
        return np.where(self.status[name] == INELIGIBLE, 0.0, self.values[name])

    def pending(self, name) -> bool:
        return self.versions.get(name, 0) < 0

    def seqmean(self, chain):
        cols, H = self.chains.get(chain, (None, None))
        if cols is None:
            raise PlanError(f"seqmean refers to unknown chain {chain!r}")
        return sum(self.numeric(c) for c in cols) / H

    def completed(self) -> ColumnarDataset:
        cols = {}
        for k, c in self.dataset.columns.items():
            state = self.status[k].copy()
            done = self.targets.get(k)
            if done is not None:
                state[done] = OBSERVED
            cols[k] = Column(k, c.kind, self.values[k].copy(), state)
        return ColumnarDataset(self.dataset.ids.copy(), cols, self.dataset.id_name)

    def record(self, event):
        if self.trace is not None:
            self.trace.append(event)


class _Env:
    """Column lookup for expressions: ineligible cells read as 0."""

    def __init__(self, state, extra=None):
        self.state = state
        self.extra = extra or {}

    def __getitem__(self, name):
        if name in self.extra:
            return self.extra[name]
        if name not in self.state.values:
            raise KeyError(name)
        return self.state.numeric(name)


def _dependencies(expr, state, extra_deps=None):
    deps = set()
    for name in expr.names:
        if name.startswith("@"):
            fn, arg = name[1:].split(":", 1)
            if fn == "seqmean":
                deps.update(state.chains.get(arg, ([],))[0])
                if arg not in state.chains:
                    raise PlanError(f"seqmean refers to unknown chain {arg!r}")
            else:
                raise PlanError(f"unknown function {fn!r} in {expr.text!r}")
        elif extra_deps and name in extra_deps:
            deps.update(extra_deps[name])
        else:
            deps.add(name)
    return deps


def _evaluate(text, state, extra=None, extra_deps=None):
    expr = ex.parse(text)
    deps = _dependencies(expr, state, extra_deps)
    for d in deps:
        if d not in state.values and not (extra and d in extra):
            raise PlanError(f"expression {text!r} refers to unknown column {d!r}")
    out = expr.evaluate(_Env(state, extra), state.n, {"seqmean": state.seqmean})
    return out, deps


def evaluate_bounds_rule(rule: BoundsRule | None, rows, state: ChainState, extra=None, extra_deps=None):
    """Per-row ``(lo, hi)`` for ``rows`` (indices) from the current state.

    A missing side is unbounded. Bounds that depend on cells not yet
    initialized are treated as unbounded during initialization.
    """
    rows = np.asarray(rows, dtype=int)
    lo = np.full(rows.size, -np.inf)
    hi = np.full(rows.size, np.inf)
    if rule is None:
        return lo, hi
    for side, text, default in (("lo", rule.lo, -np.inf), ("hi", rule.hi, np.inf)):
        if text is None:
            continue
        vals, _ = _evaluate(text, state, extra, extra_deps)
        vals = np.asarray(vals, float)[rows]
        bad = np.isnan(vals)
        if bad.any():
            if state.t > 0:
                raise BoundsError(f"bound {text!r} is undefined for rows {rows[bad][:10].tolist()}")
            vals = np.where(bad, default, vals)
        if side == "lo":
            lo = vals
        else:
            hi = vals
    wrong = lo > hi
    if wrong.any():
        ids = state.dataset.ids[rows[wrong]][:10].tolist()
        raise BoundsError(f"inconsistent bounds (lo > hi) for ids {ids}")
    return lo, hi


# -- ordering and eligibility --------------------------------------------------


def observed_fraction(state, role_name) -> float:
    s = state.status[role_name]
    eligible = s != INELIGIBLE
    if not eligible.any():
        return 1.0
    return float((s[eligible] == OBSERVED).mean())


def order_by_missingness(fractions):
    """Indices sorting observed fractions in descending order, ties by position."""
    fr = list(fractions)
    return sorted(range(len(fr)), key=lambda i: (-fr[i], i))


def apply_eligibility(state, role: VariableRole):
    """Mark rule-ineligible cells and register the cells to impute."""
    name = role.name
    state.require(name)
    if state.kinds[name] == "label":
        raise PlanError(f"label column {name!r} cannot be imputed")
    status = state.status[name]
    if role.eligibility is not None:
        mask, deps = _evaluate(role.eligibility, state)
        unresolved = [d for d in deps if d in state.values and np.isnan(_raw_numeric(state, d)).any()]
        if unresolved:
            bad = np.zeros(state.n, bool)
            for d in unresolved:
                bad |= np.isnan(_raw_numeric(state, d))
            raise DataError(
                f"eligibility of {name!r} depends on unresolved values of {sorted(unresolved)} "
                f"(ids {state.dataset.ids[bad][:10].tolist()})"
            )
        eligible = np.asarray(mask, bool)
        conflict = ~eligible & (status == OBSERVED)
        if conflict.any():
            raise DataError(
                f"{name!r} is observed for ineligible ids {state.dataset.ids[conflict][:10].tolist()}"
            )
        status[~eligible] = INELIGIBLE
        state.values[name][~eligible] = np.nan
    targets = status == MISSING
    state.targets[name] = targets
    if targets.any():
        state.versions[name] = -1
    else:
        state.versions.pop(name, None)


def _raw_numeric(state, name):
    if state.kinds[name] == "label":
        v = state.values[name]
        return np.array([np.nan if x is None else 0.0 for x in v])
    return state.numeric(name)


# -- designs and pooling -------------------------------------------------------


@dataclass
class PoolChoice:
    region: str
    rows: np.ndarray
    dummies: str
    pooled: bool


def select_pool(policy: PoolingPolicy, region: str, regions: np.ndarray, observed: np.ndarray, force_pooled=None) -> PoolChoice:
    """Fitting rows and dummy type for the targets of ``region``.

    ``regions`` gives each row's region and ``observed`` flags eligible rows
    with an observed response.
    """
    force = policy.force_pooled if force_pooled is None else force_pooled
    in_region = observed & (regions == region)
    if not force and in_region.sum() >= policy.min_cell:
        return PoolChoice(region, in_region, "country", False)
    return PoolChoice(region, observed.copy(), "region", True)


def dummy_block(values, fit_rows, prefix):
    """Indicator columns for the categories seen in ``fit_rows``, first one dropped."""
    vals = np.asarray(values, dtype=object)
    cats = sorted({v for v in vals[fit_rows] if v is not None and not (isinstance(v, float) and math.isnan(v))}, key=_sort_key)
    cols = [(vals == c).astype(float) for c in cats[1:]]
    names = [f"{prefix}[{c}]" for c in cats[1:]]
    return cols, names


def _sort_key(v):
    return (0, float(v), "") if isinstance(v, (int, float, np.floating, np.integer)) else (1, 0.0, str(v))


def build_lag_features(state: ChainState, chain: SpellChainSpec, h: int):
    """Previous-spell ownership and amount for spell ``h`` (zeros at ``h = 1``)."""
    if h == 1:
        zero = np.zeros(state.n)
        return {LAG_OWN: zero, LAG_AMOUNT: zero.copy()}, set()
    prev = chain.column(h - 1)
    amount = state.numeric(prev)
    return {LAG_OWN: (amount > 0).astype(float), LAG_AMOUNT: amount.copy()}, {prev}


def _features(state, role, rows, init, extra=None, extra_deps=None):
    """Evaluate a role's predictors over the rows flagged in ``rows``.

    Returns ``(features, dropped, deps)`` where each feature is
    ``(name, values, nominal)``; nominal features are expanded into dummies
    per fitting group.
    """
    feats, dropped, used = [], [], set()
    for p in role.predictors:
        expr = ex.parse(p)
        deps = _dependencies(expr, state, extra_deps)
        if init and any(state.pending(d) for d in deps):
            dropped.append(p)
            continue
        nominal = expr.is_name and not (extra and p in extra) and state.kinds.get(p) in ("nominal", "label")
        if nominal:
            if np.isnan(_raw_numeric(state, p)[rows]).any():
                raise DataError(f"predictor {p!r} of {role.name!r} has unresolved missing values")
            vals = state.values[p]
            if state.kinds[p] != "label":
                vals = np.where(state.status[p] == INELIGIBLE, 0.0, vals)
        else:
            vals, _ = _evaluate(p, state, extra, extra_deps)
            vals = np.asarray(vals, float)
            if np.isnan(vals[rows]).any():
                raise DataError(f"predictor {p!r} of {role.name!r} has unresolved missing values")
        feats.append((p, vals, nominal))
        used |= deps
    return feats, dropped, used


def _design(feats, dummy_cols, dummy_names, fit_rows, target_rows):
    """Intercept, features and dummies; columns constant over the fit rows are dropped."""
    rows = np.concatenate([fit_rows, target_rows])
    cols, names = [np.ones(rows.size)], ["const"]
    for name, vals, nominal in feats:
        if nominal:
            fit_mask = np.zeros(vals.shape[0], bool)
            fit_mask[fit_rows] = True
            block, bnames = dummy_block(vals, fit_mask, name)
            cols.extend(c[rows] for c in block)
            names.extend(bnames)
        else:
            cols.append(vals[rows])
            names.append(name)
    cols.extend(c[rows] for c in dummy_cols)
    names.extend(dummy_names)
    X = np.column_stack(cols)
    X_fit, X_tgt = X[: fit_rows.size], X[fit_rows.size:]
    keep = np.ones(X.shape[1], bool)
    if fit_rows.size:
        keep[1:] = np.ptp(X_fit[:, 1:], axis=0) > 0
    return X_fit[:, keep], X_tgt[:, keep], [n for n, k in zip(names, keep) if k]


def update_variable(state: ChainState, role: VariableRole, init: bool, extra=None, extra_deps=None, q=None):
    """Refit and redraw the missing cells of one variable."""
    name = role.name
    targets = state.targets.get(name)
    if targets is None or not targets.any():
        return
    status = state.status[name]
    observed = status == OBSERVED
    relevant = observed | targets
    feats, dropped, used = _features(state, role, relevant, init, extra, extra_deps)
    versions = {d: state.versions[d] for d in sorted(used) if d in state.versions}
    y_all = state.values[name]

    groups = []
    if role.pool is None:
        groups.append(("ALL", observed, targets, None, False))
    else:
        pol = role.pool
        state.require(pol.country_column)
        countries = state.values[pol.country_column]
        regions = pol.region_array(countries)
        pooled_targets = np.zeros(state.n, bool)
        for region in pol.regions:
            tgt = targets & (regions == region)
            if not tgt.any():
                continue
            choice = select_pool(pol, region, regions, observed)
            if choice.pooled:
                pooled_targets |= tgt
            else:
                groups.append((region, choice.rows, tgt, countries, False))
        if pooled_targets.any():
            groups.append(("POOLED", observed, pooled_targets, regions, True))

    group_events = []
    for label, fit_mask, tgt_mask, dummy_src, pooled in groups:
        fit_rows = np.flatnonzero(fit_mask)
        tgt_rows = np.flatnonzero(tgt_mask)
        if role.pool is not None:
            prefix = "region" if pooled else role.pool.country_column
            d_cols, d_names = dummy_block(dummy_src, fit_mask, prefix)
        else:
            d_cols, d_names = [], []
        X_fit, X_tgt, cols = _design(feats, d_cols, d_names, fit_rows, tgt_rows)
        if pooled and fit_rows.size <= X_fit.shape[1]:
            raise PoolingError(
                f"{name!r}: pooled fit has {fit_rows.size} rows for {X_fit.shape[1]} parameters; reduce the predictors"
            )
        bounds = None
        if role.bounds is not None:
            bounds = evaluate_bounds_rule(role.bounds, tgt_rows, state, extra, extra_deps)
        spec = role.imputer if q is None else role.imputer.with_q(q)
        values = im.draw(spec, y_all[fit_rows], X_fit, X_tgt, state.rng, bounds)
        y_all[tgt_rows] = values
        group_events.append({"region": label, "pooled": pooled, "fit_rows": fit_rows, "target_rows": tgt_rows, "columns": cols})
    state.versions[name] = state.t
    state.record({
        **state.location,
        "t": state.t,
        "variable": name,
        "init": init,
        "predictors": [f[0] for f in feats],
        "dropped": dropped,
        "versions": versions,
        "q": (role.imputer.q if q is None else q) if role.imputer.method in (im.PMM, im.TWO_PART) else None,
        "groups": group_events,
    })


def _guarded(state, location, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ImputationError:
        raise
    except (FcsForgeError, np.linalg.LinAlgError, ValueError) as exc:
        loc = {**state.location, **location, "t": state.t}
        where = ", ".join(f"{k}={v}" for k, v in loc.items())
        raise ImputationError(f"imputation failed at {where}: {exc}", loc, exc) from exc


# -- FCS blocks ----------------------------------------------------------------


def _fcs_order(state, block):
    fr = [observed_fraction(state, v.name) for v in block.variables]
    return [block.variables[i] for i in order_by_missingness(fr)]


def prepare_fcs(state, block: FcsBlock):
    for v in block.variables:
        _guarded(state, {"variable": v.name}, apply_eligibility, state, v)
    return _fcs_order(state, block)


def initialize_monotone(state: ChainState, block: FcsBlock, order=None):
    """The t = 0 pass: each variable conditions only on variables already initialized."""
    order = order if order is not None else prepare_fcs(state, block)
    state.t = 0
    for role in order:
        _guarded(state, {"variable": role.name}, update_variable, state, role, True)
    return state


def fcs_sweep(state: ChainState, block: FcsBlock, order=None):
    """One sweep: update every incomplete variable in order on the latest values."""
    order = order if order is not None else _fcs_order(state, block)
    state.t += 1
    for role in order:
        _guarded(state, {"variable": role.name}, update_variable, state, role, False)
    return state


def run_fcs_block(state, block: FcsBlock, burn_in: int):
    state.location = {"block": block.name}
    order = prepare_fcs(state, block)
    initialize_monotone(state, block, order)
    for _ in range(burn_in):
        fcs_sweep(state, block, order)
    return state


# -- two-fold monetary chain ---------------------------------------------------


def _register_chains(state, block: TwofoldBlock):
    for ch in block.chains:
        cols = ch.columns
        for c in cols:
            state.require(c)
        H = ch.spells if isinstance(ch, SpellChainSpec) else len(cols)
        state.chains[ch.name] = (cols, H)


def _chain_roles(ch):
    if isinstance(ch, SpellChainSpec):
        return [(h, ch.role(h)) for h in range(1, ch.spells + 1)]
    return [(None, v) for v in ch.variables]


def _run_chain(state, ch, init):
    for h, role in _chain_roles(ch):
        state.location = {**state.location, "chain": ch.name, "spell": h}
        if isinstance(ch, SpellChainSpec):
            extra, lag_deps = build_lag_features(state, ch, h)
            extra_deps = {LAG_OWN: lag_deps, LAG_AMOUNT: lag_deps}
            state.location["lag_nonzero"] = int(np.count_nonzero(extra[LAG_OWN]) + np.count_nonzero(extra[LAG_AMOUNT]))
        else:
            extra, extra_deps = None, None
        _guarded(state, {"variable": role.name}, update_variable, state, role, init, extra, extra_deps)


def run_twofold_monetary_chain(state: ChainState, block: TwofoldBlock, burn_in: int):
    """Initialize all chains, then iterate them in order ``burn_in`` times."""
    base = {"block": block.name}
    state.location = dict(base)
    _register_chains(state, block)
    for ch in block.chains:
        for h, role in _chain_roles(ch):
            state.location = {**base, "chain": ch.name, "spell": h}
            _guarded(state, {"variable": role.name}, apply_eligibility, state, role)
    state.t = 0
    for ch in block.chains:
        state.location = dict(base)
        _run_chain(state, ch, True)
    for _ in range(burn_in):
        state.t += 1
        for ch in block.chains:
            state.location = dict(base)
            _run_chain(state, ch, False)
    state.location = {}
    return state


# -- replicates ----------------------------------------------------------------


def run_replicate(dataset: ColumnarDataset, spec: ChainSpec, m: int, trace: bool = False):
    """Run every block on one replicate; returns ``(completed, trace)``."""
    state = ChainState(dataset, make_rng(spec.replicate_seed(m)), trace)
    try:
        for block in spec.blocks:
            T = spec.burn_in if block.burn_in is None else block.burn_in
            if isinstance(block, FcsBlock):
                run_fcs_block(state, block, T)
            else:
                run_twofold_monetary_chain(state, block, T)
    except ImputationError as exc:
        exc.location = {"replicate": m, **exc.location}
        raise ImputationError(f"replicate {m}: {exc}", exc.location, exc.cause) from exc
    return state.completed(), state.trace


def _replicate_job(args):
    return run_replicate(*args)


def run_multiple_imputation(dataset: ColumnarDataset, spec: ChainSpec, trace: bool = False, workers=None) -> ImputedStore:
    """``spec.replicates`` independent chains, replicate ``m`` seeded with ``base_seed ^ m``."""
    workers = spec.workers if workers is None else workers
    jobs = [(dataset, spec, m, trace) for m in range(1, spec.replicates + 1)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_job, jobs))
    else:
        results = [_replicate_job(j) for j in jobs]
    store = ImputedStore(dataset.copy(), [r[0] for r in results])
    store.traces = [r[1] for r in results] if trace else None
    return store
