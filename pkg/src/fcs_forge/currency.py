"""Historical currency harmonization onto a PPP-adjusted EUR-2017 scale.

A reported amount is first resolved to a canonical currency valid in the
reported year, redenominated when only the successor currency has an
exchange-rate series, converted to US dollars of the reported year, deflated
to 2017 with the US CPI, and finally expressed in 2017 euros. When the
exchange rate for the reported year is missing, the amount is carried to the
nearest year with a rate using the local CPI first.

Tables are plain CSV files in one directory:

``currencies.csv``
    ``code,country,valid_from,valid_to`` (``country`` may be ``*``)
``crosswalk.csv``
    ``label,country,year_from,year_to,code`` for generic and historical labels
``fx.csv``
    ``code,year,rate`` local units per US dollar
``cpi.csv``
    ``scope,year,index``; scope ``USD`` is the US CPI, local CPIs are keyed by
    currency code or country code
``redenominations.csv``
    ``old_code,new_code,factor,effective_year`` (old units per new unit)
``ppp.csv``
    ``country,factor`` scaling EUR-2017 to DE-2017 purchasing power
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConversionError, DataError, TableError

YEAR_MIN, YEAR_MAX = 1900, 2019
BASE_YEAR = 2017
USD = "USD"
EUR = "EUR"
WILDCARD = "*"
ITEMS = tuple(f"Y{i}" for i in range(1, 9))

BUNDLED_TABLES = Path(__file__).parent / "data" / "tables"


class LabelKind(str, Enum):
    ISO_OR_LEGACY = "IsoOrLegacy"
    GENERIC = "Generic"
    EXPLICIT_HISTORICAL = "ExplicitHistorical"


class Status(str, Enum):
    CONVERTED = "Converted"
    UNRESOLVED_LABEL = "UnresolvedLabel"
    NO_FX_COVERAGE = "NoFxCoverage"
    NO_CPI_COVERAGE = "NoCpiCoverage"
    INCONSISTENT = "Inconsistent"


@dataclass(frozen=True)
class CurrencyLabel:
    """A currency as reported.

    ``parse`` reads ``"[generic] shilling"`` and ``"[historical] reichsmark"``
    as generic and historical labels; any other text is taken as a code.
    """

    kind: LabelKind
    text: str

    def __post_init__(self):
        if not self.text:
            raise DataError("currency label text is empty")

    @classmethod
    def parse(cls, raw: str) -> "CurrencyLabel":
        raw = raw.strip()
        low = raw.lower()
        for prefix, kind in (("[generic]", LabelKind.GENERIC), ("[historical]", LabelKind.EXPLICIT_HISTORICAL)):
            if low.startswith(prefix):
                return cls(kind, raw[len(prefix):].strip().lower())
        return cls(LabelKind.ISO_OR_LEGACY, raw.upper())

    def __str__(self):
        if self.kind is LabelKind.ISO_OR_LEGACY:
            return self.text
        tag = "generic" if self.kind is LabelKind.GENERIC else "historical"
        return f"[{tag}] {self.text}"


@dataclass(frozen=True)
class CanonicalCurrency:
    code: str
    valid_from: int
    valid_to: int
    country: str

    def __post_init__(self):
        if self.valid_from > self.valid_to:
            raise TableError(f"{self.code}: valid_from {self.valid_from} > valid_to {self.valid_to}")

    def valid_in(self, year: int) -> bool:
        return self.valid_from <= year <= self.valid_to


@dataclass(frozen=True)
class RedenominationRule:
    old_code: str
    new_code: str
    factor: float
    effective_year: int

    def __post_init__(self):
        if not self.factor > 0:
            raise TableError(f"redenomination {self.old_code}->{self.new_code} needs factor > 0")


@dataclass(frozen=True)
class FxSeries:
    code: str
    rates: dict

    def __post_init__(self):
        bad = [y for y, r in self.rates.items() if not r > 0]
        if bad:
            raise TableError(f"FX series {self.code} has non-positive rates in {sorted(bad)}")


@dataclass(frozen=True)
class CpiSeries:
    scope: str
    values: dict

    def __post_init__(self):
        bad = [y for y, v in self.values.items() if not v > 0]
        if bad:
            raise TableError(f"CPI series {self.scope} has non-positive levels in {sorted(bad)}")


@dataclass(frozen=True)
class PppIndex:
    country: str
    factor: float

    def __post_init__(self):
        if not self.factor > 0:
            raise TableError(f"PPP factor for {self.country} must be positive")


@dataclass(frozen=True)
class MonetaryRecord:
    amount: float
    label: CurrencyLabel
    country: str
    year: int
    item: str = "Y1"
    id: str | None = None

    def __post_init__(self):
        if not (self.amount > 0 and math.isfinite(self.amount)):
            raise DataError(f"record {self.id}: amount must be positive, got {self.amount}")
        if not YEAR_MIN <= self.year <= YEAR_MAX:
            raise DataError(f"record {self.id}: year {self.year} outside [{YEAR_MIN}, {YEAR_MAX}]")
        if self.item not in ITEMS:
            raise DataError(f"record {self.id}: unknown item {self.item!r}")

    def scaled(self, k: float) -> "MonetaryRecord":
        return MonetaryRecord(self.amount * k, self.label, self.country, self.year, self.item, self.id)


@dataclass(frozen=True)
class ConversionOutcome:
    status: Status
    eur2017: float | None = None
    ppp: float | None = None
    bridge_year: int | None = None
    path: tuple = ()
    code: str | None = None
    message: str = ""

    def __post_init__(self):
        if (self.status is Status.CONVERTED) != (self.eur2017 is not None):
            raise ValueError("eur2017 must be present exactly when status is Converted")
        if self.ppp is not None and self.eur2017 is None:
            raise ValueError("ppp requires eur2017")

    @property
    def converted(self) -> bool:
        return self.status is Status.CONVERTED


def _read_csv(path: Path, columns):
    if not path.exists():
        return []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = [c for c in columns if c not in (reader.fieldnames or [])]
        if missing:
            raise TableError(f"{path.name}: missing columns {missing}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            rows.append((lineno, {c: (row[c] or "").strip() for c in columns}))
        return rows


def _year(text, where):
    try:
        return int(text)
    except ValueError:
        raise TableError(f"{where}: bad year {text!r}") from None


def _real(text, where):
    try:
        return float(text)
    except ValueError:
        raise TableError(f"{where}: bad number {text!r}") from None


@dataclass(frozen=True)
class CrosswalkRow:
    label: str
    country: str
    year_from: int
    year_to: int
    code: str


@dataclass
class ConversionTables:
    """Immutable-after-load lookup tables for conversion."""

    currencies: dict = field(default_factory=dict)
    crosswalk: list = field(default_factory=list)
    fx: dict = field(default_factory=dict)
    cpi: dict = field(default_factory=dict)
    redenominations: dict = field(default_factory=dict)
    ppp: dict = field(default_factory=dict)

    def __post_init__(self):
        self._check_crosswalk()

    @classmethod
    def load(cls, directory=BUNDLED_TABLES) -> "ConversionTables":
        d = Path(directory)
        if not d.is_dir():
            raise TableError(f"table directory {d} not found")
        currencies = defaultdict(list)
        for ln, r in _read_csv(d / "currencies.csv", ["code", "country", "valid_from", "valid_to"]):
            where = f"currencies.csv:{ln}"
            currencies[r["code"].upper()].append(
                CanonicalCurrency(r["code"].upper(), _year(r["valid_from"], where), _year(r["valid_to"], where), r["country"].upper())
            )
        crosswalk = []
        for ln, r in _read_csv(d / "crosswalk.csv", ["label", "country", "year_from", "year_to", "code"]):
            where = f"crosswalk.csv:{ln}"
            crosswalk.append(
                CrosswalkRow(r["label"].lower(), r["country"].upper(), _year(r["year_from"], where), _year(r["year_to"], where), r["code"].upper())
            )
        fx = defaultdict(dict)
        for ln, r in _read_csv(d / "fx.csv", ["code", "year", "rate"]):
            where = f"fx.csv:{ln}"
            fx[r["code"].upper()][_year(r["year"], where)] = _real(r["rate"], where)
        cpi = defaultdict(dict)
        for ln, r in _read_csv(d / "cpi.csv", ["scope", "year", "index"]):
            where = f"cpi.csv:{ln}"
            cpi[r["scope"].upper()][_year(r["year"], where)] = _real(r["index"], where)
        reden = {}
        for ln, r in _read_csv(d / "redenominations.csv", ["old_code", "new_code", "factor", "effective_year"]):
            where = f"redenominations.csv:{ln}"
            rule = RedenominationRule(r["old_code"].upper(), r["new_code"].upper(), _real(r["factor"], where), _year(r["effective_year"], where))
            if rule.old_code in reden:
                raise TableError(f"{where}: second redenomination rule for {rule.old_code}")
            reden[rule.old_code] = rule
        ppp = {}
        for ln, r in _read_csv(d / "ppp.csv", ["country", "factor"]):
            where = f"ppp.csv:{ln}"
            ppp[r["country"].upper()] = PppIndex(r["country"].upper(), _real(r["factor"], where))
        return cls(
            currencies=dict(currencies),
            crosswalk=crosswalk,
            fx={k: FxSeries(k, v) for k, v in fx.items()},
            cpi={k: CpiSeries(k, v) for k, v in cpi.items()},
            redenominations=reden,
            ppp=ppp,
        )

    def _check_crosswalk(self):
        by_key = defaultdict(list)
        for row in self.crosswalk:
            by_key[(row.label, row.country)].append(row)
        for (label, country), rows in by_key.items():
            rows = sorted(rows, key=lambda r: r.year_from)
            for a, b in zip(rows, rows[1:]):
                if b.year_from <= a.year_to and a.code != b.code:
                    raise TableError(
                        f"ambiguous crosswalk: {label!r} in {country} maps to both {a.code} and {b.code} "
                        f"in {b.year_from}-{min(a.year_to, b.year_to)}"
                    )

    def currency(self, code: str, country: str):
        rows = self.currencies.get(code)
        if not rows:
            return None
        for wanted in (country, WILDCARD):
            for r in rows:
                if r.country == wanted:
                    return r
        return rows[0]

    def rate(self, code: str, year: int):
        if code == USD:
            return 1.0
        s = self.fx.get(code)
        return None if s is None else s.rates.get(year)

    def has_fx(self, code: str) -> bool:
        return code == USD or code in self.fx

    def local_cpi(self, code: str, country: str):
        if code == USD and USD in self.cpi:
            return self.cpi[USD]
        return self.cpi.get(code) or self.cpi.get(country)


def load_tables(directory=BUNDLED_TABLES) -> ConversionTables:
    return ConversionTables.load(directory)


def resolve_currency(rec: MonetaryRecord, tables: ConversionTables) -> CanonicalCurrency:
    """Canonical currency for a record, or :class:`ConversionError`.

    Codes pass through when the year is inside their validity interval.
    Generic and historical labels are looked up by (country, year), a
    country-specific crosswalk row taking precedence over a ``*`` row.
    """
    label = rec.label
    if label.kind is LabelKind.ISO_OR_LEGACY:
        code = label.text
    else:
        code = None
        for wanted in (rec.country, WILDCARD):
            hits = [
                r for r in tables.crosswalk
                if r.label == label.text and r.country == wanted and r.year_from <= rec.year <= r.year_to
            ]
            if hits:
                code = hits[0].code
                break
        if code is None:
            raise ConversionError(Status.UNRESOLVED_LABEL.value, f"no crosswalk entry for {label} in {rec.country} {rec.year}")
    canon = tables.currency(code, rec.country)
    if canon is None:
        raise ConversionError(Status.UNRESOLVED_LABEL.value, f"unknown currency code {code!r}")
    if not canon.valid_in(rec.year):
        raise ConversionError(
            Status.INCONSISTENT.value,
            f"{code} is valid {canon.valid_from}-{canon.valid_to}, not in {rec.year}",
        )
    return canon


def apply_redenomination(amount: float, code: str, year: int, rules, has_series=None):
    """Express ``amount`` in the successor currency when only it has a series.

    ``rules`` is a mapping ``old_code -> RedenominationRule`` or a list of
    rules; chains of rules are followed. ``has_series(code)`` says whether a
    code has its own exchange-rate series; by default a code is redenominated
    whenever a rule exists. Returns ``(amount, code)``.
    """
    if not isinstance(rules, dict):
        rules = {r.old_code: r for r in rules}
    seen = set()
    while code in rules and not (has_series is not None and has_series(code)):
        if code in seen:
            raise TableError(f"redenomination rules form a cycle at {code}")
        seen.add(code)
        rule = rules[code]
        amount = amount / rule.factor
        code = rule.new_code
    return amount, code


def nearest_rate_year(years, t: int):
    """Nearest available year to ``t``; equidistant years resolve to the earlier one."""
    years = sorted(years)
    if not years:
        return None
    return min(years, key=lambda y: (abs(y - t), y))


def convert_to_eur2017(rec: MonetaryRecord, canon: CanonicalCurrency, tables: ConversionTables) -> ConversionOutcome:
    """Convert a resolved record to 2017 euros.

    ``x_EUR = x / eta_t * CPI_US,2017 / CPI_US,t * eta_EUR,2017``. When
    ``eta_t`` is missing the amount is first moved to the nearest year ``t0``
    with a rate via ``CPI_local,t0 / CPI_local,t``, and the formula is applied
    at ``t0``.
    """
    t = rec.year
    amount = rec.amount
    path = []
    code = canon.code

    def fail(status, message, bridge=None):
        return ConversionOutcome(status, bridge_year=bridge, path=tuple(path), code=code, message=message)

    if not tables.has_fx(code):
        new_amount, new_code = apply_redenomination(amount, code, t, tables.redenominations, tables.has_fx)
        if new_code != code:
            path.append(("redenominate", code, new_code, amount / new_amount))
            amount, code = new_amount, new_code
    if not tables.has_fx(code):
        return fail(Status.NO_FX_COVERAGE, f"no exchange-rate series for {code}")

    eur_2017 = tables.rate(EUR, BASE_YEAR)
    if eur_2017 is None:
        return fail(Status.NO_FX_COVERAGE, "no EUR rate for the base year")
    us_cpi = tables.cpi.get(USD)
    if us_cpi is None or BASE_YEAR not in us_cpi.values:
        return fail(Status.NO_CPI_COVERAGE, "no US CPI for the base year")

    t_fx = t
    bridge_year = None
    eta = tables.rate(code, t)
    if eta is None:
        t0 = nearest_rate_year(tables.fx[code].rates.keys(), t)
        if t0 is None:
            return fail(Status.NO_FX_COVERAGE, f"{code} has no exchange rates")
        local = tables.local_cpi(code, canon.country if canon.country != WILDCARD else rec.country)
        if local is None or t not in local.values or t0 not in local.values:
            return fail(Status.NO_CPI_COVERAGE, f"no local CPI for {code} in {t} and {t0}", t0)
        ratio = local.values[t0] / local.values[t]
        path.append(("bridge_cpi", t, t0, ratio))
        amount *= ratio
        t_fx, bridge_year, eta = t0, t0, tables.rate(code, t0)
    if t_fx not in us_cpi.values:
        return fail(Status.NO_CPI_COVERAGE, f"no US CPI for {t_fx}", bridge_year)
    usd = amount / eta
    path.append(("to_usd", code, t_fx, 1.0 / eta))
    deflator = us_cpi.values[BASE_YEAR] / us_cpi.values[t_fx]
    usd_2017 = usd * deflator
    path.append(("us_cpi", t_fx, BASE_YEAR, deflator))
    eur = usd_2017 * eur_2017
    path.append(("to_eur", BASE_YEAR, eur_2017))
    return ConversionOutcome(Status.CONVERTED, eur2017=eur, bridge_year=bridge_year, path=tuple(path), code=code)


def ppp_adjust(eur2017: float, country: str, idx) -> float:
    """Multiply by the country's PPP factor (``DE`` is the base, factor 1)."""
    if not math.isfinite(eur2017):
        raise DataError("PPP adjustment needs a finite amount")
    entry = idx.get(country)
    if entry is None:
        raise ConversionError("MissingPpp", f"no PPP factor for country {country!r}")
    factor = entry.factor if isinstance(entry, PppIndex) else float(entry)
    return eur2017 * factor


def convert_record(rec: MonetaryRecord, tables: ConversionTables) -> ConversionOutcome:
    """Resolve, convert and PPP-adjust one record, capturing failures."""
    try:
        canon = resolve_currency(rec, tables)
    except ConversionError as exc:
        return ConversionOutcome(Status(exc.status), message=str(exc))
    out = convert_to_eur2017(rec, canon, tables)
    if out.converted and rec.country in tables.ppp:
        ppp = ppp_adjust(out.eur2017, rec.country, tables.ppp)
        out = ConversionOutcome(out.status, out.eur2017, ppp, out.bridge_year, out.path + (("ppp", rec.country, ppp / out.eur2017),), out.code)
    return out


def nearest_rank(sorted_values, p: float):
    """Nearest-rank percentile of already sorted values: element ``ceil(p n)``."""
    n = len(sorted_values)
    rank = max(1, math.ceil(round(p * n, 9)))
    return sorted_values[min(rank, n) - 1]


def trim_bounds(values, lower_q: float = 0.025, upper_q: float = 0.975):
    """Nearest-rank trimming bounds and the mask of values kept.

    Non-finite values are never kept. With fewer than two finite values
    nothing is trimmed.
    """
    if not 0 <= lower_q <= upper_q <= 1:
        raise ValueError("need 0 <= lower_q <= upper_q <= 1")
    v = np.asarray(values, float)
    finite = np.isfinite(v)
    s = np.sort(v[finite])
    if s.size == 0:
        return math.nan, math.nan, finite
    if s.size < 2:
        return float(s[0]), float(s[0]), finite
    lo = float(nearest_rank(s, lower_q))
    hi = float(nearest_rank(s, upper_q))
    return lo, hi, finite & (v >= lo) & (v <= hi)


@dataclass(frozen=True)
class CoverageRow:
    group: str
    total: int
    converted: int

    @property
    def rate(self) -> float:
        return 100.0 * self.converted / self.total

    def formatted(self):
        return (self.group, self.total, self.converted, f"{self.rate:.2f}")


def coverage_report(records, outcomes):
    """Converted share (in percent) by item, by country, and overall.

    Groups with no records are omitted.
    """
    if len(records) != len(outcomes):
        raise ValueError("one outcome per record is required")
    counts = defaultdict(lambda: [0, 0])
    for rec, out in zip(records, outcomes):
        for key in (f"item:{rec.item}", f"country:{rec.country}", "ALL"):
            counts[key][0] += 1
            counts[key][1] += int(out.converted)

    def order(key):
        kind = key.split(":")[0]
        return ({"item": 0, "country": 1, "ALL": 2}[kind], key)

    return [CoverageRow(k, *counts[k]) for k in sorted(counts, key=order) if counts[k][0] > 0]


def convert_records(records, tables: ConversionTables, lower_q=0.025, upper_q=0.975):
    """Convert all records and trim PPP amounts per item, pooled across countries.

    Returns ``(outcomes, kept)``; ``kept`` is False for failed conversions and
    for converted amounts outside the trimming bounds, which are then treated
    as missing downstream.
    """
    outcomes = [convert_record(r, tables) for r in records]
    kept = np.zeros(len(records), bool)
    by_item = defaultdict(list)
    for i, (r, o) in enumerate(zip(records, outcomes)):
        if o.converted:
            by_item[r.item].append(i)
    for item, idx in by_item.items():
        vals = [outcomes[i].ppp if outcomes[i].ppp is not None else outcomes[i].eur2017 for i in idx]
        _, _, mask = trim_bounds(vals, lower_q, upper_q)
        kept[np.asarray(idx)] = mask
    return outcomes, kept


def read_records(path):
    """Records from a CSV with ``id,amount,currency,country,year,item`` columns."""
    if not Path(path).exists():
        raise DataError(f"records file {path} not found")
    rows = _read_csv(Path(path), ["id", "amount", "currency", "country", "year", "item"])
    records = []
    for ln, r in rows:
        try:
            records.append(
                MonetaryRecord(
                    float(r["amount"]), CurrencyLabel.parse(r["currency"]), r["country"].upper(),
                    int(r["year"]), r["item"].upper(), r["id"],
                )
            )
        except (ValueError, DataError) as exc:
            raise DataError(f"{Path(path).name}:{ln}: {exc}") from None
    return records


def write_outcomes(path, records, outcomes, kept):
    def fmt(v):
        return "" if v is None else repr(float(v))

    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["id", "item", "country", "year", "status", "code", "eur2017", "ppp", "bridge_year", "kept"])
        for r, o, k in zip(records, outcomes, kept):
            w.writerow([
                r.id, r.item, r.country, r.year, o.status.value, o.code or "",
                fmt(o.eur2017), fmt(o.ppp), "" if o.bridge_year is None else o.bridge_year, int(bool(k)),
            ])
