import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fcs_forge import currency as cu
from fcs_forge.currency import CurrencyLabel, MonetaryRecord, Status
from fcs_forge.errors import ConversionError, DataError, TableError

TABLES = cu.BUNDLED_TABLES


# -- independent oracle over the raw table files --------------------------------


def read_raw(directory=TABLES):
    def rows(name):
        with open(directory / name, newline="") as f:
            return list(csv.DictReader(f))

    fx, cpi = {}, {}
    for r in rows("fx.csv"):
        fx.setdefault(r["code"], {})[int(r["year"])] = float(r["rate"])
    for r in rows("cpi.csv"):
        cpi.setdefault(r["scope"], {})[int(r["year"])] = float(r["index"])
    reden = {r["old_code"]: (r["new_code"], float(r["factor"])) for r in rows("redenominations.csv")}
    return fx, cpi, reden


RAW = read_raw()


def oracle(amount, code, country, year, raw=RAW):
    """Hand arithmetic: redenominate, bridge to t0 with local CPI, then the direct formula."""
    fx, cpi, reden = raw
    while code != "USD" and code not in fx and code in reden:
        code, factor = reden[code]
        amount = amount / factor
    rates = {y: 1.0 for y in range(1900, 2020)} if code == "USD" else fx[code]
    t0 = year
    d = 0
    while t0 not in rates:
        d += 1
        if year - d in rates:
            t0 = year - d
        elif year + d in rates:
            t0 = year + d
    if t0 != year:
        local = cpi[code] if code in cpi else cpi[country]
        amount = amount * local[t0] / local[year]
    value = amount / rates[t0] * cpi["USD"][2017] / cpi["USD"][t0] * fx["EUR"][2017]
    return value, (t0 if t0 != year else None)


CASES = [
    # direct
    (100.0, "USD", "US", 2017),
    (250.0, "USD", "US", 1980),
    (1200.0, "EUR", "DE", 2005),
    (900.0, "EUR", "FR", 2010),
    (1500.0, "DEM", "DE", 1980),
    (8000.0, "ATS", "AT", 1970),
    (4100.0, "FRF", "FR", 1975),
    (2300.0, "PLN", "PL", 2000),
    (3100.0, "CHF", "CH", 1990),
    (15000.0, "SKK", "SK", 2000),
    (700.0, "RON", "RO", 2010),
    # bridged: later side, tie to the earlier side, earlier side, after the series end
    (300.0, "DEM", "DE", 1943),
    (120.0, "DEM", "DE", 1930),
    (400.0, "ATS", "AT", 1942),
    (410.0, "ATS", "AT", 1944),
    (420.0, "ATS", "AT", 1940),
    (5000.0, "CHF", "CH", 2019),
    (2500.0, "FRF", "FR", 1950),
    # redenominated
    (50000.0, "PLZ", "PL", 1993),
    (1.2e6, "PLZ", "PL", 1991),
    (3.0e6, "ROL", "RO", 1995),
    (9.9e6, "ROL", "RO", 2004),
    # redenominated and bridged
    (40000.0, "PLZ", "PL", 1980),
]


def record(amount, label, country, year, item="Y1"):
    return MonetaryRecord(amount, CurrencyLabel.parse(label), country, year, item)


@pytest.fixture(scope="module")
def tables():
    return cu.load_tables()


@pytest.mark.parametrize("amount, code, country, year", CASES)
def test_conversion_matches_hand_oracle(tables, amount, code, country, year):
    rec = record(amount, code, country, year)
    out = cu.convert_to_eur2017(rec, cu.resolve_currency(rec, tables), tables)
    expected, t0 = oracle(amount, code, country, year)
    assert out.status is Status.CONVERTED
    assert abs(out.eur2017 - expected) <= 1e-9 * abs(expected)
    assert out.bridge_year == t0


def test_case_coverage():
    kinds = {"bridged": 0, "redenominated": 0, "before": 0, "after": 0}
    for amount, code, country, year in CASES:
        _, t0 = oracle(amount, code, country, year)
        if t0 is not None:
            kinds["bridged"] += 1
            kinds["before" if t0 < year else "after"] += 1
        if code in RAW[2] and code not in RAW[0]:
            kinds["redenominated"] += 1
    assert len(CASES) >= 20
    assert kinds["before"] >= 2 and kinds["after"] >= 2 and kinds["redenominated"] >= 4


def test_bridge_examples(tables):
    rec = record(300.0, "[historical] reichsmark", "DE", 1943)
    out = cu.convert_record(rec, tables)
    assert out.converted and out.bridge_year == 1947
    assert [step[0] for step in out.path] == ["bridge_cpi", "to_usd", "us_cpi", "to_eur", "ppp"]
    assert cu.convert_record(record(400.0, "ATS", "AT", 1942), tables).bridge_year == 1938
    assert cu.nearest_rate_year([1938, 1946], 1942) == 1938
    assert cu.nearest_rate_year([1938, 1946], 1943) == 1946
    assert cu.nearest_rate_year([], 1943) is None


def test_usd_base_year_collapses(tables):
    out = cu.convert_record(record(100.0, "USD", "US", 2017), tables)
    assert out.eur2017 == pytest.approx(100.0 * RAW[0]["EUR"][2017], rel=1e-12)


def write_tables(path, fx, cpi, currencies, crosswalk=(), reden=(), ppp=()):
    def dump(name, header, rows):
        with open(path / name, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            w.writerows(rows)

    dump("fx.csv", ["code", "year", "rate"], fx)
    dump("cpi.csv", ["scope", "year", "index"], cpi)
    dump("currencies.csv", ["code", "country", "valid_from", "valid_to"], currencies)
    dump("crosswalk.csv", ["label", "country", "year_from", "year_to", "code"], crosswalk)
    dump("redenominations.csv", ["old_code", "new_code", "factor", "effective_year"], reden)
    dump("ppp.csv", ["country", "factor"], ppp)
    return path


def test_hand_arithmetic_270(tmp_path):
    d = write_tables(
        tmp_path,
        fx=[("LOC", 1980, "2"), ("EUR", 2017, "0.9")],
        cpi=[("USD", 1980, "40"), ("USD", 2017, "120")],
        currencies=[("LOC", "XX", 1950, 2019), ("EUR", "DE", 1999, 2019), ("USD", "*", 1900, 2019)],
        ppp=[("XX", "1.2"), ("DE", "1.0")],
    )
    t = cu.load_tables(d)
    out = cu.convert_record(record(200.0, "LOC", "XX", 1980), t)
    assert out.eur2017 == pytest.approx(270.0, rel=1e-12)
    assert out.ppp == pytest.approx(324.0, rel=1e-12)


def test_chained_redenomination_single_multiplication(tmp_path):
    d = write_tables(
        tmp_path,
        fx=[("NEW", 1975, "4"), ("EUR", 2017, "0.5")],
        cpi=[("USD", 1975, "50"), ("USD", 2017, "100")],
        currencies=[("OLD", "XX", 1900, 1960), ("MID", "XX", 1961, 1980), ("NEW", "XX", 1981, 2019),
                    ("EUR", "DE", 1999, 2019)],
        reden=[("OLD", "MID", "100", 1961), ("MID", "NEW", "1000", 1981)],
    )
    t = cu.load_tables(d)
    assert cu.apply_redenomination(1e6, "OLD", 1950, t.redenominations) == (10.0, "NEW")
    rec = record(1e6, "MID", "XX", 1975)
    out = cu.convert_to_eur2017(rec, cu.resolve_currency(rec, t), t)
    # hand: 1e6 / 1000 = 1000 NEW; / 4 = 250 USD; * 100 / 50 = 500 USD-2017; * 0.5 = 250
    assert out.eur2017 == pytest.approx(250.0, rel=1e-12)
    assert out.path[0] == ("redenominate", "MID", "NEW", 1000.0)


def test_redenomination_examples(tables):
    assert cu.apply_redenomination(50_000, "PLZ", 1993, tables.redenominations) == (5.0, "PLN")
    assert cu.apply_redenomination(100, "CHF", 1990, tables.redenominations) == (100, "CHF")
    amt, code = cu.apply_redenomination(3e6, "ROL", 1995, list(tables.redenominations.values()))
    assert (amt, code) == (3e6 / 10_000, "RON")
    # a code with its own series is left alone
    assert cu.apply_redenomination(5, "PLZ", 1993, tables.redenominations, lambda c: True) == (5, "PLZ")


def test_redenomination_cycle_rejected():
    rules = [cu.RedenominationRule("A", "B", 10, 1900), cu.RedenominationRule("B", "A", 10, 1900)]
    with pytest.raises(TableError):
        cu.apply_redenomination(1.0, "A", 1950, rules)


def test_plz_pln_continuity(tables):
    # constant real local value: 10,000 PLZ in 1994 buys what 1 PLN buys in 1995 (up to inflation)
    cpi = RAW[1]["PL"]
    before = cu.convert_record(record(10_000.0 * cpi[1994], "PLZ", "PL", 1994), tables).eur2017
    after = cu.convert_record(record(1.0 * cpi[1995], "PLN", "PL", 1995), tables).eur2017
    fx = RAW[0]["PLN"]
    us = RAW[1]["USD"]
    expected_ratio = (cpi[1995] / fx[1995] / us[1995]) / (cpi[1994] / fx[1994] / us[1994])
    assert after / before == pytest.approx(expected_ratio, rel=1e-9)
    assert 0.5 < after / before < 2.0


@settings(max_examples=200, deadline=None)
@given(case=st.sampled_from(CASES), k=st.floats(1e-3, 1e6))
def test_scale_equivariance(case, k):
    t = _TABLES
    amount, code, country, year = case
    rec = record(amount, code, country, year)
    canon = cu.resolve_currency(rec, t)
    a = cu.convert_to_eur2017(rec, canon, t).eur2017
    b = cu.convert_to_eur2017(rec.scaled(k), canon, t).eur2017
    assert b == pytest.approx(k * a, rel=1e-12)


_TABLES = cu.load_tables()


def test_bridge_with_rate_is_direct(tables):
    # every year with a rate converts without a bridge, matching the direct formula
    fx, cpi, _ = RAW
    for year in (1950, 1970, 1998):
        rec = record(100.0, "DEM", "DE", year)
        out = cu.convert_to_eur2017(rec, cu.resolve_currency(rec, tables), tables)
        direct = 100.0 / fx["DEM"][year] * cpi["USD"][2017] / cpi["USD"][year] * fx["EUR"][2017]
        assert out.bridge_year is None
        assert out.eur2017 == pytest.approx(direct, rel=1e-12)


# -- resolution -----------------------------------------------------------------


def test_resolve_examples(tables):
    canon = cu.resolve_currency(record(10.0, "[generic] shilling", "AT", 1970), tables)
    assert (canon.code, canon.valid_from, canon.valid_to) == ("ATS", 1925, 1998)
    assert cu.resolve_currency(record(10.0, "EUR", "DE", 2010), tables).code == "EUR"
    with pytest.raises(ConversionError) as err:
        cu.resolve_currency(record(10.0, "EUR", "DE", 1980), tables)
    assert err.value.status == "Inconsistent"
    with pytest.raises(ConversionError) as err:
        cu.resolve_currency(record(10.0, "[generic] thaler", "DE", 1980), tables)
    assert err.value.status == "UnresolvedLabel"


def test_generic_label_uses_year(tables):
    assert cu.resolve_currency(record(1.0, "[generic] zloty", "PL", 1990), tables).code == "PLZ"
    assert cu.resolve_currency(record(1.0, "[generic] zloty", "PL", 2000), tables).code == "PLN"
    assert cu.resolve_currency(record(1.0, "[generic] euro", "AT", 2001), tables).code == "EUR"
    assert cu.resolve_currency(record(1.0, "[generic] franc", "CH", 1980), tables).code == "CHF"


def test_ambiguous_crosswalk_rejected(tmp_path):
    d = write_tables(
        tmp_path, fx=[], cpi=[], currencies=[("AAA", "YU", 1900, 2000), ("BBB", "YU", 1900, 2000)],
        crosswalk=[("dinar", "YU", 1945, 1990, "AAA"), ("dinar", "YU", 1980, 2000, "BBB")],
    )
    with pytest.raises(TableError):
        cu.load_tables(d)


def test_label_parsing():
    assert CurrencyLabel.parse("[generic] Shilling").kind is cu.LabelKind.GENERIC
    assert CurrencyLabel.parse("[historical] Reichsmark").text == "reichsmark"
    assert CurrencyLabel.parse(" eur ").text == "EUR"
    with pytest.raises(DataError):
        CurrencyLabel.parse("[generic]")


def test_record_validation():
    with pytest.raises(DataError):
        record(-1.0, "USD", "US", 2000)
    with pytest.raises(DataError):
        record(1.0, "USD", "US", 1899)
    with pytest.raises(DataError):
        record(1.0, "USD", "US", 2000, item="Y9")


def test_failure_statuses(tables):
    assert cu.convert_record(record(1.0, "[generic] leu", "RO", 1985), tables).status is Status.NO_CPI_COVERAGE
    assert cu.convert_record(record(1.0, "[generic] franc", "FR", 1920), tables).status is Status.NO_CPI_COVERAGE
    assert cu.convert_record(record(1.0, "EUR", "SK", 2005), tables).status is Status.INCONSISTENT
    failed = cu.convert_record(record(1.0, "XYZ", "DE", 2005), tables)
    assert failed.status is Status.UNRESOLVED_LABEL and failed.eur2017 is None and failed.ppp is None
    assert failed.message


def test_no_fx_series(tmp_path):
    d = write_tables(
        tmp_path, fx=[("EUR", 2017, "0.9")], cpi=[("USD", 2017, "100")],
        currencies=[("ZZZ", "XX", 1900, 2019), ("EUR", "DE", 1999, 2019)],
    )
    out = cu.convert_record(record(5.0, "ZZZ", "XX", 2000), cu.load_tables(d))
    assert out.status is Status.NO_FX_COVERAGE


def test_outcome_contract():
    with pytest.raises(ValueError):
        cu.ConversionOutcome(Status.CONVERTED)
    with pytest.raises(ValueError):
        cu.ConversionOutcome(Status.NO_FX_COVERAGE, eur2017=1.0)
    with pytest.raises(ValueError):
        cu.ConversionOutcome(Status.NO_FX_COVERAGE, ppp=1.0)


# -- PPP --------------------------------------------------------------------------


def test_ppp(tables):
    assert cu.ppp_adjust(500.0, "DE", tables.ppp) == 500.0
    assert cu.ppp_adjust(500.0, "XX", {"XX": 1.2}) == pytest.approx(600.0)
    with pytest.raises(ConversionError) as err:
        cu.ppp_adjust(500.0, "ZZ", tables.ppp)
    assert "ZZ" in str(err.value)


# -- trimming and coverage -----------------------------------------------------------


def test_trim_one_to_hundred():
    lo, hi, kept = cu.trim_bounds(np.arange(1, 101))
    assert (lo, hi) == (3.0, 98.0)
    assert kept.sum() == 96


def test_trim_degenerate():
    lo, hi, kept = cu.trim_bounds([7.0] * 10)
    assert lo == hi == 7.0 and kept.all()
    lo, hi, kept = cu.trim_bounds([7.0])
    assert kept.all()


def test_nearest_rank_enumeration():
    v = list(range(1, 11))
    assert [cu.nearest_rank(v, p) for p in (0.0, 0.1, 0.11, 0.5, 0.95, 1.0)] == [1, 1, 2, 5, 10, 10]


def test_trimmed_cells_become_missing(tables):
    recs = [record(float(a), "USD", "US", 2017) for a in range(1, 101)]
    outcomes, kept = cu.convert_records(recs, tables)
    assert kept.sum() == 96
    assert not kept[0] and not kept[1] and kept[2] and not kept[-1]


def test_coverage_table10_replay():
    with open(__import__("pathlib").Path(__file__).parent / "fixtures" / "conversion_coverage.csv") as f:
        rows = list(csv.DictReader(f))
    for r in rows:
        row = cu.CoverageRow(f"item:{r['item']}", int(r["total"]), int(r["converted"]))
        assert row.formatted()[3] == r["rate"]


def test_coverage_from_records_y1(tables):
    ok = cu.ConversionOutcome(Status.CONVERTED, eur2017=1.0)
    bad = cu.ConversionOutcome(Status.UNRESOLVED_LABEL)
    rec = record(1.0, "USD", "US", 2017)
    outcomes = [ok] * 10_739 + [bad] * (11_146 - 10_739)
    table = cu.coverage_report([rec] * len(outcomes), outcomes)
    y1 = next(r for r in table if r.group == "item:Y1")
    assert y1.formatted() == ("item:Y1", 11_146, 10_739, "96.35")
    assert all(r.group != "item:Y2" for r in table)


def test_coverage_three_records(tables):
    recs = [record(1.0, "USD", "US", 2017), record(2.0, "EUR", "DE", 2010), record(3.0, "XYZ", "DE", 2010)]
    outcomes = [cu.convert_record(r, tables) for r in recs]
    table = {r.group: r for r in cu.coverage_report(recs, outcomes)}
    assert table["ALL"].formatted()[3] == "66.67"
    assert table["country:DE"].formatted()[1:] == (2, 1, "50.00")


def test_records_roundtrip(tmp_path, tables):
    path = tmp_path / "records.csv"
    path.write_text(
        "id,amount,currency,country,year,item\n"
        "1,50000,PLZ,PL,1993,Y1\n"
        "2,100,[generic] shilling,AT,1970,Y2\n"
        "3,10,EUR,DE,1980,Y2\n"
    )
    recs = cu.read_records(path)
    outcomes, kept = cu.convert_records(recs, tables)
    out = tmp_path / "out.csv"
    cu.write_outcomes(out, recs, outcomes, kept)
    lines = out.read_text().splitlines()
    assert lines[0].startswith("id,item,country,year,status")
    assert lines[3].split(",")[4] == "Inconsistent"
    bad = tmp_path / "bad.csv"
    bad.write_text("id,amount,currency,country,year,item\n1,abc,USD,US,2000,Y1\n")
    with pytest.raises(DataError, match="bad.csv:2"):
        cu.read_records(bad)
