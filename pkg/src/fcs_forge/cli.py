"""Command line: ``fcs-forge convert | impute | diagnose | simulate``.

Failures print one JSON object ``{"error": <category>, "message": ...}`` on
stderr and exit with a nonzero status.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import currency, diagnostics
from .engine import run_multiple_imputation
from .errors import FcsForgeError
from .io.dataset import INELIGIBLE, MISSING, OBSERVED, load_dataset, write_dataset
from .io.plan import parse_plan, with_overrides
from .io.store import load_store, write_store
from .io.synthetic import Mechanism, SyntheticSpec, generate_synthetic

DEMO_PLANS = Path(__file__).parent / "data" / "plans"
EXIT_ERROR = 1
EXIT_INTERNAL = 3


def _convert(args):
    tables = currency.load_tables(args.tables)
    records = currency.read_records(args.records)
    outcomes, kept = currency.convert_records(records, tables, args.trim_lower, args.trim_upper)
    currency.write_outcomes(args.out, records, outcomes, kept)
    if args.coverage:
        with open(args.coverage, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["group", "total", "converted", "rate"])
            for row in currency.coverage_report(records, outcomes):
                w.writerow(row.formatted())
    return {"records": len(records), "converted": int(sum(o.converted for o in outcomes)), "kept": int(kept.sum())}


def _impute(args):
    plan = with_overrides(parse_plan(args.plan), args.m, args.burnin, args.seed)
    if not plan.data.columns:
        raise FcsForgeError("the plan's data.columns section is required to read the data file")
    ds = load_dataset(args.data, plan.data.columns, plan.data.id, plan.data.missing_codes)
    store = run_multiple_imputation(ds, plan.spec, workers=args.workers)
    write_store(store, args.out)
    return {"rows": ds.n, "replicates": store.M}


def _ipw_predictors(ds0, var, eligible):
    cols = []
    for name, col in ds0.columns.items():
        if name == var or col.kind == "label":
            continue
        if np.all(col.state[eligible] == OBSERVED) and np.ptp(col.values[eligible]) > 0:
            cols.append(col.values[eligible])
    return np.column_stack(cols) if cols else np.empty((int(eligible.sum()), 0))


def _diagnose(args):
    store = load_store(args.store)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds0 = store.original
    names = args.vars.split(",") if args.vars else [
        n for n in ds0.names if np.any(ds0[n].state == MISSING)
    ]
    pooled_rows = []
    for var in names:
        if var not in ds0.columns:
            raise FcsForgeError(f"variable {var!r} is not in the store")
        col0 = ds0[var]
        eligible = col0.state != INELIGIBLE
        observed = col0.state == OBSERVED
        imputed_mask = (col0.state == MISSING) & eligible
        reps = [store.block(m)[var].values[imputed_mask] for m in range(1, store.M + 1)]
        weights = None
        if imputed_mask.any() and observed.sum() > 2:
            Z = _ipw_predictors(ds0, var, eligible)
            countries = None
            if "country" in ds0.columns and ds0["country"].kind == "label":
                countries = ds0["country"].values[eligible]
            resp = observed[eligible].astype(float)
            try:
                w = diagnostics.fit_ipw_weights(resp, Z, countries)
            except FcsForgeError:
                w = diagnostics.fit_ipw_weights(resp, Z, None)
            weights = w[resp == 1]
        report = diagnostics.compare_distributions(var, col0.values[observed], reps, weights)
        diagnostics.write_report(report, out)
        if store.M >= 2:
            comp = [store.block(m)[var].values[eligible] for m in range(1, store.M + 1)]
            p = diagnostics.pooled_mean(comp)
            pooled_rows.append([var, p.point, p.within_var, p.between_var, p.total_var, p.M])
    with open(out / "pooled_means.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["variable", "point", "within", "between", "total", "M"])
        for r in pooled_rows:
            w.writerow([r[0]] + [repr(float(x)) for x in r[1:5]] + [r[5]])
    return {"variables": names}


def _simulate(args):
    mech = Mechanism(args.mechanism, args.rate)
    spec = SyntheticSpec(n=args.n, kind=args.demo, mechanism=mech)
    full, masked, truth = generate_synthetic(spec, args.seed)
    write_dataset(masked, args.out)
    if args.full:
        write_dataset(full, args.full)
    if args.plan:
        Path(args.plan).write_text((DEMO_PLANS / f"demo_{args.demo}.yaml").read_text(encoding="utf-8"), encoding="utf-8")
    if args.truth:
        Path(args.truth).write_text(json.dumps({"means": truth.means, "full_means": truth.full_means}, indent=2, sort_keys=True) + "\n")
    return {"rows": full.n}


def build_parser():
    p = argparse.ArgumentParser(prog="fcs-forge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convert", help="convert monetary records to PPP-adjusted EUR-2017")
    c.add_argument("--records", required=True)
    c.add_argument("--tables", default=str(currency.BUNDLED_TABLES))
    c.add_argument("--out", required=True)
    c.add_argument("--trim-lower", type=float, default=0.025)
    c.add_argument("--trim-upper", type=float, default=0.975)
    c.add_argument("--coverage", help="optional coverage table output")
    c.set_defaults(func=_convert)

    i = sub.add_parser("impute", help="run multiple imputation from a plan")
    i.add_argument("--data", required=True)
    i.add_argument("--plan", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--m", type=int, help="number of imputations (overrides the plan)")
    i.add_argument("--burnin", type=int, help="burn-in iterations (overrides the plan)")
    i.add_argument("--seed", type=int, help="base seed (overrides the plan)")
    i.add_argument("--workers", type=int, default=None)
    i.set_defaults(func=_impute)

    d = sub.add_parser("diagnose", help="density, IPW and pooling diagnostics for a store")
    d.add_argument("--store", required=True)
    d.add_argument("--vars", default="", help="comma-separated variables (default: all with missing cells)")
    d.add_argument("--out", required=True)
    d.add_argument("--seed", type=int, default=None, help="accepted for symmetry; diagnostics are deterministic")
    d.set_defaults(func=_diagnose)

    s = sub.add_parser("simulate", help="write a synthetic dataset")
    s.add_argument("--demo", choices=("gaussian", "monetary"), default="gaussian")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mechanism", choices=("mcar", "mar"), default="mar")
    s.add_argument("--rate", type=float, default=0.3)
    s.add_argument("--out", required=True)
    s.add_argument("--full", help="also write the complete data")
    s.add_argument("--plan", help="also write the matching demo plan")
    s.add_argument("--truth", help="also write the true means as JSON")
    s.set_defaults(func=_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        summary = args.func(args)
    except FcsForgeError as exc:
        print(json.dumps({"error": exc.category, "message": str(exc)}), file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": "io" if isinstance(exc, OSError) else "value", "message": str(exc)}), file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001
        print(json.dumps({"error": "internal", "message": f"{type(exc).__name__}: {exc}"}), file=sys.stderr)
        return EXIT_INTERNAL
    print(json.dumps({"command": args.command, **summary}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
