"""Imputation plans as YAML documents.

A plan has the top-level keys ``data``, ``imputations`` (M, default 5),
``burn_in`` (T, default 10), ``seed``, ``workers``, ``pooling`` and
``blocks``. Example::

    data:
      id: id
      columns: {country: label, age: real, x1: real, x2: binary}
    imputations: 5
    burn_in: 10
    seed: 7
    pooling: {min_cell: 50, country_column: country}
    blocks:
      - type: fcs
        name: core
        variables:
          - {name: x1, method: gaussian, predictors: [age, x2]}
          - {name: x2, method: logit, predictors: [age, x1], pool: true}
      - type: twofold
        name: money
        chains:
          - type: spells
            name: Y1
            spells: 3
            method: two_part
            amount: {method: pmm, transform: log}
            predictors: [age, lag_own, lag_amount, seqmean(Y2)]
            eligibility: "mat_{h} == 1"
          - type: variables
            name: Y4_8
            variables:
              - {name: Y4, method: two_part, amount: {method: pmm, transform: log}}

``pool: true`` applies the plan-level pooling policy; a mapping overrides
some of its fields. Eligibility defaults to always eligible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from ..engine import (
    DEFAULT_BURN_IN,
    DEFAULT_REPLICATES,
    BoundsRule,
    ChainSpec,
    FcsBlock,
    PoolingPolicy,
    SpellChainSpec,
    TwofoldBlock,
    VariableChain,
    VariableRole,
)
from ..errors import PlanError
from ..expressions import ExpressionError, parse as parse_expression, render
from ..imputers import ImputerSpec
from .dataset import DEFAULT_MISSING_CODES, KINDS


@dataclass(frozen=True)
class DataSpec:
    id: str = "id"
    columns: dict = field(default_factory=dict)
    missing_codes: tuple = DEFAULT_MISSING_CODES


@dataclass(frozen=True)
class Plan:
    spec: ChainSpec
    data: DataSpec = field(default_factory=DataSpec)
    pooling: PoolingPolicy = field(default_factory=PoolingPolicy)


_TOP = {"data", "imputations", "burn_in", "seed", "workers", "pooling", "blocks"}
_DATA = {"id", "columns", "missing_codes"}
_POOL = {"regions", "min_cell", "country_column"}
_IMPUTER = {"method", "q", "transform", "amount"}
_ROLE = _IMPUTER | {"name", "predictors", "eligibility", "bounds", "pool"}
_SPELLS = _IMPUTER | {"type", "name", "spells", "predictors", "eligibility", "bounds", "pool",
                      "regional_spells", "q_full_until", "q_floor"}
_VARCHAIN = {"type", "name", "variables"}
_FCS = {"type", "name", "variables", "burn_in"}
_TWOFOLD = {"type", "name", "chains", "burn_in"}


def _mapping(node, path):
    if not isinstance(node, dict):
        raise PlanError(f"{path}: expected a mapping")
    return node


def _keys(node, allowed, path, required=()):
    _mapping(node, path)
    unknown = sorted(set(node) - allowed)
    if unknown:
        raise PlanError(f"{path}: unknown keys {unknown}")
    for r in required:
        if r not in node:
            raise PlanError(f"{path}.{r}: required key missing")


def _int(node, key, path, default, minimum=None):
    v = node.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise PlanError(f"{path}.{key}: expected an integer")
    if minimum is not None and v < minimum:
        raise PlanError(f"{path}.{key}: must be >= {minimum}")
    return v


def _expr(text, path):
    if text is None:
        return None
    text = str(text)
    try:
        parse_expression(render(text, 2))
    except ExpressionError as exc:
        raise PlanError(f"{path}: {exc}") from None
    return text


def _pooling(node, path, base=None):
    if node is None:
        return base or PoolingPolicy()
    _keys(node, _POOL, path)
    base = base or PoolingPolicy()
    kwargs = {}
    if "regions" in node:
        reg = _mapping(node["regions"], f"{path}.regions")
        kwargs["regions"] = {str(k): tuple(str(c) for c in v) for k, v in reg.items()}
    if "min_cell" in node:
        kwargs["min_cell"] = _int(node, "min_cell", path, 50, 1)
    if "country_column" in node:
        kwargs["country_column"] = str(node["country_column"])
    return replace(base, **kwargs)


def _imputer(node, path):
    if "method" not in node:
        raise PlanError(f"{path}.method: required key missing")
    amount = None
    if "amount" in node:
        sub = node["amount"]
        _keys(sub, _IMPUTER - {"amount"}, f"{path}.amount", ("method",))
        amount = _imputer(sub, f"{path}.amount")
    try:
        return ImputerSpec(str(node["method"]), _int(node, "q", path, 10, 1), str(node.get("transform", "none")), amount)
    except ValueError as exc:
        raise PlanError(f"{path}: {exc}") from None


def _bounds(node, path):
    if node is None:
        return None
    _keys(node, {"lo", "hi"}, path)
    return BoundsRule(_expr(node.get("lo"), f"{path}.lo"), _expr(node.get("hi"), f"{path}.hi"))


def _pool_for(node, path, policy):
    v = node.get("pool", False)
    if v is False or v is None:
        return None
    if v is True:
        return policy
    return _pooling(v, path, policy)


def _predictors(node, path):
    preds = node.get("predictors", [])
    if not isinstance(preds, list):
        raise PlanError(f"{path}.predictors: expected a list")
    return tuple(_expr(p, f"{path}.predictors[{i}]") for i, p in enumerate(preds))


def _role(node, path, policy):
    _keys(node, _ROLE, path, ("name", "method"))
    try:
        return VariableRole(
            str(node["name"]),
            _imputer(node, path),
            _predictors(node, path),
            _expr(node.get("eligibility"), f"{path}.eligibility"),
            _bounds(node.get("bounds"), f"{path}.bounds"),
            _pool_for(node, f"{path}.pool", policy),
        )
    except PlanError as exc:
        if str(exc).startswith(path):
            raise
        raise PlanError(f"{path}: {exc}") from None


def _variables(node, path, policy):
    vs = node.get("variables")
    if not isinstance(vs, list) or not vs:
        raise PlanError(f"{path}.variables: expected a non-empty list")
    return tuple(_role(v, f"{path}.variables[{i}]", policy) for i, v in enumerate(vs))


def _chain(node, path, policy):
    _mapping(node, path)
    kind = node.get("type")
    if kind == "spells":
        _keys(node, _SPELLS, path, ("name", "spells", "method"))
        reg = node.get("regional_spells")
        if reg is not None:
            reg = _int(node, "regional_spells", path, None, 0)
        return SpellChainSpec(
            str(node["name"]),
            _int(node, "spells", path, 1, 1),
            _imputer(node, path),
            _predictors(node, path),
            _expr(node.get("eligibility"), f"{path}.eligibility"),
            _bounds(node.get("bounds"), f"{path}.bounds"),
            _pool_for(node, f"{path}.pool", policy),
            reg,
            _int(node, "q_full_until", path, 7, 0),
            _int(node, "q_floor", path, 3, 1),
        )
    if kind == "variables":
        _keys(node, _VARCHAIN, path, ("name", "variables"))
        return VariableChain(str(node["name"]), _variables(node, path, policy))
    raise PlanError(f"{path}.type: expected 'spells' or 'variables'")


def _block(node, path, policy):
    _mapping(node, path)
    kind = node.get("type")
    burn = node.get("burn_in")
    if burn is not None:
        burn = _int(node, "burn_in", path, None, 1)
    if kind == "fcs":
        _keys(node, _FCS, path, ("name", "variables"))
        return FcsBlock(str(node["name"]), _variables(node, path, policy), burn)
    if kind == "twofold":
        _keys(node, _TWOFOLD, path, ("name", "chains"))
        chains = node.get("chains")
        if not isinstance(chains, list) or not chains:
            raise PlanError(f"{path}.chains: expected a non-empty list")
        return TwofoldBlock(str(node["name"]), tuple(_chain(c, f"{path}.chains[{i}]", policy) for i, c in enumerate(chains)), burn)
    raise PlanError(f"{path}.type: expected 'fcs' or 'twofold'")


def plan_from_dict(doc) -> Plan:
    _keys(doc, _TOP, "plan", ("blocks",))
    data = DataSpec()
    if "data" in doc:
        d = doc["data"]
        _keys(d, _DATA, "plan.data")
        cols = _mapping(d.get("columns", {}), "plan.data.columns")
        for k, v in cols.items():
            if v not in KINDS:
                raise PlanError(f"plan.data.columns.{k}: unknown kind {v!r}")
        codes = d.get("missing_codes", list(DEFAULT_MISSING_CODES))
        if not isinstance(codes, list):
            raise PlanError("plan.data.missing_codes: expected a list")
        data = DataSpec(str(d.get("id", "id")), {str(k): str(v) for k, v in cols.items()}, tuple(str(c) for c in codes))
    policy = _pooling(doc.get("pooling"), "plan.pooling")
    blocks = doc["blocks"]
    if not isinstance(blocks, list) or not blocks:
        raise PlanError("plan.blocks: expected a non-empty list")
    parsed = tuple(_block(b, f"plan.blocks[{i}]", policy) for i, b in enumerate(blocks))
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise PlanError("plan.seed: expected a non-negative integer")
    spec = ChainSpec(
        parsed,
        burn_in=_int(doc, "burn_in", "plan", DEFAULT_BURN_IN, 1),
        replicates=_int(doc, "imputations", "plan", DEFAULT_REPLICATES, 0),
        base_seed=seed,
        workers=_int(doc, "workers", "plan", 1, 1),
    )
    return Plan(spec, data, policy)


def parse_plan(path) -> Plan:
    path = Path(path)
    if not path.exists():
        raise PlanError(f"plan file {path} not found")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise PlanError(f"{path.name}: not valid YAML: {exc}") from None
    return plan_from_dict(doc)


def _imputer_dict(spec: ImputerSpec):
    out = {"method": spec.method}
    if spec.q != 10:
        out["q"] = spec.q
    if spec.transform != "none":
        out["transform"] = spec.transform
    if spec.amount is not None:
        out["amount"] = _imputer_dict(spec.amount)
    return out


def _pool_dict(pool, policy):
    if pool is None:
        return {}
    if pool == policy:
        return {"pool": True}
    diff = {}
    if pool.regions != policy.regions:
        diff["regions"] = {k: list(v) for k, v in pool.regions.items()}
    if pool.min_cell != policy.min_cell:
        diff["min_cell"] = pool.min_cell
    if pool.country_column != policy.country_column:
        diff["country_column"] = pool.country_column
    return {"pool": diff}


def _common(obj, policy):
    out = {}
    if obj.predictors:
        out["predictors"] = list(obj.predictors)
    if obj.eligibility is not None:
        out["eligibility"] = obj.eligibility
    if obj.bounds is not None:
        out["bounds"] = {k: v for k, v in (("lo", obj.bounds.lo), ("hi", obj.bounds.hi)) if v is not None}
    out.update(_pool_dict(obj.pool, policy))
    return out


def _role_dict(role: VariableRole, policy):
    return {"name": role.name, **_imputer_dict(role.imputer), **_common(role, policy)}


def plan_to_dict(plan: Plan) -> dict:
    policy = plan.pooling
    blocks = []
    for b in plan.spec.blocks:
        if isinstance(b, FcsBlock):
            d = {"type": "fcs", "name": b.name, "variables": [_role_dict(v, policy) for v in b.variables]}
        else:
            chains = []
            for c in b.chains:
                if isinstance(c, SpellChainSpec):
                    cd = {"type": "spells", "name": c.name, "spells": c.spells, **_imputer_dict(c.imputer), **_common(c, policy)}
                    if c.regional_spells is not None:
                        cd["regional_spells"] = c.regional_spells
                    if c.q_full_until != 7:
                        cd["q_full_until"] = c.q_full_until
                    if c.q_floor != 3:
                        cd["q_floor"] = c.q_floor
                else:
                    cd = {"type": "variables", "name": c.name, "variables": [_role_dict(v, policy) for v in c.variables]}
                chains.append(cd)
            d = {"type": "twofold", "name": b.name, "chains": chains}
        if b.burn_in is not None:
            d["burn_in"] = b.burn_in
        blocks.append(d)
    s = plan.spec
    return {
        "data": {"id": plan.data.id, "columns": dict(plan.data.columns), "missing_codes": list(plan.data.missing_codes)},
        "imputations": s.replicates,
        "burn_in": s.burn_in,
        "seed": s.base_seed,
        "workers": s.workers,
        "pooling": {
            "min_cell": policy.min_cell,
            "country_column": policy.country_column,
            "regions": {k: list(v) for k, v in policy.regions.items()},
        },
        "blocks": blocks,
    }


def dump_plan(plan: Plan, path=None) -> str:
    text = yaml.safe_dump(plan_to_dict(plan), sort_keys=False, default_flow_style=None, width=100)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def with_overrides(plan: Plan, replicates=None, burn_in=None, seed=None) -> Plan:
    kw = {}
    if replicates is not None:
        kw["replicates"] = replicates
    if burn_in is not None:
        kw["burn_in"] = burn_in
    if seed is not None:
        kw["base_seed"] = seed
    return replace(plan, spec=replace(plan.spec, **kw)) if kw else plan


__all__ = ["DataSpec", "Plan", "parse_plan", "plan_from_dict", "plan_to_dict", "dump_plan", "with_overrides"]
