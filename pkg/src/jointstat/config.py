"""Declarative battery configuration (JSON) and its conversion to/from BatteryConfig.

Schema (version 1)::

    {
      "schema_version": 1,
      "null": {"kind": "bernoulli", "p": 0.5}      # or {"kind": "finite", "pmf": [...]}
                                                     # or {"kind": "uniform"}
      "N": 4, "h": 2, "s": 2, "n": 16384,
      "method": "auto",                              # moment method for catalog tests
      "moment_options": {"M": 1000000, "seed": 0},   # optional, for monte_carlo moments
      "triples": [
        {"sum": {"test": "monobit", "params": {}},
         "lb":  {"test": "block_frequency", "params": {"N_lb": 4}},
         "sb":  {"test": "ones_count", "params": {"L_sb": 2}}}
      ],
      "quads": [{"d": [[1.0, 1.0]], "sum_refs": [0, 1], "name": "pair"}]
    }

Every statistic is a catalog test id with parameters; see ``catalog.instantiate_test``.
"""

from __future__ import annotations

import json

from .catalog import instantiate_test
from .errors import BadParams
from .model import BatteryConfig, LongBlockSpec, NullModel, QuadSpec, ShortBlockSpec, SumSpec, Triple, ValidatedBattery, validate_battery

SCHEMA_VERSION = 1
_KINDS = {"sum": SumSpec, "lb": LongBlockSpec, "sb": ShortBlockSpec}


def null_from_dict(d: dict) -> NullModel:
    kind = d.get("kind")
    if kind == "bernoulli":
        return NullModel.bernoulli(float(d.get("p", 0.5)))
    if kind == "finite":
        return NullModel.finite(d["pmf"])
    if kind == "uniform":
        return NullModel.uniform()
    raise BadParams(f"unknown null model kind {kind!r}")


def null_to_dict(null: NullModel) -> dict:
    if null.is_finite:
        return {"kind": "finite", "pmf": list(null.pmf)}
    return {"kind": "uniform"}


def _thaw(value):
    if isinstance(value, tuple):
        return [_thaw(v) for v in value]
    return value


def _stat(entry: dict, kind: str, null: NullModel, method: str, options: dict):
    if not isinstance(entry, dict) or "test" not in entry:
        raise BadParams(f"{kind} entry needs a 'test' id, got {entry!r}")
    spec = instantiate_test(entry["test"], entry.get("params", {}), null, method, **options)
    if not isinstance(spec, _KINDS[kind]):
        raise BadParams(f"test {entry['test']!r} is not a {kind} statistic")
    return spec


def config_from_dict(doc: dict) -> BatteryConfig:
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise BadParams(f"unsupported config schema_version {version!r}")
    null = null_from_dict(doc.get("null", {"kind": "bernoulli"}))
    method = doc.get("method", "auto")
    options = dict(doc.get("moment_options", {}))
    triples = []
    for t in doc.get("triples", []):
        triples.append(Triple(*(_stat(t.get(k), k, null, method, options) for k in ("sum", "lb", "sb"))))
    quads = [QuadSpec(q["d"], q["sum_refs"], q.get("name", "quad")) for q in doc.get("quads", [])]
    try:
        return BatteryConfig(null, tuple(triples), tuple(quads), int(doc["N"]), int(doc["h"]), int(doc["s"]), int(doc["n"]))
    except KeyError as exc:
        raise BadParams(f"config is missing {exc.args[0]!r}") from None


def read_config(path) -> tuple[dict, ValidatedBattery]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BadParams(f"config is not valid JSON: {exc}") from None
    return doc, validate_battery(config_from_dict(doc))


def load_config(path) -> ValidatedBattery:
    return read_config(path)[1]


def config_to_dict(battery: ValidatedBattery | BatteryConfig, method: str = "auto", moment_options: dict | None = None) -> dict:
    """Inverse of ``config_from_dict`` for batteries built from catalog tests."""
    cfg = battery.config if isinstance(battery, ValidatedBattery) else battery
    triples = []
    for q, t in enumerate(cfg.triples):
        entry = {}
        for kind in ("sum", "lb", "sb"):
            spec = getattr(t, kind)
            if spec.origin is None:
                raise BadParams(f"triple {q}: {kind} statistic was not built from a catalog test")
            test_id, params = spec.origin
            entry[kind] = {"test": test_id, "params": {k: _thaw(v) for k, v in params}}
        triples.append(entry)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "null": null_to_dict(cfg.null),
        "N": cfg.N,
        "h": cfg.h,
        "s": cfg.s,
        "n": cfg.n,
        "method": method,
        "triples": triples,
        "quads": [{"d": [list(r) for r in qd.d], "sum_refs": list(qd.sum_refs), "name": qd.name} for qd in cfg.quads],
    }
    if moment_options:
        doc["moment_options"] = dict(moment_options)
    return doc
