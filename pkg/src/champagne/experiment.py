"""Experiment bundles: one spec in, a directory of cross-checked reports out.

A bundle reruns byte-identically for the same spec (the timestamp in
summary.json is the only moving part), and every number in summary.json
carries a `source` key naming the module report it was copied from, so
nothing in the summary is free-floating.

Exit-code contract: 0 clean, 1 schema violation, 2 internal inconsistency
(a certified bound violated by simulation beyond 3 sigma, or hard verdict
disagreement between criteria).
"""

import csv
import datetime
import json
import math
import os

import numpy as np
import jsonschema

from . import bounds as bounds_mod
from .criteria import Verdict, integral_report, mutually_consistent, shell_series
from .errors import SchemaError
from .field import ShellGeometry, generate_regular_field, profile_from_dict
from .whitney import boundary_points, wiener_series
from .wos import WalkConfig, simulate_raw, wilson_interval, _estimate_from_column

SPEC_VERSION = 1

EXPERIMENT_SCHEMA = {
    "type": "object",
    "required": ["specVersion", "name", "dimension", "K", "jMin", "jMax",
                 "profile", "sep", "seeds", "depths", "trials"],
    "properties": {
        "specVersion": {"const": SPEC_VERSION},
        "name": {"type": "string", "minLength": 1},
        "dimension": {"type": "integer", "minimum": 3},
        "K": {"type": "number", "exclusiveMinimum": 1.0},
        "jMin": {"type": "integer", "minimum": 1},
        "jMax": {"type": "integer", "minimum": 0},
        "profile": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"enum": ["powerlaw", "powerlog", "table"]}},
        },
        "sep": {"type": "number", "exclusiveMinimum": 0.0,
                "exclusiveMaximum": 1.0},
        "subshells": {"type": "integer", "minimum": 1},
        "seeds": {"type": "array", "items": {"type": "integer"},
                  "minItems": 1, "maxItems": 2},
        "depths": {"type": "array", "items": {"type": "integer", "minimum": 1},
                   "minItems": 1},
        "trials": {"type": "integer", "minimum": 1},
        "eta": {"type": "number", "exclusiveMinimum": 0.0,
                "exclusiveMaximum": 1e-2},
        "maxLevel": {"type": "integer", "minimum": 4, "maximum": 40},
        "taus": {"type": "array",
                 "items": {"type": "array", "items": {"type": "number"}}},
        "outputDir": {"type": "string"},
    },
    "additionalProperties": False,
}


def validate_spec(doc):
    """Schema-check an experiment spec; raises SchemaError with a pointer."""
    try:
        jsonschema.validate(doc, EXPERIMENT_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"experiment spec invalid at {path}: {exc.message}")
    if doc["jMax"] < doc["jMin"] - 1:
        raise SchemaError("experiment spec invalid at jMax: below jMin-1")
    for depth in doc["depths"]:
        if depth > doc["jMax"]:
            raise SchemaError(f"experiment spec invalid at depths: {depth} "
                              "exceeds jMax")
    return doc


def _dump(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def run_experiment(spec, out_dir):
    """Execute an experiment spec; returns (exit_code, summary dict)."""
    validate_spec(spec)
    os.makedirs(out_dir, exist_ok=True)
    d = spec["dimension"]
    shells = ShellGeometry(spec["K"], spec["jMin"], spec["jMax"])
    profile = profile_from_dict(spec["profile"])
    field_seed = spec["seeds"][0]
    sim_seed = spec["seeds"][1] if len(spec["seeds"]) > 1 else field_seed + 1
    eta = spec.get("eta", 1e-6)
    max_level = spec.get("maxLevel", 9)
    depths = sorted(spec["depths"])

    field = generate_regular_field(d, shells, profile, spec["sep"],
                                   field_seed, subshells=spec.get("subshells", 1))
    field.save(os.path.join(out_dir, "field.json"))

    # -- criteria ------------------------------------------------------------
    series = shell_series(profile, d, shells)
    series_alt = {K_alt: shell_series(profile, d,
                                      ShellGeometry(K_alt, 1, 48))
                  for K_alt in (4.5, 8.0)}
    integral = integral_report(profile, d, K=shells.K,
                               levels=max(shells.j_max + 8, 24))
    criteria_doc = {
        "series": series.to_dict(),
        "integral": integral.to_dict(),
        "seriesStability": {str(k): r.to_dict() for k, r in series_alt.items()},
    }
    _dump(os.path.join(out_dir, "criteria.json"), criteria_doc)

    # -- wiener --------------------------------------------------------------
    taus = spec.get("taus")
    if taus is None:
        taus = [list(map(float, t)) for t in boundary_points(d, 4)]
    wreports = [wiener_series(field, np.asarray(t) / np.linalg.norm(t),
                              max_level) for t in taus]
    wiener_doc = {"maxLevel": max_level,
                  "reports": [r.to_dict(include_cubes=False) for r in wreports]}
    _dump(os.path.join(out_dir, "wiener.json"), wiener_doc)

    # -- bounds --------------------------------------------------------------
    union_docs = {str(J): bounds_mod.union_tail_bound(field, J).to_dict()
                  for J in depths}
    bounds_doc = {"unionTail": union_docs}
    try:
        for parity in ("even", "odd"):
            bounds_doc[f"product_{parity}"] = bounds_mod.product_avoidance_bound(
                field, parity).to_dict()
    except Exception as exc:  # precondition not met: report, don't fail
        bounds_doc["productSkipped"] = str(exc)
    _dump(os.path.join(out_dir, "bounds.json"), bounds_doc)

    # -- simulation ----------------------------------------------------------
    cfg = WalkConfig(trials=spec["trials"], boundary_tol=eta, seed=sim_seed)
    outcomes, absorber, _ = simulate_raw(field, np.zeros(d), cfg, depths)
    estimates = [_estimate_from_column(field, J, cfg.trials, outcomes[:, i])
                 for i, J in enumerate(depths)]
    with open(os.path.join(out_dir, "sweep.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["depth", "pHat", "ciLow", "ciHigh", "tailBound"])
        for e in estimates:
            wr.writerow([e.depth, repr(e.p_hat), repr(e.ci_low),
                         repr(e.ci_high), repr(e.tail_bound)])

    # -- consistency ---------------------------------------------------------
    verdicts = [series.verdict, integral.verdict] + \
        [r.verdict for r in wreports] + \
        [r.verdict for r in series_alt.values()]
    verdict_ok = mutually_consistent(verdicts)

    # union bound domination: fraction absorbed (at full depth) by an
    # obstacle beyond rho_J must sit under tailBound(J) + 3 sigma
    full_abs = outcomes[:, -1] == 1
    abs_norm = np.where(absorber[:, -1] >= 0,
                        field.norms[np.clip(absorber[:, -1], 0, None)], -1.0)
    domination_ok = True
    domination = {}
    for i, J in enumerate(depths):
        rho_j = shells.rho(J)
        beyond = float(np.mean(full_abs & (abs_norm >= rho_j - 1e-12)))
        bound = estimates[i].tail_bound
        sigma = math.sqrt(max(beyond * (1 - beyond), 1e-12) / cfg.trials)
        ok = beyond <= bound + 3.0 * sigma
        domination[str(J)] = {"hitBeyond": beyond, "bound": bound, "ok": ok}
        domination_ok = domination_ok and ok

    mono_ok = all(a.p_hat >= b.p_hat for a, b in zip(estimates, estimates[1:]))
    consistent = verdict_ok and domination_ok and mono_ok
    exit_code = 0 if consistent else 2

    summary = {
        "specVersion": SPEC_VERSION,
        "name": spec["name"],
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "verdicts": {
            "series": {"value": series.verdict.value,
                       "source": "criteria.json#series.verdict"},
            "integral": {"value": integral.verdict.value,
                         "source": "criteria.json#integral.verdict"},
            "wiener": [{"value": r.verdict.value,
                        "source": f"wiener.json#reports[{i}].verdict"}
                       for i, r in enumerate(wreports)],
        },
        "simulation": [
            {"depth": e.depth,
             "pHat": {"value": e.p_hat, "source": "sweep.csv#pHat"},
             "bracketLow": {"value": e.bracket()[0],
                            "source": "sweep.csv#pHat-tailBound"},
             "tailBound": {"value": e.tail_bound,
                           "source": f"bounds.json#unionTail.{e.depth}.value"}}
            for e in estimates
        ],
        "checks": {
            "verdictsConsistent": verdict_ok,
            "unionDomination": domination,
            "depthMonotone": mono_ok,
        },
        "consistent": consistent,
        "exitCode": exit_code,
    }
    _dump(os.path.join(out_dir, "summary.json"), summary)
    return exit_code, summary
