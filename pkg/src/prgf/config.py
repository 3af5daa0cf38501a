"""Run configuration: JSON schema, defaults, and conversion to a ``BenchConfig``.

A config file is validated before anything runs; unknown keys anywhere are
errors. ``resolve`` fills every default, and the resolved form is what gets
embedded in reports, so feeding a report back in reproduces the run.
"""
import copy
import json

import jsonschema

from .bench import STANDARD_METHODS, BenchConfig
from .errors import ConfigurationError
from .estimator import DEFAULT_C, METHODS
from .oracle import KINDS

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_unit = {"type": "number", "minimum": 0, "maximum": 1}
_posint = {"type": "integer", "minimum": 1}
_opt_unit = {"type": ["number", "null"], "minimum": 0, "maximum": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMA = _obj({
    "dim": {"type": "integer", "minimum": 2},
    "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
    "model": _obj({
        "kind": {"enum": list(KINDS) + ["softplus-classifier"]},
        "seed": {"type": ["integer", "null"], "minimum": 0},
        "scale": _pos,
        "convex": {"type": "boolean"},
        "hidden": _posint,
        "classes": {"type": "integer", "minimum": 2},
        "smooth_block": _posint,
        "smooth_fraction": _unit,
    }),
    "prior": _obj({
        "target_cosine": _unit,
        "mode": {"enum": ["rederived", "systematic", "frozen"]},
        "subspace_factor": _posint,
        "subspace_mode": {"enum": ["block", "image"]},
        "image_shape": {"type": ["array", "null"], "items": _posint, "minItems": 3, "maxItems": 3},
        "low_shape": {"type": ["array", "null"], "items": _posint, "minItems": 3, "maxItems": 3},
    }),
    "methods": {"oneOf": [
        {"type": "array", "items": {"enum": sorted(STANDARD_METHODS)}, "minItems": 1, "uniqueItems": True},
        {"type": "object", "minProperties": 1, "additionalProperties": _obj({
            "method": {"enum": list(METHODS)},
            "lambda_override": _opt_unit,
            "mu_override": _opt_unit,
        }, required=("method",))},
    ]},
    "estimator": _obj({
        "q": _posint,
        "sigma": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "S": _posint,
        "norm_refresh": _posint,
        "lambda_override": _opt_unit,
        "mu_override": _opt_unit,
        "threshold_c": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    }),
    "attack": _obj({
        "norm": {"enum": ["l2", "linf"]},
        "epsilon": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "eta": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "max_queries": _posint,
        "threshold": _num,
        "success_rule": {"enum": ["loss", "misclassify"]},
        "box": {"type": ["array", "null"], "items": _num, "minItems": 2, "maxItems": 2},
    }),
    "start": _obj({
        "x0_range": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
        "min_margin": _num,
        "max_draws": _posint,
    }),
    "output": _obj({
        "dir": {"type": "string"},
        "traces": {"type": "string"},
        "summary": {"type": "string"},
        "curve": {"type": "string"},
        "report": {"type": "string"},
    }),
    "jobs": _posint,
})


def defaults():
    """Fully resolved default config: the standard synthetic benchmark."""
    b = BenchConfig()
    return {
        "dim": b.dim,
        "seeds": list(b.seeds),
        "model": {"seed": None, "convex": True, **b.model},
        "prior": {"target_cosine": b.prior_cosine, "mode": b.prior_mode, "subspace_factor": b.subspace_factor,
                  "subspace_mode": "block", "image_shape": None, "low_shape": None},
        "methods": copy.deepcopy(b.methods),
        "estimator": {"q": 50, "sigma": None, "S": 10, "norm_refresh": 10, "lambda_override": None,
                      "mu_override": None, "threshold_c": DEFAULT_C, **b.estimator},
        "attack": {"norm": "l2", "epsilon": None, "eta": None, "max_queries": 10_000, "threshold": 0.0,
                   "success_rule": "loss", "box": None, **b.attack},
        "start": {"x0_range": list(b.x0_range), "min_margin": b.min_margin, "max_draws": b.max_draws},
        "output": {"dir": "prgf-out", "traces": "traces.jsonl", "summary": "summary.csv", "curve": "curve.csv",
                   "report": "report.json"},
        "jobs": 1,
    }


def validate(raw):
    """Raise ``ConfigurationError`` with the first schema violation."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"invalid config at {where}: {exc.message}") from None


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k == "methods":
            out[k] = copy.deepcopy(v)
        elif isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(raw):
    """Validate ``raw``, fill defaults, and normalise ``methods`` to a name -> settings mapping."""
    if isinstance(raw, dict) and "config" in raw and "summary" in raw:
        raw = raw["config"]  # a report written by a previous run
    validate(raw)
    cfg = _merge(defaults(), raw)
    if isinstance(cfg["methods"], list):
        cfg["methods"] = {name: dict(STANDARD_METHODS[name]) for name in cfg["methods"]}
    if cfg["prior"]["subspace_mode"] == "image":
        shapes = cfg["prior"]["image_shape"], cfg["prior"]["low_shape"]
        if None in shapes:
            raise ConfigurationError("image subspace mode needs prior.image_shape and prior.low_shape")
        if cfg["attack"]["box"] is None and "box" not in raw.get("attack", {}):
            cfg["attack"]["box"] = [0.0, 1.0]
    validate(cfg)
    return cfg


def load(path):
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path} is not valid JSON: {exc}") from None
    return resolve(raw)


def set_path(raw, dotted, value):
    """``set_path(cfg, "estimator.q", 20)`` for command-line overrides."""
    keys = dotted.split(".")
    node = raw
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"cannot set {dotted}: {k} is not an object")
    node[keys[-1]] = value
    return raw


def to_bench_config(cfg):
    """Resolved config -> ``BenchConfig``."""
    est = {k: v for k, v in cfg["estimator"].items() if v is not None}
    model = {k: v for k, v in cfg["model"].items() if k != "seed"}
    prior = cfg["prior"]
    return BenchConfig(
        dim=cfg["dim"],
        seeds=list(cfg["seeds"]),
        model=model,
        model_seed=cfg["model"]["seed"],
        prior_cosine=prior["target_cosine"],
        prior_mode=prior["mode"],
        subspace_factor=prior["subspace_factor"],
        subspace_mode=prior["subspace_mode"],
        image_shape=prior["image_shape"] and tuple(prior["image_shape"]),
        low_shape=prior["low_shape"] and tuple(prior["low_shape"]),
        methods=copy.deepcopy(cfg["methods"]),
        estimator=est,
        attack=dict(cfg["attack"], box=tuple(cfg["attack"]["box"]) if cfg["attack"]["box"] else None),
        x0_range=tuple(cfg["start"]["x0_range"]),
        min_margin=cfg["start"]["min_margin"],
        max_draws=cfg["start"]["max_draws"],
    )
