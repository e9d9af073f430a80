"""Experiment configuration: bundled defaults, JSON loading and validation."""

import copy
import json
from importlib import resources
from pathlib import Path

import jsonschema

from ..errors import ConfigError, InputError
from ..symbol_core import builtin_system, load_system

EXPERIMENTS = ("analyze", "boundedness", "jump-growth", "paraxial-error",
               "corput-sweep", "sp-scaling", "decay-probe")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int_pos = {"type": "integer", "minimum": 1}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_numlist = {"type": "array", "items": _num, "minItems": 1}
_system = {"oneOf": [{"type": "string"}, {"type": "object"}]}
_source = {
    "type": "object",
    "properties": {"family": {"enum": ["gaussian", "solenoidal"]}, "params": {"type": "object"}},
    "required": ["family"],
    "additionalProperties": False,
}
_sheet = {
    "type": "object",
    "properties": {"cone_halfangle": _pos, "stencil_radius": _pos, "n_rays": _int_pos},
    "additionalProperties": False,
}
_grid = {
    "type": "object",
    "properties": {"N": {"type": "array", "items": _int_pos, "minItems": 1},
                   "L": {"type": "array", "items": _pos, "minItems": 1}},
    "required": ["N", "L"],
    "additionalProperties": False,
}
_profile = {
    "type": "object",
    "properties": {"theta_N": _pos, "theta_N1": _pos, "floor": _pair,
                   "amplitude": {"type": "object",
                                 "properties": {"poly": _numlist, "width": _pos},
                                 "additionalProperties": False}},
    "additionalProperties": False,
}

_common = {"experiment": {"enum": list(EXPERIMENTS)}, "seed": {"type": "integer"},
           "description": {"type": "string"}}

SCHEMAS = {
    "analyze": {
        "system": _system, "sheet": _sheet, "samples": _int_pos,
    },
    "boundedness": {
        "system": _system, "sheet": _sheet, "grid": _grid, "source": _source,
        "output_times": _numlist, "check": {"enum": ["auto", "ratio", "constant"]},
        "early_window": _pair, "late_window": _pair, "ratio_max": _pos,
        "constant_from": _num, "constant_tol": _pos,
        "wrap_margin": _pos, "wrap_tol": _pos, "n_quad": _int_pos,
    },
    "jump-growth": {
        "system": _system, "sheet": _sheet, "source": _source,
        "hyperplane": {"type": "object",
                       "properties": {"t_max": _pos, "nt": _int_pos,
                                      "N": {"type": "array", "items": _int_pos},
                                      "L": {"type": "array", "items": _pos},
                                      "periodic": {"type": "boolean"}},
                       "required": ["t_max", "nt", "N", "L"], "additionalProperties": False},
        "order": _int_pos, "mode": {"enum": ["auto", "growth", "flat"]},
        "fit_window": _pair, "slope_tol": _pos, "residual_tol": _pos, "j0_bound": _pos,
        "flat_tol": _pos, "flat_slope_tol": _pos, "min_fit_points": _int_pos,
        "grid_check": {"oneOf": [{"type": "null"},
                                 {"type": "object",
                                  "properties": {"grid": _grid, "times": _numlist},
                                  "required": ["grid", "times"], "additionalProperties": False}]},
    },
    "paraxial-error": {
        "system": _system, "sheet": _sheet, "profile": _profile, "times": _numlist,
        "tol": _pos, "mu_min": _num, "tol_rerun": {"type": "boolean"},
        "crossval": {"oneOf": [{"type": "null"},
                               {"type": "object",
                                "properties": {"times": _numlist, "band": _pair, "grid": _grid,
                                               "factor": _pos},
                                "required": ["times", "band", "grid"], "additionalProperties": False}]},
    },
    "corput-sweep": {
        "ks": _numlist, "draws": _int_pos, "x_log10": _pair, "lambda_log10": _pair,
        "a_log10": _pair, "span_log10": _pair, "tol": _pos, "growth_factor": _pos,
        "dirichlet_interval": _pair, "dirichlet_tol": _pos, "hill_draws": _int_pos,
    },
    "sp-scaling": {
        "families": {"type": "array", "items": {"enum": ["gaussian", "bump", "zero"]}, "minItems": 1},
        "dims": {"type": "array", "items": {"enum": [1, 2]}, "minItems": 1},
        "eps_range": _pair, "per_decade": _int_pos, "closed_form_range": _pair,
        "closed_form_tol": _pos, "tol": _pos, "trend_tol": _pos,
    },
    "decay-probe": {
        "profile": _profile, "sheet": _sheet, "s_grid": _numlist, "tol": _pos,
        "exponent_max": _num,
        "probes": {"type": "array", "minItems": 1,
                   "items": {"type": "object",
                             "properties": {"system": _system,
                                            "rays": {"type": "array", "minItems": 1,
                                                     "items": {"type": "array", "items": _num,
                                                               "minItems": 2}}},
                             "required": ["system", "rays"], "additionalProperties": False}},
    },
}


def schema_for(experiment):
    props = dict(_common)
    props.update(SCHEMAS[experiment])
    return {"type": "object", "properties": props, "required": ["experiment"],
            "additionalProperties": False}


def _data_file(*parts):
    return resources.files("hyperjump").joinpath("data", *parts)


def default_config(experiment):
    """Bundled default configuration for ``experiment`` (S1 where a system is needed)."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    name = experiment.replace("-", "_")
    path = _data_file("configs", f"{name}.json")
    return json.loads(path.read_text())


def bundled_configs():
    """Names of every bundled config file (without extension)."""
    root = _data_file("configs")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_bundled(name):
    return json.loads(_data_file("configs", f"{name}.json").read_text())


def validate(cfg, experiment=None):
    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a JSON object")
    if experiment is not None:
        cfg.setdefault("experiment", experiment)
        if cfg["experiment"] != experiment:
            raise ConfigError(f"config is for {cfg['experiment']!r}, not {experiment!r}")
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}")
    try:
        jsonschema.validate(cfg, schema_for(exp))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from exc
    return cfg


def merge(base, override):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path, experiment):
    """Read a JSON config, fill unspecified keys from the bundled default, validate.

    ``path`` may also name a bundled config (``boundedness_s2``).
    """
    if path is None:
        cfg = default_config(experiment)
        cfg["_base_dir"] = None
    else:
        p = Path(path)
        if not p.is_file() and str(path) in bundled_configs():
            p = Path(str(_data_file("configs", f"{path}.json")))
        try:
            user = json.loads(p.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {p}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("configuration must be a JSON object")
        exp = user.get("experiment", experiment)
        if exp != experiment:
            raise ConfigError(f"config is for {exp!r}, not {experiment!r}")
        cfg = merge(default_config(experiment), user)
        cfg["_base_dir"] = str(p.resolve().parent)
    base = cfg.pop("_base_dir")
    validate(cfg, experiment)
    cfg["_base_dir"] = base
    return cfg


def resolve_system(spec, base_dir=None):
    """A system from a builtin name (``S1``, ``S2``), a JSON path or an inline dict."""
    from ..symbol_core import system_from_dict
    try:
        if isinstance(spec, dict):
            return system_from_dict(spec)
        if spec.upper() in ("S1", "S2"):
            return builtin_system(spec)
        candidates = [Path(spec)]
        if base_dir:
            candidates.insert(0, Path(base_dir) / spec)
        for c in candidates:
            if c.is_file():
                return load_system(c)
        packaged = _data_file("systems", spec if spec.endswith(".json") else f"{spec}.json")
        if packaged.is_file():
            return system_from_dict(json.loads(packaged.read_text()))
    except InputError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"system {spec!r} not found")
