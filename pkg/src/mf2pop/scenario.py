"""JSON scenario files: schema validation and construction of solver inputs."""

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .coupled import SolveConfig
from .errors import MF2PopError
from .grid import Grid1D, first_moment, normalize
from .lq import LQParams
from .model import CrowdParams, LQFamily, ProblemKind, crowd_family

SCHEMA_VERSION = "mf2pop/1"

_number = {"type": "number"}
_matrix = {"oneOf": [_number, {"type": "array"}]}

_preset = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["gaussian", "uniform", "bimodal"]},
        "center": _number,
        "width": {"type": "number", "exclusiveMinimum": 0},
        "a": _number,
        "b": _number,
        "c1": _number,
        "c2": _number,
        "w": {"type": "number", "exclusiveMinimum": 0},
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "gaussian"}}}, "then": {"required": ["center", "width"]}},
        {"if": {"properties": {"kind": {"const": "uniform"}}}, "then": {"required": ["a", "b"]}},
        {"if": {"properties": {"kind": {"const": "bimodal"}}}, "then": {"required": ["c1", "c2", "w"]}},
    ],
}

_potential = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["zero", "quadratic", "linear"]},
        "center": _number,
        "weight": _number,
        "slope": _number,
    },
}

BASE_SCHEMA = {
    "type": "object",
    "required": ["schema", "name", "problem", "model", "grid"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "problem": {"enum": ["CMFC", "NMFC_SC1", "NMFC_SC2", "MFG", "NMFG", "CMFG"]},
        "model": {
            "type": "object",
            "required": ["family"],
            "properties": {"family": {"enum": ["local_lw", "nonlocal_ad", "lq"]}},
        },
        "grid": {
            "type": "object",
            "required": ["x_min", "x_max", "nx", "nt", "T"],
            "properties": {
                "x_min": _number,
                "x_max": _number,
                "nx": {"type": "integer", "minimum": 3},
                "nt": {"type": "integer", "minimum": 1},
                "T": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "damping": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "initial": {"type": "array", "items": _preset, "minItems": 2, "maxItems": 2},
        "particles": {
            "type": "object",
            "required": ["N"],
            "properties": {
                "N": {"type": "integer", "minimum": 2},
                "seeds": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer", "minimum": 0},
                "se_factor": {"type": "number", "exclusiveMinimum": 0},
                "snapshots": {"type": "array", "items": {"type": "number"}},
            },
            "additionalProperties": False,
        },
        "lq": {
            "type": "object",
            "properties": {
                "nt": {"type": "integer", "minimum": 10},
                "regime": {"enum": ["CMFC", "CMFG"]},
                "value_tolerance": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "checks": {
            "type": "object",
            "properties": {
                "equivalent_to": {"$ref": "#/$defs/variant"},
                "distinct_from": {"$ref": "#/$defs/variant"},
            },
            "additionalProperties": False,
        },
    },
    "$defs": {
        "variant": {
            "type": "object",
            "properties": {
                "problem": {"enum": ["CMFC", "NMFC_SC1", "NMFC_SC2", "MFG", "NMFG", "CMFG"]},
                "model": {"type": "object"},
                "factor": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        }
    },
}

FAMILY_SCHEMAS = {
    "local_lw": {
        "type": "object",
        "required": ["family", "lambda", "sigma"],
        "properties": {
            "family": {"const": "local_lw"},
            "lambda": {"type": "number", "minimum": 0},
            "sigma": {"type": "number", "exclusiveMinimum": 0},
            "terminal": {"type": "array", "items": _potential, "minItems": 2, "maxItems": 2},
        },
        "additionalProperties": False,
    },
    "nonlocal_ad": {
        "type": "object",
        "required": ["family", "sigma", "Lambda", "radius", "delta"],
        "properties": {
            "family": {"const": "nonlocal_ad"},
            "lambda": {"type": "number", "minimum": 0},
            "sigma": {"type": "number", "exclusiveMinimum": 0},
            "Lambda": {
                "type": "array",
                "minItems": 2,
                "maxItems": 2,
                "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "number", "minimum": 0}},
            },
            "radius": {"type": "number", "exclusiveMinimum": 0},
            "delta": {"type": "number", "exclusiveMinimum": 0},
            "terminal": {"type": "array", "items": _potential, "minItems": 2, "maxItems": 2},
        },
        "additionalProperties": False,
    },
    "lq": {
        "type": "object",
        "required": ["family", "sigma"],
        "properties": {
            "family": {"const": "lq"},
            "n": {"type": "integer", "minimum": 1},
            "d": {"type": "integer", "minimum": 1},
            "sigma": {"oneOf": [{"type": "number", "minimum": 0}, {"type": "array"}]},
            "mbar0": {"type": "array"},
            **{k: _matrix for k in ("A", "Abar", "B", "Q", "Qbar", "R", "S", "QT", "QbarT", "ST")},
        },
        "additionalProperties": False,
    },
}


class ScenarioError(MF2PopError):
    """A scenario file is malformed; ``path`` is the dotted key path of the offending entry."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path or '<root>'}: {message}")


def _key_path(error, prefix=()):
    parts = [*prefix, *(str(p) for p in error.absolute_path)]
    if error.validator == "required":
        missing = [k for k in error.validator_value if isinstance(error.instance, dict) and k not in error.instance]
        if missing:
            parts.append(missing[0])
    return ".".join(parts)


def _validate(instance, schema, prefix=()):
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(instance), key=lambda e: (len(list(e.absolute_path)), str(e.message)))
    if errors:
        err = errors[0]
        raise ScenarioError(_key_path(err, prefix), err.message)


def validate(config):
    """Check a scenario dict against the schema; raises ScenarioError with a key path."""
    _validate(config, BASE_SCHEMA)
    family = config["model"]["family"]
    _validate(config["model"], FAMILY_SCHEMAS[family], prefix=("model",))
    g = config["grid"]
    if not g["x_max"] > g["x_min"]:
        raise ScenarioError("grid.x_max", "must exceed grid.x_min")
    for idx, preset in enumerate(config.get("initial", [])):
        for key in ("center", "a", "b", "c1", "c2"):
            if key in preset and not g["x_min"] <= preset[key] <= g["x_max"]:
                raise ScenarioError(f"initial.{idx}.{key}", "lies outside the domain")
        if preset["kind"] == "uniform" and not preset["b"] > preset["a"]:
            raise ScenarioError(f"initial.{idx}.b", "must exceed a")
    for name in ("equivalent_to", "distinct_from"):
        variant = config.get("checks", {}).get(name)
        if variant is not None:
            merged = derive(config, variant)
            _validate(merged["model"], FAMILY_SCHEMAS[merged["model"]["family"]], prefix=("checks", name, "model"))
    if family == "lq" and config["problem"] in ("NMFC_SC1", "NMFC_SC2"):
        raise ScenarioError("problem", "LQ scenarios support CMFC and MFG only")
    return config


def derive(config, variant):
    """A copy of ``config`` with the variant's problem and model keys overridden."""
    out = json.loads(json.dumps(config))
    out.pop("checks", None)
    if "problem" in variant:
        out["problem"] = variant["problem"]
    out["model"].update(variant.get("model", {}))
    return out


def config_hash(config):
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def packaged_scenarios():
    """Mapping of packaged scenario name to its path."""
    root = resources.files("mf2pop") / "scenarios"
    return {Path(p.name).stem: Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")}


def resolve(name_or_path):
    """A filesystem path, or the packaged scenario with the same file stem."""
    p = Path(name_or_path)
    if p.is_file():
        return p
    shipped = packaged_scenarios()
    if p.stem in shipped:
        return shipped[p.stem]
    raise FileNotFoundError(f"no scenario file {name_or_path!r} (packaged: {', '.join(sorted(shipped))})")


# ---------------------------------------------------------------------------
# construction


def initial_density(preset, grid):
    x = grid.x
    kind = preset["kind"]
    if kind == "gaussian":
        rho = np.exp(-0.5 * ((x - preset["center"]) / preset["width"]) ** 2)
    elif kind == "uniform":
        rho = ((x >= preset["a"]) & (x <= preset["b"])).astype(float)
    else:
        w = preset["w"]
        rho = np.exp(-0.5 * ((x - preset["c1"]) / w) ** 2) + np.exp(-0.5 * ((x - preset["c2"]) / w) ** 2)
    return normalize(rho, grid)


def potential(term):
    if term is None or term["kind"] == "zero":
        return None
    if term["kind"] == "quadratic":
        c, w = term.get("center", 0.0), term.get("weight", 1.0)
        return lambda x: 0.5 * w * (np.asarray(x, dtype=float) - c) ** 2
    c, s = term.get("center", 0.0), term.get("slope", 1.0)
    return lambda x: s * (np.asarray(x, dtype=float) - c)


@dataclass
class Scenario:
    config: dict
    name: str
    kind: ProblemKind
    family: str
    grid: Grid1D
    solve: SolveConfig
    rho0: tuple

    @classmethod
    def from_dict(cls, config):
        validate(config)
        grid = Grid1D(**config["grid"])
        solve = SolveConfig(**config.get("solver", {}))
        presets = config.get("initial") or [
            {"kind": "gaussian", "center": 0.5 * (grid.x_min + grid.x_max), "width": 0.1 * (grid.x_max - grid.x_min)}
        ] * 2
        rho0 = tuple(initial_density(p, grid) for p in presets)
        return cls(
            config=config,
            name=config["name"],
            kind=ProblemKind.parse(config["problem"]),
            family=config["model"]["family"],
            grid=grid,
            solve=solve,
            rho0=rho0,
        )

    @classmethod
    def load(cls, name_or_path):
        path = resolve(name_or_path)
        try:
            config = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError("", f"invalid JSON: {exc}") from None
        return cls.from_dict(config)

    @property
    def hash(self):
        return config_hash(self.config)

    def variant(self, name):
        variant = self.config.get("checks", {}).get(name)
        return None if variant is None else Scenario.from_dict(derive(self.config, variant))

    def lq_params(self):
        m = self.config["model"]
        keys = ("A", "Abar", "B", "Q", "Qbar", "R", "S", "QT", "QbarT", "ST")
        kwargs = {k: m[k] for k in keys if k in m}
        if "mbar0" in m:
            mbar0 = m["mbar0"]
        else:
            mbar0 = [first_moment(r, self.grid) for r in self.rho0]
        return LQParams.create(
            n=m.get("n", 1), d=m.get("d", 1), sigma=m["sigma"], T=self.grid.T, mbar0=mbar0, **kwargs
        )

    def model(self):
        m = self.config["model"]
        if self.family == "lq":
            return LQFamily(self.lq_params())
        terminal = tuple(potential(s) for s in m.get("terminal", [None, None]))
        params = CrowdParams(
            lam=m.get("lambda", 0.0),
            sigma=m["sigma"],
            variant=self.family,
            Lambda=tuple(map(tuple, m["Lambda"])) if "Lambda" in m else None,
            radius=m.get("radius"),
            delta=m.get("delta"),
            terminal=terminal,
        )
        return crowd_family(params, self.grid)
