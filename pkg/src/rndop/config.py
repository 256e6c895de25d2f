"""Run configuration: JSON schema v1, presets and overrides.

Precedence, lowest to highest: preset defaults, config file, RNDOP_SEED,
command-line flags.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError
from .experiments import McCampaign
from .geometry import AnchorSet
from .localize import RangeModel
from .placement import METHODS, MODES, BoxConstraint, PlacementProblem, SeparationConstraint
from .solver import SolverSettings

CONFIG_SCHEMA_VERSION = 1
SEED_ENV = "RNDOP_SEED"

_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_pos_int = {"type": "integer", "minimum": 1}
_pos_num = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$id": "rndop-config-v1",
    "title": "rndop run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version"],
    "properties": {
        "schema_version": {"const": CONFIG_SCHEMA_VERSION},
        "preset": {"enum": ["desk", "paper"]},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "mode": {"enum": list(MODES)},
        "method": {"enum": list(METHODS)},
        "methods": {"type": "array", "items": {"enum": list(METHODS)}, "minItems": 1, "uniqueItems": True},
        "out": {"type": "string"},
        "initial_anchors": {"type": "array", "items": _vec3, "minItems": 3},
        "placement": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "box": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["lower", "upper"],
                    "properties": {"lower": _vec3, "upper": _vec3},
                },
                "d_th": {"type": "number", "minimum": 0},
                "n_add": {"type": "integer", "minimum": 0},
                "eta": {"type": "number", "exclusiveMinimum": 1},
                "n_max": _pos_int,
                "redundancy_cap": {"type": "integer", "minimum": 0},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "multistart": _pos_int,
                "max_iter": _pos_int,
                "step_tol": _pos_num,
                "constraint_tol": _pos_num,
                "penalty_growth": {"type": "number", "exclusiveMinimum": 1},
                "max_stages": _pos_int,
            },
        },
        "campaign": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_mc_init": _pos_int,
                "n_mc_algo": {"type": "integer", "minimum": 10},
                "n_targ": _pos_int,
                "r_cov": _pos_num,
                "b": {"type": "number", "minimum": 0},
                "sigma_w": {"type": "number", "minimum": 0},
                "init_sigma": {"type": "number", "minimum": 0},
            },
        },
        "dopfield": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_theta": {"type": "integer", "minimum": 1},
                "n_phi": {"type": "integer", "minimum": 1},
                "r_t": _pos_num,
            },
        },
    },
}


@dataclass(frozen=True)
class DopFieldSettings:
    n_theta: int = 72
    n_phi: int = 36
    r_t: float = 1000.0


@dataclass(frozen=True)
class RunConfig:
    preset: str
    seed: int
    method: str
    methods: tuple
    campaign: McCampaign
    dopfield: DopFieldSettings = field(default_factory=DopFieldSettings)
    initial_anchors: AnchorSet | None = None
    out: Path = Path("out")

    @property
    def problem(self) -> PlacementProblem:
        return replace(self.campaign.problem, method=self.method, seed=self.seed)

    @property
    def mode(self) -> str:
        return self.campaign.problem.mode


def validate(doc: dict) -> None:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc


def load_config_file(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    validate(doc)
    return doc


def _env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        seed = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from exc
    if not 0 <= seed < 2**64:
        raise ConfigError(f"{SEED_ENV} must fit in an unsigned 64-bit integer")
    return seed


def build_config(doc: dict | None = None, **flags) -> RunConfig:
    """Merge a validated config document with flag overrides (``None`` = unset)."""
    doc = dict(doc or {"schema_version": CONFIG_SCHEMA_VERSION})
    validate(doc)
    flags = {k: v for k, v in flags.items() if v is not None}
    preset = flags.get("preset", doc.get("preset", "desk"))
    seed = doc.get("seed", 0)
    env = _env_seed()
    if env is not None:
        seed = env
    seed = flags.get("seed", seed)
    if not 0 <= int(seed) < 2**64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer")
    mode = flags.get("mode", doc.get("mode", "3d"))
    method = flags.get("method", doc.get("method", "tr"))
    if mode not in MODES or method not in METHODS:
        raise ConfigError(f"mode must be in {MODES} and method in {METHODS}")
    methods = tuple(doc.get("methods", METHODS))

    base = McCampaign.preset(preset)
    pl = doc.get("placement", {})
    try:
        box = base.problem.box
        if "box" in pl:
            box = BoxConstraint(pl["box"]["lower"], pl["box"]["upper"])
        solver = replace(SolverSettings(), **doc.get("solver", {}))
        problem = replace(
            base.problem,
            mode=mode,
            method=method,
            box=box,
            sep=SeparationConstraint(pl.get("d_th", base.problem.sep.d_th)),
            n_add=pl.get("n_add", base.problem.n_add),
            eta=pl.get("eta", base.problem.eta),
            n_max=pl.get("n_max", base.problem.n_max),
            redundancy_cap=pl.get("redundancy_cap", base.problem.redundancy_cap),
            solver=solver,
            seed=int(seed),
        )
        cp = doc.get("campaign", {})
        model = RangeModel(cp.get("b", base.model.b), cp.get("sigma_w", base.model.sigma_w))
        campaign = replace(
            base,
            n_mc_init=cp.get("n_mc_init", base.n_mc_init),
            n_mc_algo=cp.get("n_mc_algo", base.n_mc_algo),
            n_targ=cp.get("n_targ", base.n_targ),
            r_cov=cp.get("r_cov", base.r_cov),
            init_sigma=cp.get("init_sigma", base.init_sigma),
            model=model,
            problem=problem,
            seed=int(seed),
        )
        dopfield = DopFieldSettings(**doc.get("dopfield", {}))
        initial = None
        if "initial_anchors" in doc:
            initial = AnchorSet(np.asarray(doc["initial_anchors"], dtype=float))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(flags.get("out", doc.get("out", "out")))
    return RunConfig(preset, int(seed), method, methods, campaign, dopfield, initial, out)


def write_schema(path) -> None:
    Path(path).write_text(json.dumps(CONFIG_SCHEMA, indent=2, sort_keys=True) + "\n")
