"""Pipeline configuration document (YAML), with defaults and validation.

Relative paths are resolved against the directory holding the config file.
``null`` for hand/arm/friction/prompt_template selects the bundled default.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import ConfigError, ValidationError

DEFAULTS = {
    "scene": {"rgb": None, "depth": None, "mask": None, "intrinsics": None, "depth_scale": 0.001},
    "hand": None,
    "arm": None,
    "friction": None,
    "prompt_template": None,
    "providers": {"kind": "none", "fixture": None, "timeout": 10.0},
    "rere": {
        "enabled": True,
        "gate": 0.5,
        "weights": {"w_C": 1.0, "w_S": 1.0, "w_M": 1.0, "w_P": 1.0},
        "audio": {"window_ms": 20.0, "threshold": 0.02, "hangover_ms": 200.0},
    },
    "features": {"tangent_radius_px": 7.0, "normal_k": 20},
    "dgcg": {
        "n": 256, "sigma_p": 0.01, "sigma_r": 0.1, "tilt": 0.0, "standoff": 0.0,
        "pinch_alignment": "parallel", "seed": 0, "tol": 0.005,
    },
    "dgr": {"m": 8, "metric": "inscribed", "material": None},
    "motion": {
        "waypoints": 20, "start": "home",
        "stomp": {"iterations": 50, "rollouts": 8, "sigma": 0.05, "clearance": 0.02},
    },
}

PATH_KEYS = ("hand", "arm", "friction", "prompt_template")


def _merge(base, over, where=""):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if k not in base:
            raise ValidationError(f"{where}{k}", "unknown configuration key")
        if isinstance(base[k], dict) and base[k] and k != "weights":
            if not isinstance(v, dict):
                raise ValidationError(f"{where}{k}", "expected a mapping")
            out[k] = _merge(base[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def _range(doc, dotted, lo=None, hi=None, integer=False, lo_open=False):
    node = doc
    for part in dotted.split("."):
        node = node[part]
    try:
        v = int(node) if integer else float(node)
    except (TypeError, ValueError):
        raise ValidationError(dotted, "not a number") from None
    if integer and v != node:
        raise ValidationError(dotted, "must be an integer")
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ValidationError(dotted, f"must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and v > hi:
        raise ValidationError(dotted, f"must be <= {hi}")


@dataclass
class PipelineConfig:
    doc: dict
    base_dir: Path

    def __getitem__(self, key):
        return self.doc[key]

    def path(self, key):
        """Resolved path for a top-level file key (None = bundled default)."""
        v = self.doc[key]
        return None if v is None else (self.base_dir / v)

    def scene_spec(self):
        return dict(self.doc["scene"])

    def override(self, dotted, value):
        if value is None:
            return
        node = self.doc
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node[part]
        node[parts[-1]] = value
        validate(self)


def validate(cfg: PipelineConfig):
    d = cfg.doc
    for key in ("rgb", "depth", "mask", "intrinsics"):
        if not d["scene"][key]:
            raise ValidationError(f"scene.{key}", "missing")
        p = cfg.base_dir / d["scene"][key]
        if not p.exists():
            raise ConfigError(f"scene.{key}: file not found: {p}")
    for key in PATH_KEYS:
        p = cfg.path(key)
        if p is not None and not p.exists():
            raise ConfigError(f"{key}: file not found: {p}")
    prov = d["providers"]
    if prov["kind"] not in ("none", "mock", "http"):
        raise ValidationError("providers.kind", "expected none, mock or http")
    if prov["kind"] == "mock":
        if not prov["fixture"]:
            raise ValidationError("providers.fixture", "mock provider needs a fixture file")
        if not (cfg.base_dir / prov["fixture"]).exists():
            raise ConfigError(f"providers.fixture: file not found: {cfg.base_dir / prov['fixture']}")
    _range(d, "scene.depth_scale", 0, lo_open=True)
    _range(d, "rere.gate", 0, 1)
    for k, v in d["rere"]["weights"].items():
        if k not in ("w_C", "w_S", "w_M", "w_P"):
            raise ValidationError(f"rere.weights.{k}", "unknown weight")
        _range(d, f"rere.weights.{k}", 0)
    _range(d, "rere.audio.window_ms", 0, lo_open=True)
    _range(d, "rere.audio.threshold", 0)
    _range(d, "rere.audio.hangover_ms", 0)
    _range(d, "features.tangent_radius_px", 0, lo_open=True)
    _range(d, "features.normal_k", 3, integer=True)
    _range(d, "dgcg.n", 1, integer=True)
    _range(d, "dgcg.sigma_p", 0)
    _range(d, "dgcg.sigma_r", 0)
    _range(d, "dgcg.tilt", -3.2, 3.2)
    _range(d, "dgcg.standoff", -1, 1)
    _range(d, "dgcg.seed", 0, integer=True)
    _range(d, "dgcg.tol", 0, lo_open=True)
    if d["dgcg"]["pinch_alignment"] not in ("parallel", "perpendicular"):
        raise ValidationError("dgcg.pinch_alignment", "expected parallel or perpendicular")
    _range(d, "dgr.m", 3, integer=True)
    if d["dgr"]["metric"] not in ("inscribed", "enclosing"):
        raise ValidationError("dgr.metric", "expected inscribed or enclosing")
    _range(d, "motion.waypoints", 2, integer=True)
    start = d["motion"]["start"]
    if start != "home" and (not isinstance(start, list) or len(start) != 6):
        raise ValidationError("motion.start", "expected 'home' or 6 joint angles")
    _range(d, "motion.stomp.iterations", 0, integer=True)
    _range(d, "motion.stomp.rollouts", 1, integer=True)
    _range(d, "motion.stomp.sigma", 0)
    _range(d, "motion.stomp.clearance", 0)
    return cfg


def load_config(path) -> PipelineConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = yaml.safe_load(p.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{p}: expected a mapping at top level")
    return validate(PipelineConfig(_merge(DEFAULTS, raw), p.resolve().parent))
