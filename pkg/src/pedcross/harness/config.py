"""Experiment configuration: flat JSON with dotted keys.

Example::

    {"seed": 42, "sim.n_crossings": 320, "noise.q_vel": 0.01,
     "model.svm_C": 1.0, "horizons": [1, 2, 3, 4, 5, 6]}

Unknown keys and badly typed values raise :class:`ConfigError` naming the
key. The only environment override is ``OUTPUT_DIR``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import typing
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from ..hybrid_core import GeometryConfig
from ..inference import PredictionConfig, PredictionMode
from ..motion_tracker import NoiseConfig
from ..scenario_sim import PedOracleConfig, SimConfig

# Velocity threshold used when the guards read filtered estimates; the
# default 0.05 m/s sits below the estimate noise of the default filter.
TRACKING_EPSILON_V = 0.3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelHyper:
    kind: str = "SVMPoly3"
    svm_C: float = 1.0
    svm_gamma: Optional[float] = None
    svm_coef0: float = 1.0
    svm_C_grid: Tuple[float, ...] = ()
    logistic_C: float = 1.0
    condprob_bins: int = 10
    condprob_smoothing: float = 1.0

    def for_kind(self, kind: str) -> Dict[str, Any]:
        if kind == "SVMPoly3":
            return {"C": self.svm_C, "gamma": self.svm_gamma, "coef0": self.svm_coef0,
                    "C_grid": self.svm_C_grid}
        if kind == "Logistic":
            return {"C": self.logistic_C}
        return {"bins": self.condprob_bins, "smoothing": self.condprob_smoothing}


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 42
    sim: SimConfig = field(default_factory=SimConfig)
    oracle: PedOracleConfig = field(default_factory=PedOracleConfig)
    prediction: PredictionConfig = field(default_factory=PredictionConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    geometry: GeometryConfig = field(
        default_factory=lambda: GeometryConfig(epsilon_v=TRACKING_EPSILON_V))
    model: ModelHyper = field(default_factory=ModelHyper)
    horizons: Tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    output_dir: str = "out"
    workers: int = 1

    def to_dict(self) -> Dict[str, Any]:
        """Flat dotted-key form, the same shape the loader accepts."""
        out: Dict[str, Any] = {"seed": self.seed, "horizons": list(self.horizons),
                               "output_dir": self.output_dir, "workers": self.workers}
        for section in SECTIONS:
            obj = getattr(self, section)
            for f in dataclasses.fields(obj):
                if section == "sim" and f.name in SIM_DERIVED:
                    continue
                v = getattr(obj, f.name)
                if isinstance(v, tuple):
                    v = list(v)
                elif isinstance(v, PredictionMode):
                    v = v.value
                out[f"{section}.{f.name}"] = v
        return out

    def content_dict(self) -> Dict[str, Any]:
        """``to_dict`` without settings that cannot change results."""
        return {k: v for k, v in self.to_dict().items() if k not in EXECUTION_ONLY}

    def digest(self) -> str:
        text = json.dumps(self.content_dict(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()


SECTIONS = ("sim", "oracle", "prediction", "noise", "geometry", "model")
SIM_DERIVED = ("seed", "geom")
TOP_LEVEL = ("seed", "horizons", "output_dir", "workers")
EXECUTION_ONLY = ("output_dir", "workers")


def _coerce(key: str, value: Any, annotation: Any) -> Any:
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    try:
        if origin is typing.Union and type(None) in args:
            if value is None:
                return None
            inner = [a for a in args if a is not type(None)][0]
            return _coerce(key, value, inner)
        if origin in (tuple, Tuple):
            if not isinstance(value, (list, tuple)):
                raise TypeError("expected a list")
            return tuple(_coerce(key, v, args[0]) for v in value)
        if annotation is bool:
            if not isinstance(value, bool):
                raise TypeError("expected true/false")
            return value
        if annotation is int:
            if isinstance(value, bool) or not float(value).is_integer():
                raise TypeError("expected an integer")
            return int(value)
        if annotation is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError("expected a number")
            return float(value)
        if annotation is str:
            if not isinstance(value, str):
                raise TypeError("expected a string")
            return value
        if isinstance(annotation, type) and issubclass(annotation, PredictionMode):
            return PredictionMode(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc} (got {value!r})") from None
    return value


def _field_types(cls) -> Dict[str, Any]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def build_config(flat: Dict[str, Any], seed: Optional[int] = None,
                 out: Optional[str] = None) -> ExperimentConfig:
    """Build a config from dotted keys. ``seed`` and ``out`` override the file."""
    if not isinstance(flat, dict):
        raise ConfigError("config must be a JSON object")
    base = ExperimentConfig()
    sections: Dict[str, Dict[str, Any]] = {s: {} for s in SECTIONS}
    top: Dict[str, Any] = {}
    top_types = _field_types(ExperimentConfig)
    for key, value in flat.items():
        if key in TOP_LEVEL:
            top[key] = _coerce(key, value, top_types[key])
            continue
        section, _, name = key.partition(".")
        if section not in SECTIONS or not name:
            raise ConfigError(f"unknown config key: {key}")
        types = _field_types(type(getattr(base, section)))
        if name not in types or (section == "sim" and name in SIM_DERIVED):
            raise ConfigError(f"unknown config key: {key}")
        sections[section][name] = _coerce(key, value, types[name])

    if seed is not None:
        top["seed"] = seed
    env_out = os.environ.get("OUTPUT_DIR")
    if out is not None:
        top["output_dir"] = out
    elif env_out:
        top["output_dir"] = env_out

    built: Dict[str, Any] = {}
    try:
        for section in ("oracle", "noise", "geometry", "model"):
            built[section] = replace(getattr(base, section), **sections[section])
        master = top.get("seed", base.seed)
        pred = dict(sections["prediction"])
        pred.setdefault("seed", master)
        built["prediction"] = replace(base.prediction, **pred)
        built["sim"] = replace(base.sim, seed=master, geom=built["geometry"],
                               **sections["sim"])
        cfg = replace(base, **top, **built)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    h = cfg.horizons
    if not h or any(v <= 0 for v in h) or list(h) != sorted(h):
        raise ConfigError("horizons: must be positive and sorted")
    max_h = cfg.prediction.horizon_steps * cfg.prediction.dt
    if h[-1] > max_h + 1e-9:
        raise ConfigError(f"horizons: {h[-1]} s exceeds the prediction horizon {max_h} s")
    if abs(cfg.prediction.dt - cfg.sim.dt) > 1e-12:
        raise ConfigError("prediction.dt: must equal sim.dt")
    if cfg.model.kind not in ("SVMPoly3", "Logistic", "CondProb"):
        raise ConfigError(f"model.kind: unknown kind {cfg.model.kind!r}")
    if cfg.workers < 1:
        raise ConfigError("workers: must be >= 1")


def load_config(path: Optional[Path], seed: Optional[int] = None,
                out: Optional[str] = None) -> ExperimentConfig:
    flat: Dict[str, Any] = {}
    if path is not None:
        try:
            flat = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return build_config(flat, seed=seed, out=out)
