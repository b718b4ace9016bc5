"""
config.py - Run configuration: YAML in, validated RunConfig out.

A run is described by one YAML file (see config.yaml at the repo root):

    version: 1
    experiment: name
    seed: 1
    output_dir: runs/name
    threads: 1
    reservoir: {...}      ReservoirSpec fields (no seed: derived from `seed`)
    signal:    {...}      kind: random | mackey_glass | file
    metrics:   {...}      k, threshold_distance, washout, train_fraction, ridge
    task:      {...}      k_max, k_min, washout, train_fraction, ridge, models

Every validation problem raises ConfigError naming the `section.field` it
came from. The validated config dumps back to YAML in a canonical form:
loading that dump and dumping again gives the same bytes.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import yaml

from spatial_rc.core import derive_seed
from spatial_rc.engine import THREADS_ENV
from spatial_rc.reservoirs import ReservoirSpec
from spatial_rc.tasks import MackeyGlassParams


SCHEMA_VERSION = 1
SIGNAL_KINDS = ("random", "mackey_glass", "file")
TOP_LEVEL_KEYS = ("version", "experiment", "seed", "output_dir", "threads",
                  "reservoir", "signal", "metrics", "task")

DEFAULT_MODELS = {
    "low": {"gain": 0.5, "gain_gradient": None},
    "high": {"gain": 2.0, "gain_gradient": None},
    "gradient": {"gain_gradient": [0.5, 2.0]},
}


class ConfigError(ValueError):
    """Invalid configuration; `path` is the offending section.field."""

    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


# ─────────────────────────────────────────────────────────────────────────────
# Loading
# ─────────────────────────────────────────────────────────────────────────────

def load_config(config_path: str = "config.yaml") -> dict:
    path = Path(config_path)
    if not path.exists():
        # Try relative to the repository root
        path = Path(__file__).resolve().parent.parent / config_path
    if not path.exists():
        print(f"[WARN] {config_path} not found, using defaults", flush=True)
        return {}
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{config_path}:{mark.line + 1}" if mark is not None else str(config_path)
        raise ConfigError(where, getattr(e, "problem", None) or str(e)) from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(str(config_path), "top level must be a mapping")
    return data


def apply_override(data: dict, assignment: str) -> dict:
    """
    Apply one `section.key=value` override in place and return data.

    The value is parsed as YAML, so `--set metrics.k=10` gives an int and
    `--set metrics.threshold_distance=global` a string.
    """
    dotted, sep, raw = assignment.partition("=")
    if not sep or not dotted:
        raise ConfigError(assignment, "override must look like section.key=value")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError(dotted, f"cannot parse value {raw!r}") from e

    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        child = node.get(key)
        if child is None:
            child = node[key] = {}
        if not isinstance(child, dict):
            raise ConfigError(dotted, f"{key} is not a section")
        node = child
    node[keys[-1]] = value
    return data


# ─────────────────────────────────────────────────────────────────────────────
# Field coercion
# ─────────────────────────────────────────────────────────────────────────────

def _int(path: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return int(value)


def _float(path: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _section(data: dict, name: str) -> dict:
    section = data.get(name)
    if section is None:
        return {}
    if not isinstance(section, dict):
        raise ConfigError(name, "must be a mapping")
    return section


def _reject_unknown(section: str, data: dict, known: tuple[str, ...]) -> None:
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}", f"unknown field (known: {', '.join(known)})")


def _wrap(section: str, error: ValueError, known: tuple[str, ...]) -> ConfigError:
    """Turn a constructor ValueError into a ConfigError, naming the field when the message does."""
    message = str(error)
    head = message.split(" ", 1)[0].rstrip(":")
    path = f"{section}.{head}" if head in known else section
    return ConfigError(path, message)


# ─────────────────────────────────────────────────────────────────────────────
# Sections
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SignalConfig:
    kind: str = "random"
    n: int = 1500
    low: float = -1.0
    high: float = 1.0
    path: Optional[str] = None
    column: int = 0
    normalize: bool = False
    mackey_glass: MackeyGlassParams = field(default_factory=MackeyGlassParams)

    @classmethod
    def from_dict(cls, data: dict) -> "SignalConfig":
        known = tuple(f.name for f in fields(cls))
        _reject_unknown("signal", data, known)
        if "kind" not in data:
            raise ConfigError("signal.kind", f"missing; one of {', '.join(SIGNAL_KINDS)}")
        kind = data["kind"]
        if kind not in SIGNAL_KINDS:
            raise ConfigError("signal.kind", f"must be one of {', '.join(SIGNAL_KINDS)}, got {kind!r}")
        n = _int("signal.n", data.get("n", cls.n))
        if n < 1:
            raise ConfigError("signal.n", f"must be >= 1, got {n}")
        low = _float("signal.low", data.get("low", cls.low))
        high = _float("signal.high", data.get("high", cls.high))
        if not low < high:
            raise ConfigError("signal.high", f"need low < high, got low={low}, high={high}")
        path = data.get("path")
        if kind == "file" and not path:
            raise ConfigError("signal.path", "required when kind is file")
        mg_data = data.get("mackey_glass") or {}
        if not isinstance(mg_data, dict):
            raise ConfigError("signal.mackey_glass", "must be a mapping")
        try:
            mackey = MackeyGlassParams.from_dict(mg_data)
        except (TypeError, ValueError) as e:
            raise _wrap("signal.mackey_glass", ValueError(str(e)), tuple(MackeyGlassParams.__dataclass_fields__)) from e
        normalize = data.get("normalize", cls.normalize)
        if not isinstance(normalize, bool):
            raise ConfigError("signal.normalize", f"expected true/false, got {normalize!r}")
        return cls(kind=kind, n=n, low=low, high=high, path=None if path is None else str(path),
                   column=_int("signal.column", data.get("column", cls.column)),
                   normalize=normalize, mackey_glass=mackey)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "low": self.low, "high": self.high,
                "path": self.path, "column": self.column, "normalize": self.normalize,
                "mackey_glass": self.mackey_glass.to_dict()}


@dataclass(frozen=True)
class MetricsConfig:
    k: int = 20
    threshold_distance: Optional[float] = None  # None: two readout pitches; inf: global
    washout: int = 500
    train_fraction: float = 0.75
    ridge: float = 0.0

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsConfig":
        _reject_unknown("metrics", data, tuple(f.name for f in fields(cls)))
        k = _int("metrics.k", data.get("k", cls.k))
        if k < 1:
            raise ConfigError("metrics.k", f"memory capacity requires k >= 1 (delays start at 1), got {k}")
        raw = data.get("threshold_distance")
        if raw is None:
            threshold = None
        elif raw == "global":
            threshold = math.inf
        else:
            threshold = _float("metrics.threshold_distance", raw)
            if not threshold >= 0:
                raise ConfigError("metrics.threshold_distance", f"must be >= 0 or 'global', got {raw!r}")
        washout = _int("metrics.washout", data.get("washout", cls.washout))
        if washout < 0:
            raise ConfigError("metrics.washout", f"must be >= 0, got {washout}")
        fraction = _float("metrics.train_fraction", data.get("train_fraction", cls.train_fraction))
        if not 0.0 < fraction < 1.0:
            raise ConfigError("metrics.train_fraction", f"must be in (0, 1), got {fraction}")
        ridge = _float("metrics.ridge", data.get("ridge", cls.ridge))
        if ridge < 0:
            raise ConfigError("metrics.ridge", f"must be >= 0, got {ridge}")
        return cls(k=k, threshold_distance=threshold, washout=washout, train_fraction=fraction, ridge=ridge)

    def to_dict(self) -> dict:
        threshold: Any = self.threshold_distance
        if threshold is not None and math.isinf(threshold):
            threshold = "global"
        return {"k": self.k, "threshold_distance": threshold, "washout": self.washout,
                "train_fraction": self.train_fraction, "ridge": self.ridge}


@dataclass(frozen=True)
class TaskConfig:
    k_max: int = 50
    k_min: int = 1
    washout: int = 200
    train_fraction: float = 0.75
    ridge: float = 0.0
    models: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_MODELS.items()})

    @classmethod
    def from_dict(cls, data: dict) -> "TaskConfig":
        _reject_unknown("task", data, tuple(f.name for f in fields(cls)))
        k_max = _int("task.k_max", data.get("k_max", cls.k_max))
        k_min = _int("task.k_min", data.get("k_min", cls.k_min))
        if not 0 <= k_min <= k_max:
            raise ConfigError("task.k_max", f"need 0 <= k_min <= k_max, got k_min={k_min}, k_max={k_max}")
        washout = _int("task.washout", data.get("washout", cls.washout))
        if washout < 0:
            raise ConfigError("task.washout", f"must be >= 0, got {washout}")
        fraction = _float("task.train_fraction", data.get("train_fraction", cls.train_fraction))
        if not 0.0 < fraction < 1.0:
            raise ConfigError("task.train_fraction", f"must be in (0, 1), got {fraction}")
        ridge = _float("task.ridge", data.get("ridge", cls.ridge))
        if ridge < 0:
            raise ConfigError("task.ridge", f"must be >= 0, got {ridge}")
        models = data.get("models", DEFAULT_MODELS)
        if not isinstance(models, dict) or not models:
            raise ConfigError("task.models", "must be a non-empty mapping of name -> reservoir overrides")
        cleaned = {}
        for name, overrides in models.items():
            if not isinstance(overrides, dict):
                raise ConfigError(f"task.models.{name}", "must be a mapping of reservoir fields")
            cleaned[str(name)] = dict(overrides)
        return cls(k_max=k_max, k_min=k_min, washout=washout, train_fraction=fraction,
                   ridge=ridge, models=cleaned)

    def to_dict(self) -> dict:
        return {"k_max": self.k_max, "k_min": self.k_min, "washout": self.washout,
                "train_fraction": self.train_fraction, "ridge": self.ridge,
                "models": {name: dict(v) for name, v in self.models.items()}}


# ─────────────────────────────────────────────────────────────────────────────
# RunConfig
# ─────────────────────────────────────────────────────────────────────────────

def _reservoir_from_dict(data: dict, path: str = "reservoir") -> ReservoirSpec:
    if "seed" in data:
        raise ConfigError(f"{path}.seed", "set the top-level seed instead")
    known = tuple(f.name for f in fields(ReservoirSpec))
    try:
        return ReservoirSpec.from_dict(data)
    except (TypeError, ValueError) as e:
        message = str(e)
        if message.startswith("unknown reservoir field"):
            name = message.split(": ", 1)[-1].split(",")[0]
            raise ConfigError(f"{path}.{name}", "unknown field") from e
        raise _wrap(path, ValueError(message), known) from e


def _reservoir_to_dict(spec: ReservoirSpec) -> dict:
    out = spec.to_dict()
    out.pop("seed")
    return out


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "spatial-rc"
    seed: int = 1
    output_dir: str = "runs/spatial-rc"
    threads: int = 1
    reservoir: ReservoirSpec = field(default_factory=ReservoirSpec)
    signal: SignalConfig = field(default_factory=SignalConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    task: TaskConfig = field(default_factory=TaskConfig)
    version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        """Validate a raw mapping. An empty mapping gives the defaults."""
        if not data:
            return cls()
        _reject_unknown("config", data, TOP_LEVEL_KEYS)
        version = data.get("version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError("version", f"unsupported schema version {version!r} (expected {SCHEMA_VERSION})")
        if "signal" not in data:
            raise ConfigError("signal", "missing signal section (kind: random | mackey_glass | file)")

        seed = _int("seed", data.get("seed", cls.seed))
        threads = _int("threads", data.get("threads", cls.threads))
        if threads < 0:
            raise ConfigError("threads", f"must be >= 0 (0 = one per CPU), got {threads}")
        reservoir = _reservoir_from_dict(_section(data, "reservoir"))
        task = TaskConfig.from_dict(_section(data, "task"))
        for name, overrides in task.models.items():
            _reservoir_from_dict({**_reservoir_to_dict(reservoir), **overrides}, f"task.models.{name}")

        return cls(
            experiment=str(data.get("experiment", cls.experiment)),
            seed=seed,
            output_dir=str(data.get("output_dir", cls.output_dir)),
            threads=threads,
            reservoir=reservoir,
            signal=SignalConfig.from_dict(_section(data, "signal")),
            metrics=MetricsConfig.from_dict(_section(data, "metrics")),
            task=task,
        )

    @classmethod
    def load(cls, config_path: str, overrides: tuple[str, ...] = ()) -> "RunConfig":
        data = load_config(config_path)
        if not data:
            # a missing or empty file means the defaults, whatever overrides follow
            data = cls().to_dict()
        for assignment in overrides:
            apply_override(data, assignment)
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "experiment": self.experiment,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "threads": self.threads,
            "reservoir": _reservoir_to_dict(self.reservoir),
            "signal": self.signal.to_dict(),
            "metrics": self.metrics.to_dict(),
            "task": self.task.to_dict(),
        }

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=False)

    def echo(self, directory: Path) -> Path:
        """Write the resolved config into the output directory as config.yaml."""
        path = Path(directory) / "config.yaml"
        path.write_text(self.dump())
        return path

    # -- derived values ------------------------------------------------------

    def reservoir_spec(self, **overrides: Any) -> ReservoirSpec:
        """The reservoir section with its seed derived from the run seed."""
        spec = replace(self.reservoir, seed=derive_seed(self.seed, "reservoir"))
        if overrides:
            spec = _reservoir_from_dict({**_reservoir_to_dict(spec), **overrides})
            spec = replace(spec, seed=derive_seed(self.seed, "reservoir"))
        return spec

    def benchmark_specs(self) -> dict[str, ReservoirSpec]:
        return {name: self.reservoir_spec(**overrides) for name, overrides in self.task.models.items()}

    def effective_threads(self, flag: Optional[int] = None) -> int:
        """--threads flag, then the SPATIAL_RC_THREADS variable, then the config field."""
        if flag is not None:
            return flag
        raw = os.environ.get(THREADS_ENV, "").strip()
        if raw:
            try:
                return int(raw)
            except ValueError:
                raise ConfigError(THREADS_ENV, f"expected an integer, got {raw!r}") from None
        return self.threads
