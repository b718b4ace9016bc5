"""
tasks.py - Mackey-Glass generation and k-step-ahead prediction benchmarks.

    mackey_glass      integrate dx/dt = a·x(t-τ)/(1 + x(t-τ)ⁿ) - b·x(t)
    train_readout     fit node values at t to target(t + k), score on held-out rows
    horizon_sweep     train_readout for every (model, k), plus a persistence baseline
    run_benchmark     drive each reservoir with normalized Mackey-Glass, then sweep
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from spatial_rc.core import FLOAT_FORMAT, ReadoutMatrix, TimeSeries, normalize_minmax, split_train_test, write_csv
from spatial_rc.engine import parallel_map
from spatial_rc.estimators import LinearEstimator, fit_ols, mean_squared_error
from spatial_rc.reservoirs import ReservoirSpec, build_reservoir


BASELINE_NAME = "persistence"


# ─────────────────────────────────────────────────────────────────────────────
# Mackey-Glass
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class MackeyGlassParams:
    """
    Equation constants plus integration and sampling settings.

    history_init is the constant pre-history x(t <= 0). Samples are taken
    every sample_interval from t = discard up to t_end.
    """

    a: float = 0.2
    b: float = 0.1
    n: float = 10.0
    tau: float = 23.0
    dt: float = 0.1
    t_end: float = 1000.0
    history_init: float = 1.2
    discard: float = 200.0
    sample_interval: float = 1.0

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
        if self.dt <= 0 or self.tau <= 0:
            raise ValueError(f"dt and tau must be > 0, got dt={self.dt}, tau={self.tau}")
        if self.tau < self.dt:
            raise ValueError(f"tau={self.tau} must be at least one step dt={self.dt}")
        if self.sample_interval <= 0:
            raise ValueError(f"sample_interval must be > 0, got {self.sample_interval}")
        ratio = self.sample_interval / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValueError(f"dt={self.dt} does not divide sample_interval={self.sample_interval}")
        if not 0 <= self.discard <= self.t_end:
            raise ValueError(f"need 0 <= discard <= t_end, got discard={self.discard}, t_end={self.t_end}")

    @classmethod
    def from_dict(cls, data: Mapping) -> "MackeyGlassParams":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown mackey_glass field(s): {', '.join(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def mackey_glass(params: MackeyGlassParams = MackeyGlassParams()) -> TimeSeries:
    """
    Fixed-step RK4 on the delay equation.

    Past values live in a ring buffer at half-step spacing: the full-step
    points come from RK4, the midpoints from a cubic Hermite fit through the
    step's end values and slopes. A delayed value x(t - τ) is read by linear
    interpolation in that buffer, and from history_init for t - τ <= 0.
    """
    p = params
    h = p.dt
    half = 0.5 * h
    lag_steps = p.tau / h
    n_steps = int(round(p.t_end / h))
    per_sample = int(round(p.sample_interval / h))
    first_sample = int(math.ceil(p.discard / h - 1e-9))

    buffer: deque[float] = deque([p.history_init], maxlen=2 * int(math.ceil(lag_steps)) + 4)
    newest = 0  # absolute half-step index of buffer[-1]

    def delayed(step: int, c: float) -> float:
        q = 2.0 * (step + c - lag_steps)
        if q <= 0.0:
            return p.history_init
        q_round = round(q)
        if abs(q - q_round) < 1e-9:
            return buffer[int(q_round) - newest - 1]
        lo = int(math.floor(q))
        frac = q - lo
        left = buffer[lo - newest - 1]
        right = buffer[lo - newest]
        return left + frac * (right - left)

    def rhs(x: float, x_lag: float) -> float:
        return p.a * x_lag / (1.0 + x_lag ** p.n) - p.b * x

    x = p.history_init
    slope = rhs(x, delayed(0, 0.0))
    samples: list[float] = []
    for i in range(n_steps + 1):
        if i >= first_sample and (i - first_sample) % per_sample == 0:
            samples.append(x)
        if i == n_steps:
            break
        mid_lag = delayed(i, 0.5)
        k1 = slope
        k2 = rhs(x + half * k1, mid_lag)
        k3 = rhs(x + half * k2, mid_lag)
        k4 = rhs(x + h * k3, delayed(i, 1.0))
        x_next = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        # End slope needs x(t+h-τ), which is already in the buffer since τ >= h.
        slope_next = rhs(x_next, delayed(i + 1, 0.0))
        midpoint = 0.5 * (x + x_next) + h / 8.0 * (slope - slope_next)
        buffer.append(midpoint)
        buffer.append(x_next)
        newest += 2
        if not math.isfinite(x_next):
            raise ValueError(f"Mackey-Glass integration diverged at t={(i + 1) * h:g}")
        x, slope = x_next, slope_next

    if not samples:
        raise ValueError("no samples between discard and t_end")
    meta = {"generator": "mackey_glass", **p.to_dict(), "integrator": "rk4",
            "history": "half-step buffer, linear interpolation"}
    return TimeSeries(values=np.array(samples), dt=p.sample_interval,
                      t0=first_sample * h, meta=meta)


# ─────────────────────────────────────────────────────────────────────────────
# Readout training
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class PredictionResult:
    horizon: int
    mse: float
    readout: LinearEstimator
    baseline_mse: float
    train_mse: float = float("nan")

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mse) and self.mse >= 0):
            raise ValueError(f"mse must be finite and >= 0, got {self.mse}")


def _target_values(target: Union[TimeSeries, np.ndarray]) -> np.ndarray:
    values = target.values if isinstance(target, TimeSeries) else np.asarray(target, dtype=np.float64)
    return values.reshape(-1)


def train_readout(
    readouts: ReadoutMatrix,
    target: Union[TimeSeries, np.ndarray],
    k: int,
    washout: int = 0,
    train_fraction: float = 0.75,
    ridge: float = 0.0,
    nodes: Optional[Sequence[int]] = None,
) -> PredictionResult:
    """
    Fit target(t + k) ≈ c + Σ_n w_n y_n(t) on the train prefix.

    Rows run from t = washout to t = T - 1 - k. The test MSE and the
    persistence baseline (predict target(t + k) := target(t)) are both taken
    on the held-out suffix. `nodes` restricts the readout to a subset.
    """
    y = _target_values(target)
    if len(y) != readouts.n_steps:
        raise ValueError(f"target has {len(y)} samples but readouts have {readouts.n_steps} rows")
    if k < 0:
        raise ValueError(f"horizon k must be >= 0, got {k}")
    if washout < 0 or washout + k >= readouts.n_steps:
        raise ValueError(f"washout={washout} and k={k} leave no rows of a {readouts.n_steps}-step run")

    columns = list(range(readouts.n_nodes)) if nodes is None else [int(n) for n in nodes]
    stop = readouts.n_steps - k
    features = readouts.data[washout:stop][:, columns]
    future = y[washout + k:]
    present = y[washout:stop]

    (x_train, y_train), (x_test, y_test) = split_train_test(features, future, train_fraction)
    if ridge == 0 and len(columns) >= len(x_train):
        raise ValueError(
            f"{len(columns)} readout nodes but only {len(x_train)} training rows; "
            f"the fit is underdetermined, set ridge > 0 or use fewer nodes"
        )

    readout = fit_ols(x_train, y_train, ridge=ridge, feature_spec=f"nodes[{len(columns)}](t) -> target(t+{k})")
    mse = mean_squared_error(readout.predict(x_test), y_test)
    train_mse = mean_squared_error(readout.predict(x_train), y_train)
    baseline = mean_squared_error(present[len(x_train):], y_test)
    return PredictionResult(horizon=int(k), mse=mse, readout=readout, baseline_mse=baseline, train_mse=train_mse)


# ─────────────────────────────────────────────────────────────────────────────
# Sweeps
# ─────────────────────────────────────────────────────────────────────────────

@dataclass
class SweepTable:
    """MSE per (model, k); the persistence baseline appears as its own model."""

    results: dict[tuple[str, int], PredictionResult] = field(default_factory=dict)

    @property
    def models(self) -> list[str]:
        return list(dict.fromkeys(model for model, _ in self.results))

    @property
    def horizons(self) -> list[int]:
        return sorted({k for _, k in self.results})

    def mse(self, model: str, k: int) -> float:
        if model == BASELINE_NAME:
            return self.baseline(k)
        return self.results[(model, k)].mse

    def baseline(self, k: int) -> float:
        for (_, horizon), result in self.results.items():
            if horizon == k:
                return result.baseline_mse
        raise KeyError(f"no results at k={k}")

    def rows(self) -> list[tuple[str, int, float, float]]:
        out = [(model, k, r.mse, r.baseline_mse) for (model, k), r in self.results.items()]
        out += [(BASELINE_NAME, k, self.baseline(k), self.baseline(k)) for k in self.horizons]
        return out

    def to_csv(self, path: Union[str, Path], meta: Optional[dict] = None) -> None:
        """`model,k,mse,baseline_mse`, one row per model and horizon plus baseline rows."""
        lines = [f"# {key}={FLOAT_FORMAT % v if isinstance(v, float) else v}" for key, v in (meta or {}).items()]
        lines.append("model,k,mse,baseline_mse")
        for model, k, mse, baseline in self.rows():
            lines.append(f"{model},{k},{FLOAT_FORMAT % mse},{FLOAT_FORMAT % baseline}")
        Path(path).write_text("\n".join(lines) + "\n")


def horizon_sweep(
    readouts: Mapping[str, ReadoutMatrix],
    target: Union[TimeSeries, np.ndarray],
    k_max: int = 50,
    k_min: int = 1,
    washout: int = 0,
    train_fraction: float = 0.75,
    ridge: float = 0.0,
    threads: Optional[int] = None,
) -> SweepTable:
    """Train one readout per (model, k) for k = k_min..k_max on recorded readouts."""
    if k_min < 0 or k_max < k_min:
        raise ValueError(f"need 0 <= k_min <= k_max, got k_min={k_min}, k_max={k_max}")
    if not readouts:
        raise ValueError("horizon_sweep needs at least one model")
    y = _target_values(target)
    for name, matrix in readouts.items():
        if name == BASELINE_NAME:
            raise ValueError(f"model name {BASELINE_NAME!r} is reserved for the baseline")
        if matrix.n_steps != len(y):
            raise ValueError(f"model {name!r} has {matrix.n_steps} rows, target has {len(y)}")

    cells = [(name, k) for name in readouts for k in range(k_min, k_max + 1)]

    def unit(cell: tuple[str, int]) -> PredictionResult:
        name, k = cell
        return train_readout(readouts[name], y, k, washout, train_fraction, ridge)

    table = SweepTable(dict(zip(cells, parallel_map(unit, cells, threads))))
    for name in readouts:
        print(
            f"[TASK] {name}: mse k={k_min} {table.mse(name, k_min):.3g}  "
            f"k={k_max} {table.mse(name, k_max):.3g}",
            flush=True,
        )
    return table


def mixture_advantage(table: SweepTable, mixture: str, uniform: Iterable[str]) -> float:
    """
    min over k of (mse_mixture - min(mse of the uniform models)).

    Negative means the mixture beat every uniform model at some horizon.
    """
    uniform = list(uniform)
    if not uniform:
        raise ValueError("need at least one uniform model")
    gaps = [table.mse(mixture, k) - min(table.mse(m, k) for m in uniform) for k in table.horizons]
    return float(min(gaps))


def run_benchmark(
    specs: Mapping[str, ReservoirSpec],
    params: MackeyGlassParams = MackeyGlassParams(),
    k_max: int = 50,
    k_min: int = 1,
    washout: int = 200,
    train_fraction: float = 0.75,
    ridge: float = 0.0,
    threads: Optional[int] = None,
) -> tuple[SweepTable, TimeSeries]:
    """
    Drive every reservoir with the same normalized Mackey-Glass series and sweep.

    The series is min-max scaled to [-1, 1] before driving; the scaled series
    is also the prediction target. Returns the table and the series used.
    """
    series = normalize_minmax(mackey_glass(params), -1.0, 1.0)
    print(f"[TASK] Mackey-Glass series: {len(series)} samples", flush=True)

    recorded: dict[str, ReadoutMatrix] = {}
    for name, spec in specs.items():
        reservoir = build_reservoir(spec)
        reservoir.relax(warmup=spec.warmup)
        recorded[name] = reservoir.drive(series)
        print(f"[TASK] drove {name} ({spec.model}, {reservoir.layout.n_nodes} nodes)", flush=True)

    table = horizon_sweep(recorded, series, k_max, k_min, washout, train_fraction, ridge, threads)
    return table, series
