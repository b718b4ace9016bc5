"""
metrics.py - Spatially resolved nonlinearity, memory capacity and stability.

All three maps come from one recorded (u, readouts) pair:

  nonlinearity   For each node n, fit ŷ_n(t) = c + Σ_{τ=0..k} w_τ u(t-τ) and
                 report NL_n = 1 - R²[ŷ_n, y_n]. A node that is a linear
                 filter of the input scores 0; one the linear model cannot
                 explain at all scores 1.

  memory         For each node n, take the nodes γ_n within a threshold
                 distance and, for every delay τ = 1..k, fit
                 û(t-τ) = c + Σ_i w_i γ_{n,i}(t). MC_n = Σ_τ R²[u(t-τ), û].
                 A threshold of at least the layout diameter recovers the
                 classic whole-reservoir memory capacity.

  stability      |final_n - initial_n| between relaxed snapshots taken before
                 and after the drive. 0 means the node returned exactly.

Row alignment: the first max(washout, k) rows are dropped for every fit, so
the NL embedding and every MC delay use the same rows. Delayed inputs before
the analysis window come from the washout part of u.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Optional, Union

import numpy as np
from scipy import stats

from spatial_rc.core import FLOAT_FORMAT, ReadoutMatrix, SpatialLayout, TimeSeries, write_csv
from spatial_rc.engine import parallel_map
from spatial_rc.estimators import estimator_quality

if TYPE_CHECKING:
    from spatial_rc.reservoirs import Reservoir


DEFAULT_K = 20
DEFAULT_WASHOUT = 500
DEFAULT_TRAIN_FRACTION = 0.75
# Default neighborhood radius, in readout pitches.
DEFAULT_THRESHOLD_PITCHES = 2.0
# R² at the cutoff delay above this means memory extends past k.
TAIL_WARN_R2 = 0.1

METRIC_NAMES = ("nonlinearity", "memory_capacity", "stability")


# ─────────────────────────────────────────────────────────────────────────────
# Types
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class MetricMap:
    """
    One scalar per readout node.

    params records how the map was computed (k, threshold_distance, washout).
    terms holds the per-delay R² matrix (N × k) for memory capacity maps.
    diagnostics collects non-fatal findings (constant traces, long memory).
    """

    metric_name: str
    values: np.ndarray
    layout: SpatialLayout
    params: dict = field(default_factory=dict)
    diagnostics: tuple[str, ...] = ()
    terms: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.metric_name not in METRIC_NAMES:
            raise ValueError(f"metric_name must be one of {METRIC_NAMES}, got {self.metric_name!r}")
        values = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if len(values) != self.layout.n_nodes:
            raise ValueError(f"map has {len(values)} values but layout has {self.layout.n_nodes} nodes")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{self.metric_name} map contains NaN or Inf")

        upper = {"nonlinearity": 1.0, "memory_capacity": self.params.get("k", math.inf)}
        hi = upper.get(self.metric_name, math.inf)
        if np.any(values < 0.0) or np.any(values > hi):
            raise ValueError(f"{self.metric_name} values outside [0, {hi}]")

        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "params", dict(self.params))
        object.__setattr__(self, "diagnostics", tuple(self.diagnostics))

    def mean(self) -> float:
        return float(np.mean(self.values))

    def min(self) -> float:
        return float(np.min(self.values))

    def max(self) -> float:
        return float(np.max(self.values))

    def summary(self) -> dict[str, float]:
        return {"mean": self.mean(), "min": self.min(), "max": self.max()}

    def to_csv(self, path: Union[str, Path]) -> None:
        """Write `node_id,x,y,value` rows."""
        data = np.column_stack([self.layout.node_ids, self.layout.positions, self.values])
        meta = {"metric": self.metric_name, **self.params}
        write_csv(path, ["node_id", "x", "y", "value"], data, meta,
                  fmt=["%d", FLOAT_FORMAT, FLOAT_FORMAT, FLOAT_FORMAT])

    def to_pgm(self, path: Union[str, Path]) -> tuple[float, float]:
        """
        Write a plain (ASCII, P2) grayscale heatmap over the layout grid.

        Values are min-max normalized to 0..255, row-major, row 0 first.
        Returns the (min, max) range used so the caller can record it.
        """
        if self.layout.grid_shape is None:
            raise ValueError("heatmap export needs a grid layout")
        rows, cols = self.layout.grid_shape
        lo, hi = self.min(), self.max()
        if hi > lo:
            levels = np.rint(255.0 * (self.values - lo) / (hi - lo)).astype(int)
        else:
            levels = np.zeros(len(self.values), dtype=int)
        grid = levels.reshape(rows, cols)

        lines = ["P2", f"# {self.metric_name} min={FLOAT_FORMAT % lo} max={FLOAT_FORMAT % hi}",
                 f"{cols} {rows}", "255"]
        lines += [" ".join(str(v) for v in row) for row in grid]
        Path(path).write_text("\n".join(lines) + "\n")
        return lo, hi


@dataclass(frozen=True)
class NeighborhoodIndex:
    """members[n] = ids of the nodes within threshold_distance of node n (self included)."""

    members: tuple[tuple[int, ...], ...]
    threshold_distance: float

    def __len__(self) -> int:
        return len(self.members)

    def __getitem__(self, node: int) -> tuple[int, ...]:
        return self.members[node]


# ─────────────────────────────────────────────────────────────────────────────
# Building blocks
# ─────────────────────────────────────────────────────────────────────────────

def _values(u: Union[TimeSeries, np.ndarray]) -> np.ndarray:
    values = u.values if isinstance(u, TimeSeries) else np.asarray(u, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError(f"input signal must be 1-D, got shape {values.shape}")
    return values


def delay_embed(u: Union[TimeSeries, np.ndarray], k: int) -> np.ndarray:
    """
    Rows [u(t), u(t-1), ..., u(t-k)] for t = k .. T-1.

    Shape (T - k) × (k + 1); the first row is t = k so every entry exists.
    """
    values = _values(u)
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if k >= len(values):
        raise ValueError(f"k={k} needs a signal longer than {k} samples, got {len(values)}")
    windows = np.lib.stride_tricks.sliding_window_view(values, k + 1)
    return np.ascontiguousarray(windows[:, ::-1])


def _analysis_start(n_steps: int, k: int, washout: int) -> int:
    if washout < 0:
        raise ValueError(f"washout must be >= 0, got {washout}")
    start = max(int(washout), int(k))
    if start >= n_steps:
        raise ValueError(f"washout/k of {start} rows leaves nothing of a {n_steps}-step run")
    return start


def _check_aligned(u: np.ndarray, readouts: ReadoutMatrix) -> None:
    if len(u) != readouts.n_steps:
        raise ValueError(f"input has {len(u)} samples but readouts have {readouts.n_steps} rows")


def build_neighborhoods(layout: SpatialLayout, threshold_distance: float) -> NeighborhoodIndex:
    """Node m belongs to γ_n iff distance(n, m) <= threshold_distance."""
    if not threshold_distance >= 0:
        raise ValueError(f"threshold_distance must be >= 0, got {threshold_distance}")
    distances = layout.distance_matrix()
    members = tuple(tuple(int(m) for m in np.flatnonzero(row <= threshold_distance)) for row in distances)
    return NeighborhoodIndex(members=members, threshold_distance=float(threshold_distance))


# ─────────────────────────────────────────────────────────────────────────────
# Maps
# ─────────────────────────────────────────────────────────────────────────────

def nonlinearity_map(
    u: Union[TimeSeries, np.ndarray],
    readouts: ReadoutMatrix,
    k: int = DEFAULT_K,
    washout: int = DEFAULT_WASHOUT,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
    ridge: float = 0.0,
    threads: Optional[int] = None,
) -> MetricMap:
    """NL_n = 1 - held-out R² of the best linear delay-embedded predictor of node n."""
    values = _values(u)
    _check_aligned(values, readouts)
    start = _analysis_start(readouts.n_steps, k, washout)
    features = delay_embed(values, k)[start - k:]
    traces = readouts.data[start:]

    def unit(node: int) -> Optional[float]:
        trace = traces[:, node]
        if np.ptp(trace) == 0.0:
            return None
        return 1.0 - estimator_quality(features, trace, train_fraction, ridge)

    results = parallel_map(unit, range(readouts.n_nodes), threads)

    diagnostics = []
    constant = [n for n, r in enumerate(results) if r is None]
    if constant:
        diagnostics.append(f"constant trace (NL set to 0) at nodes {constant}")
        print(f"[WARN] {len(constant)} constant node trace(s), NL set to 0", flush=True)

    nl = np.array([0.0 if r is None else r for r in results])
    params = {"k": int(k), "washout": int(washout), "train_fraction": float(train_fraction)}
    return MetricMap("nonlinearity", nl, readouts.layout, params, tuple(diagnostics))


def memory_capacity_map(
    u: Union[TimeSeries, np.ndarray],
    readouts: ReadoutMatrix,
    neighborhoods: NeighborhoodIndex,
    k: int = DEFAULT_K,
    washout: int = DEFAULT_WASHOUT,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
    ridge: float = 0.0,
    threads: Optional[int] = None,
) -> MetricMap:
    """
    MC_n = Σ_{τ=1..k} R²[u(t-τ), û_n(t-τ)], one independent estimator per τ.

    Nodes with identical neighborhoods (e.g. all of them under a global
    threshold) share the same estimators, so each distinct neighborhood is
    fitted once per delay.
    """
    if k < 1:
        raise ValueError(f"memory capacity requires k >= 1 (delays start at 1), got k={k}")
    values = _values(u)
    _check_aligned(values, readouts)
    if len(neighborhoods) != readouts.n_nodes:
        raise ValueError(f"neighborhood index covers {len(neighborhoods)} nodes, readouts have {readouts.n_nodes}")
    start = _analysis_start(readouts.n_steps, k, washout)
    states = readouts.data[start:]
    n_rows = readouts.n_steps - start
    n_train = int(math.floor(n_rows * train_fraction))

    distinct: list[tuple[int, ...]] = []
    slot: dict[tuple[int, ...], int] = {}
    for node, members in enumerate(neighborhoods.members):
        if len(members) + 1 > n_train:
            raise ValueError(
                f"neighborhood of node {node} has {len(members)} members but only {n_train} "
                f"training rows; raise T or lower threshold_distance"
            )
        if members not in slot:
            slot[members] = len(distinct)
            distinct.append(members)

    delayed = [values[start - tau: readouts.n_steps - tau] for tau in range(1, k + 1)]

    def unit(job: tuple[int, int]) -> float:
        hood, tau = job
        members = list(distinct[hood])
        return estimator_quality(states[:, members], delayed[tau - 1], train_fraction, ridge)

    jobs = [(h, tau) for h in range(len(distinct)) for tau in range(1, k + 1)]
    r2 = np.array(parallel_map(unit, jobs, threads)).reshape(len(distinct), k)
    terms = np.vstack([r2[slot[members]] for members in neighborhoods.members])
    mc = terms.sum(axis=1)

    diagnostics = []
    long_memory = [n for n in range(readouts.n_nodes) if terms[n, -1] > TAIL_WARN_R2]
    if long_memory:
        diagnostics.append(f"R² at tau=k exceeds {TAIL_WARN_R2} at nodes {long_memory}; memory extends past k")
        print(f"[WARN] memory extends past k={k} at {len(long_memory)} node(s); consider a larger k", flush=True)

    params = {"k": int(k), "threshold_distance": neighborhoods.threshold_distance,
              "washout": int(washout), "train_fraction": float(train_fraction)}
    return MetricMap("memory_capacity", mc, readouts.layout, params, tuple(diagnostics), terms)


def global_memory_capacity(
    u: Union[TimeSeries, np.ndarray],
    readouts: ReadoutMatrix,
    k: int = DEFAULT_K,
    washout: int = DEFAULT_WASHOUT,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
    threads: Optional[int] = None,
) -> float:
    """Whole-reservoir memory capacity: every node in every neighborhood."""
    everyone = build_neighborhoods(readouts.layout, math.inf)
    mc = memory_capacity_map(u, readouts, everyone, k, washout, train_fraction, threads=threads)
    return float(mc.values[0])


def stability_map(
    initial_state: np.ndarray,
    final_state: np.ndarray,
    layout: SpatialLayout,
) -> MetricMap:
    """Per-node |final - initial| between two relaxed snapshots."""
    initial = np.asarray(initial_state, dtype=np.float64).reshape(-1)
    final = np.asarray(final_state, dtype=np.float64).reshape(-1)
    if initial.shape != final.shape:
        raise ValueError(f"snapshot shapes differ: {initial.shape} vs {final.shape}")
    return MetricMap("stability", np.abs(final - initial), layout)


def tradeoff(nl: MetricMap, mc: MetricMap) -> tuple[float, float]:
    """Spearman rank correlation (rho, p) between a nonlinearity and a memory map."""
    if nl.layout.n_nodes != mc.layout.n_nodes:
        raise ValueError("maps cover different layouts")
    result = stats.spearmanr(nl.values, mc.values)
    return float(result[0]), float(result[1])


def axis_correlation(metric: MetricMap, direction: tuple[float, float]) -> tuple[float, float]:
    """Spearman (rho, p) of a map against node position projected on `direction`."""
    coordinate = metric.layout.positions @ np.asarray(direction, dtype=np.float64)
    result = stats.spearmanr(coordinate, metric.values)
    return float(result[0]), float(result[1])


# ─────────────────────────────────────────────────────────────────────────────
# Protocol
# ─────────────────────────────────────────────────────────────────────────────

def analyze(
    u: Union[TimeSeries, np.ndarray],
    reservoir: "Reservoir",
    k: int = DEFAULT_K,
    threshold_distance: Optional[float] = None,
    washout: int = DEFAULT_WASHOUT,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
    ridge: float = 0.0,
    warmup: Optional[int] = None,
    threads: Optional[int] = None,
) -> tuple[MetricMap, MetricMap, MetricMap]:
    """
    Run the full protocol on one reservoir and return (NL, MC, stability).

    relax (with warm-up) -> snapshot -> drive with u -> relax -> snapshot,
    then every map is computed from the single recorded (u, readouts) pair.
    threshold_distance defaults to two readout pitches.
    """
    layout = reservoir.layout
    if threshold_distance is None:
        threshold_distance = DEFAULT_THRESHOLD_PITCHES * layout.pitch

    initial = reservoir.relax(warmup=reservoir.spec.warmup if warmup is None else warmup)
    readouts = reservoir.drive(u)
    final = reservoir.relax()

    stability = stability_map(initial.snapshot(), final.snapshot(), layout)
    nl = nonlinearity_map(u, readouts, k, washout, train_fraction, ridge, threads)
    hoods = build_neighborhoods(layout, threshold_distance)
    mc = memory_capacity_map(u, readouts, hoods, k, washout, train_fraction, ridge, threads)

    print(
        f"[METRICS] {reservoir.spec.model}: NL mean={nl.mean():.4f}  "
        f"MC mean={mc.mean():.4f}  stability mean={stability.mean():.3g}",
        flush=True,
    )
    return nl, mc, stability
