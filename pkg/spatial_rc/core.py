"""
core.py - Domain types and data plumbing shared by every module.

A run always looks the same from the outside:

    u(t)  ──drive──▶  reservoir  ──snapshot per sample──▶  ReadoutMatrix (T × N)

TimeSeries holds u(t), targets and single node traces. ReadoutMatrix holds the
observed node values y_n(t) and points at the SpatialLayout that says where
each node sits. DriveConfig bundles how u(t) is coupled in (gain, time scale,
direction).

Random streams use numpy's PCG64 bit generator seeded through SeedSequence.
That pair is stable across numpy releases, so CSV fixtures produced from a seed
stay valid.

Everything here is immutable after construction (arrays are flagged read-only).
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from scipy.spatial.distance import cdist


# Algorithm identity recorded in every generated series.
PRNG_NAME = "numpy.PCG64/SeedSequence"

# Enough digits to round-trip a float64 exactly.
FLOAT_FORMAT = "%.17g"

DISTANCE_METRICS = ("euclidean", "chebyshev")


def _frozen_array(values: Any, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    arr.setflags(write=False)
    return arr


def derive_seed(seed: int, stream: str) -> int:
    """
    Independent sub-seed for a named random stream.

    One run seed feeds the input signal, the reservoir construction and the
    warm-up drive. Keying SeedSequence by (seed, crc32(stream)) keeps those
    streams uncorrelated while staying reproducible.
    """
    key = zlib.crc32(stream.encode("utf-8"))
    return int(np.random.SeedSequence([int(seed), key]).generate_state(1, dtype=np.uint32)[0])


# ─────────────────────────────────────────────────────────────────────────────
# TimeSeries
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Uniformly sampled scalar sequence with provenance metadata."""

    values: np.ndarray
    dt: float = 1.0
    t0: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = _frozen_array(self.values, 1, "TimeSeries.values")
        if len(values) < 1:
            raise ValueError("TimeSeries needs at least one sample")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"TimeSeries.dt must be > 0, got {self.dt}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.values))

    def to_csv(self, path: Union[str, Path], name: str = "value") -> None:
        """Write `# key=value` metadata lines, then `t,<name>` rows."""
        meta = {"dt": self.dt, "t0": self.t0, **self.meta}
        write_csv(path, ["t", name], np.column_stack([self.times, self.values]), meta)

    @classmethod
    def from_csv(cls, path: Union[str, Path], column: int = 0) -> "TimeSeries":
        meta, _, data = read_csv(path)
        t = data[:, 0]
        dt = float(meta.pop("dt", t[1] - t[0] if len(t) > 1 else 1.0))
        t0 = float(meta.pop("t0", t[0]))
        return cls(values=data[:, 1 + column], dt=dt, t0=t0, meta=meta)


# ─────────────────────────────────────────────────────────────────────────────
# SpatialLayout
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class SpatialLayout:
    """
    Readout node positions in the plane.

    Node ids are implicit: row i of `positions` is node i, so ids are always
    unique and contiguous from 0. `grid_shape` is set for rectangular grids
    (row-major ids) and enables heatmap export. `pitch` is the readout cell
    spacing and sets the default neighborhood radius.
    """

    positions: np.ndarray
    metric: str = "euclidean"
    pitch: float = 1.0
    grid_shape: Optional[tuple[int, int]] = None

    def __post_init__(self) -> None:
        positions = _frozen_array(self.positions, 2, "SpatialLayout.positions")
        if positions.shape[1] != 2:
            raise ValueError(f"positions must be N × 2, got {positions.shape}")
        if len(positions) < 1:
            raise ValueError("layout needs at least one node")
        if self.metric not in DISTANCE_METRICS:
            raise ValueError(f"metric must be one of {DISTANCE_METRICS}, got {self.metric!r}")
        if not self.pitch > 0:
            raise ValueError(f"pitch must be > 0, got {self.pitch}")
        if self.grid_shape is not None:
            rows, cols = (int(v) for v in self.grid_shape)
            if rows * cols != len(positions):
                raise ValueError(f"grid_shape {self.grid_shape} does not match {len(positions)} nodes")
            object.__setattr__(self, "grid_shape", (rows, cols))
        object.__setattr__(self, "positions", positions)

    @classmethod
    def grid(cls, rows: int, cols: int, pitch: float = 1.0, metric: str = "euclidean") -> "SpatialLayout":
        """Rectangular grid, node id = row * cols + col, x along columns."""
        if rows < 1 or cols < 1:
            raise ValueError(f"grid dims must be >= 1, got {rows}×{cols}")
        r, c = np.divmod(np.arange(rows * cols), cols)
        positions = np.column_stack([c * pitch, r * pitch]).astype(np.float64)
        return cls(positions=positions, metric=metric, pitch=pitch, grid_shape=(rows, cols))

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    @property
    def node_ids(self) -> np.ndarray:
        return np.arange(self.n_nodes)

    def distance_matrix(self) -> np.ndarray:
        return cdist(self.positions, self.positions, metric=self.metric)

    @property
    def diameter(self) -> float:
        return float(self.distance_matrix().max())

    def permuted(self, order: np.ndarray) -> "SpatialLayout":
        """New layout whose node i is this layout's node order[i]. Grid shape is dropped."""
        order = np.asarray(order)
        return SpatialLayout(positions=self.positions[order], metric=self.metric, pitch=self.pitch)

    def to_csv(self, path: Union[str, Path]) -> None:
        data = np.column_stack([self.node_ids, self.positions])
        meta = {"metric": self.metric, "pitch": self.pitch}
        if self.grid_shape is not None:
            meta["grid_shape"] = f"{self.grid_shape[0]}x{self.grid_shape[1]}"
        write_csv(path, ["node_id", "x", "y"], data, meta, fmt=["%d", FLOAT_FORMAT, FLOAT_FORMAT])

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "SpatialLayout":
        meta, _, data = read_csv(path)
        ids = data[:, 0].astype(int)
        if not np.array_equal(ids, np.arange(len(ids))):
            raise ValueError(f"{path}: node ids must be contiguous from 0")
        grid_shape = None
        if "grid_shape" in meta:
            rows, cols = meta["grid_shape"].split("x")
            grid_shape = (int(rows), int(cols))
        return cls(
            positions=data[:, 1:3],
            metric=meta.get("metric", "euclidean"),
            pitch=float(meta.get("pitch", 1.0)),
            grid_shape=grid_shape,
        )


# ─────────────────────────────────────────────────────────────────────────────
# ReadoutMatrix
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class ReadoutMatrix:
    """T × N node values; row = time step, column = node id."""

    data: np.ndarray
    layout: SpatialLayout
    dt: float = 1.0

    def __post_init__(self) -> None:
        data = _frozen_array(self.data, 2, "ReadoutMatrix.data")
        if data.shape[1] != self.layout.n_nodes:
            raise ValueError(
                f"readout has {data.shape[1]} columns but layout has {self.layout.n_nodes} nodes"
            )
        if not self.dt > 0:
            raise ValueError(f"ReadoutMatrix.dt must be > 0, got {self.dt}")
        object.__setattr__(self, "data", data)

    @property
    def n_steps(self) -> int:
        return self.data.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.data.shape[1]

    def column(self, node: int) -> TimeSeries:
        return TimeSeries(self.data[:, node], dt=self.dt, meta={"node_id": node})

    def rows(self, start: int, stop: Optional[int] = None) -> "ReadoutMatrix":
        return ReadoutMatrix(self.data[start:stop], self.layout, self.dt)

    def permuted(self, order: np.ndarray) -> "ReadoutMatrix":
        order = np.asarray(order)
        return ReadoutMatrix(self.data[:, order], self.layout.permuted(order), self.dt)

    def to_csv(self, path: Union[str, Path]) -> None:
        times = self.dt * np.arange(self.n_steps)
        header = ["t"] + [f"n{i}" for i in range(self.n_nodes)]
        write_csv(path, header, np.column_stack([times, self.data]), {"dt": self.dt})

    @classmethod
    def from_csv(cls, path: Union[str, Path], layout: SpatialLayout) -> "ReadoutMatrix":
        meta, _, data = read_csv(path)
        return cls(data[:, 1:], layout, float(meta.get("dt", 1.0)))


# ─────────────────────────────────────────────────────────────────────────────
# DriveConfig
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class DriveConfig:
    """
    How u(t) is coupled into a reservoir.

    input_gain scales the drive amplitude. time_scale is the number of input
    samples per unit of reservoir time, so each sample is held for
    1 / time_scale. direction is the unit drive axis in the layout plane.
    """

    input_gain: float = 1.0
    time_scale: float = 1.0
    direction: tuple[float, float] = (1.0, 0.0)

    def __post_init__(self) -> None:
        if not math.isfinite(self.input_gain):
            raise ValueError(f"input_gain must be finite, got {self.input_gain}")
        if not (self.time_scale > 0 and math.isfinite(self.time_scale)):
            raise ValueError(f"time_scale must be > 0, got {self.time_scale}")
        direction = tuple(float(v) for v in self.direction)
        if len(direction) != 2:
            raise ValueError(f"direction must be a 2-vector, got {self.direction}")
        if abs(math.hypot(*direction) - 1.0) > 1e-12:
            raise ValueError(f"direction must have unit norm, got {direction}")
        object.__setattr__(self, "direction", direction)

    @property
    def hold_time(self) -> float:
        """Reservoir time each input sample is held for."""
        return 1.0 / self.time_scale


# ─────────────────────────────────────────────────────────────────────────────
# Signal generation and splitting
# ─────────────────────────────────────────────────────────────────────────────

def random_signal(n: int, low: float = -1.0, high: float = 1.0, seed: int = 0) -> TimeSeries:
    """n i.i.d. samples uniform on [low, high]; identical for identical seeds."""
    if int(n) < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not (math.isfinite(low) and math.isfinite(high)) or low >= high:
        raise ValueError(f"need finite low < high, got low={low}, high={high}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    values = rng.uniform(low, high, size=int(n))
    meta = {"generator": "random_signal", "prng": PRNG_NAME, "seed": int(seed),
            "n": int(n), "low": float(low), "high": float(high)}
    return TimeSeries(values=values, dt=1.0, t0=0.0, meta=meta)


def normalize_minmax(series: TimeSeries, low: float = -1.0, high: float = 1.0) -> TimeSeries:
    """Affinely map a series onto [low, high] (constant series map to the midpoint)."""
    v = series.values
    span = float(v.max() - v.min())
    if span == 0.0:
        values = np.full_like(v, 0.5 * (low + high))
    else:
        values = low + (high - low) * (v - v.min()) / span
    meta = {**series.meta, "normalized": f"[{low}, {high}]"}
    return TimeSeries(values=values, dt=series.dt, t0=series.t0, meta=meta)


def split_train_test(
    features: np.ndarray,
    targets: np.ndarray,
    train_fraction: float = 0.75,
    min_rows: int = 2,
) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """
    Contiguous prefix split, no shuffling.

    Train gets the first floor(T * train_fraction) rows, test the rest. A
    partition holding fewer than `min_rows` rows counts as empty: R² needs two
    points to mean anything.
    """
    features = np.asarray(features)
    targets = np.asarray(targets)
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if len(features) != len(targets):
        raise ValueError(f"feature rows ({len(features)}) != target rows ({len(targets)})")
    total = len(features)
    n_train = int(math.floor(total * train_fraction))
    if n_train < min_rows or total - n_train < min_rows:
        raise ValueError(
            f"split of {total} rows at {train_fraction} leaves {n_train} train / "
            f"{total - n_train} test rows (need >= {min_rows} each)"
        )
    return (features[:n_train], targets[:n_train]), (features[n_train:], targets[n_train:])


# ─────────────────────────────────────────────────────────────────────────────
# CSV helpers
# ─────────────────────────────────────────────────────────────────────────────

def _format_meta(value: Any) -> str:
    if isinstance(value, float):
        return FLOAT_FORMAT % value
    return str(value)


def write_csv(
    path: Union[str, Path],
    header: list[str],
    data: np.ndarray,
    meta: Optional[dict] = None,
    fmt: Union[str, list[str]] = FLOAT_FORMAT,
) -> None:
    lines = [f"# {k}={_format_meta(v)}" for k, v in (meta or {}).items()]
    lines.append(",".join(header))
    np.savetxt(path, np.atleast_2d(data), fmt=fmt, delimiter=",",
               header="\n".join(lines), comments="")


def read_csv(path: Union[str, Path]) -> tuple[dict[str, str], list[str], np.ndarray]:
    meta: dict[str, str] = {}
    lines = Path(path).read_text().splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, value = lines[i][1:].strip().partition("=")
        meta[key] = value
        i += 1
    if i >= len(lines):
        raise ValueError(f"{path}: missing header row")
    header = lines[i].split(",")
    data = np.loadtxt(lines[i + 1:], delimiter=",", ndmin=2)
    return meta, header, data
