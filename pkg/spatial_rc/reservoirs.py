"""
reservoirs.py - Surrogate physical reservoirs with spatially located readouts.

Every model shares one interface, so the metrics code runs unchanged on all
of them:

    reservoir.relax(warmup=n)   ->  ReservoirState   (settle to a rest state)
    reservoir.drive(u)          ->  ReadoutMatrix    (one snapshot per sample)
    reservoir.state             ->  ReservoirState   (current snapshot)

Models:

    tanh_lattice       leaky tanh map on a 2-D lattice with 4-neighbour coupling.
                       The gain field is the nonlinearity knob: uniform, grain
                       modulated, or a gradient along the drive direction.
    pinned_particles   overdamped particles pushed along the drive direction
                       through a field of Gaussian pinning wells. Strong input
                       makes particles hop between wells.
    delay_line         shift register; node j holds u(t-1-j). Pure memory.
    lti_filter_bank    first-order low-pass filters with spread time constants.
                       Memory with no nonlinearity.
    polynomial_bank    even polynomials of the current input. Nonlinearity
                       with no memory.

Readout cells sit on a rows × cols grid with pitch 1. The lattice and the
particle density are resolved `cell` times finer and averaged back down.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, fields, replace
from typing import Any, Optional, Union

import numpy as np

from spatial_rc.core import DriveConfig, ReadoutMatrix, SpatialLayout, TimeSeries, derive_seed, random_signal
from spatial_rc.grains import GrainMap, voronoi_grains


MODELS = ("tanh_lattice", "pinned_particles", "delay_line", "lti_filter_bank", "polynomial_bank")

# Any state value beyond this means the drive pushed the model out of a usable regime.
OVERFLOW_GUARD = 1e6

# Width of the density blob each particle paints for the readout.
BLOB_WIDTH = 0.3


class UnstableRegimeError(RuntimeError):
    """A driven state left the overflow guard."""


# ─────────────────────────────────────────────────────────────────────────────
# Spec and state
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ReservoirSpec:
    """
    Everything needed to build a reservoir reproducibly.

    Fields that a model does not use are carried but ignored, so one config
    section can be switched between models by changing `model`.
    """

    model: str = "tanh_lattice"
    rows: int = 8
    cols: int = 8
    cell: int = 1
    drive: DriveConfig = field(default_factory=DriveConfig)
    seed: int = 0

    # tanh_lattice
    leak_rate: float = 0.2
    coupling: float = 0.15
    gain: float = 1.0
    gain_gradient: Optional[tuple[float, float]] = None

    # pinned_particles
    pinning_depth: float = 1.0
    well_width: float = 0.25
    particle_count: int = 4
    particle_dt: float = 0.0025

    # lti_filter_bank
    tau_min: float = 0.5
    tau_max: float = 2.5

    # polynomial_bank
    degree: int = 6

    # grain disorder (tanh_lattice gain, pinned_particles depth)
    grain_size: Optional[float] = None
    grain_variance: float = 0.2

    # relaxation protocol
    warmup: int = 200
    relax_tol: float = 1e-9
    relax_max_steps: int = 100_000

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"grid dims must be >= 1, got {self.rows}×{self.cols}")
        if self.cell < 1:
            raise ValueError(f"cell must be >= 1, got {self.cell}")
        for name in ("leak_rate", "coupling", "gain", "pinning_depth", "well_width",
                     "particle_dt", "tau_min", "tau_max", "grain_variance", "relax_tol"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite, got {getattr(self, name)}")
        if not 0.0 < self.leak_rate <= 1.0:
            raise ValueError(f"leak_rate must be in (0, 1], got {self.leak_rate}")
        if self.gain_gradient is not None:
            gradient = tuple(float(g) for g in self.gain_gradient)
            if len(gradient) != 2 or not all(math.isfinite(g) for g in gradient):
                raise ValueError(f"gain_gradient must be two finite values, got {self.gain_gradient}")
            object.__setattr__(self, "gain_gradient", gradient)
        if self.pinning_depth <= 0 or self.well_width <= 0 or self.particle_dt <= 0:
            raise ValueError("pinning_depth, well_width and particle_dt must be > 0")
        if self.model == "pinned_particles" and not 1 <= self.particle_count <= self.rows * self.cols:
            raise ValueError(f"particle_count must be in [1, {self.rows * self.cols}], got {self.particle_count}")
        if not 0.0 < self.tau_min <= self.tau_max:
            raise ValueError(f"need 0 < tau_min <= tau_max, got {self.tau_min}, {self.tau_max}")
        if self.degree < 2 or self.degree % 2:
            raise ValueError(f"degree must be an even integer >= 2, got {self.degree}")
        if self.grain_size is not None and not self.grain_size > 0:
            raise ValueError(f"grain_size must be > 0, got {self.grain_size}")
        if not 0.0 <= self.grain_variance < 1.0:
            raise ValueError(f"grain_variance must be in [0, 1), got {self.grain_variance}")
        if self.warmup < 0 or self.relax_tol <= 0 or self.relax_max_steps < 1:
            raise ValueError("need warmup >= 0, relax_tol > 0 and relax_max_steps >= 1")

    @property
    def n_nodes(self) -> int:
        return self.rows * self.cols

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ReservoirSpec":
        """Build from a config mapping. Unknown keys are rejected."""
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ValueError(f"unknown reservoir field(s): {', '.join(unknown)}")
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key == "drive":
                drive = dict(value or {})
                extra = sorted(set(drive) - {"input_gain", "time_scale", "direction"})
                if extra:
                    raise ValueError(f"unknown drive field(s): {', '.join(extra)}")
                kwargs[key] = DriveConfig(
                    input_gain=float(drive.get("input_gain", 1.0)),
                    time_scale=float(drive.get("time_scale", 1.0)),
                    direction=tuple(float(v) for v in drive.get("direction", (1.0, 0.0))),
                )
            elif key == "gain_gradient":
                kwargs[key] = None if value is None else tuple(float(v) for v in value)
            elif key == "grain_size":
                kwargs[key] = None if value is None else float(value)
            elif key == "model":
                kwargs[key] = str(value)
            elif isinstance(cls.__dataclass_fields__[key].default, int):
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        return cls(**kwargs)

    def to_dict(self) -> dict[str, Any]:
        """Plain mapping (lists, floats, ints) suitable for YAML."""
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, DriveConfig):
                value = {"input_gain": value.input_gain, "time_scale": value.time_scale,
                         "direction": list(value.direction)}
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out


@dataclass(frozen=True, eq=False)
class ReservoirState:
    """
    Immutable copy of a reservoir's internal state and its readout.

    converged and steps are filled in by relax(); a state taken mid-drive
    reports converged=False and steps=0.
    """

    internal: np.ndarray
    readout: np.ndarray
    converged: bool = False
    steps: int = 0

    def __post_init__(self) -> None:
        for name in ("internal", "readout"):
            arr = np.array(getattr(self, name), dtype=np.float64, copy=True)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"ReservoirState.{name} contains NaN or Inf")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def snapshot(self) -> np.ndarray:
        return self.readout.copy()


# ─────────────────────────────────────────────────────────────────────────────
# Base class
# ─────────────────────────────────────────────────────────────────────────────

def _rng(seed: int, stream: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(derive_seed(seed, stream))))


def _coarse_grain(field2d: np.ndarray, cell: int) -> np.ndarray:
    """Mean over non-overlapping cell × cell blocks, flattened row-major."""
    rows, cols = field2d.shape[0] // cell, field2d.shape[1] // cell
    return field2d.reshape(rows, cell, cols, cell).mean(axis=(1, 3)).ravel()


def _input_mask(orientation: np.ndarray, direction: tuple[float, float]) -> np.ndarray:
    c = np.cos(orientation - np.arctan2(direction[1], direction[0]))
    return np.where(c >= 0.0, 1.0, -1.0) * (0.5 + np.abs(c))


def _fine_grid(rows: int, cols: int, cell: int) -> np.ndarray:
    """(x, y) of every fine cell centre, row-major, in readout-layout units."""
    offsets = (np.arange(cell) + 0.5) / cell - 0.5
    ys = (np.arange(rows)[:, None] + offsets[None, :]).ravel()
    xs = (np.arange(cols)[:, None] + offsets[None, :]).ravel()
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


class Reservoir(ABC):
    """
    Common drive / relax machinery.

    Subclasses provide the initial internal state, one model step, and the
    readout projection. One reservoir instance is not thread safe; build
    one per worker.
    """

    # Model time advanced by one step.
    model_dt: float = 1.0
    # Whether the input hold time is resolved into several model steps.
    substepped: bool = True

    def __init__(self, spec: ReservoirSpec) -> None:
        self.spec = spec
        self.layout = SpatialLayout.grid(spec.rows, spec.cols)
        self.reflections = 0
        self._internal = self.initial_state()

    # -- model hooks ---------------------------------------------------------

    @abstractmethod
    def initial_state(self) -> np.ndarray:
        """Internal state before any relax or drive."""

    @abstractmethod
    def step(self, state: np.ndarray, u_val: float) -> np.ndarray:
        """One model step with input u_val held. Pure: never mutates state."""

    @abstractmethod
    def readout(self, state: np.ndarray) -> np.ndarray:
        """Project an internal state onto the N readout nodes."""

    def _advance(self, state: np.ndarray, u_val: float) -> np.ndarray:
        return self.step(state, u_val)

    # -- shared protocol -----------------------------------------------------

    @property
    def n_substeps(self) -> int:
        """Model steps per input sample (hold time / model_dt)."""
        if not self.substepped:
            return 1
        ratio = self.spec.drive.hold_time / self.model_dt
        count = int(round(ratio))
        if count < 1 or abs(ratio - count) > 1e-9 * max(ratio, 1.0):
            raise ValueError(
                f"hold time {self.spec.drive.hold_time} is not a whole number of "
                f"model steps of {self.model_dt}"
            )
        return count

    @property
    def state(self) -> ReservoirState:
        return ReservoirState(self._internal, self.readout(self._internal))

    def reset(self, internal: Optional[np.ndarray] = None) -> None:
        """Restore the initial state, or load a given internal state."""
        if internal is None:
            self._internal = self.initial_state()
        else:
            internal = np.array(internal, dtype=np.float64, copy=True)
            if internal.shape != self._internal.shape:
                raise ValueError(f"internal state must have shape {self._internal.shape}, got {internal.shape}")
            self._internal = internal
        self.reflections = 0

    def _guard(self, state: np.ndarray, sample: int) -> None:
        if not np.all(np.isfinite(state)) or np.max(np.abs(state)) > OVERFLOW_GUARD:
            raise UnstableRegimeError(
                f"unstable regime: {self.spec.model} state exceeded {OVERFLOW_GUARD:g} at sample {sample}; "
                f"lower input_gain or gain"
            )

    def drive(self, u: Union[TimeSeries, np.ndarray]) -> ReadoutMatrix:
        """
        Feed u through the model, one readout snapshot per sample.

        Each sample is held for 1 / time_scale of model time and the snapshot
        is taken at the end of the hold.
        """
        values = u.values if isinstance(u, TimeSeries) else np.asarray(u, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise ValueError("drive signal contains NaN or Inf")
        dt = u.dt if isinstance(u, TimeSeries) else 1.0
        substeps = self.n_substeps
        reflections_before = self.reflections

        state = self._internal
        out = np.empty((len(values), self.layout.n_nodes))
        for t, u_val in enumerate(values):
            for _ in range(substeps):
                state = self._advance(state, float(u_val))
            self._guard(state, t)
            out[t] = self.readout(state)
        self._internal = state

        bounced = self.reflections - reflections_before
        if bounced:
            print(f"[RESERVOIR] {bounced} boundary reflection(s) during drive", flush=True)
        return ReadoutMatrix(out, self.layout, dt)

    def relax(self, warmup: int = 0) -> ReservoirState:
        """
        Settle to a rest state.

        With warmup > 0 the model is first driven by `warmup` samples of a
        seeded uniform signal on [-1, 1]. Then it runs with zero input until
        the largest per-step change drops below relax_tol, or relax_max_steps
        steps have run (flagged, not fatal).
        """
        if warmup < 0:
            raise ValueError(f"warmup must be >= 0, got {warmup}")
        if warmup:
            self.drive(random_signal(warmup, seed=derive_seed(self.spec.seed, "warmup")))

        state = self._internal
        converged = False
        steps = 0
        while steps < self.spec.relax_max_steps:
            new = self._advance(state, 0.0)
            steps += 1
            delta = float(np.max(np.abs(new - state))) if state.size else 0.0
            state = new
            if delta < self.spec.relax_tol:
                converged = True
                break
        self._guard(state, -1)
        self._internal = state

        if not converged:
            print(
                f"[WARN] {self.spec.model} did not relax within {steps} steps "
                f"(last change {delta:.3g} > {self.spec.relax_tol:g})",
                flush=True,
            )
        return ReservoirState(state, self.readout(state), converged=converged, steps=steps)


# ─────────────────────────────────────────────────────────────────────────────
# Models
# ─────────────────────────────────────────────────────────────────────────────

class TanhLattice(Reservoir):
    """
    x ← (1-α) x + α tanh(g ∘ (c · mean₄(x) + m · a · u))

    mean₄ is the mean of the four lattice neighbours (zero outside the
    lattice), m the direction-weighted input mask, a the input gain, g the
    per-cell gain field.

    Each cell gets a seeded in-plane orientation θ; its input weight is
    sign(c) · (0.5 + |c|) with c = cos(θ - θ_drive), so the drive direction
    sets how strongly and with which sign every cell couples to u.
    """

    def __init__(self, spec: ReservoirSpec) -> None:
        shape = (spec.rows * spec.cell, spec.cols * spec.cell)
        rng = _rng(spec.seed, "tanh_lattice")
        self.mask = _input_mask(rng.uniform(0.0, 2.0 * np.pi, size=shape), spec.drive.direction)
        self.grains: Optional[GrainMap] = None
        self.gain_field = self._build_gain(spec, shape)
        super().__init__(spec)

    def _build_gain(self, spec: ReservoirSpec, shape: tuple[int, int]) -> np.ndarray:
        if spec.gain_gradient is None:
            gain = np.full(shape, spec.gain)
        else:
            points = _fine_grid(spec.rows, spec.cols, spec.cell)
            axis = points @ np.asarray(spec.drive.direction)
            span = np.ptp(axis)
            frac = (axis - axis.min()) / span if span > 0 else np.zeros_like(axis)
            low, high = spec.gain_gradient
            gain = (low + (high - low) * frac).reshape(shape)
        if spec.grain_size is not None:
            self.grains = voronoi_grains(shape, spec.grain_size * spec.cell, spec.grain_variance,
                                         seed=derive_seed(spec.seed, "grains"))
            gain = gain * self.grains.multipliers
        return gain

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.mask.shape)

    def step(self, state: np.ndarray, u_val: float) -> np.ndarray:
        spec = self.spec
        padded = np.pad(state, 1)
        neighbours = 0.25 * (padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:])
        drive = spec.coupling * neighbours + self.mask * (spec.drive.input_gain * u_val)
        return (1.0 - spec.leak_rate) * state + spec.leak_rate * np.tanh(self.gain_field * drive)

    def readout(self, state: np.ndarray) -> np.ndarray:
        return _coarse_grain(state, self.spec.cell)


class PinnedParticles(Reservoir):
    """
    Overdamped particles in a pinning landscape.

        r ← r + dt · (a · u · d̂ − ∇V(r)),   V(r) = -Σ_s D_s exp(-|r - s|² / 2σ²)

    One well per readout cell, centred in the cell with a seeded jitter. Well
    depths D_s are pinning_depth times the local grain multiplier. Particles
    that cross the domain edge are reflected back. The readout is a
    coarse-grained density: every particle paints a Gaussian blob.
    """

    def __init__(self, spec: ReservoirSpec) -> None:
        rng = _rng(spec.seed, "pinned_particles")
        n_sites = spec.rows * spec.cols
        r, c = np.divmod(np.arange(n_sites), spec.cols)
        self.sites = np.column_stack([c, r]).astype(np.float64) + rng.uniform(-0.15, 0.15, size=(n_sites, 2))

        self.grains: Optional[GrainMap] = None
        depth = np.full(n_sites, spec.pinning_depth)
        if spec.grain_size is not None:
            self.grains = voronoi_grains((spec.rows, spec.cols), spec.grain_size, spec.grain_variance,
                                         seed=derive_seed(spec.seed, "grains"))
            depth = depth * self.grains.multipliers.ravel()
        self.depths = depth

        stiffest = float(self.depths.max()) / spec.well_width ** 2
        if spec.particle_dt > 0.1 / stiffest:
            raise ValueError(
                f"particle_dt={spec.particle_dt} too large for the deepest well; "
                f"need <= {0.1 / stiffest:.3g}"
            )

        self._start_sites = rng.choice(n_sites, size=spec.particle_count, replace=False)
        self._low = np.array([-0.5, -0.5])
        self._high = np.array([spec.cols - 0.5, spec.rows - 0.5])
        self._fine = _fine_grid(spec.rows, spec.cols, spec.cell)
        super().__init__(spec)

    @property
    def model_dt(self) -> float:  # type: ignore[override]
        return self.spec.particle_dt

    def initial_state(self) -> np.ndarray:
        return self.sites[self._start_sites].copy()

    def potential_gradient(self, points: np.ndarray) -> np.ndarray:
        """∇V at each of the P × 2 points."""
        sigma2 = self.spec.well_width ** 2
        diff = points[:, None, :] - self.sites[None, :, :]
        weight = self.depths[None, :] * np.exp(-np.sum(diff * diff, axis=2) / (2.0 * sigma2)) / sigma2
        return np.einsum("ps,psk->pk", weight, diff)

    def hop_threshold(self) -> float:
        """Largest restoring force of the shallowest single well, D·e^(-1/2)/σ."""
        return float(self.depths.min() * math.exp(-0.5) / self.spec.well_width)

    def _move(self, state: np.ndarray, u_val: float) -> tuple[np.ndarray, int]:
        spec = self.spec
        push = spec.drive.input_gain * u_val * np.asarray(spec.drive.direction)
        moved = state + spec.particle_dt * (push - self.potential_gradient(state))
        outside = int(np.count_nonzero((moved < self._low) | (moved > self._high)))
        if outside:
            span = self._high - self._low
            folded = np.mod(moved - self._low, 2.0 * span)
            moved = self._low + np.where(folded > span, 2.0 * span - folded, folded)
        return moved, outside

    def step(self, state: np.ndarray, u_val: float) -> np.ndarray:
        return self._move(state, u_val)[0]

    def _advance(self, state: np.ndarray, u_val: float) -> np.ndarray:
        moved, outside = self._move(state, u_val)
        self.reflections += outside
        return moved

    def readout(self, state: np.ndarray) -> np.ndarray:
        diff = self._fine[:, None, :] - state[None, :, :]
        density = np.exp(-np.sum(diff * diff, axis=2) / (2.0 * BLOB_WIDTH ** 2)).sum(axis=1)
        shape = (self.spec.rows * self.spec.cell, self.spec.cols * self.spec.cell)
        return _coarse_grain(density.reshape(shape), self.spec.cell)


class DelayLine(Reservoir):
    """Shift register of depth N = rows·cols; node j reads a · u(t-1-j)."""

    substepped = False

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.spec.n_nodes + 1)

    def step(self, state: np.ndarray, u_val: float) -> np.ndarray:
        return np.concatenate(([self.spec.drive.input_gain * u_val], state[:-1]))

    def readout(self, state: np.ndarray) -> np.ndarray:
        return state[1:].copy()


class LTIFilterBank(Reservoir):
    """x_i ← p_i x_i + (1 - p_i) a u with p_i = exp(-1/τ_i), τ spread over [tau_min, tau_max]."""

    substepped = False

    def __init__(self, spec: ReservoirSpec) -> None:
        taus = np.linspace(spec.tau_min, spec.tau_max, spec.n_nodes)
        self.taus = _rng(spec.seed, "lti_filter_bank").permutation(taus)
        self.poles = np.exp(-1.0 / self.taus)
        super().__init__(spec)

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.spec.n_nodes)

    def step(self, state: np.ndarray, u_val: float) -> np.ndarray:
        return self.poles * state + (1.0 - self.poles) * (self.spec.drive.input_gain * u_val)

    def readout(self, state: np.ndarray) -> np.ndarray:
        return state.copy()


class PolynomialBank(Reservoir):
    """y_i = Σ_{p = 2, 4, .., degree} c_ip (a u)^p with seeded coefficients. Memoryless."""

    substepped = False

    def __init__(self, spec: ReservoirSpec) -> None:
        self.powers = np.arange(2, spec.degree + 1, 2)
        self.coefficients = _rng(spec.seed, "polynomial_bank").standard_normal((spec.n_nodes, len(self.powers)))
        super().__init__(spec)

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.spec.n_nodes)

    def step(self, state: np.ndarray, u_val: float) -> np.ndarray:
        x = self.spec.drive.input_gain * u_val
        return self.coefficients @ (x ** self.powers)

    def readout(self, state: np.ndarray) -> np.ndarray:
        return state.copy()


_MODEL_CLASSES: dict[str, type[Reservoir]] = {
    "tanh_lattice": TanhLattice,
    "pinned_particles": PinnedParticles,
    "delay_line": DelayLine,
    "lti_filter_bank": LTIFilterBank,
    "polynomial_bank": PolynomialBank,
}


def build_reservoir(spec: ReservoirSpec, **overrides: Any) -> Reservoir:
    """Instantiate the model named by spec.model, optionally replacing spec fields."""
    if overrides:
        spec = replace(spec, **overrides)
    return _MODEL_CLASSES[spec.model](spec)
