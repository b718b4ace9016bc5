"""
grains.py - Seeded Voronoi grain disorder.

A film is not uniform: it is made of grains, each with slightly different
material parameters. voronoi_grains scatters seed points over the grid, gives
every cell to its nearest seed (a Voronoi tessellation) and draws one
multiplier per grain. Reservoir models multiply a local parameter (lattice
gain, pinning depth) by the multiplier of the grain the cell falls in.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy.spatial import cKDTree

from spatial_rc.core import FLOAT_FORMAT, write_csv


MULTIPLIER_CLIP = (0.1, 1.9)


@dataclass(frozen=True, eq=False)
class GrainMap:
    """
    labels[r, c] is the grain owning grid cell (r, c); sites are the grain
    seed points as (x, y) = (col, row); grain_multipliers has one entry per
    grain.
    """

    labels: np.ndarray
    sites: np.ndarray
    grain_multipliers: np.ndarray
    mean_grain_size: float
    variance_fraction: float
    seed: int

    @property
    def dims(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def n_grains(self) -> int:
        return len(self.grain_multipliers)

    @property
    def multipliers(self) -> np.ndarray:
        """Per-cell multiplier, same shape as labels."""
        return self.grain_multipliers[self.labels]

    def to_csv(self, path: Union[str, Path]) -> None:
        rows, cols = self.dims
        r, c = np.divmod(np.arange(rows * cols), cols)
        labels = self.labels.ravel()
        data = np.column_stack([r, c, labels, self.grain_multipliers[labels]])
        meta = {"mean_grain_size": self.mean_grain_size,
                "variance_fraction": self.variance_fraction,
                "seed": self.seed, "n_grains": self.n_grains}
        write_csv(path, ["row", "col", "grain", "multiplier"], data, meta,
                  fmt=["%d", "%d", "%d", FLOAT_FORMAT])


def voronoi_grains(
    dims: tuple[int, int],
    mean_grain_size: float,
    variance_fraction: float,
    seed: int = 0,
) -> GrainMap:
    """
    Tessellate a rows × cols grid into grains of the given mean size.

    The number of seeds is round(area / mean_grain_size²), placed uniformly.
    Each grain's multiplier is 1 + variance_fraction · N(0, 1), clipped to
    [0.1, 1.9] so every multiplier stays positive.
    """
    rows, cols = (int(d) for d in dims)
    if rows < 1 or cols < 1:
        raise ValueError(f"grain grid dims must be >= 1, got {dims}")
    if not 0.0 < mean_grain_size < min(rows, cols):
        raise ValueError(f"mean_grain_size must be in (0, {min(rows, cols)}), got {mean_grain_size}")
    if not 0.0 <= variance_fraction < 1.0:
        raise ValueError(f"variance_fraction must be in [0, 1), got {variance_fraction}")

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    n_grains = max(1, int(round(rows * cols / mean_grain_size ** 2)))
    sites = rng.uniform((-0.5, -0.5), (cols - 0.5, rows - 0.5), size=(n_grains, 2))
    multipliers = np.clip(1.0 + variance_fraction * rng.standard_normal(n_grains), *MULTIPLIER_CLIP)

    r, c = np.divmod(np.arange(rows * cols), cols)
    cells = np.column_stack([c, r]).astype(np.float64)
    _, nearest = cKDTree(sites).query(cells)
    labels = nearest.reshape(rows, cols)

    labels.setflags(write=False)
    sites.setflags(write=False)
    multipliers.setflags(write=False)
    return GrainMap(labels=labels, sites=sites, grain_multipliers=multipliers,
                    mean_grain_size=float(mean_grain_size),
                    variance_fraction=float(variance_fraction), seed=int(seed))
