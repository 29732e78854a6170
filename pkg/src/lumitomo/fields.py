"""Uniform cell-centered grids, scalar fields, optical media and phantoms.

All lengths are millimetres.  Grids are axis-aligned rectangles/boxes with
cell-centered sample points; fields are dense float64 arrays shaped like the
grid.  Everything here is immutable after construction and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian cell-centered grid over the box [origin, origin+extent]."""

    dim: int
    origin: tuple
    extent: tuple
    cells: tuple

    @property
    def spacing(self):
        return tuple(e / n for e, n in zip(self.extent, self.cells))

    @property
    def n_cells(self):
        return int(np.prod(self.cells))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axis_centers(self, axis):
        """Cell-center coordinates along one axis."""
        h = self.spacing[axis]
        return self.origin[axis] + (np.arange(self.cells[axis]) + 0.5) * h

    def centers(self):
        """Array of cell-center coordinates, shape cells + (dim,)."""
        axes = [self.axis_centers(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def index_of(self, point):
        """Multi-index of the cell whose box contains `point`."""
        idx = []
        for a in range(self.dim):
            i = int(np.floor((point[a] - self.origin[a]) / self.spacing[a]))
            if i < 0 or i >= self.cells[a]:
                raise InvalidArgumentError(
                    f"point {tuple(point)} lies outside the grid on axis {a}")
            idx.append(i)
        return tuple(idx)

    def contains(self, point):
        return all(
            self.origin[a] <= point[a] <= self.origin[a] + self.extent[a]
            for a in range(self.dim))


def make_grid(dim, origin, extent, cells) -> Grid:
    """Build a grid, validating shape arguments.

    Requires at least 4 cells and positive extent on every axis.
    """
    origin = tuple(float(x) for x in origin)
    extent = tuple(float(x) for x in extent)
    cells = tuple(int(n) for n in cells)
    if dim not in (2, 3):
        raise InvalidArgumentError(f"dim must be 2 or 3, got {dim}")
    if not (len(origin) == len(extent) == len(cells) == dim):
        raise InvalidArgumentError("origin/extent/cells length must equal dim")
    if any(e <= 0 for e in extent):
        raise InvalidArgumentError(f"extent must be positive, got {extent}")
    if any(n < 4 for n in cells):
        raise InvalidArgumentError(f"need at least 4 cells per axis, got {cells}")
    return Grid(dim, origin, extent, cells)


class ScalarField:
    """A real-valued field sampled at the cell centers of a grid.

    Values are stored as a read-only float64 array shaped like the grid and
    must be finite.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.shape != tuple(grid.cells):
            if values.size == grid.n_cells:
                values = values.reshape(grid.cells)
            else:
                raise InvalidArgumentError(
                    f"values shape {values.shape} incompatible with cells {grid.cells}")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("field values must be finite")
        values = values.copy()
        values.flags.writeable = False
        self.grid = grid
        self.values = values

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.cells))

    @classmethod
    def full(cls, grid, value):
        return cls(grid, np.full(grid.cells, float(value)))

    def l2_norm(self):
        """Volume-weighted L2 norm."""
        return float(np.sqrt(np.sum(self.values ** 2) * self.grid.cell_volume))

    def integral(self):
        return float(np.sum(self.values) * self.grid.cell_volume)

    def __repr__(self):
        return f"ScalarField(cells={self.grid.cells}, range=[{self.values.min():g}, {self.values.max():g}])"


@dataclass(frozen=True)
class OpticalMedium:
    """Constant optical coefficients of the tissue.

    mu_a : absorption [1/mm], >= 0
    D    : diffusion coefficient [mm], > 0
    A    : Robin (refractive-mismatch) coefficient, dimensionless, > 0
    """

    mu_a: float
    D: float
    A: float

    def __post_init__(self):
        if self.mu_a < 0:
            raise InvalidArgumentError(f"mu_a must be >= 0, got {self.mu_a}")
        if self.D <= 0:
            raise InvalidArgumentError(f"D must be > 0, got {self.D}")
        if self.A <= 0:
            raise InvalidArgumentError(f"A must be > 0, got {self.A}")

    @property
    def k(self):
        """Effective attenuation wavenumber sqrt(mu_a / D) [1/mm]."""
        return float(np.sqrt(self.mu_a / self.D))


def derived_optics(mu_a, mu_s, g):
    """Reduced scattering and diffusion coefficient in the diffusion regime.

    mu_s_prime = (1 - g) * mu_s,  D = 1 / (3 (mu_a + mu_s_prime)).
    """
    if mu_a < 0 or mu_s < 0:
        raise InvalidArgumentError("mu_a and mu_s must be non-negative")
    if not (0 <= g < 1):
        raise InvalidArgumentError(f"anisotropy g must lie in [0, 1), got {g}")
    mu_s_prime = (1.0 - g) * mu_s
    total = mu_a + mu_s_prime
    if total <= 0:
        raise InvalidArgumentError("mu_a + (1-g) mu_s must be positive")
    return mu_s_prime, 1.0 / (3.0 * total)


def robin_coefficient(m):
    """Robin coefficient A = (1+R)/(1-R) from the relative refractive index m.

    R is the standard cubic-in-1/m fit used in tissue optics.
    """
    if m <= 0:
        raise InvalidArgumentError(f"refractive index must be positive, got {m}")
    R = -1.4399 / m ** 2 + 0.7099 / m + 0.6681 + 0.063 * m
    if R >= 1:
        raise InvalidArgumentError(f"reflectance fit R={R:g} >= 1; outside validity range")
    return (1.0 + R) / (1.0 - R)


@dataclass(frozen=True)
class PhantomSpec:
    """Background concentration plus spherical/circular inclusions.

    Each inclusion is (center, radius, concentration); later entries win on
    overlap.
    """

    background: float
    inclusions: tuple

    def __post_init__(self):
        object.__setattr__(self, "inclusions", tuple(
            (tuple(float(x) for x in c), float(r), float(v))
            for (c, r, v) in self.inclusions))
        for (_, r, v) in self.inclusions:
            if r <= 0:
                raise InvalidArgumentError(f"inclusion radius must be positive, got {r}")
            if v < 0:
                raise InvalidArgumentError(f"concentration must be >= 0, got {v}")


def build_phantom(spec: PhantomSpec, grid: Grid) -> ScalarField:
    """Rasterize a phantom spec onto a grid (last inclusion wins on overlap)."""
    vals = np.full(grid.cells, float(spec.background))
    centers = grid.centers()
    for (center, radius, conc) in spec.inclusions:
        if len(center) != grid.dim:
            raise InvalidArgumentError("inclusion center dimension mismatch")
        if not grid.contains(center):
            raise InvalidArgumentError(f"inclusion center {center} outside grid")
        d2 = np.sum((centers - np.asarray(center)) ** 2, axis=-1)
        vals[d2 <= radius ** 2] = conc
    return ScalarField(grid, vals)
