"""Excitation models and direct quadrature of the induced transforms.

Double-cone apertures give the focused-beam transform

    Rf(x, j) = sum_y  a_j((x - y)/|x - y|) / |x - y|^{n-1} * v(y) f(y) * vol

evaluated by midpoint quadrature with an analytic polar correction at the
singular self cell.  Single-line excitation gives the parallel-beam sinogram
of v * f.  The boundary scan either evaluates the transform directly ("fast")
or runs the full PDE chain per focus point ("full-physics").
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .fields import Grid, ScalarField
from .diffusion import (DiscreteOperator, BoundaryField, solve_adjoint_weight,
                        solve_forward, boundary_flux, boundary_functional)

DEFAULT_TAPER_FRACTION = 0.15


@dataclass(frozen=True)
class Aperture:
    """Even angular density of a double cone about `axis`.

    The density equals `amplitude` within half_angle - taper_width of either
    cone axis direction, falls to zero with a cosine rolloff over
    taper_width, and vanishes outside half_angle.  taper_width=None selects
    the default vignetting of 0.15 * half_angle.
    """

    dim: int
    axis: tuple
    half_angle: float
    taper_width: float = None
    amplitude: float = 1.0

    def __post_init__(self):
        ax = np.asarray(self.axis, dtype=np.float64)
        if ax.size != self.dim:
            raise InvalidArgumentError("axis length must equal dim")
        norm = np.linalg.norm(ax)
        if norm == 0:
            raise InvalidArgumentError("axis must be nonzero")
        object.__setattr__(self, "axis", tuple(ax / norm))
        if not (0 < self.half_angle < np.pi / 2):
            raise InvalidArgumentError("half_angle must lie in (0, pi/2)")
        tw = self.taper_width
        if tw is None:
            tw = DEFAULT_TAPER_FRACTION * self.half_angle
        if not (0 <= tw <= self.half_angle):
            raise InvalidArgumentError("taper_width must lie in [0, half_angle]")
        object.__setattr__(self, "taper_width", float(tw))
        if self.amplitude <= 0:
            raise InvalidArgumentError("amplitude must be positive")

    def profile(self, cos_angle):
        """Density as a function of |cos(angle to axis)|; vectorized."""
        c = np.abs(np.asarray(cos_angle, dtype=np.float64))
        ang = np.arccos(np.clip(c, 0.0, 1.0))
        inner = self.half_angle - self.taper_width
        out = np.zeros_like(ang)
        out[ang <= inner] = self.amplitude
        if self.taper_width > 0:
            band = (ang > inner) & (ang < self.half_angle)
            t = (ang[band] - inner) / self.taper_width
            out[band] = self.amplitude * 0.5 * (1.0 + np.cos(np.pi * t))
        return out if out.shape else float(out)

    def angular_integral(self):
        """Integral of the density over the unit circle/sphere (quadrature)."""
        if self.dim == 2:
            th = np.linspace(0.0, 2.0 * np.pi, 8192, endpoint=False)
            vals = self.profile(np.cos(th) * self.axis[0] + np.sin(th) * self.axis[1])
            return float(np.mean(vals) * 2.0 * np.pi)
        # 3D: axial symmetry about the cone axis, integrate over polar angle
        mu = np.linspace(-1.0, 1.0, 16385)
        vals = self.profile(mu)
        return float(np.trapezoid(vals, mu) * 2.0 * np.pi)


def aperture_eval(ap: Aperture, theta):
    """Angular density at a unit direction theta (even by construction)."""
    th = np.asarray(theta, dtype=np.float64)
    if th.shape != (ap.dim,):
        raise InvalidArgumentError(f"theta must be a {ap.dim}-vector")
    if abs(np.linalg.norm(th) - 1.0) > 1e-12:
        raise InvalidArgumentError("theta must be a unit vector")
    return float(ap.profile(np.dot(th, ap.axis)))


def cone_intensity(ap: Aperture, x_focus, y):
    """Beam intensity kernel a((x-y)/|x-y|) / |x-y|^{n-1} at a source point."""
    d = np.asarray(x_focus, float) - np.asarray(y, float)
    r = np.linalg.norm(d)
    if r == 0.0:
        raise InvalidArgumentError("cone_intensity is singular at the focus")
    return float(ap.profile(np.dot(d / r, ap.axis)) / r ** (ap.dim - 1))


def _equal_volume_radius(grid: Grid):
    """Radius of the disk/ball with the same measure as one grid cell."""
    vol = grid.cell_volume
    if grid.dim == 2:
        return np.sqrt(vol / np.pi)
    return (3.0 * vol / (4.0 * np.pi)) ** (1.0 / 3.0)


def _self_cell_weight(ap: Aperture, grid: Grid):
    """Effective kernel value at zero offset from the polar integral.

    The integral of a(theta)/r^{n-1} over an equal-volume ball is
    rho * (angular integral of a); dividing by the cell volume converts it
    into a midpoint-rule kernel sample.
    """
    rho = _equal_volume_radius(grid)
    return rho * ap.angular_integral() / grid.cell_volume


def cone_kernel(ap: Aperture, grid: Grid):
    """Midpoint kernel table over lattice offsets, shape (2n-1, ...)."""
    offsets = [np.arange(-(n - 1), n) * h for n, h in zip(grid.cells, grid.spacing)]
    mesh = np.meshgrid(*offsets, indexing="ij")
    d = np.stack(mesh, axis=-1)
    r = np.sqrt(np.sum(d * d, axis=-1))
    center = tuple(n - 1 for n in grid.cells)
    r_safe = r.copy()
    r_safe[center] = 1.0
    cosang = np.tensordot(d, np.asarray(ap.axis), axes=([-1], [0])) / r_safe
    K = ap.profile(cosang) / r_safe ** (grid.dim - 1)
    K[center] = _self_cell_weight(ap, grid)
    return K


def _fft_convolve_same(g, K, cells):
    """Linear convolution of g (shape cells) with kernel K (shape 2n-1),
    returning the central `cells` block; plain FFT, deterministic."""
    shape = [c + k - 1 for c, k in zip(g.shape, K.shape)]
    fshape = [int(2 ** np.ceil(np.log2(s))) for s in shape]
    axes = tuple(range(g.ndim))
    G = np.fft.rfftn(g, fshape, axes=axes)
    KF = np.fft.rfftn(K, fshape, axes=axes)
    full = np.fft.irfftn(G * KF, fshape, axes=axes)
    start = tuple(n - 1 for n in cells)
    sl = tuple(slice(s, s + c) for s, c in zip(start, cells))
    return full[sl]


def _nested_offset(field_grid: Grid, focus_grid: Grid):
    """Integer cell offset of the field-grid block inside the focus grid.

    Returns a tuple of per-axis offsets when the two grids share spacing and
    the field-grid cell centers form an aligned sub-block of the focus grid;
    None otherwise.  The trivial case of equal grids yields all zeros.
    """
    if field_grid.dim != focus_grid.dim:
        return None
    offs = []
    for a in range(field_grid.dim):
        hf, hc = field_grid.spacing[a], focus_grid.spacing[a]
        if abs(hf - hc) > 1e-12 * hf:
            return None
        shift = (field_grid.origin[a] - focus_grid.origin[a]) / hc
        k = int(round(shift))
        if abs(shift - k) > 1e-9 or k < 0:
            return None
        if k + field_grid.cells[a] > focus_grid.cells[a]:
            return None
        offs.append(k)
    return tuple(offs)


def cone_transform(f: ScalarField, v: ScalarField, ap: Aperture,
                   focus_grid: Grid = None) -> ScalarField:
    """Weighted double-cone transform of f, sampled at focus-grid centers.

    Uses an FFT convolution when the focus grid coincides with the field
    grid or contains it as an aligned sub-block (e.g. a scan extended past
    the object support), otherwise a direct vectorized quadrature per focus
    point.
    """
    grid = f.grid
    if v.grid != grid:
        raise InvalidArgumentError("f and v must share a grid")
    if focus_grid is None:
        focus_grid = grid
    g = v.values * f.values * grid.cell_volume
    offs = _nested_offset(grid, focus_grid)
    if offs is not None:
        if focus_grid == grid:
            K = cone_kernel(ap, grid)
            return ScalarField(focus_grid, _fft_convolve_same(g, K, grid.cells))
        g_emb = np.zeros(focus_grid.cells)
        g_emb[tuple(slice(k, k + n) for k, n in zip(offs, grid.cells))] = g
        K = cone_kernel(ap, focus_grid)
        return ScalarField(focus_grid,
                           _fft_convolve_same(g_emb, K, focus_grid.cells))
    # direct path: loop over focus points
    centers = grid.centers().reshape(-1, grid.dim)
    gflat = g.ravel()
    axis = np.asarray(ap.axis)
    self_w = _self_cell_weight(ap, grid)
    h_min = min(grid.spacing)
    out = np.empty(focus_grid.n_cells)
    foci = focus_grid.centers().reshape(-1, grid.dim)
    for i, x in enumerate(foci):
        d = x[None, :] - centers
        r = np.sqrt(np.sum(d * d, axis=1))
        near = r < 0.49 * h_min
        r_safe = np.where(near, 1.0, r)
        vals = ap.profile((d @ axis) / r_safe) / r_safe ** (grid.dim - 1)
        vals[near] = self_w
        out[i] = float(np.dot(vals, gflat))
    return ScalarField(focus_grid, out.reshape(focus_grid.cells))


@dataclass
class ConeScanData:
    """Reduced cone measurements Rf(x, j) per cone on a focus grid."""

    focus_grid: Grid
    fields: list
    apertures: list = field(default_factory=list)

    def __post_init__(self):
        for fld in self.fields:
            if fld.grid != self.focus_grid:
                raise InvalidArgumentError("scan fields must share the focus grid")

    def summed(self) -> np.ndarray:
        total = np.zeros(self.focus_grid.cells)
        for fld in self.fields:
            total = total + fld.values
        return total


@dataclass
class Sinogram:
    """Line integrals over (angle, offset) for parallel-beam geometry."""

    angles: np.ndarray
    offsets: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=np.float64)
        self.offsets = np.asarray(self.offsets, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.angles.size, self.offsets.size):
            raise InvalidArgumentError("sinogram shape must be (angles, offsets)")
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgumentError("sinogram values must be finite")


def _bilinear_sample(values, grid: Grid, pts):
    """Bilinear interpolation of a 2D cell-centered field; zero outside."""
    fx = (pts[:, 0] - grid.origin[0]) / grid.spacing[0] - 0.5
    fy = (pts[:, 1] - grid.origin[1]) / grid.spacing[1] - 0.5
    i0 = np.floor(fx).astype(int)
    j0 = np.floor(fy).astype(int)
    tx = fx - i0
    ty = fy - j0
    nx, ny = grid.cells
    out = np.zeros(len(pts))
    for di, wx in ((0, 1.0 - tx), (1, tx)):
        for dj, wy in ((0, 1.0 - ty), (1, ty)):
            ii = i0 + di
            jj = j0 + dj
            ok = (ii >= 0) & (ii < nx) & (jj >= 0) & (jj < ny)
            w = wx * wy
            out[ok] += w[ok] * values[ii[ok], jj[ok]]
    return out


def xray_transform(g: ScalarField, angles, offsets) -> Sinogram:
    """Parallel-beam line integrals of a 2D field.

    Lines with direction (cos t, sin t) are offset along the perpendicular
    (-sin t, cos t); sampling step is half the grid spacing with bilinear
    interpolation, zero outside the grid.
    """
    grid = g.grid
    if grid.dim != 2:
        raise InvalidArgumentError("xray_transform requires a 2D grid")
    angles = np.asarray(angles, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.float64)
    step = 0.5 * min(grid.spacing)
    half_diag = 0.5 * np.sqrt(sum(e ** 2 for e in grid.extent))
    center = np.array([grid.origin[a] + 0.5 * grid.extent[a] for a in range(2)])
    ts = np.arange(-half_diag, half_diag + step, step)
    vals = np.zeros((angles.size, offsets.size))
    for ia, th in enumerate(angles):
        d = np.array([np.cos(th), np.sin(th)])
        perp = np.array([-np.sin(th), np.cos(th)])
        for iz, z in enumerate(offsets):
            pts = center[None, :] + z * perp[None, :] + ts[:, None] * d[None, :]
            vals[ia, iz] = np.sum(_bilinear_sample(g.values, grid, pts)) * step
    return Sinogram(angles, offsets, vals)


def _source_field(ap: Aperture, grid: Grid, x_focus, f: ScalarField):
    """Discretized source I_{x,j} * f with self-cell polar correction."""
    centers = grid.centers().reshape(-1, grid.dim)
    d = np.asarray(x_focus, float)[None, :] - centers
    r = np.sqrt(np.sum(d * d, axis=1))
    near = r < 0.49 * min(grid.spacing)
    r_safe = np.where(near, 1.0, r)
    axis = np.asarray(ap.axis)
    vals = ap.profile((d @ axis) / r_safe) / r_safe ** (grid.dim - 1)
    vals[near] = _self_cell_weight(ap, grid)
    return ScalarField(grid, (vals * f.values.ravel()).reshape(grid.cells))


def simulate_boundary_scan(op: DiscreteOperator, h: BoundaryField,
                           f: ScalarField, apertures, focus_grid: Grid = None,
                           mode="fast", flux_mode="continuum",
                           weight: ScalarField = None) -> ConeScanData:
    """Simulate the reduced boundary measurements for every focus and cone.

    mode "fast" evaluates the weighted cone transform directly (the two modes
    agree through the reciprocity identity); "full-physics" runs one forward
    PDE solve per (focus, cone) pair and integrates h * Q over the boundary.
    A precomputed weight field may be passed to skip the adjoint solve.
    """
    if mode not in ("fast", "full-physics"):
        raise InvalidArgumentError(f"unknown scan mode {mode!r}")
    grid = f.grid
    if focus_grid is None:
        focus_grid = grid
    if mode == "fast":
        v = weight if weight is not None else solve_adjoint_weight(op, h)
        fields = [cone_transform(f, v, ap, focus_grid) for ap in apertures]
        return ConeScanData(focus_grid, fields, list(apertures))
    fields = []
    foci = focus_grid.centers().reshape(-1, grid.dim)
    for ap in apertures:
        out = np.empty(len(foci))
        for i, x in enumerate(foci):
            s = _source_field(ap, grid, x, f)
            u = solve_forward(op, s)
            Q = boundary_flux(op, u, mode=flux_mode)
            out[i] = boundary_functional(h, Q)
        fields.append(ScalarField(focus_grid, out.reshape(focus_grid.cells)))
    return ConeScanData(focus_grid, fields, list(apertures))
