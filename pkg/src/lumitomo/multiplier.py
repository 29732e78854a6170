"""Fourier-multiplier calculus for translation-invariant cone apertures.

For an aperture density a(theta) the induced transform acts in frequency by
the homogeneous degree -1 symbol

    r0(xi) = pi * integral over {theta : theta . xi = 0} of a(theta),

two point evaluations in 2D, a great-circle line integral in 3D.  A cone set
is stably invertible iff the summed angular factor is positive in every
direction; inversion is regularized frequency division followed by division
by the interior weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (InvalidArgumentError, StabilityViolationError,
                     UndefinedDirectionError)
from .fields import Grid, ScalarField, make_grid
from .excitation import Aperture, ConeScanData, _nested_offset, cone_kernel
from .diffusion import V_FLOOR_FRACTION

GREAT_CIRCLE_POINTS = 256
MARGIN_SAMPLES_2D = 2048
MARGIN_SAMPLES_3D = 4096
# Frequency bins (in units of the smallest padded-grid frequency) whose
# multiplier values come from the discrete quadrature-kernel spectrum rather
# than the analytic symbol: the analytic form assumes an unbounded kernel,
# which the lowest shell of grid frequencies cannot see.
LOW_FREQ_BINS = 8


def _orthonormal_complement(omega):
    """Two unit vectors spanning the plane perpendicular to a 3-vector."""
    omega = np.asarray(omega, dtype=np.float64)
    helper = np.array([1.0, 0.0, 0.0])
    if abs(omega[0]) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(omega, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(omega, e1)
    return e1, e2


def angular_factor(ap: Aperture, omega):
    """c(omega) = |xi| * r0(xi) for xi in direction omega; vectorized over rows."""
    om = np.atleast_2d(np.asarray(omega, dtype=np.float64))
    axis = np.asarray(ap.axis)
    if ap.dim == 2:
        perp = np.stack([-om[:, 1], om[:, 0]], axis=1)
        c = perp @ axis
        out = np.pi * (ap.profile(c) + ap.profile(-c))
    else:
        phi = (np.arange(GREAT_CIRCLE_POINTS) + 0.5) * (2.0 * np.pi / GREAT_CIRCLE_POINTS)
        cphi, sphi = np.cos(phi), np.sin(phi)
        # orthonormal complement per row, vectorized
        helper = np.where(np.abs(om[:, :1]) > 0.9,
                          np.array([[0.0, 1.0, 0.0]]),
                          np.array([[1.0, 0.0, 0.0]]))
        e1 = np.cross(om, helper)
        e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
        e2 = np.cross(om, e1)
        cosang = np.outer(e1 @ axis, cphi) + np.outer(e2 @ axis, sphi)
        out = np.pi * np.sum(ap.profile(cosang), axis=1) * (2.0 * np.pi / GREAT_CIRCLE_POINTS)
    return out if np.asarray(omega).ndim > 1 else float(out[0])


def multiplier_symbol(ap: Aperture, xi):
    """Symbol r0(xi) = c(xi/|xi|) / |xi| of the cone transform."""
    xi = np.asarray(xi, dtype=np.float64)
    mag = np.linalg.norm(xi)
    if mag == 0.0:
        raise InvalidArgumentError("multiplier_symbol undefined at xi = 0")
    return float(angular_factor(ap, xi / mag)) / mag


def visible_direction(apertures, omega):
    """True iff some cone contains a direction perpendicular to omega."""
    om = np.asarray(omega, dtype=np.float64)
    if abs(np.linalg.norm(om) - 1.0) > 1e-9:
        raise InvalidArgumentError("omega must be a unit vector")
    total = sum(angular_factor(ap, om) for ap in apertures)
    return bool(total > 0.0)


def _direction_samples(dim, n):
    if dim == 2:
        th = (np.arange(n) + 0.5) * (np.pi / n)
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    # Fibonacci half-sphere
    i = np.arange(n) + 0.5
    z = i / n  # upper half sphere z in (0, 1)
    r = np.sqrt(1.0 - z ** 2)
    golden = np.pi * (3.0 - np.sqrt(5.0))
    th = golden * i
    return np.stack([r * np.cos(th), r * np.sin(th), z], axis=1)


@dataclass
class MarginReport:
    """Ellipticity diagnostics over a dense direction sample."""

    margin: float
    max_factor: float
    ratio: float            # max/min of the summed factor; inf if margin = 0
    worst_direction: tuple
    invisible_directions: np.ndarray  # sampled directions with zero factor

    def __float__(self):
        return self.margin


def ellipticity_margin(apertures, n_directions=None) -> MarginReport:
    """Minimum summed angular factor over a half-sphere/half-circle sample.

    A positive margin certifies the stability condition on the sample; the
    max/min ratio flags mildly unstable configurations.
    """
    apertures = list(apertures)
    if not apertures:
        raise InvalidArgumentError("need at least one aperture")
    dim = apertures[0].dim
    if n_directions is None:
        n_directions = MARGIN_SAMPLES_2D if dim == 2 else MARGIN_SAMPLES_3D
    if n_directions < 64:
        raise InvalidArgumentError("need at least 64 sample directions")
    dirs = _direction_samples(dim, n_directions)
    total = np.zeros(len(dirs))
    for ap in apertures:
        total += angular_factor(ap, dirs)
    imin = int(np.argmin(total))
    margin = float(total[imin])
    max_f = float(np.max(total))
    ratio = np.inf if margin <= 0 else max_f / margin
    return MarginReport(margin=margin, max_factor=max_f, ratio=ratio,
                        worst_direction=tuple(dirs[imin]),
                        invisible_directions=dirs[total <= 0.0])


def parametrix_weights(apertures, xi):
    """Per-cone frequency weights q_j = r_j / sum_k r_k^2.

    Satisfies sum_j q_j r_j = 1 wherever some symbol is nonzero; raises on
    invisible directions.
    """
    r = np.array([multiplier_symbol(ap, xi) for ap in apertures])
    denom = float(np.sum(r ** 2))
    if denom == 0.0:
        raise UndefinedDirectionError(
            f"all cone symbols vanish at xi = {tuple(np.asarray(xi, float))}")
    return r / denom


def _frequency_grid(cells, spacing):
    axes = [2.0 * np.pi * np.fft.fftfreq(n, d=h) for n, h in zip(cells, spacing)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def total_symbol_table(apertures, cells, spacing):
    """Summed symbol on an FFT frequency grid, with the DC entry extrapolated.

    The symbol scales like 1/|xi|, so the undefined zero frequency is set to
    (angular mean of the summed factor) / xi_min, the continuous extension of
    its neighborhood magnitudes.
    """
    dim = apertures[0].dim
    xi = _frequency_grid(cells, spacing)
    mag = np.sqrt(np.sum(xi * xi, axis=-1))
    flat_dirs = xi.reshape(-1, dim)
    flat_mag = mag.ravel()
    nz = flat_mag > 0
    dirs = flat_dirs[nz] / flat_mag[nz][:, None]
    c_total = np.zeros(nz.sum())
    for ap in apertures:
        c_total += angular_factor(ap, dirs)
    m = np.zeros(flat_mag.size)
    m[nz] = c_total / flat_mag[nz]
    sample = _direction_samples(dim, MARGIN_SAMPLES_2D if dim == 2 else MARGIN_SAMPLES_3D)
    c_mean = 0.0
    for ap in apertures:
        c_mean += float(np.mean(angular_factor(ap, sample)))
    xi_min = min(2.0 * np.pi / (n * h) for n, h in zip(cells, spacing))
    m[~nz] = c_mean / xi_min
    return m.reshape(cells)


def _wrapped_kernel_spectrum(apertures, padded_cells, spacing, cell_volume):
    """DFT of the summed cone kernel truncated to the padded grid's cell.

    Offsets are taken in [-N/2, N/2) per axis and wrapped periodically; the
    result is the exact diagonalization of the quadrature kernel restricted
    to that window, and replaces the analytic symbol on the lowest
    frequency shell (where the unbounded-kernel assumption fails).
    """
    dim = len(padded_cells)
    table_cells = tuple(n // 2 + 1 for n in padded_cells)
    origin = tuple(0.0 for _ in range(dim))
    extent = tuple(h * c for h, c in zip(spacing, table_cells))
    kgrid = make_grid(dim, origin, extent, table_cells)
    Ksum = sum(cone_kernel(ap, kgrid) for ap in apertures)
    Kc = np.zeros(padded_cells)
    idx = [np.arange(n) - n // 2 for n in padded_cells]
    src = np.ix_(*[i + c - 1 for i, c in zip(idx, table_cells)])
    dst = np.ix_(*[i % n for i, n in zip(idx, padded_cells)])
    Kc[dst] = Ksum[src]
    return np.fft.fftn(Kc).real * cell_volume


def invert_multiplier(scan: ConeScanData, apertures, v: ScalarField,
                      eps=1e-3, check_margin=True) -> ScalarField:
    """Explicit Fourier inversion of summed cone data.

    Sums the per-cone data and extends it to a grid twice the field grid per
    axis, suppressing the periodization of the slowly decaying kernel: when
    the scan's focus grid equals the field grid the extension is zero
    padding, and when the scan already covers a doubled, aligned focus grid
    its measured values fill the extension instead.  The spectrum is then
    divided by the Tikhonov-regularized total multiplier
    m/(m^2 + (eps*m_ref)^2) with m_ref the median multiplier magnitude,
    cropped back to the field grid, and divided by the weight (floored).
    The multiplier is the analytic symbol away from the origin; on the
    lowest shell of grid frequencies it is taken from the spectrum of the
    discrete quadrature kernel truncated to the padded window.
    """
    grid = v.grid
    focus = scan.focus_grid
    apertures = list(apertures)
    if check_margin:
        rep = ellipticity_margin(apertures)
        if rep.margin <= 0.0:
            raise StabilityViolationError(
                f"invisible directions remain (margin = {rep.margin:g}); "
                "use check_margin=False to force a pseudo-inversion")
    data = scan.summed()
    if focus == grid:
        padded_cells = tuple(2 * n for n in grid.cells)
        pad = np.zeros(padded_cells)
        pad[tuple(slice(0, n) for n in grid.cells)] = data
        crop = tuple(slice(0, n) for n in grid.cells)
    else:
        offs = _nested_offset(grid, focus)
        if offs is None or focus.cells != tuple(2 * n for n in grid.cells):
            raise InvalidArgumentError(
                "scan focus grid must equal the field grid or cover it as an "
                "aligned block of a grid with twice the cells per axis")
        padded_cells = focus.cells
        pad = data
        crop = tuple(slice(k, k + n) for k, n in zip(offs, grid.cells))
    m = total_symbol_table(apertures, padded_cells, grid.spacing)
    xi = _frequency_grid(padded_cells, grid.spacing)
    mag = np.sqrt(np.sum(xi * xi, axis=-1))
    xi_min = min(2.0 * np.pi / (n * h) for n, h in zip(padded_cells, grid.spacing))
    low = mag <= LOW_FREQ_BINS * xi_min * (1.0 + 1e-9)
    Khat = _wrapped_kernel_spectrum(apertures, padded_cells, grid.spacing,
                                    grid.cell_volume)
    m[low] = Khat[low]
    nonzero = m > 0
    m_ref = float(np.median(m[nonzero])) if np.any(nonzero) else 0.0
    denom = m ** 2 + (eps * m_ref) ** 2
    # frequencies with zero symbol and zero regularization are unrecoverable
    filt = np.divide(m, denom, out=np.zeros_like(m), where=denom > 0)
    rec = np.fft.ifftn(np.fft.fftn(pad) * filt).real[crop]
    v_floor = V_FLOOR_FRACTION * float(np.max(v.values))
    rec = rec / np.maximum(v.values, v_floor)
    return ScalarField(grid, rec)


@dataclass
class RoiReconstruction:
    """Windowed reconstruction with its validity mask (ROI interior)."""

    field: ScalarField
    mask: np.ndarray


def roi_reconstruct(scan: ConeScanData, apertures, v: ScalarField, eps, roi,
                    rolloff_cells=8, check_margin=True) -> RoiReconstruction:
    """Windowed multiplier inversion restricted to a region of interest.

    `roi` is a tuple of (lo, hi) index bounds per axis, strictly inside the
    grid.  Data outside the ROI is discarded; inside, a cosine rolloff over
    `rolloff_cells` tapers it to zero at the ROI boundary.  Edges with
    visible normal directions are recovered inside the mask; constants are
    biased near the ROI boundary.
    """
    grid = scan.focus_grid
    roi = tuple((int(lo), int(hi)) for (lo, hi) in roi)
    if len(roi) != grid.dim:
        raise InvalidArgumentError("roi must give (lo, hi) bounds per axis")
    for (lo, hi), n in zip(roi, grid.cells):
        if lo <= 0 or hi >= n or hi - lo <= 2 * rolloff_cells:
            raise InvalidArgumentError(
                "roi must be strictly inside the grid and wider than the rolloff")
    window = np.ones(grid.cells)
    for ax, (lo, hi) in enumerate(roi):
        n = grid.cells[ax]
        w = np.zeros(n)
        idx = np.arange(lo, hi)
        w[idx] = 1.0
        ramp = 0.5 * (1.0 - np.cos(np.pi * (np.arange(rolloff_cells) + 1) / (rolloff_cells + 1)))
        w[lo:lo + rolloff_cells] = ramp
        w[hi - rolloff_cells:hi] = ramp[::-1]
        shape = [1] * grid.dim
        shape[ax] = n
        window = window * w.reshape(shape)
    windowed = [ScalarField(grid, fld.values * window) for fld in scan.fields]
    wscan = ConeScanData(grid, windowed, scan.apertures)
    rec = invert_multiplier(wscan, apertures, v, eps, check_margin=check_margin)
    mask = np.zeros(grid.cells, dtype=bool)
    mask[tuple(slice(lo + rolloff_cells, hi - rolloff_cells) for (lo, hi) in roi)] = True
    return RoiReconstruction(field=rec, mask=mask)
