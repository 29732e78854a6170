"""Filtered backprojection for the 2D parallel-beam transform."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, WeightDegeneracyWarning
from .fields import Grid, ScalarField
from .excitation import Sinogram


@dataclass(frozen=True)
class FbpFilter:
    """Ramp filter, optionally apodized with a Hann window.

    kind: "ramp" or "ramp-hann"; cutoff is a fraction of Nyquist in (0, 1].
    """

    kind: str = "ramp-hann"
    cutoff: float = 0.9

    def __post_init__(self):
        if self.kind not in ("ramp", "ramp-hann"):
            raise InvalidArgumentError(f"unknown filter kind {self.kind!r}")
        if not (0 < self.cutoff <= 1):
            raise InvalidArgumentError("cutoff must lie in (0, 1]")

    def response(self, freqs, nyquist):
        """Frequency response at (possibly negative) frequencies [cycles/mm]."""
        f = np.abs(freqs)
        resp = f.copy()
        fc = self.cutoff * nyquist
        resp[f > fc] = 0.0
        if self.kind == "ramp-hann":
            inside = f <= fc
            resp[inside] *= 0.5 * (1.0 + np.cos(np.pi * f[inside] / fc))
        return resp


def fbp(sino: Sinogram, grid: Grid, filt: FbpFilter = None) -> ScalarField:
    """Parallel-beam filtered backprojection onto a 2D grid.

    Per-angle FFT filtering of the offset profiles, backprojection with
    linear interpolation in the offset coordinate, scaled by pi / n_angles.
    """
    if grid.dim != 2:
        raise InvalidArgumentError("fbp reconstructs onto 2D grids")
    if sino.angles.size < 8:
        raise InvalidArgumentError("need at least 8 projection angles")
    if filt is None:
        filt = FbpFilter()
    offsets = sino.offsets
    dz = offsets[1] - offsets[0]
    if not np.allclose(np.diff(offsets), dz, rtol=1e-8):
        raise InvalidArgumentError("offsets must be uniformly spaced")
    n = offsets.size
    npad = int(2 ** np.ceil(np.log2(2 * n)))
    freqs = np.fft.rfftfreq(npad, d=dz)
    resp = filt.response(freqs, nyquist=0.5 / dz)
    spec = np.fft.rfft(sino.values, npad, axis=1)
    filtered = np.fft.irfft(spec * resp[None, :], npad, axis=1)[:, :n]
    # backproject
    centers = grid.centers()
    X = centers[..., 0] - (grid.origin[0] + 0.5 * grid.extent[0])
    Y = centers[..., 1] - (grid.origin[1] + 0.5 * grid.extent[1])
    out = np.zeros(grid.cells)
    for ia, th in enumerate(sino.angles):
        z = -np.sin(th) * X + np.cos(th) * Y
        pos = (z - offsets[0]) / dz
        i0 = np.floor(pos).astype(int)
        t = pos - i0
        i0c = np.clip(i0, 0, n - 1)
        i1c = np.clip(i0 + 1, 0, n - 1)
        prof = filtered[ia]
        left = np.where((i0 >= 0) & (i0 < n), (1.0 - t) * prof[i0c], 0.0)
        right = np.where((i0 + 1 >= 0) & (i0 + 1 < n), t * prof[i1c], 0.0)
        out += left + right
    out *= np.pi / sino.angles.size
    return ScalarField(grid, out)


def divide_by_weight(g: ScalarField, v: ScalarField, v_floor) -> ScalarField:
    """Cellwise division f = g / max(v, v_floor).

    Warns when the weight is non-positive on more than 1% of the support of
    g (cells with non-negligible magnitude).
    """
    if g.grid != v.grid:
        raise InvalidArgumentError("grids must match")
    support = np.abs(g.values) > 1e-12 * max(float(np.max(np.abs(g.values))), 1e-300)
    n_support = int(np.sum(support))
    if n_support > 0:
        bad = np.sum(v.values[support] <= 0.0)
        if bad > 0.01 * n_support:
            warnings.warn(
                f"weight non-positive on {bad}/{n_support} support cells",
                WeightDegeneracyWarning)
    return ScalarField(g.grid, g.values / np.maximum(v.values, v_floor))
