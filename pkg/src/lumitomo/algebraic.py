"""Matrix-free LSQR, Poisson measurement noise, and the error metric."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (EmptyMaskError, InvalidArgumentError, InvalidOperatorError)
from .fields import Grid, ScalarField
from .excitation import Aperture, cone_kernel


@dataclass
class LinearMap:
    """Abstract linear operator given by forward/adjoint vector actions."""

    n_data: int
    n_model: int
    forward: callable   # (n_model,) -> (n_data,)
    adjoint: callable   # (n_data,) -> (n_model,)

    def dot_test(self, seed=0):
        """Relative defect of <A x, y> - <x, A^T y> on random vectors."""
        rng = np.random.Generator(np.random.PCG64(seed))
        x = rng.standard_normal(self.n_model)
        y = rng.standard_normal(self.n_data)
        lhs = float(np.dot(self.forward(x), y))
        rhs = float(np.dot(x, self.adjoint(y)))
        scale = max(abs(lhs), abs(rhs), 1e-300)
        return abs(lhs - rhs) / scale


def scan_linear_map(apertures, v: ScalarField) -> LinearMap:
    """Matrix-free fast-mode scan operator f -> stacked per-cone data.

    Forward and adjoint are exact FFT convolutions with the same midpoint
    kernels, so the dot test holds to machine precision.
    """
    grid = v.grid
    kernels = [cone_kernel(ap, grid) for ap in apertures]
    fshape = [int(2 ** np.ceil(np.log2(n + k - 1)))
              for n, k in zip(grid.cells, kernels[0].shape)]
    axes = tuple(range(len(grid.cells)))
    KF = [np.fft.rfftn(K, fshape, axes=axes) for K in kernels]
    start = tuple(n - 1 for n in grid.cells)
    crop = tuple(slice(s, s + n) for s, n in zip(start, grid.cells))
    vvol = v.values * grid.cell_volume
    n_model = grid.n_cells
    n_data = len(apertures) * n_model

    def forward(x):
        g = (x.reshape(grid.cells)) * vvol
        G = np.fft.rfftn(g, fshape, axes=axes)
        out = [np.fft.irfftn(G * K, fshape, axes=axes)[crop].ravel()
               for K in KF]
        return np.concatenate(out)

    def adjoint(y):
        acc = np.zeros(grid.cells)
        for j, K in enumerate(KF):
            yj = y[j * n_model:(j + 1) * n_model].reshape(grid.cells)
            pad = np.zeros(fshape)
            pad[crop] = yj
            acc += np.fft.irfftn(np.fft.rfftn(pad, axes=axes) * np.conj(K),
                                 fshape, axes=axes)[
                tuple(slice(0, n) for n in grid.cells)]
        return (acc * vvol).ravel()

    return LinearMap(n_data=n_data, n_model=n_model,
                     forward=forward, adjoint=adjoint)


def lsqr(linmap: LinearMap, data, max_iters=500, atol=1e-8,
         dot_test_tol=1e-10):
    """Paige-Saunders LSQR on min ||A x - b||.

    Runs a forward/adjoint dot test before iterating.  Stops when the
    normal-equations residual ||A^T r|| / (||A|| ||r||) falls below atol.
    Returns (solution, history) with history rows
    (iteration, ||r||, ||A^T r||); the residual norms are nonincreasing.
    """
    defect = linmap.dot_test()
    if defect > dot_test_tol:
        raise InvalidOperatorError(
            f"forward/adjoint dot test failed: defect {defect:.3e}")
    b = np.asarray(data, dtype=np.float64).ravel()
    if b.size != linmap.n_data:
        raise InvalidArgumentError("data length mismatch")

    x = np.zeros(linmap.n_model)
    beta = float(np.linalg.norm(b))
    history = []
    if beta == 0.0:
        return x, np.array([[0, 0.0, 0.0]])
    u = b / beta
    v = linmap.adjoint(u)
    alpha = float(np.linalg.norm(v))
    if alpha == 0.0:
        return x, np.array([[0, beta, 0.0]])
    v = v / alpha
    w = v.copy()
    phibar = beta
    rhobar = alpha
    anorm = 0.0
    history.append((0, phibar, alpha * beta))
    for it in range(1, max_iters + 1):
        u = linmap.forward(v) - alpha * u
        beta = float(np.linalg.norm(u))
        if beta > 0:
            u = u / beta
        anorm = np.sqrt(anorm ** 2 + alpha ** 2 + beta ** 2)
        vnext = linmap.adjoint(u) - beta * v
        alpha = float(np.linalg.norm(vnext))
        if alpha > 0:
            v = vnext / alpha
        # Givens rotation
        rho = np.hypot(rhobar, beta)
        c = rhobar / rho
        s = beta / rho
        theta = s * alpha
        rhobar = -c * alpha
        phi = c * phibar
        phibar = s * phibar
        x = x + (phi / rho) * w
        w = v - (theta / rho) * w
        arnorm = alpha * abs(s * phi)
        history.append((it, phibar, arnorm))
        if anorm > 0 and phibar > 0:
            if arnorm / (anorm * phibar) <= atol:
                break
        if arnorm == 0.0:
            break
    return x, np.array(history)


@dataclass(frozen=True)
class NoiseModel:
    """Scaled Poisson noise: y -> Poisson(kappa * y) / kappa, seeded."""

    photons_per_unit: float
    seed: int
    kind: str = "poisson"

    def __post_init__(self):
        if self.kind != "poisson":
            raise InvalidArgumentError(f"unsupported noise kind {self.kind!r}")
        if self.photons_per_unit <= 0:
            raise InvalidArgumentError("photons_per_unit must be positive")


def apply_noise(model: NoiseModel, data):
    """Elementwise Poisson draws; deterministic for a fixed seed."""
    data = np.asarray(data, dtype=np.float64)
    if np.any(data < 0):
        raise InvalidArgumentError("noise model requires non-negative data")
    rng = np.random.Generator(np.random.PCG64(model.seed))
    kappa = model.photons_per_unit
    return rng.poisson(kappa * data).astype(np.float64) / kappa


def relative_error(truth: ScalarField, recon: ScalarField, eps_bg):
    """Mean relative reconstruction error over cells with truth > eps_bg.

    Returns (signed, absolute): the signed mean of (recon-truth)/truth and
    the mean of its absolute value.
    """
    if truth.grid != recon.grid:
        raise InvalidArgumentError("grids must match")
    if eps_bg < 0:
        raise InvalidArgumentError("eps_bg must be >= 0")
    mask = truth.values > eps_bg
    if not np.any(mask):
        raise EmptyMaskError("no cell exceeds the background threshold")
    rel = (recon.values[mask] - truth.values[mask]) / truth.values[mask]
    return float(np.mean(rel)), float(np.mean(np.abs(rel)))
