"""Shared fixtures: reference medium, grids, smooth phantoms, cone sets."""

import numpy as np
import pytest

from lumitomo.fields import (OpticalMedium, ScalarField, derived_optics,
                             make_grid, robin_coefficient)
from lumitomo.excitation import Aperture


@pytest.fixture(scope="session")
def tissue_medium():
    """Soft-tissue optical parameters: mu_a=0.05/mm, mu_s=15/mm, g=0.9, m=1.37."""
    _, D = derived_optics(0.05, 15.0, 0.9)
    return OpticalMedium(mu_a=0.05, D=D, A=robin_coefficient(1.37))


@pytest.fixture
def grid64():
    return make_grid(2, (-10.0, -10.0), (20.0, 20.0), (64, 64))


@pytest.fixture
def grid128():
    return make_grid(2, (-10.0, -10.0), (20.0, 20.0), (128, 128))


def extended_grid(grid):
    """Grid with the same spacing, doubled extent, original grid centered."""
    origin = tuple(o - e / 2 for o, e in zip(grid.origin, grid.extent))
    extent = tuple(2 * e for e in grid.extent)
    return make_grid(grid.dim, origin, extent, tuple(2 * n for n in grid.cells))


def two_bump_phantom(grid):
    """Smooth positive phantom: two gaussian bumps inside the domain."""
    X = grid.centers()
    vals = (3.0 * np.exp(-((X[..., 0] - 2.0) ** 2 + (X[..., 1] - 1.0) ** 2) / 4.0)
            + 2.0 * np.exp(-((X[..., 0] + 3.0) ** 2 + (X[..., 1] + 2.0) ** 2) / 6.0))
    return ScalarField(grid, vals)


def fan_apertures(count, half_angle_deg, start_deg=0.0):
    """2D double-cone apertures with axes fanned uniformly over 180 degrees."""
    angles = np.deg2rad(start_deg) + np.arange(count) * (np.pi / count)
    return [Aperture(dim=2, axis=(np.cos(a), np.sin(a)),
                     half_angle=np.deg2rad(half_angle_deg))
            for a in angles]


def rel_l2(recon, truth):
    d = np.asarray(recon, float) - np.asarray(truth, float)
    return float(np.sqrt(np.sum(d ** 2) / np.sum(np.asarray(truth, float) ** 2)))
