"""Apertures, cone/X-ray transforms, and boundary-scan simulation."""

import numpy as np
import pytest

from lumitomo.diffusion import BoundaryField, assemble_operator, solve_adjoint_weight
from lumitomo.errors import InvalidArgumentError
from lumitomo.excitation import (Aperture, ConeScanData, Sinogram,
                                 aperture_eval, cone_intensity, cone_kernel,
                                 cone_transform, simulate_boundary_scan,
                                 xray_transform)
from lumitomo.fields import ScalarField, make_grid

from conftest import extended_grid, fan_apertures, two_bump_phantom


def unit(theta):
    return (np.cos(theta), np.sin(theta))


class TestAperture:
    def test_axis_is_normalized(self):
        ap = Aperture(dim=2, axis=(3.0, 4.0), half_angle=0.4)
        assert np.hypot(*ap.axis) == pytest.approx(1.0)

    def test_default_taper_width(self):
        ap = Aperture(dim=2, axis=(1, 0), half_angle=0.5)
        assert ap.taper_width == pytest.approx(0.075)

    def test_profile_on_axis_and_perpendicular(self):
        ap = Aperture(dim=2, axis=(1, 0), half_angle=np.deg2rad(30), amplitude=2.0)
        assert aperture_eval(ap, (1.0, 0.0)) == pytest.approx(2.0)
        assert aperture_eval(ap, (-1.0, 0.0)) == pytest.approx(2.0)  # even
        assert aperture_eval(ap, (0.0, 1.0)) == 0.0

    def test_evenness_random_directions(self):
        ap = Aperture(dim=2, axis=unit(0.7), half_angle=0.5)
        rng = np.random.default_rng(0)
        for th in rng.uniform(0, 2 * np.pi, 20):
            d = np.array(unit(th))
            assert aperture_eval(ap, d) == pytest.approx(aperture_eval(ap, -d))

    def test_rejects_bad_input(self):
        with pytest.raises(InvalidArgumentError):
            Aperture(dim=2, axis=(0.0, 0.0), half_angle=0.4)
        with pytest.raises(InvalidArgumentError):
            Aperture(dim=2, axis=(1, 0), half_angle=2.0)
        ap = Aperture(dim=2, axis=(1, 0), half_angle=0.4)
        with pytest.raises(InvalidArgumentError):
            aperture_eval(ap, (2.0, 0.0))  # not a unit vector


class TestConeIntensity:
    def test_on_axis_decay(self):
        ap = Aperture(dim=2, axis=(1, 0), half_angle=0.4, amplitude=1.5)
        v1 = cone_intensity(ap, (0.0, 0.0), (-2.0, 0.0))
        v2 = cone_intensity(ap, (0.0, 0.0), (-4.0, 0.0))
        assert v1 == pytest.approx(1.5 / 2.0)
        assert v1 / v2 == pytest.approx(2.0)  # 1/r in 2D

    def test_outside_cone_zero(self):
        ap = Aperture(dim=2, axis=(1, 0), half_angle=0.3)
        assert cone_intensity(ap, (0.0, 0.0), (0.0, 3.0)) == 0.0

    def test_singular_at_focus(self):
        ap = Aperture(dim=2, axis=(1, 0), half_angle=0.3)
        with pytest.raises(InvalidArgumentError):
            cone_intensity(ap, (1.0, 1.0), (1.0, 1.0))


class TestConeTransform:
    def test_impulse_far_field(self, grid128):
        # single-cell mass seen from a distant focus is kernel * mass
        ap = Aperture(dim=2, axis=(1, 0), half_angle=np.deg2rad(25))
        vals = np.zeros(grid128.cells)
        src_idx = grid128.index_of((-5.0, 0.0))
        vals[src_idx] = 1.0
        f = ScalarField(grid128, vals)
        v = ScalarField.full(grid128, 1.0)
        out = cone_transform(f, v, ap)
        focus = (5.0, 0.3)
        expected = cone_intensity(ap, focus, (-5.0, 0.0)) * grid128.cell_volume
        got = out.values[grid128.index_of(focus)]
        assert got == pytest.approx(expected, rel=1e-2)

    def test_zero_field(self, grid128):
        ap = Aperture(dim=2, axis=(1, 0), half_angle=0.4)
        out = cone_transform(ScalarField.zeros(grid128),
                             ScalarField.full(grid128, 1.0), ap)
        assert np.all(out.values == 0)

    def test_linearity_in_f_and_v(self, grid64):
        ap = Aperture(dim=2, axis=unit(1.1), half_angle=0.5)
        f = two_bump_phantom(grid64)
        v = ScalarField.full(grid64, 1.0)
        base = cone_transform(f, v, ap).values
        doubled_f = cone_transform(ScalarField(grid64, 2 * f.values), v, ap).values
        scaled_v = cone_transform(f, ScalarField.full(grid64, 3.0), ap).values
        assert np.allclose(doubled_f, 2 * base)
        assert np.allclose(scaled_v, 3 * base)

    def test_full_aperture_radial_center_value(self):
        # a = 1 everywhere: at the center of a radial f the transform equals
        # 2 pi * integral of f(r) dr (radial quadrature oracle)
        n = 256
        g = make_grid(2, (-10, -10), (20, 20), (n, n))
        # an axis at an irrational angle keeps every lattice offset strictly
        # inside the (almost) half-plane cones
        ap = Aperture(dim=2, axis=unit(0.37), half_angle=np.pi / 2 - 1e-9,
                      taper_width=0.0)
        X = g.centers()
        f = ScalarField(g, np.exp(-(X[..., 0] ** 2 + X[..., 1] ** 2) / 2.0))
        v = ScalarField.full(g, 1.0)
        out = cone_transform(f, v, ap)
        r = np.linspace(0, 10, 20001)
        oracle = 2 * np.pi * np.trapezoid(np.exp(-r ** 2 / 2), r)
        center = out.values[g.index_of((0.0, 0.0))]
        assert center == pytest.approx(oracle, rel=2e-2)

    def test_fft_path_matches_direct_loop(self, grid64):
        # same grid: FFT convolution equals the explicit quadrature loop
        ap = Aperture(dim=2, axis=unit(0.4), half_angle=0.5)
        f = two_bump_phantom(grid64)
        v = ScalarField.full(grid64, 1.0)
        fast = cone_transform(f, v, ap).values
        K = cone_kernel(ap, grid64)
        g = f.values * grid64.cell_volume
        c = tuple(n - 1 for n in grid64.cells)
        direct = np.zeros_like(fast)
        idx = np.indices(grid64.cells).reshape(2, -1).T
        for i, j in [(5, 9), (32, 32), (60, 12)]:
            off = K[c[0] + i - idx[:, 0], c[1] + j - idx[:, 1]]
            direct[i, j] = np.dot(off, g.ravel())
        for i, j in [(5, 9), (32, 32), (60, 12)]:
            assert fast[i, j] == pytest.approx(direct[i, j], rel=1e-12)

    def test_extended_focus_grid_agrees_with_direct(self, grid64):
        # nested focus grid: the embedded FFT path equals per-focus quadrature
        ap = Aperture(dim=2, axis=unit(0.4), half_angle=0.5)
        f = two_bump_phantom(grid64)
        v = ScalarField.full(grid64, 1.0)
        big = extended_grid(grid64)
        out = cone_transform(f, v, ap, big)
        assert out.grid == big
        # compare a few foci against the direct sum
        centers = grid64.centers().reshape(-1, 2)
        g = (f.values * grid64.cell_volume).ravel()
        # exterior foci, where no self-cell correction enters
        for p in [(-15.0, 2.0), (12.0, -14.0)]:
            idx = big.index_of(p)
            pc = big.centers()[idx]
            d = pc[None, :] - centers
            r = np.hypot(d[:, 0], d[:, 1])
            vals = ap.profile((d @ np.asarray(ap.axis)) / r) / r
            expected = float(np.dot(vals, g))
            got = out.values[idx]
            assert got == pytest.approx(expected, rel=1e-10, abs=1e-12)


class TestXrayTransform:
    def test_disk_chord_lengths(self):
        n = 255
        g = make_grid(2, (-10, -10), (20, 20), (n, n))
        X = g.centers()
        disk = ScalarField(g, (X[..., 0] ** 2 + X[..., 1] ** 2 <= 9.0).astype(float))
        sino = xray_transform(disk, np.array([0.0]), np.array([0.0, 1.0, 3.5]))
        assert sino.values[0, 0] == pytest.approx(6.0, abs=0.1)
        assert sino.values[0, 1] == pytest.approx(2 * np.sqrt(8.0), abs=0.1)
        assert sino.values[0, 2] == 0.0

    def test_zero_field(self, grid64):
        sino = xray_transform(ScalarField.zeros(grid64),
                              np.linspace(0, np.pi, 10), np.linspace(-5, 5, 11))
        assert np.all(sino.values == 0)

    def test_translation_shifts_offsets(self):
        n = 128
        g = make_grid(2, (-10, -10), (20, 20), (n, n))
        X = g.centers()
        blob0 = ScalarField(g, np.exp(-(X[..., 0] ** 2 + X[..., 1] ** 2)))
        blob1 = ScalarField(g, np.exp(-(X[..., 0] ** 2 + (X[..., 1] - 1.0) ** 2)))
        offsets = np.linspace(-5, 5, 101)
        s0 = xray_transform(blob0, np.array([0.0]), offsets)
        s1 = xray_transform(blob1, np.array([0.0]), offsets)
        # shifting f by +1 in y shifts the angle-0 profile by +1 in offset
        shift = offsets[np.argmax(s1.values[0])] - offsets[np.argmax(s0.values[0])]
        assert shift == pytest.approx(1.0, abs=0.11)

    def test_sinogram_validation(self):
        with pytest.raises(InvalidArgumentError):
            Sinogram(np.zeros(3), np.zeros(4), np.zeros((4, 3)))


class TestBoundaryScan:
    def test_fast_vs_full_physics(self, tissue_medium):
        g = make_grid(2, (-10, -10), (20, 20), (32, 32))
        op = assemble_operator(g, tissue_medium)
        h = BoundaryField.constant(g, 1.0)
        f = two_bump_phantom(g)
        ap = Aperture(dim=2, axis=(1, 0), half_angle=np.deg2rad(19.2))
        focus = make_grid(2, (-4, -4), (8, 8), (4, 4))
        fast = simulate_boundary_scan(op, h, f, [ap], focus_grid=focus, mode="fast")
        full = simulate_boundary_scan(op, h, f, [ap], focus_grid=focus,
                                      mode="full-physics", flux_mode="consistent")
        scale = np.max(np.abs(fast.fields[0].values))
        mismatch = np.max(np.abs(fast.fields[0].values - full.fields[0].values))
        assert mismatch <= 2e-2 * scale

    def test_zero_phantom_both_modes(self, tissue_medium):
        g = make_grid(2, (-10, -10), (20, 20), (16, 16))
        op = assemble_operator(g, tissue_medium)
        h = BoundaryField.constant(g, 1.0)
        f = ScalarField.zeros(g)
        ap = Aperture(dim=2, axis=(1, 0), half_angle=0.4)
        focus = make_grid(2, (-4, -4), (8, 8), (4, 4))
        for mode in ("fast", "full-physics"):
            scan = simulate_boundary_scan(op, h, f, [ap], focus_grid=focus, mode=mode)
            assert np.max(np.abs(scan.fields[0].values)) <= 1e-12

    def test_fast_mode_linearity(self, grid64, tissue_medium):
        op = assemble_operator(grid64, tissue_medium)
        h = BoundaryField.constant(grid64, 1.0)
        f = two_bump_phantom(grid64)
        f2 = ScalarField(grid64, 2 * f.values)
        aps = fan_apertures(3, 35.0)
        v = solve_adjoint_weight(op, h)
        s1 = simulate_boundary_scan(op, h, f, aps, weight=v, mode="fast")
        s2 = simulate_boundary_scan(op, h, f2, aps, weight=v, mode="fast")
        for a, b in zip(s1.fields, s2.fields):
            assert np.allclose(2 * a.values, b.values)

    def test_unknown_mode_rejected(self, grid64, tissue_medium):
        op = assemble_operator(grid64, tissue_medium)
        h = BoundaryField.constant(grid64, 1.0)
        with pytest.raises(InvalidArgumentError):
            simulate_boundary_scan(op, h, two_bump_phantom(grid64),
                                   fan_apertures(1, 30.0), mode="warp")

    def test_scan_data_grid_check(self, grid64, grid128):
        f = ScalarField.zeros(grid64)
        with pytest.raises(InvalidArgumentError):
            ConeScanData(grid128, [f], [])
