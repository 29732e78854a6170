"""Filtered backprojection and weight division."""

import numpy as np
import pytest

from lumitomo.errors import InvalidArgumentError, WeightDegeneracyWarning
from lumitomo.excitation import Sinogram, xray_transform
from lumitomo.fbp import FbpFilter, divide_by_weight, fbp
from lumitomo.fields import ScalarField, make_grid

from conftest import rel_l2, two_bump_phantom


def make_sinogram(f, n_angles=180, n_offsets=363):
    g = f.grid
    angles = np.arange(n_angles) * (np.pi / n_angles)
    half_diag = 0.5 * np.sqrt(sum(e ** 2 for e in g.extent))
    offsets = np.linspace(-half_diag, half_diag, n_offsets)
    return xray_transform(f, angles, offsets)


def test_filter_validation():
    with pytest.raises(InvalidArgumentError):
        FbpFilter(kind="sharpen")
    with pytest.raises(InvalidArgumentError):
        FbpFilter(kind="ramp", cutoff=0.0)
    filt = FbpFilter(kind="ramp", cutoff=1.0)
    resp = filt.response(np.array([0.0, 0.1, 0.2]), nyquist=0.25)
    assert resp[0] == 0.0
    assert np.all(np.diff(resp) > 0)


def test_hann_tapers_high_frequencies():
    freqs = np.linspace(0, 0.25, 10)
    ramp = FbpFilter(kind="ramp", cutoff=1.0).response(freqs, 0.25)
    hann = FbpFilter(kind="ramp-hann", cutoff=1.0).response(freqs, 0.25)
    assert hann[-2] < 0.5 * ramp[-2]
    assert np.allclose(hann[:2], ramp[:2], rtol=0.1)


def test_round_trip_smooth_phantom():
    g = make_grid(2, (-10, -10), (20, 20), (256, 256))
    f = two_bump_phantom(g)
    rec = fbp(make_sinogram(f), g, FbpFilter(kind="ramp", cutoff=1.0))
    assert rel_l2(rec.values, f.values) <= 0.05


def test_round_trip_improves_with_more_angles():
    g = make_grid(2, (-10, -10), (20, 20), (128, 128))
    f = two_bump_phantom(g)
    e_few = rel_l2(fbp(make_sinogram(f, 45), g,
                       FbpFilter(kind="ramp", cutoff=1.0)).values, f.values)
    e_many = rel_l2(fbp(make_sinogram(f, 180), g,
                        FbpFilter(kind="ramp", cutoff=1.0)).values, f.values)
    assert e_many < e_few


def test_too_few_angles_rejected():
    g = make_grid(2, (-10, -10), (20, 20), (32, 32))
    sino = Sinogram(np.linspace(0, np.pi, 4, endpoint=False),
                    np.linspace(-5, 5, 11), np.zeros((4, 11)))
    with pytest.raises(InvalidArgumentError):
        fbp(sino, g)


def test_nonuniform_offsets_rejected():
    g = make_grid(2, (-10, -10), (20, 20), (32, 32))
    offsets = np.array([-1.0, 0.0, 0.5, 3.0])
    sino = Sinogram(np.linspace(0, np.pi, 10, endpoint=False), offsets,
                    np.zeros((10, 4)))
    with pytest.raises(InvalidArgumentError):
        fbp(sino, g)


def test_divide_by_weight_plain():
    g = make_grid(2, (0, 0), (1, 1), (8, 8))
    num = ScalarField.full(g, 6.0)
    den = ScalarField.full(g, 2.0)
    out = divide_by_weight(num, den, v_floor=1e-6)
    assert np.allclose(out.values, 3.0)


def test_divide_by_weight_warns_on_degenerate_support():
    g = make_grid(2, (0, 0), (1, 1), (8, 8))
    num = ScalarField.full(g, 1.0)
    den = ScalarField(g, np.full(g.cells, -1.0))
    with pytest.warns(WeightDegeneracyWarning):
        out = divide_by_weight(num, den, v_floor=1e-3)
    assert np.all(np.isfinite(out.values))
