import math
from dataclasses import replace

import numpy as np
import pytest

from recon.metrics import nrmse
from recon.phantoms import (
    DynamicPhantomSpec,
    EllipseSpec,
    cine_spec,
    dynamic_frame,
    dynamic_phantom,
    random_cine_spec,
    random_ellipse_phantom,
    render_ellipses,
    shepp_logan,
    shepp_logan_ellipses,
    synth_coils,
)


def _mask_of(ellipses, N, grow=1):
    m = render_ellipses([replace(e, intensity=1.0) for e in ellipses], N) > 0
    for _ in range(grow):
        m = m | np.roll(m, 1, 0) | np.roll(m, -1, 0) | np.roll(m, 1, 1) | np.roll(m, -1, 1)
    return m


def test_shepp_logan_support_and_range():
    x = shepp_logan(64)
    assert x[32, 32] > 0
    assert x.min() >= 0.0 and x.max() <= 1.0
    c = (np.arange(64) + 0.5) / 32 - 1
    X, Y = np.meshgrid(c, c)
    h = 2.0 / 64  # one pixel of margin for partially covered boundary pixels
    outside = (X / (0.69 + h)) ** 2 + (Y / (0.92 + h)) ** 2 > 1.0
    assert np.all(x[outside] == 0.0)


def test_shepp_logan_minimal_size():
    x = shepp_logan(16)
    assert np.all(np.isfinite(x)) and x.min() >= 0 and x.max() <= 1
    with pytest.raises(ValueError):
        shepp_logan(8)


def test_shepp_logan_mirror_symmetry_off_the_asymmetric_ellipses():
    N = 128
    x = shepp_logan(N)
    ell = shepp_logan_ellipses()
    odd = [ell[i] for i in (2, 3, 7, 9)]
    mirrored = [replace(e, center=(-e.center[0], e.center[1]), theta=-e.theta) for e in odd]
    mask = _mask_of(odd + mirrored, N)
    diff = np.abs(x - x[:, ::-1])
    assert diff[~mask].max() <= 1e-12
    assert diff[mask].max() > 0  # the excluded region really is asymmetric


def test_shepp_logan_is_deterministic():
    np.testing.assert_array_equal(shepp_logan(32), shepp_logan(32))


def test_modified_table_has_more_contrast():
    a, b = shepp_logan(64), shepp_logan(64, modified=True)
    assert np.ptp(b[24:40, 24:40]) > np.ptp(a[24:40, 24:40])


def test_ellipse_spec_validation():
    with pytest.raises(ValueError):
        EllipseSpec((0, 0), (0.0, 0.3), 0.0, 1.0)
    with pytest.raises(ValueError):
        DynamicPhantomSpec((), amplitude=1.0)


def test_dynamic_phantom_shape_and_complexity():
    x = dynamic_phantom(cine_spec(), 32, 30)
    assert x.shape == (32, 32, 30)
    assert np.iscomplexobj(x)
    assert np.ptp(np.angle(x[np.abs(x) > 0])) > 0.1


def test_zero_amplitude_frames_identical():
    x = dynamic_phantom(cine_spec(amplitude=0.0), 32, 12)
    for t in range(1, 12):
        np.testing.assert_array_equal(x[:, :, t], x[:, :, 0])


def test_frames_change_with_nonzero_amplitude():
    x = dynamic_phantom(cine_spec(), 32, 12)
    assert np.abs(x[:, :, 3] - x[:, :, 0]).max() > 0


def test_dynamic_cycle_is_closed():
    spec = cine_spec()
    np.testing.assert_allclose(dynamic_frame(spec, 48, 0, 30), dynamic_frame(spec, 48, 30, 30), atol=1e-12)


def test_pulsing_area_averages_to_base_area():
    spec = cine_spec()
    k = spec.pulsing[-1]
    alone = DynamicPhantomSpec((replace(spec.ellipses[k], intensity=1.0),), (0,), spec.amplitude)
    N, Nt = 128, 30
    areas = [dynamic_frame(alone, N, t, Nt).sum() for t in range(Nt)]
    base = DynamicPhantomSpec(alone.ellipses, (0,), 0.0)
    a0 = dynamic_frame(base, N, 0, Nt).sum()
    assert abs(np.mean(areas) / a0 - 1.0) <= 0.02
    # the area itself follows (1 + a sin)^2 of the base area
    a_max = dynamic_frame(alone, N, Nt / 4, Nt).sum()
    assert a_max / a0 == pytest.approx((1 + spec.amplitude) ** 2, rel=0.02)


def test_random_specs_are_seeded():
    a = random_cine_spec(np.random.default_rng(3))
    b = random_cine_spec(np.random.default_rng(3))
    assert a == b
    assert min(min(e.axes) for e in a.ellipses) * (1 - a.amplitude) > 0


def test_coil_sum_of_squares_is_one():
    for n_c in (1, 4, 12):
        c = synth_coils(32, n_c)
        sos = np.sum(np.abs(c.maps) ** 2, axis=0)
        np.testing.assert_allclose(sos, 1.0, atol=1e-12, rtol=0)


def test_single_coil_has_unit_magnitude():
    c = synth_coils(16, 1)
    np.testing.assert_allclose(np.abs(c.maps), 1.0, atol=1e-12)


def test_twelve_coils_double_coverage():
    c = synth_coils(64, 12)
    covered = np.sum(np.abs(c.maps) > 0.05, axis=0)
    assert covered.min() >= 2


def test_coil_errors():
    with pytest.raises(ValueError):
        synth_coils(16, 0)


def _halve(img):
    N = img.shape[0] // 2
    return img.reshape(N, 2, N, 2).mean(axis=(1, 3))


def test_resolution_consistency():
    assert nrmse(_halve(shepp_logan(128)), shepp_logan(64)) <= 0.05
    r2 = random_ellipse_phantom(128, np.random.default_rng(5))
    r1 = random_ellipse_phantom(64, np.random.default_rng(5))
    assert nrmse(_halve(r2), r1) <= 0.05
    spec = cine_spec()
    f2 = np.abs(dynamic_phantom(spec, 64, 6))
    f1 = np.abs(dynamic_phantom(spec, 32, 6))
    for t in range(6):
        assert nrmse(_halve(f2[:, :, t]), f1[:, :, t]) <= 0.05


def test_random_ellipse_phantom_range():
    x = random_ellipse_phantom(64, np.random.default_rng(0))
    assert x.min() >= 0 and x.max() <= 1 and x[32, 32] > 0
    assert not math.isclose(float(x.sum()), float(random_ellipse_phantom(64, np.random.default_rng(1)).sum()))
