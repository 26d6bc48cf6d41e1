import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracbubbles.bubbles import (
    amplitude,
    kelvin_transform,
    kernel_field,
    ring_bubble,
    scaled_bubble,
    standard_bubble,
    symmetry_group,
    symmetry_orbit,
)
from fracbubbles.core import ProblemParams, make_config

points = st.lists(
    st.floats(min_value=-3.0, max_value=3.0), min_size=3, max_size=3
).map(np.array)


def test_amplitude_reference(params):
    assert amplitude(params) == pytest.approx(2.0, abs=1e-14)


def test_peak_value(params):
    U = standard_bubble(params)
    assert U(np.zeros(3)) == pytest.approx(amplitude(params))


def test_far_field_rate(params):
    U = standard_bubble(params)
    for r in (1e2, 1e4):
        y = np.array([r, 0.0, 0.0])
        assert U(y) * r ** params.sobolev_decay == pytest.approx(
            amplitude(params), rel=1e-3
        )


def test_rescaled_peak(params, cfg8):
    beta = params.sobolev_decay / 2
    U1 = ring_bubble(cfg8, 1)
    assert U1(cfg8.centers[0]) == pytest.approx(
        cfg8.mu**-beta * amplitude(params), rel=1e-14
    )
    U = standard_bubble(params)
    e1 = np.zeros(3)
    e1[0] = 1.0
    shifted = cfg8.centers[0] + cfg8.mu * e1
    assert U1(shifted) == pytest.approx(cfg8.mu**-beta * U(e1), rel=1e-13)


def test_bubble_index_bounds(cfg8):
    with pytest.raises(IndexError):
        ring_bubble(cfg8, 0)
    with pytest.raises(IndexError):
        ring_bubble(cfg8, 9)


def test_kernel_at_origin(params):
    assert kernel_field(params, 1)(np.zeros(3)) == 0.0
    expected = params.sobolev_decay / 2 * amplitude(params)
    assert kernel_field(params, 4)(np.zeros(3)) == pytest.approx(expected)
    with pytest.raises(IndexError):
        kernel_field(params, 5)


@settings(max_examples=25, deadline=None)
@given(y=points)
def test_translation_kernel_matches_fd(y):
    params = ProblemParams()
    U = standard_bubble(params)
    h = 1e-5
    for l in (1, 2, 3):
        e = np.zeros(3)
        e[l - 1] = h
        fd = (U(y + e) - U(y - e)) / (2 * h)
        assert kernel_field(params, l)(y) == pytest.approx(fd, abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(y=points)
def test_dilation_kernel_matches_fd(y):
    params = ProblemParams()
    U = standard_bubble(params)
    beta = params.sobolev_decay / 2
    h = 1e-6

    def dil(lam):
        return lam**beta * U(lam * y)

    fd = (dil(1 + h) - dil(1 - h)) / (2 * h)
    assert kernel_field(params, 4)(y) == pytest.approx(fd, abs=1e-8)


def test_kelvin_invariance_of_standard_bubble(params, rng):
    U = standard_bubble(params)
    hatU = kelvin_transform(U, params)
    pts = rng.standard_normal((100, 3)) * 2
    pts = pts[np.linalg.norm(pts, axis=1) > 1e-2]
    assert np.abs(hatU(pts) - U(pts)).max() <= 1e-14


def test_kelvin_on_shell_bubble(params, cfg8, rng):
    w = scaled_bubble(params, cfg8.mu, cfg8.centers[0])
    hatw = kelvin_transform(w, params)
    pts = rng.standard_normal((100, 3)) * 1.5
    pts = pts[np.linalg.norm(pts, axis=1) > 1e-2]
    defect = np.abs(hatw(pts) - w(pts)) / np.abs(w(pts))
    assert defect.max() <= 1e-12


def test_kelvin_off_shell_defect(params):
    mu = 0.1
    xi = np.array([np.sqrt(0.9 - mu**2), 0.0, 0.0])  # |xi|^2 + mu^2 = 0.9
    w = scaled_bubble(params, mu, xi)
    y = np.array([2.0, 0.0, 0.0])
    assert abs(kelvin_transform(w, params)(y) - w(y)) >= 1e-6


@settings(max_examples=25, deadline=None)
@given(y=points)
def test_kelvin_involution(y):
    params = ProblemParams()
    if np.linalg.norm(y) < 1e-2:
        y = y + np.array([1.0, 0.0, 0.0])
    f = standard_bubble(params) + kernel_field(params, 4)
    twice = kelvin_transform(kelvin_transform(f, params), params)
    assert twice(y) == pytest.approx(f(y), abs=1e-12)


def test_kelvin_rejects_origin(params):
    hatU = kelvin_transform(standard_bubble(params), params)
    with pytest.raises(ValueError):
        hatU(np.zeros(3))


def test_orbit_on_axis(params):
    cfg = make_config(params, 4, 1.0)
    orbit = symmetry_orbit(cfg, np.array([1.0, 0.0, 0.0]))
    assert len(orbit) == 4
    for target in ([0, 1, 0], [-1, 0, 0], [0, -1, 0]):
        assert any(np.allclose(p, target, atol=1e-12) for p in orbit)


def test_orbit_size_divides_group_order(params, rng):
    for k in (3, 4, 8):
        cfg = make_config(params, k, 1.0)
        y = rng.standard_normal(3)
        orbit = symmetry_orbit(cfg, y)
        assert (2 ** (params.N - 1) * k) % len(orbit) == 0


def test_group_order(params):
    cfg = make_config(params, 8, 1.0)
    assert len(symmetry_group(cfg)) == 2 ** (params.N - 1) * cfg.k
