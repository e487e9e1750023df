import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from symlab.grid import (
    GridError,
    GridFunction,
    SpectralField,
    bump,
    bump_profile,
    inner,
    make_grid,
    norm,
    spectral_derivative,
    transform,
    trig_interpolate,
)


@pytest.mark.parametrize("d,n,L", [(1, 8, 1.0), (1, 64, 2 * np.pi), (2, 16, 3.0)])
def test_grid_geometry(d, n, L):
    spec = make_grid(d, n, L)
    assert spec.total == n**d
    assert spec.nodes().shape == (n**d, d)
    assert spec.spacing == pytest.approx(L / n)
    assert spec.cell_volume * spec.total == pytest.approx(L**d)
    k = spec.freq_axis() * L / (2 * np.pi)
    assert np.allclose(np.sort(k), np.arange(-n // 2, n // 2))


@pytest.mark.parametrize("n", [0, 4, 12, 100])
def test_grid_rejects_bad_resolution(n):
    with pytest.raises(GridError):
        make_grid(1, n, 1.0)


def test_grid_rejects_bad_dimension_and_length():
    with pytest.raises(GridError):
        make_grid(3, 8, 1.0)
    with pytest.raises(GridError):
        make_grid(1, 8, -1.0)


def test_node_index_roundtrip():
    spec = make_grid(2, 16, 2.0)
    nodes = spec.nodes()
    for j in (0, 17, 255):
        assert spec.node_index(nodes[j]) == j
    with pytest.raises(GridError):
        spec.node_index([0.01, 0.0])


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (32,), elements=st.floats(-1e3, 1e3)), arrays(np.float64, (32,), elements=st.floats(-1e3, 1e3)))
def test_transform_is_unitary(re, im):
    spec = make_grid(1, 32, 5.0)
    f = GridFunction(spec, re + 1j * im)
    F = transform(f)
    assert isinstance(F, SpectralField)
    assert np.linalg.norm(F.coefficients) == pytest.approx(np.linalg.norm(f.values), rel=1e-12, abs=1e-9)
    back = transform(F, "inverse")
    assert np.allclose(back.values, f.values, atol=1e-9)


def test_transform_direction_errors():
    spec = make_grid(1, 8, 1.0)
    with pytest.raises(GridError):
        transform(GridFunction(spec, np.zeros(8)), "inverse")
    with pytest.raises(GridError):
        transform(GridFunction(spec, np.zeros(8)), "sideways")


def test_bump_shape_and_support():
    spec = make_grid(1, 256, 2 * np.pi)
    b = bump(spec, radius=1.0)
    x = spec.nodes()[:, 0]
    assert b.values.max() == pytest.approx(1.0)  # exp(1 - 1/(1 - 0)) at the centre
    assert np.all(b.values[np.abs(x - np.pi) >= 1.0] == 0)
    assert bump_profile(np.array([0.5]))[0] == pytest.approx(np.exp(1 - 1 / 0.75))
    with pytest.raises(GridError):
        bump(spec, center=[0.5], radius=1.0)


def test_inner_and_norm_quadrature():
    spec = make_grid(2, 16, 3.0)
    one = GridFunction(spec, np.ones(spec.shape))
    assert inner(one, one) == pytest.approx(9.0)
    assert norm(one) == pytest.approx(3.0)
    with pytest.raises(GridError):
        inner(one, GridFunction(make_grid(2, 8, 3.0), np.ones((8, 8))))


def test_trig_interpolation_exact_on_band_limited():
    spec = make_grid(1, 32, 2 * np.pi)
    f = lambda x: np.cos(3 * x) + 0.5 * np.sin(7 * x) + 0.2  # noqa: E731
    vals = f(spec.nodes()[:, 0])
    pts = np.random.default_rng(0).uniform(0, 2 * np.pi, size=(50, 1))
    assert np.allclose(trig_interpolate(spec, vals, pts), f(pts[:, 0]), atol=1e-12)


def test_trig_interpolation_2d_batched():
    spec = make_grid(2, 16, 2 * np.pi)
    x = spec.nodes()
    vals = np.stack([np.cos(x[:, 0]) * np.sin(2 * x[:, 1]), np.cos(x[:, 1] - x[:, 0])], axis=-1).reshape(16, 16, 2)
    pts = np.random.default_rng(1).uniform(0, 2 * np.pi, size=(20, 2))
    out = trig_interpolate(spec, vals, pts)
    exact = np.stack([np.cos(pts[:, 0]) * np.sin(2 * pts[:, 1]), np.cos(pts[:, 1] - pts[:, 0])], axis=-1)
    assert out.shape == (20, 2)
    assert np.allclose(out, exact, atol=1e-12)


def test_spectral_derivative_of_sine():
    spec = make_grid(1, 64, 2 * np.pi)
    x = spec.nodes()[:, 0]
    # D = -i d/dt
    assert np.allclose(spectral_derivative(spec, np.sin(5 * x), 0), -1j * 5 * np.cos(5 * x), atol=1e-12)
