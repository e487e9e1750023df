import numpy as np
import pytest

from symlab.diffeo import DiffeoError, identity_diffeo, linear_core_diffeo, radial_diffeo, swirl_diffeo
from symlab.directions import DirectionSet, as_direction_function
from symlab.grid import make_grid
from symlab.metric import MetricError, MetricField

L = 2 * np.pi


def _fd_jacobian(phi, t, h=1e-6):
    d = t.shape[1]
    cols = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        cols.append((phi.forward(t + e) - phi.forward(t - e)) / (2 * h))
    return np.stack(cols, axis=-1)


@pytest.fixture(params=["radial1", "radial2", "swirl", "linear-core", "composed"])
def diffeo(request):
    if request.param == "radial1":
        return radial_diffeo(make_grid(1, 64, L), 0.3, L / 4)
    if request.param == "radial2":
        return radial_diffeo(make_grid(2, 32, L), 0.25, L / 4)
    if request.param == "swirl":
        return swirl_diffeo(make_grid(2, 32, L), 0.8, 0.4 * L)
    if request.param == "linear-core":
        return linear_core_diffeo(make_grid(1, 64, L))
    spec = make_grid(2, 32, L)
    return swirl_diffeo(spec, 0.8, 0.4 * L).compose(radial_diffeo(spec, 0.2, 0.4 * L))


def test_inverse_and_jacobian(diffeo):
    assert diffeo.inverse_residual() < 1e-9
    t = np.random.default_rng(0).uniform(0.25 * L, 0.75 * L, size=(40, diffeo.spec.d))
    assert np.allclose(diffeo.jacobian(t), _fd_jacobian(diffeo, t), atol=1e-6)
    assert np.all(diffeo.det_jacobian(t) > 0)


def test_identity_outside_support(diffeo):
    spec = diffeo.spec
    t = spec.nodes()
    far = np.linalg.norm(t - diffeo.center, axis=1) >= diffeo.support_radius * (1 + 1e-9)
    assert far.any()
    assert np.allclose(diffeo.forward(t[far]), t[far], atol=1e-12)


def test_inverted_and_composed_jacobians():
    spec = make_grid(2, 32, L)
    a = swirl_diffeo(spec, 0.6, 0.35 * L)
    b = radial_diffeo(spec, 0.3, 0.3 * L)
    t = np.random.default_rng(1).uniform(0.3 * L, 0.7 * L, size=(30, 2))
    ab = a.compose(b)
    assert np.allclose(ab.forward(t), a.forward(b.forward(t)))
    assert np.allclose(ab.jacobian(t), a.jacobian(b.forward(t)) @ b.jacobian(t))
    inv = a.inverted()
    assert np.allclose(inv.forward(a.forward(t)), t, atol=1e-10)
    assert np.allclose(inv.jacobian(a.forward(t)) @ a.jacobian(t), np.eye(2), atol=1e-10)


def test_linear_core_is_doubling_near_centre():
    phi = linear_core_diffeo(make_grid(1, 64, L), factor=2.0, radius=0.4 * L)
    t = np.array([[L / 2 + 0.05], [L / 2 - 0.1]])
    assert np.allclose(phi.forward(t) - L / 2, 2 * (t - L / 2), atol=1e-10)


def test_identity_diffeo():
    phi = identity_diffeo(make_grid(2, 8, L))
    t = phi.spec.nodes()
    assert phi.is_identity
    assert np.array_equal(phi.forward(t), t)


def test_diffeo_errors():
    with pytest.raises(DiffeoError):
        radial_diffeo(make_grid(1, 64, L), 0.3, 0.6 * L)  # ball leaves the domain
    with pytest.raises(DiffeoError):
        radial_diffeo(make_grid(1, 64, L), -1.5, L / 4)  # not monotone
    with pytest.raises(DiffeoError):
        swirl_diffeo(make_grid(1, 64, L), 0.5)
    with pytest.raises(DiffeoError):
        linear_core_diffeo(make_grid(2, 16, L))


def test_direction_sets():
    one = DirectionSet(1)
    assert one.count == 2 and one.weights.sum() == pytest.approx(2.0)
    two = DirectionSet(2, 16)
    assert np.allclose(np.linalg.norm(two.vectors, axis=1), 1.0)
    assert two.weights.sum() == pytest.approx(2 * np.pi)
    assert two.index_of([0.0, 3.0]) == 4
    with pytest.raises(ValueError):
        two.index_of([1.0, 0.1])
    with pytest.raises(ValueError):
        DirectionSet(2, 10)


def test_direction_interpolation_trig_exact():
    dirs = DirectionSet(2, 16)
    g = lambda s: 1 + 0.5 * s[:, 0] + 0.25 * (s[:, 0] ** 2 - s[:, 1] ** 2)  # noqa: E731
    samples = g(dirs.vectors)
    th = np.random.default_rng(2).uniform(0, 2 * np.pi, 20)
    s = np.stack([np.cos(th), np.sin(th)], axis=-1)
    fn = as_direction_function(samples, dirs)
    assert np.allclose(fn(s), g(s), atol=1e-12)


def test_metric_constructors():
    spec = make_grid(2, 8, L)
    flat = MetricField.flat(spec)
    assert flat.is_constant and np.allclose(flat.sqrt_det(), 1.0)
    u = np.full(spec.shape, 0.2)
    conf = MetricField.conformal(spec, u)
    assert np.allclose(conf.sqrt_det(), np.exp(0.4))
    assert conf.inverse_eigen_range() == pytest.approx((np.exp(-0.4), np.exp(-0.4)))
    G = np.array([[2.0, 0.5], [0.5, 1.0]])
    const = MetricField.constant(spec, G)
    assert np.allclose(const.inverse()[0], np.linalg.inv(G))


def test_metric_validation():
    spec = make_grid(2, 8, L)
    with pytest.raises(MetricError):
        MetricField(spec, np.array([[1.0, 0.3], [0.0, 1.0]]))
    with pytest.raises(MetricError):
        MetricField(spec, np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(MetricError):
        MetricField(spec, 3 * np.eye(2), kappa=2.0)
    with pytest.raises(MetricError):
        MetricField(spec, np.ones((3, 2, 2)))
