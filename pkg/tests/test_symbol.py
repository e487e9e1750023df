import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symlab.diffeo import identity_diffeo, linear_core_diffeo, radial_diffeo, swirl_diffeo
from symlab.directions import DirectionSet
from symlab.grid import GridFunction, bump, make_grid
from symlab.linop import DenseOp
from symlab.operators import diffeo_unitary, dir_multiplier, mult_op
from symlab.symbol import (
    FunctionSymbol,
    ProbeParams,
    Symbol,
    SymbolError,
    estimate_symbol_field,
    interior_samples,
    max_stretch,
    probe_symbol,
    symbol_algebra,
    symbol_of_dir,
    symbol_of_mult,
    theta_map,
    theta_pullback,
    xi_equivalence_check,
)

L = 2 * np.pi


def _smooth_symbol_2d(spec):
    return FunctionSymbol(spec, lambda t, s: np.cos(t[:, 0]) * np.sin(t[:, 1]) * (1 + 0.5 * s[:, 0]) + 0.3 * s[:, 1])


def test_sampled_symbol_evaluates_nodes_exactly():
    spec = make_grid(2, 16, L)
    dirs = DirectionSet(2, 8)
    a = _smooth_symbol_2d(spec)
    sampled = a.sample()
    t = spec.nodes()[[3, 40, 200]]
    s = dirs.vectors[[0, 3, 5]]
    assert np.allclose(sampled.evaluate(t, s), a.evaluate(t, s), atol=1e-12)
    assert sampled.evaluate(t, 7 * s).shape == (3,)  # directions are normalised


def test_symbol_algebra():
    spec = make_grid(1, 32, L)
    f = bump(spec, radius=L / 4)
    a = symbol_of_mult(f)
    b = symbol_of_dir(lambda s: 1 + 0.5 * s[:, 0], spec)
    prod = symbol_algebra(a, b, "mul")
    assert np.allclose(prod.values[:, 1], 1.5 * f.values)
    assert np.allclose(symbol_algebra(a, b, "add").values[:, 0], f.values + 0.5)
    assert np.allclose(symbol_algebra(a, op="scale", scale=2j).values, 2j * a.values)
    assert np.allclose(symbol_algebra(a * 1j, op="conjugate").values, -1j * a.values)
    assert (a - a).sup() == 0
    assert b.position_variance() == 0 and a.direction_variance() == 0
    with pytest.raises(SymbolError):
        a + symbol_of_mult(bump(make_grid(1, 16, L), radius=L / 4))
    with pytest.raises(SymbolError):
        symbol_algebra(a, b, "divide")
    with pytest.raises(SymbolError):
        Symbol(spec, DirectionSet(1), np.zeros(5))


def test_theta_pullback_identity_is_exact():
    spec = make_grid(1, 32, L)
    a = symbol_of_mult(bump(spec, radius=L / 4))
    out = theta_pullback(a, identity_diffeo(spec))
    assert np.array_equal(out.values, a.values)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(-0.3, 0.3), st.integers(0, 10**6))
def test_theta_composition_law(angle, amp, seed):
    spec = make_grid(2, 16, L)
    p1 = swirl_diffeo(spec, angle, 0.4 * L)
    p2 = radial_diffeo(spec, amp, 0.3 * L, center=[0.55 * L, 0.5 * L])
    a = _smooth_symbol_2d(spec)
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.2 * L, 0.8 * L, size=(30, 2))
    s = rng.normal(size=(30, 2))
    nested = theta_pullback(theta_pullback(a, p2), p1)
    direct = theta_pullback(a, p1.compose(p2))
    assert np.max(np.abs(nested.evaluate(t, s) - direct.evaluate(t, s))) < 1e-10


def test_theta_map_and_xi_equivalence():
    spec = make_grid(2, 16, L)
    phi = swirl_diffeo(spec, 0.7, 0.4 * L)
    rng = np.random.default_rng(3)
    t = rng.uniform(0.3 * L, 0.7 * L, size=(20, 2))
    s = rng.normal(size=(20, 2))
    pre, u = theta_map(phi, t, s)
    assert np.allclose(phi.forward(pre), t)
    assert np.allclose(np.linalg.norm(u, axis=1), 1.0)
    assert xi_equivalence_check(_smooth_symbol_2d(spec), phi, t, 4 * s) < 1e-12
    with pytest.raises(SymbolError):
        xi_equivalence_check(_smooth_symbol_2d(spec), phi, t, np.zeros((20, 2)))


def test_max_stretch():
    assert max_stretch(identity_diffeo(make_grid(1, 64, L))) == 1.0
    assert max_stretch(linear_core_diffeo(make_grid(1, 256, L))) >= 2.0 - 1e-9


def test_probe_recovers_multiplication_symbol():
    spec = make_grid(1, 1024, L)
    f = bump(spec, radius=L / 4)
    t0 = spec.nodes()[520]
    res = probe_symbol(mult_op(f), t0, np.array([1.0]), ProbeParams.default(spec))
    assert abs(res.estimate - f.values[520]) < 2e-3
    assert len(res.convergence) == 3 and res.residual < 1e-2


def test_probe_recovers_direction_symbol_2d():
    spec = make_grid(2, 128, L)
    dirs = DirectionSet(2)
    g = lambda s: 1 + 0.5 * s[:, 0]  # noqa: E731
    T = dir_multiplier(g, spec, dirs)
    samples = interior_samples(spec, 6, np.random.default_rng(0), dirs=dirs)
    res = estimate_symbol_field(T, ProbeParams.default(spec, samples), dirs)
    assert np.max(np.abs(res.values - g(res.directions))) < 0.02


def test_probe_of_smooth_finite_rank_operator_is_small():
    spec = make_grid(1, 512, L)
    x = spec.nodes()[:, 0]
    u = np.exp(np.cos(x))
    T = DenseOp(spec, np.outer(u, u) * spec.cell_volume)
    samples = interior_samples(spec, 5, np.random.default_rng(1))
    res = estimate_symbol_field(T, ProbeParams.default(spec, samples))
    assert np.max(np.abs(res.values)) < 0.02 * T.opnorm()


def test_probe_equivariance_under_linear_core_map():
    spec = make_grid(1, 1024, L)
    f = bump(spec, radius=L / 4)
    g = lambda s: 1 + 0.5 * s[:, 0]  # noqa: E731
    phi = linear_core_diffeo(spec)
    T = mult_op(f) @ dir_multiplier(g, spec)
    conj = diffeo_unitary(phi.inverted()) @ T @ diffeo_unitary(phi)
    a = symbol_of_mult(f) * symbol_of_dir(g, spec)
    samples = interior_samples(spec, 6, np.random.default_rng(2), radius=L / 6)
    res = estimate_symbol_field(conj, ProbeParams.default(spec, samples, stretch=max_stretch(phi)))
    pulled = theta_pullback(a, phi).evaluate(res.points, res.directions)
    assert np.max(np.abs(res.values - pulled)) < 0.05 * a.sup()


def test_probe_validation():
    spec = make_grid(1, 256, L)
    p = ProbeParams.default(spec)
    T = mult_op(GridFunction(spec, np.ones(256)))
    with pytest.raises(SymbolError):
        probe_symbol(T, spec.nodes()[128], np.array([0.5]), p)  # not unit
    with pytest.raises(SymbolError):
        probe_symbol(T, spec.nodes()[1], np.array([1.0]), p)  # packet leaves the domain
    too_fast = ProbeParams(p.packet_width, (10.0, 500.0))
    with pytest.raises(SymbolError):
        probe_symbol(T, spec.nodes()[128], np.array([1.0]), too_fast)
    with pytest.raises(SymbolError):
        estimate_symbol_field(T, p)


def test_symbol_csv(tmp_path):
    spec = make_grid(1, 8, L)
    a = symbol_of_mult(GridFunction(spec, np.arange(8.0)))
    path = a.to_csv(tmp_path / "sym.csv")
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t0", "direction", "re", "im"]
    assert len(rows) == 1 + 16
    assert float(rows[3][2]) == 1.0
