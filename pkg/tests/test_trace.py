import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symlab.directions import DirectionSet
from symlab.grid import GridFunction, bump, make_grid
from symlab.metric import MetricField
from symlab.operators import mult_op
from symlab.symbol import FunctionSymbol, symbol_of_mult
from symlab.trace import (
    TraceError,
    calibrate_cd,
    connes_check,
    dixmier_estimate,
    dixmier_partials,
    estimate_from_values,
    flat_dixmier_trace,
    resolution_floor,
    weighted_residue,
)


def harmonic(n):
    return 1.0 / (np.arange(n, dtype=float) + 1.0)


def test_partials_match_definition():
    mu = harmonic(1000)
    partials = dict(dixmier_partials(mu))
    for n in (0, 10, 999):
        assert partials[n] == pytest.approx(np.sum(mu[: n + 1]) / math.log(2 + n))


def test_harmonic_normalisation():
    est = dixmier_estimate(harmonic(10**6 + 1))
    assert abs(est.partials[-1][1] - 1) < 0.05
    assert abs(est.extrapolated - 1) < 1e-4
    assert est.half_width < 1e-2
    assert est.window == (10**5, 10**6)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 10.0))
def test_estimate_is_linear_in_scale(c):
    assert dixmier_estimate(c * harmonic(10**5)).extrapolated == pytest.approx(c, rel=1e-3)


def test_summable_sequence_has_zero_trace():
    k = np.arange(10**5, dtype=float)
    assert abs(dixmier_estimate(1.0 / (k + 1) ** 2).extrapolated) < 0.02


def test_input_validation():
    with pytest.raises(TraceError):
        dixmier_partials(np.array([1.0, 2.0]))
    with pytest.raises(TraceError):
        dixmier_partials(np.array([1.0, -1.0]))
    with pytest.raises(TraceError):
        dixmier_partials(np.array([]))
    with pytest.raises(TraceError):
        estimate_from_values(harmonic(10))


def test_remainder_term_removes_power_bias():
    n = np.arange(10**5, dtype=float)
    mu = 1.0 / (n + 1) + 0.5 * (n + 1) ** -1.5
    assert abs(estimate_from_values(mu, remainder=0.5).extrapolated - 1) < 1e-3


def test_calibration_constants_closed_form():
    # flat circle: Tr_w (1 - Delta)^{-1/2} = 2, residue of 1 = 2 pi sqrt(pi)
    assert flat_dixmier_trace(1) == pytest.approx(2.0, rel=1e-5)
    assert calibrate_cd(1) == pytest.approx(1 / (math.pi * math.sqrt(math.pi)), rel=1e-5)
    # flat 2-torus: Tr_w (1 - Delta)^{-1} = pi, residue of 1 = (2 pi)^2 pi
    assert flat_dixmier_trace(2) == pytest.approx(math.pi, rel=1e-5)
    assert calibrate_cd(2) == pytest.approx(1 / (4 * math.pi**2), rel=1e-5)
    assert calibrate_cd(1, L=3.0) == pytest.approx(calibrate_cd(1), rel=1e-5)


def test_weighted_residue_closed_forms():
    spec = make_grid(1, 32, 2 * np.pi)
    one = FunctionSymbol(spec, lambda t, s: np.ones(len(t)))
    assert weighted_residue(one, MetricField.flat(spec)) == pytest.approx(2 * np.pi * np.sqrt(np.pi))
    # constant metric g = c^2: q = s^2 / c^2, so the fibre integral scales by c
    g = MetricField.constant(spec, np.array([[4.0]]))
    assert weighted_residue(one, g) == pytest.approx(2 * 2 * np.pi * np.sqrt(np.pi))
    spec2 = make_grid(2, 16, 2 * np.pi)
    one2 = FunctionSymbol(spec2, lambda t, s: np.ones(len(t)))
    assert weighted_residue(one2, MetricField.flat(spec2)) == pytest.approx((2 * np.pi) ** 2 * np.pi)


def test_resolution_floor_formula():
    spec = make_grid(2, 64, 2 * np.pi)
    assert resolution_floor(2.0, MetricField.flat(spec), 0.5) == pytest.approx(2.0 / (1 + (0.5 * np.pi * 64 / (2 * np.pi)) ** 2))


def test_connes_identity_and_bump_1d():
    spec = make_grid(1, 1024, 2 * np.pi)
    one = GridFunction(spec, np.ones(spec.shape))
    rep = connes_check(mult_op(one), symbol_of_mult(one), MetricField.flat(spec))
    assert rep.rel_err < 1e-3
    assert rep.c_d == pytest.approx(calibrate_cd(1))
    f = bump(spec, radius=np.pi / 4)
    rep = connes_check(mult_op(f), symbol_of_mult(f), MetricField.flat(spec))
    assert rep.rel_err < 0.02
    data = json.loads(rep.to_json())
    assert set(data) == {"lhs", "rhs", "c_d", "rel_err", "floor"}


def test_connes_grid_mismatch():
    spec = make_grid(1, 64, 2 * np.pi)
    other = make_grid(1, 32, 2 * np.pi)
    one = GridFunction(spec, np.ones(spec.shape))
    with pytest.raises(TraceError):
        connes_check(mult_op(one), symbol_of_mult(GridFunction(other, np.ones(32)), DirectionSet(1)), MetricField.flat(spec))
