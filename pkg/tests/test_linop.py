import numpy as np
import pytest

from symlab.grid import GridError, make_grid
from symlab.linop import DENSE_CAP, DenseOp, FreqDiagonal, InterpOp, OperatorError, PosDiagonal, identity


@pytest.fixture
def spec():
    return make_grid(1, 32, 2 * np.pi)


def _rand(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def test_pos_diagonal_applies_pointwise(spec):
    rng = np.random.default_rng(0)
    f, v = _rand(rng, 32), _rand(rng, 32)
    op = PosDiagonal(spec, f)
    assert np.allclose(op.apply(v), f * v)
    assert np.allclose(op.dense(), np.diag(f))
    assert op.opnorm() == pytest.approx(np.max(np.abs(f)))


def test_freq_diagonal_matches_fourier_conjugation(spec):
    rng = np.random.default_rng(1)
    m = rng.normal(size=32)
    F = np.fft.fft(np.eye(32), norm="ortho")
    assert np.allclose(FreqDiagonal(spec, m).dense(), F.conj().T @ np.diag(m) @ F)


def test_adjoints_are_conjugate_transposes(spec):
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 2 * np.pi, size=(32, 1))
    ops = [
        PosDiagonal(spec, _rand(rng, 32)),
        FreqDiagonal(spec, _rand(rng, 32)),
        DenseOp(spec, _rand(rng, 32, 32)),
        InterpOp(spec, rng.uniform(0.5, 1.5, 32), pts),
    ]
    for A in ops:
        assert np.allclose(A.adjoint().dense(), A.dense().conj().T, atol=1e-12)
    P, Q = ops[0], ops[3]
    assert np.allclose((P @ Q).adjoint().dense(), (P.dense() @ Q.dense()).conj().T, atol=1e-12)


def test_algebra_matches_dense(spec):
    rng = np.random.default_rng(3)
    A = DenseOp(spec, _rand(rng, 32, 32))
    B = FreqDiagonal(spec, rng.normal(size=32))
    assert np.allclose((A @ B).dense(), A.dense() @ B.dense())
    assert np.allclose((A + B).dense(), A.dense() + B.dense())
    assert np.allclose((A - B).dense(), A.dense() - B.dense())
    assert np.allclose((2.5 * A).dense(), 2.5 * A.dense())
    assert np.allclose((-B).dense(), -B.dense())
    assert np.allclose(identity(spec).dense(), np.eye(32))


def test_apply_shapes(spec):
    A = FreqDiagonal(spec, np.arange(32.0))
    assert A.apply(np.ones(32)).shape == (32,)
    assert A.apply(np.ones((32, 3))).shape == (32, 3)
    with pytest.raises(GridError):
        A.apply(np.ones(31))


def test_mismatched_grids_rejected(spec):
    other = make_grid(1, 16, 2 * np.pi)
    with pytest.raises(OperatorError):
        identity(spec) @ identity(other)


def test_dense_cap():
    big = make_grid(2, 128, 1.0)
    assert big.total > DENSE_CAP
    with pytest.raises(OperatorError):
        identity(big).dense()


def test_interp_op_exact_on_band_limited(spec):
    x = spec.nodes()[:, 0]
    pts = (x + 0.3)[:, None]
    op = InterpOp(spec, np.ones(32), pts)
    assert np.allclose(op.apply(np.cos(2 * x)), np.cos(2 * (x + 0.3)), atol=1e-12)
