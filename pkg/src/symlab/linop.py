"""Finite-dimensional operators on grid functions.

Operators are stored structurally (position diagonals, frequency diagonals,
dense matrices, interpolation-based pullbacks, products and sums) and only
materialised densely on request. Every ``apply`` accepts a single field or a
batch with a trailing axis.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .grid import GridError, GridFunction, GridSpec, evaluate_modes, interpolation_basis, interpolation_kernel

DENSE_CAP = 8192


class OperatorError(ValueError):
    """Incompatible operators or infeasible materialisation."""


def _check_cap(spec: GridSpec):
    if spec.total > DENSE_CAP:
        raise OperatorError(f"dense size {spec.total} exceeds the cap {DENSE_CAP}")


class LinOp:
    """Base class; subclasses implement ``_apply`` on arrays of shape ``spec.shape + (B,)``."""

    def __init__(self, spec: GridSpec):
        self.spec = spec

    # -- application -----------------------------------------------------
    def apply(self, x) -> np.ndarray:
        spec = self.spec
        flat = batched = False
        a = spec.as_values(x) if isinstance(x, GridFunction) else np.asarray(x)
        if a.shape == spec.shape:
            v = a[..., None]
        elif a.shape == (spec.total,):
            v, flat = a.reshape(spec.shape + (1,)), True
        elif a.ndim == spec.d + 1 and a.shape[: spec.d] == spec.shape:
            v, batched = a, True
        elif a.ndim == 2 and a.shape[0] == spec.total:
            v, flat, batched = a.reshape(spec.shape + (a.shape[1],)), True, True
        else:
            raise GridError(f"cannot apply operator on {spec} to array of shape {a.shape}")
        out = self._apply(v)
        if flat:
            out = out.reshape(spec.total, -1)
        return out if batched else out[..., 0]

    def __call__(self, x) -> np.ndarray:
        return self.apply(x)

    def _apply(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _apply_matrix(self, M: np.ndarray) -> np.ndarray:
        """Apply to each column of a ``(total, C)`` matrix."""
        out = np.empty(M.shape, dtype=np.result_type(M.dtype, complex))
        step = max(1, 2**22 // self.spec.total)
        for c in range(0, M.shape[1], step):
            blk = M[:, c : c + step].reshape(self.spec.shape + (-1,))
            out[:, c : c + step] = self._apply(blk).reshape(self.spec.total, -1)
        return out

    # -- structure -------------------------------------------------------
    def adjoint(self) -> "LinOp":
        raise NotImplementedError

    @property
    def H(self) -> "LinOp":
        return self.adjoint()

    def dense(self) -> np.ndarray:
        _check_cap(self.spec)
        return self._dense()

    def _dense(self) -> np.ndarray:
        eye = np.eye(self.spec.total, dtype=complex)
        return self._apply_matrix(eye)

    def opnorm(self) -> float:
        """Spectral norm (largest singular value)."""
        d = self.dense()
        return float(scipy.linalg.svdvals(d, check_finite=False)[0])

    def _same(self, other: "LinOp"):
        if not isinstance(other, LinOp):
            raise OperatorError("expected a LinOp")
        if other.spec != self.spec:
            raise OperatorError("operators live on different grids")

    # -- algebra ---------------------------------------------------------
    def __matmul__(self, other):
        if isinstance(other, LinOp):
            self._same(other)
            return Composition(self.spec, [self, other])
        return self.apply(other)

    def __add__(self, other):
        self._same(other)
        return SumOp(self.spec, [self, other], [1.0, 1.0])

    def __sub__(self, other):
        self._same(other)
        return SumOp(self.spec, [self, other], [1.0, -1.0])

    def __neg__(self):
        return SumOp(self.spec, [self], [-1.0])

    def __mul__(self, c):
        if isinstance(c, LinOp):
            return self @ c
        return SumOp(self.spec, [self], [complex(c) if np.iscomplexobj(c) else float(c)])

    __rmul__ = __mul__


class PosDiagonal(LinOp):
    """Multiplication by a grid function."""

    def __init__(self, spec: GridSpec, values):
        super().__init__(spec)
        v = np.array(spec.as_values(values), copy=True)
        v.setflags(write=False)
        self.values = v

    def _apply(self, v):
        return self.values[..., None] * v

    def _apply_matrix(self, M):
        return self.values.reshape(-1, 1) * M

    def adjoint(self):
        return PosDiagonal(self.spec, np.conj(self.values))

    def _dense(self):
        return np.diag(self.values.ravel())

    def opnorm(self):
        return float(np.max(np.abs(self.values)))


class FreqDiagonal(LinOp):
    """Fourier multiplier; ``values`` indexed by frequency in FFT order."""

    def __init__(self, spec: GridSpec, values):
        super().__init__(spec)
        v = np.array(spec.as_values(values), copy=True)
        v.setflags(write=False)
        self.values = v

    def _apply(self, v):
        axes = tuple(range(self.spec.d))
        return np.fft.ifftn(self.values[..., None] * np.fft.fftn(v, axes=axes), axes=axes)

    def adjoint(self):
        return FreqDiagonal(self.spec, np.conj(self.values))

    def kernel(self) -> np.ndarray:
        """Convolution kernel ``K`` with ``(A v)_j = sum_k K[j-k] v_k``."""
        K = np.fft.ifftn(self.values)
        if np.allclose(K.imag, 0.0, atol=1e-14 * max(1.0, np.max(np.abs(K)))):
            K = K.real
        return K

    def _dense(self):
        return circulant_matrix(self.spec, self.kernel())

    def opnorm(self):
        return float(np.max(np.abs(self.values)))


def circulant_matrix(spec: GridSpec, K: np.ndarray) -> np.ndarray:
    """Dense (block-)circulant matrix of a periodic convolution kernel."""
    n = spec.n
    if spec.d == 1:
        return scipy.linalg.circulant(K)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    M = K[idx[:, None, :, None], idx[None, :, None, :]]
    return M.reshape(spec.total, spec.total)


class DenseOp(LinOp):
    def __init__(self, spec: GridSpec, matrix, info: dict | None = None):
        super().__init__(spec)
        m = np.asarray(matrix)
        if m.shape != (spec.total, spec.total):
            raise OperatorError(f"dense matrix must be {spec.total}x{spec.total}")
        self.matrix = m
        self.info = dict(info or {})

    def _apply(self, v):
        B = v.shape[-1]
        return (self.matrix @ v.reshape(self.spec.total, B)).reshape(v.shape)

    def _apply_matrix(self, M):
        return self.matrix @ M

    def adjoint(self):
        return DenseOp(self.spec, self.matrix.conj().T)

    def _dense(self):
        return self.matrix


class InterpOp(LinOp):
    """``(A v)(t_j) = w_j * (trig interpolant of v)(p_j)``: a weighted pullback."""

    def __init__(self, spec: GridSpec, weights, points):
        super().__init__(spec)
        self.weights = np.asarray(spec.as_values(weights)).ravel()
        self.points = np.asarray(points, dtype=float).reshape(spec.total, spec.d)
        if not (np.all(np.isfinite(self.points)) and np.all(np.isfinite(self.weights))):
            raise OperatorError("interpolation failure: non-finite nodes or weights")
        self._bases = None

    def _basis(self):
        if self._bases is None:
            self._bases = [interpolation_basis(self.spec.n, self.spec.L, self.points[:, a]) for a in range(self.spec.d)]
        return self._bases

    def _apply(self, v):
        spec = self.spec
        C = np.fft.fftn(v, axes=tuple(range(spec.d))) / spec.total
        out = evaluate_modes(self._basis(), C)
        return (self.weights[:, None] * out).reshape(v.shape)

    def _apply_adjoint(self, v):
        spec = self.spec
        y = np.conj(self.weights)[:, None] * v.reshape(spec.total, -1)
        E = [e.conj() for e in self._basis()]
        if spec.d == 1:
            C = E[0].T @ y
        else:
            n, B = spec.n, y.shape[1]
            C = np.empty((n, n, B), dtype=complex)
            for b in range(B):
                C[:, :, b] = E[0].T @ (y[:, b : b + 1] * E[1])
        return np.fft.ifftn(C, axes=tuple(range(spec.d))).reshape(v.shape)

    def adjoint(self):
        return _AdjointOf(self)

    def _dense(self):
        spec = self.spec
        K = [interpolation_kernel(spec.n, spec.L, self.points[:, a]) for a in range(spec.d)]
        if spec.d == 1:
            P = K[0]
        else:
            P = (K[0][:, :, None] * K[1][:, None, :]).reshape(spec.total, spec.total)
        P = self.weights[:, None] * P
        if np.isrealobj(self.weights) and np.allclose(P.imag, 0.0, atol=1e-13):
            P = P.real
        return P

    def _apply_matrix(self, M):
        return self.dense() @ M


class _AdjointOf(LinOp):
    def __init__(self, op: InterpOp):
        super().__init__(op.spec)
        self.op = op

    def _apply(self, v):
        return self.op._apply_adjoint(v)

    def adjoint(self):
        return self.op

    def _dense(self):
        return self.op.dense().conj().T

    def _apply_matrix(self, M):
        return self.dense() @ M


class Composition(LinOp):
    """Product ``factors[0] @ factors[1] @ ...`` (rightmost acts first)."""

    def __init__(self, spec: GridSpec, factors):
        super().__init__(spec)
        flat = []
        for f in factors:
            if f.spec != spec:
                raise OperatorError("factor lives on a different grid")
            flat.extend(f.factors if isinstance(f, Composition) else [f])
        merged = []
        for f in flat:
            if merged and type(f) is type(merged[-1]) and isinstance(f, (PosDiagonal, FreqDiagonal)):
                merged[-1] = type(f)(spec, merged[-1].values * f.values)
            else:
                merged.append(f)
        self.factors = merged

    def _apply(self, v):
        for f in reversed(self.factors):
            v = f._apply(v)
        return v

    def _apply_matrix(self, M):
        for f in reversed(self.factors):
            M = f._apply_matrix(M)
        return M

    def adjoint(self):
        return Composition(self.spec, [f.adjoint() for f in reversed(self.factors)])

    def _dense(self):
        fs = self.factors
        kinds = [type(f) for f in fs]
        # pos? . freq . pos?  ->  scaled circulant, real when possible
        core = [i for i, k in enumerate(kinds) if k is FreqDiagonal]
        if len(core) == 1 and all(k in (PosDiagonal, FreqDiagonal) for k in kinds) and len(fs) <= 3:
            i = core[0]
            if all(k is PosDiagonal for k in kinds[:i]) and all(k is PosDiagonal for k in kinds[i + 1 :]):
                M = fs[i]._dense()
                if i == 1:
                    left = fs[0].values.ravel()
                    if np.isrealobj(left) or np.iscomplexobj(M):
                        M *= left[:, None]
                    else:
                        M = M * left[:, None]
                if i + 1 < len(fs):
                    right = fs[i + 1].values.ravel()
                    if np.isrealobj(right) or np.iscomplexobj(M):
                        M *= right[None, :]
                    else:
                        M = M * right[None, :]
                return M
        M = fs[-1]._dense()
        for f in reversed(fs[:-1]):
            M = f._apply_matrix(M)
        return M


class SumOp(LinOp):
    """Linear combination ``sum_i c_i A_i``."""

    def __init__(self, spec: GridSpec, terms, coeffs):
        super().__init__(spec)
        if len(terms) != len(coeffs):
            raise OperatorError("terms and coefficients differ in length")
        for t in terms:
            if t.spec != spec:
                raise OperatorError("term lives on a different grid")
        self.terms = list(terms)
        self.coeffs = list(coeffs)

    def _apply(self, v):
        out = None
        for c, t in zip(self.coeffs, self.terms):
            r = c * t._apply(v)
            out = r if out is None else out + r
        return out

    def _apply_matrix(self, M):
        out = None
        for c, t in zip(self.coeffs, self.terms):
            r = c * t._apply_matrix(M)
            out = r if out is None else out + r
        return out

    def adjoint(self):
        return SumOp(self.spec, [t.adjoint() for t in self.terms], [np.conj(c) for c in self.coeffs])

    def _dense(self):
        out = None
        for c, t in zip(self.coeffs, self.terms):
            r = c * t._dense()
            out = r if out is None else out + r
        return out


def identity(spec: GridSpec) -> PosDiagonal:
    return PosDiagonal(spec, np.ones(spec.shape))
