"""Generators, pullback unitaries, Laplace-Beltrami operators and compactness diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .diffeo import Diffeo
from .directions import DirectionSet, as_direction_function
from .grid import GridFunction, GridSpec, inner, spectral_derivative
from .linop import (
    DENSE_CAP,
    Composition,
    DenseOp,
    FreqDiagonal,
    InterpOp,
    LinOp,
    OperatorError,
    PosDiagonal,
    SumOp,
    _check_cap,
    identity,
)
from .metric import MetricField

__all__ = [
    "DENSE_CAP",
    "LinOp",
    "OperatorError",
    "identity",
    "mult_op",
    "dir_multiplier",
    "freq_multiplier",
    "derivative",
    "psdo_like",
    "diffeo_unitary",
    "laplace_beltrami",
    "laplace_beltrami_parts",
    "resolvent_power",
    "commutator",
    "singular_values",
    "compactness_score",
    "CompactnessReport",
    "conjugation_residual_D",
    "conjugation_residual_lap",
]


def mult_op(f, spec: GridSpec | None = None) -> PosDiagonal:
    """Multiplication by ``f`` (a GridFunction, or nodal values together with ``spec``)."""
    if isinstance(f, GridFunction):
        return PosDiagonal(f.spec, f.values)
    if spec is None:
        raise OperatorError("spec required when f is a plain array")
    if callable(f):
        f = np.asarray(f(spec.nodes())).reshape(spec.shape)
    return PosDiagonal(spec, f)


def _unit_frequencies(spec: GridSpec):
    s = spec.frequencies()
    r = np.linalg.norm(s, axis=1)
    nz = r > 0
    u = np.zeros_like(s)
    u[nz] = s[nz] / r[nz, None]
    return u, nz


def dir_multiplier(g, spec: GridSpec, dirs: DirectionSet | None = None) -> FreqDiagonal:
    """Fourier multiplier ``g(s/|s|)``; at ``s = 0`` the mean of ``g`` over ``dirs``."""
    dirs = DirectionSet(spec.d) if dirs is None else dirs
    fn = as_direction_function(g, dirs)
    u, nz = _unit_frequencies(spec)
    vals = np.empty(spec.total, dtype=complex)
    vals[nz] = np.asarray(fn(u[nz])).ravel()
    vals[~nz] = np.mean(np.asarray(fn(dirs.vectors)))
    if np.all(vals.imag == 0):
        vals = vals.real
    return FreqDiagonal(spec, vals.reshape(spec.shape))


def freq_multiplier(h, spec: GridSpec) -> FreqDiagonal:
    """Fourier multiplier ``h(s)``; ``h`` maps frequency vectors ``(m, d)`` to values."""
    vals = np.asarray(h(spec.frequencies()) if callable(h) else h)
    if not np.all(np.isfinite(vals)):
        raise OperatorError("multiplier is not finite on the frequency lattice")
    return FreqDiagonal(spec, vals.reshape(spec.shape))


def derivative(spec: GridSpec, axis: int, nyquist: bool = False) -> FreqDiagonal:
    """``D_k = -i d/dt_k``; the Nyquist mode is zeroed unless ``nyquist``."""
    w = spec.freq_axis().copy()
    if not nyquist:
        w[spec.n // 2] = 0.0
    shape = [1] * spec.d
    shape[axis] = spec.n
    return FreqDiagonal(spec, np.broadcast_to(w.reshape(shape), spec.shape))


def psdo_like(q) -> LinOp:
    """Operator with position-dependent direction multiplier ``q(t, s/|s|)``.

    Built as ``sum_m M_{c_m} g_m(D)`` from the angular Fourier coefficients of ``q``
    (in 1-D: even and odd parts, ``M_a + M_b sgn(D)``).
    """
    from .symbol import as_sampled

    q = as_sampled(q)
    spec, dirs = q.spec, q.dirs
    vals = q.values.reshape(spec.total, dirs.count)
    if spec.d == 1:
        minus, plus = vals[:, 0], vals[:, 1]
        even = PosDiagonal(spec, (plus + minus) / 2)
        odd = Composition(spec, [PosDiagonal(spec, (plus - minus) / 2), dir_multiplier(lambda s: s[:, 0], spec, dirs)])
        return SumOp(spec, [even, odd], [1.0, 1.0])
    M = dirs.count
    coeffs = np.fft.fft(vals, axis=1) / M
    terms = []
    for j, m in enumerate(np.fft.fftfreq(M, d=1.0 / M).astype(int)):
        c = coeffs[:, j]
        if np.max(np.abs(c)) == 0:
            continue
        if j == M // 2:
            basis = (lambda mm: lambda s: np.cos(mm * np.arctan2(s[:, 1], s[:, 0])))(abs(m))
        else:
            basis = (lambda mm: lambda s: np.exp(1j * mm * np.arctan2(s[:, 1], s[:, 0])))(m)
        terms.append(Composition(spec, [PosDiagonal(spec, c), dir_multiplier(basis, spec, dirs)]))
    if not terms:
        return SumOp(spec, [identity(spec)], [0.0])
    return SumOp(spec, terms, [1.0] * len(terms))


def diffeo_unitary(phi: Diffeo) -> LinOp:
    """``(U xi)(t) = |det J(t)|^{1/2} (P xi)(Phi(t))`` with trigonometric interpolation ``P``."""
    spec = phi.spec
    if phi.is_identity:
        return identity(spec)
    t = spec.nodes()
    w = np.sqrt(np.abs(phi.det_jacobian(t)))
    return InterpOp(spec, w, phi.forward(t))


# --- Laplace-Beltrami ------------------------------------------------------------


@dataclass(frozen=True)
class LaplaceBeltramiParts:
    raw: np.ndarray
    flat: np.ndarray
    density: np.ndarray
    weighted_asymmetry: float
    flat_asymmetry: float


def _rel_asym(A: np.ndarray) -> float:
    nrm = np.linalg.norm(A)
    return float(np.linalg.norm(A - A.conj().T) / nrm) if nrm > 0 else 0.0


def laplace_beltrami_parts(g: MetricField) -> LaplaceBeltramiParts:
    """Dense assembly of ``A = -M_{rho^{-1}} sum D_k M_{rho g^{kl}} D_l``, ``rho = det(g)^{1/2}``.

    ``flat`` is ``M_{rho^{1/2}} A M_{rho^{-1/2}}``, Hermitian in the flat pairing.
    The weighted asymmetry measures ``A`` against the ``rho``-weighted pairing.
    """
    spec = g.spec
    _check_cap(spec)
    d = spec.d
    rho = g.sqrt_det()
    ginv = g.inverse()
    # Nyquist derivatives are kept; the real part averages the two sign conventions
    # of that mode, so constant metrics recover the exact multiplier there.
    D = [derivative(spec, k, nyquist=True) for k in range(d)]
    eye = np.eye(spec.total)
    A = np.zeros((spec.total, spec.total))
    for k in range(d):
        inner_sum = np.zeros((spec.total, spec.total), dtype=complex)
        for l in range(d):
            inner_sum += (rho * ginv[:, k, l])[:, None] * D[l]._apply_matrix(eye)
        A -= D[k]._apply_matrix(inner_sum).real
        del inner_sum
    A /= rho[:, None]
    W = rho[:, None] * A
    B = np.sqrt(rho)[:, None] * A / np.sqrt(rho)[None, :]
    return LaplaceBeltramiParts(A, B, rho, _rel_asym(W), _rel_asym(B))


def laplace_beltrami(g: MetricField) -> LinOp:
    """Laplace-Beltrami operator, sign chosen so ``1 - Delta_g >= 1``.

    Constant metrics give the exact multiplier ``-<g^{-1}s, s>``. Otherwise the
    Hermitian flat-pairing form is returned as a DenseOp whose ``info`` records
    the measured asymmetries before symmetrisation.
    """
    spec = g.spec
    if g.is_constant:
        ginv = np.linalg.inv(g.flat_values()[0])
        s = spec.frequencies()
        return FreqDiagonal(spec, (-np.einsum("mk,kl,ml->m", s, ginv, s)).reshape(spec.shape))
    parts = laplace_beltrami_parts(g)
    B = 0.5 * (parts.flat + parts.flat.conj().T)
    return DenseOp(
        spec,
        B,
        info={"weighted_asymmetry": parts.weighted_asymmetry, "flat_asymmetry": parts.flat_asymmetry},
    )


def resolvent_power(g: MetricField, exponent: float) -> LinOp:
    """``(1 - Delta_g)^{-exponent}`` by exact functional calculus."""
    lap = laplace_beltrami(g)
    if isinstance(lap, FreqDiagonal):
        return FreqDiagonal(g.spec, (1.0 - lap.values.real) ** (-exponent))
    lam, V = scipy.linalg.eigh(lap.matrix, check_finite=False)
    f = (1.0 - lam) ** (-exponent)
    return DenseOp(g.spec, (V * f) @ V.conj().T, info=dict(lap.info))


# --- commutators and spectra ------------------------------------------------------


def commutator(A: LinOp, B: LinOp) -> DenseOp:
    A._same(B)
    _check_cap(A.spec)
    Bd = B.dense()
    Ad = A.dense()
    return DenseOp(A.spec, A._apply_matrix(Bd) - B._apply_matrix(Ad))


def singular_values(A, method: str = "auto", min_value: float | None = None) -> np.ndarray:
    """Singular values in decreasing order.

    ``method``: ``"svd"`` (dense LAPACK), ``"gram"`` (square roots of the
    eigenvalues of ``A A*``; faster, accurate to about ``1e-8 * mu_0``) or
    ``"auto"`` (diagonals exactly, ``gram`` above 2048 unknowns, else ``svd``).
    With ``min_value`` only values at or above it are returned (the gram route
    then computes just that part of the spectrum).
    """
    if isinstance(A, np.ndarray):
        return _cut(np.sort(scipy.linalg.svdvals(A, check_finite=False))[::-1], min_value)
    if isinstance(A, (PosDiagonal, FreqDiagonal)):
        return _cut(np.sort(np.abs(A.values.ravel()))[::-1], min_value)
    _check_cap(A.spec)
    if method == "auto":
        method = "gram" if A.spec.total > 2048 else "svd"
    if method == "svd":
        mu = scipy.linalg.svdvals(A.dense(), check_finite=False)
    elif method == "gram":
        G = (A @ A.adjoint()).dense()
        if np.iscomplexobj(G) and np.max(np.abs(G.imag)) <= 1e-14 * np.max(np.abs(G.real)):
            G = np.ascontiguousarray(G.real)
        sub = None if min_value is None else (min_value**2 * (1 - 1e-12), np.inf)
        ev = scipy.linalg.eigvalsh(G, overwrite_a=True, check_finite=False, subset_by_value=sub, driver="evr" if sub else None)
        mu = np.sqrt(np.clip(ev, 0.0, None))
    else:
        raise OperatorError(f"unknown method {method!r}")
    return _cut(np.sort(mu)[::-1], min_value)


def _cut(mu: np.ndarray, min_value: float | None) -> np.ndarray:
    return mu if min_value is None else mu[mu >= min_value]


@dataclass(frozen=True)
class CompactnessReport:
    tail_ratio: float
    decay_exponent: float
    zero: bool = False

    def to_dict(self) -> dict:
        return {"tail_ratio": self.tail_ratio, "decay_exponent": self.decay_exponent, "zero": self.zero}


def compactness_score(A, noise_floor: float = 1e-13) -> CompactnessReport:
    """Tail ratio ``mu(total/4)/mu(0)`` and log-log decay slope (against rank ``k+1``) over ``[total/16, total/4]``.

    Accepts an operator or a decreasing singular-value array. Values below
    ``noise_floor * mu(0)`` are excluded from the slope fit; if too few remain
    the slope is reported as ``-inf`` (numerically finite rank).
    """
    mu = np.asarray(A if isinstance(A, np.ndarray) else singular_values(A, method="svd"), dtype=float)
    total = mu.size
    if mu[0] <= 0:
        return CompactnessReport(0.0, float("-inf"), zero=True)
    tail = float(mu[total // 4] / mu[0])
    k = np.arange(max(1, total // 16), total // 4 + 1)
    sel = mu[k] > noise_floor * mu[0]
    if np.count_nonzero(sel) < 3:
        return CompactnessReport(tail, float("-inf"))
    slope = np.polyfit(np.log(k[sel] + 1.0), np.log(mu[k[sel]]), 1)[0]  # rank k+1
    return CompactnessReport(tail, float(slope))


# --- conjugation identities ---------------------------------------------------------


def conjugation_test_vectors(phi: Diffeo, order: int = 1, window: float | None = None, carriers=None) -> np.ndarray:
    """Gaussian-windowed plane waves centred at the support centre of ``phi``.

    The Gaussian width is ``window / 8``, so the vectors are below 1e-13 outside
    the ball of radius ``window``. The default window is ``L/8``, widened on
    coarse grids (up to ``0.4 L``) so the envelope stays resolved. Returns shape
    ``spec.shape + (B,)`` with unit-norm columns. Carriers are grid wavenumbers;
    defaults keep the bandwidth within ``n/4`` (order 1) or ``n/8`` (order 2).
    """
    spec = phi.spec
    n = spec.n
    w = min(max(spec.L / 8, 40 * spec.L / n), 0.4 * spec.L) if window is None else float(window)
    if carriers is None:
        top = n // 8 if order == 1 else n // 16
        carriers = [0, top // 4, top // 2, top]
    axes_dirs = [np.array([1.0])] if spec.d == 1 else [np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0]) / np.sqrt(2)]
    t = spec.nodes()
    sigma = w / 8
    env = np.exp(-np.sum((t - phi.center) ** 2, axis=1) / (2 * sigma**2))
    cols = []
    for e in axes_dirs:
        for kc in carriers:
            for sg in [1.0] if kc == 0 else [1.0, -1.0]:
                v = env * np.exp(1j * sg * 2 * np.pi * kc / spec.L * (t @ e))
                cols.append(v / np.sqrt(np.real(inner(v, v, spec))))
    return np.stack(cols, axis=-1).reshape(spec.shape + (len(cols),))


def _conjugation_coefficients(phi: Diffeo, oversample: int | None = None):
    """Coefficients of the conjugated derivatives, restricted to the grid nodes.

    Returns ``a_kl = J_lk(Phi^{-1} t)``, ``a_k = (h^{-1} D_k h)(Phi^{-1} t)`` with
    ``h = |det J|^{1/2}``, and ``b = sum_kl D_l(conj(a_kl) a_k) + sum_k |a_k|^2``.

    With ``lam(t) = log h(Phi^{-1} t)`` the chain rule gives
    ``a_k = sum_m a_km D_m lam``, so only uniform-grid spectral derivatives are
    needed. They are taken on a grid ``oversample`` times finer (``Phi`` is known
    analytically), which keeps steep features of the map resolved.
    """
    spec = phi.spec
    d = spec.d
    if phi.is_identity:
        a_kl = np.broadcast_to(np.eye(d), (spec.total, d, d)).copy()
        return a_kl, np.zeros((spec.total, d), dtype=complex), np.zeros(spec.total, dtype=complex)
    q = (8 if d == 1 else 4) if oversample is None else int(oversample)
    fine = GridSpec(d, spec.n * q, spec.L)
    J = phi.jacobian(phi.inverse(fine.nodes()))
    a_kl = np.swapaxes(J, 1, 2)
    lam = (0.5 * np.log(np.abs(np.linalg.det(J)))).reshape(fine.shape)
    grad = np.stack([spectral_derivative(fine, lam, m).ravel() for m in range(d)], axis=-1)
    a_k = np.einsum("jkm,jm->jk", a_kl, grad)
    b = np.sum(np.abs(a_k) ** 2, axis=1).astype(complex)
    for l in range(d):
        prod = np.sum(a_kl[:, :, l] * a_k, axis=1).reshape(fine.shape)
        b = b + spectral_derivative(fine, prod, l).ravel()
    coarse = (slice(None, None, q),) * d

    def restrict(arr):
        return arr.reshape(fine.shape + arr.shape[1:])[coarse].reshape((spec.total,) + arr.shape[1:])

    return restrict(a_kl), restrict(a_k), restrict(b)


def _norms(spec: GridSpec, V: np.ndarray) -> np.ndarray:
    flat = V.reshape(spec.total, -1)
    return np.sqrt(np.sum(np.abs(flat) ** 2, axis=0) * spec.cell_volume)


def conjugation_residual_D(phi: Diffeo, k: int, vectors: np.ndarray | None = None) -> float:
    """Max over test vectors of ``|(U^{-1} D_k U - sum_l a_kl D_l - a_k) xi| / |xi|``."""
    spec = phi.spec
    X = conjugation_test_vectors(phi, 1) if vectors is None else vectors
    U = diffeo_unitary(phi)
    Uinv = diffeo_unitary(phi.inverted())
    D = [derivative(spec, l) for l in range(spec.d)]
    lhs = Uinv.apply(D[k].apply(U.apply(X)))
    a_kl, a_k, _ = _conjugation_coefficients(phi)
    rhs = a_k[:, k].reshape(spec.shape)[..., None] * X
    for l in range(spec.d):
        rhs = rhs + a_kl[:, k, l].reshape(spec.shape)[..., None] * D[l].apply(X)
    return float(np.max(_norms(spec, lhs - rhs) / _norms(spec, X)))


def conjugation_residual_lap(phi: Diffeo, vectors: np.ndarray | None = None) -> float:
    """Residual of ``-U^{-1} Delta U = sum D_l1 b_l1l2 D_l2 + sum b_l D_l + b``."""
    spec = phi.spec
    d = spec.d
    X = conjugation_test_vectors(phi, 2) if vectors is None else vectors
    U = diffeo_unitary(phi)
    Uinv = diffeo_unitary(phi.inverted())
    D = [derivative(spec, l) for l in range(d)]
    UX = U.apply(X)
    lhs = Uinv.apply(sum(D[k].apply(D[k].apply(UX)) for k in range(d)))
    a_kl, a_k, b = _conjugation_coefficients(phi)
    field = lambda arr: arr.reshape(spec.shape)[..., None]  # noqa: E731
    DX = [D[l].apply(X) for l in range(d)]
    rhs = np.zeros_like(lhs)
    for l1 in range(d):
        acc = np.zeros_like(lhs)
        for l2 in range(d):
            b12 = np.sum(a_kl[:, :, l1] * a_kl[:, :, l2], axis=1)
            acc = acc + field(b12) * DX[l2]
        rhs = rhs + D[l1].apply(acc)
    for l in range(d):
        b_l = 2 * np.real(np.sum(np.conj(a_k) * a_kl[:, :, l], axis=1))
        rhs = rhs + field(b_l) * DX[l]
    rhs = rhs + field(b) * X
    return float(np.max(_norms(spec, lhs - rhs) / _norms(spec, X)))
