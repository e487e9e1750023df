"""Dixmier-trace estimation from singular values and the two sides of the trace formula.

The left side is the log-averaged partial sum of singular values of
``T (1 - Delta_g)^{-d/2}``, extrapolated in ``1/log(2 + n)``. The right side is
``c_d`` times the fibre-Gaussian weighted integral of the symbol, with ``c_d``
calibrated on the flat torus from its exact spectrum.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .directions import DirectionSet
from .grid import make_grid
from .linop import LinOp
from .metric import MetricField
from .operators import resolvent_power, singular_values
from .symbol import Symbol, as_sampled


class TraceError(ValueError):
    """Invalid singular-value input or trace configuration."""


def _schedule(n_max: int, per_decade: int = 48) -> np.ndarray:
    if n_max < 1:
        return np.arange(n_max + 1)
    pts = np.unique(np.round(np.logspace(0, np.log10(n_max), per_decade * max(1, int(np.ceil(np.log10(n_max))))) ).astype(int))
    return np.unique(np.concatenate([[0], pts[pts <= n_max], [n_max]]))


def dixmier_partials(mu, schedule=None) -> list:
    """``(n, sum_{k<=n} mu_k / log(2 + n))`` on a log-spaced schedule of ``n``."""
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or mu.size == 0:
        raise TraceError("expected a nonempty 1-D sequence")
    if np.any(mu < 0):
        raise TraceError("singular values must be nonnegative")
    if np.any(np.diff(mu) > 1e-12 * max(mu[0], 1e-300)):
        raise TraceError("sequence must be non-increasing")
    ns = _schedule(mu.size - 1) if schedule is None else np.asarray(schedule, dtype=int)
    csum = np.cumsum(mu)
    return [(int(n), float(csum[n] / math.log(2 + n))) for n in ns]


@dataclass(frozen=True)
class TraceEstimate:
    """Partials, fitted intercept and its uncertainty; ``window`` is the fitted ``n`` range."""

    partials: list
    extrapolated: float
    half_width: float
    window: tuple = (0, 0)

    def to_dict(self) -> dict:
        return {
            "partials": [[n, v] for n, v in self.partials],
            "extrapolated": self.extrapolated,
            "half_width": self.half_width,
            "window": list(self.window),
        }


def _fit_intercept(ns: np.ndarray, vals: np.ndarray, remainder: float | None = None):
    x = 1.0 / np.log(2.0 + ns)
    cols = [np.ones_like(x), x]
    if remainder is not None:
        cols.append(x * (ns + 1.0) ** (-remainder))
    A = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    dof = max(1, ns.size - A.shape[1])
    resid = vals - A @ coef
    cov = np.linalg.pinv(A.T @ A) * (resid @ resid) / dof
    return float(coef[0]), float(np.sqrt(max(cov[0, 0], 0.0)))


def estimate_from_values(mu, remainder: float | None = None) -> TraceEstimate:
    """Fit ``S_n / log(2+n) = a + b / log(2+n)`` over ``n`` in ``[j/10, j]`` (``j`` the last index).

    ``remainder = p`` adds a term ``c n^{-p} / log(2+n)`` for partial sums with a
    power-law correction (``p = 1/d`` for Weyl-type spectra in dimension ``d``).
    The uncertainty also covers the shift against the fit over ``[j/20, j/2]``.
    """
    mu = np.asarray(mu, dtype=float)
    j = mu.size - 1
    if j < 20:
        raise TraceError("need at least 21 singular values for the extrapolation window")
    partials = dixmier_partials(mu)
    csum = np.cumsum(mu)

    def fit(lo, hi):
        ns = _schedule(hi, per_decade=200)
        ns = ns[ns >= lo]
        return _fit_intercept(ns, csum[ns] / np.log(2.0 + ns), remainder)

    a, se = fit(j // 10, j)
    a2, _ = fit(j // 20, j // 2)
    return TraceEstimate(partials, a, max(2 * se, abs(a - a2)), (j // 10, j))


def resolution_floor(sup: float, g: MetricField, rho: float) -> float:
    """Smallest singular value of ``T (1-Delta_g)^{-d/2}`` considered resolved.

    Frequencies above ``rho`` times the Nyquist radius are discretisation
    dominated; their resolvent value, times ``sup |sym T|``, bounds the trustworthy part.
    """
    spec = g.spec
    lo = g.inverse_eigen_range()[0]
    r = rho * np.pi * spec.n / spec.L
    return float(sup * (1.0 + lo * r * r) ** (-spec.d / 2))


def dixmier_estimate(A, floor: float | None = None, method: str = "auto", remainder: float | None = None) -> TraceEstimate:
    """Extrapolated Dixmier trace of ``A`` (operator or decreasing singular values).

    Without ``floor`` the fit uses the largest decade of the full spectrum; with it,
    only singular values ``>= floor``. ``remainder`` is passed to :func:`estimate_from_values`.
    """
    if isinstance(A, np.ndarray):
        mu = np.sort(np.abs(A))[::-1]
        if floor is not None:
            mu = mu[mu >= floor]
    else:
        mu = singular_values(A, method=method, min_value=floor)
    return estimate_from_values(mu, remainder)


# --- symbol side -----------------------------------------------------------------


def _radial_factor(g: MetricField, dirs: DirectionSet) -> np.ndarray:
    """``Gamma(d/2)/2 * <g^{-1} theta, theta>^{-d/2}`` per (node, direction)."""
    d = g.spec.d
    ginv = g.inverse()
    q = np.einsum("mi,tij,mj->tm", dirs.vectors, ginv, dirs.vectors)
    if np.any(q <= 0):
        raise TraceError("metric is not positive definite")
    return 0.5 * math.gamma(d / 2) * q ** (-d / 2)


def weighted_residue(a, g: MetricField) -> float:
    """``int a(t, s/|s|) exp(-<g^{-1}(t) s, s>) dt ds`` with the radial integral in closed form."""
    if a.spec != g.spec:
        raise TraceError("symbol and metric live on different grids")
    a = as_sampled(a)
    w = a.dirs.weights
    val = np.sum(a.values * _radial_factor(g, a.dirs) * w[None, :]) * g.spec.cell_volume
    return float(val.real) if abs(val.imag) <= 1e-12 * max(1.0, abs(val)) else complex(val)


def _lattice_spectrum(d: int, L: float, terms: int) -> np.ndarray:
    """Leading ``>= terms`` eigenvalues of ``(1 - Delta)^{-d/2}`` on the flat torus, sorted."""
    c = (2 * np.pi / L) ** 2
    if d == 1:
        K = terms // 2 + 1
        k = np.arange(1, K + 1, dtype=float)
        tail = (1.0 + c * k * k) ** -0.5
        return np.concatenate([[1.0], np.repeat(tail, 2)])
    R = int(np.ceil(np.sqrt(terms / np.pi))) + 2
    k = np.arange(-R, R + 1, dtype=float)
    r2 = (k[:, None] ** 2 + k[None, :] ** 2).ravel()
    r2 = np.sort(r2[r2 <= R * R])
    return 1.0 / (1.0 + c * r2)


@lru_cache(maxsize=None)
def flat_dixmier_trace(d: int, L: float = 2 * np.pi, terms: int = 10**7) -> float:
    """Dixmier trace of ``(1 - Delta)^{-d/2}`` on the flat torus of side ``L`` from lattice partial sums."""
    if d not in (1, 2):
        raise TraceError("dimension must be 1 or 2")
    return estimate_from_values(_lattice_spectrum(d, float(L), int(terms))).extrapolated


@lru_cache(maxsize=None)
def calibrate_cd(d: int, L: float = 2 * np.pi, terms: int = 10**7) -> float:
    """``c_d`` = flat-torus Dixmier trace of ``(1-Delta)^{-d/2}`` over the residue of the symbol 1."""
    spec = make_grid(d, 8, float(L))
    flat = MetricField.flat(spec)
    one = Symbol(spec, DirectionSet(d), np.ones((spec.total, DirectionSet(d).count)))
    return flat_dixmier_trace(d, float(L), int(terms)) / weighted_residue(one, flat)


@dataclass(frozen=True)
class ResidueReport:
    lhs: TraceEstimate
    rhs: float
    c_d: float
    rel_err: float
    floor: float | None = None

    def to_dict(self) -> dict:
        return {"lhs": self.lhs.to_dict(), "rhs": self.rhs, "c_d": self.c_d, "rel_err": self.rel_err, "floor": self.floor}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


DEFAULT_RHO = 0.7


def connes_check(T: LinOp, a, g: MetricField, rho: float | None = None, method: str = "auto") -> ResidueReport:
    """Compare the Dixmier trace of ``T (1-Delta_g)^{-d/2}`` with ``c_d`` times the weighted residue of ``a``.

    ``rho`` sets the resolution floor (fraction of the Nyquist radius); ``0``
    disables it. The extrapolation includes the ``n^{-1/d}`` Weyl remainder.
    """
    spec = g.spec
    if T.spec != spec or a.spec != spec:
        raise TraceError("operator, symbol and metric must share one grid")
    rho = DEFAULT_RHO if rho is None else rho
    sampled = as_sampled(a)
    floor = resolution_floor(sampled.sup(), g, rho) if rho > 0 else None
    A = T @ resolvent_power(g, spec.d / 2)
    lhs = dixmier_estimate(A, floor=floor, method=method, remainder=1.0 / spec.d)
    cd = calibrate_cd(spec.d)
    rhs = cd * weighted_residue(sampled, g)
    return ResidueReport(lhs, float(np.real(rhs)), cd, float(abs(lhs.extrapolated - rhs) / abs(rhs)), floor)


__all__ = [
    "TraceError",
    "TraceEstimate",
    "ResidueReport",
    "dixmier_partials",
    "dixmier_estimate",
    "estimate_from_values",
    "resolution_floor",
    "weighted_residue",
    "flat_dixmier_trace",
    "calibrate_cd",
    "connes_check",
]
