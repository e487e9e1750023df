"""Torus diffeomorphisms that equal the identity outside a ball.

Points are arrays of shape ``(m, d)``; Jacobians have shape ``(m, d, d)`` with
``J[:, i, j] = d Phi_i / d t_j``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.integrate
import scipy.interpolate

from .grid import GridSpec, bump_profile, bump_profile_derivative


class DiffeoError(ValueError):
    """Map is not a valid diffeomorphism of the required kind."""


class Diffeo:
    def __init__(
        self,
        spec: GridSpec,
        forward: Callable,
        inverse: Callable,
        jacobian: Callable,
        support_radius: float,
        center=None,
        name: str = "diffeo",
        is_identity: bool = False,
    ):
        self.spec = spec
        self._forward = forward
        self._inverse = inverse
        self._jacobian = jacobian
        self.support_radius = float(support_radius)
        self.center = spec.center if center is None else np.asarray(center, dtype=float).reshape(spec.d)
        self.name = name
        self.is_identity = is_identity

    def _pts(self, points):
        return np.asarray(points, dtype=float).reshape(-1, self.spec.d)

    def forward(self, points) -> np.ndarray:
        return self._forward(self._pts(points))

    def inverse(self, points) -> np.ndarray:
        return self._inverse(self._pts(points))

    def jacobian(self, points) -> np.ndarray:
        return self._jacobian(self._pts(points))

    __call__ = forward

    def det_jacobian(self, points) -> np.ndarray:
        return np.linalg.det(self.jacobian(points))

    def inverted(self) -> "Diffeo":
        def jac(x):
            return np.linalg.inv(self._jacobian(self._inverse(x)))

        return Diffeo(self.spec, self._inverse, self._forward, jac, self.support_radius, self.center, f"inv({self.name})", self.is_identity)

    def compose(self, other: "Diffeo") -> "Diffeo":
        """``self o other``: apply ``other`` first."""
        if other.spec != self.spec:
            raise DiffeoError("diffeomorphisms live on different grids")

        def fwd(t):
            return self._forward(other._forward(t))

        def inv(x):
            return other._inverse(self._inverse(x))

        def jac(t):
            return self._jacobian(other._forward(t)) @ other._jacobian(t)

        radius = max(
            self.support_radius,
            np.linalg.norm(other.center - self.center) + other.support_radius,
        )
        return Diffeo(self.spec, fwd, inv, jac, radius, self.center, f"{self.name}∘{other.name}", self.is_identity and other.is_identity)

    def inverse_residual(self) -> float:
        """Max of ``|Phi(Phi^{-1}(t)) - t|`` and ``|Phi^{-1}(Phi(t)) - t|`` over grid nodes."""
        t = self.spec.nodes()
        a = np.max(np.abs(self.forward(self.inverse(t)) - t))
        b = np.max(np.abs(self.inverse(self.forward(t)) - t))
        return float(max(a, b))


def identity_diffeo(spec: GridSpec) -> Diffeo:
    eye = np.eye(spec.d)
    return Diffeo(
        spec,
        lambda t: t.copy(),
        lambda x: x.copy(),
        lambda t: np.broadcast_to(eye, (t.shape[0], spec.d, spec.d)).copy(),
        0.0,
        name="identity",
        is_identity=True,
    )


# --- radial profiles -----------------------------------------------------------


class _BumpProfile:
    def value(self, x):
        return bump_profile(x)

    def deriv_over_x(self, x):
        """``p'(x) / x``, finite at ``x = 0``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = np.abs(x) < 1
        xi = x[inside]
        out[inside] = -2.0 * bump_profile(xi) / (1.0 - xi**2) ** 2
        return out

    def deriv(self, x):
        return bump_profile_derivative(x)


class _PlateauProfile:
    """Equal to 1 on ``[0, a]``, smooth monotone step to 0 at 1."""

    def __init__(self, a: float):
        if not 0 < a < 1:
            raise DiffeoError("plateau fraction must lie in (0, 1)")
        self.a = a

    @staticmethod
    def _f(u):
        out = np.zeros_like(u)
        pos = u > 0
        out[pos] = np.exp(-1.0 / u[pos])
        return out

    @staticmethod
    def _fp(u):
        out = np.zeros_like(u)
        pos = u > 0
        out[pos] = np.exp(-1.0 / u[pos]) / u[pos] ** 2
        return out

    def _u(self, x):
        return np.clip((1.0 - np.asarray(x, dtype=float)) / (1.0 - self.a), 0.0, 1.0)

    def value(self, x):
        u = self._u(x)
        f, g = self._f(u), self._f(1.0 - u)
        return f / (f + g)

    def deriv(self, x):
        u = self._u(x)
        f, g = self._f(u), self._f(1.0 - u)
        fp, gp = self._fp(u), self._fp(1.0 - u)
        ds = (fp * g + f * gp) / (f + g) ** 2
        return -ds / (1.0 - self.a)

    def deriv_over_x(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        mask = x > self.a
        out[mask] = self.deriv(x[mask]) / x[mask]
        return out


def _ball_fits(spec: GridSpec, center, radius):
    if radius <= 0 or np.any(center - radius <= 0) or np.any(center + radius >= spec.L):
        raise DiffeoError("support ball must lie strictly inside the fundamental domain")


def radial_diffeo(
    spec: GridSpec,
    amplitude: float,
    radius: float | None = None,
    center=None,
    profile: str = "bump",
    plateau: float = 0.15,
) -> Diffeo:
    """Radial stretch ``Phi(t) = c + (t - c)(1 + amplitude * p(|t - c| / radius))``.

    ``profile="bump"`` uses the standard bump; ``profile="plateau"`` is flat near
    the centre, so ``Phi`` is exactly linear (factor ``1 + amplitude``) on the
    ball of radius ``plateau * radius``.
    """
    c = spec.center if center is None else np.asarray(center, dtype=float).reshape(spec.d)
    R = spec.L / 4 if radius is None else float(radius)
    _ball_fits(spec, c, R)
    prof = _BumpProfile() if profile == "bump" else _PlateauProfile(plateau) if profile == "plateau" else None
    if prof is None:
        raise DiffeoError(f"unknown profile {profile!r}")
    eps = float(amplitude)

    xs = np.linspace(0.0, 1.0, 20001)
    m = 1.0 + eps * prof.value(xs)
    slope = m + eps * xs * prof.deriv(xs)
    if np.min(m) <= 0 or np.min(slope) <= 1e-6:
        raise DiffeoError("amplitude too large: radial map is not monotone")

    def scale(r):
        return 1.0 + eps * prof.value(r / R)

    def fwd(t):
        y = t - c
        r = np.linalg.norm(y, axis=1)
        return c + y * scale(r)[:, None]

    def inv(x):
        y = x - c
        rho = np.linalg.norm(y, axis=1)
        r = rho.copy()
        inside = rho < R
        if np.any(inside):
            target = rho[inside]
            lo = np.zeros_like(target)
            hi = np.full_like(target, R)
            for _ in range(64):
                mid = 0.5 * (lo + hi)
                too_big = mid * scale(mid) > target
                hi = np.where(too_big, mid, hi)
                lo = np.where(too_big, lo, mid)
            r_in = 0.5 * (lo + hi)
            for _ in range(2):
                g = r_in * scale(r_in) - target
                dg = scale(r_in) + eps * (r_in / R) * prof.deriv(r_in / R)
                r_in = r_in - g / dg
            r[inside] = r_in
        factor = np.ones_like(rho)
        nz = rho > 0
        factor[nz] = r[nz] / rho[nz]
        return c + y * factor[:, None]

    def jac(t):
        y = t - c
        r = np.linalg.norm(y, axis=1)
        J = scale(r)[:, None, None] * np.eye(spec.d)[None]
        coef = eps * prof.deriv_over_x(r / R) / R**2
        return J + coef[:, None, None] * y[:, :, None] * y[:, None, :]

    return Diffeo(spec, fwd, inv, jac, R, c, name=f"radial[{profile},{eps:g}]")


def swirl_diffeo(spec: GridSpec, angle: float, radius: float | None = None, center=None) -> Diffeo:
    """Rotation about ``c`` by ``angle * bump(|t - c| / radius)`` (2-D only)."""
    if spec.d != 2:
        raise DiffeoError("swirl is defined in two dimensions")
    c = spec.center if center is None else np.asarray(center, dtype=float).reshape(2)
    R = spec.L / 4 if radius is None else float(radius)
    _ball_fits(spec, c, R)
    prof = _BumpProfile()
    alpha = float(angle)

    def rotate(y, phi):
        cs, sn = np.cos(phi), np.sin(phi)
        return np.stack([cs * y[:, 0] - sn * y[:, 1], sn * y[:, 0] + cs * y[:, 1]], axis=-1)

    def fwd(t):
        y = t - c
        return c + rotate(y, alpha * prof.value(np.linalg.norm(y, axis=1) / R))

    def inv(x):
        y = x - c
        return c + rotate(y, -alpha * prof.value(np.linalg.norm(y, axis=1) / R))

    def jac(t):
        y = t - c
        r = np.linalg.norm(y, axis=1)
        phi = alpha * prof.value(r / R)
        cs, sn = np.cos(phi), np.sin(phi)
        Rm = np.empty((t.shape[0], 2, 2))
        Rm[:, 0, 0], Rm[:, 0, 1], Rm[:, 1, 0], Rm[:, 1, 1] = cs, -sn, sn, cs
        dR_y = np.stack([-sn * y[:, 0] - cs * y[:, 1], cs * y[:, 0] - sn * y[:, 1]], axis=-1)
        grad_phi = (alpha * prof.deriv_over_x(r / R) / R**2)[:, None] * y
        return Rm + dR_y[:, :, None] * grad_phi[:, None, :]

    return Diffeo(spec, fwd, inv, jac, R, c, name=f"swirl[{alpha:g}]")


def _smooth_step(x, x0, x1):
    """0 for ``x <= x0``, 1 for ``x >= x1``, C-infinity in between."""
    u = np.clip((np.asarray(x, dtype=float) - x0) / (x1 - x0), 0.0, 1.0)
    f = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
    g = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return f / (f + g)


def linear_core_diffeo(spec: GridSpec, factor: float = 2.0, radius: float | None = None, core: float = 0.15) -> Diffeo:
    """1-D map equal to ``c + factor (t - c)`` for ``|t - c| <= core * radius``.

    Built from its derivative ``psi = 1 + (factor - 1)(P - k Q)``: ``P`` is 1 on the
    core and steps down by ``0.4 radius``; ``Q`` is a broad plateau on
    ``[0.4, 1] radius`` whose weight ``k`` makes ``int psi = radius``, so the map is
    the identity beyond the ball. The antiderivative is tabulated once.
    """
    if spec.d != 1:
        raise DiffeoError("linear-core map is one-dimensional")
    c = spec.center
    R = 0.4 * spec.L if radius is None else float(radius)
    _ball_fits(spec, c, R)
    if not 0 < core < 0.35:
        raise DiffeoError("core fraction must lie in (0, 0.35)")

    def P(x):
        return 1.0 - _smooth_step(x, core, 0.4)

    def Q(x):
        return _smooth_step(x, 0.4, 0.5) * (1.0 - _smooth_step(x, 0.85, 1.0))

    xs = np.linspace(0.0, 1.0, 2**16 + 1)
    kq = scipy.integrate.simpson(P(xs), x=xs) / scipy.integrate.simpson(Q(xs), x=xs)

    def psi(x):
        x = np.abs(x)
        return 1.0 + (factor - 1.0) * (P(x) - kq * Q(x))

    if np.min(psi(xs)) <= 1e-3:
        raise DiffeoError("factor too large: map is not monotone")
    table = scipy.integrate.cumulative_simpson(psi(xs) - 1.0, x=xs, initial=0.0)
    table -= xs * table[-1]  # remove the O(h^4) closure defect so F(1) = 1 exactly
    extra = scipy.interpolate.CubicHermiteSpline(xs, table, psi(xs) - 1.0)

    def F(x):
        ax = np.abs(x)
        return np.sign(x) * (ax + np.where(ax < 1.0, extra(np.minimum(ax, 1.0)), 0.0))

    def fwd(t):
        y = (t[:, 0] - c[0]) / R
        return (c[0] + R * F(y))[:, None]

    def inv(xq):
        y = (xq[:, 0] - c[0]) / R
        ay = np.abs(y)
        lo, hi = np.zeros_like(ay), np.minimum(ay, 1.0)
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            big = F(mid) > ay
            hi = np.where(big, mid, hi)
            lo = np.where(big, lo, mid)
        r = np.where(ay >= 1.0, ay, 0.5 * (lo + hi))
        return (c[0] + R * np.sign(y) * r)[:, None]

    def jac(t):
        y = (t[:, 0] - c[0]) / R
        return np.where(np.abs(y) < 1.0, psi(y), 1.0)[:, None, None]

    return Diffeo(spec, fwd, inv, jac, R, c, name=f"linear-core[{factor:g}]")
