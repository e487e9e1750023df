"""Periodic spectral grids on the 1- and 2-torus.

Grid nodes are ``t_j = j L / n`` per axis; frequencies are ``2 pi k / L`` for
``k`` in ``[-n/2, n/2)``, stored in numpy FFT order. Transforms are unitary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    """Invalid grid parameters or mismatched grid data."""


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[0, L)^d``."""

    d: int
    n: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2):
            raise GridError(f"dimension must be 1 or 2, got {self.d}")
        if not isinstance(self.n, (int, np.integer)) or not _is_power_of_two(int(self.n)) or self.n < 8:
            raise GridError(f"n must be a power of two >= 8, got {self.n}")
        if not np.isfinite(self.L) or self.L <= 0:
            raise GridError(f"L must be positive, got {self.L}")

    @property
    def total(self) -> int:
        return self.n**self.d

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def spacing(self) -> float:
        return self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.d

    @property
    def volume(self) -> float:
        return self.L**self.d

    @property
    def center(self) -> np.ndarray:
        return np.full(self.d, self.L / 2)

    def axis(self) -> np.ndarray:
        return np.arange(self.n) * self.spacing

    def freq_axis(self) -> np.ndarray:
        """Angular frequencies of one axis in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.n, d=1.0 / self.n) / self.L

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(total, d)``, row-major."""
        grids = np.meshgrid(*([self.axis()] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def frequencies(self) -> np.ndarray:
        """Frequency vectors, shape ``(total, d)``, FFT order, row-major."""
        grids = np.meshgrid(*([self.freq_axis()] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def node_index(self, point, atol: float = 1e-9) -> int:
        """Flat index of the grid node at ``point``; raises if not a node."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        if p.shape != (self.d,):
            raise GridError(f"point must have {self.d} coordinates")
        idx = p / self.spacing
        rounded = np.round(idx)
        if np.any(np.abs(idx - rounded) > atol / self.spacing) or np.any(rounded < 0) or np.any(rounded >= self.n):
            raise GridError(f"{p} is not a grid node")
        return int(np.ravel_multi_index(tuple(rounded.astype(int)), self.shape))

    def as_values(self, x) -> np.ndarray:
        """Coerce a GridFunction, flat vector or shaped array to shape ``spec.shape``."""
        if isinstance(x, GridFunction):
            if x.spec != self:
                raise GridError("grid function lives on a different grid")
            return x.values
        a = np.asarray(x)
        if a.shape == self.shape:
            return a
        if a.shape == (self.total,):
            return a.reshape(self.shape)
        raise GridError(f"expected {self.total} values, got array of shape {a.shape}")


def make_grid(d: int, n: int, L: float) -> GridSpec:
    return GridSpec(int(d), int(n), float(L))


@dataclass(frozen=True)
class GridFunction:
    """Complex (or real) field sampled on the nodes of ``spec``."""

    spec: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.spec.as_values(self.values), copy=True)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, spec: GridSpec, fn) -> "GridFunction":
        """Sample ``fn(points)`` with points of shape ``(total, d)``."""
        return cls(spec, np.asarray(fn(spec.nodes())).reshape(spec.shape))

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class SpectralField:
    """Unitary Fourier coefficients in FFT order."""

    spec: GridSpec
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex, copy=True)
        if c.size != self.spec.total:
            raise GridError(f"expected {self.spec.total} coefficients, got {c.size}")
        c = c.reshape(self.spec.shape)
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)


def fft(values: np.ndarray, d: int) -> np.ndarray:
    """Unitary FFT over the first ``d`` axes (extra trailing axes are batched)."""
    return np.fft.fftn(values, axes=tuple(range(d)), norm="ortho")


def ifft(values: np.ndarray, d: int) -> np.ndarray:
    return np.fft.ifftn(values, axes=tuple(range(d)), norm="ortho")


def transform(f, direction: str = "forward"):
    """Unitary Fourier transform between GridFunction and SpectralField."""
    if direction == "forward":
        if not isinstance(f, GridFunction):
            raise GridError("forward transform expects a GridFunction")
        return SpectralField(f.spec, fft(f.values, f.spec.d))
    if direction == "inverse":
        if not isinstance(f, SpectralField):
            raise GridError("inverse transform expects a SpectralField")
        return GridFunction(f.spec, ifft(f.coefficients, f.spec.d))
    raise GridError(f"unknown direction {direction!r}")


def bump_profile(r):
    """``exp(1 - 1/(1 - r^2))`` for ``|r| < 1``, else 0."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def bump_profile_derivative(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    ri = r[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ri**2)) * (-2.0 * ri / (1.0 - ri**2) ** 2)
    return out


def bump(spec: GridSpec, center=None, radius: float | None = None) -> GridFunction:
    """Smooth bump of the given radius; defaults to the domain centre and radius ``L/8``."""
    c = spec.center if center is None else np.atleast_1d(np.asarray(center, dtype=float))
    if radius is None:
        radius = spec.L / 8
    if c.shape != (spec.d,):
        raise GridError(f"center must have {spec.d} coordinates")
    if radius <= 0 or np.any(c - radius <= 0) or np.any(c + radius >= spec.L):
        raise GridError("bump ball does not fit strictly inside the fundamental domain")
    r = np.linalg.norm(spec.nodes() - c, axis=1) / radius
    return GridFunction(spec, bump_profile(r).reshape(spec.shape))


def inner(f, g, spec: GridSpec | None = None) -> complex:
    """Quadrature inner product ``sum conj(f) g (L/n)^d``."""
    if spec is None:
        if isinstance(f, GridFunction):
            spec = f.spec
        elif isinstance(g, GridFunction):
            spec = g.spec
        else:
            raise GridError("spec required for plain arrays")
    if isinstance(f, GridFunction) and isinstance(g, GridFunction) and f.spec != g.spec:
        raise GridError("inner product of functions on different grids")
    a = spec.as_values(f).ravel()
    b = spec.as_values(g).ravel()
    return complex(np.vdot(a, b) * spec.cell_volume)


def norm(f, spec: GridSpec | None = None) -> float:
    return float(np.sqrt(max(inner(f, f, spec).real, 0.0)))


# --- trigonometric interpolation ---------------------------------------------


def interpolation_basis(n: int, L: float, x: np.ndarray) -> np.ndarray:
    """Evaluation matrix ``E[j, k]`` of the 1-D Fourier modes at points ``x``.

    Column ``k`` (FFT order) holds ``exp(i w_k x)``; the Nyquist column holds
    ``cos(w x)`` so real data interpolate to real functions.
    """
    x = np.asarray(x, dtype=float).ravel()
    k = np.fft.fftfreq(n, d=1.0 / n)
    w = 2 * np.pi * k / L
    E = np.exp(1j * np.outer(x, w))
    E[:, n // 2] = np.cos(2 * np.pi * (n // 2) / L * x)
    return E


def interpolation_kernel(n: int, L: float, x: np.ndarray) -> np.ndarray:
    """Matrix ``K`` with ``K @ v`` the trig interpolant of nodal values ``v`` at ``x``."""
    E = interpolation_basis(n, L, x)
    return E @ (np.fft.fft(np.eye(n), axis=0) / n)


def trig_interpolate(spec: GridSpec, values: np.ndarray, points: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Evaluate the trigonometric interpolant of nodal ``values`` at ``points``.

    ``values`` has shape ``spec.shape`` or ``spec.shape + (B,)``; ``points`` has
    shape ``(m, d)``. Returns shape ``(m,)`` or ``(m, B)``.
    """
    d, n = spec.d, spec.n
    v = np.asarray(values)
    batched = v.ndim == d + 1
    if not batched:
        v = v[..., None]
    if v.shape[:d] != spec.shape:
        raise GridError("values do not match the grid")
    pts = np.asarray(points, dtype=float).reshape(-1, d)
    C = np.fft.fftn(v, axes=tuple(range(d))) / spec.total
    out = np.empty((pts.shape[0], v.shape[-1]), dtype=complex)
    for start in range(0, pts.shape[0], chunk):
        p = pts[start : start + chunk]
        bases = [interpolation_basis(n, spec.L, p[:, a]) for a in range(d)]
        out[start : start + chunk] = evaluate_modes(bases, C)
    if np.isrealobj(values):
        out = out.real
    return out if batched else out[:, 0]


def evaluate_modes(bases, C: np.ndarray, max_elems: int = 2**24) -> np.ndarray:
    """``sum_k C[k, b] prod_a bases[a][j, k_a]`` for ``C`` of shape ``(n,)*d + (B,)``.

    Uses matrix products only; the batch axis is chunked to bound memory.
    """
    if len(bases) == 1:
        return bases[0] @ C
    Ex, Ey = bases
    m, n = Ex.shape
    B = C.shape[-1]
    out = np.empty((m, B), dtype=complex)
    step = max(1, max_elems // (m * n))
    for b0 in range(0, B, step):
        Cb = C[:, :, b0 : b0 + step]
        nb = Cb.shape[-1]
        T = Ey @ np.transpose(Cb, (1, 0, 2)).reshape(n, n * nb)
        out[:, b0 : b0 + nb] = np.einsum("jx,jxb->jb", Ex, T.reshape(m, n, nb))
    return out


def spectral_derivative(spec: GridSpec, values: np.ndarray, axis: int) -> np.ndarray:
    """``D_k = -i d/dt_k`` applied spectrally (Nyquist mode zeroed)."""
    w = spec.freq_axis().copy()
    w[spec.n // 2] = 0.0
    shape = [1] * spec.d
    shape[axis] = spec.n
    v = spec.as_values(values)
    return np.fft.ifftn(w.reshape(shape) * np.fft.fftn(v))
