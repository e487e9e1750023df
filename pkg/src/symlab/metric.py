"""Riemannian metric fields sampled on a grid."""

from __future__ import annotations

import numpy as np

from .grid import GridSpec


class MetricError(ValueError):
    """Metric values are not symmetric positive definite within the declared bounds."""


class MetricField:
    """SPD matrix per grid node, stored with shape ``spec.shape + (d, d)``.

    ``kappa`` bounds the eigenvalues to ``[1/kappa, kappa]``; when omitted it is
    taken from the data.
    """

    def __init__(self, spec: GridSpec, values, kappa: float | None = None, constant_outside=None):
        self.spec = spec
        d = spec.d
        g = np.asarray(values, dtype=float)
        if g.shape == (d, d):
            g = np.broadcast_to(g, spec.shape + (d, d))
        if g.shape == (spec.total, d, d):
            g = g.reshape(spec.shape + (d, d))
        if g.shape != spec.shape + (d, d):
            raise MetricError(f"metric values must have shape {spec.shape + (d, d)}, got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise MetricError("metric has non-finite entries")
        flat = g.reshape(-1, d, d)
        asym = np.max(np.abs(flat - np.swapaxes(flat, 1, 2)))
        if asym > 1e-12 * max(1.0, np.max(np.abs(flat))):
            raise MetricError(f"metric is not symmetric (deviation {asym:.3g})")
        eig = np.linalg.eigvalsh(flat)
        lo, hi = float(eig.min()), float(eig.max())
        if lo <= 0:
            raise MetricError("metric is not positive definite")
        bound = max(hi, 1.0 / lo)
        if kappa is None:
            kappa = bound
        elif bound > kappa * (1 + 1e-12):
            raise MetricError(f"metric eigenvalues [{lo:.3g}, {hi:.3g}] violate the bound kappa={kappa}")
        self.kappa = float(kappa)
        self.eigen_range = (lo, hi)
        self.values = np.array(g)
        self.values.setflags(write=False)
        self.constant_outside = np.eye(d) if constant_outside is None else np.asarray(constant_outside, dtype=float)

    @classmethod
    def flat(cls, spec: GridSpec) -> "MetricField":
        return cls(spec, np.eye(spec.d))

    @classmethod
    def constant(cls, spec: GridSpec, G) -> "MetricField":
        G = np.asarray(G, dtype=float)
        return cls(spec, G, constant_outside=G)

    @classmethod
    def conformal(cls, spec: GridSpec, u) -> "MetricField":
        """``g = exp(2u) I`` for a real grid function ``u``."""
        u = np.real(np.asarray(spec.as_values(u), dtype=complex))
        g = np.exp(2 * u)[..., None, None] * np.eye(spec.d)
        return cls(spec, g)

    @classmethod
    def from_function(cls, spec: GridSpec, fn, **kw) -> "MetricField":
        """Sample ``fn(points) -> (m, d, d)``."""
        return cls(spec, np.asarray(fn(spec.nodes()), dtype=float), **kw)

    @property
    def is_constant(self) -> bool:
        flat = self.values.reshape(-1, self.spec.d, self.spec.d)
        return bool(np.all(flat == flat[0]))

    def flat_values(self) -> np.ndarray:
        return self.values.reshape(-1, self.spec.d, self.spec.d)

    def inverse(self) -> np.ndarray:
        """``g^{-1}`` per node, shape ``(total, d, d)``."""
        return np.linalg.inv(self.flat_values())

    def sqrt_det(self) -> np.ndarray:
        """Riemannian density ``det(g)^{1/2}`` per node, flat."""
        return np.sqrt(np.linalg.det(self.flat_values()))

    def inverse_eigen_range(self) -> tuple:
        lo, hi = self.eigen_range
        return 1.0 / hi, 1.0 / lo
