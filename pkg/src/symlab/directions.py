"""Sampled unit spheres: the two-point set in 1-D and equispaced circle angles in 2-D."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DirectionSet:
    d: int
    count: int = 16
    vectors: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.d == 1:
            object.__setattr__(self, "count", 2)
            vecs = np.array([[-1.0], [1.0]])
        elif self.d == 2:
            if self.count < 4 or self.count % 4:
                raise ValueError(f"direction count must be a positive multiple of 4, got {self.count}")
            th = self.angles
            vecs = np.stack([np.cos(th), np.sin(th)], axis=-1)
        else:
            raise ValueError(f"dimension must be 1 or 2, got {self.d}")
        vecs.setflags(write=False)
        object.__setattr__(self, "vectors", vecs)

    @property
    def angles(self) -> np.ndarray:
        if self.d != 2:
            raise AttributeError("angles are defined for d = 2 only")
        return 2 * np.pi * np.arange(self.count) / self.count

    @property
    def weights(self) -> np.ndarray:
        """Uniform quadrature weights summing to the sphere's measure (2 or 2 pi)."""
        total = 2.0 if self.d == 1 else 2 * np.pi
        return np.full(self.count, total / self.count)

    def index_of(self, s, atol: float = 1e-9) -> int:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if s.shape != (self.d,):
            raise ValueError(f"direction must have {self.d} components")
        dist = np.linalg.norm(self.vectors - s / np.linalg.norm(s), axis=1)
        j = int(np.argmin(dist))
        if dist[j] > atol:
            raise ValueError(f"{s} is not in the direction set")
        return j

    def normalize(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float).reshape(-1, self.d)
        return s / np.linalg.norm(s, axis=1, keepdims=True)

    def interpolate(self, samples: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Evaluate direction samples (last axis = direction) at unit directions ``s``.

        Returns shape ``samples.shape[:-1]`` if ``samples`` and ``s`` describe one point
        each, otherwise the leading axes of ``samples`` must match ``len(s)``.
        In 1-D this picks the sign; in 2-D it uses trigonometric interpolation in angle.
        """
        samples = np.asarray(samples)
        s = np.asarray(s, dtype=float).reshape(-1, self.d)
        if self.d == 1:
            idx = (s[:, 0] > 0).astype(int)
            return np.take_along_axis(samples, idx.reshape(samples.shape[:-1] + (1,)), axis=-1)[..., 0]
        M = self.count
        theta = np.arctan2(s[:, 1], s[:, 0])
        C = np.fft.fft(samples, axis=-1) / M
        k = np.fft.fftfreq(M, d=1.0 / M)
        E = np.exp(1j * theta.reshape(samples.shape[:-1] + (1,)) * k)
        E[..., M // 2] = np.cos(theta.reshape(samples.shape[:-1]) * (M // 2))
        out = np.sum(C * E, axis=-1)
        return out.real if np.isrealobj(samples) else out


def as_direction_function(g, dirs: DirectionSet):
    """Callable on unit vectors ``(m, d)`` from a callable, a scalar, or per-direction samples."""
    if callable(g):
        return g
    arr = np.asarray(g)
    if arr.ndim == 0:
        return lambda s: np.full(np.asarray(s).reshape(-1, dirs.d).shape[0], arr[()])
    if arr.shape != (dirs.count,):
        raise ValueError(f"expected {dirs.count} direction samples, got shape {arr.shape}")
    return lambda s: dirs.interpolate(np.broadcast_to(arr, (np.asarray(s).reshape(-1, dirs.d).shape[0], dirs.count)), s)
