"""Symbols on base x directions, cotangent pullbacks, and wave-packet probing.

A sampled :class:`Symbol` stores one value per (grid node, direction) and is
evaluated elsewhere by trigonometric interpolation in the base and in angle.
A :class:`FunctionSymbol` wraps an exact callable, so pullbacks compose exactly.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffeo import Diffeo
from .directions import DirectionSet, as_direction_function
from .grid import GridFunction, GridSpec, bump_profile, trig_interpolate
from .linop import LinOp


class SymbolError(ValueError):
    """Mismatched symbols or invalid probe configuration."""


class Symbol:
    """Sampled symbol; ``values`` has shape ``(spec.total, dirs.count)``."""

    def __init__(self, spec: GridSpec, dirs: DirectionSet, values):
        v = np.array(values, copy=True)
        if v.size != spec.total * dirs.count:
            raise SymbolError(f"expected {spec.total}x{dirs.count} values, got {v.size}")
        if dirs.d != spec.d:
            raise SymbolError("direction set and grid differ in dimension")
        self.spec, self.dirs = spec, dirs
        self.values = v.reshape(spec.total, dirs.count)
        self.values.setflags(write=False)

    def evaluate(self, t, s) -> np.ndarray:
        """Value at base points ``t`` and (not necessarily unit) directions ``s``, both ``(m, d)``."""
        t = np.asarray(t, dtype=float).reshape(-1, self.spec.d)
        s = self.dirs.normalize(s)
        base = trig_interpolate(self.spec, self.values.reshape(self.spec.shape + (self.dirs.count,)), t)
        return self.dirs.interpolate(base, s)

    __call__ = evaluate

    def _check(self, other: "Symbol"):
        if not isinstance(other, Symbol) or other.spec != self.spec or other.dirs != self.dirs:
            raise SymbolError("symbols live on different grids or direction sets")

    def __add__(self, other):
        self._check(other)
        return Symbol(self.spec, self.dirs, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return Symbol(self.spec, self.dirs, self.values - other.values)

    def __mul__(self, other):
        if isinstance(other, Symbol):
            self._check(other)
            return Symbol(self.spec, self.dirs, self.values * other.values)
        return Symbol(self.spec, self.dirs, self.values * other)

    __rmul__ = __mul__

    def conj(self) -> "Symbol":
        return Symbol(self.spec, self.dirs, np.conj(self.values))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def direction_variance(self) -> float:
        """Max over base points of the variance across directions."""
        return float(np.max(np.var(self.values, axis=1)))

    def position_variance(self) -> float:
        return float(np.max(np.var(self.values, axis=0)))

    def to_csv(self, path) -> Path:
        rows = []
        nodes = self.spec.nodes()
        for j in range(self.spec.total):
            for m in range(self.dirs.count):
                v = self.values[j, m]
                rows.append([*nodes[j], m, float(np.real(v)), float(np.imag(v))])
        return write_symbol_csv(path, self.spec.d, rows)


class FunctionSymbol:
    """Exact symbol ``fn(t, s)`` with ``t, s`` of shape ``(m, d)`` and ``s`` unit."""

    def __init__(self, spec: GridSpec, fn, dirs: DirectionSet | None = None):
        self.spec = spec
        self.dirs = DirectionSet(spec.d) if dirs is None else dirs
        self.fn = fn

    def evaluate(self, t, s) -> np.ndarray:
        t = np.asarray(t, dtype=float).reshape(-1, self.spec.d)
        return np.asarray(self.fn(t, self.dirs.normalize(s)))

    __call__ = evaluate

    def sample(self) -> Symbol:
        nodes = self.spec.nodes()
        M = self.dirs.count
        t = np.repeat(nodes, M, axis=0)
        s = np.tile(self.dirs.vectors, (self.spec.total, 1))
        return Symbol(self.spec, self.dirs, self.evaluate(t, s).reshape(self.spec.total, M))

    def __add__(self, other):
        return FunctionSymbol(self.spec, lambda t, s: self.fn(t, s) + other.evaluate(t, s), self.dirs)

    def __mul__(self, other):
        if isinstance(other, (Symbol, FunctionSymbol)):
            return FunctionSymbol(self.spec, lambda t, s: self.fn(t, s) * other.evaluate(t, s), self.dirs)
        return FunctionSymbol(self.spec, lambda t, s: self.fn(t, s) * other, self.dirs)

    __rmul__ = __mul__

    def conj(self) -> "FunctionSymbol":
        return FunctionSymbol(self.spec, lambda t, s: np.conj(self.fn(t, s)), self.dirs)


def as_sampled(q) -> Symbol:
    if isinstance(q, Symbol):
        return q
    if isinstance(q, FunctionSymbol):
        return q.sample()
    raise SymbolError(f"not a symbol: {type(q).__name__}")


def symbol_of_mult(f: GridFunction, dirs: DirectionSet | None = None) -> Symbol:
    """``f (x) 1``."""
    dirs = DirectionSet(f.spec.d) if dirs is None else dirs
    vals = np.repeat(f.values.reshape(-1, 1), dirs.count, axis=1)
    return Symbol(f.spec, dirs, vals)


def symbol_of_dir(g, spec: GridSpec, dirs: DirectionSet | None = None) -> Symbol:
    """``1 (x) g``."""
    dirs = DirectionSet(spec.d) if dirs is None else dirs
    row = np.asarray(as_direction_function(g, dirs)(dirs.vectors)).ravel()
    return Symbol(spec, dirs, np.tile(row, (spec.total, 1)))


def symbol_algebra(a, b=None, op: str = "add", scale: complex = 1.0):
    """Pointwise ``add``, ``mul``, ``conjugate`` (of ``a``) or ``scale`` (``a * scale``)."""
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    if op == "conjugate":
        return a.conj()
    if op == "scale":
        return a * scale
    raise SymbolError(f"unknown operation {op!r}")


# --- cotangent pullbacks ---------------------------------------------------------


def max_stretch(phi: Diffeo) -> float:
    """Largest singular value of ``J`` or ``J^{-1}`` over the grid nodes."""
    sv = np.linalg.svd(phi.jacobian(phi.spec.nodes()), compute_uv=False)
    return float(max(sv.max(), 1.0 / sv.min()))


def theta_map(phi: Diffeo, t, s):
    """``(Phi^{-1} t, O_{J^T} s)`` with ``O_A s = A s / |A s|`` and ``J`` taken at ``Phi^{-1} t``."""
    t = np.asarray(t, dtype=float).reshape(-1, phi.spec.d)
    s = np.asarray(s, dtype=float).reshape(-1, phi.spec.d)
    pre, v = xi_map(phi, t, s)
    return pre, v / np.linalg.norm(v, axis=1, keepdims=True)


def xi_map(phi: Diffeo, t, s):
    """``(Phi^{-1} t, J^T(Phi^{-1} t) s)`` (linear in ``s``)."""
    t = np.asarray(t, dtype=float).reshape(-1, phi.spec.d)
    s = np.asarray(s, dtype=float).reshape(-1, phi.spec.d)
    pre = phi.inverse(t)
    J = phi.jacobian(pre)
    return pre, np.einsum("mji,mj->mi", J, s)


def theta_pullback(a, phi: Diffeo):
    """``a o Theta_Phi``; exact composition for FunctionSymbol, interpolation for Symbol."""
    if a.spec != phi.spec:
        raise SymbolError("symbol and diffeomorphism live on different grids")
    if isinstance(a, FunctionSymbol):
        if phi.is_identity:
            return a
        return FunctionSymbol(a.spec, lambda t, s: a.evaluate(*theta_map(phi, t, s)), a.dirs)
    if phi.is_identity:
        return Symbol(a.spec, a.dirs, a.values)
    spec, dirs = a.spec, a.dirs
    M = dirs.count
    t = np.repeat(spec.nodes(), M, axis=0)
    s = np.tile(dirs.vectors, (spec.total, 1))
    return Symbol(spec, dirs, a.evaluate(*theta_map(phi, t, s)).reshape(spec.total, M))


def xi_equivalence_check(a, phi: Diffeo, t, s) -> float:
    """Max ``|a(Theta(t, s/|s|)) - a_hom(Xi(t, s))|`` over samples with ``s != 0``."""
    s = np.asarray(s, dtype=float).reshape(-1, phi.spec.d)
    if np.any(np.linalg.norm(s, axis=1) == 0):
        raise SymbolError("samples must avoid s = 0")
    u = s / np.linalg.norm(s, axis=1, keepdims=True)
    lhs = a.evaluate(*theta_map(phi, t, u))
    pre, v = xi_map(phi, t, s)
    rhs = a.evaluate(pre, v)  # evaluate() normalises directions: homogeneous extension
    return float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0


# --- probing -------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeParams:
    """Packet width, frequency schedule (angular units) and samples ``(t0, s0)``.

    ``width_ratio`` adds a second packet of width ``ratio * packet_width`` and
    removes the ``O(w^2)`` spatial-averaging error; ``None`` disables it.
    """

    packet_width: float
    frequency_scale: tuple
    sample_points: tuple = ()
    width_ratio: float | None = 0.5

    @classmethod
    def default(cls, spec: GridSpec, samples=(), stretch: float = 1.0) -> "ProbeParams":
        """Standard schedule; ``stretch`` divides the frequencies so that operators
        conjugated by a map with ``|J| <= stretch`` stay within the band limit."""
        w = spec.L * spec.n ** (-1.0 / 3.0)
        base = 2 * np.pi / (spec.L * max(1.0, stretch))
        scale = tuple(base * spec.n / q for q in (16, 8, 4))
        return cls(w, scale, tuple((np.asarray(t, float), np.asarray(s, float)) for t, s in samples))

    def with_samples(self, samples) -> "ProbeParams":
        return ProbeParams(self.packet_width, self.frequency_scale, tuple((np.asarray(t, float), np.asarray(s, float)) for t, s in samples), self.width_ratio)

    def validate(self, spec: GridSpec, t0=None):
        lam = np.asarray(self.frequency_scale, dtype=float)
        if lam.size < 2 or np.any(np.diff(lam) <= 0) or lam[0] <= 0:
            raise SymbolError("frequency_scale must be increasing, positive, with at least two entries")
        nyq = (spec.n / 4) * 2 * np.pi / spec.L
        if lam[-1] > nyq * (1 + 1e-12):
            raise SymbolError(f"packet bandwidth {lam[-1]:.4g} exceeds the n/4 limit {nyq:.4g}")
        if t0 is not None:
            t0 = np.asarray(t0, dtype=float)
            w = self.packet_width
            if np.any(t0 - w <= 0) or np.any(t0 + w >= spec.L):
                raise SymbolError(f"packet at {t0} is not supported inside the fundamental domain")


@dataclass(frozen=True)
class ProbeResult:
    estimate: complex
    convergence: list
    combined: list = field(default_factory=list)

    @property
    def residual(self) -> float:
        return float(abs(self.combined[-1] - self.estimate)) if self.combined else 0.0


def _packets(spec: GridSpec, t0, s0, p: ProbeParams) -> np.ndarray:
    t = spec.nodes()
    widths = [p.packet_width] + ([p.packet_width * p.width_ratio] if p.width_ratio else [])
    cols = []
    for lam in p.frequency_scale:
        carrier = np.exp(1j * lam * ((t - t0) @ s0))
        for w in widths:
            v = carrier * bump_profile(np.linalg.norm(t - t0, axis=1) / w)
            cols.append(v / np.sqrt(np.sum(np.abs(v) ** 2) * spec.cell_volume))
    return np.stack(cols, axis=-1)


def _extrapolate(raw: np.ndarray, p: ProbeParams):
    """Width Richardson per frequency, then a least-squares fit in ``1/lambda``."""
    lam = np.asarray(p.frequency_scale, dtype=float)
    if p.width_ratio:
        r2 = p.width_ratio**2
        wide, narrow = raw[0::2], raw[1::2]
        combined = (narrow - r2 * wide) / (1 - r2)
        conv = wide
    else:
        combined = conv = raw
    A = np.stack([np.ones_like(lam), 1.0 / lam], axis=1)
    coef = np.linalg.lstsq(A, combined, rcond=None)[0]
    return complex(coef[0]), conv, combined


def probe_symbol(T: LinOp, t0, s0, p: ProbeParams) -> ProbeResult:
    """Extrapolated ``<xi, T xi>`` for normalised packets concentrated at ``(t0, s0)``."""
    spec = T.spec
    t0 = np.atleast_1d(np.asarray(t0, dtype=float))
    s0 = np.atleast_1d(np.asarray(s0, dtype=float))
    spec.node_index(t0)
    if abs(np.linalg.norm(s0) - 1) > 1e-12:
        raise SymbolError("s0 must be a unit direction")
    p.validate(spec, t0)
    X = _packets(spec, t0, s0, p)
    TX = T.apply(X)
    raw = np.sum(np.conj(X) * TX, axis=0) * spec.cell_volume
    est, conv, comb = _extrapolate(raw, p)
    return ProbeResult(est, [complex(v) for v in conv], [complex(v) for v in comb])


@dataclass(frozen=True)
class SymbolSamples:
    """Probed symbol values at sample points."""

    points: np.ndarray
    directions: np.ndarray
    values: np.ndarray
    convergence: np.ndarray
    max_residual: float
    dirs: DirectionSet | None = None

    def to_csv(self, path) -> Path:
        d = self.points.shape[1]
        rows = []
        for t, s, v in zip(self.points, self.directions, self.values):
            idx = self.dirs.index_of(s) if self.dirs is not None else -1
            rows.append([*t, idx, float(np.real(v)), float(np.imag(v))])
        return write_symbol_csv(path, d, rows)


def estimate_symbol_field(T: LinOp, p: ProbeParams, dirs: DirectionSet | None = None, batch: int = 8) -> SymbolSamples:
    """Probe every sample of ``p``; operator applications are batched across samples."""
    spec = T.spec
    dirs = DirectionSet(spec.d) if dirs is None else dirs
    samples = list(p.sample_points)
    if not samples:
        raise SymbolError("no sample points given")
    for t0, s0 in samples:
        spec.node_index(t0)
        dirs.index_of(s0)
        p.validate(spec, t0)
    vals, convs, resid = [], [], 0.0
    for b0 in range(0, len(samples), batch):
        chunk = samples[b0 : b0 + batch]
        X = np.concatenate([_packets(spec, np.atleast_1d(t0), np.atleast_1d(s0), p) for t0, s0 in chunk], axis=1)
        TX = T.apply(X)
        raw = np.sum(np.conj(X) * TX, axis=0) * spec.cell_volume
        per = raw.size // len(chunk)
        for i in range(len(chunk)):
            est, conv, comb = _extrapolate(raw[i * per : (i + 1) * per], p)
            vals.append(est)
            convs.append(conv)
            resid = max(resid, float(abs(comb[-1] - est)))
    pts = np.array([np.atleast_1d(t) for t, _ in samples], dtype=float)
    drs = np.array([np.atleast_1d(s) for _, s in samples], dtype=float)
    return SymbolSamples(pts, drs, np.array(vals), np.array(convs), resid, dirs)


def interior_samples(spec: GridSpec, count: int, rng, radius: float | None = None, center=None, dirs: DirectionSet | None = None):
    """Random ``(node, direction)`` pairs with nodes within ``radius`` of ``center``."""
    dirs = DirectionSet(spec.d) if dirs is None else dirs
    c = spec.center if center is None else np.asarray(center, dtype=float)
    R = spec.L / 5 if radius is None else radius
    nodes = spec.nodes()
    pool = np.flatnonzero(np.linalg.norm(nodes - c, axis=1) <= R)
    pick = rng.choice(pool, size=count, replace=count > pool.size)
    js = rng.integers(0, dirs.count, size=count)
    return [(nodes[i].copy(), dirs.vectors[j].copy()) for i, j in zip(pick, js)]


def write_symbol_csv(path, d: int, rows) -> Path:
    """Atomically write rows ``(t..., direction index, re, im)`` with a header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = [f"t{a}" for a in range(d)] + ["direction", "re", "im"]
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if i != d else int(x) for i, x in enumerate(r)])
    os.replace(tmp, path)
    return path
