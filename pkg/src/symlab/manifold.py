"""Desk-scale manifolds (circle, flat 2-torus) with atlases, densities, metrics,
good partitions of unity and the chart-patched principal symbol.

The manifold is sampled on the torus grid of side ``ell``; every chart window is
a grid of the same resolution whose nodes coincide with manifold nodes, so
transferring an operator to a chart is a re-indexing of its nodal matrix.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .directions import DirectionSet
from .grid import GridSpec, bump_profile, make_grid
from .linop import DenseOp, LinOp, _check_cap
from .metric import MetricField
from .operators import compactness_score, singular_values
from .symbol import ProbeParams, Symbol, estimate_symbol_field
from .trace import calibrate_cd, weighted_residue


class ManifoldError(ValueError):
    """Invalid atlas, partition or localisation request."""


def _wrap(y, ell: float):
    return (np.asarray(y, dtype=float) + ell / 2) % ell - ell / 2


# --- charts and atlases ----------------------------------------------------------


@dataclass(frozen=True)
class Chart:
    """Chart ``h(x) = scale * (wrap(x - center) + ell/2)`` on ``U = {|wrap(x - center)|_inf < half_width}``."""

    index: int
    center: np.ndarray
    half_width: float
    scale: float
    ell: float
    spec: GridSpec

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.spec.d)
        return np.all(np.abs(_wrap(x - self.center, self.ell)) < self.half_width, axis=1)

    def h(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.spec.d)
        return self.scale * (_wrap(x - self.center, self.ell) + self.ell / 2)

    def h_inverse(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float).reshape(-1, self.spec.d)
        return (t / self.scale - self.ell / 2 + self.center) % self.ell

    def jacobian(self, x) -> np.ndarray:
        """``dh`` at manifold points, shape ``(m, d, d)``."""
        m = np.asarray(x).reshape(-1, self.spec.d).shape[0]
        return np.broadcast_to(self.scale * np.eye(self.spec.d), (m, self.spec.d, self.spec.d)).copy()

    def in_image(self, t, margin: float = 0.0) -> np.ndarray:
        """Chart points at least ``margin`` (chart units) inside the image of ``U``."""
        t = np.asarray(t, dtype=float).reshape(-1, self.spec.d)
        mid = self.scale * self.ell / 2
        return np.all(np.abs(t - mid) <= self.scale * self.half_width - margin, axis=1)

    def node_map(self) -> np.ndarray:
        """``perm[j]`` = chart node index of manifold node ``j``."""
        n, d = self.spec.n, self.spec.d
        shift = np.rint(self.center / (self.ell / n)).astype(int)
        idx = np.indices((n,) * d).reshape(d, -1).T
        chart = (idx - shift + n // 2) % n
        return np.ravel_multi_index(tuple(chart.T), (n,) * d)


@dataclass
class Atlas:
    kind: str
    ell: float
    n: int
    charts: list
    spec: GridSpec = field(init=False)

    def __post_init__(self):
        self.spec = make_grid(self.charts[0].spec.d, self.n, self.ell)

    @property
    def d(self) -> int:
        return self.spec.d

    def transition(self, i: int, j: int, t) -> np.ndarray:
        """``Phi_ij = h_j o h_i^{-1}`` on chart-``i`` points."""
        return self.charts[j].h(self.charts[i].h_inverse(t))

    def transition_jacobian(self, i: int, j: int, t) -> np.ndarray:
        x = self.charts[i].h_inverse(t)
        Jj = self.charts[j].jacobian(x)
        Ji = self.charts[i].jacobian(x)
        return Jj @ np.linalg.inv(Ji)

    def overlap_nodes(self, *ids) -> np.ndarray:
        x = self.spec.nodes()
        mask = np.ones(len(x), dtype=bool)
        for i in ids:
            mask &= self.charts[i].contains(x)
        return np.flatnonzero(mask)

    def overlap_components(self, i: int, j: int) -> int:
        """Connected components of ``U_i ∩ U_j`` (1-D: runs on the periodic node ring)."""
        if self.d != 1:
            raise ManifoldError("component counting is implemented for the circle")
        mask = np.zeros(self.n, dtype=bool)
        mask[self.overlap_nodes(i, j)] = True
        if mask.all():
            return 1
        return int(np.count_nonzero(mask & ~np.roll(mask, 1)))

    def covers(self) -> bool:
        x = self.spec.nodes()
        return bool(np.all(np.any([c.contains(x) for c in self.charts], axis=0)))


def build_atlas(kind: str, n: int, ell: float = 2 * np.pi, half_width: float = 0.45, scales=None) -> Atlas:
    """``circle`` (2 arc charts) or ``flat-torus-2d`` (4 product charts).

    ``half_width`` is a fraction of ``ell``. ``scales`` gives per-chart coordinate
    stretch factors (default 1, i.e. translations).
    """
    if n < 8 or n & (n - 1):
        raise ManifoldError(f"n must be a power of two >= 8, got {n}")
    if not 0.25 < half_width < 0.5:
        raise ManifoldError("half_width must lie in (0.25, 0.5) for the two-centre cover")
    if kind == "circle":
        centers = [np.array([0.0]), np.array([ell / 2])]
    elif kind == "flat-torus-2d":
        centers = [np.array(c) for c in itertools.product([0.0, ell / 2], repeat=2)]
    else:
        raise ManifoldError(f"unsupported manifold kind {kind!r}")
    scales = [1.0] * len(centers) if scales is None else [float(s) for s in scales]
    if len(scales) != len(centers) or min(scales) <= 0:
        raise ManifoldError(f"need {len(centers)} positive chart scales")
    d = centers[0].size
    charts = [
        Chart(k, c, half_width * ell, s, ell, make_grid(d, n, s * ell)) for k, (c, s) in enumerate(zip(centers, scales))
    ]
    return Atlas(kind, ell, n, charts)


def cocycle_residual(atlas: Atlas) -> float:
    """Max ``|Phi_jk(Phi_ij(t)) - Phi_ik(t)|`` over triple-overlap nodes (chart-``i`` coordinates)."""
    worst = 0.0
    m = len(atlas.charts)
    x = atlas.spec.nodes()
    for i, j, k in itertools.product(range(m), repeat=3):
        idx = atlas.overlap_nodes(i, j, k)
        if idx.size == 0:
            continue
        t = atlas.charts[i].h(x[idx])
        lhs = atlas.transition(j, k, atlas.transition(i, j, t))
        rhs = atlas.transition(i, k, t)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def chain_rule_residual(atlas: Atlas) -> float:
    """Max ``|J_ik(t) - J_jk(Phi_ij t) J_ij(t)|`` over triple overlaps."""
    worst = 0.0
    m = len(atlas.charts)
    x = atlas.spec.nodes()
    for i, j, k in itertools.product(range(m), repeat=3):
        idx = atlas.overlap_nodes(i, j, k)
        if idx.size == 0:
            continue
        t = atlas.charts[i].h(x[idx])
        lhs = atlas.transition_jacobian(i, k, t)
        rhs = atlas.transition_jacobian(j, k, atlas.transition(i, j, t)) @ atlas.transition_jacobian(i, j, t)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def transition_residual(atlas: Atlas) -> float:
    """Max ``|Phi_ij(h_i x) - h_j x|`` and ``|h_i(h_i^{-1} t) - t|`` over overlaps."""
    worst = 0.0
    x = atlas.spec.nodes()
    for ci, cj in itertools.product(atlas.charts, repeat=2):
        idx = atlas.overlap_nodes(ci.index, cj.index)
        t = ci.h(x[idx])
        worst = max(worst, float(np.max(np.abs(atlas.transition(ci.index, cj.index, t) - cj.h(x[idx])), initial=0.0)))
        worst = max(worst, float(np.max(np.abs(ci.h(ci.h_inverse(t)) - t), initial=0.0)))
    return worst


# --- densities and metrics ----------------------------------------------------------


class ManifoldMetric:
    """Metric on the manifold, ``fn(x) -> (m, d, d)`` in the global periodic coordinate."""

    def __init__(self, atlas: Atlas, fn=None):
        self.atlas = atlas
        d = atlas.d
        self.fn = fn if fn is not None else (lambda x: np.broadcast_to(np.eye(d), (len(x), d, d)).copy())

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, dtype=float).reshape(-1, self.atlas.d)), dtype=float)

    def chart_metric(self, i: int):
        """``G_i(t) = (dh^{-1})^T g(h^{-1} t) dh^{-1}`` as a callable on chart points."""
        ch = self.atlas.charts[i]

        def G(t):
            x = ch.h_inverse(t)
            Jinv = np.linalg.inv(ch.jacobian(x))
            return np.swapaxes(Jinv, 1, 2) @ self(x) @ Jinv

        return G

    def chart_metrics(self) -> list:
        return [self.chart_metric(i) for i in range(len(self.atlas.charts))]

    def chart_field(self, i: int) -> MetricField:
        spec = self.atlas.charts[i].spec
        return MetricField(spec, self.chart_metric(i)(spec.nodes()))

    def field(self) -> MetricField:
        return MetricField(self.atlas.spec, self(self.atlas.spec.nodes()))

    def volume_density(self):
        return lambda x: np.sqrt(np.linalg.det(self(x)))


class Density:
    """Positive density ``rho(x) dx`` on the manifold; chart weights ``a_i = rho o h_i^{-1} |det dh_i^{-1}|``."""

    def __init__(self, atlas: Atlas, fn=None):
        self.atlas = atlas
        self.fn = fn if fn is not None else (lambda x: np.ones(len(x)))
        vals = self(atlas.spec.nodes())
        if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
            raise ManifoldError("density must be positive and finite")

    @classmethod
    def riemannian(cls, metric: ManifoldMetric) -> "Density":
        return cls(metric.atlas, metric.volume_density())

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, dtype=float).reshape(-1, self.atlas.d)), dtype=float).ravel()

    def chart_weight(self, i: int, t) -> np.ndarray:
        ch = self.atlas.charts[i]
        x = ch.h_inverse(t)
        return self(x) / np.abs(np.linalg.det(ch.jacobian(x)))

    def node_weights(self) -> np.ndarray:
        """Quadrature weights of the global grid: ``rho(x_j) * cell``."""
        return self(self.atlas.spec.nodes()) * self.atlas.spec.cell_volume


def density_compatibility(density: Density) -> float:
    """Max relative ``|a_j(t) - a_i(Phi_ji t) |det J_ji(t)||`` over overlaps."""
    atlas = density.atlas
    x = atlas.spec.nodes()
    worst = 0.0
    for ci, cj in itertools.product(atlas.charts, repeat=2):
        idx = atlas.overlap_nodes(ci.index, cj.index)
        if idx.size == 0:
            continue
        t = cj.h(x[idx])
        aj = density.chart_weight(cj.index, t)
        J = atlas.transition_jacobian(cj.index, ci.index, t)
        ai = density.chart_weight(ci.index, atlas.transition(cj.index, ci.index, t)) * np.abs(np.linalg.det(J))
        worst = max(worst, float(np.max(np.abs(aj - ai) / np.abs(aj))))
    return worst


def check_metric_compatibility(atlas: Atlas, metrics) -> float:
    """Max over overlap nodes of ``|G_j(t) - J^T G_i(Phi_ji t) J|`` with ``J = J_{Phi_ji}(t)``."""
    x = atlas.spec.nodes()
    worst = 0.0
    for ci, cj in itertools.product(atlas.charts, repeat=2):
        if ci.index == cj.index:
            continue
        idx = atlas.overlap_nodes(ci.index, cj.index)
        if idx.size == 0:
            continue
        t = cj.h(x[idx])
        J = atlas.transition_jacobian(cj.index, ci.index, t)
        Gi = np.asarray(metrics[ci.index](atlas.transition(cj.index, ci.index, t)))
        Gj = np.asarray(metrics[cj.index](t))
        worst = max(worst, float(np.max(np.abs(Gj - np.swapaxes(J, 1, 2) @ Gi @ J))))
    return worst


def check_q_compatibility(atlas: Atlas, metrics, samples: int = 200, seed: int = 0) -> float:
    """Max ``|q_i(t, s) - q_j(Phi_ij t, J_ij^{-T} s)|`` over random cotangent samples in overlaps."""
    rng = np.random.default_rng(seed)
    x = atlas.spec.nodes()
    worst = 0.0
    for ci, cj in itertools.product(atlas.charts, repeat=2):
        if ci.index == cj.index:
            continue
        idx = atlas.overlap_nodes(ci.index, cj.index)
        if idx.size == 0:
            continue
        pick = rng.choice(idx, size=min(samples, idx.size), replace=False)
        t = ci.h(x[pick])
        s = rng.normal(size=t.shape) * 3
        J = atlas.transition_jacobian(ci.index, cj.index, t)
        s2 = np.linalg.solve(np.swapaxes(J, 1, 2), s[..., None])[..., 0]
        qi = np.einsum("mi,mij,mj->m", s, np.linalg.inv(metrics[ci.index](t)), s)
        t2 = atlas.transition(ci.index, cj.index, t)
        qj = np.einsum("mi,mij,mj->m", s2, np.linalg.inv(metrics[cj.index](t2)), s2)
        worst = max(worst, float(np.max(np.abs(qi - qj))))
    return worst


def liouville_check(atlas: Atlas, metric: ManifoldMetric | None = None, fibre_points: int = 64) -> float:
    """Relative disagreement of ``int F dm`` computed in each chart containing the support of ``F``.

    ``F(x, xi) = psi(x) exp(-|xi|_g^2) (1 + tanh(<xi, e>)/2)`` with ``psi`` a bump in
    a chart overlap; each chart integrates ``F o H_i^{-1}`` against ``dt ds``.
    """
    metric = ManifoldMetric(atlas) if metric is None else metric
    d, ell = atlas.d, atlas.ell
    worst = 0.0
    for ci, cj in itertools.combinations(atlas.charts, 2):
        idx = atlas.overlap_nodes(ci.index, cj.index)
        if idx.size == 0:
            continue
        x0 = atlas.spec.nodes()[idx[len(idx) // 2]]
        # largest ball around x0 inside the overlap
        dist = np.min([c.half_width - np.max(np.abs(_wrap(x0 - c.center, ell))) for c in (ci, cj)])
        radius = 0.9 * dist
        if radius <= 0:
            continue
        values = []
        for ch in (ci, cj):
            t = ch.spec.nodes()
            x = ch.h_inverse(t)
            psi = bump_profile(np.linalg.norm(_wrap(x - x0, ell), axis=1) / radius)
            keep = psi > 0
            t, x, psi = t[keep], x[keep], psi[keep]
            ginv = np.linalg.inv(metric(x))
            dh = ch.jacobian(x)
            S = 8.0 * ch.scale * np.sqrt(np.max(np.linalg.eigvalsh(metric(x))))
            grid1 = np.linspace(-S, S, fibre_points, endpoint=False)
            ds = grid1[1] - grid1[0]
            fib = np.stack(np.meshgrid(*([grid1] * d), indexing="ij"), axis=-1).reshape(-1, d)
            xi = np.einsum("mji,fj->mfi", dh, fib)  # xi = dh^T s
            q = np.einsum("mfi,mij,mfj->mf", xi, ginv, xi)
            F = psi[:, None] * np.exp(-q) * (1 + 0.5 * np.tanh(xi.sum(axis=-1)))
            values.append(F.sum() * ch.spec.cell_volume * ds**d)
        worst = max(worst, abs(values[0] - values[1]) / abs(values[0]))
    return float(worst)


# --- partitions of unity ------------------------------------------------------------


@dataclass(frozen=True)
class PartitionOfUnity:
    """Nodal values ``phi_n`` on the manifold grid with chart assignments."""

    atlas: Atlas
    values: np.ndarray  # (N, total)
    charts: tuple
    seed: int = 0

    def __len__(self) -> int:
        return len(self.charts)

    def sum_residual(self) -> float:
        return float(np.max(np.abs(self.values.sum(axis=0) - 1.0)))

    def support_violation(self) -> float:
        """Largest ``phi_n`` value at manifold nodes outside its chart (0 for a good partition)."""
        x = self.atlas.spec.nodes()
        worst = 0.0
        for v, i in zip(self.values, self.charts):
            out = ~self.atlas.charts[i].contains(x)
            worst = max(worst, float(np.max(np.abs(v[out]), initial=0.0)))
        return worst


def good_partition(atlas: Atlas, seed: int = 0, support: float = 0.33, jitter: float = 0.03) -> PartitionOfUnity:
    """Normalised bumps, one per chart, with seed-dependent centres and radii.

    Per axis each bump is centred at the chart centre plus ``delta`` (``|delta| <=
    jitter * ell``) with radius ``(support - |delta|/ell) * ell``; seed 0 has no jitter.
    """
    ell, d = atlas.ell, atlas.d
    if support + jitter >= atlas.charts[0].half_width / ell or support - 2 * jitter <= 0.25:
        raise ManifoldError("partition radii leave a coverage gap or leave the charts")
    rng = np.random.default_rng(seed)
    x = atlas.spec.nodes()
    raw = []
    for ch in atlas.charts:
        delta = np.zeros(d) if seed == 0 else rng.uniform(-jitter, jitter, size=d) * ell
        radius = (support * ell - np.abs(delta))
        y = _wrap(x - ch.center - delta, ell) / radius
        raw.append(np.prod(bump_profile(np.abs(y)), axis=1))
    raw = np.array(raw)
    total = raw.sum(axis=0)
    if np.any(total <= 0):
        raise ManifoldError("partition does not cover the manifold")
    return PartitionOfUnity(atlas, raw / total, tuple(range(len(atlas.charts))), seed)


def plateau_cutoff(chart: Chart, inner: float, outer: float) -> np.ndarray:
    """Nodal cutoff (manifold order) equal to 1 for ``|wrap(x - c)|_inf <= inner`` and 0 beyond ``outer``."""
    x = chart.h_inverse(chart.spec.nodes())
    y = np.max(np.abs(_wrap(x - chart.center, chart.ell)), axis=1)
    u = np.clip((y - inner) / (outer - inner), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u < 1, np.exp(-1.0 / np.maximum(1 - u, 1e-300)), 0.0)
        b = np.where(u > 0, np.exp(-1.0 / np.maximum(u, 1e-300)), 0.0)
    return (a / (a + b))[chart.node_map()]


# --- operators -------------------------------------------------------------------------


class ManifoldOperator:
    """Dense operator on nodal values of the manifold grid; adjoint taken in the ``nu``-pairing."""

    def __init__(self, atlas: Atlas, matrix, density: Density | None = None):
        _check_cap(atlas.spec)
        self.atlas = atlas
        M = matrix.dense() if isinstance(matrix, LinOp) else np.asarray(matrix)
        if M.shape != (atlas.spec.total, atlas.spec.total):
            raise ManifoldError(f"operator must be {atlas.spec.total}x{atlas.spec.total}")
        self.matrix = M
        self.density = Density(atlas) if density is None else density

    def apply(self, v) -> np.ndarray:
        return self.matrix @ np.asarray(v)

    def adjoint(self) -> "ManifoldOperator":
        w = self.density.node_weights()
        return ManifoldOperator(self.atlas, (self.matrix.conj().T * w[None, :]) / w[:, None], self.density)

    def __matmul__(self, other: "ManifoldOperator") -> "ManifoldOperator":
        return ManifoldOperator(self.atlas, self.matrix @ other.matrix, self.density)

    def __add__(self, other):
        return ManifoldOperator(self.atlas, self.matrix + other.matrix, self.density)

    def __sub__(self, other):
        return ManifoldOperator(self.atlas, self.matrix - other.matrix, self.density)

    def __mul__(self, c):
        return ManifoldOperator(self.atlas, self.matrix * c, self.density)

    __rmul__ = __mul__

    def norm(self) -> float:
        """Operator norm in ``L_2(X, nu)``."""
        r = np.sqrt(self.density.node_weights())
        return float(np.linalg.norm((self.matrix * (1 / r)[None, :]) * r[:, None], 2))

    def as_linop(self) -> DenseOp:
        return DenseOp(self.atlas.spec, self.matrix)


def manifold_mult(atlas: Atlas, psi, density: Density | None = None) -> ManifoldOperator:
    vals = np.asarray(psi(atlas.spec.nodes()) if callable(psi) else psi).ravel()
    return ManifoldOperator(atlas, np.diag(vals.astype(complex)), density)


def reflection(atlas: Atlas, density: Density | None = None) -> ManifoldOperator:
    """``xi(x) -> xi(-x)``."""
    n, d = atlas.n, atlas.d
    idx = np.indices((n,) * d).reshape(d, -1).T
    target = np.ravel_multi_index(tuple(((-idx) % n).T), (n,) * d)
    M = np.zeros((atlas.spec.total, atlas.spec.total))
    M[np.arange(atlas.spec.total), target] = 1.0
    return ManifoldOperator(atlas, M, density)


def _chart_matrix(T: ManifoldOperator, chart: Chart) -> np.ndarray:
    """``W T W^{-1}`` on chart nodal values (chart node ``p`` <-> manifold node ``perm^{-1}[p]``)."""
    perm = chart.node_map()
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return T.matrix[np.ix_(inv, inv)]


def localize_to_chart(T: ManifoldOperator, phi, chart: Chart, tol: float = 0.0) -> DenseOp:
    """``M_{sqrt(phi) o h^{-1}} (W T W^{-1}) M_{sqrt(phi) o h^{-1}}`` on the chart grid."""
    phi = np.asarray(phi, dtype=float).ravel()
    if np.any(phi < -tol):
        raise ManifoldError("cutoff must be nonnegative")
    out = ~chart.contains(T.atlas.spec.nodes())
    if np.any(np.abs(phi[out]) > tol):
        raise ManifoldError(f"cutoff is not supported in chart {chart.index}")
    perm = chart.node_map()
    root = np.zeros(perm.size)
    root[perm] = np.sqrt(np.clip(phi, 0.0, None))
    A = _chart_matrix(T, chart)
    return DenseOp(chart.spec, root[:, None] * A * root[None, :])


def adjoint_transfer_residual(T: ManifoldOperator, chart: Chart) -> float:
    """``|W T* W^{-1} - M_{a^{-1}} (W T W^{-1})^* M_a| / |T|`` on nodes inside the chart.

    ``(.)^*`` is the flat adjoint of the chart grid and ``a`` the chart density weight.
    """
    B = _chart_matrix(T, chart)
    Bstar = _chart_matrix(T.adjoint(), chart)
    t = chart.spec.nodes()
    a = T.density.chart_weight(chart.index, t)
    rhs = (B.conj().T * a[None, :]) / a[:, None]
    inside = np.flatnonzero(chart.in_image(t))
    sub = np.ix_(inside, inside)
    return float(np.max(np.abs(Bstar[sub] - rhs[sub])) / max(np.max(np.abs(T.matrix)), 1e-300))


def decomposition_residual(T: ManifoldOperator, pou: PartitionOfUnity) -> float:
    """``T - sum_n (M_r T M_r + M_r [M_r, T])`` with ``r = phi_n^{1/2}``, relative."""
    acc = np.zeros_like(T.matrix, dtype=complex)
    for v in pou.values:
        r = np.sqrt(v)
        RT = r[:, None] * T.matrix
        acc += RT * r[None, :] + r[:, None] * (RT - T.matrix * r[None, :])
    return float(np.max(np.abs(acc - T.matrix)) / max(np.max(np.abs(T.matrix)), 1e-300))


# --- global symbol --------------------------------------------------------------------


@dataclass
class GlobalSymbolReport:
    """Symbol values at manifold samples ``(x, xi)``; NaN where a chart cannot certify a value."""

    points: np.ndarray
    directions: np.ndarray
    assembled: np.ndarray
    direct: np.ndarray  # (charts, samples)
    per_chart: np.ndarray  # (charts, samples): contribution of pieces assigned to each chart
    consistency: float
    scale: float
    max_probe_residual: float

    def to_dict(self) -> dict:
        return {
            "consistency": self.consistency,
            "scale": self.scale,
            "max_probe_residual": self.max_probe_residual,
            "samples": int(len(self.points)),
        }


def _chart_probe_zone(chart: Chart, p: ProbeParams, x: np.ndarray, inner: float | None = None) -> np.ndarray:
    """Samples whose packet lies strictly inside the chart window (and inside ``inner`` if given)."""
    t = chart.h(x)
    w = p.packet_width
    ok = np.all((t - w > 0) & (t + w < chart.spec.L), axis=1)
    if inner is not None:
        ok &= np.all(np.abs(t - chart.spec.L / 2) + w <= chart.scale * inner, axis=1)
    return ok


def _chart_direction(chart: Chart, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Covector ``xi`` at ``x`` expressed in chart coordinates (``dh^{-T} xi``), normalised."""
    J = chart.jacobian(x)
    s = np.linalg.solve(np.swapaxes(J, 1, 2), xi[..., None])[..., 0]
    return s / np.linalg.norm(s, axis=1, keepdims=True)


def _probe_in_chart(B: LinOp, chart: Chart, x, xi, p: ProbeParams, dirs: DirectionSet):
    t = chart.h(x)
    s = _chart_direction(chart, x, xi)
    samples = [(ti, dirs.vectors[dirs.index_of(si)]) for ti, si in zip(t, s)]
    res = estimate_symbol_field(B, p.with_samples(samples), dirs)
    return res.values, res.max_residual


def manifold_samples(atlas: Atlas, count: int, seed: int = 0, dirs: DirectionSet | None = None):
    """Random manifold nodes and directions (directions from ``dirs``)."""
    dirs = DirectionSet(atlas.d) if dirs is None else dirs
    rng = np.random.default_rng(seed)
    j = rng.choice(atlas.spec.total, size=count, replace=False)
    k = rng.integers(0, dirs.count, size=count)
    return atlas.spec.nodes()[j], dirs.vectors[k]


def global_symbol(
    T: ManifoldOperator,
    pou: PartitionOfUnity,
    x,
    xi,
    probe: ProbeParams | None = None,
    plateau: float = 0.40,
    dirs: DirectionSet | None = None,
) -> GlobalSymbolReport:
    """Patch chart symbols ``sum_n sym_{i_n}(M_{phi_n^{1/2}} T M_{phi_n^{1/2}})`` at samples ``(x, xi)``.

    ``probe`` defaults to the standard schedule of each chart window.
    A piece contributes at ``x`` only when ``x`` lies in the probe zone of its
    chart (outside it ``phi_n`` vanishes near ``x``). The direct value in chart
    ``i`` probes ``T`` cut off by a plateau equal to 1 for
    ``|x - c_i| <= plateau * ell``; the consistency residual is the larger of the
    cross-chart direct deviation and the assembled-vs-direct deviation, divided
    by ``|T|``.
    """
    atlas = T.atlas
    dirs = DirectionSet(atlas.d) if dirs is None else dirs
    x = np.asarray(x, dtype=float).reshape(-1, atlas.d)
    xi = np.asarray(xi, dtype=float).reshape(-1, atlas.d)
    m = len(x)
    nch = len(atlas.charts)
    params = [ProbeParams.default(ch.spec) if probe is None else probe for ch in atlas.charts]
    resid = 0.0
    per_chart = np.zeros((nch, m), dtype=complex)
    for v, i in zip(pou.values, pou.charts):
        ch, p = atlas.charts[i], params[i]
        zone = _chart_probe_zone(ch, p, x)
        if not zone.any():
            continue
        B = localize_to_chart(T, v, ch)
        vals, r = _probe_in_chart(B, ch, x[zone], xi[zone], p, dirs)
        per_chart[i, zone] += vals
        resid = max(resid, r)
    assembled = per_chart.sum(axis=0)
    direct = np.full((nch, m), np.nan, dtype=complex)
    L = atlas.ell
    for ch, p in zip(atlas.charts, params):
        zone = _chart_probe_zone(ch, p, x, inner=plateau * L)
        if not zone.any():
            continue
        chi = plateau_cutoff(ch, plateau * L, 0.99 * ch.half_width)
        B = localize_to_chart(T, chi**2, ch)
        vals, r = _probe_in_chart(B, ch, x[zone], xi[zone], p, dirs)
        direct[ch.index, zone] = vals
        resid = max(resid, r)
    scale = T.norm()
    dev = 0.0
    for a, b in itertools.combinations(range(nch), 2):
        both = ~np.isnan(direct[a]) & ~np.isnan(direct[b])
        if both.any():
            dev = max(dev, float(np.max(np.abs(direct[a, both] - direct[b, both]))))
    for i in range(nch):
        ok = ~np.isnan(direct[i])
        if ok.any():
            dev = max(dev, float(np.max(np.abs(assembled[ok] - direct[i, ok]))))
    return GlobalSymbolReport(x, xi, assembled, direct, per_chart, dev / max(scale, 1e-300), scale, resid)


def pou_independence(T: ManifoldOperator, pou1: PartitionOfUnity, pou2: PartitionOfUnity, x, xi, probe=None) -> float:
    """Sup over samples of ``|global symbol via pou1 - via pou2| / |T|``."""
    r1 = global_symbol(T, pou1, x, xi, probe)
    r2 = global_symbol(T, pou2, x, xi, probe)
    return float(np.max(np.abs(r1.assembled - r2.assembled)) / max(r1.scale, 1e-300))


# --- membership ---------------------------------------------------------------------


def test_battery(atlas: Atlas, pou: PartitionOfUnity | None = None) -> list:
    """Named continuous functions ``psi`` on the manifold: low Fourier modes, an
    off-centre bump and the partition pieces."""
    x = atlas.spec.nodes()
    k0 = 2 * np.pi / atlas.ell
    off = np.linalg.norm(_wrap(x - atlas.ell / 4, atlas.ell), axis=1) / (atlas.ell / 8)
    out = [("bump", bump_profile(off))]
    for a in range(atlas.d):
        for k in (1, 2):
            out.append((f"cos{k}x{a}", np.cos(k * k0 * x[:, a])))
            out.append((f"sin{k}x{a}", np.sin(k * k0 * x[:, a])))
    if pou is not None:
        for n, v in enumerate(pou.values):
            out.append((f"phi{n}", v))
    return out


def membership_diagnostic(
    T: ManifoldOperator,
    pou: PartitionOfUnity,
    tail_threshold: float = 0.1,
    slope_threshold: float = -0.5,
    probe: ProbeParams | None = None,
) -> dict:
    """Compactness scores of ``[T, M_psi]`` over a battery and probe convergence of localised pieces."""
    atlas = T.atlas
    battery = test_battery(atlas, pou)
    rows = []
    ok = True
    for name, psi in battery:
        C = T.matrix * psi[None, :] - psi[:, None] * T.matrix
        mu = singular_values(C)
        scale = max(np.abs(psi).max() * max(T.norm(), 1e-300), 1e-300)
        if mu[0] <= 1e-12 * scale:
            rep = {"tail_ratio": 0.0, "decay_exponent": float("-inf"), "zero": True}
            passed = True
        else:
            r = compactness_score(mu)
            rep = r.to_dict()
            passed = r.tail_ratio < tail_threshold and r.decay_exponent < slope_threshold
        ok &= passed
        rows.append({"psi": name, **rep, "compact": bool(passed)})
    probes = []
    dirs = DirectionSet(atlas.d)
    for n, (v, i) in enumerate(zip(pou.values, pou.charts)):
        ch = atlas.charts[i]
        p = ProbeParams.default(ch.spec) if probe is None else probe
        B = localize_to_chart(T, v, ch)
        centre = ch.spec.center
        nodes = ch.spec.nodes()
        t0 = nodes[np.argmin(np.linalg.norm(nodes - centre, axis=1))]
        samples = [(t0, s) for s in dirs.vectors[:: max(1, dirs.count // 4)]]
        res = estimate_symbol_field(B, p.with_samples(samples), dirs)
        probes.append({"piece": n, "chart": int(i), "max_residual": res.max_residual})
    return {
        "commutators": rows,
        "probes": probes,
        "battery_size": len(battery),
        "thresholds": {"tail_ratio": tail_threshold, "decay_exponent": slope_threshold},
        "member": bool(ok),
    }


# --- trace side on the manifold ---------------------------------------------------------


def chart_symbol(atlas: Atlas, i: int, fn, phi=None, dirs: DirectionSet | None = None) -> Symbol:
    """Sample ``phi(x) fn(x, xi)`` in chart ``i``; ``fn`` takes manifold points and unit covectors."""
    ch = atlas.charts[i]
    dirs = DirectionSet(atlas.d) if dirs is None else dirs
    t = ch.spec.nodes()
    x = ch.h_inverse(t)
    J = ch.jacobian(x)
    M = dirs.count
    xs = np.repeat(x, M, axis=0)
    s = np.tile(dirs.vectors, (len(t), 1))
    xi = np.einsum("mji,mj->mi", np.repeat(J, M, axis=0), s)
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    vals = np.asarray(fn(xs, xi)).reshape(len(t), M)
    if phi is not None:
        w = np.asarray(phi, dtype=float).ravel()
        chart_w = np.zeros_like(w)
        chart_w[ch.node_map()] = w
        vals = vals * chart_w[:, None]
    return Symbol(ch.spec, dirs, vals)


def manifold_residue(atlas: Atlas, pou: PartitionOfUnity, fn, metric: ManifoldMetric) -> float:
    """``c_d sum_n int_{chart i_n} phi_n sym e^{-q_{i_n}} dt ds``."""
    total = 0.0
    for v, i in zip(pou.values, pou.charts):
        a = chart_symbol(atlas, i, fn, v)
        total += weighted_residue(a, metric.chart_field(i))
    return calibrate_cd(atlas.d) * total


__all__ = [
    "ManifoldError",
    "Chart",
    "Atlas",
    "build_atlas",
    "cocycle_residual",
    "chain_rule_residual",
    "transition_residual",
    "ManifoldMetric",
    "Density",
    "density_compatibility",
    "check_metric_compatibility",
    "check_q_compatibility",
    "liouville_check",
    "PartitionOfUnity",
    "good_partition",
    "plateau_cutoff",
    "ManifoldOperator",
    "manifold_mult",
    "reflection",
    "localize_to_chart",
    "adjoint_transfer_residual",
    "decomposition_residual",
    "GlobalSymbolReport",
    "manifold_samples",
    "global_symbol",
    "pou_independence",
    "test_battery",
    "membership_diagnostic",
    "chart_symbol",
    "manifold_residue",
]
