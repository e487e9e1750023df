"""Named experiments: configuration defaults, runners and reports.

Each runner takes a fully merged configuration dictionary and returns a list of
checks plus optional CSV tables. :func:`run` wraps a runner into a versioned
report; :func:`list_experiments` gives the stable catalogue.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass

import numpy as np

from . import expr
from .diffeo import identity_diffeo, linear_core_diffeo, radial_diffeo, swirl_diffeo
from .directions import DirectionSet
from .grid import GridFunction, GridSpec, bump, make_grid
from .linop import DenseOp
from .manifold import (
    Density,
    ManifoldMetric,
    ManifoldOperator,
    build_atlas,
    chain_rule_residual,
    check_metric_compatibility,
    check_q_compatibility,
    cocycle_residual,
    decomposition_residual,
    density_compatibility,
    global_symbol,
    good_partition,
    liouville_check,
    manifold_mult,
    manifold_residue,
    manifold_samples,
    membership_diagnostic,
    pou_independence,
    reflection,
    transition_residual,
)
from .metric import MetricField
from .operators import (
    commutator,
    compactness_score,
    conjugation_residual_D,
    conjugation_residual_lap,
    diffeo_unitary,
    dir_multiplier,
    mult_op,
    psdo_like,
    resolvent_power,
    singular_values,
)
from .symbol import (
    FunctionSymbol,
    ProbeParams,
    estimate_symbol_field,
    interior_samples,
    max_stretch,
    symbol_of_dir,
    symbol_of_mult,
    theta_pullback,
    xi_equivalence_check,
)
from .trace import (
    DEFAULT_RHO,
    calibrate_cd,
    connes_check,
    dixmier_estimate,
    dixmier_partials,
    estimate_from_values,
    resolution_floor,
)

SCHEMA = 1


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    threshold: float
    comparator: str = "<"

    @property
    def passed(self) -> bool:
        m = self.measured
        if m is None or (isinstance(m, float) and np.isnan(m)):
            return False
        if self.comparator == "<":
            return m < self.threshold
        if self.comparator == "<=":
            return m <= self.threshold
        if self.comparator == ">=":
            return m >= self.threshold
        if self.comparator == ">":
            return m > self.threshold
        if self.comparator == "==":
            return m == self.threshold
        raise ConfigError(f"unknown comparator {self.comparator!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "measured": _jsonable(self.measured),
            "threshold": _jsonable(self.threshold),
            "comparator": self.comparator,
            "pass": bool(self.passed),
        }


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if np.isnan(v) or np.isinf(v):
            return str(v)
        return v
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


@dataclass
class Outcome:
    checks: list
    details: dict
    tables: dict  # name -> (header, rows)


# --- configuration helpers --------------------------------------------------------------


def _field(cfg: dict, path: str):
    cur = cfg
    for key in path.split("."):
        if not isinstance(cur, dict) or key not in cur:
            raise ConfigError(f"missing field {path!r}")
        cur = cur[key]
    return cur


def grid_from(cfg: dict) -> GridSpec:
    g = cfg.get("grid")
    if not isinstance(g, dict):
        raise ConfigError("field 'grid' must be an object with d, n, L")
    try:
        L = g.get("L", 2 * np.pi)
        L = float(expr.Expression(L)()) if isinstance(L, str) else float(L)
        return make_grid(int(g["d"]), int(g["n"]), L)
    except KeyError as exc:
        raise ConfigError(f"missing field 'grid.{exc.args[0]}'") from None
    except ValueError as exc:
        raise ConfigError(f"field 'grid': {exc}") from None


def function_from(spec: GridSpec, desc, where: str) -> GridFunction:
    """Grid function from an expression string or ``{"bump": {"radius": r, "center": [...]}}``.

    Bump radius and centre are fractions of ``L`` (centre defaults to the middle).
    """
    if isinstance(desc, (int, float)):
        return GridFunction(spec, np.full(spec.shape, float(desc)))
    if isinstance(desc, str):
        try:
            fn = expr.point_function(desc, spec.d)
        except expr.ExprError as exc:
            raise ConfigError(f"field {where!r}: {exc}") from None
        return GridFunction.from_function(spec, fn)
    if isinstance(desc, dict) and "bump" in desc:
        b = desc["bump"] or {}
        radius = float(b.get("radius", 0.125)) * spec.L
        center = b.get("center")
        center = None if center is None else np.asarray(center, dtype=float) * spec.L
        amp = float(b.get("amplitude", 1.0))
        base = bump(spec, center=center, radius=radius)
        return GridFunction(spec, amp * base.values)
    raise ConfigError(f"field {where!r}: expected an expression or a bump description")


def direction_from(spec: GridSpec, desc, where: str):
    if isinstance(desc, (int, float)):
        return float(desc)
    if not isinstance(desc, str):
        raise ConfigError(f"field {where!r}: expected an expression in s (1-D) or theta (2-D)")
    try:
        return expr.direction_function(desc, spec.d)
    except expr.ExprError as exc:
        raise ConfigError(f"field {where!r}: {exc}") from None


def diffeo_from(spec: GridSpec, desc, where: str = "diffeo"):
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ConfigError(f"field {where!r} must be an object with a 'kind'")
    kind = desc["kind"]
    L = spec.L
    center = desc.get("center")
    center = None if center is None else np.asarray(center, dtype=float) * L
    try:
        if kind == "identity":
            return identity_diffeo(spec)
        if kind == "radial":
            return radial_diffeo(spec, float(desc.get("amplitude", 0.3)), float(desc.get("radius", 0.25)) * L, center)
        if kind == "swirl":
            return swirl_diffeo(spec, float(desc.get("angle", 0.8)), float(desc.get("radius", 0.4)) * L, center)
        if kind == "linear-core":
            return linear_core_diffeo(spec, float(desc.get("factor", 2.0)), float(desc.get("radius", 0.4)) * L)
        if kind == "compose":
            parts = desc.get("parts")
            if not parts:
                raise ConfigError(f"field '{where}.parts' must list at least one map")
            maps = [diffeo_from(spec, p, f"{where}.parts[{k}]") for k, p in enumerate(parts)]
            out = maps[0]
            for m in maps[1:]:
                out = out.compose(m)
            return out
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"field {where!r}: {exc}") from None
    raise ConfigError(f"field '{where}.kind': unknown map {kind!r}")


def metric_from(spec: GridSpec, desc, where: str = "metric") -> MetricField:
    if desc is None:
        return MetricField.flat(spec)
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ConfigError(f"field {where!r} must be an object with a 'kind'")
    kind = desc["kind"]
    try:
        if kind == "flat":
            return MetricField.flat(spec)
        if kind == "constant":
            return MetricField.constant(spec, np.asarray(desc["matrix"], dtype=float))
        if kind == "conformal":
            u = function_from(spec, desc.get("u", {"bump": {"radius": 0.25, "amplitude": 0.3}}), f"{where}.u")
            return MetricField.conformal(spec, u.values.real)
        if kind == "expression":
            fn = expr.matrix_function(desc["entries"], spec.d)
            return MetricField.from_function(spec, fn)
    except KeyError as exc:
        raise ConfigError(f"missing field '{where}.{exc.args[0]}'") from None
    except ValueError as exc:
        raise ConfigError(f"field {where!r}: {exc}") from None
    raise ConfigError(f"field '{where}.kind': unknown metric {kind!r}")


def _manifold_metric(atlas, desc, where="metric") -> ManifoldMetric:
    if desc is None or desc.get("kind") == "flat":
        return ManifoldMetric(atlas)
    if desc.get("kind") == "expression":
        try:
            return ManifoldMetric(atlas, expr.matrix_function(desc["entries"], atlas.d))
        except KeyError:
            raise ConfigError(f"missing field '{where}.entries'") from None
        except expr.ExprError as exc:
            raise ConfigError(f"field {where!r}: {exc}") from None
    raise ConfigError(f"field '{where}.kind' must be 'flat' or 'expression' on a manifold")


def _tol(cfg: dict, key: str) -> float:
    val = _field(cfg, f"tolerances.{key}")
    try:
        val = float(val)
    except (TypeError, ValueError):
        raise ConfigError(f"field 'tolerances.{key}' must be a number") from None
    if not val > 0:
        raise ConfigError(f"field 'tolerances.{key}' must be positive")
    return val


def _rng(cfg: dict):
    return np.random.default_rng(int(cfg.get("seed", 0)))


def _samples_table(res, exact=None) -> tuple:
    d = res.points.shape[1]
    header = [f"t{a}" for a in range(d)] + ["direction", "re", "im"] + (["exact_re", "exact_im"] if exact is not None else [])
    rows = []
    for k, (t, s, v) in enumerate(zip(res.points, res.directions, res.values)):
        row = [*map(float, t), int(res.dirs.index_of(s)), float(np.real(v)), float(np.imag(v))]
        if exact is not None:
            row += [float(np.real(exact[k])), float(np.imag(exact[k]))]
        rows.append(row)
    return header, rows


def _default_direction(d: int) -> str:
    return "1 + 0.5*s" if d == 1 else "1 + 0.5*cos(theta)"


# --- runners -------------------------------------------------------------------------------


def run_dixmier(cfg: dict) -> Outcome:
    terms = int(cfg.get("terms", 10**6))
    mu = 1.0 / (np.arange(terms + 1, dtype=float) + 1.0)
    partials = dixmier_partials(mu)
    est = dixmier_estimate(mu)
    final = partials[-1][1]
    checks = [
        Check("final_partial_deviation", abs(final - 1.0), _tol(cfg, "final")),
        Check("extrapolated_deviation", abs(est.extrapolated - 1.0), _tol(cfg, "extrapolated")),
    ]
    return Outcome(checks, {"final_partial": final, "extrapolated": est.extrapolated, "half_width": est.half_width}, {
        "partials": (["n", "value"], [[n, v] for n, v in partials])
    })


def _random_smooth_vectors(spec: GridSpec, rng, count: int, modes: int) -> np.ndarray:
    x = spec.nodes()
    k0 = 2 * np.pi / spec.L
    out = np.zeros((spec.total, count), dtype=complex)
    for ks in np.ndindex(*([2 * modes + 1] * spec.d)):
        k = np.array(ks) - modes
        wave = np.exp(1j * k0 * (x @ k))
        out += wave[:, None] * (rng.normal(size=count) + 1j * rng.normal(size=count))[None, :] / (1 + k @ k)
    return out


def run_kernel_of_sym(cfg: dict) -> Outcome:
    spec = grid_from(cfg)
    rng = _rng(cfg)
    dirs = DirectionSet(spec.d)
    rank = int(cfg.get("rank", 3))
    worst = 0.0
    per = []
    for trial in range(int(cfg.get("operators", 5))):
        U = _random_smooth_vectors(spec, rng, rank, int(cfg.get("modes", 6)))
        V = _random_smooth_vectors(spec, rng, rank, int(cfg.get("modes", 6)))
        T = DenseOp(spec, U @ V.conj().T * spec.cell_volume)
        norm = T.opnorm()
        samples = interior_samples(spec, int(cfg.get("samples", 20)), rng, radius=0.3 * spec.L, dirs=dirs)
        res = estimate_symbol_field(T, ProbeParams.default(spec, samples), dirs)
        ratio = float(np.max(np.abs(res.values)) / norm)
        per.append(ratio)
        worst = max(worst, ratio)
    return Outcome([Check("max_symbol_over_norm", worst, _tol(cfg, "relative"))], {"per_operator": per}, {})


def run_generator_symbols(cfg: dict) -> Outcome:
    spec = grid_from(cfg)
    rng = _rng(cfg)
    dirs = DirectionSet(spec.d)
    f = function_from(spec, cfg.get("f", {"bump": {"radius": 0.25}}), "f")
    gfn = dir_multiplier(direction_from(spec, cfg.get("g", _default_direction(spec.d)), "g"), spec, dirs)
    g_call = expr.direction_function(cfg.get("g", _default_direction(spec.d)), spec.d)
    samples = interior_samples(spec, int(cfg.get("samples", 20)), rng, radius=float(cfg.get("sample_radius", 0.125)) * spec.L, dirs=dirs)
    p = ProbeParams.default(spec, samples)
    nodes = [spec.node_index(t) for t, _ in samples]
    fv = f.values.ravel()[nodes]
    gv = g_call(np.array([s for _, s in samples]))
    tol = _tol(cfg, "relative")
    checks, tables = [], {}
    for name, T, exact, scale in [
        ("mult", mult_op(f), fv, np.max(np.abs(f.values))),
        ("dir", gfn, gv, np.max(np.abs(g_call(dirs.vectors)))),
        ("product", mult_op(f) @ gfn, fv * gv, np.max(np.abs(f.values)) * np.max(np.abs(g_call(dirs.vectors)))),
    ]:
        res = estimate_symbol_field(T, p, dirs)
        checks.append(Check(f"{name}_relative_error", float(np.max(np.abs(res.values - exact)) / scale), tol))
        tables[f"probe_{name}"] = _samples_table(res, exact)
    return Outcome(checks, {"samples": len(samples)}, tables)


def run_symbol_probe(cfg: dict) -> Outcome:
    """Probe ``psdo_like(q)`` for a configured symbol expression and compare with ``q``."""
    spec = grid_from(cfg)
    rng = _rng(cfg)
    dirs = DirectionSet(spec.d)
    names = ("x", "s") if spec.d == 1 else ("x", "y", "theta")
    src = cfg.get("symbol", "(1 + 0.5*s)*exp(-4*(x - pi)*(x - pi))" if spec.d == 1 else "(1 + 0.5*cos(theta))*exp(-(x - pi)*(x - pi) - (y - pi)*(y - pi))")
    try:
        e = expr.Expression(src, names)
    except expr.ExprError as exc:
        raise ConfigError(f"field 'symbol': {exc}") from None

    def q(t, s):
        env = {"x": t[:, 0]}
        if spec.d == 1:
            env["s"] = s[:, 0]
        else:
            env["y"] = t[:, 1]
            env["theta"] = np.arctan2(s[:, 1], s[:, 0])
        return np.broadcast_to(e(**env), (t.shape[0],)).astype(float)

    a = FunctionSymbol(spec, q, dirs)
    T = psdo_like(a)
    samples = interior_samples(spec, int(cfg.get("samples", 20)), rng, radius=float(cfg.get("sample_radius", 0.2)) * spec.L, dirs=dirs)
    res = estimate_symbol_field(T, ProbeParams.default(spec, samples), dirs)
    exact = a.evaluate(res.points, res.directions)
    scale = a.sample().sup()
    err = float(np.max(np.abs(res.values - exact)) / scale)
    return Outcome([Check("sup_relative_error", err, _tol(cfg, "relative"))], {"max_probe_residual": res.max_residual}, {
        "symbol_field": _samples_table(res, exact)
    })


def run_commutator(cfg: dict) -> Outcome:
    spec = grid_from(cfg)
    f = function_from(spec, cfg.get("f", {"bump": {"radius": 0.125}}), "f")
    g = direction_from(spec, cfg.get("g", "s" if spec.d == 1 else "cos(theta)"), "g")
    C = commutator(mult_op(f), dir_multiplier(g, spec))
    rep = compactness_score(C)
    return Outcome(
        [Check("tail_ratio", rep.tail_ratio, _tol(cfg, "tail_ratio")), Check("decay_exponent", rep.decay_exponent, float(cfg["tolerances"]["decay_exponent"]), "<=")],
        rep.to_dict(),
        {},
    )


def run_conjugation(cfg: dict) -> Outcome:
    spec = grid_from(cfg)
    ns = [int(v) for v in cfg.get("resolutions", [spec.n // 2, spec.n])]
    maps = cfg.get("maps", [{"kind": "linear-core"}])
    tol_id = _tol(cfg, "identity")
    tol_map = _tol(cfg, "map")
    min_ratio = float(cfg["tolerances"]["reduction"])
    checks, details = [], {}
    ident = identity_diffeo(spec)
    checks.append(Check("identity_D", max(conjugation_residual_D(ident, k) for k in range(spec.d)), tol_id))
    checks.append(Check("identity_lap", conjugation_residual_lap(ident), tol_id))
    for m, desc in enumerate(maps):
        res_D, res_L = [], []
        for n in ns:
            sp = make_grid(spec.d, n, spec.L)
            phi = diffeo_from(sp, desc, f"maps[{m}]")
            res_D.append(max(conjugation_residual_D(phi, k) for k in range(spec.d)))
            res_L.append(conjugation_residual_lap(phi))
        label = desc.get("kind", f"map{m}") + f"_{m}"
        details[label] = {"n": ns, "D": res_D, "lap": res_L}
        checks.append(Check(f"{label}_D_at_{ns[-1]}", res_D[-1], tol_map))
        checks.append(Check(f"{label}_lap_at_{ns[-1]}", res_L[-1], tol_map))
        checks.append(Check(f"{label}_D_reduction", res_D[-2] / max(res_D[-1], 1e-300), min_ratio, ">="))
        checks.append(Check(f"{label}_lap_reduction", res_L[-2] / max(res_L[-1], 1e-300), min_ratio, ">="))
    return Outcome(checks, details, {})


def run_equivariance(cfg: dict) -> Outcome:
    spec = grid_from(cfg)
    rng = _rng(cfg)
    dirs = DirectionSet(spec.d)
    f = function_from(spec, cfg.get("f", {"bump": {"radius": 0.25}}), "f")
    gsrc = cfg.get("g", _default_direction(spec.d))
    g = direction_from(spec, gsrc, "g")
    default_map = {"kind": "linear-core"} if spec.d == 1 else {
        "kind": "compose",
        "parts": [{"kind": "swirl", "angle": 0.8, "radius": 0.4}, {"kind": "radial", "amplitude": 0.2, "radius": 0.4}],
    }
    phi = diffeo_from(spec, cfg.get("diffeo", default_map))
    T = mult_op(f) @ dir_multiplier(g, spec, dirs)
    conj = diffeo_unitary(phi.inverted()) @ T @ diffeo_unitary(phi)
    a = symbol_of_mult(f, dirs) * symbol_of_dir(g, spec, dirs)
    samples = interior_samples(spec, int(cfg.get("samples", 20)), rng, radius=float(cfg.get("sample_radius", 1 / 6)) * spec.L, dirs=dirs)
    p = ProbeParams.default(spec, samples, stretch=max_stretch(phi))
    res = estimate_symbol_field(conj, p, dirs)
    pulled = theta_pullback(a, phi).evaluate(res.points, res.directions)
    dev = float(np.max(np.abs(res.values - pulled)) / a.sup())
    return Outcome([Check("sup_relative_deviation", dev, _tol(cfg, "relative"))], {"map": phi.name, "max_probe_residual": res.max_residual}, {
        "equivariance": _samples_table(res, pulled)
    })


def run_theta_composition(cfg: dict) -> Outcome:
    spec = grid_from(cfg)
    rng = _rng(cfg)
    first = diffeo_from(spec, cfg.get("first", {"kind": "swirl", "angle": 0.8, "radius": 0.4} if spec.d == 2 else {"kind": "radial", "amplitude": 0.3, "radius": 0.3}), "first")
    second = diffeo_from(spec, cfg.get("second", {"kind": "radial", "amplitude": 0.25, "radius": 0.35, "center": [0.55] * spec.d}), "second")
    dirs = DirectionSet(spec.d)
    if spec.d == 1:
        a = FunctionSymbol(spec, lambda t, s: np.cos(t[:, 0]) * (1 + 0.5 * s[:, 0]) + 0.2 * np.sin(2 * t[:, 0]), dirs)
    else:
        a = FunctionSymbol(spec, lambda t, s: np.cos(t[:, 0]) * np.sin(t[:, 1]) * (1 + 0.5 * s[:, 0]) + 0.3 * s[:, 1] * np.cos(t[:, 1]), dirs)
    m = int(cfg.get("samples", 100))
    t = rng.uniform(0.2, 0.8, size=(m, spec.d)) * spec.L
    s = rng.normal(size=(m, spec.d))
    s = s / np.linalg.norm(s, axis=1, keepdims=True)
    composed = first.compose(second)  # first o second
    nested = theta_pullback(theta_pullback(a, second), first)
    direct = theta_pullback(a, composed)
    law = float(np.max(np.abs(nested.evaluate(t, s) - direct.evaluate(t, s))))
    reversed_order = float(np.max(np.abs(theta_pullback(theta_pullback(a, first), second).evaluate(t, s) - direct.evaluate(t, s))))
    xi_dev = xi_equivalence_check(a, composed, t, rng.normal(size=(m, spec.d)) * 5)
    sampled = a.sample()
    xi_sampled = xi_equivalence_check(sampled, composed, t, rng.normal(size=(m, spec.d)) * 5)
    tol = _tol(cfg, "composition")
    return Outcome(
        [
            Check("composition_law", law, tol),
            Check("xi_equivalence", xi_dev, _tol(cfg, "xi")),
            Check("xi_equivalence_sampled", xi_sampled, _tol(cfg, "xi")),
        ],
        {"reversed_nesting_deviation": reversed_order},
        {},
    )


def run_connes_torus(cfg: dict) -> Outcome:
    """Trace formula on the torus model; each entry of ``cases`` gives a metric and a tolerance."""
    spec = grid_from(cfg)
    dirs = DirectionSet(spec.d)
    f = function_from(spec, cfg.get("f", {"bump": {"radius": 0.25 if spec.d == 2 else 0.125}}), "f")
    if np.min(f.values.real) < -1e-14 or np.max(np.abs(f.values.imag)) > 0:
        raise ConfigError("field 'f' must be real and nonnegative (singular values see |symbol|)")
    gsrc = cfg.get("g")
    if gsrc is None:
        T, a = mult_op(f), symbol_of_mult(f, dirs)
    else:
        g = direction_from(spec, gsrc, "g")
        T = mult_op(f) @ dir_multiplier(g, spec, dirs)
        a = symbol_of_mult(f, dirs) * symbol_of_dir(g, spec, dirs)
        if np.min(a.values.real) < -1e-14:
            raise ConfigError("field 'g' must be nonnegative")
    rho = cfg.get("rho")
    checks, details = [], {}
    if cfg.get("calibration_check", spec.d == 1):
        one = symbol_of_mult(GridFunction(spec, np.ones(spec.shape)), dirs)
        rep = connes_check(mult_op(GridFunction(spec, np.ones(spec.shape))), one, MetricField.flat(spec), rho=rho)
        checks.append(Check("identity_rel_err", rep.rel_err, _tol(cfg, "identity")))
        details["identity"] = rep.to_dict()
    for k, case in enumerate(cfg.get("cases", [{"metric": {"kind": "flat"}, "tolerance": 0.05}])):
        g = metric_from(spec, case.get("metric"), f"cases[{k}].metric")
        rep = connes_check(T, a, g, rho=rho)
        label = case.get("name", case.get("metric", {}).get("kind", f"case{k}"))
        tol = float(case.get("tolerance", 0.05))
        checks.append(Check(f"{label}_rel_err", rep.rel_err, tol))
        details[label] = rep.to_dict()
        vn = case.get("verify_n")
        if vn:
            spec2 = make_grid(spec.d, int(vn), spec.L)
            f2 = function_from(spec2, cfg.get("f", {"bump": {"radius": 0.25 if spec.d == 2 else 0.125}}), "f")
            T2, a2 = mult_op(f2), symbol_of_mult(f2, DirectionSet(spec.d))
            if gsrc is not None:
                g2 = direction_from(spec2, gsrc, "g")
                T2 = T2 @ dir_multiplier(g2, spec2)
                a2 = a2 * symbol_of_dir(g2, spec2)
            rep2 = connes_check(T2, a2, metric_from(spec2, case.get("metric"), f"cases[{k}].metric"), rho=rho)
            shift = abs(rep2.lhs.extrapolated - rep.lhs.extrapolated)
            checks.append(Check(f"{label}_refinement_shift_within_half_width", shift, rep.lhs.half_width, "<="))
            details[f"{label}_n{vn}"] = rep2.to_dict()
    return Outcome(checks, details, {})


def run_atlas(cfg: dict) -> Outcome:
    tol = _tol(cfg, "residual")
    checks, details = [], {}
    for k, desc in enumerate(cfg.get("atlases", [])):
        label = desc.get("name", f"atlas{k}")
        try:
            atlas = build_atlas(desc["kind"], int(desc["n"]), scales=desc.get("scales"))
        except KeyError as exc:
            raise ConfigError(f"missing field 'atlases[{k}].{exc.args[0]}'") from None
        except ValueError as exc:
            raise ConfigError(f"field 'atlases[{k}]': {exc}") from None
        metric = _manifold_metric(atlas, desc.get("metric"), f"atlases[{k}].metric")
        G = metric.chart_metrics()
        pou = good_partition(atlas, int(cfg.get("seed", 0)))
        vals = {
            "transition": transition_residual(atlas),
            "cocycle": cocycle_residual(atlas),
            "chain_rule": chain_rule_residual(atlas),
            "metric_compatibility": check_metric_compatibility(atlas, G),
            "q_compatibility": check_q_compatibility(atlas, G, seed=int(cfg.get("seed", 0))),
            "density_compatibility": density_compatibility(Density.riemannian(metric)),
            "liouville": liouville_check(atlas, metric),
            "partition_sum": pou.sum_residual(),
            "partition_support": pou.support_violation(),
        }
        for name, v in vals.items():
            checks.append(Check(f"{label}_{name}", v, tol))
        details[label] = vals
    if not checks:
        raise ConfigError("field 'atlases' must list at least one atlas")
    return Outcome(checks, details, {})


def _circle_operator(atlas, desc, where: str) -> ManifoldOperator:
    spec = atlas.spec
    kind = desc.get("kind", "product")
    if kind == "product":
        psi = function_from(spec, desc.get("f", "1 + 0.5*cos(x)"), f"{where}.f")
        g = direction_from(spec, desc.get("g", _default_direction(spec.d)), f"{where}.g")
        return ManifoldOperator(atlas, mult_op(psi) @ dir_multiplier(g, spec))
    if kind == "mult":
        return manifold_mult(atlas, function_from(spec, desc.get("f", "cos(x)"), f"{where}.f").values.ravel())
    if kind == "dir":
        return ManifoldOperator(atlas, dir_multiplier(direction_from(spec, desc.get("g", "s" if spec.d == 1 else "cos(theta)"), f"{where}.g"), spec))
    if kind == "reflection":
        return reflection(atlas)
    raise ConfigError(f"field '{where}.kind': unknown operator {kind!r}")


def run_globalise(cfg: dict) -> Outcome:
    a = cfg.get("atlas", {})
    atlas = build_atlas(a.get("kind", "circle"), int(a.get("n", 512)), scales=a.get("scales"))
    T = _circle_operator(atlas, cfg.get("operator", {}), "operator")
    seeds = cfg.get("partition_seeds", [1, 2])
    x, xi = manifold_samples(atlas, int(cfg.get("samples", 20)), int(cfg.get("seed", 0)))
    pou1, pou2 = good_partition(atlas, int(seeds[0])), good_partition(atlas, int(seeds[1]))
    rep = global_symbol(T, pou1, x, xi)
    dev = pou_independence(T, pou1, pou2, x, xi)
    tol = _tol(cfg, "relative")
    header = ["x" + str(k) for k in range(atlas.d)] + ["xi" + str(k) for k in range(atlas.d)] + ["re", "im"]
    rows = [[*map(float, p), *map(float, q), float(v.real), float(v.imag)] for p, q, v in zip(x, xi, rep.assembled)]
    return Outcome(
        [
            Check("consistency", rep.consistency, tol),
            Check("pou_independence", dev, tol),
            Check("decomposition_identity", decomposition_residual(T, pou1), 1e-10),
        ],
        rep.to_dict(),
        {"global_symbol": (header, rows)},
    )


def run_membership(cfg: dict) -> Outcome:
    a = cfg.get("atlas", {})
    atlas = build_atlas(a.get("kind", "circle"), int(a.get("n", 512)), scales=a.get("scales"))
    pou = good_partition(atlas, int(cfg.get("seed", 0)))
    th = cfg.get("thresholds", {})
    tail, slope = float(th.get("tail_ratio", 0.1)), float(th.get("decay_exponent", -0.5))
    checks, details = [], {}
    for k, desc in enumerate(cfg.get("operators", [])):
        T = _circle_operator(atlas, desc, f"operators[{k}]")
        rep = membership_diagnostic(T, pou, tail, slope)
        label = desc.get("name", desc.get("kind", f"op{k}"))
        expected = bool(desc.get("expect_member", True))
        checks.append(Check(f"{label}_verdict_matches", float(rep["member"] == expected), 1.0, "=="))
        details[label] = rep
    if not checks:
        raise ConfigError("field 'operators' must list at least one operator")
    return Outcome(checks, details, {})


def run_connes_manifold(cfg: dict) -> Outcome:
    """Trace formula on the circle atlas: global left side, chart-patched right side."""
    a = cfg.get("atlas", {})
    atlas = build_atlas(a.get("kind", "circle"), int(a.get("n", 2048)), scales=a.get("scales"))
    if atlas.d != 1:
        raise ConfigError("connes-manifold supports the circle atlas")
    metric = _manifold_metric(atlas, cfg.get("metric", {"kind": "expression", "entries": [["exp(0.4*sin(x))"]]}))
    spec = atlas.spec
    psi = function_from(spec, cfg.get("f", "1 + 0.5*cos(x)"), "f")
    if np.min(psi.values.real) < 0:
        raise ConfigError("field 'f' must be nonnegative")
    g = metric.field()
    A = mult_op(psi) @ resolvent_power(g, 0.5)
    floor = resolution_floor(float(np.max(np.abs(psi.values))), g, float(cfg.get("rho", DEFAULT_RHO)))
    lhs = estimate_from_values(singular_values(A, min_value=floor), remainder=1.0)
    pou = good_partition(atlas, int(cfg.get("seed", 1)))
    src = cfg.get("f", "1 + 0.5*cos(x)")
    if not isinstance(src, str):
        raise ConfigError("field 'f' must be an expression for connes-manifold")
    psi_fn = expr.point_function(src, 1)
    rhs = manifold_residue(atlas, pou, lambda x, xi: psi_fn(x), metric)
    rel = abs(lhs.extrapolated - rhs) / abs(rhs)
    return Outcome([Check("rel_err", rel, _tol(cfg, "relative"))], {"lhs": lhs.to_dict(), "rhs": rhs, "c_d": calibrate_cd(1), "floor": floor}, {})


@dataclass(frozen=True)
class Experiment:
    name: str
    command: str
    description: str
    runner: object
    defaults: dict


def _e(name, command, description, runner, defaults):
    return Experiment(name, command, description, runner, defaults)


EXPERIMENTS = [
    _e("dixmier-normalised", "dixmier", "Harmonic sequence partials and extrapolated Dixmier trace equal 1", run_dixmier,
       {"terms": 10**6, "tolerances": {"final": 0.05, "extrapolated": 0.01}}),
    _e("kernel-of-sym", "symbol-probe", "Probed symbols of smooth finite-rank operators vanish", run_kernel_of_sym,
       {"grid": {"d": 1, "n": 512}, "operators": 5, "rank": 3, "samples": 20, "tolerances": {"relative": 0.02}}),
    _e("generator-symbols", "symbol-probe", "Probes recover f(t0) and g(s0) for multiplication and direction multipliers", run_generator_symbols,
       {"grid": {"d": 1, "n": 1024}, "samples": 20, "tolerances": {"relative": 0.02}}),
    _e("generator-symbols-torus", "symbol-probe", "Generator probes on the 2-torus", run_generator_symbols,
       {"grid": {"d": 2, "n": 128}, "samples": 20, "tolerances": {"relative": 0.05}}),
    _e("symbol-probe", "symbol-probe", "Probe psdo_like(q) for a configured symbol expression", run_symbol_probe,
       {"grid": {"d": 1, "n": 1024}, "samples": 20, "tolerances": {"relative": 0.05}}),
    _e("commutator-compactness", "commutator-decay", "Singular-value decay of [M_f, g(D/|D|)]", run_commutator,
       {"grid": {"d": 1, "n": 512}, "tolerances": {"tail_ratio": 0.05, "decay_exponent": -0.7}}),
    _e("conjugation-identities", "conjugation-identities", "U^{-1} D U and U^{-1} Lap U against their coefficient formulas", run_conjugation,
       {"grid": {"d": 1, "n": 1024}, "resolutions": [512, 1024],
        "maps": [{"kind": "linear-core"}, {"kind": "radial", "amplitude": 0.3, "radius": 1 / 12}],
        "tolerances": {"identity": 1e-10, "map": 1e-3, "reduction": 1.5}}),
    _e("equivariance-circle", "equivariance", "Probed symbol of U^{-1} T U equals the pulled-back symbol (1-D)", run_equivariance,
       {"grid": {"d": 1, "n": 1024}, "samples": 20, "tolerances": {"relative": 0.05}}),
    _e("equivariance-torus", "equivariance", "Probed symbol of U^{-1} T U equals the pulled-back symbol (2-D)", run_equivariance,
       {"grid": {"d": 2, "n": 128}, "samples": 20, "tolerances": {"relative": 0.10}}),
    _e("theta-composition", "equivariance", "Cotangent pullbacks compose contravariantly; normalised and linear pullbacks agree", run_theta_composition,
       {"grid": {"d": 2, "n": 64}, "samples": 100, "tolerances": {"composition": 1e-10, "xi": 1e-12}}),
    _e("connes-circle", "connes-torus", "Trace formula on the circle for a multiplication operator", run_connes_torus,
       {"grid": {"d": 1, "n": 4096}, "calibration_check": True,
        "cases": [{"name": "flat", "metric": {"kind": "flat"}, "tolerance": 0.05, "verify_n": 8192}],
        "tolerances": {"identity": 0.02}}),
    _e("connes-torus", "connes-torus", "Trace formula on the 2-torus, flat and conformal metrics", run_connes_torus,
       {"grid": {"d": 2, "n": 64}, "g": "1 + 0.5*cos(theta)", "calibration_check": False,
        "cases": [{"name": "flat", "metric": {"kind": "flat"}, "tolerance": 0.10},
                  {"name": "conformal", "metric": {"kind": "conformal", "u": {"bump": {"radius": 0.25, "amplitude": 0.3}}}, "tolerance": 0.15}],
        "tolerances": {"identity": 0.02}}),
    _e("atlas-integrity", "atlas-check", "Transition, cocycle, metric, q, density and Liouville residuals", run_atlas,
       {"atlases": [
           {"name": "circle", "kind": "circle", "n": 512},
           {"name": "circle-rescaled", "kind": "circle", "n": 512, "scales": [1.0, 1.5],
            "metric": {"kind": "expression", "entries": [["exp(0.4*sin(x))"]]}},
           {"name": "torus", "kind": "flat-torus-2d", "n": 64},
       ], "tolerances": {"residual": 1e-8}}),
    _e("globalise-pou", "globalise-pou", "Chart-patched symbol is consistent and independent of the partition", run_globalise,
       {"atlas": {"kind": "circle", "n": 512}, "operator": {"kind": "product"}, "partition_seeds": [1, 2], "samples": 20,
        "tolerances": {"relative": 0.03}}),
    _e("membership-circle", "membership", "Commutator compactness verdicts for member and non-member operators", run_membership,
       {"atlas": {"kind": "circle", "n": 512}, "operators": [
           {"name": "mult", "kind": "mult", "expect_member": True},
           {"name": "dir", "kind": "dir", "expect_member": True},
           {"name": "reflection", "kind": "reflection", "expect_member": False}],
        "thresholds": {"tail_ratio": 0.1, "decay_exponent": -0.5}}),
    _e("connes-manifold", "connes-manifold", "Trace formula on the circle atlas with a non-flat metric", run_connes_manifold,
       {"atlas": {"kind": "circle", "n": 2048, "scales": [1.0, 1.5]}, "tolerances": {"relative": 0.05}}),
]

_BY_NAME = {e.name: e for e in EXPERIMENTS}
COMMANDS = sorted({e.command for e in EXPERIMENTS})


def list_experiments() -> list:
    """``(name, command, description)`` in stable catalogue order."""
    return [(e.name, e.command, e.description) for e in EXPERIMENTS]


def get_experiment(name: str) -> Experiment:
    if name not in _BY_NAME:
        raise ConfigError(f"unknown experiment {name!r}; known: {', '.join(_BY_NAME)}")
    return _BY_NAME[name]


def default_experiment(command: str) -> str:
    for e in EXPERIMENTS:
        if e.command == command:
            return e.name
    raise ConfigError(f"unknown command {command!r}")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(name: str, overrides: dict | None = None, seed: int | None = None, n: int | None = None) -> dict:
    exp = get_experiment(name)
    cfg = _merge(exp.defaults, overrides or {})
    cfg["experiment"] = name
    if "grid" in cfg:
        cfg["grid"].setdefault("L", 2 * np.pi)
    cfg.setdefault("seed", 0)
    if seed is not None:
        cfg["seed"] = int(seed)
    if n is not None:
        if "grid" in cfg:
            cfg["grid"]["n"] = int(n)
        elif "atlas" in cfg:
            cfg["atlas"]["n"] = int(n)
        elif "atlases" in cfg:
            for a in cfg["atlases"]:
                a["n"] = int(n)
    if "tolerances" in cfg:
        for k, v in cfg["tolerances"].items():
            if not isinstance(v, (int, float)):
                raise ConfigError(f"field 'tolerances.{k}' must be a number")
    return cfg


def run(name: str, overrides: dict | None = None, seed: int | None = None, n: int | None = None) -> tuple:
    """Run an experiment; returns ``(report dict, tables)``."""
    cfg = resolve_config(name, overrides, seed, n)
    exp = get_experiment(name)
    t0 = time.perf_counter()
    out = exp.runner(cfg)
    elapsed = time.perf_counter() - t0
    checks = [c.to_dict() for c in out.checks]
    report = {
        "schema": SCHEMA,
        "experiment": name,
        "command": exp.command,
        "config": _jsonable(cfg),
        "checks": checks,
        "pass": all(c["pass"] for c in checks),
        "details": _jsonable(out.details),
        "timing": {"seconds": elapsed},
    }
    return report, out.tables
