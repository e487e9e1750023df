import math

import numpy as np
import pytest

from symlab.manifold import (
    Density,
    ManifoldError,
    ManifoldMetric,
    ManifoldOperator,
    adjoint_transfer_residual,
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
    localize_to_chart,
    manifold_mult,
    manifold_residue,
    manifold_samples,
    membership_diagnostic,
    pou_independence,
    reflection,
    transition_residual,
)
from symlab.operators import dir_multiplier, mult_op

ELL = 2 * np.pi


def conformal_circle(atlas):
    return ManifoldMetric(atlas, lambda x: np.exp(0.4 * np.sin(x[:, 0]))[:, None, None])


@pytest.mark.parametrize(
    "kind,n,scales,charts",
    [("circle", 128, None, 2), ("circle", 128, [1.0, 1.5], 2), ("flat-torus-2d", 32, None, 4)],
)
def test_atlas_structure(kind, n, scales, charts):
    atlas = build_atlas(kind, n, scales=scales)
    assert len(atlas.charts) == charts and atlas.covers()
    assert transition_residual(atlas) < 1e-12
    assert cocycle_residual(atlas) < 1e-12
    assert chain_rule_residual(atlas) < 1e-12
    if kind == "circle":
        assert atlas.overlap_components(0, 1) == 2


def test_atlas_errors():
    with pytest.raises(ManifoldError):
        build_atlas("sphere", 64)
    with pytest.raises(ManifoldError):
        build_atlas("circle", 100)
    with pytest.raises(ManifoldError):
        build_atlas("circle", 64, scales=[1.0])
    with pytest.raises(ManifoldError):
        build_atlas("circle", 64, half_width=0.2)


def test_chart_node_alignment():
    atlas = build_atlas("circle", 64, scales=[1.0, 1.5])
    x = atlas.spec.nodes()
    for ch in atlas.charts:
        perm = ch.node_map()
        assert np.allclose(ch.spec.nodes()[perm], ch.h(x))
        assert np.allclose(ch.h_inverse(ch.h(x)), x)


def test_metric_and_q_compatibility_rescaled_chart():
    atlas = build_atlas("circle", 256, scales=[1.0, 1.5])
    metric = conformal_circle(atlas)
    G = metric.chart_metrics()
    assert check_metric_compatibility(atlas, G) < 1e-8
    assert check_q_compatibility(atlas, G) < 1e-8
    assert density_compatibility(Density.riemannian(metric)) < 1e-12
    assert liouville_check(atlas, metric) < 1e-8


def test_metric_mismatch_is_detected():
    atlas = build_atlas("flat-torus-2d", 16)
    G = ManifoldMetric(atlas).chart_metrics()
    bad = list(G)
    bad[1] = lambda t: 1.01 * G[1](t)
    assert check_metric_compatibility(atlas, bad) == pytest.approx(0.01, rel=1e-6)
    assert check_q_compatibility(atlas, bad) > 1e-3


def test_good_partition():
    atlas = build_atlas("circle", 256)
    p0, p1, p2 = (good_partition(atlas, s) for s in (0, 1, 2))
    for p in (p0, p1, p2):
        assert p.sum_residual() < 1e-10 and p.support_violation() == 0
        assert len(p) == 2
    assert not np.allclose(p1.values, p2.values)
    with pytest.raises(ManifoldError):
        good_partition(atlas, support=0.44)


def test_localization_of_multiplication_and_identity():
    atlas = build_atlas("circle", 128, scales=[1.0, 1.5])
    pou = good_partition(atlas, 1)
    psi = 1 + 0.5 * np.cos(atlas.spec.nodes()[:, 0])
    T = manifold_mult(atlas, psi)
    I = manifold_mult(atlas, np.ones_like(psi))
    for v, i in zip(pou.values, pou.charts):
        ch = atlas.charts[i]
        perm = ch.node_map()
        expected = np.zeros(ch.spec.total)
        expected[perm] = v * psi
        assert np.allclose(localize_to_chart(T, v, ch).dense(), np.diag(expected))
        expected[perm] = v
        assert np.allclose(localize_to_chart(I, v, ch).dense(), np.diag(expected))
    with pytest.raises(ManifoldError):
        localize_to_chart(T, np.ones(atlas.spec.total), atlas.charts[0])


def test_adjoint_transfer_and_decomposition():
    atlas = build_atlas("circle", 64, scales=[1.0, 1.5])
    rng = np.random.default_rng(0)
    metric = conformal_circle(atlas)
    M = rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64))
    T = ManifoldOperator(atlas, M, Density.riemannian(metric))
    for ch in atlas.charts:
        assert adjoint_transfer_residual(T, ch) < 1e-8
    w = T.density.node_weights()
    u, v = rng.normal(size=64), rng.normal(size=64)
    assert np.vdot(u, T.apply(v) * w) == pytest.approx(np.vdot(T.adjoint().apply(u), v * w))
    assert decomposition_residual(T, good_partition(atlas, 2)) < 1e-12


def test_global_symbol_of_multiplication():
    atlas = build_atlas("circle", 512)
    x = atlas.spec.nodes()[:, 0]
    psi = 1 + 0.5 * np.cos(x)
    T = manifold_mult(atlas, psi)
    pts, xi = manifold_samples(atlas, 12, seed=3)
    rep = global_symbol(T, good_partition(atlas, 1), pts, xi)
    exact = 1 + 0.5 * np.cos(pts[:, 0])
    assert np.max(np.abs(rep.assembled - exact)) < 0.02
    assert rep.consistency < 0.02


def test_global_symbol_product_and_partition_independence():
    atlas = build_atlas("circle", 512)
    x = atlas.spec.nodes()[:, 0]
    T = ManifoldOperator(atlas, mult_op(1 + 0.5 * np.cos(x), atlas.spec) @ dir_multiplier(lambda s: 1 + 0.5 * s[:, 0], atlas.spec))
    pts, xi = manifold_samples(atlas, 10, seed=4)
    dev = pou_independence(T, good_partition(atlas, 1), good_partition(atlas, 2), pts, xi)
    assert dev < 0.02
    rep = global_symbol(T, good_partition(atlas, 1), pts, xi)
    exact = (1 + 0.5 * np.cos(pts[:, 0])) * (1 + 0.5 * xi[:, 0])
    assert np.max(np.abs(rep.assembled - exact)) < 0.02


def test_global_symbol_of_compact_operator_vanishes():
    atlas = build_atlas("circle", 512)
    x = atlas.spec.nodes()[:, 0]
    u = np.exp(np.cos(x))
    T = ManifoldOperator(atlas, np.outer(u, u) * atlas.spec.cell_volume)
    pts, xi = manifold_samples(atlas, 8, seed=5)
    rep = global_symbol(T, good_partition(atlas, 1), pts, xi)
    assert np.max(np.abs(rep.assembled)) < 0.02 * T.norm()


def test_membership_verdicts():
    atlas = build_atlas("circle", 128)
    pou = good_partition(atlas)
    psi = np.cos(atlas.spec.nodes()[:, 0])
    mult = membership_diagnostic(manifold_mult(atlas, psi), pou)
    assert mult["member"] and all(r["zero"] for r in mult["commutators"])
    sgn = ManifoldOperator(atlas, dir_multiplier(lambda s: s[:, 0], atlas.spec))
    assert membership_diagnostic(sgn, pou)["member"]
    refl = membership_diagnostic(reflection(atlas), pou)
    assert not refl["member"]
    assert max(r["tail_ratio"] for r in refl["commutators"]) > 0.5
    assert refl["battery_size"] == len(refl["commutators"])


def test_manifold_residue_flat_circle_normalisation():
    atlas = build_atlas("circle", 128, scales=[1.0, 1.5])
    pou = good_partition(atlas, 1)
    # c_1 times the residue of the symbol 1 equals Tr_w (1 - Delta)^{-1/2} = 2
    val = manifold_residue(atlas, pou, lambda x, xi: np.ones(len(x)), ManifoldMetric(atlas))
    assert val == pytest.approx(2.0, rel=1e-5)
    # a constant metric g = c^2 scales the fibre integral by c
    scaled = ManifoldMetric(atlas, lambda x: np.full((len(x), 1, 1), 4.0))
    assert manifold_residue(atlas, pou, lambda x, xi: np.ones(len(x)), scaled) == pytest.approx(4.0, rel=1e-5)
    assert math.isfinite(manifold_residue(atlas, pou, lambda x, xi: 1 + 0.5 * np.cos(x[:, 0]), conformal_circle(atlas)))
