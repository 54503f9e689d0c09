import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from z2glue.models import ModelParams, model_field
from z2glue.preglue import (
    GlueConfig, HarmonicBackground, PreGluing, build_pregluing, cutoff_pair, default_cubic,
    divergence_error, error_scan, harmonic_cubic, make_lattice, support_split, weight,
)

MODEL = ModelParams(3, (1.0, 1.0))
BG = HarmonicBackground.matching(MODEL)
EPS = [2.0**-k for k in range(4, 8)]


def test_config_validation():
    GlueConfig(3, 0.01, 0.1, 0.2, 4.0)
    with pytest.raises(ValueError):
        GlueConfig(3, 0.05, 0.1, 0.2, 4.0)  # 2 N eps >= delta
    with pytest.raises(ValueError):
        GlueConfig(3, 0.01, 0.9, 0.2, 4.0)  # annulus too wide
    with pytest.raises(ValueError):
        GlueConfig(3, 0.01, 0.1, 0.2, 4.0, tau=0.5)
    with pytest.raises(ValueError):
        GlueConfig(2, 0.01, 0.1, 0.2, 4.0)
    with pytest.raises(ValueError):
        GlueConfig(3, 1e-3, 0.1, 3.0, 4.0)  # N < 2 delta


def test_cutoff_pair():
    s = np.linspace(0, 3, 301)
    g1, g2 = cutoff_pair(s)
    assert np.all(g1[s <= 1] == 0) and np.all(g1[s >= 2] == 1)
    np.testing.assert_array_equal(g1 + g2, 1.0)
    assert np.all(np.diff(g1) >= 0)


def test_weight_examples():
    cfg = GlueConfig(3, 0.01, 0.1, 0.2, 4.0)
    assert weight(cfg, 0.0) == pytest.approx(cfg.eps)
    assert weight(cfg, 0.5 * cfg.N * cfg.eps) == pytest.approx(cfg.eps)
    rho = 0.1
    assert weight(cfg, rho) == pytest.approx(rho / (2 * cfg.delta), rel=1e-12)
    assert weight(cfg, 3 * cfg.delta) == 1.0
    r = np.linspace(0, 1, 20001)
    w = weight(cfg, r)
    assert np.all(np.diff(w) >= 0)
    assert w.min() >= cfg.eps - 1e-15 and w.max() <= 1.0
    with pytest.raises(ValueError):
        weight(cfg, -1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-4, 0.02), st.floats(0.05, 0.3), st.floats(0.05, 0.9))
def test_weight_is_monotone(eps, delta, sigma):
    try:
        cfg = GlueConfig(3, eps, sigma, delta, 4.0)
    except ValueError:
        return
    w = weight(cfg, np.linspace(0, 3 * delta, 5001))
    assert np.all(np.diff(w) >= -1e-15)


def test_background_validation():
    with pytest.raises(ValueError):
        HarmonicBackground((1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        HarmonicBackground(BG.a, harmonic_cubic(3, {(0, 0, 0): 1.0}))
    cub = HarmonicBackground(BG.a, default_cubic(3))
    x = np.random.default_rng(0).normal(size=(20, 3))
    h = 1e-4
    lap = sum((cub.value(x + h * e) - 2 * cub.value(x) + cub.value(x - h * e)) / h**2
              for e in np.eye(3))
    assert np.abs(lap).max() < 1e-5
    fd = np.stack([(cub.value(x + h * e) - cub.value(x - h * e)) / (2 * h) for e in np.eye(3)], 1)
    np.testing.assert_allclose(cub.gradient(x), fd, atol=1e-7)


def test_mismatched_model_is_rejected():
    cfg = GlueConfig(3, 0.01, 0.1, 0.2, 4.0)
    other = HarmonicBackground.matching(ModelParams(3, (1.3, 0.7)))
    with pytest.raises(ValueError):
        build_pregluing(other, MODEL, cfg)


def test_regime_continuity():
    cfg = GlueConfig(3, 2**-6, 0.3, 1.0, 4.0)
    pg = PreGluing(HarmonicBackground(BG.a, default_cubic(3)), MODEL, cfg)
    dirs = np.random.default_rng(1).normal(size=(50, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    for r in (cfg.r_in, cfg.r_out):
        lo, hi = pg(dirs * r * (1 - 1e-10)), pg(dirs * r * (1 + 1e-10))
        np.testing.assert_allclose(lo, hi, atol=1e-8 * np.abs(hi).max())


def test_regimes_reproduce_their_pieces():
    cfg = GlueConfig(3, 2**-6, 0.3, 1.0, 4.0)
    bg = HarmonicBackground(BG.a, default_cubic(3))
    pg = PreGluing(bg, MODEL, cfg)
    d = np.array([[0.3, -0.5, 0.81]]) / np.linalg.norm([0.3, -0.5, 0.81])
    xin, xout = d * 0.7 * cfg.r_in, d * 2.5 * cfg.r_in
    np.testing.assert_allclose(pg(xin), cfg.eps * model_field(MODEL, xin / cfg.eps)[1], rtol=1e-14)
    np.testing.assert_array_equal(pg(xout), bg.gradient(xout))


def test_primitive_matches_field():
    cfg = GlueConfig(3, 2**-5, 0.3, 1.0, 4.0)
    pg = PreGluing(HarmonicBackground(BG.a, default_cubic(3)), MODEL, cfg)
    rng = np.random.default_rng(3)
    d = rng.normal(size=(30, 3))
    x = d / np.linalg.norm(d, axis=1, keepdims=True) * rng.uniform(1.05, 1.95, (30, 1)) * cfg.r_in
    h = 1e-6 * cfg.r_in
    fd = np.stack([(pg.primitive(x + h * e) - pg.primitive(x - h * e)) / (2 * h)
                   for e in np.eye(3)], 1)
    np.testing.assert_allclose(pg(x), fd, atol=1e-7 * np.abs(fd).max())


def test_outer_field_is_eps_independent():
    x = np.array([[0.4, 0.3, -0.2]])
    vals = [PreGluing(BG, MODEL, GlueConfig(3, e, 0.1, 1.0, 4.0))(x) for e in EPS]
    for v in vals[1:]:
        np.testing.assert_array_equal(v, vals[0])


def test_deep_inner_point_constant_is_stable():
    # |alpha~ - dP2| <= C eps^3 / rho_q^2 at rho_q = 2 N eps
    direction = np.array([[0.48, 0.6, 0.64]])
    cs = []
    for e in (2.0**-6, 2.0**-7, 2.0**-8):
        cfg = GlueConfig(3, e, 0.6, 1.0, 4.0)
        x = direction * 2 * cfg.N * e
        assert np.linalg.norm(x) < cfg.r_in
        pg = PreGluing(BG, MODEL, cfg)
        diff = np.linalg.norm(pg(x) - BG.p2_gradient(x))
        cs.append(diff * np.linalg.norm(x) ** 2 / e**3)
    np.testing.assert_allclose(cs, cs[0], rtol=1e-10)


def test_divergence_supported_in_annulus_and_curl_free():
    cfg = GlueConfig(3, 2**-6, 0.1, 1.0, 4.0)
    model = ModelParams(3, (0.5, 0.5))
    bg = HarmonicBackground.matching(model)
    fg = build_pregluing(bg, model, cfg, make_lattice(cfg, model, n_dirs=80))
    div = divergence_error(fg, cfg)
    assert not div.flags["under_resolved"]
    inside, outside = support_split(div, cfg)
    assert inside > 0 and outside <= 1e-8 * inside
    assert div.flags["curl"].max() <= 1e-6 * div.flags["jac_scale"]


def test_annulus_scales_with_eps():
    def support_edges(eps):
        cfg = GlueConfig(3, eps, 0.3, 1.0, 4.0)
        r = np.linspace(0.8, 2.2, 141) * cfg.r_in
        pts = r[:, None] * np.array([[0.6, 0.0, 0.8]])
        fg = build_pregluing(BG, MODEL, cfg, pts)
        v = np.abs(divergence_error(fg, cfg).values)
        on = r[v > 1e-6 * v.max()]
        return on.min(), on.max()

    lo1, hi1 = support_edges(2**-6)
    lo2, hi2 = support_edges(2**-5)
    assert lo2 / lo1 == pytest.approx(2**0.7, rel=0.02)
    assert hi2 / hi1 == pytest.approx(2**0.7, rel=0.02)


@pytest.mark.slow
def test_error_scan_slopes():
    base = GlueConfig(3, EPS[0], 0.1, 1.0, 4.0)
    rep = error_scan(base, EPS, BG, MODEL, n_dirs=80)
    assert rep.monotone
    assert 1.9 <= rep.slopes["sup_primitive_err"] <= 2.3
    assert rep.slopes["sup_div"] == pytest.approx(rep.predicted["sup_div"], abs=0.1)

    cub = HarmonicBackground(BG.a, default_cubic(3))
    rep = error_scan(GlueConfig(3, EPS[0], 0.45, 1.0, 4.0), EPS, cub, MODEL, n_dirs=80, workers=2)
    assert 1.45 <= rep.slopes["sup_primitive_err"] <= 1.85
    assert rep.slopes["sup_primitive_err"] == pytest.approx(rep.predicted["sup_primitive_err"],
                                                            abs=0.05)


def test_error_scan_rejects_bad_eps_lists():
    base = GlueConfig(3, EPS[0], 0.1, 1.0, 4.0)
    with pytest.raises(ValueError):
        error_scan(base, EPS[:3], BG, MODEL)
    with pytest.raises(ValueError):
        error_scan(base, [0.1, 0.03, 0.01, 0.003], BG, MODEL)
