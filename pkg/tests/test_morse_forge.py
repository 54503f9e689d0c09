import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from z2glue.morse_forge import (
    C_CRIT, BirthConfig, axis_profile, birth_function, escape_check, expected_hessian_eigs,
    find_critical_points, gradient_floor, lift_to_rn, single_step_profile, staggered_profile, steepened_profile,
    verify_birth,
)

CFG = BirthConfig(10.0)


def _fd_grad(fun, p, h=1e-6):
    dim = p.shape[1]
    return np.stack([(fun(p + h * e)[0] - fun(p - h * e)[0]) / (2 * h) for e in np.eye(dim)], 1)


def test_config_validation():
    for bad in (dict(M=2.0), dict(n=2), dict(n=4, r=0), dict(n=4, r=3)):
        with pytest.raises(ValueError):
            BirthConfig(**bad)
    with pytest.raises(ValueError):
        BirthConfig(5.0, profile=staggered_profile(8.0))
    assert CFG.profile_ok()
    assert CFG.profile_slope() * CFG.M <= 2


def test_axis_profile_needs_room():
    assert BirthConfig(2.5, profile=staggered_profile(2.5)).profile_ok()
    with pytest.raises(ValueError):
        axis_profile(2.5)


@pytest.mark.parametrize("M", [3.0, 10.0, 30.0])
def test_profiles_meet_slope_bound(M):
    for prof in (staggered_profile(M), axis_profile(M)):
        cfg = BirthConfig(M, profile=prof)
        assert cfg.profile_ok()
        t = np.linspace(0, 1, 50)
        np.testing.assert_array_equal(prof(t), 1.0)
        np.testing.assert_array_equal(prof(np.linspace(M, 2 * M, 50)), 0.0)


def test_reference_values():
    v, g, _ = birth_function(CFG, [2 * CFG.M, 0, 0])
    assert v == pytest.approx(2 * CFG.M, abs=1e-12)
    np.testing.assert_allclose(g, [1, 0, 0], atol=1e-12)
    assert birth_function(CFG, [0.5, 0, 0])[0] == pytest.approx(-0.375, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.tuples(*[st.floats(-25, 25)] * 3))
def test_evenness(p):
    p = np.array(p)
    f0 = birth_function(CFG, p)[0]
    assert birth_function(CFG, p * [1, -1, 1])[0] == f0
    assert birth_function(CFG, p * [1, 1, -1])[0] == f0


def test_gradient_and_hessian_match_finite_differences():
    rng = np.random.default_rng(0)
    d = rng.normal(size=(1500, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    p = d * rng.uniform(0, 1.2 * CFG.M, (1500, 1))
    # straddle the region boundary r = 1
    p = np.vstack([p, d[:200] * (1 + 1e-7), d[200:400] * (1 - 1e-7)])
    fun = lambda x: birth_function(CFG, x)
    _, g, h = fun(p)
    fd = _fd_grad(fun, p)
    assert np.max(np.abs(fd - g) / np.maximum(1.0, np.abs(g))) <= 1e-7
    fdh = np.stack([(fun(p + 1e-6 * e)[1] - fun(p - 1e-6 * e)[1]) / 2e-6 for e in np.eye(3)], 2)
    assert np.abs(fdh - h).max() <= 1e-7 * max(1.0, np.abs(h).max())


def test_regions_agree_at_unit_sphere():
    d = np.random.default_rng(1).normal(size=(100, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    lo = birth_function(CFG, d * (1 - 1e-12))
    hi = birth_function(CFG, d * (1 + 1e-12))
    for a, b in zip(lo, hi):
        np.testing.assert_allclose(a, b, atol=1e-9)


@pytest.mark.parametrize("M", [3.0, 10.0, 30.0])
def test_exactly_two_critical_points(M):
    cfg = BirthConfig(M)
    crit = find_critical_points(cfg)
    assert len(crit) == 2
    np.testing.assert_allclose([c.location for c in crit], [[-C_CRIT, 0, 0], [C_CRIT, 0, 0]],
                               atol=1e-9)
    assert [c.index for c in crit] == [2, 1]
    for c in crit:
        assert np.abs(c.hessian_eigs).min() > 0.5
    np.testing.assert_allclose(crit[1].hessian_eigs, expected_hessian_eigs(), atol=1e-9)
    assert gradient_floor(cfg, samples=30_000) > 1e-3


def test_hessian_eigs_oracle():
    c = 3**-0.5
    np.testing.assert_allclose(expected_hessian_eigs(), sorted([2 * 3**0.5, 2 * (1 + c), 2 * (c - 1)]))
    np.testing.assert_allclose(expected_hessian_eigs(), [-0.8452994616, 3.1547005384, 3.4641016151],
                               atol=1e-9)


def test_equal_step_profile_spawns_axis_critical_points():
    # the slope bound alone does not rule out extra zeros on the x-axis
    cfg = BirthConfig(3.0, profile=staggered_profile(3.0))
    crit = find_critical_points(cfg)
    assert len(crit) > 2
    assert all(abs(c.location[1]) + abs(c.location[2]) < 1e-9 for c in crit)


@pytest.mark.parametrize("n,r", [(4, 1), (5, 2), (6, 2)])
def test_lift_indices(n, r):
    cfg = BirthConfig(10.0, n, r)
    lift = lift_to_rn(cfg)
    for sgn, idx in ((1, r), (-1, r + 1)):
        p = np.zeros(n)
        p[0] = sgn * C_CRIT
        _, g, h = lift(p)
        assert np.abs(g).max() < 1e-12
        eig = np.linalg.eigvalsh(h)
        assert np.sum(eig < 0) == idx and np.abs(eig).min() > 0.5


def test_lift_gradient_and_axis_smoothness():
    cfg = BirthConfig(10.0, 5, 2)
    lift = lift_to_rn(cfg)
    rng = np.random.default_rng(2)
    X = rng.normal(size=(300, 5)) * rng.uniform(0.1, 4, (300, 1))
    _, g, h = lift(X)
    np.testing.assert_allclose(_fd_grad(lift, X), g, atol=1e-7 * max(1, np.abs(g).max()))
    fdh = np.stack([(lift(X + 1e-6 * e)[1] - lift(X - 1e-6 * e)[1]) / 2e-6 for e in np.eye(5)], 2)
    assert np.abs(fdh - h).max() < 1e-6
    # across |y'| = 0 (y' is the single coordinate x2 when n=5, r=2)
    base = rng.normal(size=(50, 5))
    base[:, 1] = 0
    up, dn = base.copy(), base.copy()
    up[:, 1], dn[:, 1] = 1e-9, -1e-9
    # the FD stencil (step 1e-6) straddles the axis
    assert np.abs(_fd_grad(lift, up) - _fd_grad(lift, dn)).max() <= 1e-8
    np.testing.assert_allclose(_fd_grad(lift, base), lift(base)[1], atol=1e-8)
    np.testing.assert_allclose(lift(base)[1][:, 1], 0.0, atol=1e-12)


def test_lift_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        lift_to_rn(BirthConfig(10.0, 4, 1))(np.zeros(5))


def test_verify_default_passes_and_serializes():
    rep = verify_birth(CFG)
    assert rep.passed
    assert rep.outer_identity_err <= 1e-12 and rep.evenness_err == 0 and rep.denominator_min > 0
    assert all(b["satisfiable_by_rescaling"] for b in rep.balance)
    d = json.loads(rep.to_json())
    assert d["passed"] and len(d["critical_points"]) == 2


@pytest.mark.parametrize("n,r", [(4, 1), (5, 2)])
def test_verify_lift(n, r):
    rep = verify_birth(BirthConfig(10.0, n, r))
    assert rep.passed
    assert sorted(c["index"] for c in rep.critical_points_rn) == [r, r + 1]


def test_single_steep_step_breaks_more_than_the_profile():
    bad = BirthConfig(10.0, profile=single_step_profile(10.0, 4.0))
    assert not bad.profile_ok()
    assert len(find_critical_points(bad)) > 2


def test_corrupted_profile_fails_only_profile_check():
    bad = BirthConfig(10.0, profile=steepened_profile(axis_profile(10.0), 10.0, slope=5.0))
    good = verify_birth(CFG)
    rep = verify_birth(bad)
    assert rep.profile_slope_times_M == pytest.approx(5.0, rel=0.02)
    assert not rep.profile_ok and not rep.passed
    for key in ("count_ok", "indices_ok", "indices_rn_ok"):
        assert getattr(rep, key) == getattr(good, key)
    assert rep.locations_err <= 1e-9 and rep.hessian_err <= 1e-9
    assert rep.outer_identity_err <= 1e-12 and rep.denominator_min > 0


@pytest.mark.parametrize("M", [3.0, 10.0])
def test_flow_escape(M):
    frac, gmin = escape_check(BirthConfig(M), count=200)
    assert frac == 1.0 and gmin >= 1e-3
