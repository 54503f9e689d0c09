import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from z2glue.nash_moser import (
    CircleToy, DiagonalSmoothing, DiagonalToy, IdentitySmoothing, IterationTrace, PeriodicGrid,
    PeriodicSpace, SequenceSpace, audit_trace, identity_defect, interpolation_check,
    interpolation_ratio, inverse_defects, mollifier_smoothing, periodic_corpus, run,
    theta_schedule, verify_smoothing,
)
from z2glue.profiles import plateau

GRID = PeriodicGrid(512)
SPACE6 = PeriodicSpace(GRID, 6)


def newton_oracle_circle(g, K, steps):
    """Plain Newton for u + u u' = g on |xi| <= K in complex Fourier coefficients."""
    n = g.size
    gh = np.fft.fft(g) / n
    ks = np.arange(-K, K + 1)
    ghat = gh[ks]
    c = np.zeros(2 * K + 1, complex)

    def conv(a, b):
        full = np.convolve(a, b)  # indices -2K..2K
        return full[K:3 * K + 1]

    out = [c.copy()]
    for _ in range(steps):
        F = c + conv(c, 1j * ks * c) - ghat
        # Jacobian of c -> c + c * (i k c) is I + C(i k c) + C(c) diag(i k)
        J = np.eye(2 * K + 1, dtype=complex)
        for col in range(2 * K + 1):
            e = np.zeros(2 * K + 1, complex)
            e[col] = 1
            J[:, col] += conv(e, 1j * ks * c) + conv(c, 1j * ks * e)
        c = c - np.linalg.solve(J, F)
        out.append(c.copy())
    x = 2 * np.pi * np.arange(n) / n
    return [np.real(np.exp(1j * np.outer(x, ks)) @ cc) for cc in out]


# -- graded spaces -----------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_norms_nondecreasing(seed):
    f = periodic_corpus(GRID, 2, seed=seed)[seed % 2]
    assert np.all(np.diff(SPACE6.norms(f)) >= 0)
    x = np.random.default_rng(seed).normal(size=40)
    assert np.all(np.diff(SequenceSpace(40, 8).norms(x)) >= 0)


def test_sequence_norm_definition():
    x = np.array([0.0, 0.5, -0.25, 0.0])
    sp = SequenceSpace(4, 3)
    np.testing.assert_allclose(sp.norms(x), [0.5, 1.0, 2.25, 6.75], rtol=1e-14)
    assert np.all(sp.norms(np.zeros(4)) == 0)


# -- smoothing -----------------------------------------------------------------

def test_rejects_small_theta_and_bad_profile():
    S = mollifier_smoothing(GRID)
    with pytest.raises(ValueError):
        S.apply(0.5, np.ones(GRID.size))
    with pytest.raises(ValueError):
        mollifier_smoothing(GRID, gamma=lambda s: np.exp(-s))
    with pytest.raises(ValueError):
        mollifier_smoothing(GRID, kind="gaussian")


@pytest.mark.parametrize("kind", ["spectral", "spatial"])
def test_constant_is_fixed(kind):
    S = mollifier_smoothing(GRID, kind=kind)
    c = np.full(GRID.size, 3.7)
    for th in (1.0, 2.0, 7.5, 64.0, 1e6):
        np.testing.assert_allclose(S.apply(th, c), c, atol=1e-12)


@pytest.mark.parametrize("kind", ["spectral", "spatial"])
def test_smoothing_tends_to_identity(kind):
    S = mollifier_smoothing(GRID, kind=kind)
    for f in periodic_corpus(GRID, 6, seed=4):
        d = identity_defect(S, f, 2.0 ** np.arange(1, 7), SPACE6)
        # strictly decreasing down to the round-off floor
        assert np.all(np.diff(d) <= 1e-15)
        assert np.all(np.diff(d)[d[1:] > 1e-13] < 0)
        assert d[-1] < 0.05 * d[0]


def test_spatial_kernel_contracts_each_norm():
    S = mollifier_smoothing(GRID, kind="spatial")
    rep = verify_smoothing(S, periodic_corpus(GRID, 10, seed=1), range(4),
                           2.0 ** np.arange(1, 7), SPACE6)
    for k in range(4):
        assert rep.forward[k, k] <= 1 + 1e-6


def test_single_mode_ratio_peaks_near_its_frequency():
    S = mollifier_smoothing(GRID)
    f = np.cos(16 * GRID.x)
    thetas = np.linspace(4, 64, 241)
    r = [SPACE6.norm(S.apply(t, f), 2) / (t**2 * SPACE6.norm(f, 0)) for t in thetas]
    peak = thetas[int(np.argmax(r))]
    assert 8 <= peak <= 16 and np.isfinite(max(r))
    # multiplier at the peak matches the explicit transform
    i = int(np.argmax(r))
    assert r[i] == pytest.approx(256 * plateau(16 / peak) / peak**2, rel=1e-10)


def test_zero_vector_ratios_are_zero():
    S = mollifier_smoothing(GRID)
    rep = verify_smoothing(S, [np.zeros(GRID.size)], range(3), [2.0, 4.0], SPACE6)
    assert all(v == 0 for t in (rep.forward, rep.remainder, rep.limit) for v in t.values())
    with pytest.raises(ValueError):
        verify_smoothing(S, [], range(3), [2.0], SPACE6)


def test_spectral_tables_stable_up_to_grade_six():
    S = mollifier_smoothing(GRID)
    rep = verify_smoothing(S, periodic_corpus(GRID, 50), range(7), 2.0 ** np.arange(1, 7), SPACE6)
    assert rep.passed


def test_spatial_remainder_saturates():
    # positive kernels only gain two orders in ||(I - S) x||
    S = mollifier_smoothing(GRID, kind="spatial")
    rep = verify_smoothing(S, periodic_corpus(GRID, 10), range(7), 2.0 ** np.arange(1, 7), SPACE6)
    assert rep.drift["remainder", (0, 2)] < 2
    assert rep.drift["remainder", (0, 6)] > 2
    assert not rep.passed


# -- interpolation ------------------------------------------------------------

def test_interpolation_trivial_and_equality_cases():
    corpus = periodic_corpus(GRID, 10, seed=2)
    rep = interpolation_check(corpus, [(1, 1, 4), (0, 0, 3)], SPACE6)
    assert all(c <= 1 for c in rep.constants.values())
    for N in (2, 16, 64):  # grid nodes hit the extrema of every derivative
        f = np.cos(N * GRID.x)
        for t in ((0, 1, 2), (0, 3, 6), (2, 3, 5)):
            assert interpolation_ratio(SPACE6.norms(f), *t) == pytest.approx(1.0, abs=1e-10)


def test_interpolation_random_trig_polynomials():
    rng = np.random.default_rng(7)
    corpus = []
    for _ in range(60):
        k = np.arange(1, int(rng.integers(1, 33)) + 1)
        a = rng.normal(size=(2, k.size))
        corpus.append(a[0] @ np.cos(np.outer(k, GRID.x)) + a[1] @ np.sin(np.outer(k, GRID.x)))
    rep = interpolation_check(corpus, [(0, 1, 2), (0, 2, 4), (1, 2, 5)], SPACE6)
    assert rep.constants[0, 1, 2] <= 4
    assert rep.passed
    with pytest.raises(ValueError):
        interpolation_check([np.zeros(GRID.size)], [(0, 1, 2)], SPACE6)


# -- engine --------------------------------------------------------------------

def test_theta_schedule_and_budget_sum():
    th = theta_schedule(2.0, 60)
    finite = np.isfinite(th[1:])
    np.testing.assert_array_equal(th[1:][finite], [float(t) ** 1.25 for t in th[:-1][finite]])
    assert np.all(np.diff(th[np.isfinite(th)]) > 0)
    for t0 in (2.0, 3.0, 4.0, 8.0):
        assert np.sum(theta_schedule(t0, 60) ** -3.0) <= 1 / t0


def test_zero_rhs_returns_zero():
    p = CircleToy(np.zeros(128))
    x, tr = run(p, 4.0, mollifier_smoothing(p.grid))
    assert np.all(x.payload == 0) and tr.status == "converged" and len(tr.steps) == 1
    assert audit_trace(IterationTrace(4, 1.0, 4.0, 0.0, True)).passed


def test_degenerate_diagonal_matches_newton():
    g = np.random.default_rng(0).uniform(-0.2, 0.2, 30)
    p = DiagonalToy(g, degenerate=True)
    x, tr = run(p, 4.0, IdentitySmoothing(), budget=8, tol=0.0, enforce_precondition=False,
                keep_iterates=True)
    y = np.zeros_like(g)
    for it in tr.iterates:
        np.testing.assert_allclose(it, y, rtol=0, atol=1e-12)
        y = y - (y + y * y - g) / (1 + 2 * y)


def test_degenerate_circle_matches_fourier_newton():
    x = GRID.x[::4]
    p = CircleToy(0.3 * np.cos(x) - 0.2 * np.sin(2 * x) + 0.1 * np.cos(5 * x), delta=1e6,
                  degenerate=True)
    _, tr = run(p, 4.0, IdentitySmoothing(), budget=5, tol=0.0, enforce_precondition=False,
                keep_iterates=True)
    ref = newton_oracle_circle(p.g, p.K, len(tr.iterates) - 1)
    assert len(tr.iterates) >= 4
    for a, b in zip(tr.iterates, ref):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_diagonal_toy_converges_with_smoothing():
    j = np.arange(40)
    g = 1e-3 * 4.0**-4 * np.exp(-j) / (1 + j) ** 8
    p = DiagonalToy(g, delta=10.0)
    x, tr = run(p, 4.0, DiagonalSmoothing(40))
    assert tr.status == "converged"
    err = np.abs(x.payload - 2 * g / (1 + np.sqrt(1 + 4 * g)))
    # converged in grade 2m, so the error is weighted accordingly
    assert np.max(err * (1 + j) ** 8) <= 1e-10


def test_circle_toy_reference_run():
    p = CircleToy.scaled_rhs(0, 0.5 * 4.0**-4)
    S = mollifier_smoothing(p.grid)
    x, tr = run(p, 4.0, S)
    assert tr.status == "converged" and tr.final_residual <= 1e-9 and len(tr.steps) - 1 <= 10
    rep = audit_trace(tr)
    assert rep.all_I and rep.passed
    # two schedules reach the same limit
    x8, _ = run(p, 8.0, S, enforce_precondition=False)
    assert p.space.norm(x.payload - x8.payload, p.m) <= 1e-8
    # determinism
    _, tr2 = run(p, 4.0, S)
    assert tr2.to_json() == tr.to_json()


def test_precondition_enforced():
    p = CircleToy.scaled_rhs(0, 0.1)
    with pytest.raises(ValueError):
        run(p, 4.0, mollifier_smoothing(p.grid))
    with pytest.raises(ValueError):
        run(p, 1.5, mollifier_smoothing(p.grid), enforce_precondition=False)


def test_solution_estimate_bounded():
    ratios = []
    for seed in range(10):
        p = CircleToy.scaled_rhs(seed, 0.5 * 4.0**-4)
        _, tr = run(p, 4.0, mollifier_smoothing(p.grid))
        assert tr.status == "converged"
        ratios.append(tr.estimate_ratio)
    assert np.all(np.isfinite(ratios)) and max(ratios) <= 1.0


def test_audit_finds_first_violation():
    p = CircleToy.scaled_rhs(0, 50.0)
    _, tr = run(p, 2.0, mollifier_smoothing(p.grid), enforce_precondition=False)
    assert tr.status == "trust_region"
    assert audit_trace(tr).first_violation == ("I", 0)
    # supplied constants that are too small flag II
    ok = CircleToy.scaled_rhs(0, 0.5 * 4.0**-4)
    _, tr = run(ok, 4.0, mollifier_smoothing(ok.grid))
    rep = audit_trace(tr)
    assert audit_trace(tr, M=0.5 * rep.M).first_violation[0] == "II"


def test_trace_json_round_trip():
    p = CircleToy.scaled_rhs(1, 0.5 * 4.0**-4)
    _, tr = run(p, 4.0, mollifier_smoothing(p.grid))
    back = IterationTrace.from_json(tr.to_json())
    assert back.to_json() == tr.to_json()
    assert audit_trace(back) == audit_trace(tr)
    assert isinstance(json.loads(tr.to_json())["steps"], list)


def test_inverse_defects_are_roundoff_for_exact_inverses():
    p = CircleToy.scaled_rhs(2, 0.5 * 4.0**-4)
    probes = [np.cos(k * p.grid.x) for k in range(1, 4)]
    x0 = np.zeros(128)
    c1, c2 = inverse_defects(p, x0, probes)
    # graded defects of an exact inverse are round-off times |xi|^{2m}: finite only
    assert np.isfinite(c1) and np.isfinite(c2)
    for q in probes:
        assert np.abs(p.V(x0, p.F(x0), p.DF(x0, q)) - q).max() < 1e-13
        assert np.abs(p.DF(x0, p.V(x0, p.F(x0), q)) - q).max() < 1e-13
    d = DiagonalToy(np.full(20, 0.01))
    c1, c2 = inverse_defects(d, np.full(20, 0.05), [np.ones(20)])
    assert c1 < 1e-12 and c2 < 1e-12
