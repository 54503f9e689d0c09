"""Runnable acceptance checks, one function per criterion.

Each check returns a :class:`CriterionResult` holding the measured numbers,
the pass flag at the stated tolerances and the wall time against its budget.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .flat_solver import (
    ModeSource, TangentialOperator, ab_of_source, green_apply, perturbed_solve, radial_mesh,
    random_bandlimited_source, solve_mode,
)
from .branched_field import fit_half_integer
from .models import (
    ModelParams, asymptotic_coeffs, graph_integrals, involution, laplacian_residual,
    lawlor_graph, nondegeneracy_floor, solve_h_for_a,
)
from .morse_forge import BirthConfig, verify_birth
from .nash_moser import (
    CircleToy, DiagonalToy, IdentitySmoothing, PeriodicGrid, PeriodicSpace, audit_trace,
    interpolation_check, interpolation_ratio, mollifier_smoothing, periodic_corpus, run,
    verify_smoothing,
)
from .preglue import GlueConfig, HarmonicBackground, default_cubic, error_scan


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    runtime: float = 0.0
    budget: float | None = None

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        budget = f" / {self.budget:g} s" if self.budget else ""
        return f"[{status}] criterion {self.number}: {self.title} ({self.runtime:.1f} s{budget})"

    def to_dict(self):
        return dict(number=self.number, title=self.title, passed=self.passed,
                    metrics=_plain(self.metrics), runtime=self.runtime, budget=self.budget)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _timed(number, title, budget):
    def wrap(fn):
        def inner():
            t0 = time.perf_counter()
            ok, metrics = fn()
            dt = time.perf_counter() - t0
            within = budget is None or dt < budget
            metrics["within_budget"] = within
            return CriterionResult(number, title, bool(ok and within), metrics, dt, budget)
        inner.number, inner.title = number, title
        return inner
    return wrap


# ---------------------------------------------------------------------------

@_timed(1, "model coefficients and trace identity", 1.0)
def criterion_1():
    c = asymptotic_coeffs(ModelParams(3, (1.0, 1.0)))
    ref = np.array([math.pi / 4, math.pi / 8, math.pi / 8, -math.pi / 4])
    err = float(np.abs(np.concatenate([[c.a0], c.a]) - ref).max())
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        a = asymptotic_coeffs(ModelParams(3, tuple(rng.uniform(0.2, 5.0, 2)))).a
        worst = max(worst, abs(sum(a)) / max(abs(v) for v in a))
    return err <= 1e-9 and worst <= 1e-9, dict(coeff_err=err, trace_rel_max=worst)


@_timed(2, "surjectivity round trip", 30.0)
def criterion_2():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(50):
        target = rng.uniform(0.05, 2.0, 2)
        p = solve_h_for_a(3, target)
        got = np.asarray(asymptotic_coeffs(p).a[:2])
        worst = max(worst, float(np.abs(got - target).max() / np.abs(target).max()))
    return worst <= 1e-8, dict(round_trip_rel_max=worst)


@_timed(3, "graph consistency, harmonicity, non-degeneracy", None)
def criterion_3():
    rng = np.random.default_rng(2)
    beta_err = 0.0
    for _ in range(10):
        p = ModelParams(3, tuple(rng.uniform(0.2, 5.0, 2)))
        b, _, _ = graph_integrals(p, np.array(np.inf))
        a1 = asymptotic_coeffs(p).a[0]
        beta_err = max(beta_err, abs(b[0] - 2 * a1) / abs(2 * a1))
    p = ModelParams(3, (1.3, 0.7))
    inv_err = 0.0
    for _ in range(10):
        w = rng.normal(size=3)
        w /= np.linalg.norm(w)
        s = rng.uniform(-3, 3)
        g = lawlor_graph(p, w, s)
        g2 = lawlor_graph(p, *involution(w, s))
        scale = max(1.0, np.abs(g.x).max(), np.abs(g.y).max())
        inv_err = max(inv_err, float(max(np.abs(g2.x - g.x).max(),
                                         np.abs(g2.y + g.y).max()) / scale))
    pts = []
    while len(pts) < 30:
        x = rng.uniform(-3, 3, 3)
        if abs(x[2]) >= 0.2 or np.sum(x[:2] ** 2 / p.harr**2) > 1.2 * 1.2**2:
            pts.append(x)
    lap = float(laplacian_residual(p, np.array(pts)).max())
    floor = nondegeneracy_floor(p)
    ok = beta_err <= 1e-8 and inv_err <= 1e-14 and lap <= 1e-4 and floor > 0
    return ok, dict(beta_rel_err=beta_err, involution_err=inv_err, laplacian_rel=lap,
                    nondegeneracy_floor=floor)


@_timed(4, "flat solver order, A/B cross-check, perturbed contraction", 60.0)
def criterion_4():
    nu = 1.5

    def rho(r):
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, r**nu * (2 - 2 * (2 * nu + 1) * (1 - r) / safe), 0.0)

    errs = []
    for J in (256, 512):
        sol = solve_mode(ModeSource.from_function(1, rho, 1.0, J), J)
        ue = sol.r**nu * (1 - sol.r) ** 2
        errs.append(float(np.abs(sol.u - ue).max() / np.abs(ue).max()))
    order = math.log2(errs[0] / errs[1])

    r = radial_mesh(1.0, 512)
    rng = np.random.default_rng(11)
    ab_err = 0.0
    for _ in range(20):
        src = random_bandlimited_source(rng, r, 64)
        exact = ab_of_source(src, 1.0)
        fit = fit_half_integer(green_apply(src, 1.0, l_max=31), (0.05, 0.2))
        ab_err = max(ab_err, float(np.abs(np.subtract(exact.A, fit.A)).max()),
                     float(np.abs(np.subtract(exact.B, fit.B)).max()))
    src = random_bandlimited_source(np.random.default_rng(3), r, 64)
    res = perturbed_solve(src, TangentialOperator(c_rr=0.01), 1.0, l_max=31)
    ok = (errs[1] <= 1e-4 and 1.8 <= order <= 2.2 and ab_err <= 1e-6 and res.converged
          and res.iterations <= 10 and res.contraction <= 0.25)
    return ok, dict(manufactured_err_512=errs[1], observed_order=order, ab_max_diff=ab_err,
                    perturbed_iterations=res.iterations, contraction=res.contraction)


@_timed(5, "pre-gluing error exponents and divergence support", 300.0)
def criterion_5(n_dirs=200):
    model = ModelParams(3, (1.0, 1.0))
    bg = HarmonicBackground.matching(model)
    eps = [2.0**-k for k in range(4, 8)]
    quad = error_scan(GlueConfig(3, eps[0], 0.1, 1.0, 4.0), eps, bg, model, n_dirs=n_dirs)
    cub = HarmonicBackground(bg.a, default_cubic(3))
    cubic = error_scan(GlueConfig(3, eps[0], 0.45, 1.0, 4.0), eps, cub, model, n_dirs=n_dirs)
    ratio = max(max(row.sup_outside / row.sup_div for row in rep.rows) for rep in (quad, cubic))
    s1 = quad.slopes["sup_primitive_err"]
    s2 = cubic.slopes["sup_primitive_err"]
    ok = 1.9 <= s1 <= 2.3 and 1.45 <= s2 <= 1.85 and ratio <= 1e-8
    return ok, dict(slope_quadratic=s1, slope_cubic=s2, predicted_cubic=cubic.predicted["sup_primitive_err"],
                    div_slope_quadratic=quad.slopes["sup_div"], outside_inside_ratio=ratio)


@_timed(6, "smoothing tables to grade 6", None)
def criterion_6():
    grid = PeriodicGrid(512)
    space = PeriodicSpace(grid, 6)
    S = mollifier_smoothing(grid)
    rep = verify_smoothing(S, periodic_corpus(grid, 50), range(7), 2.0 ** np.arange(1, 7), space)
    c = np.full(grid.size, 3.7)
    fixed = max(float(np.abs(S.apply(t, c) - c).max()) for t in (1.0, 2.0, 16.0, 1e6))
    return rep.passed and fixed <= 1e-12, dict(max_drift=max(rep.drift.values()),
                                               constant_fixed_err=fixed)


@_timed(7, "interpolation inequality", None)
def criterion_7():
    grid = PeriodicGrid(512)
    space = PeriodicSpace(grid, 6)
    triples = [(0, 1, 2), (0, 2, 4), (1, 2, 5), (0, 3, 6)]
    rep = interpolation_check(periodic_corpus(grid, 50, seed=5), triples, space)
    eq = 0.0
    for N in (2, 16, 64):
        nrm = space.norms(np.cos(N * grid.x))
        eq = max(eq, max(abs(interpolation_ratio(nrm, *t) - 1) for t in triples))
    return rep.passed and eq <= 1e-10, dict(constants=rep.constants, drift=rep.drift,
                                            equality_err=eq)


@_timed(8, "Nash-Moser engine", None)
def criterion_8():
    g = np.random.default_rng(0).uniform(-0.2, 0.2, 30)
    _, tr = run(DiagonalToy(g, degenerate=True), 4.0, IdentitySmoothing(), budget=8, tol=0.0,
                enforce_precondition=False, keep_iterates=True)
    y, oracle = np.zeros_like(g), 0.0
    for it in tr.iterates:
        oracle = max(oracle, float(np.abs(it - y).max()))
        y = y - (y + y * y - g) / (1 + 2 * y)

    level = 0.5 * 4.0**-4
    p = CircleToy.scaled_rhs(0, level)
    S = mollifier_smoothing(p.grid)
    x4, tr4 = run(p, 4.0, S)
    audit = audit_trace(tr4)
    x8, _ = run(p, 8.0, S, enforce_precondition=False)
    limit = p.space.norm(x4.payload - x8.payload, p.m)
    ratios = []
    for seed in range(10):
        _, t = run(CircleToy.scaled_rhs(seed, level), 4.0, S)
        ratios.append(t.estimate_ratio if t.status == "converged" else np.inf)
    ok = (oracle <= 1e-12 and tr4.status == "converged" and tr4.final_residual <= 1e-9
          and len(tr4.steps) - 1 <= 10 and audit.all_I and limit <= 1e-8
          and np.all(np.isfinite(ratios)))
    return ok, dict(oracle_max_diff=oracle, circle_steps=len(tr4.steps) - 1,
                    circle_residual=tr4.final_residual, audit_all_I=audit.all_I,
                    schedule_limit_diff=limit, estimate_constant=float(max(ratios)))


@_timed(9, "Morse birth critical points and lifts", 10.0)
def criterion_9():
    base = verify_birth(BirthConfig(10.0))
    lifts = [verify_birth(BirthConfig(10.0, n, r)) for n, r in ((4, 1), (5, 2))]
    ok = (base.count_ok and base.locations_err <= 1e-9 and base.indices_ok
          and base.hessian_err <= 1e-9 and base.outer_identity_err <= 1e-12
          and all(rep.indices_rn_ok and len(rep.critical_points_rn) == 2 for rep in lifts))
    return ok, dict(locations_err=base.locations_err, hessian_err=base.hessian_err,
                    outer_identity_err=base.outer_identity_err,
                    indices=[c["index"] for c in base.critical_points],
                    lift_indices=[sorted(c["index"] for c in rep.critical_points_rn) for rep in lifts])


CRITERIA = {f.number: f for f in (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                                  criterion_6, criterion_7, criterion_8, criterion_9)}


def run_criterion(k: int) -> CriterionResult:
    if k not in CRITERIA:
        raise ValueError(f"no criterion {k}; choose from 1..{len(CRITERIA)}")
    return CRITERIA[k]()


def run_all(numbers=None):
    return [run_criterion(k) for k in (numbers or sorted(CRITERIA))]


def summary_json(results):
    return json.dumps([r.to_dict() for r in results], indent=1)
