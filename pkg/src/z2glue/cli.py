"""Command-line frontend.

Every subcommand builds a :class:`RunConfig`, runs one module operation and
emits JSON (default) or CSV. Parameters come from built-in defaults, then an
optional JSON config file with flat keys (``"preglue.scan.sigma"``,
``"preglue.sigma"`` or ``"sigma"``), then explicit flags.

Exit codes: 0 success, 1 verification or I/O failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

# CSV column order per subcommand
COLUMNS = {
    ("model", "coeffs"): ["a0", "a"],
    ("model", "solve-h"): ["h", "a"],
    ("model", "graph"): ["s", "w", "x", "y"],
    ("model", "classify"): ["is_regular", "index_pair", "hessian_eigs", "residual"],
    ("flat", "solve"): ["grid", "rel_err", "leading_coeff"],
    ("flat", "ab"): ["source", "A_exact", "A_fit", "B_exact", "B_fit", "max_diff"],
    ("flat", "perturbed"): ["iteration", "residual"],
    ("preglue", "scan"): ["eps", "sup_primitive_err", "sup_div", "weighted_sup"],
    ("preglue", "weight"): ["rho", "weight"],
    ("nm", "run"): ["j", "theta", "residual", "x_norm_m"],
    ("nm", "verify-smoothing"): ["table", "k1", "k2", "constant", "drift"],
    ("nm", "interp"): ["k1", "k2", "k3", "constant", "constant_half", "drift"],
    ("nm", "audit"): ["j", "cond_I", "cond_II", "cond_III"],
    ("morse", "verify"): ["location", "index", "hessian_eigs", "value"],
    ("morse", "lift"): ["location", "index", "hessian_eigs", "value"],
    ("accept", None): ["number", "title", "passed", "runtime"],
}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    group: str
    command: str | None
    params: dict
    out: str | None = None
    format: str = "json"
    seed: int = 0


@dataclass
class Result:
    payload: dict
    rows: list = field(default_factory=list)
    ok: bool = True


# ---------------------------------------------------------------------------
# formatting

def _round(x):
    if isinstance(x, dict):
        return {str(k): _round(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v) for v in x]
    if isinstance(x, np.ndarray):
        return _round(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        # + 0.0 folds -0.0 into 0.0
        return x if not math.isfinite(x) else float(f"{x:.12g}") + 0.0
    return x


def _cell(v):
    v = _round(v)
    if isinstance(v, list):
        return ";".join(_cell(u) for u in v)
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def render(result: Result, key, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(_round(result.payload), indent=1, allow_nan=True) + "\n"
    cols = COLUMNS[key]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in result.rows:
        w.writerow([_cell(row.get(c, "")) for c in cols])
    return buf.getvalue()


def emit(result: Result, key, fmt: str, path: str | None):
    text = render(result, key, fmt)
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# argument helpers

def _floats(s):
    try:
        return tuple(float(v) for v in str(s).split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from exc


DEFAULTS: dict = {}


def _opt(p, key, name, default, **kw):
    dest = name.lstrip("-").replace("-", "_")
    DEFAULTS[key + (dest,)] = default
    p.add_argument(name, dest=dest, default=None, **kw)


def _resolve(key, ns, config):
    params = {}
    for full, default in DEFAULTS.items():
        if full[:-1] != key:
            continue
        dest = full[-1]
        val = getattr(ns, dest, None)
        if val is None:
            group, cmd = key
            names = [f"{group}.{cmd}.{dest}", f"{group}.{dest}", dest] if cmd else [f"{group}.{dest}", dest]
            for nm in names:
                if nm in config:
                    val = config[nm]
                    if isinstance(val, list):
                        val = tuple(val)
                    break
        params[dest] = default if val is None else val
    return params


def _common(p):
    p.add_argument("--config", default=None, help="JSON file with flat namespaced keys")
    p.add_argument("--out", default=None, help="output path (stdout when omitted)")
    p.add_argument("--format", default=None, choices=["json", "csv"])
    p.add_argument("--seed", type=int, default=None)


def build_parser():
    DEFAULTS.clear()
    top = argparse.ArgumentParser(prog="z2glue", description=__doc__.splitlines()[0])
    groups = top.add_subparsers(dest="group", metavar="GROUP")

    def sub(parent, name, key, help):
        p = parent.add_parser(name, help=help)
        p.set_defaults(key=key)
        _common(p)
        return p

    g = groups.add_parser("model", help="ellipsoid-branched model forms").add_subparsers(dest="command", metavar="CMD")
    p = sub(g, "coeffs", ("model", "coeffs"), "asymptotic quadric coefficients")
    _opt(p, ("model", "coeffs"), "--n", 3, type=int)
    _opt(p, ("model", "coeffs"), "--h", (1.0, 1.0), type=_floats)
    p = sub(g, "solve-h", ("model", "solve-h"), "semi-axes for target coefficients")
    _opt(p, ("model", "solve-h"), "--n", 3, type=int)
    _opt(p, ("model", "solve-h"), "--a", (math.pi / 8, math.pi / 8), type=_floats)
    p = sub(g, "graph", ("model", "graph"), "Lawlor graph point and its involution image")
    _opt(p, ("model", "graph"), "--n", 3, type=int)
    _opt(p, ("model", "graph"), "--h", (1.0, 1.0), type=_floats)
    _opt(p, ("model", "graph"), "--w", (0.6, 0.8, 0.0), type=_floats)
    _opt(p, ("model", "graph"), "--s", 0.5, type=float)
    p = sub(g, "classify", ("model", "classify"), "index pair of the model's quadric zero")
    _opt(p, ("model", "classify"), "--n", 3, type=int)
    _opt(p, ("model", "classify"), "--h", (1.0, 1.0), type=_floats)

    g = groups.add_parser("flat", help="flat branched Laplacian solver").add_subparsers(dest="command", metavar="CMD")
    p = sub(g, "solve", ("flat", "solve"), "manufactured-solution refinement for one mode")
    _opt(p, ("flat", "solve"), "--l", 1, type=int)
    _opt(p, ("flat", "solve"), "--grid", 512, type=int)
    p = sub(g, "ab", ("flat", "ab"), "A/B extraction vs annulus fitting on random sources")
    _opt(p, ("flat", "ab"), "--count", 20, type=int)
    _opt(p, ("flat", "ab"), "--grid", 512, type=int)
    p = sub(g, "perturbed", ("flat", "perturbed"), "fixed-point solve with a tangential operator")
    _opt(p, ("flat", "perturbed"), "--c-rr", 0.01, type=float)
    _opt(p, ("flat", "perturbed"), "--c-rt", 0.0, type=float)
    _opt(p, ("flat", "perturbed"), "--c-tt", 0.0, type=float)
    _opt(p, ("flat", "perturbed"), "--grid", 512, type=int)

    g = groups.add_parser("preglue", help="pre-gluing ansatz").add_subparsers(dest="command", metavar="CMD")
    p = sub(g, "scan", ("preglue", "scan"), "error exponents over eps")
    k = ("preglue", "scan")
    _opt(p, k, "--n", 3, type=int)
    _opt(p, k, "--h", (1.0, 1.0), type=_floats)
    _opt(p, k, "--sigma", 0.1, type=float)
    _opt(p, k, "--delta", 1.0, type=float)
    _opt(p, k, "--N", 4.0, type=float)
    _opt(p, k, "--eps", tuple(2.0**-j for j in range(4, 8)), type=_floats)
    _opt(p, k, "--cubic", 0.0, type=float, help="scale of the harmonic cubic term (0 = off)")
    _opt(p, k, "--n-dirs", 200, type=int)
    p = sub(g, "weight", ("preglue", "weight"), "weight function samples")
    k = ("preglue", "weight")
    _opt(p, k, "--eps", 0.01, type=float)
    _opt(p, k, "--sigma", 0.1, type=float)
    _opt(p, k, "--delta", 0.2, type=float)
    _opt(p, k, "--N", 4.0, type=float)
    _opt(p, k, "--rho", (0.0, 0.02, 0.1, 0.4, 0.6), type=_floats)

    g = groups.add_parser("nm", help="Nash-Moser engine").add_subparsers(dest="command", metavar="CMD")
    p = sub(g, "run", ("nm", "run"), "run a demo problem")
    k = ("nm", "run")
    _opt(p, k, "--demo", "circle", choices=["circle", "diagonal"])
    _opt(p, k, "--theta0", 4.0, type=float)
    _opt(p, k, "--level", 0.5 * 4.0**-4, type=float, help="||g||_{2m}; 0 forces g = 0")
    _opt(p, k, "--budget", 25, type=int)
    _opt(p, k, "--trace-out", None, help="write the full iteration trace JSON here")
    p = sub(g, "verify-smoothing", ("nm", "verify-smoothing"), "smoothing constant tables")
    k = ("nm", "verify-smoothing")
    _opt(p, k, "--kind", "spectral", choices=["spectral", "spatial"])
    _opt(p, k, "--count", 50, type=int)
    _opt(p, k, "--grades", 6, type=int)
    _opt(p, k, "--grid", 512, type=int)
    p = sub(g, "interp", ("nm", "interp"), "interpolation constants")
    k = ("nm", "interp")
    _opt(p, k, "--count", 50, type=int)
    _opt(p, k, "--grid", 512, type=int)
    p = sub(g, "audit", ("nm", "audit"), "recheck the convergence conditions of a trace")
    _opt(p, ("nm", "audit"), "--trace", None, help="trace JSON from nm run --trace-out")

    g = groups.add_parser("morse", help="birth of two critical points").add_subparsers(dest="command", metavar="CMD")
    for name in ("verify", "lift"):
        p = sub(g, name, ("morse", name), "full verification report" if name == "verify"
                else "critical points of the lift to R^n")
        _opt(p, ("morse", name), "--M", 10.0, type=float)
        _opt(p, ("morse", name), "--n", 3 if name == "verify" else 4, type=int)
        _opt(p, ("morse", name), "--r", 1, type=int)

    p = groups.add_parser("accept", help="run acceptance criteria")
    p.set_defaults(key=("accept", None))
    _common(p)
    _opt(p, ("accept", None), "--criterion", None, type=int, help="1..9; all when omitted")
    return top


# ---------------------------------------------------------------------------
# handlers

def _model_coeffs(c: RunConfig):
    from .models import ModelParams, asymptotic_coeffs
    q = asymptotic_coeffs(ModelParams(c.params["n"], c.params["h"]))
    return Result({"a0": q.a0, "a": list(q.a)}, [{"a0": q.a0, "a": list(q.a)}])


def _model_solve_h(c: RunConfig):
    from .models import asymptotic_coeffs, solve_h_for_a
    p = solve_h_for_a(c.params["n"], c.params["a"])
    a = list(asymptotic_coeffs(p).a)
    return Result({"h": list(p.h), "a": a}, [{"h": list(p.h), "a": a}])


def _model_graph(c: RunConfig):
    from .models import ModelParams, involution, lawlor_graph
    p = ModelParams(c.params["n"], c.params["h"])
    w = np.asarray(c.params["w"], dtype=float)
    w = w / np.linalg.norm(w)
    s = c.params["s"]
    rows = []
    for ww, ss in ((w, s), involution(w, s)):
        g = lawlor_graph(p, ww, ss)
        rows.append({"s": g.s, "w": g.w, "x": g.x, "y": g.y})
    return Result({"point": rows[0], "involution": rows[1]}, rows)


def _model_classify(c: RunConfig):
    from .models import ModelParams, asymptotic_coeffs, classify_zero
    q = asymptotic_coeffs(ModelParams(c.params["n"], c.params["h"]))
    z = classify_zero(q.gradient, np.zeros(c.params["n"]), 1.0, seed=c.seed)
    row = {"is_regular": z.is_regular, "index_pair": list(z.index_pair),
           "hessian_eigs": list(z.hessian_eigs), "residual": z.residual}
    return Result(row, [row], ok=z.is_regular)


def _flat_solve(c: RunConfig):
    from .flat_solver import ModeSource, solve_mode
    l, top = c.params["l"], c.params["grid"]
    if top < 64:
        raise UsageError("grid must be at least 64")
    nu = l + 0.5

    def rho(r):
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, r**nu * (2 - 2 * (2 * nu + 1) * (1 - r) / safe), 0.0)

    rows = []
    J = top
    grids = []
    while J >= 64 and len(grids) < 4:
        grids.insert(0, J)
        J //= 2
    for J in grids:
        sol = solve_mode(ModeSource.from_function(l, rho, 1.0, J), J)
        ue = sol.r**nu * (1 - sol.r) ** 2
        rows.append({"grid": J, "rel_err": float(np.abs(sol.u - ue).max() / np.abs(ue).max()),
                     "leading_coeff": sol.leading_coeff})
    order = math.log2(rows[-2]["rel_err"] / rows[-1]["rel_err"]) if len(rows) > 1 else float("nan")
    ok = rows[-1]["rel_err"] <= 1e-4 and (top < 512 or 1.8 <= order <= 2.2)
    return Result({"l": l, "rows": rows, "observed_order": order}, rows, ok)


def _flat_ab(c: RunConfig):
    from .branched_field import fit_half_integer
    from .flat_solver import ab_of_source, green_apply, radial_mesh, random_bandlimited_source
    r = radial_mesh(1.0, c.params["grid"])
    rng = np.random.default_rng(c.seed)
    rows = []
    for i in range(c.params["count"]):
        src = random_bandlimited_source(rng, r, 64)
        ex = ab_of_source(src, 1.0)
        fit = fit_half_integer(green_apply(src, 1.0, l_max=31), (0.05, 0.2))
        diff = max(np.abs(np.subtract(ex.A, fit.A)).max(), np.abs(np.subtract(ex.B, fit.B)).max())
        rows.append({"source": i, "A_exact": ex.A, "A_fit": fit.A, "B_exact": ex.B,
                     "B_fit": fit.B, "max_diff": float(diff)})
    worst = max((r["max_diff"] for r in rows), default=0.0)
    return Result({"rows": rows, "max_diff": worst}, rows, worst <= 1e-6)


def _flat_perturbed(c: RunConfig):
    from .errors import ContractionError
    from .flat_solver import TangentialOperator, perturbed_solve, radial_mesh, random_bandlimited_source
    r = radial_mesh(1.0, c.params["grid"])
    src = random_bandlimited_source(np.random.default_rng(c.seed), r, 64)
    op = TangentialOperator(c.params["c_rr"], c.params["c_rt"], c.params["c_tt"])
    try:
        res = perturbed_solve(src, op, 1.0, l_max=31)
    except ContractionError as exc:
        return Result({"error": str(exc)}, [], ok=False)
    rows = [{"iteration": i, "residual": h} for i, h in enumerate(res.history)]
    payload = {"iterations": res.iterations, "residual": res.residual,
               "contraction": res.contraction, "converged": res.converged}
    return Result(payload, rows, res.converged)


def _preglue_scan(c: RunConfig):
    from .models import ModelParams
    from .preglue import GlueConfig, HarmonicBackground, default_cubic, error_scan
    p = c.params
    model = ModelParams(p["n"], p["h"])
    bg = HarmonicBackground.matching(model)
    if p["cubic"]:
        bg = HarmonicBackground(bg.a, default_cubic(p["n"], p["cubic"]))
    eps = sorted(p["eps"], reverse=True)
    cfg = GlueConfig(p["n"], eps[0], p["sigma"], p["delta"], p["N"])
    rep = error_scan(cfg, eps, bg, model, n_dirs=p["n_dirs"])
    rows = [{"eps": r.eps, "sup_primitive_err": r.sup_primitive_err, "sup_div": r.sup_div,
             "weighted_sup": r.weighted_sup} for r in rep.rows]
    slope = {"eps": "slope", **{k: rep.slopes[k] for k in ("sup_primitive_err", "sup_div", "weighted_sup")}}
    pred = {"eps": "predicted", **{k: rep.predicted.get(k, "") for k in ("sup_primitive_err", "sup_div", "weighted_sup")}}
    payload = {"rows": [dict(r, sup_outside=x.sup_outside) for r, x in zip(rows, rep.rows)],
               "slopes": rep.slopes, "predicted": rep.predicted, "monotone": rep.monotone}
    return Result(payload, rows + [slope, pred], rep.ok)


def _preglue_weight(c: RunConfig):
    from .preglue import GlueConfig, weight
    p = c.params
    cfg = GlueConfig(3, p["eps"], p["sigma"], p["delta"], p["N"])
    rho = np.asarray(p["rho"], dtype=float)
    w = np.atleast_1d(weight(cfg, rho))
    rows = [{"rho": a, "weight": b} for a, b in zip(rho, w)]
    return Result({"rows": rows}, rows)


def _nm_problem(c: RunConfig):
    from .nash_moser import CircleToy, DiagonalSmoothing, DiagonalToy, mollifier_smoothing
    p = c.params
    level = p["level"]
    if level < 0:
        raise UsageError("level must be nonnegative")
    if p["demo"] == "circle":
        prob = CircleToy(np.zeros(128)) if level == 0 else CircleToy.scaled_rhs(c.seed, level)
        return prob, mollifier_smoothing(prob.grid)
    j = np.arange(40)
    g = np.exp(-j) / (1 + j) ** 8 * np.random.default_rng(c.seed).uniform(0.5, 1.0, 40)
    if level > 0:
        g *= level / DiagonalToy(g).space.norm(g, 8)
    else:
        g[:] = 0
    return DiagonalToy(g, delta=10.0), DiagonalSmoothing(40)


def _nm_run(c: RunConfig):
    from .nash_moser import run
    if c.params["theta0"] < 2:
        raise UsageError("theta0 must be at least 2")
    prob, S = _nm_problem(c)
    try:
        _, tr = run(prob, c.params["theta0"], S, budget=c.params["budget"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if c.params["trace_out"]:
        with open(c.params["trace_out"], "w") as fh:
            fh.write(tr.to_json())
    rows = [{"j": s.j, "theta": s.theta, "residual": s.F_norms[0], "x_norm_m": s.x_norms[tr.m]}
            for s in tr.steps]
    payload = {"status": tr.status, "steps": len(tr.steps) - 1, "final_residual": tr.final_residual,
               "estimate_ratio": tr.estimate_ratio, "precondition_ok": tr.precondition_ok}
    return Result(payload, rows, tr.status == "converged")


def _nm_verify_smoothing(c: RunConfig):
    from .nash_moser import PeriodicGrid, PeriodicSpace, mollifier_smoothing, periodic_corpus, verify_smoothing
    p = c.params
    grid = PeriodicGrid(p["grid"])
    space = PeriodicSpace(grid, p["grades"])
    S = mollifier_smoothing(grid, kind=p["kind"])
    rep = verify_smoothing(S, periodic_corpus(grid, p["count"], seed=c.seed), range(p["grades"] + 1),
                           2.0 ** np.arange(1, 7), space)
    rows = []
    for name in ("forward", "remainder", "limit"):
        for key, val in getattr(rep, name).items():
            k1, k2 = key if isinstance(key, tuple) else (key, key)
            rows.append({"table": name, "k1": k1, "k2": k2, "constant": val,
                         "drift": rep.drift.get((name, key), "")})
    return Result({"passed": rep.passed, "max_drift": max(rep.drift.values()), "rows": rows}, rows,
                  rep.passed)


def _nm_interp(c: RunConfig):
    from .nash_moser import PeriodicGrid, PeriodicSpace, interpolation_check, periodic_corpus
    grid = PeriodicGrid(c.params["grid"])
    space = PeriodicSpace(grid, 6)
    triples = [(0, 1, 2), (0, 2, 4), (1, 2, 5), (0, 3, 6)]
    rep = interpolation_check(periodic_corpus(grid, c.params["count"], seed=c.seed), triples, space)
    rows = [{"k1": t[0], "k2": t[1], "k3": t[2], "constant": rep.constants[t],
             "constant_half": rep.constants_half[t], "drift": rep.drift[t]} for t in triples]
    return Result({"passed": rep.passed, "rows": rows}, rows, rep.passed)


def _nm_audit(c: RunConfig):
    from .nash_moser import IterationTrace, audit_trace, run
    path = c.params["trace"]
    if path:
        with open(path) as fh:
            tr = IterationTrace.from_json(fh.read())
    else:
        c.params.update(demo="circle", level=0.5 * 4.0**-4)
        prob, S = _nm_problem(c)
        _, tr = run(prob, 4.0, S)
    rep = audit_trace(tr)
    rows = [{"j": j, "cond_I": a, "cond_II": b, "cond_III": d}
            for j, (a, b, d) in enumerate(zip(rep.cond_I, rep.cond_II, rep.cond_III))]
    payload = {"passed": rep.passed, "all_I": rep.all_I, "M": rep.M, "D": {str(k): v for k, v in rep.D.items()},
               "first_violation": rep.first_violation, "rows": rows}
    return Result(payload, rows, rep.passed)


def _morse(c: RunConfig, lift: bool):
    from .morse_forge import BirthConfig, find_critical_points_rn, verify_birth
    p = c.params
    cfg = BirthConfig(p["M"], p["n"], p["r"])
    if lift:
        crit = [dict(location=x.location, index=x.index, hessian_eigs=x.hessian_eigs, value=x.value)
                for x in find_critical_points_rn(cfg)]
        ok = len(crit) == 2 and sorted(x["index"] for x in crit) == [cfg.r, cfg.r + 1]
        return Result({"n": cfg.n, "r": cfg.r, "critical_points": crit, "passed": ok}, crit, ok)
    rep = verify_birth(cfg)
    payload = json.loads(rep.to_json())
    return Result(payload, payload["critical_points_rn"], rep.passed)


def _accept(c: RunConfig):
    from .acceptance import CRITERIA, run_criterion
    k = c.params["criterion"]
    if k is not None and k not in CRITERIA:
        raise UsageError(f"criterion must be in 1..{len(CRITERIA)}")
    results = [run_criterion(i) for i in ([k] if k is not None else sorted(CRITERIA))]
    for r in results:
        sys.stderr.write(r.line() + "\n")
    rows = [dict(number=r.number, title=r.title, passed=r.passed, runtime=r.runtime) for r in results]
    return Result({"criteria": [r.to_dict() for r in results]}, rows, all(r.passed for r in results))


HANDLERS = {
    ("model", "coeffs"): _model_coeffs,
    ("model", "solve-h"): _model_solve_h,
    ("model", "graph"): _model_graph,
    ("model", "classify"): _model_classify,
    ("flat", "solve"): _flat_solve,
    ("flat", "ab"): _flat_ab,
    ("flat", "perturbed"): _flat_perturbed,
    ("preglue", "scan"): _preglue_scan,
    ("preglue", "weight"): _preglue_weight,
    ("nm", "run"): _nm_run,
    ("nm", "verify-smoothing"): _nm_verify_smoothing,
    ("nm", "interp"): _nm_interp,
    ("nm", "audit"): _nm_audit,
    ("morse", "verify"): lambda c: _morse(c, False),
    ("morse", "lift"): lambda c: _morse(c, True),
    ("accept", None): _accept,
}


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


def make_config(argv) -> RunConfig:
    parser = build_parser()
    ns = parser.parse_args(argv)
    if getattr(ns, "key", None) is None:
        parser.print_usage(sys.stderr)
        raise UsageError("missing subcommand")
    file_cfg = _load_config(ns.config)
    params = _resolve(ns.key, ns, file_cfg)
    fmt = ns.format or file_cfg.get("format", "json")
    if fmt not in ("json", "csv"):
        raise UsageError("format must be json or csv")
    seed = ns.seed if ns.seed is not None else int(file_cfg.get("seed", 0))
    out = ns.out or file_cfg.get("out")
    return RunConfig(ns.key[0], ns.key[1], params, out, fmt, seed)


def dispatch(argv=None) -> int:
    try:
        cfg = make_config(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return 0 if exc.code == 0 else 2
    except UsageError as exc:
        sys.stderr.write(f"z2glue: {exc}\n")
        return 2
    key = (cfg.group, cfg.command)
    try:
        result = HANDLERS[key](cfg)
    except UsageError as exc:
        sys.stderr.write(f"z2glue: {exc}\n")
        return 2
    except (ValueError, TypeError) as exc:
        # module precondition violated by the supplied parameters
        sys.stderr.write(f"z2glue: invalid parameters: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"z2glue: {exc}\n")
        return 1
    try:
        emit(result, key, cfg.format, cfg.out)
    except OSError as exc:
        sys.stderr.write(f"z2glue: cannot write output: {exc}\n")
        return 1
    return 0 if result.ok else 1


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
