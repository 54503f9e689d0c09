"""Pre-gluing ansatz around a regular zero of a harmonic background on flat R^n.

Near the zero the background primitive is ``f_q = P2 + P3`` with ``P2`` the
trace-free quadric ``-sum a_i x_i^2``. The model primitive
``h_q = f_h - a0`` has the same quadric at infinity. The glued 1-form is

* ``eps * grad f_h(x / eps)`` for ``rho <= eps^{1-sigma}`` (inner),
* ``grad f_q`` for ``rho > 2 eps^{1-sigma}`` (outer),
* ``grad(gamma_1 f_q + gamma_2 eps^2 h_q(x / eps))`` in between,

with ``gamma_1(s) = T(s - 1)``, ``s = eps^{sigma-1} rho``. Only the
annulus carries divergence. The flat metric is used throughout.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .models import ModelParams, asymptotic_coeffs, model_field
from .profiles import smooth_step

# 8th-order central difference weights for the first derivative, offsets 1..4
_FD8 = np.array([4 / 5, -1 / 5, 4 / 105, -1 / 280])
_FD_REACH = 4


@dataclass(frozen=True)
class GlueConfig:
    """Gluing parameters; validated on construction."""

    n: int = 3
    eps: float = 0.01
    sigma: float = 0.1
    delta: float = 0.2
    N: float = 4.0
    tau: float = -0.5

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("n must be at least 3")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if not self.tau < 0:
            raise ValueError("tau must be negative")
        if not 2 * self.N * self.eps < self.delta:
            raise ValueError(f"need 2 N eps < delta, got {2 * self.N * self.eps} >= {self.delta}")
        if not self.r_in < self.delta / 4:
            raise ValueError(f"need eps^(1-sigma) < delta/4, got {self.r_in:.4g}")
        if self.N < 2 * self.delta:
            # rho_q / (2 delta) must not dip below the eps plateau at rho_q = N eps
            raise ValueError("need N >= 2 delta for a monotone weight")

    @property
    def r_in(self) -> float:
        """Inner radius ``eps^{1-sigma}`` of the gluing annulus."""
        return self.eps ** (1 - self.sigma)

    @property
    def r_out(self) -> float:
        return 2 * self.r_in

    def with_eps(self, eps):
        return GlueConfig(self.n, eps, self.sigma, self.delta, self.N, self.tau)


def cutoff_pair(s, derivs=0):
    """``(gamma_1, gamma_2)`` with ``gamma_1 = 0`` below 1 and 1 above 2.

    With ``derivs=1`` also returns ``gamma_1'``.
    """
    if derivs:
        g1, d1 = smooth_step(np.asarray(s, dtype=float) - 1.0, derivs=1)
        return g1, 1.0 - g1, d1
    g1 = smooth_step(np.asarray(s, dtype=float) - 1.0)
    return g1, 1.0 - g1


@dataclass(frozen=True)
class WeightProfile:
    cfg: GlueConfig

    @property
    def breakpoints(self):
        c = self.cfg
        return (c.N * c.eps, 2 * c.N * c.eps, c.delta, 2 * c.delta)

    def __call__(self, rho_q):
        return weight(self.cfg, rho_q)


def weight(cfg: GlueConfig, rho_q):
    """Weight ``rho_eps``: ``eps``, then ``rho_q/(2 delta)``, then 1.

    The two gaps are bridged by convex blends with the smooth step, which are
    monotone because ``N >= 2 delta``.
    """
    rho_q = np.asarray(rho_q, dtype=float)
    if np.any(rho_q < 0):
        raise ValueError("rho_q must be nonnegative")
    b0, b1, b2, b3 = WeightProfile(cfg).breakpoints
    lin = rho_q / (2 * cfg.delta)
    t1 = smooth_step((rho_q - b0) / (b1 - b0))
    t2 = smooth_step((rho_q - b2) / (b3 - b2))
    low = (1 - t1) * cfg.eps + t1 * lin
    return (1 - t2) * low + t2 * 1.0


# ---------------------------------------------------------------------------
# background

@dataclass(frozen=True)
class HarmonicBackground:
    """``P2 + P3`` with ``P2 = -sum a_i x_i^2`` and ``P3 = T_ijk x_i x_j x_k``."""

    a: tuple
    cubic: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if abs(a.sum()) > 1e-9 * np.abs(a).max():
            raise ValueError("P2 must be trace free")
        object.__setattr__(self, "a", tuple(a))
        if self.cubic is not None:
            t = np.asarray(self.cubic, dtype=float)
            n = a.size
            if t.shape != (n, n, n):
                raise ValueError("cubic tensor must have shape (n, n, n)")
            t = sum(np.transpose(t, p) for p in
                    [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]) / 6
            if np.abs(np.einsum("iik->k", t)).max() > 1e-12 * max(np.abs(t).max(), 1):
                raise ValueError("P3 must be harmonic")
            object.__setattr__(self, "cubic", t)

    @classmethod
    def matching(cls, model: ModelParams, cubic=None):
        return cls(asymptotic_coeffs(model).a, cubic)

    @property
    def n(self):
        return len(self.a)

    def without_cubic(self):
        return HarmonicBackground(self.a)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        v = -np.sum(np.asarray(self.a) * x**2, axis=-1)
        if self.cubic is not None:
            v = v + np.einsum("ijk,...i,...j,...k->...", self.cubic, x, x, x)
        return v

    def p2_value(self, x):
        return -np.sum(np.asarray(self.a) * np.asarray(x) ** 2, axis=-1)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        g = -2.0 * np.asarray(self.a) * x
        if self.cubic is not None:
            g = g + 3 * np.einsum("ijk,...j,...k->...i", self.cubic, x, x)
        return g

    def p2_gradient(self, x):
        return -2.0 * np.asarray(self.a) * np.asarray(x)


def harmonic_cubic(n, terms):
    """Symmetric cubic tensor from monomials, e.g. ``{(0, 0, 0): 1, (0, 1, 1): -3}``."""
    t = np.zeros((n, n, n))
    for idx, c in terms.items():
        t[tuple(idx)] += c
    return t


def default_cubic(n=3, scale=1.0):
    """``x1^3 - 3 x1 x2^2 + 6 x1 x2 x3`` (harmonic), times ``scale``."""
    terms = {(0, 0, 0): scale, (0, 1, 1): -3 * scale}
    if n >= 3:
        terms[(0, 1, 2)] = 6 * scale
    return harmonic_cubic(n, terms)


# ---------------------------------------------------------------------------
# the ansatz

@dataclass(frozen=True)
class FieldGrid:
    """Samples of a 1-form (or scalar) on a point lattice.

    ``evaluator`` re-evaluates the underlying field anywhere, which is what
    the finite-difference diagnostics use. ``region`` is 0 (inner),
    1 (annulus) or 2 (outer).
    """

    points: np.ndarray
    values: np.ndarray
    rho: np.ndarray
    region: np.ndarray
    evaluator: object = field(default=None, repr=False, compare=False)
    flags: dict = field(default_factory=dict)


class PreGluing:
    """Evaluator for the three-regime ansatz."""

    def __init__(self, background: HarmonicBackground, model: ModelParams, cfg: GlueConfig,
                 match_tol=1e-6):
        if background.n != model.n or cfg.n != model.n:
            raise ValueError("dimension mismatch between background, model and config")
        c = asymptotic_coeffs(model)
        mism = np.abs(np.asarray(c.a) - np.asarray(background.a)).max()
        if mism > match_tol * np.abs(c.a).max():
            raise ValueError(f"model quadric does not match P2 (max diff {mism:.3e})")
        self.background = background
        self.model = model
        self.cfg = cfg
        self.a0 = c.a0

    def regions(self, x):
        rho = np.linalg.norm(np.atleast_2d(x), axis=1)
        return np.where(rho <= self.cfg.r_in, 0, np.where(rho > self.cfg.r_out, 2, 1)), rho

    def _model(self, x):
        eps = self.cfg.eps
        f, g = model_field(self.model, x / eps)
        return eps**2 * (f - self.a0), eps * g

    def primitive(self, x):
        """Single-valued primitive on the sheet asymptotic to ``+P2``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        reg, rho = self.regions(x)
        out = np.empty(len(x))
        outer = reg == 2
        out[outer] = self.background.value(x[outer])
        if np.any(~outer):
            xi = x[~outer]
            g, _ = self._model(xi)
            s = rho[~outer] / self.cfg.r_in
            g1, g2 = cutoff_pair(s)
            out[~outer] = g1 * self.background.value(xi) + g2 * g
        return out

    def __call__(self, x):
        """The glued 1-form ``alpha~`` at points ``x`` of shape (m, n)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        reg, rho = self.regions(x)
        out = np.empty_like(x)
        outer = reg == 2
        out[outer] = self.background.gradient(x[outer])
        inner = reg == 0
        if np.any(inner):
            out[inner] = self._model(x[inner])[1]
        ann = reg == 1
        if np.any(ann):
            xa = x[ann]
            g, dg = self._model(xa)
            fq = self.background.value(xa)
            dfq = self.background.gradient(xa)
            g1, g2, d1 = cutoff_pair(rho[ann] / self.cfg.r_in, derivs=1)
            radial = (d1 / self.cfg.r_in / rho[ann])[:, None] * xa
            out[ann] = g1[:, None] * dfq + g2[:, None] * dg + (fq - g)[:, None] * radial
        return out

    def mismatch(self, x):
        """``|gamma-interpolated primitive - P2|``."""
        return np.abs(self.primitive(x) - self.background.p2_value(x))


def _directions(n, count, seed=0):
    if n == 3:
        k = np.arange(count) + 0.5
        z = 1 - 2 * k / count
        phi = np.pi * (1 + 5**0.5) * k
        rr = np.sqrt(1 - z**2)
        return np.stack([rr * np.cos(phi), rr * np.sin(phi), z], axis=1)
    v = np.random.default_rng(seed).normal(size=(count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def make_lattice(cfg: GlueConfig, model: ModelParams, n_dirs=200, n_inner=8, n_annulus=17,
                 n_outer=8):
    """Spherical shells times quasi-uniform directions.

    Inner shells stay at least ``1.5 eps h_max`` from the origin (1.1 if the
    annulus is closer) so that no point approaches the rescaled branching
    ellipsoid, where finite differences lose accuracy.
    """
    core = cfg.eps * max(model.h)
    if 1.1 * core >= cfg.r_in:
        raise ValueError("annulus overlaps the rescaled model core; decrease eps")
    lo = next((k * core for k in (1.5, 1.1) if k * core < 0.9 * cfg.r_in), None)
    inner = np.empty(0) if lo is None else np.geomspace(lo, cfg.r_in, n_inner + 1)[:-1]
    ann = np.linspace(cfg.r_in, cfg.r_out, n_annulus)
    outer = np.geomspace(cfg.r_out, 4 * cfg.r_out, n_outer + 1)[1:]
    radii = np.concatenate([inner, ann, outer])
    dirs = _directions(cfg.n, n_dirs)
    return (radii[:, None, None] * dirs[None]).reshape(-1, cfg.n)


def build_pregluing(background: HarmonicBackground, model: ModelParams, cfg: GlueConfig,
                    lattice=None) -> FieldGrid:
    """Sample ``alpha~`` on a lattice (default :func:`make_lattice`).

    Raises
    ------
    ValueError
        If the model's far-field quadric does not match ``P2``.
    """
    pg = PreGluing(background, model, cfg)
    pts = make_lattice(cfg, model) if lattice is None else np.atleast_2d(lattice)
    reg, rho = pg.regions(pts)
    return FieldGrid(pts, pg(pts), rho, reg, evaluator=pg)


def _stencil_steps(pg: PreGluing, pts, rho):
    cfg = pg.cfg
    hmax = max(pg.model.h)
    dist_y = np.maximum(rho / cfg.eps - hmax, 1e-3)
    return np.minimum(cfg.r_in / 128, 0.02 * cfg.eps * dist_y)


def jacobian_fd(evaluator, pts, steps, chunk=4096):
    """8th-order central-difference Jacobian ``J[m, i, j] = d_j alpha_i``."""
    pts = np.atleast_2d(pts)
    m, n = pts.shape
    jac = np.zeros((m, n, n))
    for start in range(0, m, chunk):
        sl = slice(start, start + chunk)
        p, h = pts[sl], steps[sl]
        offs = []
        for j in range(n):
            for k in range(1, _FD_REACH + 1):
                for sgn in (1, -1):
                    q = p.copy()
                    q[:, j] += sgn * k * h
                    offs.append(q)
        vals = evaluator(np.concatenate(offs)).reshape(n, _FD_REACH, 2, len(p), n)
        for j in range(n):
            d = np.tensordot(_FD8, vals[j, :, 0] - vals[j, :, 1], axes=(0, 0))
            jac[sl, :, j] = d / h[:, None]
    return jac


def divergence_error(fg: FieldGrid, cfg: GlueConfig) -> FieldGrid:
    """``d* alpha~`` (flat metric; up to sign, the divergence) on the lattice.

    ``flags`` records ``under_resolved`` (stencil coarser than
    ``eps^{1-sigma}/16`` somewhere in the annulus), the stencil steps, and the
    curl of the same finite-difference Jacobian.
    """
    pg = fg.evaluator
    steps = _stencil_steps(pg, fg.points, fg.rho)
    jac = jacobian_fd(pg, fg.points, steps)
    div = np.trace(jac, axis1=1, axis2=2)
    curl = np.abs(jac - np.swapaxes(jac, 1, 2)).max(axis=(1, 2))
    ann = fg.region == 1
    flags = dict(
        under_resolved=bool(np.any(steps[ann] > cfg.r_in / 16 * (1 + 1e-12))),
        steps=steps,
        curl=curl,
        jac_scale=float(np.abs(jac).max()),
        reach=_FD_REACH * steps,
    )
    return FieldGrid(fg.points, div, fg.rho, fg.region, evaluator=None, flags=flags)


def support_split(div: FieldGrid, cfg: GlueConfig):
    """``(sup inside annulus, sup outside)``, excluding stencil boundary layers."""
    reach = div.flags["reach"]
    inside = div.region == 1
    outside = (div.rho < cfg.r_in - reach) | (div.rho > cfg.r_out + reach)
    vals = np.abs(div.values)
    return float(vals[inside].max()), float(vals[outside].max() if outside.any() else 0.0)


# ---------------------------------------------------------------------------
# scan

@dataclass(frozen=True)
class ScanRow:
    eps: float
    sup_primitive_err: float
    sup_div: float
    weighted_sup: float
    sup_outside: float


@dataclass(frozen=True)
class ScanReport:
    rows: tuple
    slopes: dict
    predicted: dict
    monotone: bool

    @property
    def ok(self):
        return self.monotone

    def table(self):
        cols = ("eps", "sup_primitive_err", "sup_div", "weighted_sup")
        return cols, [[getattr(r, c) for c in cols] for r in self.rows]


def _scan_one(background, model, cfg, n_dirs):
    pg = PreGluing(background, model, cfg)
    ann_r = np.linspace(cfg.r_in, cfg.r_out, 33)
    dirs = _directions(cfg.n, n_dirs)
    ann_pts = (ann_r[:, None, None] * dirs[None]).reshape(-1, cfg.n)
    mism = float(pg.mismatch(ann_pts).max())
    fg = build_pregluing(background, model, cfg, make_lattice(cfg, model, n_dirs=n_dirs))
    div = divergence_error(fg, cfg)
    inside, outside = support_split(div, cfg)
    ann = div.region == 1
    w = weight(cfg, div.rho[ann]) ** (2 - cfg.tau)
    wsup = float(np.max(w * np.abs(div.values[ann])))
    return ScanRow(cfg.eps, mism, inside, wsup, outside)


def _threads():
    try:
        return max(1, int(os.environ.get("Z2GLUE_THREADS", "1")))
    except ValueError:
        return 1


def error_scan(cfg: GlueConfig, eps_list, background: HarmonicBackground, model: ModelParams,
               n_dirs=200, workers=None) -> ScanReport:
    """Empirical decay exponents of the gluing error.

    Parameters
    ----------
    cfg : GlueConfig
        Template; its ``eps`` is replaced by each entry of ``eps_list``.
    eps_list : sequence of float
        Geometric with ratio 2, at least four entries.
    workers : int, optional
        Thread count; defaults to ``Z2GLUE_THREADS`` (1 if unset).

    Returns
    -------
    ScanReport
        Least-squares log-log slopes for the primitive mismatch, the sup of
        the divergence and the weighted sup, and the two-term predictions.
    """
    eps = np.sort(np.asarray(eps_list, dtype=float))[::-1]
    if eps.size < 4:
        raise ValueError("need at least four eps values")
    ratios = eps[:-1] / eps[1:]
    if not np.allclose(ratios, 2.0, rtol=1e-9):
        raise ValueError("eps_list must be geometric with ratio 2")
    cfgs = [cfg.with_eps(e) for e in eps]
    workers = workers or _threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(lambda c: _scan_one(background, model, c, n_dirs), cfgs))
    else:
        rows = [_scan_one(background, model, c, n_dirs) for c in cfgs]
    le = np.log(eps)
    slopes = {}
    for key in ("sup_primitive_err", "sup_div", "weighted_sup"):
        vals = np.array([getattr(r, key) for r in rows])
        slopes[key] = float(np.polyfit(le, np.log(vals), 1)[0])
    n, s = cfg.n, cfg.sigma
    has_cubic = background.cubic is not None and np.any(background.cubic != 0)
    mis = 2 + (n - 2) * s if not has_cubic else min(2 + (n - 2) * s, 3 * (1 - s))
    predicted = dict(sup_primitive_err=mis, sup_div=mis - 2 * (1 - s))
    mism = np.array([r.sup_primitive_err for r in rows])
    monotone = bool(np.all(np.diff(mism) < 0))
    return ScanReport(tuple(rows), slopes, predicted, monotone)
