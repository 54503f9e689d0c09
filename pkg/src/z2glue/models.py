"""Explicit non-degenerate Z2-harmonic model functions on R^n.

The model ``f_h`` is two-valued, branched along the codimension-2 ellipsoid

    E_h = {x_n = 0, sum_k x_k^2 / h_k^2 = 1},

and is asymptotic to the trace-free quadric ``a0 - sum_i a_i x_i^2``. Its
graph is a Lawlor neck parametrized by ``(w, s)`` in ``S^{n-1} x R``.

Two routes to ``f_h`` are provided. The fast route uses the closed-form
primitive ``f = J0(s)/2 + <x, grad f>/2`` on the graph, where
``J0(s) = int_0^s C(t^2)^{-1/2} dt``; the oracle route integrates the
gradient along a straight segment from a point of ``E_h``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import ConvergenceError, GeometryError, PrecisionError

_QUAD_OPTS = dict(epsabs=0.0, epsrel=1e-13, limit=400)
_MAX_H_RATIO = 1e8


@dataclass(frozen=True)
class ModelParams:
    """Dimension and ellipsoid semi-axes of a model solution."""

    n: int
    h: tuple

    def __post_init__(self):
        h = tuple(float(v) for v in np.atleast_1d(self.h))
        object.__setattr__(self, "h", h)
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"n must be an integer >= 3, got {self.n}")
        if len(h) != self.n - 1:
            raise ValueError(f"need {self.n - 1} semi-axes, got {len(h)}")
        if not all(np.isfinite(v) and v > 0 for v in h):
            raise ValueError(f"semi-axes must be positive and finite, got {h}")

    @property
    def harr(self) -> np.ndarray:
        return np.asarray(self.h)

    @property
    def hbar(self) -> float:
        """Geometric mean of the semi-axes, the natural length scale."""
        return float(np.exp(np.mean(np.log(self.harr))))


@dataclass(frozen=True)
class QuadricCoeffs:
    """Quadric ``a0 - sum_i a_i x_i^2``."""

    a0: float
    a: tuple

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))

    @property
    def trace(self) -> float:
        return float(sum(self.a))

    def is_model_form(self, rtol=1e-9) -> bool:
        """True when ``a_1..a_{n-1} > 0 > a_n`` and the trace vanishes."""
        a = np.asarray(self.a)
        return bool(np.all(a[:-1] > 0) and a[-1] < 0
                    and abs(a.sum()) <= rtol * np.abs(a).max())

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.a0 - np.sum(np.asarray(self.a) * x**2, axis=-1)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return -2.0 * np.asarray(self.a) * x


@dataclass(frozen=True)
class GraphPoint:
    """A point ``(x, y)`` of the Lawlor graph with its parameters."""

    w: np.ndarray
    s: float
    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class ModelSample:
    f: float
    grad: np.ndarray
    sheet: int


@dataclass(frozen=True)
class ZeroClassification:
    is_regular: bool
    index_pair: tuple
    quadric: QuadricCoeffs
    hessian_eigs: np.ndarray = field(repr=False)
    residual: float = 0.0


# ---------------------------------------------------------------------------
# quadrature helpers

def _quad(fun, a, b, what):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(fun, a, b, **_QUAD_OPTS)
        except integrate.IntegrationWarning as exc:
            raise PrecisionError(f"{what}: quadrature did not converge ({exc})") from exc
    if not np.isfinite(val) or err > 1e-11 * max(abs(val), 1e-300):
        raise PrecisionError(f"{what}: error estimate {err:.3e} too large for value {val:.3e}")
    return val


def _check_conditioning(h):
    h = np.asarray(h, dtype=float)
    if h.max() / h.min() > _MAX_H_RATIO:
        raise PrecisionError(
            f"semi-axis ratio {h.max() / h.min():.3e} exceeds {_MAX_H_RATIO:.0e}")


def _coeff_integrands(h):
    """Integrands in t (u = tan t) for I_i, the a_n integral and the a0 integral."""
    h = np.asarray(h, dtype=float)
    m = h.size  # n - 1

    def q(t):
        c, s = math.cos(t), math.sin(t)
        return s * s + (h * c) ** 2, c

    def base(t):
        # du / sqrt(S(u^2)) in t-form
        qq, c = q(t)
        return c ** (m - 2) / math.sqrt(np.prod(qq)), qq, c

    def a_i(t, i):
        b, qq, c = base(t)
        return b * c * c / qq[i]

    def a_n(t):
        # S'(u^2)/S(u^2)^{3/2} = sum_j 1/(u^2+h_j^2) / sqrt(S)
        b, qq, c = base(t)
        return b * c * c * np.sum(1.0 / qq)

    def a_0(t):
        return base(t)[0]

    def k_ij(t, i, j):
        b, qq, c = base(t)
        return b * c * c / qq[i] * (h[j] * c) ** 2 / qq[j]

    return a_i, a_n, a_0, k_ij


def asymptotic_coeffs(p: ModelParams) -> QuadricCoeffs:
    """Far-field quadric of the model solution.

    Each coefficient is an improper integral over ``[0, inf)``, mapped to
    ``[0, pi/2)`` by ``u = tan t`` and integrated adaptively. ``a_n`` is
    computed from its own integrand, so the trace identity is a genuine
    check rather than a definition.

    Raises
    ------
    PrecisionError
        If the semi-axes are too ill-conditioned or quadrature fails.
    """
    _check_conditioning(p.h)
    a_i, a_n, a_0, _ = _coeff_integrands(p.h)
    half_p = 0.5 * float(np.prod(p.harr))
    end = 0.5 * math.pi
    a = [half_p * _quad(lambda t, i=i: a_i(t, i), 0.0, end, f"a_{i + 1}")
         for i in range(p.n - 1)]
    a.append(-half_p * _quad(a_n, 0.0, end, "a_n"))
    a0 = half_p * _quad(a_0, 0.0, end, "a_0")
    return QuadricCoeffs(a0=a0, a=tuple(a))


def _log_coeff_jacobian(h):
    """``a_1..a_{n-1}`` and ``d log a_i / d log h_j``."""
    _check_conditioning(h)
    a_i, _, _, k_ij = _coeff_integrands(h)
    m = len(h)
    end = 0.5 * math.pi
    ints = np.array([_quad(lambda t, i=i: a_i(t, i), 0.0, end, "I_i") for i in range(m)])
    kmat = np.array([[_quad(lambda t, i=i, j=j: k_ij(t, i, j), 0.0, end, "K_ij")
                      for j in range(m)] for i in range(m)])
    jac = 1.0 - (kmat + 2.0 * np.diag(np.diag(kmat))) / ints[:, None]
    return 0.5 * np.prod(h) * ints, jac


def solve_h_for_a(n: int, a_target, tol=1e-12, max_iter=60) -> ModelParams:
    """Invert ``h -> (a_1, ..., a_{n-1})`` by damped Newton in ``log h``.

    Parameters
    ----------
    n : int
        Ambient dimension.
    a_target : sequence of float
        Desired positive coefficients ``a_1..a_{n-1}``.
    tol : float
        Target for the max relative residual.

    Raises
    ------
    ConvergenceError
        With ``best_residual`` set, if the budget runs out.
    """
    target = np.asarray(a_target, dtype=float)
    if target.shape != (n - 1,):
        raise ValueError(f"need {n - 1} targets, got shape {target.shape}")
    if np.any(target <= 0) or not np.all(np.isfinite(target)):
        raise ValueError("targets must be positive and finite")
    kappa = asymptotic_coeffs(ModelParams(n, (1.0,) * (n - 1))).a[0]
    logh = np.log(kappa / target)
    a, jac = _log_coeff_jacobian(np.exp(logh))
    res = np.log(a / target)
    best = np.abs(res).max()
    for _ in range(max_iter):
        if best <= tol:
            return ModelParams(n, tuple(np.exp(logh)))
        step = -np.linalg.solve(jac, res)
        lam = 1.0
        for _ in range(30):
            trial = logh + lam * step
            try:
                a_new, jac_new = _log_coeff_jacobian(np.exp(trial))
            except PrecisionError:
                lam *= 0.5
                continue
            res_new = np.log(a_new / target)
            if np.abs(res_new).max() < best:
                break
            lam *= 0.5
        else:
            break
        logh, res, jac = trial, res_new, jac_new
        best = np.abs(res).max()
    if best <= max(tol, 1e-8):
        return ModelParams(n, tuple(np.exp(logh)))
    raise ConvergenceError(f"solve_h_for_a stalled at relative residual {best:.3e}",
                           best_residual=float(np.expm1(best)))


# ---------------------------------------------------------------------------
# graph integrals
#
# With t = hbar * tan(phi) the integrands of beta_k, beta_n and J0 are
# analytic and bounded on [0, pi/2], so fixed Gauss-Legendre is spectrally
# accurate for moderate semi-axis ratios.

def _phi_integrands(h, hbar, phi):
    """Integrands of (beta_k, beta_n, J0) in phi; ``phi`` of any shape."""
    c = np.cos(phi)[..., None]
    s = np.sin(phi)[..., None]
    qq = (h * c) ** 2 + (hbar * s) ** 2
    inv_sqrt_c = np.prod(h * c / np.sqrt(qq), axis=-1)
    beta = hbar / qq * inv_sqrt_c[..., None]
    logc = np.sum(np.log1p((hbar * np.tan(phi))[..., None] ** 2 / h**2), axis=-1)
    beta_n = np.expm1(-0.5 * logc) / (hbar * np.sin(phi) ** 2)
    j0 = hbar * inv_sqrt_c / np.cos(phi) ** 2
    return beta, beta_n, j0


def graph_integrals(p: ModelParams, s, method="gauss", nodes=160):
    """``beta_k(s)``, ``beta_n(s)`` and ``J0(s)`` for an array of ``s``.

    Parameters
    ----------
    method : {"gauss", "quad"}
        Vectorized fixed Gauss-Legendre or adaptive scipy quadrature.
    nodes : int
        Gauss-Legendre order for ``method="gauss"``.

    Returns
    -------
    beta : ndarray, shape (..., n-1)
    beta_n, j0 : ndarray, shape (...)
    """
    s = np.asarray(s, dtype=float)
    h, hbar = p.harr, p.hbar
    sign = np.sign(s)
    phimax = np.arctan(np.abs(s) / hbar)  # arctan(inf) = pi/2
    if method == "gauss":
        xg, wg = np.polynomial.legendre.leggauss(nodes)
        zero = phimax == 0.0
        half = 0.5 * np.where(zero, 1.0, phimax)[..., None]
        phi = half * (1.0 + xg)
        beta, beta_n, j0 = _phi_integrands(h, hbar, phi)
        wts = half * wg
        out_b = np.einsum("...q,...qk->...k", wts, beta)
        out_n = np.sum(wts * beta_n, axis=-1)
        out_j = np.sum(wts * j0, axis=-1)
        out_b = np.where(zero[..., None], 0.0, out_b)
        out_n = np.where(zero, 0.0, out_n)
        out_j = np.where(zero, 0.0, out_j)
    elif method == "quad":
        flat = phimax.ravel()
        out_b = np.zeros((flat.size, h.size))
        out_n = np.zeros(flat.size)
        out_j = np.zeros(flat.size)
        for idx, top in enumerate(flat):
            if top == 0.0:
                continue
            for k in range(h.size):
                out_b[idx, k] = _quad(
                    lambda ph, k=k: _phi_integrands(h, hbar, np.asarray(ph))[0][k],
                    0.0, top, f"beta_{k + 1}")
            out_n[idx] = _quad(lambda ph: float(_phi_integrands(h, hbar, np.asarray(ph))[1]),
                               0.0, top, "beta_n")
            out_j[idx] = _quad(lambda ph: float(_phi_integrands(h, hbar, np.asarray(ph))[2]),
                               0.0, top, "J0")
        out_b = out_b.reshape(s.shape + (h.size,))
        out_n = out_n.reshape(s.shape)
        out_j = out_j.reshape(s.shape)
    else:
        raise ValueError(f"unknown method {method!r}")
    return sign[..., None] * out_b, sign * out_n, sign * out_j


def _project(p, w, s, beta, beta_n):
    h = p.harr
    w = np.asarray(w, dtype=float)
    s = np.asarray(s, dtype=float)
    root = np.sqrt(h**2 + s[..., None] ** 2)
    x = np.concatenate([w[..., :-1] * root, (-w[..., -1] * s)[..., None]], axis=-1)
    y = np.concatenate([w[..., :-1] * beta * root,
                        (w[..., -1] * (1.0 - s * beta_n))[..., None]], axis=-1)
    return x, y


def lawlor_graph(p: ModelParams, w, s: float, method="quad") -> GraphPoint:
    """Evaluate ``Pr_X`` and ``Pr_Y`` at ``(w, s)``.

    ``w`` is renormalized when its length is within 1e-12 of one.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (p.n,):
        raise ValueError(f"w must have length {p.n}")
    norm = float(np.linalg.norm(w))
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"|w| = {norm!r} is not a unit vector")
    w = w / norm
    s = float(s)
    beta, beta_n, _ = graph_integrals(p, np.array(s), method=method)
    x, y = _project(p, w, s, beta, beta_n)
    return GraphPoint(w=w, s=s, x=x, y=y)


def involution(w, s):
    """The deck transformation ``(w', w_n, s) -> (w', -w_n, -s)``."""
    w = np.array(w, dtype=float)
    w[..., -1] *= -1.0
    return w, -np.asarray(s)


# ---------------------------------------------------------------------------
# inversion of Pr_X and the model field

def invert_graph(p: ModelParams, x):
    """Solve ``Pr_X(w, s) = x`` with ``s >= 0``.

    Bisection in ``lam = s^2`` on the monotone constraint, followed by a few
    safeguarded Newton steps.

    Raises
    ------
    GeometryError
        For points on the closed flat disk bounded by ``E_h``; there the
        bracket degenerates to ``s = 0``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    h2 = p.harr**2
    xp2, xn2 = x[:, :-1] ** 2, x[:, -1] ** 2
    on_disk = (xn2 == 0.0) & (np.sum(xp2 / h2, axis=1) <= 1.0)
    if np.any(on_disk):
        bad = x[np.argmax(on_disk)]
        raise GeometryError(f"point {bad} lies on the branching disk bounded by E_h")

    def g(lam):
        return np.sum(xp2 / (h2 + lam[:, None]), axis=1) + xn2 / lam - 1.0

    def dg(lam):
        return -np.sum(xp2 / (h2 + lam[:, None]) ** 2, axis=1) - xn2 / lam**2

    lo = np.zeros(len(x))
    hi = 4.0 * np.sum(x**2, axis=1)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        pos = g(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
        if np.all(hi - lo <= 1e-12 * np.maximum(hi, 1e-300)):
            break
    lam = 0.5 * (lo + hi)
    for _ in range(4):
        with np.errstate(divide="ignore", invalid="ignore"):
            nxt = lam - g(lam) / dg(lam)
        ok = np.isfinite(nxt) & (nxt > lo) & (nxt < hi)
        lam = np.where(ok, nxt, lam)
    s = np.sqrt(lam)
    w = np.concatenate([x[:, :-1] / np.sqrt(h2 + lam[:, None]),
                        (-x[:, -1] / s)[:, None]], axis=1)
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    return w, s


def model_field(p: ModelParams, x, sheet=1, nodes=160):
    """Vectorized ``(f, grad f)`` of the model at points ``x`` of shape (m, n).

    ``sheet=+1`` is the branch asymptotic to ``a0 - sum a_i x_i^2``; the other
    sheet is its negative. ``f`` vanishes on ``E_h``.
    """
    if sheet not in (1, -1):
        raise ValueError("sheet must be +1 or -1")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    w, s = invert_graph(p, x)
    beta, beta_n, j0 = graph_integrals(p, s, nodes=nodes)
    _, y = _project(p, w, s, beta, beta_n)
    grad = -sheet * y
    f = sheet * 0.5 * j0 + 0.5 * np.sum(x * grad, axis=1)
    return f, grad


def _reference_point(p, x):
    xp = x[:-1]
    q = np.sqrt(np.sum(xp**2 / p.harr**2))
    if q == 0.0:
        ref = np.zeros(p.n)
        ref[0] = p.h[0]
        return ref
    return np.append(xp / q, 0.0)


def reconstruct_model(p: ModelParams, x, sheet=1, method="ray") -> ModelSample:
    """Value and gradient of the model at a single point.

    Parameters
    ----------
    method : {"ray", "path"}
        ``"ray"`` uses the closed-form graph primitive. ``"path"`` integrates
        ``grad f`` adaptively along the segment from the radial projection of
        ``(x', 0)`` onto ``E_h``; that segment never meets the branching disk.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (p.n,):
        raise ValueError(f"x must have length {p.n}")
    f, grad = model_field(p, x[None], sheet=sheet)
    if method == "ray":
        return ModelSample(float(f[0]), grad[0], sheet)
    if method != "path":
        raise ValueError(f"unknown method {method!r}")
    p0 = _reference_point(p, x)
    dx = x - p0

    def integrand(u):
        # t = u^2 removes the sqrt-type singularity at the branch locus
        pt = p0 + u * u * dx
        if u == 0.0:
            return 0.0
        g = model_field(p, pt[None], sheet=sheet)[1][0]
        return 2.0 * u * float(g @ dx)

    val = _quad(integrand, 0.0, 1.0, "path integral")
    return ModelSample(val, grad[0], sheet)


# ---------------------------------------------------------------------------
# diagnostics

def laplacian_residual(p: ModelParams, x, step=1e-3):
    """Relative centered-difference Laplacian ``|lap f| / |hess f|`` per point."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = p.n
    f0 = model_field(p, x)[0]
    lap = np.zeros(len(x))
    hess_scale = np.zeros(len(x))
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        fp = model_field(p, x + e)[0]
        fm = model_field(p, x - e)[0]
        d2 = (fp - 2 * f0 + fm) / step**2
        lap += d2
        hess_scale = np.maximum(hess_scale, np.abs(d2))
    return np.abs(lap) / hess_scale


def curl_residual(p: ModelParams, x, step=1e-5):
    """Relative antisymmetric part of the finite-difference Jacobian of grad f."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = p.n
    jac = np.zeros((len(x), n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        jac[:, :, k] = (model_field(p, x + e)[1] - model_field(p, x - e)[1]) / (2 * step)
    anti = np.abs(jac - np.swapaxes(jac, 1, 2)).max(axis=(1, 2))
    return anti / np.abs(jac).max(axis=(1, 2))


def tube_points(p: ModelParams, dists, n_around=24, n_along=48):
    """Points at distance ~d from ``E_h`` in its normal planes (n = 3 ellipse, else axes)."""
    dists = np.atleast_1d(np.asarray(dists, dtype=float))
    h = p.harr
    n = p.n
    rng = np.random.default_rng(0)
    if n == 3:
        t = 2 * np.pi * np.arange(n_along) / n_along
        base = np.stack([h[0] * np.cos(t), h[1] * np.sin(t)], axis=1)
    else:
        v = rng.normal(size=(n_along, n - 1))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        base = v * h
        base /= np.sqrt(np.sum(base**2 / h**2, axis=1, keepdims=True))
    nu = base / h**2
    nu /= np.linalg.norm(nu, axis=1, keepdims=True)
    psi = 2 * np.pi * (np.arange(n_around) + 0.5) / n_around
    pts, dd = [], []
    for d in dists:
        for ps in psi:
            off = np.concatenate([d * np.cos(ps) * nu,
                                  np.full((len(base), 1), d * np.sin(ps))], axis=1)
            pts.append(np.concatenate([base, np.zeros((len(base), 1))], axis=1) + off)
            dd.append(np.full(len(base), d))
    return np.concatenate(pts), np.concatenate(dd)


def nondegeneracy_floor(p: ModelParams, dists=None):
    """Minimum of ``dist^{-1/2} |grad f|`` over a tube around ``E_h``."""
    if dists is None:
        dists = np.geomspace(1e-4, 0.1, 7)
    pts, dd = tube_points(p, dists)
    grad = model_field(p, pts)[1]
    return float(np.min(np.linalg.norm(grad, axis=1) / np.sqrt(dd)))


def classify_zero(field, p, scale, zero_tol=1e-6, fit_tol=0.5, seed=0) -> ZeroClassification:
    """Classify a zero of a gradient field by a least-squares quadric fit.

    Parameters
    ----------
    field : callable
        Maps an (m, n) array of points to an (m, n) array of field values.
    p : array_like
        The candidate zero.
    scale : float
        Radius of the sampling sphere.
    zero_tol : float
        Relative size of ``|field(p)|`` and of the eigenvalue floor.
    fit_tol : float
        Largest acceptable relative fit residual for a regular zero.

    Returns
    -------
    ZeroClassification
        ``index_pair`` is ``(r, n - r)`` sorted, with ``r`` the number of
        negative Hessian eigenvalues of the local primitive.

    Raises
    ------
    ValueError
        If the field does not vanish at ``p`` or a nondegenerate quadric
        fits poorly at this scale.
    """
    p = np.asarray(p, dtype=float)
    n = p.size
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n * n, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = np.concatenate([dirs, -dirs])
    v = scale * dirs
    g = np.asarray(field(p + v), dtype=float)
    g0 = np.asarray(field(p[None]), dtype=float)[0]
    gscale = float(np.abs(g).max())
    if np.linalg.norm(g0) > zero_tol * max(gscale, np.finfo(float).tiny):
        raise ValueError(f"field does not vanish at p: |field(p)| = {np.linalg.norm(g0):.3e}")
    # unknowns: upper triangle of the symmetric Hessian H, model g = H v
    iu = np.triu_indices(n)
    design = np.zeros((len(v) * n, len(iu[0])))
    for col, (a, b) in enumerate(zip(*iu)):
        basis = np.zeros((n, n))
        basis[a, b] = basis[b, a] = 1.0
        design[:, col] = (v @ basis).ravel()
    coef, *_ = np.linalg.lstsq(design, g.ravel(), rcond=None)
    hess = np.zeros((n, n))
    hess[iu] = coef
    hess = hess + np.triu(hess, 1).T
    eigs = np.linalg.eigvalsh(hess)
    fit = v @ hess
    resid = float(np.linalg.norm(g - fit) / max(np.linalg.norm(g), np.finfo(float).tiny))
    floor = zero_tol * max(np.abs(eigs).max(), gscale / scale)
    regular = bool(np.all(np.abs(eigs) > floor))
    if regular and resid > fit_tol:
        raise ValueError(f"quadric fit residual {resid:.3f} exceeds {fit_tol}: "
                         "not an isolated quadratic-type zero at this scale")
    neg = int(np.sum(eigs < -floor))
    quad = QuadricCoeffs(a0=0.0, a=tuple(-0.5 * eigs))
    return ZeroClassification(regular, tuple(sorted((neg, n - neg))), quad, eigs, resid)
