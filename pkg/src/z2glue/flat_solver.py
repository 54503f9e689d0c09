"""Singular Laplacian on odd sections of the polar cross-section.

Each half-integer angular mode ``l`` (frequency ``nu = l + 1/2``) obeys

    u'' + u'/r - (nu/r)^2 u = rho_l,    u(0) = 0,  u(R) = 0.

Writing ``u = r^nu v`` gives the divergence form
``(r^{2 nu + 1} v')' = r^{nu + 1} rho_l``. The finite-volume scheme below
uses the exact flux between nodes for the homogeneous equation. It is
therefore exact on ``r^{+nu}`` and ``r^{-nu}``, and in a source-free
neighbourhood of the origin ``v`` is exactly constant, equal to the
leading coefficient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .branched_field import (
    BranchedGrid, HalfIntegerFit, angular_modes, fit_half_integer, synthesize_modes,
)
from .errors import ContractionError

_LOG_TINY = -600.0  # nodes with (r/R)^{2 nu} below e^{-600} are treated as u = 0


def radial_mesh(R: float, J: int) -> np.ndarray:
    """Graded mesh ``r_j = R (j/J)^{3/2}``, ``j = 1..J`` (origin excluded)."""
    return R * (np.arange(1, J + 1) / J) ** 1.5


@dataclass(frozen=True)
class ModeSource:
    """Radial samples of one angular mode of a source.

    ``r`` must end at ``R``; ``rho0`` is the value at the origin used for the
    innermost cell.
    """

    l: int
    r: np.ndarray
    rho: np.ndarray
    R: float
    rho0: complex = 0.0

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        rho = np.asarray(self.rho)
        if self.l < 0 or int(self.l) != self.l:
            raise ValueError("l must be a nonnegative integer")
        if not self.R > 0:
            raise ValueError("R must be positive")
        if r.shape != rho.shape or r.ndim != 1:
            raise ValueError("r and rho must be 1-d arrays of equal length")
        if not np.all(np.isfinite(rho)):
            raise ValueError("rho must be finite")
        if np.any(np.diff(r) <= 0) or r[0] <= 0 or r[-1] > self.R * (1 + 1e-12):
            raise ValueError("r must increase within (0, R]")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_function(cls, l, fun, R, J):
        r = radial_mesh(R, J)
        return cls(l, r, fun(r), R, rho0=fun(np.array([0.0]))[0])


@dataclass(frozen=True)
class RadialSolution:
    l: int
    r: np.ndarray
    u: np.ndarray
    leading_coeff: complex
    v: np.ndarray


def _cell_sources(x, rho, rho0, nu):
    """Integrals of ``x^{nu+1} rho`` over control volumes, rho piecewise linear.

    ``x`` includes the origin as ``x[0] = 0``. Returns one value per node 1..J
    (the outer node gets the half cell ``[m_{J-1}, x_J]``).
    """
    xs = x
    vals = np.concatenate([[rho0], rho])
    mids = 0.5 * (xs[1:] + xs[:-1])  # midpoints of [x_{j-1}, x_j], j = 1..J

    def seg(a, b, xl, xr, fl, fr):
        # exact integral of x^{nu+1} (fl + (fr - fl)(x - xl)/(xr - xl)) on [a, b]
        slope = (fr - fl) / (xr - xl)
        c0 = fl - slope * xl
        p2, p3 = nu + 2.0, nu + 3.0
        return c0 * (b**p2 - a**p2) / p2 + slope * (b**p3 - a**p3) / p3

    J = x.size - 1
    out = np.zeros(J, dtype=np.result_type(vals, float))
    # left half of cell j: [mid_{j}, x_j] on segment [x_{j-1}, x_j]
    out += seg(np.concatenate([[0.0], mids[1:]]), xs[1:], xs[:-1], xs[1:], vals[:-1], vals[1:])
    # right half of cell j: [x_j, mid_{j+1}] on segment [x_j, x_{j+1}], j < J
    out[:-1] += seg(xs[1:-1], mids[1:], xs[1:-1], xs[2:], vals[1:-1], vals[2:])
    return out


def _fv_system(x, nu, outer):
    """Tridiagonal stiffness for nodes 1..J in banded storage, plus active mask."""
    J = x.size - 1
    xi = x[1:]
    logx = np.log(xi)
    active = 2 * nu * logx > _LOG_TINY
    # conductance between node j and j+1: 1/I_j = 2 nu x_j^{2nu} / (1 - (x_j/x_{j+1})^{2nu})
    cond = 2 * nu * np.exp(2 * nu * logx[:-1]) / -np.expm1(2 * nu * (logx[:-1] - logx[1:]))
    cond = np.where(active[:-1], cond, 0.0)
    ab = np.zeros((3, J))
    diag = np.zeros(J)
    diag[:-1] -= cond
    diag[1:] -= cond
    ab[0, 1:] = cond
    ab[2, :-1] = cond
    if outer == "decay":
        diag[-1] -= 2 * nu
    elif outer != "dirichlet":
        raise ValueError(f"unknown outer condition {outer!r}")
    ab[1] = diag
    return ab, active


def _solve_modes(x, rhs_cells, nu, outer):
    """Solve for ``v`` at nodes 1..J (Dirichlet: v_J = 0); rhs may be 2-d."""
    ab, active = _fv_system(x, nu, outer)
    rhs = np.array(rhs_cells, dtype=float, copy=True)
    first = int(np.argmax(active))
    n_dof = x.size - 1 if outer == "decay" else x.size - 2
    sl = slice(first, n_dof)
    sub = ab[:, sl].copy()
    sub[0, 0] = 0.0
    sub[2, -1] = 0.0
    b = rhs[sl]
    scale = np.abs(sub[1])
    if np.any(scale == 0.0):
        raise np.linalg.LinAlgError("singular finite-volume system")
    sub = sub / np.stack([np.roll(scale, 1), scale, np.roll(scale, -1)])
    b = b / (scale[:, None] if b.ndim == 2 else scale)
    v = np.zeros_like(rhs)
    v[sl] = solve_banded((1, 1), sub, b)
    if first > 0:
        v[:first] = v[first]
    return v, first


def solve_mode(src: ModeSource, grid_size: int = 512, outer="dirichlet") -> RadialSolution:
    """Solve one angular mode on the graded mesh of ``grid_size`` intervals.

    Parameters
    ----------
    src : ModeSource
        Samples are linearly interpolated onto the mesh (exactly reused when
        they already sit on it).
    outer : {"dirichlet", "decay"}
        ``u(R) = 0``, or matching to the decaying solution ``r^{-nu}`` outside.

    Returns
    -------
    RadialSolution
        ``r`` and ``u`` include the origin (``u = 0`` there).
    """
    if grid_size < 64:
        raise ValueError("grid_size must be at least 64")
    r = radial_mesh(src.R, grid_size)
    if src.r.shape == r.shape and np.allclose(src.r, r, rtol=1e-14, atol=0):
        rho = src.rho
    else:
        xp = np.concatenate([[0.0], src.r])
        fp = np.concatenate([[src.rho0], src.rho])
        rho = np.interp(r, xp, fp.real) + (1j * np.interp(r, xp, fp.imag) if np.iscomplexobj(fp) else 0)
    return _solve_on_mesh(src.l, r, src.R, rho, src.rho0, outer)


def _solve_on_mesh(l, r, R, rho, rho0, outer):
    nu = l + 0.5
    x = np.concatenate([[0.0], r / R])
    rho = np.asarray(rho)
    cplx = np.iscomplexobj(rho) or np.iscomplexobj(rho0)
    cells = R**2 * _cell_sources(x, rho, rho0, nu)
    rhs = np.stack([cells.real, cells.imag], axis=1) if cplx else cells[:, None]
    vt, _ = _solve_modes(x, rhs, nu, outer)
    vt = vt[:, 0] + 1j * vt[:, 1] if cplx else vt[:, 0]
    with np.errstate(under="ignore"):
        u = np.exp(nu * np.log(x[1:]))
        u = u * vt if not cplx else u.astype(complex) * vt
    lead = vt[0] / R**nu
    return RadialSolution(l, np.concatenate([[0.0], r]), np.concatenate([[0.0], u]), lead,
                          np.concatenate([[vt[0]], vt]) / R**nu)


def _check_grid(rho: BranchedGrid, R):
    if abs(rho.r[-1] - R) > 1e-12 * R:
        raise ValueError(f"grid must end at R = {R}, ends at {rho.r[-1]}")


def _support_ok(rho: BranchedGrid, R, frac=0.9):
    outside = rho.r > frac * R * (1 + 1e-12)
    return not np.any(rho.values[outside] != 0.0)


def _default_lmax(rho, l_max):
    return min(32, rho.n_theta // 2 - 1) if l_max is None else l_max


def green_modes(rho: BranchedGrid, R: float, l_max=None, outer="dirichlet", check_support=True):
    """Mode-wise solve; returns ``(u_modes, leading, v_modes)``.

    ``l_max`` defaults to ``min(32, n_theta/2 - 1)``.
    """
    _check_grid(rho, R)
    l_max = _default_lmax(rho, l_max)
    if l_max < 2:
        raise ValueError("l_max must be at least 2")
    if check_support and not _support_ok(rho, R):
        raise ValueError("source must be supported in r <= 0.9 R")
    modes = angular_modes(rho.values, l_max)
    u_modes = np.zeros_like(modes)
    v_modes = np.zeros((modes.shape[0] + 1, modes.shape[1]), dtype=complex)
    lead = np.zeros(l_max + 1, dtype=complex)
    for l in range(l_max + 1):
        sol = _solve_on_mesh(l, rho.r, R, modes[:, l], 0.0, outer)
        u_modes[:, l] = sol.u[1:]
        v_modes[:, l] = sol.v
        lead[l] = sol.leading_coeff
    return u_modes, lead, v_modes


def green_apply(rho: BranchedGrid, R: float, l_max=None, outer="dirichlet") -> BranchedGrid:
    """Solve ``Delta u = rho`` mode by mode.

    ``rho.r`` is used as the radial mesh and must end at ``R``;
    :func:`radial_mesh` is the intended choice. ``l_max`` (default
    ``min(32, n_theta/2 - 1)``) must not exceed ``n_theta/2 - 1``.
    """
    u_modes, _, _ = green_modes(rho, R, l_max, outer)
    return rho.with_values(synthesize_modes(u_modes, rho.n_theta))


def top_mode_energy(s: BranchedGrid, l_max=None):
    """Share of the l = l_max mode in the total mode energy (aliasing gauge)."""
    m = np.abs(angular_modes(s.values, _default_lmax(s, l_max))) ** 2
    tot = m.sum()
    return float(m[:, -1].sum() / tot) if tot > 0 else 0.0


def ab_of_source(rho: BranchedGrid, R: float, outer="dirichlet") -> HalfIntegerFit:
    """``A`` and ``B`` of the solution of ``Delta u = rho``.

    When ``rho`` vanishes near the origin, ``A`` and ``B`` are read off the
    exactly homogeneous inner region. Otherwise they come from a window fit
    and ``accurate`` is False.
    """
    u_modes, lead, _ = green_modes(rho, R, l_max=2, outer=outer)
    support = np.flatnonzero(np.any(rho.values != 0.0, axis=1))
    if support.size == 0:
        return HalfIntegerFit((0.0, 0.0), (0.0, 0.0), 0.0)
    inner = support[0]
    if inner >= 2:
        a, b = lead[0], lead[1]
        # inner region is exact: residual of the pure two-mode model there
        return HalfIntegerFit((a.real, a.imag), (b.real, b.imag), 0.0)
    u = rho.with_values(synthesize_modes(u_modes, rho.n_theta))
    fit = fit_half_integer(u)
    return HalfIntegerFit(fit.A, fit.B, fit.residual, accurate=False)


def a_oracle(l, r, rho, R):
    """Leading coefficient from the Dirichlet Green kernel (independent route).

    ``c = -(1/2nu) int (r'^{1-nu} - r'^{1+nu} R^{-2nu}) rho(r') dr'`` with
    ``rho`` linearly interpolated and each mesh interval integrated by
    20-point Gauss-Legendre.
    """
    nu = l + 0.5
    rr = np.concatenate([[0.0], r])
    ff = np.concatenate([[0.0], rho])
    xg, wg = np.polynomial.legendre.leggauss(20)
    a, b = rr[:-1, None], rr[1:, None]
    t = 0.5 * (b - a) * xg + 0.5 * (a + b)
    lin = ff[:-1, None] + (ff[1:, None] - ff[:-1, None]) * (t - a) / (b - a)
    kern = t ** (1 - nu) - t ** (1 + nu) * R ** (-2 * nu)
    return -float(np.sum(0.5 * (b - a) * wg * kern * lin)) / (2 * nu)


# ---------------------------------------------------------------------------
# angular and radial derivatives

def theta_derivative(values, order=1):
    """Spectral ``d^k/dtheta^k`` of an odd section sampled on ``[0, 2 pi)``."""
    m = values.shape[-1]
    modes = angular_modes(values, m // 2 - 1)
    l = np.arange(modes.shape[-1])
    return synthesize_modes(modes * (1j * (l + 0.5)) ** order, m)


def r_dr(values, r):
    """``r d/dr`` by second-order differences on a nonuniform mesh."""
    return r[:, None] * np.gradient(values, r, axis=0, edge_order=2)


def polar_laplacian(u: BranchedGrid) -> np.ndarray:
    """Independent discrete Laplacian ``r^{-1}(r u_r)_r + u_thth/r^2``.

    Compact conservative three-point stencil in ``r`` and spectral in
    ``theta``. The first and last radial rows are left as NaN.
    """
    r = u.r
    v = u.values
    out = np.full_like(v, np.nan)
    hp = (r[2:] - r[1:-1])[:, None]
    hm = (r[1:-1] - r[:-2])[:, None]
    rp = 0.5 * (r[2:] + r[1:-1])[:, None]
    rm = 0.5 * (r[1:-1] + r[:-2])[:, None]
    flux = rp * (v[2:] - v[1:-1]) / hp - rm * (v[1:-1] - v[:-2]) / hm
    out[1:-1] = 2 * flux / (r[1:-1, None] * (hp + hm))
    return out + theta_derivative(v, 2) / r[:, None] ** 2


@dataclass(frozen=True)
class TangentialOperator:
    """``c_rr (r d_r)^2 + c_rt (r d_r) d_theta + c_tt d_theta^2``.

    Coefficients are scalars or arrays broadcastable to the grid values.
    """

    c_rr: object = 0.0
    c_rt: object = 0.0
    c_tt: object = 0.0

    def __call__(self, u: BranchedGrid) -> np.ndarray:
        out = np.zeros_like(u.values)
        if np.any(np.asarray(self.c_rr) != 0):
            out += self.c_rr * r_dr(r_dr(u.values, u.r), u.r)
        if np.any(np.asarray(self.c_rt) != 0):
            out += self.c_rt * r_dr(theta_derivative(u.values), u.r)
        if np.any(np.asarray(self.c_tt) != 0):
            out += self.c_tt * theta_derivative(u.values, 2)
        return out

    def scaled(self, lam):
        return TangentialOperator(lam * np.asarray(self.c_rr), lam * np.asarray(self.c_rt),
                                  lam * np.asarray(self.c_tt))


@dataclass(frozen=True)
class PerturbedResult:
    u: BranchedGrid
    iterations: int
    residual: float
    contraction: float
    converged: bool
    history: tuple


def contraction_factor(op: TangentialOperator, grid: BranchedGrid, R, l_max=None,
                       iters=25, seed=0) -> float:
    """Power-iteration estimate of the sup-norm gain of ``L o G``."""
    l_max = _default_lmax(grid, l_max)
    rng = np.random.default_rng(seed)
    x = grid.with_values(rng.standard_normal(grid.values.shape))
    x = x.with_values(synthesize_modes(angular_modes(x.values, l_max), grid.n_theta))
    ratio = 0.0
    for _ in range(iters):
        nx = np.abs(x.values).max()
        if nx == 0:
            return 0.0
        y = op(_green_unchecked(x, R, l_max))
        ratio = np.abs(y).max() / nx
        x = x.with_values(y / np.abs(y).max() if np.abs(y).max() > 0 else y)
    return float(ratio)


def _green_unchecked(rho, R, l_max):
    u_modes, _, _ = green_modes(rho, R, l_max, check_support=False)
    return rho.with_values(synthesize_modes(u_modes, rho.n_theta))


def perturbed_solve(rho: BranchedGrid, op: TangentialOperator, R: float, l_max=None,
                    tol=1e-8, max_iter=50, max_contraction=0.5) -> PerturbedResult:
    """Solve ``(Delta + L) u = rho`` by iterating ``sigma <- rho - L G sigma``.

    The residual reported is the sup of ``sigma + L G sigma - rho`` relative
    to ``sup |rho|``, i.e. measured with the solver's own discrete Laplacian.

    Raises
    ------
    ContractionError
        If the measured contraction factor of ``L o G`` is at least
        ``max_contraction``.
    """
    _check_grid(rho, R)
    q = contraction_factor(op, rho, R, l_max)
    if q >= max_contraction:
        raise ContractionError(
            f"measured contraction factor {q:.3f} >= {max_contraction}; "
            "the perturbation is too large for the fixed-point solve")
    rho_n = np.abs(rho.values).max()
    if rho_n == 0:
        return PerturbedResult(rho.with_values(np.zeros_like(rho.values)), 0, 0.0, q, True, ())
    sigma = rho
    hist = []
    for it in range(1, max_iter + 1):
        u = _green_unchecked(sigma, R, l_max)
        lu = op(u)
        res = np.abs(sigma.values + lu - rho.values).max() / rho_n
        hist.append(float(res))
        if res <= tol:
            return PerturbedResult(u, it - 1, float(res), q, True, tuple(hist))
        sigma = rho.with_values(rho.values - lu)
    return PerturbedResult(u, max_iter, hist[-1], q, False, tuple(hist))


def random_bandlimited_source(rng, r, n_theta, l_src=6, support=(0.4, 0.85), R=1.0):
    """Smooth random source with modes ``l <= l_src`` in an annulus, sup-norm 1."""
    lo, hi = support[0] * R, support[1] * R
    t = np.clip((r - lo) / (hi - lo), 0.0, 1.0)
    bump = np.where((t > 0) & (t < 1), np.sin(np.pi * t) ** 4, 0.0)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    vals = np.zeros((r.size, n_theta))
    for l in range(l_src + 1):
        c = complex(*rng.normal(size=2)) / (1 + l)
        k = rng.integers(1, 4)
        radial = bump * np.cos(k * np.pi * t + rng.uniform(0, 2 * np.pi))
        vals += radial[:, None] * np.real(c * np.exp(1j * (l + 0.5) * theta))[None, :]
    vals /= np.abs(vals).max()
    return BranchedGrid(r, vals)
