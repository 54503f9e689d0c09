"""Birth of a pair of nondegenerate critical points of consecutive index.

The model on R^3 is

    f = [x (r^2 - 1) + (y^2 - z^2) gamma(r)] / [gamma(r) + (r^2 - 1)(1 - gamma(r))],

which equals ``x`` for ``r >= M`` and the cubic
``x^3 - x + (x + 1) y^2 + (x - 1) z^2`` for ``r <= 1``. Its only critical
points are ``(+-3^{-1/2}, 0, 0)``, of index 1 and 2. Composing with
``(x1, |y'|, |z'|)`` on R^n gives indices ``r`` and ``r + 1``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linprog

from .profiles import smooth_step

C_CRIT = 3.0**-0.5


# ---------------------------------------------------------------------------
# profiles

class Profile:
    """``gamma(t)`` with two derivatives: a sum of shifted smooth steps.

    ``gamma = 1 - sum_i w_i T((t - s_i) / W_i)`` with ``sum w_i = 1``.
    """

    def __init__(self, starts, widths, weights):
        self.starts = np.asarray(starts, dtype=float)
        self.widths = np.asarray(widths, dtype=float)
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or not np.isclose(w.sum(), 1.0, rtol=0, atol=1e-9):
            raise ValueError("step weights must be nonnegative and sum to 1")
        self.weights = w / w.sum()

    @property
    def support_end(self):
        return float(np.max(self.starts + self.widths))

    def __call__(self, t, derivs=0):
        t = np.asarray(t, dtype=float)
        g, g1, g2 = np.ones_like(t), np.zeros_like(t), np.zeros_like(t)
        for s, w, a in zip(self.starts, self.widths, self.weights):
            v, d1, d2 = smooth_step((t - s) / w, derivs=2)
            g -= a * v
            g1 -= a * d1 / w
            g2 -= a * d2 / w**2
        # exact zero past the last step so that f is exactly x out there
        g = np.where(t >= self.support_end, 0.0, np.clip(g, 0.0, 1.0))
        if derivs == 0:
            return g
        return (g, g1, g2)[: derivs + 1]


def _stagger(M, count, overlap):
    d = (M - 1) / (count + overlap - 1)
    return 1 + d * np.arange(count), overlap * d


def staggered_profile(M, count=20, overlap=4):
    """Equal steps from t = 1 to t = M.

    Each step has width ``overlap * d`` with ``d = (M - 1)/(count + overlap - 1)``,
    so ``|gamma'| < 2/M``. Meets the slope bound but the resulting ``f`` is not
    monotone along the x-axis, which creates extra critical points there.
    """
    starts, width = _stagger(M, count, overlap)
    return Profile(starts, np.full(count, width), np.full(count, 1.0 / count))


def axis_profile(M, count=40, overlap=4, grid=4000, slope_margin=0.98):
    """Step weights chosen by a linear program so that ``f`` is increasing on the x-axis.

    With ``e = 1 - gamma`` and ``q = x^2 - 1`` the axis derivative of ``f`` is
    positive iff ``x q (q-1) e' < q (1 + (q-1) e) + 2 x^2 (1 - e)``, which is
    linear in the weights. The program maximizes the relative margin of that
    inequality subject to ``e' <= slope_margin * 2/M``.
    """
    starts, width = _stagger(M, count, overlap)
    x = np.linspace(1, M, grid)
    E, E1 = smooth_step((x[:, None] - starts) / width, derivs=1)
    E1 = E1 / width
    q = x**2 - 1
    scale = q + 2 * x**2
    axis = ((x * q * (q - 1))[:, None] * E1 - (q * (q - 1) - 2 * x**2)[:, None] * E) / scale[:, None]
    A = np.vstack([np.hstack([axis, np.ones((grid, 1))]), np.hstack([E1, np.zeros((grid, 1))])])
    b = np.concatenate([np.ones(grid), np.full(grid, slope_margin * 2 / M)])
    c = np.zeros(count + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=A, b_ub=b, A_eq=np.append(np.ones(count), 0.0)[None], b_eq=[1.0],
                  bounds=[(0, None)] * count + [(None, 1.0)])
    if res.status != 0 or res.x[-1] <= 0:
        raise ValueError(f"no monotone profile found for M={M}")
    w = np.clip(res.x[:-1], 0, None)
    return Profile(starts, np.full(count, width), w / w.sum())


def steepened_profile(base: Profile, M, slope=5.0, weight=0.05):
    """Mix a short steep step at ``t = 1`` into ``base`` so that ``max|gamma'| ~ slope/M``.

    The step sits where ``r^2 - 1 < 1``, a range in which a steeper profile
    cannot create axis critical points, so only the slope bound is broken.
    """
    width = 2 * weight * M / slope
    return Profile(np.append(base.starts, 1.0), np.append(base.widths, width),
                   np.append((1 - weight) * base.weights, weight))


def single_step_profile(M, width):
    """One smooth step from ``t = 1`` to ``t = 1 + width``; slope peaks at ``2/width``."""
    if 1 + width > M:
        raise ValueError("step must end before M")
    return Profile([1.0], [width], [1.0])


@dataclass
class BirthConfig:
    M: float = 10.0
    n: int = 3
    r: int = 1
    profile: Profile | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.M > 2:
            raise ValueError("M must exceed 2")
        if self.n < 3:
            raise ValueError("n must be at least 3")
        if not 0 < self.r < self.n - 1:
            raise ValueError("need 0 < r < n - 1")
        if self.profile is None:
            self.profile = axis_profile(self.M)
        if self.profile.support_end > self.M * (1 + 1e-12):
            raise ValueError("profile must vanish for t >= M")

    def profile_slope(self, samples=10_000):
        t = np.linspace(0, self.M, samples)
        return float(np.abs(self.profile(t, 1)[1]).max())

    def profile_ok(self, samples=10_000):
        """``|gamma'| <= 2/M`` and monotone on a sample grid."""
        t = np.linspace(0, self.M, samples)
        g, g1 = self.profile(t, 1)
        return bool(np.abs(g1).max() <= 2 / self.M and np.all(g1 <= 0)
                    and g[0] == 1 and abs(self.profile(self.M)) <= 1e-14)


# ---------------------------------------------------------------------------
# the function on R^3

def _cubic(p):
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    f = x**3 - x + (x + 1) * y**2 + (x - 1) * z**2
    g = np.stack([3 * x**2 - 1 + y**2 + z**2, 2 * (x + 1) * y, 2 * (x - 1) * z], 1)
    h = np.zeros((len(p), 3, 3))
    h[:, 0, 0] = 6 * x
    h[:, 1, 1] = 2 * (x + 1)
    h[:, 2, 2] = 2 * (x - 1)
    h[:, 0, 1] = h[:, 1, 0] = 2 * y
    h[:, 0, 2] = h[:, 2, 0] = 2 * z
    return f, g, h


def _quotient(p, profile):
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    r = np.linalg.norm(p, axis=1)
    q = r**2 - 1
    ga, g1, g2 = profile(r, 2)
    u = p / r[:, None]
    eye = np.eye(3)
    uu = u[:, :, None] * u[:, None, :]
    dga = g1[:, None] * u
    hga = g2[:, None, None] * uu + (g1 / r)[:, None, None] * (eye - uu)
    ex = np.array([1.0, 0.0, 0.0])
    s = y**2 - z**2
    ds = np.stack([np.zeros_like(y), 2 * y, -2 * z], 1)
    hs = np.diag([0.0, 2.0, -2.0])

    N = x * q + s * ga
    dN = q[:, None] * ex + 2 * x[:, None] * p + ga[:, None] * ds + s[:, None] * dga
    hN = (2 * (ex[None, :, None] * p[:, None, :] + p[:, :, None] * ex[None, None, :])
          + 2 * x[:, None, None] * eye + ga[:, None, None] * hs
          + dga[:, :, None] * ds[:, None, :] + ds[:, :, None] * dga[:, None, :]
          + s[:, None, None] * hga)
    D = ga + q * (1 - ga)
    if np.any(D <= 0):
        raise ValueError("nonpositive denominator: invalid profile")
    dD = (1 - q)[:, None] * dga + 2 * (1 - ga)[:, None] * p
    hD = ((1 - q)[:, None, None] * hga - 2 * dga[:, :, None] * p[:, None, :]
          - 2 * p[:, :, None] * dga[:, None, :] + 2 * (1 - ga)[:, None, None] * eye)

    f = N / D
    df = (dN - f[:, None] * dD) / D[:, None]
    hf = (hN - f[:, None, None] * hD - df[:, :, None] * dD[:, None, :]
          - dD[:, :, None] * df[:, None, :]) / D[:, None, None]
    return f, df, hf


def birth_function(cfg: BirthConfig, p):
    """Value, gradient and Hessian at points ``p`` of shape (3,) or (m, 3)."""
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    r = np.linalg.norm(p, axis=1)
    f = np.empty(len(p))
    g = np.empty((len(p), 3))
    h = np.empty((len(p), 3, 3))
    inner = r <= 1
    for mask, fn in ((inner, _cubic), (~inner, lambda q: _quotient(q, cfg.profile))):
        if mask.any():
            f[mask], g[mask], h[mask] = fn(p[mask])
    if single:
        return f[0], g[0], h[0]
    return f, g, h


# ---------------------------------------------------------------------------
# lift to R^n

class LiftedBirth:
    """``F(x1, y', z') = f(x1, |y'|, |z'|)`` with ``dim y' = n-r-1``, ``dim z' = r``."""

    def __init__(self, cfg: BirthConfig):
        self.cfg = cfg
        self.n, self.r = cfg.n, cfg.r
        self.ny = cfg.n - cfg.r - 1

    def split(self, X):
        return X[:, 0], X[:, 1:1 + self.ny], X[:, 1 + self.ny:]

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n:
            raise ValueError(f"points must have {self.n} coordinates")
        x1, yv, zv = self.split(X)
        ry, rz = np.linalg.norm(yv, axis=1), np.linalg.norm(zv, axis=1)
        f, g, h = birth_function(self.cfg, np.stack([x1, ry, rz], 1))
        m = len(X)
        grad = np.empty((m, self.n))
        hess = np.zeros((m, self.n, self.n))
        grad[:, 0] = g[:, 0]
        hess[:, 0, 0] = h[:, 0, 0]
        blocks = [(slice(1, 1 + self.ny), yv, ry, 1), (slice(1 + self.ny, self.n), zv, rz, 2)]
        units = []
        for sl, v, rv, k in blocks:
            tiny = rv < 1e-8
            e = v / np.where(rv > 0, rv, 1.0)[:, None]
            # on the axis the radial derivative vanishes by evenness; f_k/r -> f_kk
            ratio = np.where(tiny, h[:, k, k], g[:, k] / np.where(tiny, 1.0, rv))
            grad[:, sl] = g[:, k, None] * e
            dim = v.shape[1]
            ee = e[:, :, None] * e[:, None, :]
            blk = h[:, k, k, None, None] * ee + ratio[:, None, None] * (np.eye(dim) - ee)
            blk[tiny] = h[tiny, k, k, None, None] * np.eye(dim)
            hess[:, sl, sl] = blk
            hess[:, 0, sl] = hess[:, sl, 0] = h[:, 0, k, None] * e
            units.append((sl, e, k))
        (sy, ey, ky), (sz, ez, kz) = units
        cross = h[:, ky, kz, None, None] * ey[:, :, None] * ez[:, None, :]
        hess[:, sy, sz] = cross
        hess[:, sz, sy] = np.swapaxes(cross, 1, 2)
        if single:
            return f[0], grad[0], hess[0]
        return f, grad, hess


def lift_to_rn(cfg: BirthConfig) -> LiftedBirth:
    return LiftedBirth(cfg)


# ---------------------------------------------------------------------------
# critical points

@dataclass
class CriticalPoint:
    location: list
    index: int
    hessian_eigs: list
    value: float


def _newton(fun, x0, tol=1e-13, max_iter=80, radius=None):
    """Damped Newton on ``grad = 0`` run on all rows of ``x0`` at once."""
    x = np.array(x0, dtype=float)
    alive = np.ones(len(x), dtype=bool)
    for _ in range(max_iter):
        _, g, h = fun(x[alive])
        gn = np.linalg.norm(g, axis=1)
        ok = np.abs(np.linalg.det(h)) > 1e-300
        step = np.zeros_like(g)
        step[ok] = np.linalg.solve(h[ok], g[ok][..., None])[..., 0]
        sn = np.linalg.norm(step, axis=1)
        step *= np.minimum(1.0, 0.5 / np.maximum(sn, 1e-300))[:, None]
        idx = np.flatnonzero(alive)
        done = gn < tol
        x[idx[~done]] -= step[~done]
        bad = ~ok | ~np.isfinite(sn)
        if radius is not None:
            bad |= np.linalg.norm(x[idx], axis=1) > radius
        alive[idx[bad & ~done]] = False
        if not np.any(alive[idx] & ~done):
            break
    gn = np.full(len(x), np.inf)
    gn[alive] = np.linalg.norm(fun(x[alive])[1], axis=1)
    conv = gn < tol * 100
    return x[conv]


def _seeds(dim, M, count, seed):
    rng = np.random.default_rng(seed)
    radii = np.concatenate([np.linspace(0.0, 1.2, 13)[1:], np.geomspace(1.3, M, 24)])
    dirs = rng.normal(size=(count, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = (radii[:, None, None] * dirs[None]).reshape(-1, dim)
    return np.vstack([np.zeros((1, dim)), pts])


def _critical_points(fun, dim, M, n_dirs, seed, dedup_tol=1e-7):
    found = []
    for x in _newton(fun, _seeds(dim, M, n_dirs, seed), radius=2 * M):
        if not any(np.linalg.norm(x - y) < dedup_tol for y in found):
            found.append(x)
    out = []
    for x in sorted(found, key=lambda v: tuple(np.round(v, 9))):
        val, _, h = fun(x)
        eig = np.sort(np.linalg.eigvalsh(h))
        out.append(CriticalPoint(x.tolist(), int(np.sum(eig < 0)), eig.tolist(), float(val)))
    return out


def find_critical_points(cfg: BirthConfig, n_dirs=40, seed=0):
    """Newton from shells of seeds in the ball ``r <= M``; deduplicated and sorted."""
    return _critical_points(lambda p: birth_function(cfg, p), 3, cfg.M, n_dirs, seed)


def find_critical_points_rn(cfg: BirthConfig, n_dirs=60, seed=0):
    lift = LiftedBirth(cfg)
    return _critical_points(lift, cfg.n, cfg.M, n_dirs, seed)


def gradient_floor(cfg: BirthConfig, exclude=0.05, samples=200_000, seed=0):
    """Smallest ``|grad f|`` on random points of the ball ``r <= M`` away from the critical points."""
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(samples, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    # uniform in radius so the core is sampled as densely as the shell
    p = d * rng.uniform(0, cfg.M, (samples, 1))
    crit = np.array([[C_CRIT, 0, 0], [-C_CRIT, 0, 0]])
    far = np.min(np.linalg.norm(p[:, None] - crit[None], axis=2), axis=1) > exclude
    _, g, _ = birth_function(cfg, p[far])
    return float(np.linalg.norm(g, axis=1).min())


def escape_check(cfg: BirthConfig, count=200, seed=0, floor=1e-3, r_max=2.0, step=0.05):
    """Normalized gradient flow of +-f from random points with ``1.05 < r < r_max``.

    All paths are integrated together by classical RK4 in arc length. Returns
    ``(fraction escaped past r = 1.01 M without stalling, smallest |grad f| seen)``.
    """
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(count, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pts = d * rng.uniform(1.05, r_max, (count, 1))
    p = np.vstack([pts, pts])
    sign = np.repeat([1.0, -1.0], count)[:, None]

    def v(x, sg):
        g = birth_function(cfg, x)[1]
        gn = np.linalg.norm(g, axis=1)
        return sg * g / gn[:, None], gn

    gmin = np.full(len(p), np.inf)
    active = np.ones(len(p), dtype=bool)
    for _ in range(int(np.ceil(20 * cfg.M / step))):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        x, sg = p[idx], sign[idx]
        k1, g1 = v(x, sg)
        k2, _ = v(x + 0.5 * step * k1, sg)
        k3, _ = v(x + 0.5 * step * k2, sg)
        k4, _ = v(x + step * k3, sg)
        gmin[idx] = np.minimum(gmin[idx], g1)
        p[idx] = x + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        active[idx] = (np.linalg.norm(p[idx], axis=1) <= 1.01 * cfg.M) & (gmin[idx] >= floor)
    escaped = (np.linalg.norm(p, axis=1) > 1.01 * cfg.M) & (gmin >= floor)
    return float(escaped.mean()), float(gmin.min())


# ---------------------------------------------------------------------------
# report

@dataclass
class BirthReport:
    M: float
    n: int
    r: int
    profile_ok: bool
    profile_slope_times_M: float
    outer_identity_err: float
    evenness_err: float
    denominator_min: float
    critical_points: list
    critical_points_rn: list
    count_ok: bool
    locations_err: float
    indices_ok: bool
    indices_rn_ok: bool
    hessian_err: float
    balance: list

    @property
    def passed(self):
        return bool(self.profile_ok and self.outer_identity_err <= 1e-12 and self.evenness_err == 0
                    and self.denominator_min > 0 and self.count_ok and self.locations_err <= 1e-9
                    and self.indices_ok and self.indices_rn_ok and self.hessian_err <= 1e-9)

    def to_json(self):
        d = asdict(self)
        d["passed"] = self.passed
        return json.dumps(d, indent=1)


def expected_hessian_eigs():
    """Eigenvalues at ``(3^{-1/2}, 0, 0)``, ascending."""
    c = C_CRIT
    return np.sort([6 * c, 2 * (1 + c), 2 * (c - 1)])


def verify_birth(cfg: BirthConfig, outer_samples=1000, seed=0) -> BirthReport:
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(outer_samples, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    outer = d * rng.uniform(cfg.M * (1 + 1e-9), 2 * cfg.M, (outer_samples, 1))
    fo, go, _ = birth_function(cfg, outer)
    outer_err = float(max(np.abs(fo - outer[:, 0]).max(),
                          np.abs(go - np.array([1.0, 0, 0])).max()))

    p = rng.uniform(-cfg.M, cfg.M, (outer_samples, 3))
    f0 = birth_function(cfg, p)[0]
    ev = max(np.abs(birth_function(cfg, p * [1, -1, 1])[0] - f0).max(),
             np.abs(birth_function(cfg, p * [1, 1, -1])[0] - f0).max())
    r = np.linalg.norm(p, axis=1)
    ga = cfg.profile(r)
    den = ga + (r**2 - 1) * (1 - ga)
    den_min = float(np.where(r > 1, den, 1.0).min())

    crit = find_critical_points(cfg)
    count_ok = len(crit) == 2
    expected = np.array([[-C_CRIT, 0, 0], [C_CRIT, 0, 0]])
    if count_ok:
        locs = np.array([c.location for c in crit])
        loc_err = float(np.abs(locs - expected).max())
        idx_ok = [c.index for c in crit] == [2, 1]
        plus = crit[1]
        h_err = float(np.abs(np.array(plus.hessian_eigs) - expected_hessian_eigs()).max())
    else:
        loc_err, idx_ok, h_err = np.inf, False, np.inf

    if cfg.n == 3:
        crit_rn, idx_rn = crit, idx_ok
    else:
        crit_rn = find_critical_points_rn(cfg)
        idx_rn = (len(crit_rn) == 2 and sorted(c.index for c in crit_rn) == [cfg.r, cfg.r + 1])
    balance = []
    for c in crit_rn:
        e = np.array(c.hessian_eigs)
        neg, pos = -e[e < 0].sum(), e[e > 0].sum()
        # a diagonal rescaling of the chart equalizes the two sums whenever both are nonzero
        balance.append(dict(location=c.location, neg_sum=float(neg), pos_sum=float(pos),
                            satisfiable_by_rescaling=bool(neg > 0 and pos > 0)))
    return BirthReport(cfg.M, cfg.n, cfg.r, cfg.profile_ok(), cfg.profile_slope() * cfg.M,
                       outer_err, float(ev), den_min, [asdict(c) for c in crit],
                       [asdict(c) for c in crit_rn], count_ok, loc_err, bool(idx_ok), bool(idx_rn),
                       h_err, balance)
