"""Nash-Moser iteration with smoothing operators on graded spaces.

The engine runs ``x_{j+1} = x_j + S_{theta_j} v_j`` with
``v_j = -V(x_j, F(x_j)) F(x_j)`` and ``theta_{j+1} = theta_j^{5/4}``, logs
every graded norm it needs, and lets :func:`audit_trace` recheck the
convergence conditions afterwards. Two small tame problems are
included: a diagonal one on weighted sequences and a Burgers-type one on the
circle.
"""
from __future__ import annotations

import json
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from .profiles import plateau


# ---------------------------------------------------------------------------
# graded spaces

class GradedSpace(ABC):
    """A finite-dimensional stand-in for a graded Frechet space."""

    k_max: int

    @abstractmethod
    def norms(self, x) -> np.ndarray:
        """All norms ``||x||_0 .. ||x||_{k_max}``, nondecreasing."""

    def norm(self, x, k):
        if not 0 <= k <= self.k_max:
            raise ValueError(f"grade {k} outside 0..{self.k_max}")
        return float(self.norms(x)[k])

    def zeros(self):
        raise NotImplementedError


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on the circle ``[0, length)``."""

    size: int
    length: float = 2 * np.pi

    def __post_init__(self):
        if self.size < 4 or self.size % 2:
            raise ValueError("grid size must be even and at least 4")

    @property
    def x(self):
        return self.length * np.arange(self.size) / self.size

    @property
    def wavenumbers(self):
        """Angular wavenumbers of the real FFT."""
        return 2 * np.pi / self.length * np.arange(self.size // 2 + 1)


class PeriodicSpace(GradedSpace):
    """``||u||_k = max_{j <= k} sup |d^j u|`` on a periodic grid.

    Derivatives are spectral; the sup is over grid nodes. Fourier
    coefficients below ``64 eps`` of the largest one are treated as round-off
    and dropped, since ``|xi|^k`` would otherwise amplify them into the high
    grades. With ``degenerate=True`` every grade carries the sup norm.
    """

    def __init__(self, grid: PeriodicGrid, k_max: int, degenerate=False):
        self.grid, self.k_max, self.degenerate = grid, int(k_max), degenerate

    def derivative(self, u, order):
        xi = self.grid.wavenumbers
        sym = (1j * xi) ** order
        if order % 2:
            sym[-1] = 0.0  # Nyquist mode has no real odd derivative
        return np.fft.irfft(sym * np.fft.rfft(u), n=self.grid.size)

    def norms(self, u):
        u = np.asarray(u, dtype=float)
        if self.degenerate:
            return np.full(self.k_max + 1, np.abs(u).max())
        uh = np.fft.rfft(u)
        amp = np.abs(uh)
        uh[amp <= 64 * np.finfo(float).eps * amp.max()] = 0
        xi = self.grid.wavenumbers
        sups = np.empty(self.k_max + 1)
        for j in range(self.k_max + 1):
            sym = (1j * xi) ** j
            if j % 2:
                sym[-1] = 0.0
            sups[j] = np.abs(np.fft.irfft(sym * uh, n=self.grid.size)).max()
        return np.maximum.accumulate(sups)

    def zeros(self):
        return np.zeros(self.grid.size)


class SequenceSpace(GradedSpace):
    """Truncated sequences with ``||x||_k = max_j |x_j| (1 + j)^k``."""

    def __init__(self, size: int, k_max: int, degenerate=False):
        self.size, self.k_max, self.degenerate = int(size), int(k_max), degenerate

    def norms(self, x):
        a = np.abs(np.asarray(x, dtype=float))
        if self.degenerate:
            return np.full(self.k_max + 1, a.max())
        w = np.log1p(np.arange(self.size))
        with np.errstate(divide="ignore"):
            la = np.log(a)
        return np.exp(np.max(la[None, :] + np.arange(self.k_max + 1)[:, None] * w[None, :], axis=1))

    def zeros(self):
        return np.zeros(self.size)


@dataclass
class GradedVector:
    """An element together with its graded space."""

    payload: np.ndarray
    space: GradedSpace = field(repr=False)

    @cached_property
    def all_norms(self):
        return self.space.norms(self.payload)

    def norm(self, k):
        return float(self.all_norms[k])


# ---------------------------------------------------------------------------
# smoothing

class SmoothingFamily(ABC):
    @abstractmethod
    def apply(self, theta, x):
        """``S_theta x`` for ``theta >= 1``."""

    @staticmethod
    def _check(theta):
        if not theta >= 1:
            raise ValueError("theta must be at least 1")


class IdentitySmoothing(SmoothingFamily):
    def apply(self, theta, x):
        self._check(theta)
        return np.array(x, dtype=float, copy=True)


class FourierSmoothing(SmoothingFamily):
    """Periodic convolution stored as a Fourier multiplier."""

    def __init__(self, grid: PeriodicGrid, symbol, kind):
        self.grid, self._symbol, self.kind = grid, symbol, kind

    def symbol(self, theta):
        self._check(theta)
        return self._symbol(theta)

    def apply(self, theta, x):
        return np.fft.irfft(self.symbol(theta) * np.fft.rfft(x), n=self.grid.size)


class DiagonalSmoothing(SmoothingFamily):
    """``x_j -> gamma((1 + j)/theta) x_j`` on sequences."""

    def __init__(self, size, gamma=plateau):
        self.size, self.gamma = size, gamma

    def apply(self, theta, x):
        self._check(theta)
        return self.gamma((1.0 + np.arange(self.size)) / theta) * np.asarray(x, dtype=float)


def _check_profile(gamma):
    s = np.linspace(0, 3, 3001)
    g = np.asarray(gamma(s), dtype=float)
    if np.any(np.diff(g) > 0):
        raise ValueError("gamma must be non-increasing")
    if np.any(g[s <= 1] != 1) or np.any(g[s >= 2] != 0):
        raise ValueError("gamma must equal 1 on [0, 1] and 0 on [2, inf)")


def mollifier_smoothing(grid: PeriodicGrid, gamma=plateau, kind="spectral") -> FourierSmoothing:
    """Smoothing operators on a periodic grid.

    Parameters
    ----------
    grid : PeriodicGrid
    gamma : callable
        Non-increasing cutoff, 1 on [0, 1], 0 on [2, inf).
    kind : {"spectral", "spatial"}
        ``"spatial"`` convolves with the positive kernel
        ``c theta gamma(theta |x|)``, with ``c`` fixed by a discrete unit mass;
        it contracts every norm but its remainder bound saturates at two
        orders. ``"spectral"`` convolves with the kernel whose transform is
        ``gamma(|xi| / theta)``: unit mass, and the remainder bound holds at
        every order.
    """
    _check_profile(gamma)
    xi = grid.wavenumbers
    if kind == "spectral":
        return FourierSmoothing(grid, lambda th: gamma(xi / th), kind)
    if kind == "spatial":
        d = np.minimum(grid.x, grid.length - grid.x)

        def symbol(th):
            if not np.isfinite(th):
                return np.ones_like(xi)
            ker = gamma(th * d)
            ker = ker / ker.sum()
            return np.fft.rfft(ker).real

        return FourierSmoothing(grid, symbol, kind)
    raise ValueError(f"unknown smoothing kind {kind!r}")


# ---------------------------------------------------------------------------
# verification of smoothing and interpolation

def periodic_corpus(grid: PeriodicGrid, count, seed=0, max_freq=48):
    """Unit-sup test functions: random trigonometric polynomials and bumps."""
    rng = np.random.default_rng(seed)
    x = grid.x
    out = []
    for i in range(count):
        if i % 2 == 0:
            deg = int(rng.integers(4, max_freq + 1))
            k = np.arange(1, deg + 1)
            amp = rng.normal(size=(2, deg)) / (1 + k) ** 1.5
            f = rng.normal() + amp[0] @ np.cos(np.outer(k, x)) + amp[1] @ np.sin(np.outer(k, x))
        else:
            c, w = rng.uniform(0, grid.length), rng.uniform(0.3, 1.0)
            f = np.exp((np.cos(x - c) - 1) / w**2)
        out.append(f / np.abs(f).max())
    return out


def _ratio(num, den):
    if num == 0:
        return 0.0
    return num / den if den > 0 else math.inf


@dataclass(frozen=True)
class SmoothingReport:
    """Three constant tables and their drift under theta-range doubling.

    ``forward[(k1, k2)]`` bounds ``||S x||_{k2} / (theta^{k2-k1} ||x||_{k1})``,
    ``remainder[(k1, k2)]`` bounds ``||(I - S) x||_{k1} / (theta^{k1-k2} ||x||_{k2})``
    and ``limit[k]`` is ``||(I - S) x||_k / ||x||_k`` at the largest theta.
    """

    forward: dict
    remainder: dict
    limit: dict
    drift: dict

    @property
    def passed(self):
        tables = (self.forward, self.remainder, self.limit)
        finite = all(np.isfinite(v) for t in tables for v in t.values())
        return finite and all(d < 2 for d in self.drift.values())

    def rows(self):
        for name in ("forward", "remainder", "limit"):
            for key, val in getattr(self, name).items():
                yield name, key, val, self.drift[name, key]


def _smoothing_tables(S, corpus, space, grades, thetas):
    norms = [space.norms(x) for x in corpus]
    fwd, rem = {}, {}
    pairs = [(k1, k2) for k1 in grades for k2 in grades if k1 <= k2]
    for th in thetas:
        for x, nx in zip(corpus, norms):
            sx = S.apply(th, x)
            ns, nr = space.norms(sx), space.norms(x - sx)
            for k1, k2 in pairs:
                fwd[k1, k2] = max(fwd.get((k1, k2), 0.0),
                                  _ratio(ns[k2], th ** (k2 - k1) * nx[k1]))
                rem[k1, k2] = max(rem.get((k1, k2), 0.0),
                                  _ratio(nr[k1], th ** (k1 - k2) * nx[k2]))
    th = max(thetas)
    lim = {k: max(_ratio(space.norms(x - S.apply(th, x))[k], nx[k]) for x, nx in zip(corpus, norms))
           for k in grades}
    return fwd, rem, lim


def verify_smoothing(S: SmoothingFamily, corpus, grades, theta_grid, space: GradedSpace):
    """Measure the smoothing constants on a corpus.

    Each table is computed over ``theta_grid`` and again over the grid
    extended by ``2 theta_grid``. The drift of an entry is the ratio of the
    two values; the report passes if every entry is finite and every drift is
    below 2.
    """
    if len(corpus) == 0:
        raise ValueError("corpus must be nonempty")
    grades = sorted(set(int(k) for k in grades))
    base = np.unique(np.asarray(theta_grid, dtype=float))
    wide = np.unique(np.concatenate([base, 2 * base]))
    t1 = _smoothing_tables(S, corpus, space, grades, base)
    t2 = _smoothing_tables(S, corpus, space, grades, wide)
    drift = {}
    for name, a, b in zip(("forward", "remainder", "limit"), t1, t2):
        for key in a:
            drift[name, key] = 1.0 if a[key] == b[key] else _ratio(b[key], a[key])
    return SmoothingReport(*t1, drift)


def identity_defect(S: SmoothingFamily, x, thetas, space: GradedSpace, k=0):
    """``||(I - S_theta) x||_k`` along ``thetas``."""
    return np.array([space.norm(x - S.apply(th, x), k) for th in thetas])


@dataclass(frozen=True)
class InterpolationReport:
    constants: dict
    constants_half: dict

    @property
    def drift(self):
        return {t: 1.0 if self.constants[t] == self.constants_half[t]
                else _ratio(self.constants[t], self.constants_half[t]) for t in self.constants}

    @property
    def passed(self):
        return all(np.isfinite(c) for c in self.constants.values()) and \
            all(d < 2 for d in self.drift.values())


def interpolation_ratio(nrm, k1, k2, k3):
    """``||f||_{k2}^{k3-k1} / (||f||_{k1}^{k3-k2} ||f||_{k3}^{k2-k1})`` in logs."""
    if not k1 <= k2 <= k3:
        raise ValueError("need k1 <= k2 <= k3")
    if k1 == k3:
        return 1.0
    lg = np.log(nrm)
    return float(np.exp((k3 - k1) * lg[k2] - (k3 - k2) * lg[k1] - (k2 - k1) * lg[k3]))


def interpolation_check(corpus, triples, space: GradedSpace):
    """Largest interpolation ratio per triple, on the corpus and its first half."""
    if len(corpus) == 0:
        raise ValueError("corpus must be nonempty")
    norms = [space.norms(f) for f in corpus]
    if any(n[0] == 0 for n in norms):
        raise ValueError("corpus vectors must be nonzero")
    half = max(1, len(corpus) // 2)
    full, part = {}, {}
    for t in triples:
        t = tuple(int(k) for k in t)
        r = [interpolation_ratio(n, *t) for n in norms]
        full[t], part[t] = max(r), max(r[:half])
    return InterpolationReport(full, part)


# ---------------------------------------------------------------------------
# problems

class TameProblem(ABC):
    """``F: X -> Y`` with derivative and approximate inverse.

    Subclasses set ``space`` (grading on both X and Y), ``m`` and ``delta``.
    """

    space: GradedSpace
    m: int
    delta: float

    @abstractmethod
    def F(self, x): ...

    @abstractmethod
    def DF(self, x, v): ...

    @abstractmethod
    def V(self, x, Fx, a): ...


def inverse_defects(problem: TameProblem, x, probes):
    """Measured ``C3`` for ``V DF = I + Q1`` and ``DF V = I + Q2``.

    Returns ``(c1, c2)`` with ``c_i = max ||Q_i p||_{2m} / (||F||_{3m} ||p||_{3m})``.
    """
    sp, m = problem.space, problem.m
    fx = problem.F(x)
    nf = sp.norm(fx, 3 * m)
    c1 = c2 = 0.0
    for p in probes:
        q1 = problem.V(x, fx, problem.DF(x, p)) - p
        q2 = problem.DF(x, problem.V(x, fx, p)) - p
        den = nf * sp.norm(p, 3 * m)
        c1 = max(c1, _ratio(sp.norm(q1, 2 * m), den))
        c2 = max(c2, _ratio(sp.norm(q2, 2 * m), den))
    return c1, c2


class DiagonalToy(TameProblem):
    """``F(x) = x + x^2 - g`` componentwise on weighted sequences.

    ``V`` divides by ``1 + 2x``, which inverts ``DF`` exactly, so the
    measured ``Q`` terms are round-off.
    """

    def __init__(self, g, m=4, delta=1.0, degenerate=False):
        self.g = np.asarray(g, dtype=float)
        self.m, self.delta = m, delta
        self.space = SequenceSpace(self.g.size, 3 * m + 4, degenerate)

    def F(self, x):
        return x + x * x - self.g

    def DF(self, x, v):
        return (1 + 2 * x) * v

    def V(self, x, Fx, a):
        return a / (1 + 2 * x)


class CircleToy(TameProblem):
    """``F(u) = P_K(u + u u' - g)`` on band-limited periodic functions.

    ``DF(u) v = P_K(v + u' v + u v')`` loses one derivative. ``V`` is the
    exact Galerkin inverse of ``DF(u)`` on the band ``|xi| <= K``.
    """

    def __init__(self, g, n_modes=16, grid_size=128, m=4, delta=10.0, degenerate=False):
        self.grid = PeriodicGrid(grid_size)
        if 2 * n_modes >= grid_size // 2:
            raise ValueError("grid too coarse to dealias the quadratic term")
        self.K, self.m, self.delta = n_modes, m, delta
        self.space = PeriodicSpace(self.grid, 3 * m + 4, degenerate)
        self._pspace = PeriodicSpace(self.grid, 1)
        self.g = self.project(g)
        x = self.grid.x
        k = np.arange(1, n_modes + 1)
        self.basis = np.concatenate([np.ones((1, x.size)), np.cos(np.outer(k, x)),
                                     np.sin(np.outer(k, x))]).T

    def project(self, u):
        uh = np.fft.rfft(np.asarray(u, dtype=float))
        uh[self.K + 1:] = 0
        return np.fft.irfft(uh, n=self.grid.size)

    def d(self, u):
        return self._pspace.derivative(u, 1)

    def F(self, u):
        return self.project(u + u * self.d(u) - self.g)

    def DF(self, u, v):
        return self.project(v + self.d(u) * v + u * self.d(v))

    def V(self, u, Fu, a):
        cols = np.stack([self.DF(u, b) for b in self.basis.T], axis=1)
        coef = np.linalg.lstsq(cols, self.project(a), rcond=None)[0]
        return self.project(self.basis @ coef)

    @classmethod
    def scaled_rhs(cls, seed, level, band=3, **kw):
        """Low-band ``g`` with ``||g||_{2m} = level``."""
        rng = np.random.default_rng(seed)
        prob = cls(np.zeros(kw.get("grid_size", 128)), **kw)
        x = prob.grid.x
        k = np.arange(1, band + 1)
        a = rng.normal(size=(2, band))
        g = a[0] @ np.cos(np.outer(k, x)) + a[1] @ np.sin(np.outer(k, x))
        g *= level / prob.space.norm(g, 2 * prob.m)
        return cls(g, **kw)


# ---------------------------------------------------------------------------
# engine

def _next_theta(theta):
    return theta**1.25 if theta < 1e240 else math.inf


def theta_schedule(theta0, count):
    """``theta_0, theta_0^{5/4}, ...`` by repeated powering (inf once it overflows)."""
    out = [float(theta0)]
    for _ in range(count - 1):
        out.append(_next_theta(out[-1]))
    return np.array(out)


@dataclass
class StepRecord:
    j: int
    theta: float
    F_norms: list
    x_norms: list
    v_norms: dict
    cond_I: bool


@dataclass
class IterationTrace:
    m: int
    delta: float
    theta0: float
    F0_norm_2m: float
    precondition_ok: bool
    steps: list = field(default_factory=list)
    status: str = "running"
    final_residual: float = math.nan
    final_x_norm_m: float = math.nan
    iterates: list = field(default_factory=list, repr=False)

    @property
    def estimate_ratio(self):
        """``||x||_m / ||F(0)||_{2m}`` for the returned ``x``."""
        return _ratio(self.final_x_norm_m, self.F0_norm_2m)

    def to_json(self):
        d = asdict(self)
        d.pop("iterates")
        return json.dumps(d, indent=1, default=float)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        steps = [StepRecord(**s) for s in d.pop("steps")]
        for s in steps:
            s.v_norms = {int(k): v for k, v in s.v_norms.items()}
        return cls(steps=steps, **d)


def run(problem: TameProblem, theta0, S: SmoothingFamily, budget=25, tol=1e-10,
        enforce_precondition=True, keep_iterates=False):
    """Smoothed Newton iteration from ``x_0 = 0``.

    Returns
    -------
    (GradedVector, IterationTrace)
        ``trace.status`` is ``"converged"``, ``"budget"`` or
        ``"trust_region"`` (``||x_j||_{3m} >= delta``; the iteration halts
        and returns the last admissible iterate).

    Raises
    ------
    ValueError
        If ``||F(0)||_{2m} > theta0^{-4}`` and ``enforce_precondition``.
    """
    if theta0 < 2:
        raise ValueError("theta0 must be at least 2")
    sp, m = problem.space, problem.m
    x = sp.zeros()
    fx = problem.F(x)
    f0 = sp.norm(fx, 2 * m)
    pre = f0 <= theta0 ** -4
    if not pre and enforce_precondition:
        raise ValueError(f"||F(0)||_2m = {f0:.3e} exceeds theta0^-4 = {theta0 ** -4:.3e}")
    trace = IterationTrace(m, problem.delta, float(theta0), f0, bool(pre))
    theta = float(theta0)
    for j in range(budget + 1):
        fn, xn = sp.norms(fx), sp.norms(x)
        if keep_iterates:
            trace.iterates.append(x.copy())
        rec = StepRecord(j, theta, fn.tolist(), xn.tolist(), {},
                         bool(xn[3 * m] < problem.delta and fn[2 * m] <= theta**-4))
        trace.steps.append(rec)
        if fn[2 * m] <= tol:
            trace.status = "converged"
            break
        if j == budget:
            trace.status = "budget"
            break
        v = -problem.V(x, fx, fx)
        vn = sp.norms(v)
        rec.v_norms = {k: float(vn[k]) for k in (m, 3 * m, 3 * m + 3) if k <= sp.k_max}
        x_new = x + S.apply(theta, v)
        if sp.norm(x_new, 3 * m) >= problem.delta:
            trace.status = "trust_region"
            break
        x, fx = x_new, problem.F(x_new)
        theta = _next_theta(theta)
    trace.final_residual = float(sp.norm(fx, 2 * m))
    trace.final_x_norm_m = float(sp.norm(x, m))
    return GradedVector(x, sp), trace


@dataclass(frozen=True)
class AuditReport:
    cond_I: list
    cond_II: list
    cond_III: list
    M: float
    D: dict
    first_violation: tuple | None

    @property
    def all_I(self):
        return all(self.cond_I)

    @property
    def passed(self):
        finite = np.isfinite(self.M) and all(np.isfinite(v) for v in self.D.values())
        return finite and self.first_violation is None


def audit_trace(trace: IterationTrace, m=None, delta=None, M=None, D=None):
    """Recheck the convergence conditions on a recorded trace.

    ``I_j``: ``||x_j||_{3m} < delta`` and ``||F(x_j)||_{2m} <= theta_j^{-4}``.
    ``II_j``: ``||v_j||_{3m+3} <= M theta_j^{-3}``.
    ``III_j``: ``1 + ||x_{j+1}||_{k+2m} <= D_k theta_j^{2m} (1 + ||x_j||_{k+2m})``
    for every ``k >= m`` with ``k + 2m`` in range.

    ``M`` and ``D`` default to the smallest constants that make II and III
    hold on the data; given constants are checked as supplied.
    """
    m = trace.m if m is None else m
    delta = trace.delta if delta is None else delta
    steps = trace.steps
    cI = [s.x_norms[3 * m] < delta and s.F_norms[2 * m] <= s.theta**-4 for s in steps]
    vsteps = [s for s in steps if 3 * m + 3 in s.v_norms]
    need_M = max((s.v_norms[3 * m + 3] * s.theta**3 for s in vsteps), default=0.0)
    M_used = need_M if M is None else M
    cII = [s.v_norms[3 * m + 3] <= M_used * s.theta**-3 for s in vsteps]
    k_top = len(steps[0].x_norms) - 1 - 2 * m if steps else m - 1
    need_D = {}
    for k in range(m, k_top + 1):
        r = [(1 + b.x_norms[k + 2 * m]) / (a.theta ** (2 * m) * (1 + a.x_norms[k + 2 * m]))
             for a, b in zip(steps[:-1], steps[1:])]
        need_D[k] = max(r, default=0.0)
    D_used = need_D if D is None else {k: D.get(k, need_D[k]) for k in need_D}
    cIII = []
    for a, b in zip(steps[:-1], steps[1:]):
        cIII.append(all(1 + b.x_norms[k + 2 * m]
                        <= D_used[k] * a.theta ** (2 * m) * (1 + a.x_norms[k + 2 * m])
                        for k in need_D))
    first = None
    for j in range(len(steps)):
        for name, flags in (("I", cI), ("II", cII), ("III", cIII)):
            if j < len(flags) and not flags[j]:
                first = (name, j)
                break
        if first:
            break
    return AuditReport(cI, cII, cIII, float(M_used), dict(D_used), first)
