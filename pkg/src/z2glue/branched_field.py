"""Sections of the flat line bundle with monodromy -1 over the punctured plane.

A section is stored on the double cover ``theta in [0, 4 pi)`` with odd
symmetry ``s(theta + 2 pi) = -s(theta)``. Only ``theta in [0, 2 pi)`` is kept
in memory, so the symmetry holds by construction.

Half-integer modes ``Re(a e^{i(l+1/2) theta}) r^{l+2k+1/2}`` are the building
blocks. Multiplying by ``e^{-i theta/2}`` turns an odd section into an
ordinary ``2 pi``-periodic function, which is how mode coefficients are
extracted with an FFT.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BranchedGrid:
    """Polar samples of an odd section.

    Attributes
    ----------
    r : ndarray, shape (J,)
        Increasing positive radii.
    values : ndarray, shape (J, M)
        Samples at ``theta_j = 2 pi j / M``, ``j < M``.
    """

    r: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or np.any(r <= 0) or np.any(np.diff(r) <= 0):
            raise ValueError("r must be a 1-d increasing array of positive radii")
        if v.shape[0] != r.size or v.ndim != 2:
            raise ValueError(f"values shape {v.shape} does not match {r.size} radii")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "values", v)

    @property
    def n_theta(self) -> int:
        return self.values.shape[1]

    @property
    def theta(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_theta) / self.n_theta

    @property
    def theta_full(self) -> np.ndarray:
        return 2 * np.pi * np.arange(2 * self.n_theta) / self.n_theta

    @property
    def values_full(self) -> np.ndarray:
        """Values on the whole double cover, shape (J, 2M)."""
        return np.concatenate([self.values, -self.values], axis=1)

    def with_values(self, values) -> "BranchedGrid":
        return BranchedGrid(self.r, values)

    @classmethod
    def zeros(cls, r, n_theta):
        r = np.asarray(r, dtype=float)
        return cls(r, np.zeros((r.size, n_theta)))

    @classmethod
    def from_function(cls, fun, r, n_theta):
        """Sample ``fun(r, theta)`` (broadcasting) on ``theta in [0, 2 pi)``."""
        r = np.asarray(r, dtype=float)
        theta = 2 * np.pi * np.arange(n_theta) / n_theta
        return cls(r, np.broadcast_to(fun(r[:, None], theta[None, :]), (r.size, n_theta)))

    def __add__(self, other):
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        return self.with_values(self.values - other.values)

    def __mul__(self, lam):
        return self.with_values(lam * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True)
class HalfIntegerFit:
    """Coefficients of ``Re(A z^{1/2})`` and ``Re(B z^{3/2})`` as real pairs."""

    A: tuple
    B: tuple
    residual: float
    accurate: bool = True

    @property
    def a_complex(self) -> complex:
        return complex(*self.A)

    @property
    def b_complex(self) -> complex:
        return complex(*self.B)


def section_from_modes(coeffs, r, n_theta) -> BranchedGrid:
    """Evaluate ``sum Re(a e^{i(l+1/2) theta}) r^{l+2k+1/2}`` on a polar grid.

    Parameters
    ----------
    coeffs : iterable of (l, k, complex)
    r : array_like
        Radii.
    n_theta : int
        Angular nodes on ``[0, 2 pi)``.
    """
    grid = BranchedGrid.zeros(r, n_theta)
    vals = np.zeros_like(grid.values)
    for l, k, amp in coeffs:
        if int(l) != l or int(k) != k or l < 0 or k < 0:
            raise ValueError(f"mode indices must be nonnegative integers, got {(l, k)}")
        phase = np.exp(1j * (l + 0.5) * grid.theta)
        vals += np.real(complex(amp) * phase)[None, :] * grid.r[:, None] ** (l + 2 * k + 0.5)
    return grid.with_values(vals)


def angular_modes(values, l_max=None):
    """Complex amplitudes ``a_l(r)`` of an odd section, shape (J, l_max + 1).

    Exact for sections band-limited to ``l < M/2``.
    """
    values = np.asarray(values, dtype=float)
    m = values.shape[-1]
    theta = 2 * np.pi * np.arange(m) / m
    g = values * np.exp(-0.5j * theta)
    ghat = np.fft.fft(g, axis=-1) / m
    top = m // 2 - 1 if l_max is None else l_max
    if top > m // 2 - 1:
        raise ValueError(f"l_max = {top} needs at least {2 * top + 2} angular nodes")
    return 2.0 * ghat[..., : top + 1]


def synthesize_modes(modes, n_theta):
    """Inverse of :func:`angular_modes` on ``n_theta`` nodes."""
    modes = np.asarray(modes, dtype=complex)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    l = np.arange(modes.shape[-1])
    phase = np.exp(1j * (l[:, None] + 0.5) * theta[None, :])
    return np.real(modes @ phase)


def _admissible_offsets(ri, rj, n_theta):
    """Angular offsets d with |z - z'| < min(|z|, |z'|)/2, and the distances."""
    d = np.arange(-(n_theta // 2), n_theta // 2 + 1)
    dist2 = ri**2 + rj**2 - 2 * ri * rj * np.cos(2 * np.pi * d / n_theta)
    lim = 0.5 * min(ri, rj)
    ok = dist2 < lim**2
    if ri == rj:
        ok &= d != 0
    return d[ok], np.sqrt(dist2[ok])


def holder_seminorm(s: BranchedGrid, alpha: float) -> float:
    """Discrete singular Hölder seminorm ``||s||_{,alpha}``.

    The supremum runs over grid pairs with ``|z - z'| < min(|z|, |z'|)/2``.
    Such a segment stays away from the origin, so parallel transport along it
    is the lift to the double-cover node reached by the principal angular
    offset. Pairs straddling the cut ``theta = 0`` are therefore included,
    compared on a common sheet.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    full = s.values_full
    m = s.n_theta
    r = s.r
    best = 0.0
    for i in range(r.size):
        # partners j >= i with r_j < 1.5 r_i (necessary for admissibility)
        j_hi = np.searchsorted(r, 1.5 * r[i], side="left")
        for j in range(i, j_hi):
            offs, dist = _admissible_offsets(r[i], r[j], m)
            if offs.size == 0:
                continue
            base = full[i, :m]
            for d, dz in zip(offs, dist):
                other = np.roll(full[j], -d)[:m]
                q = np.abs(base - other).max() / dz**alpha
                if q > best:
                    best = q
    return float(best)


def pointwise_bound_constant(s: BranchedGrid, alpha: float, seminorm=None) -> float:
    """Smallest ``C`` with ``|s(z)| <= C ||s||_{,alpha} |z|^alpha`` on the grid.

    Raises
    ------
    ValueError
        When the section is nonzero but its discrete seminorm vanishes.
    """
    peak = float(np.max(np.abs(s.values) / s.r[:, None] ** alpha))
    if peak == 0.0:
        return 0.0
    semi = holder_seminorm(s, alpha) if seminorm is None else seminorm
    if semi == 0.0:
        raise ValueError("nonzero section with zero seminorm: grid too coarse")
    return peak / semi


def fit_half_integer(s: BranchedGrid, fit_radii=None, extra_modes=((0, 1), (2, 0))) -> HalfIntegerFit:
    """Least-squares fit of ``Re(A z^{1/2} + B z^{3/2})`` in a radial window.

    Parameters
    ----------
    s : BranchedGrid
    fit_radii : (r0, r1), optional
        Window; defaults to ``(0.05, 0.2) * max(r)``.
    extra_modes : sequence of (l, k)
        Nuisance modes of homogeneity ``r^{5/2}`` fitted alongside ``A`` and
        ``B`` so that they do not leak into them.

    Returns
    -------
    HalfIntegerFit
        ``residual`` is ``sup |s - A-part - B-part| / r^{5/2}`` over the window.
    """
    rmax = s.r[-1]
    r0, r1 = (0.05 * rmax, 0.2 * rmax) if fit_radii is None else fit_radii
    if not 0 < r0 < r1 <= rmax * (1 + 1e-12):
        raise ValueError(f"invalid fit window {(r0, r1)} for max radius {rmax}")
    if r1 / r0 < 1.2:
        raise ValueError(f"fit window ratio {r1 / r0:.3f} < 1.2 is ill-posed")
    sel = (s.r >= r0) & (s.r <= r1)
    if sel.sum() < 4:
        raise ValueError("need at least 4 radial nodes in the fit window")
    r = s.r[sel]
    theta = s.theta
    data = s.values[sel].ravel()
    cols = []
    for l, k in ((0, 0), (1, 0)) + tuple(extra_modes):
        rad = r[:, None] ** (l + 2 * k + 0.5)
        cols.append((rad * np.cos((l + 0.5) * theta)).ravel())
        cols.append((-rad * np.sin((l + 0.5) * theta)).ravel())
    design = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(design, data, rcond=None)
    main = design[:, :4] @ coef[:4]
    rem = (data - main).reshape(r.size, -1)
    resid = float(np.max(np.abs(rem) / r[:, None] ** 2.5))
    return HalfIntegerFit(A=(coef[0], coef[1]), B=(coef[2], coef[3]), residual=resid)


def refinement_grid(level, r_max=1.0, r_min0=0.125, per_octave=8, n_theta0=64):
    """Geometric polar grid for refinement studies.

    Each level pushes the inner radius down by a factor of 8 and doubles the
    radial and angular density.
    """
    r_min = r_min0 * 8.0**-level
    dens = per_octave * 2**level
    n_r = int(round(np.log2(r_max / r_min) * dens)) + 1
    return np.geomspace(r_min, r_max, n_r), n_theta0 * 2**level
