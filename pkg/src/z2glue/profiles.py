"""C-infinity transition profiles built from exp(-1/t).

All functions are vectorized and return derivatives analytically so that
callers can assemble closed-form gradients and Hessians.
"""
import numpy as np


def _psi(t, order):
    """k-th derivative of psi(t) = exp(-1/t) for t > 0, zero otherwise."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    lt = np.log(tp)
    base = -1.0 / tp
    if order == 0:
        out[pos] = np.exp(base)
    elif order == 1:
        out[pos] = np.exp(base - 2 * lt)
    elif order == 2:
        out[pos] = np.exp(base - 4 * lt) - 2 * np.exp(base - 3 * lt)
    else:
        raise ValueError("order must be 0, 1 or 2")
    return out


def smooth_step(u, derivs=0):
    """Smooth monotone step: 0 for u <= 0, 1 for u >= 1.

    Parameters
    ----------
    u : array_like
    derivs : {0, 1, 2}
        Number of derivatives to return alongside the value.

    Returns
    -------
    ndarray or tuple of ndarray
        ``T`` or ``(T, T', ...)`` evaluated at ``u``.
    """
    u = np.asarray(u, dtype=float)
    a, b = _psi(u, 0), _psi(1.0 - u, 0)
    d = a + b
    val = a / d
    if derivs == 0:
        return val
    a1, b1 = _psi(u, 1), -_psi(1.0 - u, 1)
    n1 = a1 * b - a * b1
    d1 = a1 + b1
    first = n1 / d**2
    if derivs == 1:
        return val, first
    a2, b2 = _psi(u, 2), _psi(1.0 - u, 2)
    n1p = a2 * b - a * b2
    second = n1p / d**2 - 2 * n1 * d1 / d**3
    return val, first, second


def plateau(s, derivs=0):
    """Non-increasing profile equal to 1 on [0, 1] and 0 on [2, inf)."""
    out = smooth_step(np.asarray(s, dtype=float) - 1.0, derivs)
    if derivs == 0:
        return 1.0 - out
    return (1.0 - out[0],) + tuple(-x for x in out[1:])
