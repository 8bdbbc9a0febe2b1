"""Modified Bessel function of order one and the 4-degree noncentral chi-squared law.

``bessel_i1`` uses the ascending power series below ``SERIES_CUTOFF`` and the
Hankel asymptotic expansion above it.  Both branches are evaluated in an
exponentially scaled form so the density code never overflows.
"""

import math

import numpy as np

SERIES_CUTOFF = 15.0
_SERIES_TERMS = 60
_ASYMPTOTIC_TERMS = 40


def _check_finite_nonneg(z):
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("bessel argument must be finite")
    if np.any(z < 0):
        raise ValueError("bessel argument must be nonnegative")
    return z


def _i1_over_z_series(z):
    """I1(z)/z from the power series, valid (and accurate) for z < SERIES_CUTOFF."""
    q = 0.25 * z * z
    term = np.full_like(z, 0.5)
    total = term.copy()
    for k in range(1, _SERIES_TERMS):
        term = term * q / (k * (k + 1))
        total = total + term
    return total


def _i1e_asymptotic(z):
    """exp(-z) I1(z) from the large-argument expansion (z >= SERIES_CUTOFF)."""
    mu = 4.0
    inv8z = 1.0 / (8.0 * z)
    term = np.ones_like(z)
    total = term.copy()
    best = np.abs(term)
    done = np.zeros(z.shape, dtype=bool)
    for k in range(1, _ASYMPTOTIC_TERMS):
        nxt = -term * (mu - (2 * k - 1) ** 2) * inv8z / k
        # stop each element once the asymptotic terms start growing
        grow = np.abs(nxt) >= best
        done |= grow
        nxt = np.where(done, 0.0, nxt)
        total = total + nxt
        best = np.where(done, best, np.abs(nxt))
        term = np.where(done, term, nxt)
        if done.all():
            break
    return total / np.sqrt(2.0 * math.pi * z)


def bessel_i1e(z):
    """Exponentially scaled I1: ``exp(-z) * I1(z)``."""
    z = _check_finite_nonneg(z)
    out = np.empty_like(z)
    small = z < SERIES_CUTOFF
    zs = z[small]
    out[small] = np.exp(-zs) * zs * _i1_over_z_series(zs)
    out[~small] = _i1e_asymptotic(z[~small])
    return out if out.ndim else float(out)


def bessel_i1(z):
    """First-order modified Bessel function of the first kind, I1(z), for z >= 0.

    Raises ``ValueError`` for negative or non-finite input.  Overflows to ``inf``
    beyond z ~ 713 like any double-precision implementation; use
    :func:`bessel_i1e` there.
    """
    z = _check_finite_nonneg(z)
    out = np.empty_like(z)
    small = z < SERIES_CUTOFF
    zs = z[small]
    out[small] = zs * _i1_over_z_series(zs)
    zl = z[~small]
    with np.errstate(over="ignore"):
        out[~small] = _i1e_asymptotic(zl) * np.exp(zl)
    return out if out.ndim else float(out)


def _i1_over_z_scaled(s):
    """exp(-s) I1(s)/s, finite at s = 0 (limit 1/2)."""
    out = np.empty_like(s)
    small = s < SERIES_CUTOFF
    ss = s[small]
    out[small] = np.exp(-ss) * _i1_over_z_series(ss)
    sl = s[~small]
    out[~small] = _i1e_asymptotic(sl) / sl
    return out


def ncx2_pdf(zeta, x):
    """Density of the noncentral chi-squared law with 4 degrees of freedom.

    ``f(zeta, x) = 1/2 exp(-(zeta + x)/2) sqrt(x/zeta) I1(sqrt(zeta x))``.  It is
    evaluated as ``1/2 x exp(-(zeta + x)/2) I1(s)/s`` with ``s = sqrt(zeta x)``,
    which is the same expression with the removable 0/0 at ``zeta = 0`` taken
    analytically (the central chi-squared(4) density ``x exp(-x/2) / 4``).
    """
    zeta, x = np.broadcast_arrays(np.asarray(zeta, dtype=float), np.asarray(x, dtype=float))
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise ValueError("ncx2_pdf requires x > 0")
    if np.any(zeta < 0) or not np.all(np.isfinite(zeta)):
        raise ValueError("ncx2_pdf requires zeta >= 0")
    s = np.sqrt(zeta * x)
    log_scale = -0.5 * (zeta + x) + s
    out = 0.5 * x * np.exp(log_scale) * _i1_over_z_scaled(np.atleast_1d(s)).reshape(s.shape)
    return out if out.ndim else float(out)


def ncx2_dim0_pdf(zeta, x):
    """Continuous part of the zero-dimensional noncentral chi-squared law.

    Equals ``(zeta / x) * ncx2_pdf(zeta, x)``; it integrates to ``1 - exp(-zeta/2)``
    (the remaining mass sits at the origin).  Finite as ``x -> 0``.
    """
    zeta, x = np.broadcast_arrays(np.asarray(zeta, dtype=float), np.asarray(x, dtype=float))
    s = np.sqrt(zeta * x)
    out = 0.5 * zeta * np.exp(-0.5 * (zeta + x) + s) * _i1_over_z_scaled(np.atleast_1d(s)).reshape(s.shape)
    return out if out.ndim else float(out)
