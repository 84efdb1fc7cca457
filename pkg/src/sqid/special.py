"""Special functions: regularized incomplete beta and chi-distribution helpers.

The incomplete beta is evaluated with the modified Lentz continued fraction,
vectorized over numpy arrays, and can return its logarithm so that cap
fractions far below the double-precision range stay usable.
"""
import numpy as np
from scipy import special as sc

_FPMIN = 1e-300
_EPS = 1e-15
_MAXIT = 20000


def _betacf(a, b, x):
    """Continued fraction for I_x(a, b) (modified Lentz), elementwise."""
    a, b, x = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, x)))
    a, b, x = a.ravel(), b.ravel(), x.ravel()
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
    d = 1.0 / d
    h = d.copy()
    active = np.arange(x.size)
    for m in range(1, _MAXIT + 1):
        if active.size == 0:
            break
        aa_, bb_, xx = a[active], b[active], x[active]
        cc, dd = c[active], d[active]
        m2 = 2 * m
        aa = m * (bb_ - m) * xx / ((qam[active] + m2) * (aa_ + m2))
        dd = 1.0 + aa * dd
        dd = np.where(np.abs(dd) < _FPMIN, _FPMIN, dd)
        cc = 1.0 + aa / cc
        cc = np.where(np.abs(cc) < _FPMIN, _FPMIN, cc)
        dd = 1.0 / dd
        hh = h[active] * dd * cc
        aa = -(aa_ + m) * (qab[active] + m) * xx / ((aa_ + m2) * (qap[active] + m2))
        dd = 1.0 + aa * dd
        dd = np.where(np.abs(dd) < _FPMIN, _FPMIN, dd)
        cc = 1.0 + aa / cc
        cc = np.where(np.abs(cc) < _FPMIN, _FPMIN, cc)
        dd = 1.0 / dd
        delta = dd * cc
        hh = hh * delta
        h[active], c[active], d[active] = hh, cc, dd
        active = active[np.abs(delta - 1.0) >= _EPS]
    else:
        raise RuntimeError("incomplete beta continued fraction did not converge")
    return h


def log_betainc(a, b, x, xc=None):
    """Return (log I_x(a,b), log(1 - I_x(a,b))), elementwise.

    ``xc`` may carry 1 - x computed without cancellation.
    """
    x = np.asarray(x, dtype=float)
    xc = 1.0 - x if xc is None else np.asarray(xc, dtype=float)
    a, b, x, xc = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), x, xc)
    shape = x.shape
    a, b, x, xc = a.ravel(), b.ravel(), x.ravel(), xc.ravel()
    logp = np.empty(x.size)
    logq = np.empty(x.size)

    zero = x <= 0.0
    one = xc <= 0.0
    logp[zero], logq[zero] = -np.inf, 0.0
    logp[one], logq[one] = 0.0, -np.inf
    mid = ~(zero | one)
    if np.any(mid):
        am, bm, xm, xcm = a[mid], b[mid], x[mid], xc[mid]
        with np.errstate(divide="ignore"):
            front = am * np.log(xm) + bm * np.log(xcm) - sc.betaln(am, bm)
        direct = xm < (am + 1.0) / (am + bm + 2.0)
        lp = np.empty(xm.size)
        lq = np.empty(xm.size)
        if np.any(direct):
            i = direct
            lp[i] = front[i] + np.log(_betacf(am[i], bm[i], xm[i])) - np.log(am[i])
            lq[i] = np.log1p(-np.exp(lp[i]))
        if np.any(~direct):
            i = ~direct
            lq[i] = front[i] + np.log(_betacf(bm[i], am[i], xcm[i])) - np.log(bm[i])
            lp[i] = np.log1p(-np.exp(lq[i]))
        logp[mid], logq[mid] = lp, lq
    return logp.reshape(shape), logq.reshape(shape)


def betainc(a, b, x):
    """Regularized incomplete beta I_x(a, b)."""
    return np.exp(log_betainc(a, b, x)[0])


def chi_logpdf(r, n):
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        out = (1.0 - n / 2.0) * np.log(2.0) + (n - 1) * np.log(r) - r * r / 2.0 - sc.gammaln(n / 2.0)
    if n == 1:
        out = np.where(r >= 0, out, -np.inf)
    return out


def chi_mass(lo, hi, n):
    """P{lo <= ||X|| <= hi} for standard Gaussian X in R^n; hi may be inf."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    k = n / 2.0
    upper = sc.gammaincc(k, lo * lo / 2.0) - sc.gammaincc(k, hi * hi / 2.0)
    lower = sc.gammainc(k, hi * hi / 2.0) - sc.gammainc(k, lo * lo / 2.0)
    mode = np.sqrt(max(n - 1, 0))
    return np.clip(np.where(lo >= mode, upper, lower), 0.0, 1.0)


def chi_partial_mean(lo, hi, n):
    """E[||X|| ; lo <= ||X|| <= hi] in closed form via the incomplete gamma."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    k = (n + 1) / 2.0
    scale = np.sqrt(2.0) * np.exp(sc.gammaln(k) - sc.gammaln(n / 2.0))
    upper = sc.gammaincc(k, lo * lo / 2.0) - sc.gammaincc(k, hi * hi / 2.0)
    lower = sc.gammainc(k, hi * hi / 2.0) - sc.gammainc(k, lo * lo / 2.0)
    mode = np.sqrt(n)
    return scale * np.where(lo >= mode, upper, lower)


def chi_tail_radii(n, mass=1e-300):
    """Radii below/above which the chi(n) law puts less than ``mass``."""
    k = n / 2.0
    lo = np.sqrt(2.0 * sc.gammaincinv(k, mass))
    hi = np.sqrt(2.0 * sc.gammainccinv(k, mass))
    return float(lo), float(hi)
