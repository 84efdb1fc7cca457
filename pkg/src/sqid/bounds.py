"""Finite blocklength bounds on P(maybe) for Gaussian sources.

All probabilities are computed in the log domain internally: integrands are
evaluated as logs, shifted by a per-problem maximum found on a coarse pre-scan,
integrated adaptively and shifted back.  Public functions return linear values
and have ``log_*`` twins where underflow is a concern.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .gain import GainCodebook, train_gain_codebook
from .geometry import log_cap_fraction, log_cap_fraction_inverse
from .quadrature import integrate
from .special import chi_logpdf, chi_mass, chi_tail_radii

LN2 = math.log(2.0)
EPSREL = 1e-10
PRESCAN = 33


@dataclass(frozen=True)
class BoundPoint:
    n: int
    R: float
    R_G: float
    R_S: float
    D: float
    value: float
    log2_value: float
    status: str = "ok"
    extra: dict = field(default_factory=dict)


# -- conditional probabilities given ||Y|| = r_Y ----------------------------


def r_y_degenerate(r, theta, n, D):
    """Largest r_Y for which the whole sphere of radius r_Y lies in the
    expansion of the cap at radius r; nan when no such radius exists."""
    r = np.asarray(r, dtype=float)
    disc = (r * np.cos(theta)) ** 2 - r * r + n * D
    with np.errstate(invalid="ignore"):
        out = np.sqrt(disc) - r * np.cos(theta)
    return np.where(disc >= 0, out, np.nan)


def theta_prime(r, r_y, n, D):
    """Expansion angle of a thin cap at radius r seen from radius r_y."""
    r = np.asarray(r, dtype=float)
    r_y = np.asarray(r_y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = (r * r + r_y * r_y - n * D) / (2.0 * r * r_y)
    return np.arccos(np.clip(arg, -1.0, 1.0))


def theta_double_prime(r1, r2, r_y, n, D):
    """Expansion angle of the thick cap [r1, r2] seen from radius r_y."""
    r1, r2, r_y = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (r1, r2, r_y)))
    nd = n * D
    r1p = np.sqrt(r1 * r1 + nd)
    r2p = np.sqrt(r2 * r2 + nd)
    # r1 = 0 never reaches the first branch outside the degenerate region.
    low = theta_prime(np.where(r1 > 0, r1, 1.0), r_y, n, D)
    with np.errstate(invalid="ignore"):
        high = theta_prime(np.where(np.isfinite(r2), r2, 1.0), r_y, n, D)
        mid = np.arcsin(np.clip(np.sqrt(nd) / r_y, 0.0, 1.0))
    return np.where(r_y <= r1p, low, np.where(r_y >= r2p, high, mid))


def log_conditional_thick(r1, r2, theta, r_y, n, D):
    """log P{Y in expansion of the thick cap | ||Y|| = r_y}."""
    r1, r2, theta, r_y = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (r1, r2, theta, r_y)))
    s = math.sqrt(n * D)
    out_of_range = (r_y < r1 - s) | (r_y > r2 + s)
    deg = r_y_degenerate(r1, theta, n, D)
    full = np.where(np.isnan(deg), False, r_y <= deg)
    safe_ry = np.where(r_y > 0, r_y, 1.0)
    ang = np.minimum(theta + theta_double_prime(r1, r2, safe_ry, n, D), np.pi)
    val = log_cap_fraction(ang, n)
    val = np.where(full, 0.0, val)
    return np.where(out_of_range & ~full, -np.inf, val)


def conditional_thin(r, theta, r_y, n, D):
    """P{Y in expansion of the thin cap | ||Y|| = r_y}."""
    return np.exp(log_conditional_thick(r, r, theta, r_y, n, D))


def conditional_thick(r1, r2, theta, r_y, n, D):
    return np.exp(log_conditional_thick(r1, r2, theta, r_y, n, D))


# -- log-domain quadrature --------------------------------------------------


def _log_integrate(logf, lo, hi, owner, n_problems, epsrel=EPSREL):
    """log sum over segments of the integral of exp(logf), per problem."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    owner = np.asarray(owner, dtype=np.int64)
    keep = hi > lo
    lo, hi, owner = lo[keep], hi[keep], owner[keep]
    out = np.full(n_problems, -np.inf)
    if lo.size == 0:
        return out
    t = (np.arange(PRESCAN) + 0.5) / PRESCAN
    xs = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    own = np.broadcast_to(owner[:, None], xs.shape)
    with np.errstate(all="ignore"):
        vals = logf(xs.ravel(), own.ravel())
    shift = np.full(n_problems, -np.inf)
    np.maximum.at(shift, own.ravel(), np.where(np.isnan(vals), -np.inf, vals))
    # Problems whose pre-scan saw only zeros still get integrated unshifted.
    shift = np.where(np.isfinite(shift), shift, 0.0)

    def f(x, o):
        with np.errstate(all="ignore"):
            v = logf(x, o) - shift[o]
        return np.where(np.isnan(v), 0.0, np.exp(v))

    total, _ = integrate(f, lo, hi, owner, n_problems, epsabs=0.0, epsrel=epsrel)
    with np.errstate(divide="ignore"):
        res = np.log(np.maximum(total, 0.0)) + shift
    return np.where(total > 0, res, -np.inf)


def _thick_segments(r1, r2, theta, n, D):
    """Integration segments in r_Y for a batch of thick caps, split at every
    case boundary."""
    s = math.sqrt(n * D)
    t_lo, t_hi = chi_tail_radii(n)
    lo = np.maximum(np.maximum(r1 - s, 0.0), t_lo)
    hi = np.minimum(r2 + s, t_hi)
    deg = r_y_degenerate(r1, theta, n, D)
    nd = n * D
    cuts = [
        deg,
        np.sqrt(r1 * r1 + nd),
        np.sqrt(r2 * r2 + nd),
    ]
    # Kinks where theta + theta'' reaches pi in the outer and middle branches.
    with np.errstate(invalid="ignore", divide="ignore"):
        cuts.append(r_y_degenerate(np.where(np.isfinite(r2), r2, np.nan), theta, n, D))
        sin_t = np.sin(np.pi - theta)
        cuts.append(np.where(theta >= np.pi / 2, s / np.where(sin_t > 0, sin_t, np.nan), np.nan))
    pts = np.column_stack([lo] + cuts + [hi])
    pts = np.where(np.isnan(pts), lo[:, None], pts)
    pts = np.clip(pts, lo[:, None], hi[:, None])
    pts.sort(axis=1)
    seg_lo = pts[:, :-1].ravel()
    seg_hi = pts[:, 1:].ravel()
    owner = np.repeat(np.arange(r1.size), pts.shape[1] - 1)
    return seg_lo, seg_hi, owner


def log_prob_thick_batch(r1, r2, theta, n, D, epsrel=EPSREL):
    r1, r2, theta = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float)) for v in (r1, r2, theta)))
    r1, r2, theta = r1.ravel(), r2.ravel(), theta.ravel()
    seg_lo, seg_hi, owner = _thick_segments(r1, r2, theta, n, D)

    def logf(x, o):
        return log_conditional_thick(r1[o], r2[o], theta[o], x, n, D) + chi_logpdf(x, n)

    return _log_integrate(logf, seg_lo, seg_hi, owner, r1.size, epsrel)


def _validate(n, D, theta):
    if n < 2:
        raise DomainError("blocklength must be at least 2")
    if not D > 0:
        raise DomainError("similarity threshold D must be positive")
    theta = np.asarray(theta, dtype=float)
    if np.any(np.isnan(theta)) or np.any(theta < 0) or np.any(theta > np.pi):
        raise DomainError("cap angle must lie in [0, pi]")


def prob_thin_cap_expansion(r, theta, n, D):
    _validate(n, D, theta)
    if not np.all(np.asarray(theta) <= np.pi / 2):
        raise DomainError("thin cap angle must lie in [0, pi/2]")
    if np.any(np.asarray(r) <= 0):
        raise DomainError("cap radius must be positive")
    out = np.exp(log_prob_thick_batch(r, r, theta, n, D))
    return float(out[0]) if np.ndim(r) == 0 and np.ndim(theta) == 0 else out


def prob_thick_cap_expansion(r1, r2, theta, n, D):
    _validate(n, D, theta)
    if np.any(np.asarray(r1) > np.asarray(r2)) or np.any(np.asarray(r1) < 0):
        raise DomainError("need 0 <= r1 <= r2")
    out = np.exp(log_prob_thick_batch(r1, r2, theta, n, D))
    return float(out[0]) if all(np.ndim(v) == 0 for v in (r1, r2, theta)) else out


# -- bounds on P(maybe) ----------------------------------------------------


def log_achievability_bound(n, D, gain_cb: GainCodebook, theta):
    """Natural log of the thick-cap sum over gain cells."""
    _validate(n, D, theta)
    if gain_cb.n != n:
        raise DomainError("gain codebook built for another blocklength")
    b = np.asarray(gain_cb.boundaries, dtype=float)
    r1, r2 = b[:-1], b[1:]
    with np.errstate(divide="ignore"):
        log_mass = np.log(chi_mass(r1, r2, n))
    thetas = np.atleast_1d(np.asarray(theta, dtype=float))
    res = np.empty(thetas.size)
    for j, th in enumerate(thetas):
        terms = log_mass + log_prob_thick_batch(r1, r2, np.full(r1.size, th), n, D)
        res[j] = _logsumexp(terms)
    return float(res[0]) if np.ndim(theta) == 0 else res


def achievability_bound(n, D, gain_cb: GainCodebook, theta):
    return np.exp(log_achievability_bound(n, D, gain_cb, theta))


def log_genie_bound(n, D, theta):
    """Natural log of the thin-cap probability averaged over ||X||."""
    _validate(n, D, theta)
    thetas = np.atleast_1d(np.asarray(theta, dtype=float))
    t_lo, t_hi = chi_tail_radii(n)
    mode = math.sqrt(n - 1)
    # Three outer segments per angle, split at the chi mode.
    lo = np.repeat(np.array([[t_lo, mode]]), thetas.size, axis=0).ravel()
    hi = np.repeat(np.array([[mode, t_hi]]), thetas.size, axis=0).ravel()
    owner = np.repeat(np.arange(thetas.size), 2)

    def logf(x, o):
        inner = log_prob_thick_batch(x, x, thetas[o], n, D)
        return inner + chi_logpdf(x, n)

    res = _log_integrate(logf, lo, hi, owner, thetas.size)
    return float(res[0]) if np.ndim(theta) == 0 else res


def genie_bound(n, D, theta):
    return np.exp(log_genie_bound(n, D, theta))


def _logsumexp(v):
    v = np.asarray(v, dtype=float)
    m = np.max(v)
    if not np.isfinite(m):
        return m
    return float(m + np.log(np.sum(np.exp(v - m))))


# -- rate / angle relations -------------------------------------------------


def dumer_log2_density(n):
    """log2 of the covering density guaranteed for spherical codes on S^n."""
    if n < 4:
        raise DomainError("the covering density relation needs n >= 4")
    m = n - 1
    l2 = math.log2(m)
    return math.log2(m * l2 * (0.5 + (2 * math.log2(l2) + 5) / l2))


def min_dumer_rate(n):
    return dumer_log2_density(n) / n


def dumer_theta_for_rate(n, R_S):
    """Covering angle theta with R_S = (1/n) log2(density / Omega(theta))."""
    log2_omega = dumer_log2_density(n) - n * R_S
    if log2_omega > 0:
        raise DomainError(f"shape rate {R_S} is below the smallest rate {min_dumer_rate(n):.6g} for n = {n}")
    return float(log_cap_fraction_inverse(log2_omega * LN2, n))


def id_rate(D):
    if D < 0:
        raise DomainError("D must be nonnegative")
    if D >= 2:
        return math.inf
    return math.log2(2.0 / (2.0 - D))


def _exponent_objective(rho, R, D):
    rho = np.asarray(rho, dtype=float)
    ang = np.minimum(np.pi / 2, np.arcsin(2.0**-R) + np.arccos(np.clip((2 * rho - D) / (2 * rho), -1, 1)))
    with np.errstate(divide="ignore"):
        return (rho - 1 - np.log(rho)) / LN2 - np.log2(np.sin(ang))


def id_exponent(R, D, grid=2001):
    """Identification exponent in bits per dimension: a grid pre-scan over
    rho in [D/2, 1] followed by golden-section refinement."""
    if not 0 < D < 2:
        raise DomainError("exponent needs 0 < D < 2")
    r_id = id_rate(D)
    if R < r_id - 1e-12:
        raise DomainError(f"rate {R} below the identification rate {r_id}")
    rhos = np.linspace(D / 2, 1.0, grid)
    vals = _exponent_objective(rhos, R, D)
    k = int(np.argmin(vals))
    a = rhos[max(k - 1, 0)]
    b = rhos[min(k + 1, grid - 1)]
    best = _golden(lambda x: float(_exponent_objective(x, R, D)), a, b)
    return float(max(min(vals[k], best[1]), 0.0))


def _golden(f, a, b, tol=1e-12, maxit=200):
    """Golden-section minimization on [a, b]; returns (x, f(x))."""
    g = (math.sqrt(5) - 1) / 2
    c = b - g * (b - a)
    d = a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxit):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


# -- rate split -------------------------------------------------------------

DEFAULT_K_GRID = (1, 2, 4, 8, 16, 32, 64, 128, 256)


def best_rate_split(n, R, D, K_grid=DEFAULT_K_GRID):
    """Minimize the achievability bound over gain level counts.

    Returns a BoundPoint whose extra dict holds K, theta and the per-K logs.
    Levels that leave no feasible shape rate are skipped.
    """
    if len(K_grid) == 0:
        raise DomainError("gain level grid is empty")
    best = None
    tried = {}
    for K in K_grid:
        R_G = math.log2(K) / n
        R_S = R - R_G
        if R_S < min_dumer_rate(n):
            tried[K] = None
            continue
        theta = dumer_theta_for_rate(n, R_S)
        lv = log_achievability_bound(n, D, train_gain_codebook(n, int(K)), theta)
        tried[K] = lv
        if best is None or lv < best[0]:
            best = (lv, K, R_G, R_S, theta)
    if best is None:
        return BoundPoint(n, R, math.nan, math.nan, D, math.nan, math.nan, "infeasible",
                          {"reason": "rate below the smallest shape rate for every gain level"})
    lv, K, R_G, R_S, theta = best
    return BoundPoint(n, R, R_G, R_S, D, math.exp(lv), lv / LN2, "ok",
                      {"K": K, "theta": theta, "log2_by_K": {k: (v / LN2 if v is not None else None) for k, v in tried.items()}})


# -- converse ---------------------------------------------------------------


def converse_eta_max(D):
    """Largest eta keeping D > D' > D'' > 0."""
    return 1.0 - (1.0 - math.sqrt(D) / 2.0) ** 2


def _converse_log_terms(n, R, D, c, eta):
    """log of c * Omega* * mass^2 on a (c, eta) grid (broadcasting)."""
    c = np.asarray(c, dtype=float)
    eta = np.asarray(eta, dtype=float)
    s1 = math.sqrt(D) + np.sqrt(1 - eta) - 1
    s2 = s1 + np.sqrt(1 - eta) - 1
    d2 = s2 * s2
    th_d = np.arccos(np.clip((2 - d2) / 2, -1, 1))
    with np.errstate(divide="ignore"):
        log_p = np.log1p(-c) - n * R * LN2
    phi = np.asarray(log_cap_fraction_inverse(log_p, n))
    grid = phi.ndim > 0 and th_d.ndim > 0
    ang = np.minimum(phi[:, None] + th_d[None, :], np.pi) if grid else np.minimum(phi + th_d, np.pi)
    log_omega = log_cap_fraction(ang, n)
    with np.errstate(divide="ignore"):
        mass = np.log(chi_mass(np.sqrt(n * (1 - eta)), np.sqrt(n * (1 + eta)), n))
    lc = np.log(c)
    if grid:
        return lc[:, None] + log_omega + 2 * mass[None, :]
    return lc + log_omega + 2 * mass


def log_converse_bound(n, R, D, grid=200, rounds=3):
    """Natural log of the converse lower bound and the maximizing (c, eta).

    Returns (log_value, info).  An empty feasible set gives -inf with a
    diagnostic in info.
    """
    if not R > 0:
        raise DomainError("rate must be positive")
    if not 0 < D < 2:
        raise DomainError("converse needs 0 < D < 2")
    eta_max = converse_eta_max(D)
    if eta_max <= 0:
        return -math.inf, {"status": "infeasible", "reason": "no eta with D > D' > D''"}
    cs = (np.arange(grid) + 0.5) / grid
    etas = eta_max * (np.arange(grid) + 0.5) / grid
    vals = _converse_log_terms(n, R, D, cs, etas)
    if not np.any(np.isfinite(vals)):
        return -math.inf, {"status": "infeasible", "reason": "objective vanishes on the grid"}
    i, j = np.unravel_index(np.nanargmax(np.where(np.isfinite(vals), vals, -np.inf)), vals.shape)
    c, eta = cs[i], etas[j]
    best = vals[i, j]
    dc, de = 1.0 / grid, eta_max / grid
    # Coordinate-wise golden-section refinement inside the neighbouring cells.
    for _ in range(rounds):
        lo_c, hi_c = max(c - dc, 1e-15), min(c + dc, 1 - 1e-15)
        c_new, v_c = _golden(lambda x: -float(_converse_log_terms(n, R, D, x, eta)), lo_c, hi_c, tol=1e-7)
        if -v_c > best:
            c, best = c_new, -v_c
        lo_e, hi_e = max(eta - de, 1e-15), min(eta + de, eta_max * (1 - 1e-15))
        e_new, v_e = _golden(lambda x: -float(_converse_log_terms(n, R, D, c, x)), lo_e, hi_e, tol=1e-7)
        if -v_e > best:
            eta, best = e_new, -v_e
    return float(best), {"status": "ok", "c": float(c), "eta": float(eta)}


def converse_bound(n, R, D):
    lv, _ = log_converse_bound(n, R, D)
    return math.exp(lv)
