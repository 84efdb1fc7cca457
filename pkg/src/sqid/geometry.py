"""Sphere and cap geometry, and the chi density of a Gaussian vector's norm.

Everything here is a pure function; the array variants accept numpy arrays and
broadcast.
"""
from dataclasses import dataclass

import numpy as np
from scipy import special as sc

from .errors import DomainError
from .special import chi_logpdf, log_betainc


@dataclass(frozen=True)
class ThickCap:
    """Intersection of the cone of half-angle ``half_angle`` around ``center``
    with the shell ``r_inner <= ||x|| <= r_outer``."""

    center: np.ndarray
    half_angle: float
    r_inner: float
    r_outer: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", c)
        if abs(np.linalg.norm(c) - 1.0) > 1e-12:
            raise DomainError("cap center must be a unit vector")
        if not 0.0 <= self.half_angle <= np.pi:
            raise DomainError(f"half angle {self.half_angle} outside [0, pi]")
        if not 0.0 <= self.r_inner <= self.r_outer:
            raise DomainError("need 0 <= r_inner <= r_outer")


def sphere_log_area(n, r=1.0):
    """log |S^n_r|, the (n-1)-dimensional content of the radius-r sphere."""
    return np.log(2.0) + (n / 2.0) * np.log(np.pi) + (n - 1) * np.log(r) - sc.gammaln(n / 2.0)


def ball_log_volume(n, r=1.0):
    return (n / 2.0) * np.log(np.pi) + n * np.log(r) - sc.gammaln((n + 2) / 2.0)


def angle_between(x1, x2):
    """Angle in [0, pi] between two nonzero vectors."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    n1, n2 = np.linalg.norm(x1), np.linalg.norm(x2)
    if n1 == 0.0 or n2 == 0.0:
        raise DomainError("angle undefined for a zero vector")
    return float(unit_angles(x1 / n1, x2 / n2))


def unit_angles(u, v):
    """Angles between unit vectors along the last axis.

    Uses 2*atan2(|u - v|, |u + v|), which keeps full relative precision for
    nearly parallel vectors where arccos of the inner product does not.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return 2.0 * np.arctan2(np.linalg.norm(u - v, axis=-1), np.linalg.norm(u + v, axis=-1))


def _check_theta(theta):
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0.0) or np.any(theta > np.pi) or np.any(np.isnan(theta)):
        raise DomainError("cap half-angle must lie in [0, pi]")
    return theta


def log_cap_fraction(theta, n):
    """log Omega(theta, n), the log of the fraction of S^n inside a cap."""
    if n < 2:
        raise DomainError("cap fraction needs n >= 2")
    theta = _check_theta(theta)
    small = theta <= np.pi / 2
    t = np.where(small, theta, np.pi - theta)
    s, c = np.sin(t), np.cos(t)
    logp, _ = log_betainc((n - 1) / 2.0, 0.5, s * s, c * c)
    log_small = np.log(0.5) + logp
    with np.errstate(divide="ignore"):
        log_big = np.log1p(-np.exp(log_small))
    return np.where(small, log_small, log_big)


def cap_fraction(theta, n):
    """Omega(theta, n) = 1/2 I_{sin^2 theta}((n-1)/2, 1/2), complemented past pi/2."""
    out = np.exp(log_cap_fraction(theta, n))
    return float(out) if np.ndim(out) == 0 else out


def log_cap_fraction_inverse(logp, n, iterations=200):
    """Angle whose log cap fraction equals ``logp`` (bisection, elementwise)."""
    logp = np.asarray(logp, dtype=float)
    if np.any(logp > 0.0) or np.any(np.isnan(logp)):
        raise DomainError("cap fraction must lie in [0, 1]")
    lo = np.zeros_like(logp)
    hi = np.full_like(logp, np.pi)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        below = log_cap_fraction(mid, n) < logp
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 4e-16 * np.maximum(hi, 1e-300)):
            break
    out = np.where(np.isneginf(logp), 0.0, 0.5 * (lo + hi))
    return float(out) if out.ndim == 0 else out


def cap_fraction_inverse(p, n):
    """Angle theta with cap_fraction(theta, n) = p, for p in [0, 1]."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise DomainError("cap fraction must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        return log_cap_fraction_inverse(np.log(p), n)


def chi_pdf(r, n):
    """Density of ||X|| for standard Gaussian X in R^n."""
    if n < 1:
        raise DomainError("dimension must be >= 1")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0.0):
        raise DomainError("radius must be nonnegative")
    out = np.exp(chi_logpdf(r, n))
    return float(out) if out.ndim == 0 else out


def min_dist_to_thick_cap(r_y, phi, theta, r_inner, r_outer):
    """Distance from a point at radius ``r_y`` and angle ``phi`` from the cap
    axis to the nearest point of the thick cap (elementwise).

    Works in the plane spanned by the axis and the point.
    """
    r_y, phi, theta, r_inner, r_outer = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (r_y, phi, theta, r_inner, r_outer)))
    inside = phi <= theta
    radial = np.maximum(np.maximum(r_inner - r_y, r_y - r_outer), 0.0)
    delta = phi - theta
    cosd = np.cos(delta)
    rho = np.clip(r_y * cosd, r_inner, r_outer)
    with np.errstate(invalid="ignore"):
        d2 = r_y * r_y + rho * rho - 2.0 * r_y * rho * cosd
    side = np.sqrt(np.maximum(d2, 0.0))
    out = np.where(inside, radial, side)
    return float(out) if out.ndim == 0 else out


def expansion_contains(y, cap: ThickCap, D, n=None):
    """True iff y lies in the D-expansion of ``cap`` (normalized distance)."""
    if D <= 0:
        raise DomainError("similarity threshold must be positive")
    y = np.asarray(y, dtype=float)
    n = y.size if n is None else n
    r_y = float(np.linalg.norm(y))
    phi = 0.0 if r_y == 0.0 else float(unit_angles(y / r_y, cap.center))
    dist = min_dist_to_thick_cap(r_y, phi, cap.half_angle, cap.r_inner, cap.r_outer)
    return bool(dist <= np.sqrt(n * D))
