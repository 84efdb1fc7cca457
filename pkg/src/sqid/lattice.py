"""Lattices: exact closest-point search, shell counting and scaling.

Closest point search and enumeration are Schnorr-Euchner depth-first searches
over the upper triangular factor of the generator, compiled with numba.  The
built-in Leech lattice and Z^m also have exact theta series, which is how shell
counts are obtained for the fine scalings used in practice (enumerating 10^20
points is not an option).
"""
import os
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Optional

import numba
import numpy as np

from .errors import DomainError, FormatError, ResourceBudgetError

DEFAULT_POINT_BUDGET = 10**8
SHELL_TOL = 1e-9


def point_budget() -> int:
    raw = os.environ.get("SQID_POINT_BUDGET")
    if raw is None:
        return DEFAULT_POINT_BUDGET
    try:
        val = int(float(raw))
    except ValueError as exc:
        raise DomainError(f"SQID_POINT_BUDGET={raw!r} is not a number") from exc
    if val <= 0:
        raise DomainError("SQID_POINT_BUDGET must be positive")
    return val


@dataclass(frozen=True, eq=False)
class LatticeSpec:
    """A full-rank lattice {basis @ b : b integer}.

    ``basis`` already includes ``scale``; ``d_min`` and ``r_cov`` are those of
    the scaled lattice.  ``theta`` names an exact theta series of the unscaled
    lattice ("leech" or "zn"), or is None when only enumeration is available.
    """

    basis: np.ndarray
    d_min: float
    r_cov: float
    scale: float = 1.0
    name: str = "custom"
    theta: Optional[str] = None
    _r: np.ndarray = field(init=False, repr=False)
    _q: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.array(self.basis, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise DomainError("basis must be a nonempty square matrix")
        if not np.all(np.isfinite(m)):
            raise DomainError("basis has non-finite entries")
        q, r = np.linalg.qr(m)
        # Make the diagonal of R positive so the search can divide by it.
        sgn = np.where(np.diag(r) < 0, -1.0, 1.0)
        q = q * sgn
        r = (r.T * sgn).T
        if np.min(np.abs(np.diag(r))) <= 1e-300 * max(1.0, np.max(np.abs(m))):
            raise DomainError("basis is singular")
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise DomainError("scale must be positive")
        if not (self.d_min > 0 and self.r_cov > 0):
            raise DomainError("d_min and r_cov must be positive")
        if self.r_cov < self.d_min / 2 * (1 - 1e-12):
            raise DomainError(f"r_cov {self.r_cov} is below d_min/2 = {self.d_min / 2}")
        m.setflags(write=False)
        r = np.ascontiguousarray(r)
        q = np.ascontiguousarray(q)
        r.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "basis", m)
        object.__setattr__(self, "_r", r)
        object.__setattr__(self, "_q", q)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def det(self) -> float:
        return float(abs(np.prod(np.diag(self._r))))

    def points(self, coords):
        """Lattice points for integer coordinate rows."""
        return np.asarray(coords, dtype=float) @ self.basis.T

    def identity(self) -> str:
        """Short text describing the lattice, used in config hashes."""
        if self.theta is not None:
            return f"{self.name}:{self.dim}:{self.scale!r}"
        return f"{self.name}:{self.dim}:{self.scale!r}:" + ",".join(repr(v) for v in self.basis.ravel())


def rescale(lat: LatticeSpec, s: float) -> LatticeSpec:
    if not (s > 0 and np.isfinite(s)):
        raise DomainError(f"scale factor must be positive, got {s}")
    if s == 1.0:
        return lat
    return LatticeSpec(lat.basis * s, lat.d_min * s, lat.r_cov * s, lat.scale * s, lat.name, lat.theta)


def zn(m: int) -> LatticeSpec:
    if m < 1:
        raise DomainError("dimension must be at least 1")
    return LatticeSpec(np.eye(m), 1.0, np.sqrt(m) / 2.0, 1.0, "zn", "zn")


@lru_cache(maxsize=1)
def leech() -> LatticeSpec:
    """The Leech lattice, scaled to minimal norm 4 (det 1)."""
    text = resources.files("sqid").joinpath("data/leech_basis.txt").read_text()
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    b8 = np.array(rows, dtype=np.int64)
    if b8.shape != (24, 24):
        raise FormatError("embedded Leech basis must be 24x24", 0)
    lat = LatticeSpec(b8.T / np.sqrt(8.0), 2.0, np.sqrt(2.0), 1.0, "leech", "leech")
    if abs(lat.det - 1.0) > 1e-9:
        raise FormatError(f"Leech basis has det {lat.det}", 0)
    # No nonzero vector of norm below 2, and some basis vector attains it.
    if _enumerate_count(lat, 0.0, 2.0 * (1 - 1e-6), point_budget()) != 1:
        raise FormatError("Leech basis has a vector shorter than 2", 0)
    if abs(np.min(np.linalg.norm(lat.basis, axis=0)) - 2.0) > 1e-12:
        raise FormatError("Leech basis does not attain minimum distance 2", 0)
    return lat


def load_lattice(path) -> LatticeSpec:
    """Read a lattice from a text file.

    Layout: m, then the m*m generator entries row-major (columns are basis
    vectors), then the declared d_min and r_cov.  Lines starting with # are
    ignored.
    """
    with open(path, "r") as fh:
        text = fh.read()
    toks = []
    for ln in text.splitlines():
        if ln.lstrip().startswith("#"):
            continue
        toks.extend(ln.replace(",", " ").split())
    try:
        m = int(toks[0])
        vals = [float(t) for t in toks[1:]]
    except (IndexError, ValueError) as exc:
        raise FormatError(f"cannot parse lattice file {path}: {exc}", 0) from exc
    if m < 1 or len(vals) != m * m + 2:
        raise FormatError(f"lattice file {path}: expected {m * m + 2} numbers after m, got {len(vals)}", 0)
    basis = np.array(vals[: m * m]).reshape(m, m)
    d_min, r_cov = vals[m * m], vals[m * m + 1]
    name = os.path.basename(str(path))
    return LatticeSpec(basis, d_min, r_cov, 1.0, name, None)


# -- closest point ----------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _babai(r, z, b):
    m = z.shape[0]
    dist = 0.0
    for k in range(m - 1, -1, -1):
        c = z[k]
        for j in range(k + 1, m):
            c -= r[k, j] * b[j]
        c /= r[k, k]
        b[k] = np.rint(c)
        d = r[k, k] * (b[k] - c)
        dist += d * d
    return dist


@numba.njit(cache=True, nogil=True)
def _lex_less(a, b):
    for i in range(a.shape[0]):
        if a[i] < b[i]:
            return True
        if a[i] > b[i]:
            return False
    return False


@numba.njit(cache=True, nogil=True)
def _closest(r, z, out):
    m = z.shape[0]
    best_d = _babai(r, z, out)
    tol = 1e-12 * (1.0 + best_d)
    b = np.zeros(m, dtype=np.int64)
    c = np.zeros(m)
    step = np.zeros(m, dtype=np.int64)
    part = np.zeros(m + 1)
    k = m - 1
    c[k] = z[k] / r[k, k]
    b[k] = np.int64(np.rint(c[k]))
    step[k] = 1 if c[k] >= b[k] else -1
    while True:
        diff = r[k, k] * (b[k] - c[k])
        d = part[k + 1] + diff * diff
        if d <= best_d + tol:
            if k == 0:
                if d < best_d - tol:
                    best_d = d
                    tol = 1e-12 * (1.0 + best_d)
                    out[:] = b
                elif _lex_less(b, out):
                    if d < best_d:
                        best_d = d
                    out[:] = b
                # zig-zag to the next candidate at this level
                b[k] += step[k]
                step[k] = -step[k] - (1 if step[k] > 0 else -1)
            else:
                part[k] = d
                k -= 1
                s = z[k]
                for j in range(k + 1, m):
                    s -= r[k, j] * b[j]
                c[k] = s / r[k, k]
                b[k] = np.int64(np.rint(c[k]))
                step[k] = 1 if c[k] >= b[k] else -1
        else:
            k += 1
            if k == m:
                break
            b[k] += step[k]
            step[k] = -step[k] - (1 if step[k] > 0 else -1)
    return best_d


@numba.njit(cache=True, nogil=True)
def _closest_batch(r, zs, out, dists):
    for i in range(zs.shape[0]):
        dists[i] = _closest(r, zs[i], out[i])


def nearest_point(lat: LatticeSpec, y):
    """Integer coordinates of the lattice point closest to ``y``.

    Accepts one vector or a 2-D array of row vectors.  Ties go to the
    lexicographically smallest coordinate vector.
    """
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != lat.dim or y.ndim > 2:
        raise DomainError(f"expected vectors of length {lat.dim}, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise DomainError("nearest_point needs finite input")
    z = np.ascontiguousarray(np.atleast_2d(y) @ lat._q)
    out = np.zeros(z.shape, dtype=np.int64)
    dists = np.zeros(z.shape[0])
    _closest_batch(lat._r, z, out, dists)
    return out[0] if y.ndim == 1 else out


def babai_point(lat: LatticeSpec, y):
    """Nearest-plane (Babai) coordinates; a cheap upper bound for tests."""
    y = np.asarray(y, dtype=float)
    z = np.ascontiguousarray(y @ lat._q)
    b = np.zeros(lat.dim, dtype=np.int64)
    _babai(lat._r, z, b)
    return b


# -- enumeration ------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _enum(r, lo2, hi2, budget, out):
    """Visit all b with ||R b||^2 <= hi2; count those >= lo2.

    Writes points into ``out`` while it has room.  Returns (count, visited);
    visited = -1 signals the node budget ran out.
    """
    m = r.shape[0]
    b = np.zeros(m, dtype=np.int64)
    c = np.zeros(m)
    step = np.zeros(m, dtype=np.int64)
    part = np.zeros(m + 1)
    k = m - 1
    step[k] = 1
    count = 0
    visited = 0
    cap = out.shape[0]
    while True:
        visited += 1
        if visited > budget:
            return count, -1
        diff = r[k, k] * (b[k] - c[k])
        d = part[k + 1] + diff * diff
        if d <= hi2:
            if k == 0:
                if d >= lo2:
                    if count < cap:
                        out[count, :] = b
                    count += 1
                b[k] += step[k]
                step[k] = -step[k] - (1 if step[k] > 0 else -1)
            else:
                part[k] = d
                k -= 1
                s = 0.0
                for j in range(k + 1, m):
                    s -= r[k, j] * b[j]
                c[k] = s / r[k, k]
                b[k] = np.int64(np.rint(c[k]))
                step[k] = 1 if c[k] >= b[k] else -1
        else:
            k += 1
            if k == m:
                break
            b[k] += step[k]
            step[k] = -step[k] - (1 if step[k] > 0 else -1)
    return count, visited


def _band(r_lo, r_hi):
    lo = max(0.0, r_lo * (1 - SHELL_TOL))
    hi = r_hi * (1 + SHELL_TOL)
    return lo * lo, hi * hi


def _enumerate_count(lat, r_lo, r_hi, budget):
    lo2, hi2 = _band(r_lo, r_hi)
    count, visited = _enum(lat._r, lo2, hi2, budget, np.zeros((0, lat.dim), dtype=np.int64))
    if visited < 0:
        raise ResourceBudgetError(
            f"shell enumeration up to radius {r_hi:g} exceeded the point budget", budget
        )
    return count


def count_points_in_shell(lat: LatticeSpec, r_lo: float, r_hi: float, budget=None, method="auto") -> int:
    """Number of lattice points with r_lo <= ||v|| <= r_hi (tolerance band 1e-9).

    method "auto" uses the exact theta series when the lattice has one and
    enumeration otherwise; "enumerate" and "theta" force a method.
    """
    if not (0 <= r_lo <= r_hi) or not np.isfinite(r_hi):
        raise DomainError(f"need 0 <= r_lo <= r_hi < inf, got ({r_lo}, {r_hi})")
    if budget is None:
        budget = point_budget()
    if method not in ("auto", "enumerate", "theta"):
        raise DomainError(f"unknown counting method {method!r}")
    if method == "theta" or (method == "auto" and lat.theta is not None):
        if lat.theta is None:
            raise DomainError(f"lattice {lat.name} has no theta series")
        return _theta_count(lat, r_lo, r_hi)
    return _enumerate_count(lat, r_lo, r_hi, budget)


def shell_points(lat: LatticeSpec, r_lo: float, r_hi: float, budget=None):
    """Integer coordinates of all points in the shell, in canonical order.

    The order is by squared norm (rounded to 9 significant digits relative to
    the scale) and then lexicographically by coordinates.
    """
    if budget is None:
        budget = point_budget()
    total = _enumerate_count(lat, r_lo, r_hi, budget)
    lo2, hi2 = _band(r_lo, r_hi)
    out = np.zeros((total, lat.dim), dtype=np.int64)
    _enum(lat._r, lo2, hi2, budget, out)
    if total == 0:
        return out
    norms = np.round(np.sum(lat.points(out) ** 2, axis=1) / lat.scale**2, 9)
    keys = [out[:, j] for j in range(lat.dim - 1, -1, -1)] + [norms]
    return out[np.lexsort(keys)]


def canonical_key(lat: LatticeSpec, coords):
    """Sort key matching the order used by :func:`shell_points`."""
    coords = np.asarray(coords, dtype=np.int64)
    n2 = round(float(np.sum(lat.points(coords) ** 2)) / lat.scale**2, 9)
    return (n2, tuple(int(v) for v in coords))


# -- theta series -----------------------------------------------------------


def _sparse_mul(dense, sparse, size):
    """dense * sparse truncated to ``size`` terms; Python int coefficients."""
    out = np.zeros(size, dtype=object)
    out[:] = 0
    for e, c in sparse:
        if e >= size:
            continue
        out[e:] += c * dense[: size - e]
    return out


@lru_cache(maxsize=8)
def _tau(size):
    """Ramanujan tau(0..size-1) from Delta = q * prod(1 - q^k)^24.

    Uses Jacobi's identity prod(1 - q^k)^3 = sum (-1)^j (2j+1) q^{j(j+1)/2}, so
    only sparse products are needed.
    """
    jac = []
    j = 0
    while j * (j + 1) // 2 < size:
        jac.append((j * (j + 1) // 2, (-1) ** j * (2 * j + 1)))
        j += 1
    poly = np.zeros(size, dtype=object)
    poly[:] = 0
    poly[0] = 1
    for _ in range(8):
        poly = _sparse_mul(poly, jac, size)
    tau = np.zeros(size, dtype=object)
    tau[:] = 0
    tau[1:] = poly[: size - 1]
    return tau


def _sigma11(m):
    s = 0
    d = 1
    while d * d <= m:
        if m % d == 0:
            s += d**11
            e = m // d
            if e != d:
                s += e**11
        d += 1
    return s


def leech_theta_coefficients(m_max):
    """N_{2m} for m = 0..m_max: number of Leech vectors of norm 2m.

    N_{2m} = (65520/691) (sigma_11(m) - tau(m)) for m >= 1.
    """
    tau = _tau(m_max + 1)
    out = [1]
    for m in range(1, m_max + 1):
        num = 65520 * (_sigma11(m) - tau[m])
        if num % 691:
            raise ArithmeticError("Leech theta coefficient is not integral")
        out.append(num // 691)
    return out


@lru_cache(maxsize=32)
def _zn_theta(m, size):
    theta3 = [(0, 1)] + [(k * k, 2) for k in range(1, int(np.sqrt(size)) + 2) if k * k < size]
    poly = np.zeros(size, dtype=object)
    poly[:] = 0
    poly[0] = 1
    for _ in range(m):
        poly = _sparse_mul(poly, theta3, size)
    return poly


def zn_theta_coefficients(m, norm_max):
    """Number of points of Z^m with squared norm t, t = 0..norm_max."""
    return list(_zn_theta(m, norm_max + 1))


def _theta_count(lat, r_lo, r_hi):
    lo2, hi2 = _band(r_lo, r_hi)
    s2 = lat.scale**2
    t_hi = int(np.floor(hi2 / s2))
    t_lo = int(np.ceil(lo2 / s2))
    if t_lo > t_hi:
        return 0
    if lat.theta == "leech":
        coef = leech_theta_coefficients(t_hi // 2)
        return int(sum(coef[t // 2] for t in range(t_lo + (t_lo % 2), t_hi + 1, 2)))
    if lat.theta == "zn":
        coef = _zn_theta(lat.dim, t_hi + 1)
        return int(sum(coef[t_lo : t_hi + 1]))
    raise DomainError(f"unknown theta series {lat.theta!r}")
