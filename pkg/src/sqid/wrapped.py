"""Wrapped spherical codes: annuli of the unit sphere mapped onto a lattice.

A unit vector s in R^n is assigned to the latitude band (annulus) containing
arcsin(s_n), flattened into R^(n-1) by h_i, rounded to the nearest lattice
point and lifted back.  Annulus indices are 0-based.  The lattice origin is
the pole codeword of its annulus, reconstructed as +e_n or -e_n.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .lattice import LatticeSpec, count_points_in_shell, nearest_point, rescale

UNIT_TOL = 1e-9


def default_annulus_count(d_min: float) -> int:
    """ceil(pi / sqrt(d_min)) rounded up to an even number."""
    base = int(np.ceil(np.pi / np.sqrt(d_min)))
    return base + base % 2


@dataclass(frozen=True, eq=False)
class WrappedCode:
    n: int
    lattice: LatticeSpec
    N: Optional[int] = None

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("wrapped codes need n >= 2")
        if self.lattice.dim != self.n - 1:
            raise DomainError(f"lattice dimension {self.lattice.dim} must equal n - 1 = {self.n - 1}")
        N = default_annulus_count(self.lattice.d_min) if self.N is None else int(self.N)
        if N < 2 or N % 2:
            raise DomainError(f"annulus count must be even and >= 2, got {N}")
        object.__setattr__(self, "N", N)
        alphas = np.pi * (np.arange(N + 1) / N - 0.5)
        alphas[N // 2] = 0.0
        alphas.setflags(write=False)
        object.__setattr__(self, "alphas", alphas)
        # Boundary latitude used by each annulus: alpha_i in the north, alpha_{i+1} in the south.
        star = np.where(alphas[:-1] >= 0, alphas[:-1], alphas[1:])
        star.setflags(write=False)
        object.__setattr__(self, "alpha_star", star)

    def north(self, i):
        return self.alphas[np.asarray(i)] >= 0


@dataclass(frozen=True, eq=False)
class ShapeCodeword:
    annulus: int
    coords: np.ndarray
    s_hat: np.ndarray
    pole: bool = False


def _check_unit(s, n):
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != n:
        raise DomainError(f"expected length-{n} vectors, got shape {s.shape}")
    nrm = np.linalg.norm(s, axis=-1)
    if np.any(np.abs(nrm - 1.0) > UNIT_TOL) or not np.all(np.isfinite(s)):
        raise DomainError("shape vectors must have unit norm (tolerance 1e-9)")
    return s


def _latitude(s):
    return np.arcsin(np.clip(s[..., -1], -1.0, 1.0))


def annulus_index(code: WrappedCode, s):
    s = _check_unit(s, code.n)
    lat = _latitude(s)
    i = np.searchsorted(code.alphas, lat, side="right") - 1
    i = np.clip(i, 0, code.N - 1)
    return int(i) if np.ndim(i) == 0 else i


def _directions(s):
    sp = s[..., :-1]
    nrm = np.linalg.norm(sp, axis=-1, keepdims=True)
    e1 = np.zeros_like(sp)
    e1[..., 0] = 1.0
    safe = np.where(nrm > 0, nrm, 1.0)
    return np.where(nrm > 0, sp / safe, e1)


def boundary_projection(code: WrappedCode, s, i):
    s = np.asarray(s, dtype=float)
    a = code.alpha_star[np.asarray(i)]
    out = np.empty_like(s)
    out[..., :-1] = _directions(s) * np.cos(a)[..., None]
    out[..., -1] = np.sin(a)
    return out


def _chord(lat, a):
    return 2.0 * np.sin(np.abs(lat - a) / 2.0)


def map_to_plane(code: WrappedCode, s, i=None):
    """h_i(s); the annulus is computed when not given."""
    s = _check_unit(s, code.n)
    if i is None:
        i = annulus_index(code, s)
    a = code.alpha_star[np.asarray(i)]
    lat = _latitude(s)
    radius = np.maximum(np.cos(a) - _chord(lat, a), 0.0)
    # Near-pole override; the positive part above already yields zero there,
    # the explicit test only removes rounding residue at the threshold.
    top, bot = code.alphas[code.N - 1], code.alphas[1]
    polar = (lat >= top + 2 * np.arcsin(np.cos(top) / 2)) | (lat <= bot - 2 * np.arcsin(np.cos(bot) / 2))
    radius = np.where(polar, 0.0, radius)
    return _directions(s) * radius[..., None]


def inverse_map(code: WrappedCode, y, i, north=None):
    """Lift a nonzero planar point back to the sphere within annulus i."""
    y = np.asarray(y, dtype=float)
    rho = np.linalg.norm(y, axis=-1)
    if np.any(rho == 0):
        raise DomainError("inverse_map needs a nonzero point; the origin is a pole codeword")
    i = np.asarray(i)
    a = code.alpha_star[i]
    if north is None:
        north = code.north(i)
    sign = np.where(north, 1.0, -1.0)
    arg = np.clip((np.cos(a) - rho) / 2.0, -1.0, 1.0)
    lat = a + sign * 2.0 * np.arcsin(arg)
    out = np.empty(y.shape[:-1] + (y.shape[-1] + 1,))
    out[..., :-1] = y * (np.cos(lat) / rho)[..., None]
    out[..., -1] = np.sin(lat)
    # Remove the last few ulps so the result is unit to working precision.
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def pole_vector(code: WrappedCode, i):
    north = bool(code.north(i))
    e = np.zeros(code.n)
    e[-1] = 1.0 if north else -1.0
    return e


@dataclass(frozen=True)
class QuantizedShapes:
    """Batch result of :func:`quantize_shapes`."""

    annulus: np.ndarray
    coords: np.ndarray
    pole: np.ndarray
    s_hat: np.ndarray
    rescaled: np.ndarray


def quantize_shapes(code: WrappedCode, s) -> QuantizedShapes:
    s = _check_unit(np.atleast_2d(s), code.n)
    i = annulus_index(code, s)
    i = np.atleast_1d(i)
    y = map_to_plane(code, s, i)
    b = nearest_point(code.lattice, y)
    yq = code.lattice.points(b)
    rho = np.linalg.norm(yq, axis=1)
    pole = ~np.any(b != 0, axis=1)
    big = rho > 1.0
    yq[big] /= rho[big, None]
    s_hat = np.empty_like(s)
    reg = ~pole
    if np.any(reg):
        s_hat[reg] = inverse_map(code, yq[reg], i[reg])
    if np.any(pole):
        s_hat[pole] = 0.0
        s_hat[pole, -1] = np.where(code.north(i[pole]), 1.0, -1.0)
    return QuantizedShapes(i, b, pole, s_hat, big & reg)


def quantize_shape(code: WrappedCode, s) -> ShapeCodeword:
    q = quantize_shapes(code, np.asarray(s, dtype=float)[None, :])
    return ShapeCodeword(int(q.annulus[0]), q.coords[0], q.s_hat[0], bool(q.pole[0]))


def reconstruct(code: WrappedCode, i, coords, pole=None):
    """Codeword reconstruction from (annulus, coords); batch or single."""
    coords = np.asarray(coords, dtype=np.int64)
    single = coords.ndim == 1
    coords = np.atleast_2d(coords)
    i = np.atleast_1d(np.asarray(i))
    if np.any((i < 0) | (i >= code.N)):
        raise DomainError("annulus index out of range")
    zero = ~np.any(coords != 0, axis=1)
    if pole is not None and np.any(np.atleast_1d(pole) != zero):
        raise DomainError("pole flag must be set exactly for the zero coordinate vector")
    yq = code.lattice.points(coords)
    rho = np.linalg.norm(yq, axis=1)
    big = rho > 1.0
    yq[big] /= rho[big, None]
    out = np.zeros((coords.shape[0], code.n))
    if np.any(~zero):
        out[~zero] = inverse_map(code, yq[~zero], i[~zero])
    out[zero, -1] = np.where(code.north(i[zero]), 1.0, -1.0)
    return out[0] if single else out


def covering_angle_bounds(code: WrappedCode, i, s_hat, pole):
    """Angle bounds and degeneracy flags for a batch of codewords.

    For pole codewords: pi/2 - 2 arcsin((cos a - r)/2).  Otherwise
    2 arcsin(r / (2 rho)) + 2 arcsin((c + r)/2) - 2 arcsin(c/2), with rho the
    planar norm of the reconstruction and c its chord to the annulus boundary.
    Arguments above 1 clamp the bound to pi and set the flag.
    """
    r = code.lattice.r_cov
    i = np.atleast_1d(np.asarray(i))
    s_hat = np.atleast_2d(np.asarray(s_hat, dtype=float))
    pole = np.atleast_1d(np.asarray(pole, dtype=bool))
    a = code.alpha_star[i]
    lat = _latitude(s_hat)
    c = _chord(lat, a)
    rho = np.cos(a) - c
    # Reconstructions past the boundary latitude (extended annulus) sit outside radius cos(a).
    ext = np.where(code.north(i), lat < a, lat > a)
    rho = np.where(ext, np.cos(a) + c, rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        lon_arg = np.where(rho > 0, r / (2.0 * rho), np.inf)
    lat_arg = (c + r) / 2.0
    degenerate = ~pole & ((lon_arg > 1.0) | (lat_arg > 1.0))
    regular = (
        2 * np.arcsin(np.minimum(lon_arg, 1.0))
        + 2 * np.arcsin(np.minimum(lat_arg, 1.0))
        - 2 * np.arcsin(np.minimum(c / 2.0, 1.0))
    )
    parg = (np.cos(a) - r) / 2.0
    pole_deg = pole & (parg < -1.0)
    pole_bound = np.pi / 2 - 2 * np.arcsin(np.clip(parg, -1.0, 1.0))
    bound = np.where(pole, pole_bound, regular)
    flag = degenerate | pole_deg
    bound = np.where(flag, np.pi, np.minimum(bound, np.pi))
    return bound, flag


def covering_angle_bound(code: WrappedCode, cw: ShapeCodeword) -> float:
    b, _ = covering_angle_bounds(code, cw.annulus, cw.s_hat, cw.pole)
    return float(b[0])


def annulus_shells(code: WrappedCode):
    """(r_minus, r_plus) of the planar shell holding each annulus's codepoints."""
    a = code.alpha_star
    r = code.lattice.r_cov
    r_minus = np.maximum(0.0, np.cos(a) - 2 * np.sin(np.pi / (2 * code.N)) - r)
    r_plus = np.minimum(1.0 + r, np.cos(a) + r)
    return r_minus, r_plus


def annulus_counts(code: WrappedCode, budget=None):
    """Codepoint count per annulus; mirrored annuli share one count."""
    r_minus, r_plus = annulus_shells(code)
    counts = [None] * code.N
    for i in range(code.N // 2, code.N):
        c = count_points_in_shell(code.lattice, float(r_minus[i]), float(r_plus[i]), budget)
        counts[i] = c
        counts[code.N - 1 - i] = c
    return counts


def shape_rate(code: WrappedCode, budget=None):
    """(M, R_S): total codepoints over all annuli and (1/n) log2 M."""
    M = sum(annulus_counts(code, budget))
    return M, math.log2(M) / code.n


def scale_for_rate(n: int, base: LatticeSpec, target: float, N=None, rtol=1e-10, max_iter=200):
    """Finest lattice scale whose shape rate does not exceed ``target``.

    Brackets by halving/doubling from scale 1, then bisects in log scale.
    The rate is piecewise constant and falls as the scale grows.
    """
    if target <= 0:
        raise DomainError("target shape rate must be positive")

    def rate(sc):
        return shape_rate(WrappedCode(n, rescale(base, sc), N))[1]

    hi = 1.0
    for _ in range(max_iter):
        if rate(hi) <= target:
            break
        hi *= 2.0
    else:
        raise DomainError(f"target rate {target} is below the coarsest reachable rate")
    lo = hi / 2.0
    for _ in range(max_iter):
        if rate(lo) > target:
            break
        hi, lo = lo, lo / 2.0
    else:
        raise DomainError(f"target rate {target} not reached")
    for _ in range(max_iter):
        if hi / lo < 1 + rtol:
            break
        mid = np.sqrt(lo * hi)
        if rate(mid) <= target:
            hi = mid
        else:
            lo = mid
    return float(hi)
