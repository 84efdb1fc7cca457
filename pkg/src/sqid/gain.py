"""Lloyd-Max scalar quantizer for the norm of a standard Gaussian vector."""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special as sc

from .errors import DomainError
from .special import chi_logpdf, chi_mass, chi_partial_mean


@dataclass(frozen=True)
class GainCodebook:
    """Cells [boundaries[k-1], boundaries[k]) for k = 1..K, with
    boundaries[0] = 0 and boundaries[K] = inf."""

    n: int
    boundaries: tuple
    representatives: tuple

    @property
    def levels(self) -> int:
        return len(self.representatives)

    @property
    def rate(self) -> float:
        """Gain rate in bits per dimension, (1/n) log2 K."""
        return float(np.log2(self.levels) / self.n)

    def cell(self, k: int) -> tuple:
        """Interval (r_{k-1}, r_k) of the 1-based cell ``k``."""
        return self.boundaries[k - 1], self.boundaries[k]

    def masses(self) -> np.ndarray:
        b = np.asarray(self.boundaries)
        return chi_mass(b[:-1], b[1:], self.n)

    def mse(self) -> float:
        return _mse(self.n, np.asarray(self.boundaries), np.asarray(self.representatives))

    def to_text(self) -> str:
        lines = [f"n {self.n}", f"K {self.levels}"]
        lines.append("boundaries " + " ".join(f"{b:.17g}" for b in self.boundaries))
        lines.append("representatives " + " ".join(f"{r:.17g}" for r in self.representatives))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GainCodebook":
        fields = {}
        for line in text.strip().splitlines():
            key, *vals = line.split()
            fields[key] = vals
        n, k = int(fields["n"][0]), int(fields["K"][0])
        bounds = tuple(float(v) for v in fields["boundaries"])
        reps = tuple(float(v) for v in fields["representatives"])
        if len(bounds) != k + 1 or len(reps) != k:
            raise DomainError("codebook record has inconsistent lengths")
        return cls(n, bounds, reps)


def _mse(n, bounds, reps):
    lo, hi = bounds[:-1], bounds[1:]
    # E[R^2; cell] = n * P_{n+2}(cell), since r^2 f_n(r) = n f_{n+2}(r).
    second = n * chi_mass(lo, hi, n + 2)
    first = chi_partial_mean(lo, hi, n)
    mass = chi_mass(lo, hi, n)
    return float(np.sum(second - 2.0 * reps * first + reps * reps * mass))


def _centroids(n, bounds):
    lo, hi = bounds[:-1], bounds[1:]
    return chi_partial_mean(lo, hi, n) / chi_mass(lo, hi, n)


def train_gain_codebook(n: int, levels: int, max_iter: int = 10_000, rtol: float = 1e-10) -> GainCodebook:
    """Lloyd-Max design for the chi(n) density with ``levels`` cells.

    Starts from the chi quantiles at (k - 1/2)/K and alternates centroid and
    midpoint updates, taking a Newton step on the fixed-point equation
    whenever that lowers the MSE.  Stops once every representative is within
    rtol/100 (times the largest representative) of its cell centroid.
    """
    if levels < 1:
        raise DomainError("need at least one gain level")
    if n < 1:
        raise DomainError("dimension must be >= 1")
    return _train(int(n), int(levels), int(max_iter), float(rtol))


def _newton_bounds(n, bounds):
    """One Newton step on the midpoint-of-centroids fixed point equation."""
    inner = bounds[1:-1]
    lo, hi = bounds[:-1], bounds[1:]
    mass = chi_mass(lo, hi, n)
    cent = chi_partial_mean(lo, hi, n) / mass
    dens = chi_pdf_vals(n, inner)
    # d c_k / d b_k and d c_{k+1} / d b_k for interior boundary b_k.
    d_left = dens * (inner - cent[:-1]) / mass[:-1]
    d_right = dens * (cent[1:] - inner) / mass[1:]
    m = inner.size
    jac = np.zeros((m, m))
    idx = np.arange(m)
    jac[idx, idx] = 0.5 * (d_left + d_right)
    if m > 1:
        # G_j = (c_j + c_{j+1})/2 depends on b_{j-1} through c_j and on b_{j+1} through c_{j+1}.
        d_c_from_lower = dens[:-1] * (cent[1:-1] - inner[:-1]) / mass[1:-1]
        d_c_from_upper = dens[1:] * (inner[1:] - cent[1:-1]) / mass[1:-1]
        jac[idx[1:], idx[:-1]] = 0.5 * d_c_from_lower
        jac[idx[:-1], idx[1:]] = 0.5 * d_c_from_upper
    resid = 0.5 * (cent[:-1] + cent[1:]) - inner
    step = np.linalg.solve(np.eye(m) - jac, resid)
    return np.concatenate([[0.0], inner + step, [np.inf]])


def chi_pdf_vals(n, r):
    return np.exp(chi_logpdf(r, n))


@lru_cache(maxsize=256)
def _train(n, levels, max_iter, rtol):
    probs = (np.arange(levels) + 0.5) / levels
    reps = np.sqrt(2.0 * sc.gammaincinv(n / 2.0, probs))
    bounds = np.concatenate([[0.0], 0.5 * (reps[:-1] + reps[1:]), [np.inf]])
    prev = _mse(n, bounds, reps)
    for _ in range(max_iter):
        new_reps = _centroids(n, bounds)
        bounds = np.concatenate([[0.0], 0.5 * (new_reps[:-1] + new_reps[1:]), [np.inf]])
        if levels >= 2:
            # Accelerate with a Newton step when it does not raise the MSE.
            with np.errstate(all="ignore"):
                try:
                    trial = _newton_bounds(n, bounds)
                except np.linalg.LinAlgError:
                    trial = None
            if trial is not None and np.all(np.diff(trial[:-1]) > 0) and np.all(np.isfinite(trial[:-1])):
                trial_reps = _centroids(n, trial)
                trial_bounds = np.concatenate([[0.0], 0.5 * (trial_reps[:-1] + trial_reps[1:]), [np.inf]])
                if _mse(n, trial_bounds, trial_reps) <= _mse(n, bounds, new_reps):
                    bounds, new_reps = trial_bounds, trial_reps
        reps = new_reps
        cur = _mse(n, bounds, reps)
        # MSE changes are quadratic in the distance to the fixed point and
        # carry ~1e-10 relative round-off, so the loop stops on the centroid
        # residual instead.
        resid = np.max(np.abs(_centroids(n, bounds) - reps)) if levels > 1 else 0.0
        if resid <= 1e-2 * rtol * max(1.0, reps[-1]):
            break
        if cur > prev * (1 + 1e-9):
            raise ArithmeticError("Lloyd-Max iteration increased the MSE")
        prev = cur
    return GainCodebook(n, tuple(float(b) for b in bounds), tuple(float(r) for r in reps))


def quantize_gain(codebook: GainCodebook, r) -> int:
    """1-based cell index k with r in [r_{k-1}, r_k)."""
    if r < 0:
        raise DomainError("gain must be nonnegative")
    return int(np.searchsorted(codebook.boundaries, r, side="right"))


def quantize_gains(codebook: GainCodebook, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("gain must be nonnegative")
    return np.searchsorted(codebook.boundaries, r, side="right").astype(np.int64)
