"""Signature assignment, the admissible query rule and the binary file formats.

A signature is (gain cell k, annulus i, lattice coordinates).  From it the
query side rebuilds a thick cap that certainly holds the encoded vector and
answers ``maybe`` when the query lies within the D-expansion of that cap.

Vector file:     "SQID" u16 version, u32 n, u64 count, count*n f64 (LE).
Signature file:  "SQSG" u16 version, 32-byte config hash, u8 layout, u32 n,
                 u64 count, then per record either (k u32, i u32, pole u8,
                 coords i32*(n-1)) or a single u64 flat index.
"""
import hashlib
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bounds import log_prob_thick_batch
from .errors import DomainError, FormatError
from .gain import GainCodebook, quantize_gains, train_gain_codebook
from .geometry import min_dist_to_thick_cap, unit_angles
from .lattice import LatticeSpec, leech, load_lattice, rescale, shell_points, zn
from .wrapped import (
    WrappedCode,
    annulus_shells,
    covering_angle_bounds,
    quantize_shapes,
    reconstruct,
)

FORMAT_VERSION = 1
VEC_MAGIC = b"SQID"
SIG_MAGIC = b"SQSG"
LAYOUT_RECORDS = 0
LAYOUT_FLAT = 1

_VEC_HEADER = struct.Struct("<4sHIQ")
_SIG_HEADER = struct.Struct("<4sH32sBIQ")
_SIG_HASH_AT = 6
_SIG_LAYOUT_AT = 38
_SIG_N_AT = 39

# Relative slack on the decision radius.  It can only turn a borderline
# ``no`` into ``maybe``, so admissibility is unaffected by round-off.
DECISION_SLACK = 1e-9


def record_dtype(n: int) -> np.dtype:
    return np.dtype([("k", "<u4"), ("i", "<u4"), ("pole", "u1"), ("coords", "<i4", (n - 1,))])


# -- configuration -----------------------------------------------------------


def resolve_lattice(name: str, n: int) -> LatticeSpec:
    """'leech' (n = 25), 'zn' or 'file:PATH' -> unscaled lattice in dimension n-1."""
    if name == "leech":
        if n != 25:
            raise DomainError("the Leech lattice needs n = 25")
        return leech()
    if name == "zn":
        return zn(n - 1)
    if name.startswith("file:"):
        lat = load_lattice(name[5:])
        if lat.dim != n - 1:
            raise DomainError(f"lattice file has dimension {lat.dim}, expected {n - 1}")
        return lat
    raise DomainError(f"unknown lattice {name!r}; use leech, zn or file:PATH")


@dataclass(frozen=True, eq=False)
class SchemeConfig:
    n: int
    D: float
    gain: GainCodebook
    code: WrappedCode
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if not self.D > 0:
            raise DomainError("similarity threshold D must be positive")
        if self.gain.n != self.n or self.code.n != self.n:
            raise DomainError("gain codebook and wrapped code must share the dimension n")

    @property
    def levels(self) -> int:
        return self.gain.levels

    def config_hash(self) -> bytes:
        """SHA-256 over everything that fixes the signature map (D excluded)."""
        parts = [
            f"version={self.version}",
            f"n={self.n}",
            f"K={self.levels}",
            "boundaries=" + ",".join(repr(float(b)) for b in self.gain.boundaries),
            f"lattice={self.code.lattice.identity()}",
            f"d_min={self.code.lattice.d_min!r}",
            f"r_cov={self.code.lattice.r_cov!r}",
            f"N={self.code.N}",
        ]
        return hashlib.sha256("\n".join(parts).encode()).digest()


def build_config(n: int, D: float, levels: int, lattice="leech", scale=1.0, N=None) -> SchemeConfig:
    if isinstance(lattice, str):
        lattice = resolve_lattice(lattice, n)
    lat = rescale(lattice, scale)
    return SchemeConfig(n, D, train_gain_codebook(n, levels), WrappedCode(n, lat, N))


# -- signatures --------------------------------------------------------------


@dataclass(frozen=True)
class Signature:
    gain_cell: int
    annulus: int
    coords: tuple
    pole: bool = False
    flat_index: Optional[int] = None


def _as_matrix(cfg, X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != cfg.n:
        raise DomainError(f"expected vectors of length {cfg.n}, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DomainError("vectors must be finite")
    return X


def sign_batch(cfg: SchemeConfig, X) -> np.ndarray:
    """Signatures of the rows of X as a structured record array."""
    X = _as_matrix(cfg, X)
    out = np.zeros(X.shape[0], dtype=record_dtype(cfg.n))
    if X.shape[0] == 0:
        return out
    g = np.linalg.norm(X, axis=1)
    out["k"] = quantize_gains(cfg.gain, g)
    nz = g > 0
    # Zero vectors keep k = 1 and the pole codeword of annulus 0.
    out["pole"] = 1
    if np.any(nz):
        q = quantize_shapes(cfg.code, X[nz] / g[nz, None])
        if np.any(np.abs(q.coords) >= 2**31):
            raise DomainError("lattice coordinates overflow the 32-bit record field")
        out["i"][nz] = q.annulus
        out["pole"][nz] = q.pole
        out["coords"][nz] = q.coords
    return out


def records_to_signatures(recs) -> list:
    return [
        Signature(int(r["k"]), int(r["i"]), tuple(int(c) for c in r["coords"]), bool(r["pole"]))
        for r in recs
    ]


def signatures_to_records(cfg: SchemeConfig, sigs) -> np.ndarray:
    out = np.zeros(len(sigs), dtype=record_dtype(cfg.n))
    for j, s in enumerate(sigs):
        if len(s.coords) != cfg.n - 1:
            raise DomainError("signature coordinates have the wrong length")
        out[j] = (s.gain_cell, s.annulus, int(s.pole), s.coords)
    return out


def sign(cfg: SchemeConfig, x) -> Signature:
    x = np.asarray(x, dtype=float)
    if x.shape != (cfg.n,):
        raise DomainError(f"expected a vector of length {cfg.n}, got shape {x.shape}")
    return records_to_signatures(sign_batch(cfg, x[None, :]))[0]


@dataclass(frozen=True)
class DecodedCaps:
    """Per-record cap parameters: centers, half-angles, gain interval."""

    center: np.ndarray
    theta: np.ndarray
    r_inner: np.ndarray
    r_outer: np.ndarray


def decode_records(cfg: SchemeConfig, recs) -> DecodedCaps:
    k = recs["k"].astype(np.int64)
    i = recs["i"].astype(np.int64)
    if np.any((k < 1) | (k > cfg.levels)):
        raise DomainError("gain cell index out of range")
    if k.size == 0:
        e = np.zeros(0)
        return DecodedCaps(np.zeros((0, cfg.n)), e, e, e)
    pole = recs["pole"].astype(bool)
    s_hat = reconstruct(cfg.code, i, recs["coords"].astype(np.int64), pole)
    theta, _ = covering_angle_bounds(cfg.code, i, s_hat, pole)
    b = np.asarray(cfg.gain.boundaries)
    return DecodedCaps(s_hat, theta, b[k - 1], b[k])


def min_distances(cfg: SchemeConfig, caps: DecodedCaps, y) -> np.ndarray:
    """Euclidean distance from y to each decoded cap."""
    y = np.asarray(y, dtype=float)
    r_y = float(np.linalg.norm(y))
    if r_y == 0.0:
        phi = np.zeros(caps.theta.shape)
    else:
        phi = unit_angles(caps.center, y / r_y)
    return np.asarray(min_dist_to_thick_cap(r_y, phi, caps.theta, caps.r_inner, caps.r_outer))


def pair_min_distances(cfg: SchemeConfig, caps: DecodedCaps, Y) -> np.ndarray:
    """Distance from row j of Y to cap j."""
    Y = _as_matrix(cfg, Y)
    r_y = np.linalg.norm(Y, axis=1)
    safe = np.where(r_y > 0, r_y, 1.0)
    phi = np.where(r_y > 0, unit_angles(caps.center, Y / safe[:, None]), 0.0)
    return np.asarray(min_dist_to_thick_cap(r_y, phi, caps.theta, caps.r_inner, caps.r_outer))


def decision_radius(n, D):
    return math.sqrt(n * D) * (1.0 + DECISION_SLACK)


def decide(cfg: SchemeConfig, sig: Signature, y, D=None) -> str:
    """'maybe' if y is within normalized distance D of sig's cap, else 'no'."""
    y = np.asarray(y, dtype=float)
    if y.shape != (cfg.n,):
        raise DomainError(f"expected a query of length {cfg.n}, got shape {y.shape}")
    D = cfg.D if D is None else D
    caps = decode_records(cfg, signatures_to_records(cfg, [sig]))
    return "maybe" if min_distances(cfg, caps, y)[0] <= decision_radius(cfg.n, D) else "no"


# -- flat indices ------------------------------------------------------------


class FlatIndex:
    """Bijection between records and integers in [0, K*M).

    index = (k - 1) * M + (codepoints in annuli below i) + rank of coords
    within the annulus shell, ranks following :func:`shell_points`.
    """

    def __init__(self, cfg: SchemeConfig, budget=None):
        code = cfg.code
        r_minus, r_plus = annulus_shells(code)
        self.cfg = cfg
        self._points = [None] * code.N
        self._ranks = [None] * code.N
        for i in range(code.N // 2, code.N):
            pts = shell_points(code.lattice, float(r_minus[i]), float(r_plus[i]), budget)
            ranks = {tuple(int(v) for v in p): j for j, p in enumerate(pts)}
            for a in (i, code.N - 1 - i):
                self._points[a] = pts
                self._ranks[a] = ranks
        counts = np.array([len(p) for p in self._points], dtype=np.int64)
        self.counts = counts
        self.offsets = np.concatenate([[0], np.cumsum(counts)])
        self.M = int(self.offsets[-1])
        self.size = self.M * cfg.levels
        if self.size > 2**64:
            raise DomainError("flat index space exceeds 64 bits")

    @property
    def bits(self) -> int:
        return max(1, math.ceil(math.log2(self.size)))

    def encode(self, recs) -> np.ndarray:
        out = np.zeros(len(recs), dtype=np.uint64)
        for j, r in enumerate(recs):
            i = int(r["i"])
            rank = self._ranks[i].get(tuple(int(v) for v in r["coords"]))
            if rank is None:
                raise DomainError(f"coordinates of record {j} lie outside the shell of annulus {i}")
            out[j] = (int(r["k"]) - 1) * self.M + int(self.offsets[i]) + rank
        return out

    def decode(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.uint64)
        out = np.zeros(idx.size, dtype=record_dtype(self.cfg.n))
        for j, v in enumerate(idx.tolist()):
            if v >= self.size:
                raise DomainError(f"flat index {v} out of range (size {self.size})")
            k, rem = divmod(v, self.M)
            i = int(np.searchsorted(self.offsets, rem, side="right")) - 1
            coords = self._points[i][rem - int(self.offsets[i])]
            out[j] = (k + 1, i, int(not np.any(coords)), coords)
        return out


def flat_encode(index: FlatIndex, sig: Signature) -> int:
    return int(index.encode(signatures_to_records(index.cfg, [sig]))[0])


def flat_decode(index: FlatIndex, value: int) -> Signature:
    s = records_to_signatures(index.decode([value]))[0]
    return Signature(s.gain_cell, s.annulus, s.coords, s.pole, int(value))


# -- vector files ------------------------------------------------------------


def write_vectors(path, X) -> None:
    X = np.asarray(X, dtype="<f8")
    if X.ndim != 2 or X.shape[1] < 1:
        raise DomainError("vector file needs a 2-D array with at least one column")
    with open(path, "wb") as f:
        f.write(_VEC_HEADER.pack(VEC_MAGIC, FORMAT_VERSION, X.shape[1], X.shape[0]))
        f.write(np.ascontiguousarray(X).tobytes())


def _read_exact(f, size, what):
    start = f.tell()
    buf = f.read(size)
    if len(buf) != size:
        raise FormatError(f"truncated {what}", start + len(buf))
    return buf


def read_vector_header(f):
    """Parse and check a vector file header; returns (n, count)."""
    buf = _read_exact(f, _VEC_HEADER.size, "vector file header")
    magic, version, n, count = _VEC_HEADER.unpack(buf)
    if magic != VEC_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {VEC_MAGIC!r}", 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported vector file version {version}", 4)
    if n == 0:
        raise FormatError("vector length must be positive", 6)
    f.seek(0, os.SEEK_END)
    size = f.tell()
    f.seek(_VEC_HEADER.size)
    expected = _VEC_HEADER.size + 8 * n * count
    if size < expected:
        raise FormatError(f"payload ends early, expected {expected} bytes in total", size)
    if size > expected:
        raise FormatError("trailing bytes after the last vector", expected)
    return n, count


def iter_vector_chunks(path, chunk=4096):
    """Yield (first record id, array) blocks of a vector file."""
    with open(path, "rb") as f:
        n, count = read_vector_header(f)
        done = 0
        while done < count:
            m = min(chunk, count - done)
            buf = f.read(8 * n * m)
            block = np.frombuffer(buf, dtype="<f8").reshape(m, n)
            bad = ~np.isfinite(block)
            if np.any(bad):
                first = int(np.flatnonzero(bad.ravel())[0])
                raise FormatError("non-finite vector entry", _VEC_HEADER.size + 8 * (done * n + first))
            yield done, block.astype(float)
            done += m


def read_vectors(path) -> np.ndarray:
    with open(path, "rb") as f:
        n, _ = read_vector_header(f)
    blocks = [b for _, b in iter_vector_chunks(path)]
    return np.concatenate(blocks) if blocks else np.zeros((0, n))


# -- signature files ---------------------------------------------------------


def write_signatures(path, cfg: SchemeConfig, data, layout=LAYOUT_RECORDS) -> None:
    with open(path, "wb") as f:
        _write_sig_header(f, cfg, layout, len(data))
        f.write(_pack_payload(cfg, data, layout))


def _write_sig_header(f, cfg, layout, count):
    f.write(_SIG_HEADER.pack(SIG_MAGIC, FORMAT_VERSION, cfg.config_hash(), layout, cfg.n, count))


def _pack_payload(cfg, data, layout):
    if layout == LAYOUT_RECORDS:
        return np.asarray(data, dtype=record_dtype(cfg.n)).tobytes()
    if layout == LAYOUT_FLAT:
        return np.asarray(data, dtype="<u8").tobytes()
    raise DomainError(f"unknown signature layout {layout}")


def read_signatures(path, cfg: SchemeConfig):
    """Returns (layout, records or flat indices).  The config hash must match."""
    with open(path, "rb") as f:
        buf = _read_exact(f, _SIG_HEADER.size, "signature file header")
        magic, version, digest, layout, n, count = _SIG_HEADER.unpack(buf)
        if magic != SIG_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {SIG_MAGIC!r}", 0)
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported signature file version {version}", 4)
        if digest != cfg.config_hash():
            raise FormatError("signature file was written under a different configuration", _SIG_HASH_AT)
        if layout not in (LAYOUT_RECORDS, LAYOUT_FLAT):
            raise FormatError(f"unknown layout flag {layout}", _SIG_LAYOUT_AT)
        if n != cfg.n:
            raise FormatError(f"record dimension {n} does not match n = {cfg.n}", _SIG_N_AT)
        dtype = record_dtype(n) if layout == LAYOUT_RECORDS else np.dtype("<u8")
        payload = f.read()
    expected = dtype.itemsize * count
    if len(payload) < expected:
        raise FormatError("signature payload ends early", _SIG_HEADER.size + len(payload))
    if len(payload) > expected:
        raise FormatError("trailing bytes after the last signature", _SIG_HEADER.size + expected)
    data = np.frombuffer(payload, dtype=dtype).copy()
    if layout == LAYOUT_RECORDS and count:
        bad = (data["k"] < 1) | (data["k"] > cfg.levels) | (data["i"] >= cfg.code.N) | (data["pole"] > 1)
        bad |= data["pole"].astype(bool) != ~np.any(data["coords"] != 0, axis=1)
        if np.any(bad):
            j = int(np.flatnonzero(bad)[0])
            raise FormatError(f"record {j} is out of range", _SIG_HEADER.size + j * dtype.itemsize)
    return layout, data


# -- database operations -----------------------------------------------------


def _map_ordered(fn, items, workers):
    """fn over items, results in input order; threads when workers > 1."""
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def encode_database(cfg: SchemeConfig, vec_path, sig_path, flat=False, workers=1, chunk=4096, budget=None) -> int:
    """Sign every vector of ``vec_path`` into ``sig_path``; returns the count."""
    with open(vec_path, "rb") as f:
        n, count = read_vector_header(f)
    if n != cfg.n:
        raise FormatError(f"vector length {n} does not match n = {cfg.n}", 6)
    index = FlatIndex(cfg, budget) if flat else None
    layout = LAYOUT_FLAT if flat else LAYOUT_RECORDS

    def work(block):
        recs = sign_batch(cfg, block[1])
        return _pack_payload(cfg, index.encode(recs) if flat else recs, layout)

    with open(sig_path, "wb") as out:
        _write_sig_header(out, cfg, layout, count)
        # Bounded batches of chunks keep memory flat for large files.
        pending = []
        for block in iter_vector_chunks(vec_path, chunk):
            pending.append(block)
            if len(pending) >= 4 * max(1, workers):
                for payload in _map_ordered(work, pending, workers):
                    out.write(payload)
                pending = []
        for payload in _map_ordered(work, pending, workers):
            out.write(payload)
    return count


def load_records(cfg: SchemeConfig, sig_path, budget=None) -> np.ndarray:
    """Signature file contents as records, decoding flat indices if needed."""
    layout, data = read_signatures(sig_path, cfg)
    if layout == LAYOUT_FLAT:
        return FlatIndex(cfg, budget).decode(data)
    return data


@dataclass(frozen=True)
class ScanResult:
    maybe: np.ndarray       # (queries, records) bool
    min_dist: np.ndarray    # (queries, records) normalized squared distance bound

    @property
    def maybe_rate(self) -> float:
        return float(self.maybe.mean()) if self.maybe.size else 0.0


def scan_records(cfg: SchemeConfig, recs, Y, D=None, workers=1, chunk=4096) -> ScanResult:
    Y = _as_matrix(cfg, Y)
    D = cfg.D if D is None else D
    if not D > 0:
        raise DomainError("similarity threshold D must be positive")
    radius = decision_radius(cfg.n, D)
    starts = list(range(0, len(recs), chunk))

    def work(s):
        caps = decode_records(cfg, recs[s:s + chunk])
        return np.array([min_distances(cfg, caps, y) for y in Y]).reshape(len(Y), -1)

    parts = _map_ordered(work, starts, workers)
    dist = np.concatenate(parts, axis=1) if parts else np.zeros((len(Y), 0))
    return ScanResult(dist <= radius, dist * dist / cfg.n)


def scan_query(cfg: SchemeConfig, sig_path, Y, D=None, workers=1, budget=None) -> ScanResult:
    return scan_records(cfg, load_records(cfg, sig_path, budget), Y, D, workers)


# -- semi-Monte-Carlo of P(maybe) -------------------------------------------


@dataclass(frozen=True)
class SimulationResult:
    mean: float
    stderr: float
    per_sample: np.ndarray


def simulate_maybe(cfg: SchemeConfig, samples: int, seed: int, mode="bound", workers=1, chunk=100, D=None):
    """P(maybe) = E[P(maybe | X)] over ``samples`` Gaussian draws.

    Each draw is signed; its cap uses the covering-angle bound (mode
    "bound") or the measured angle to its codeword ("true-angle"), and the
    conditional probability over an independent Gaussian query comes from
    the thick-cap quadrature.  Draw block c uses the stream (seed, c), so the
    result does not depend on ``workers``.
    """
    if samples < 1:
        raise DomainError("need at least one sample")
    if mode not in ("bound", "true-angle"):
        raise DomainError(f"unknown mode {mode!r}")
    D = cfg.D if D is None else D
    blocks = [(c, min(chunk, samples - s)) for c, s in enumerate(range(0, samples, chunk))]

    def work(block):
        c, m = block
        rng = np.random.default_rng([seed, c])
        X = rng.standard_normal((m, cfg.n))
        recs = sign_batch(cfg, X)
        caps = decode_records(cfg, recs)
        if mode == "bound":
            theta = caps.theta
        else:
            g = np.linalg.norm(X, axis=1)
            theta = unit_angles(X / g[:, None], caps.center)
        return np.exp(log_prob_thick_batch(caps.r_inner, caps.r_outer, theta, cfg.n, D))

    p = np.concatenate(_map_ordered(work, blocks, workers))
    se = float(p.std(ddof=1) / math.sqrt(p.size)) if p.size > 1 else 0.0
    return SimulationResult(float(p.mean()), se, p)

