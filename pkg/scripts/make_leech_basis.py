"""Regenerate src/sqid/data/leech_basis.txt.

Builds the extended binary Golay code from its cyclic generator polynomial,
spans the Leech lattice (integer coordinates, scaled by sqrt(8)) with the
standard generators 2c, 4(e_i +- e_j), (-3, 1, ..., 1), reduces the spanning
set to a basis (Hermite normal form) and LLL-reduces it.
"""
from fractions import Fraction
from itertools import product
from pathlib import Path

import numpy as np

GOLAY_POLY = [0, 2, 4, 5, 6, 10, 11]


def golay_basis():
    rows = []
    for shift in range(12):
        word = [0] * 24
        for e in GOLAY_POLY:
            word[(e + shift) % 23] = 1
        word[23] = sum(word) % 2
        rows.append(word)
    return rows


def golay_weights(basis):
    counts = {}
    for coeffs in product((0, 1), repeat=12):
        w = [0] * 24
        for c, row in zip(coeffs, basis):
            if c:
                w = [(a + b) % 2 for a, b in zip(w, row)]
        counts[sum(w)] = counts.get(sum(w), 0) + 1
    return counts


def hnf(rows):
    rows = [list(r) for r in rows]
    m = len(rows[0])
    basis = []
    for col in range(m):
        pivots = [r for r in rows if r[col] != 0]
        rows = [r for r in rows if r[col] == 0]
        while len(pivots) > 1:
            pivots.sort(key=lambda r: abs(r[col]))
            head = pivots[0]
            rest = []
            for r in pivots[1:]:
                q = r[col] // head[col]
                r = [a - q * b for a, b in zip(r, head)]
                if r[col] != 0:
                    rest.append(r)
                elif any(r):
                    rows.append(r)
            pivots = [head] + rest
        if pivots:
            basis.append(pivots[0])
    return basis


def lll(basis, delta=Fraction(99, 100)):
    b = [list(map(int, r)) for r in basis]
    n = len(b)

    def gso(b):
        bstar, mu = [], [[Fraction(0)] * n for _ in range(n)]
        for i in range(n):
            v = [Fraction(x) for x in b[i]]
            for j in range(i):
                mu[i][j] = sum(Fraction(x) * y for x, y in zip(b[i], bstar[j])) / sum(y * y for y in bstar[j])
                v = [x - mu[i][j] * y for x, y in zip(v, bstar[j])]
            bstar.append(v)
        return bstar, mu

    bstar, mu = gso(b)
    k = 1
    while k < n:
        for j in range(k - 1, -1, -1):
            q = round(mu[k][j])
            if q:
                b[k] = [x - q * y for x, y in zip(b[k], b[j])]
                bstar, mu = gso(b)
        nk = sum(x * x for x in bstar[k])
        nk1 = sum(x * x for x in bstar[k - 1])
        if nk >= (delta - mu[k][k - 1] ** 2) * nk1:
            k += 1
        else:
            b[k], b[k - 1] = b[k - 1], b[k]
            bstar, mu = gso(b)
            k = max(k - 1, 1)
    return b


def main():
    code = golay_basis()
    weights = golay_weights(code)
    assert weights == {0: 1, 8: 759, 12: 2576, 16: 759, 24: 1}, weights
    gens = [[2 * x for x in c] for c in code]
    for i in range(24):
        for j in range(i + 1, 24):
            for s in (1, -1):
                v = [0] * 24
                v[i], v[j] = 4, 4 * s
                gens.append(v)
    gens.append([-3] + [1] * 23)
    basis = hnf(gens)
    assert len(basis) == 24
    det = abs(round(np.linalg.det(np.array(basis, dtype=float))))
    assert det == 8 ** 12, det
    reduced = lll(basis)
    arr = np.array(reduced, dtype=np.int64)
    norms = (arr * arr).sum(axis=1)
    print("row norms / 8:", sorted(norms / 8))
    out = Path(__file__).resolve().parents[1] / "src" / "sqid" / "data" / "leech_basis.txt"
    with open(out, "w") as fh:
        fh.write("# Leech lattice basis, rows are basis vectors times sqrt(8)\n")
        for row in arr:
            fh.write(" ".join(f"{x:d}" for x in row) + "\n")
    print("wrote", out)


if __name__ == "__main__":
    main()
