import itertools

import numpy as np
import pytest

from sqid.errors import DomainError, FormatError, ResourceBudgetError
from sqid.lattice import (
    LatticeSpec,
    babai_point,
    canonical_key,
    count_points_in_shell,
    leech,
    leech_theta_coefficients,
    load_lattice,
    nearest_point,
    point_budget,
    rescale,
    shell_points,
    zn,
    zn_theta_coefficients,
)


def exhaustive_nearest(basis, y):
    """Closest point by scanning every coefficient vector that could beat Babai."""
    inv = np.linalg.inv(basis)
    lat = LatticeSpec(basis, 1e-3, 1e3)
    b0 = babai_point(lat, y)
    d0 = np.linalg.norm(basis @ b0 - y)
    center = inv @ y
    rad = np.linalg.norm(inv, axis=1) * d0
    axes = [np.arange(np.floor(c - r), np.ceil(c + r) + 1) for c, r in zip(center, rad)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(y))
    d = np.linalg.norm(grid @ basis.T - y, axis=1)
    j = int(np.argmin(d))
    return grid[j].astype(np.int64), d[j]


def test_nearest_point_vs_exhaustive_random_4d():
    rng = np.random.default_rng(11)
    for _ in range(100):
        # Redraw badly conditioned bases; they make the brute-force box huge.
        basis = np.eye(4) + 0.4 * rng.standard_normal((4, 4))
        while np.linalg.cond(basis) > 30:
            basis = np.eye(4) + 0.4 * rng.standard_normal((4, 4))
        lat = LatticeSpec(basis, 1e-3, 1e3)
        y = rng.standard_normal(4) * 3
        b = nearest_point(lat, y)
        ref, ref_d = exhaustive_nearest(basis, y)
        assert abs(np.linalg.norm(basis @ b - y) - ref_d) < 1e-10
        assert np.array_equal(b, ref)


def test_nearest_point_batch_and_ties():
    lat = zn(2)
    pts = nearest_point(lat, np.array([[0.2, 0.7], [-1.4, 2.6]]))
    assert pts.tolist() == [[0, 1], [-1, 3]]
    # Exact tie between 0 and 1: the lexicographically smaller wins.
    assert nearest_point(lat, np.array([0.5, 0.0])).tolist() == [0, 0]
    with pytest.raises(DomainError):
        nearest_point(lat, np.array([1.0, 2.0, 3.0]))
    with pytest.raises(DomainError):
        nearest_point(lat, np.array([np.nan, 0.0]))


def test_zn_theta_vs_brute_force():
    for m in (1, 2, 3, 4):
        coeffs = zn_theta_coefficients(m, 12)
        ref = [0] * 13
        for b in itertools.product(range(-4, 5), repeat=m):
            t = sum(v * v for v in b)
            if t <= 12:
                ref[t] += 1
        assert coeffs == ref


def test_shell_count_theta_equals_enumeration():
    for lat in (zn(3), rescale(zn(5), 0.37)):
        for lo, hi in ((0.0, 1.0), (0.9, 2.3), (1.5, 2.0), (0.0, 0.1)):
            a = count_points_in_shell(lat, lo, hi, method="theta")
            b = count_points_in_shell(lat, lo, hi, method="enumerate")
            assert a == b


def test_leech_theta_known_coefficients():
    # Conway and Sloane, Table 4.14 (norms 0, 2, 4, 6, 8, 10).
    assert leech_theta_coefficients(5) == [1, 0, 196560, 16773120, 398034000, 4629381120]


def test_leech_basics():
    L = leech()
    assert L.dim == 24
    assert abs(L.det - 1.0) < 1e-9
    assert L.d_min == 2.0 and abs(L.r_cov - np.sqrt(2)) < 1e-15
    # No nonzero vector shorter than 2, checked by enumeration.
    assert count_points_in_shell(L, 0.0, 1.99, method="enumerate") == 1


def test_shell_points_order_and_count():
    lat = rescale(zn(3), 0.5)
    pts = shell_points(lat, 0.4, 1.1)
    assert len(pts) == count_points_in_shell(lat, 0.4, 1.1)
    keys = [canonical_key(lat, p) for p in pts]
    assert keys == sorted(keys)
    assert len({tuple(p) for p in pts}) == len(pts)


def test_budget_exceeded(monkeypatch):
    with pytest.raises(ResourceBudgetError) as ei:
        count_points_in_shell(zn(12), 0.0, 4.0, budget=1000, method="enumerate")
    assert ei.value.budget == 1000 and "budget: 1000" in str(ei.value)
    monkeypatch.setenv("SQID_POINT_BUDGET", "500")
    assert point_budget() == 500
    with pytest.raises(ResourceBudgetError):
        shell_points(zn(12), 0.0, 4.0)
    monkeypatch.setenv("SQID_POINT_BUDGET", "lots")
    with pytest.raises(DomainError):
        point_budget()


def test_load_lattice(tmp_path):
    p = tmp_path / "a2.txt"
    p.write_text("# hexagonal\n2\n1 0.5\n0 0.8660254037844386\n1.0 0.5773502691896258\n")
    lat = load_lattice(p)
    assert lat.dim == 2 and lat.theta is None
    # Six neighbours at distance 1.
    assert count_points_in_shell(lat, 0.99, 1.01) == 6
    bad = tmp_path / "bad.txt"
    bad.write_text("2\n1 0\n0 1\n")
    with pytest.raises(FormatError):
        load_lattice(bad)


def test_spec_validation():
    with pytest.raises(DomainError):
        LatticeSpec(np.zeros((2, 2)), 1.0, 1.0)
    with pytest.raises(DomainError):
        LatticeSpec(np.eye(2), 1.0, 0.1)  # r_cov below d_min / 2
    with pytest.raises(DomainError):
        rescale(zn(2), -1.0)
    lat = rescale(zn(2), 3.0)
    assert lat.d_min == 3.0 and lat.scale == 3.0
    assert np.array_equal(lat.points([[1, 2]]), [[3.0, 6.0]])


def test_leech_covering_radius_spot_check():
    L = leech()
    rng = np.random.default_rng(5)
    y = rng.standard_normal((500, 24)) * 5
    b = nearest_point(L, y)
    d = np.linalg.norm(L.points(b) - y, axis=1)
    assert d.max() <= np.sqrt(2) + 1e-12


@pytest.mark.longrun
def test_leech_n6_by_enumeration():
    assert count_points_in_shell(leech(), np.sqrt(6), np.sqrt(6), budget=10**10, method="enumerate") == 16773120
