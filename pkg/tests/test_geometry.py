"""Intrinsic cylinder construction: height equation, scaling, quarters."""
import math

import numpy as np
import pytest

from harnacklab.geometry import (
    BracketError,
    Cylinder,
    HeightSolve,
    cylinder_family,
    harnack_cylinders,
    height_table,
    intrinsic_height,
    intrinsic_height_supform,
    subcylinder,
)
from harnacklab.weights import (
    Exponents,
    QuadratureSpec,
    Weight,
    WEIGHT_FAMILIES,
    admissible_exponents,
    catalog_weight,
)

REF = admissible_exponents(2.0, 1, 4.0, 2.0)
SPEC = QuadratureSpec(levels=5)


def test_cylinder_basics():
    Q = Cylinder(t0=1.0, x0=(0.5, -0.5), R=0.5, T=2.0)
    assert Q.n == 2
    assert Q.t_lo == -1.0
    assert Q.volume == pytest.approx((2 * 0.5) ** 2 * 2.0)
    assert Q.contains(0.5, (0.4, -0.3))
    assert not Q.contains(1.5, (0.4, -0.3))
    with pytest.raises(ValueError):
        Cylinder(t0=0.0, x0=(0.0,), R=-1.0, T=1.0)


@pytest.mark.parametrize("R,C", [(1.0, 1.0), (0.3, 1.0), (1.0, 2.5), (2.0, 0.7)])
def test_unit_weight_height_exact(R, C):
    w = catalog_weight("const", REF)
    hs = intrinsic_height(w, (0.0, (0.0,)), R, C=C, spec=SPEC)
    assert isinstance(hs, HeightSolve)
    assert hs.converged
    assert hs.T == pytest.approx(C * R ** 2, rel=1e-10)
    assert abs(hs.residual) <= 1e-10 * C * R ** 2
    assert hs.c_doubleintegral == pytest.approx(C * 2.0 ** (1.0 / 4.0))


def test_time_power_weight_closed_form():
    # omega = |t|^theta on (t0 - T, t0) with t0 = 0:
    # avg of omega^alpha is T^(alpha theta)/(alpha theta + 1), so
    # T^(1+theta) = C R^p (alpha theta + 1)^(1/alpha)
    theta = 0.5
    w = catalog_weight("power_t", REF, theta=theta)
    R, C = 0.8, 1.3
    # |t|^(alpha theta) is a polynomial here, so the gauss rule is exact and
    # only the bisection tolerance remains
    hs = intrinsic_height(w, (0.0, (0.0,)), R, C=C,
                          spec=QuadratureSpec(levels=4, rule="gauss"))
    closed = (C * R ** 2 * (REF.alpha * theta + 1.0) ** (1.0 / REF.alpha)) \
        ** (1.0 / (1.0 + theta))
    assert hs.T == pytest.approx(closed, rel=1e-8)


def test_weight_scaling_inverts_height():
    # lambda * omega scales the mass factor linearly, so T -> T / lambda
    # exactly for weights without time dependence
    lam = 3.7
    base = catalog_weight("power_x", REF, gamma=0.3)
    scaled = Weight("scaled", lambda t, x: lam * base.omega(t, x), REF,
                    base.singular_distance)
    center = (0.0, (1.5,))
    t1 = intrinsic_height(base, center, 0.6, spec=SPEC).T
    t2 = intrinsic_height(scaled, center, 0.6, spec=SPEC).T
    assert t2 == pytest.approx(t1 / lam, rel=1e-8)


def test_supform_agrees_with_rootform():
    center = (0.5, (0.3,))
    for label in ("const", "power_x", "power_t", "spacetime"):
        w = catalog_weight(label, REF)
        for R in (0.4, 1.1):
            hs = intrinsic_height(w, center, R, spec=SPEC)
            sup = intrinsic_height_supform(w, center, R, spec=SPEC)
            assert abs(sup - hs.T) <= 1e-8 * hs.T, label


def test_slab_weight_degenerate_but_solvable():
    # omega vanishing on a top time slab keeps G flat there; both solvers
    # must still land on the same height beyond the slab
    def omega(t, x):
        return np.where(t < -0.5, 1.0, 0.0) * np.ones(np.shape(t))
    w = Weight("slab", omega, REF)
    hs = intrinsic_height(w, (0.0, (0.0,)), 1.0, spec=QuadratureSpec(levels=6))
    sup = intrinsic_height_supform(w, (0.0, (0.0,)), 1.0,
                                   spec=QuadratureSpec(levels=6))
    assert hs.T > 0.5
    assert abs(sup - hs.T) <= 1e-6 * hs.T


def test_bracket_failure_reported():
    w = catalog_weight("const", REF, value=1e30)
    with pytest.raises(BracketError):
        intrinsic_height(w, (0.0, (0.0,)), 1.0, spec=SPEC)


def test_subcylinder_scaling():
    Q = Cylinder(t0=2.0, x0=(0.4,), R=1.2, T=0.9)
    assert subcylinder(Q, 1.0) == Q
    half = subcylinder(Q, 0.5)
    assert half.R == pytest.approx(0.6)
    assert half.T == pytest.approx(0.45)
    assert half.t0 == Q.t0
    for s in (0.55, 0.7, 0.95):
        sub = subcylinder(Q, s)
        assert sub.volume == pytest.approx(s ** (Q.n + 1) * Q.volume, rel=1e-12)
    s1, s2 = subcylinder(Q, 0.6), subcylinder(Q, 0.8)
    assert s1.R < s2.R and s1.t_lo > s2.t_lo
    with pytest.raises(ValueError):
        subcylinder(Q, 0.4)
    with pytest.raises(ValueError):
        subcylinder(Q, 1.1)


def test_harnack_quarters():
    Q = Cylinder(t0=0.0, x0=(0.0,), R=1.0, T=1.0)
    lower, upper = harnack_cylinders(Q)
    assert lower.R == upper.R == 0.25
    assert (lower.t_lo, lower.t0) == (-0.75, -0.5)
    assert (upper.t_lo, upper.t0) == (-0.25, 0.0)
    assert lower.t0 <= upper.t_lo          # disjoint in time
    assert upper.t_lo - lower.t0 == pytest.approx(Q.T / 4)
    for c in (lower, upper):
        assert c.t_lo >= Q.t_lo and c.t0 <= Q.t0 and c.R <= Q.R


def test_height_consistency_with_average_form():
    # the returned T satisfies T = C R^p / (avg omega^alpha)^(1/alpha)
    from harnacklab.weights import cylinder_average
    w = catalog_weight("spacetime", REF, beta=1.0)
    center = (1.0, (0.3,))
    hs = intrinsic_height(w, center, 0.4, spec=QuadratureSpec(levels=6))
    Q = Cylinder(t0=1.0, x0=(0.3,), R=0.4, T=hs.T)
    avg = cylinder_average(w.omega_pow(REF.alpha), Q, QuadratureSpec(levels=6))
    assert hs.T == pytest.approx(0.4 ** 2 / avg ** (1.0 / REF.alpha), rel=1e-8)


def test_cylinder_family_skips_failures():
    w = catalog_weight("power_x", REF, gamma=0.3)
    centers = [(0.0, (0.0,)), (0.0, (2.0,))]
    fam = cylinder_family(w, centers, radii=[0.5, 1.0], C=1.0, spec=SPEC)
    assert len(fam) == 4
    assert all(q.T > 0 for q in fam)

    bad = catalog_weight("const", REF, value=1e30)
    fam2 = cylinder_family(bad, centers, radii=[0.5], C=1.0, spec=SPEC)
    assert fam2 == []


def test_height_table_shape():
    w = catalog_weight("const", REF)
    radii = [0.25, 0.5, 1.0]
    rows = height_table(w, (0.0, (0.0,)), radii, spec=SPEC)
    assert len(rows) == 3
    for row, R in zip(rows, radii):
        assert row["R"] == R
        assert row["T"] == pytest.approx(R ** 2, rel=1e-9)
        assert abs(row["residual"]) <= 1e-10 * R ** 2
