"""Implicit finite-volume scheme: conservation, ordering, convergence."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from harnacklab.geometry import Cylinder
from harnacklab.solver import (
    Boundary,
    Field,
    Flux,
    Grid,
    StepFailure,
    TestFunction,
    _default_epsilon,
    _phi,
    audit_growth,
    field_load,
    field_save,
    model_flux,
    p_eigenpair_1d,
    solve,
    weak_residual,
)
from harnacklab.weights import Exponents, catalog_weight

E2 = Exponents(p=2.0, n=1, alpha=4.0, r=2.0)
E3 = Exponents(p=3.0, n=1, alpha=6.0, r=4.0)
W2 = catalog_weight("const", E2)
W3 = catalog_weight("const", E3)
FLUX2 = model_flux(W2)
FLUX3 = model_flux(W3)


def heat_exact(k):
    return lambda t, x: np.exp(-k * k * t) * np.sin(k * (x[:, 0] + 1.0))


def test_grid_volumes_partition_cube():
    Q = Cylinder(t0=0.0, x0=(0.2, -0.1), R=0.7, T=1.0)
    g = Grid(Q=Q, cells=16, steps=8)
    assert g.space_shape == (17, 17)
    assert float(np.sum(g.node_volumes())) == pytest.approx((2 * 0.7) ** 2,
                                                            rel=1e-12)
    gp = Grid(Q=Cylinder(t0=0.0, x0=(0.0,), R=1.0, T=1.0), cells=16, steps=8,
              periodic=True)
    assert float(np.sum(gp.node_volumes())) == pytest.approx(2.0, rel=1e-12)


def test_boundary_validation():
    with pytest.raises(ValueError, match="unknown boundary"):
        Boundary("mixed")
    with pytest.raises(ValueError, match="values"):
        Boundary("dirichlet")
    Q = Cylinder(t0=0.2, x0=(0.0,), R=1.0, T=0.2)
    bc = Boundary("dirichlet", values=lambda t, xb: np.zeros(len(t)))
    with pytest.raises(ValueError, match="incompatible"):
        solve(Q, lambda x: np.ones(x.shape[0]), bc, FLUX2, W2, cells=8, steps=4)


def test_constant_data_stays_constant():
    Q = Cylinder(t0=0.2, x0=(0.0,), R=1.0, T=0.2)
    f = solve(Q, lambda x: 3.7 * np.ones(x.shape[0]), Boundary("periodic"),
              FLUX3, W3, cells=32, steps=32)
    assert float(np.max(np.abs(f.values - 3.7))) == 0.0


def test_periodic_mass_conserved():
    Q = Cylinder(t0=0.2, x0=(0.0,), R=1.0, T=0.2)
    u0 = lambda x: 2.0 + np.sin(math.pi * x[:, 0])
    f = solve(Q, u0, Boundary("periodic"), FLUX3, W3, cells=64, steps=64)
    vols = f.grid.node_volumes()
    mass = [float(np.sum(_phi(f.values[m], 3.0) * vols)) for m in (0, 32, 64)]
    drift = max(abs(m - mass[0]) for m in mass) / abs(mass[0])
    assert drift <= 1e-10


def test_neumann_mass_conserved():
    Q = Cylinder(t0=0.2, x0=(0.0,), R=1.0, T=0.2)
    u0 = lambda x: 2.0 + np.sin(math.pi * x[:, 0])
    f = solve(Q, u0, Boundary("neumann"), FLUX3, W3, cells=48, steps=48)
    vols = f.grid.node_volumes()
    mass = [float(np.sum(_phi(f.values[m], 3.0) * vols)) for m in (0, 24, 48)]
    assert max(abs(m - mass[0]) for m in mass) / abs(mass[0]) <= 1e-10


def test_heat_solution_accuracy():
    k = math.pi / 2
    Q = Cylinder(t0=0.5, x0=(0.0,), R=1.0, T=0.5)
    exact = heat_exact(k)
    bc = Boundary("dirichlet", values=lambda t, xb: np.zeros(len(t)))
    f = solve(Q, lambda x: exact(np.full(x.shape[0], Q.t_lo), x), bc,
              FLUX2, W2, cells=64, steps=128)
    mesh = f.grid.mesh().reshape(-1, 1)
    ue = exact(np.full(mesh.shape[0], f.grid.times[-1]), mesh)
    err = float(np.max(np.abs(f.values[-1] - ue.reshape(f.grid.space_shape))))
    assert err < 5e-3           # implicit Euler: dt-dominated at this split
    assert max(r.newton_iterations for r in f.step_reports) == 1   # p = 2 linear


def test_positive_homogeneity():
    Q = Cylinder(t0=0.2, x0=(0.0,), R=1.0, T=0.2)
    bc = Boundary("periodic")
    lam = 7.3
    u0 = lambda x: 2.0 + np.sin(math.pi * x[:, 0])
    u0l = lambda x: lam * u0(x)
    fs = solve(Q, u0, bc, FLUX3, W3, cells=32, steps=32)
    fl = solve(Q, u0l, bc, FLUX3, W3, cells=32, steps=32)
    rel = float(np.max(np.abs(fl.values - lam * fs.values))) \
        / float(np.max(np.abs(fl.values)))
    assert rel < 1e-8


def test_comparison_principle():
    Q = Cylinder(t0=0.2, x0=(0.0,), R=1.0, T=0.2)
    bc = Boundary("periodic")
    u0a = lambda x: 1.0 + 0.5 * np.sin(2 * math.pi * x[:, 0])
    u0b = lambda x: 1.6 + 0.5 * np.sin(2 * math.pi * x[:, 0]) \
        + 0.2 * np.cos(math.pi * x[:, 0])
    # shared regularization so the discrete operators coincide
    fa = solve(Q, u0a, bc, FLUX3, W3, cells=32, steps=32, epsilon=1e-6)
    fb = solve(Q, u0b, bc, FLUX3, W3, cells=32, steps=32, epsilon=1e-6)
    assert float(np.max(fa.values - fb.values)) <= 1e-12


def test_growth_audit_pass_and_fail():
    aud = audit_growth(FLUX3, W3, samples=300, seed=1)
    assert aud.passed and aud.witness is None
    bad = Flux(label="bad", A=lambda t, x, xi, eta: 3.0 * np.abs(eta) * eta,
               c1=1.0, c2=1.0, p=3.0)
    audb = audit_growth(bad, W3, samples=300, seed=1)
    assert not audb.passed
    assert audb.witness is not None


def test_positivity_guard():
    Q = Cylinder(t0=0.1, x0=(0.0,), R=1.0, T=0.1)
    data = lambda t, xb: 0.05 * np.ones(len(t))
    bc = Boundary("dirichlet", values=data)
    u0 = lambda x: 0.05 + np.maximum(0.5 - 4.0 * x[:, 0] ** 2, 0.0)
    f = solve(Q, u0, bc, FLUX2, W2, cells=32, steps=32, positivity=True)
    assert float(np.min(f.values)) > 0.0


def test_two_dimensional_solve():
    Q = Cylinder(t0=0.05, x0=(0.0, 0.0), R=1.0, T=0.05)
    k = math.pi / 2
    exact = lambda t, x: (np.exp(-2 * k * k * t)
                          * np.sin(k * (x[:, 0] + 1.0)) * np.sin(k * (x[:, 1] + 1.0)))
    bc = Boundary("dirichlet", values=lambda t, xb: np.zeros(len(t)))
    f = solve(Q, lambda x: exact(np.full(x.shape[0], Q.t_lo), x), bc,
              FLUX2, W2, cells=24, steps=24)
    mesh = f.grid.mesh().reshape(-1, 2)
    ue = exact(np.full(mesh.shape[0], f.grid.times[-1]), mesh)
    err = float(np.max(np.abs(f.values[-1] - ue.reshape(f.grid.space_shape))))
    assert err < 5e-3


def test_step_failure_carries_partial():
    Q = Cylinder(t0=0.1, x0=(0.0,), R=1.0, T=0.1)
    u0 = lambda x: 0.2 + np.maximum(0.5 - 4.0 * x[:, 0] ** 2, 0.0)
    # sign-flipped flux makes the problem backward-parabolic; Newton stalls
    anti = Flux(label="anti", A=lambda t, x, xi, eta: -FLUX2.A(t, x, xi, eta),
                c1=1.0, c2=1.0, p=2.0,
                regularized=lambda t, x, xi, eta, eps: -FLUX2.regularized(
                    t, x, xi, eta, eps),
                d_eta=lambda t, x, xi, d, eps: -FLUX2.d_eta(t, x, xi, d, eps))
    with pytest.raises(StepFailure):
        solve(Q, u0, Boundary("periodic"), anti, W2, cells=32, steps=16)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1e6), st.integers(0, 5))
def test_regularization_scales_with_data(lam, seed):
    rng = np.random.default_rng(seed)
    Q = Cylinder(t0=0.0, x0=(0.0,), R=1.0, T=1.0)
    g = Grid(Q=Q, cells=16, steps=4)
    u = rng.standard_normal(g.space_shape)
    e1 = _default_epsilon(u, g, 3.0)
    e2 = _default_epsilon(lam * u, g, 3.0)
    assert e2 == pytest.approx(lam * e1, rel=1e-12)


def test_weak_residual_zero_for_constants():
    Q = Cylinder(t0=0.5, x0=(0.0,), R=1.0, T=0.5)
    k = math.pi / 2
    v = TestFunction(
        value=lambda t, x: (t - Q.t_lo) ** 2 * np.cos(k * x[:, 0]),
        grad=lambda t, x: (-(t - Q.t_lo) ** 2 * k * np.sin(k * x[:, 0]))[:, None],
        lip=2.0)
    g = Grid(Q=Q, cells=32, steps=64)
    fc = Field(g, np.full((65, 33), 2.5), "neumann")
    assert abs(weak_residual(fc, FLUX2, v)) < 1e-12


def test_weak_residual_small_only_for_solutions():
    Q = Cylinder(t0=0.5, x0=(0.0,), R=1.0, T=0.5)
    k = math.pi / 2
    exact = heat_exact(k)
    v = TestFunction(
        value=lambda t, x: (t - Q.t_lo) * np.cos(k * x[:, 0]),
        grad=lambda t, x: (-(t - Q.t_lo) * k * np.sin(k * x[:, 0]))[:, None],
        lip=2.0)
    g = Grid(Q=Q, cells=64, steps=128)
    mesh = g.mesh().reshape(-1, 1)

    def sampled(fn):
        vals = np.stack([fn(np.full(mesh.shape[0], tm), mesh).reshape(
            g.space_shape) for tm in g.times])
        return Field(g, vals, "dirichlet")

    r_sol = abs(weak_residual(sampled(exact), FLUX2, v))
    # slowing the decay makes a strict supersolution
    slower = lambda t, x: np.exp(0.5 * k * k * t) * exact(t, x)
    r_super = abs(weak_residual(sampled(slower), FLUX2, v))
    assert r_sol < 5e-3
    assert r_super > 20 * r_sol


def test_test_function_boundary_guard():
    Q = Cylinder(t0=0.5, x0=(0.0,), R=1.0, T=0.5)
    bad = TestFunction(value=lambda t, x: np.ones(len(t)),
                       grad=lambda t, x: np.zeros((len(t), 1)))
    with pytest.raises(ValueError, match="vanish"):
        bad.check_vanishes(Q)


def test_field_roundtrip(tmp_path):
    Q = Cylinder(t0=0.3, x0=(0.1,), R=0.9, T=0.3)
    bc = Boundary("periodic")
    f = solve(Q, lambda x: 1.0 + 0.2 * np.sin(math.pi * (x[:, 0] - 0.1) / 0.9),
              bc, FLUX2, W2, cells=16, steps=8)
    prefix = str(tmp_path / "run")
    field_save(f, prefix, weight_label="const")
    g = field_load(prefix)
    assert np.array_equal(g.values, f.values)
    assert g.grid.Q == f.grid.Q
    assert g.boundary == f.boundary

    csv_path = str(tmp_path / "slice.csv")
    from harnacklab.solver import field_slice_csv
    field_slice_csv(f, level=4, path=csv_path)
    rows = open(csv_path).read().strip().splitlines()
    assert len(rows) == 1 + f.grid.space_shape[0]   # header + one row per node


def test_eigenvalue_p2_matches_pi_squared():
    pair = p_eigenpair_1d(2.0, (0.0, 1.0))
    assert pair.lam == pytest.approx(math.pi ** 2, abs=1e-9)
    assert pair.phi[0] == pytest.approx(0.0, abs=1e-9)
    assert pair.phi[-1] == pytest.approx(0.0, abs=1e-8)
    assert pair.phi.max() == pytest.approx(1.0, rel=1e-6)


def test_eigenvalue_scaling_in_domain_length():
    # lam(ell) = lam(1) / ell^p by the eigenvalue scaling law
    a = p_eigenpair_1d(3.0, (0.0, 1.0))
    b = p_eigenpair_1d(3.0, (-1.0, 1.0))
    assert b.lam == pytest.approx(a.lam / 2.0 ** 3, rel=1e-8)
