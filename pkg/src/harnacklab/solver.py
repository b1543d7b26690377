"""Implicit solver for d/dt(|u|^(p-2) u) = div(omega |grad u|^(p-2) grad u).

Conservative node-centered finite volumes: fluxes live on half-nodes with the
weight evaluated there, so constants are exact fixed points, the periodic
mass sum telescopes, and the implicit system is an M-matrix (discrete
comparison principle).  Each implicit step runs damped Newton with the exact
Jacobian of |u|^(p-2)u and of the regularized flux.

The gradient regularization (|grad u|^2 + eps^2)^((p-2)/2) uses
eps = max(1e-8, h) * s_m, where s_m is the largest discrete gradient of the
previous time level (floored at 1e-12 ||u||_inf / h).  Both factors scale
linearly in u, so scheme(lambda u) = lambda scheme(u) holds exactly; at unit
gradient scale this reduces to the plain max(1e-8, h).  Pass an explicit
epsilon to pin the operator (paired comparison runs must share one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from scipy.integrate import solve_ivp

from .geometry import Cylinder
from .weights import Weight


class StepFailure(RuntimeError):
    """Newton did not converge or positivity was lost; diagnostics attached."""

    def __init__(self, message, report=None, partial=None):
        super().__init__(message)
        self.report = report
        self.partial = partial


# ---------------------------------------------------------------------------
# grid and field


@dataclass(frozen=True)
class Grid:
    Q: Cylinder
    cells: int
    steps: int
    periodic: bool = False

    @property
    def n(self) -> int:
        return self.Q.n

    @property
    def h(self) -> float:
        return 2.0 * self.Q.R / self.cells

    @property
    def dt(self) -> float:
        return self.Q.T / self.steps

    @property
    def times(self) -> np.ndarray:
        return self.Q.t_lo + self.dt * np.arange(self.steps + 1)

    def axis_nodes(self, a: int) -> np.ndarray:
        lo = self.Q.x0[a] - self.Q.R
        if self.periodic:
            return lo + self.h * np.arange(self.cells)
        return lo + self.h * np.arange(self.cells + 1)

    @property
    def space_shape(self) -> tuple:
        m = self.cells if self.periodic else self.cells + 1
        return (m,) * self.n

    def mesh(self) -> np.ndarray:
        """Node coordinates, shape space_shape + (n,)."""
        axes = [self.axis_nodes(a) for a in range(self.n)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack(grids, axis=-1)

    def node_volumes(self) -> np.ndarray:
        """Control volumes; half cells at non-periodic ends (conservation)."""
        if self.periodic:
            return np.full(self.space_shape, self.h ** self.n)
        w1 = np.full(self.cells + 1, self.h)
        w1[0] = w1[-1] = self.h / 2.0
        out = np.ones(self.space_shape)
        for a in range(self.n):
            shape = [1] * self.n
            shape[a] = self.cells + 1
            out = out * w1.reshape(shape)
        return out

    def interior_mask(self, layers: int = 1) -> np.ndarray:
        mask = np.ones(self.space_shape, dtype=bool)
        if self.periodic or layers == 0:
            return mask
        for a in range(self.n):
            idx = [slice(None)] * self.n
            idx[a] = slice(0, layers)
            mask[tuple(idx)] = False
            idx[a] = slice(-layers, None)
            mask[tuple(idx)] = False
        return mask


@dataclass
class Field:
    """Discrete space-time solution on a grid over a cylinder."""

    grid: Grid
    values: np.ndarray          # shape (steps+1,) + space_shape
    boundary: str               # dirichlet | neumann | periodic
    step_reports: list = field(default_factory=list)

    def __post_init__(self):
        want = (self.grid.steps + 1,) + self.grid.space_shape
        if self.values.shape != want:
            raise ValueError(f"values shape {self.values.shape} != grid {want}")

    def scaled(self, lam: float) -> "Field":
        return Field(self.grid, lam * self.values, self.boundary)

    def mapped(self, fn: Callable[[np.ndarray], np.ndarray]) -> "Field":
        return Field(self.grid, fn(self.values), self.boundary)


@dataclass
class StepReport:
    newton_iterations: int
    residual_norm: float
    positivity_preserved: bool


@dataclass
class Boundary:
    kind: str                                  # dirichlet | neumann | periodic
    values: Callable | None = None             # (t, xb:(N,n)) -> (N,) for dirichlet

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann", "periodic"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "dirichlet" and self.values is None:
            raise ValueError("dirichlet boundary needs a values callable")


# ---------------------------------------------------------------------------
# fluxes


@dataclass
class Flux:
    """Caratheodory flux A(t, x, xi, eta) with declared growth constants.

    A is vectorized: x (N, n), xi (N,), eta (N, n) -> (N, n).  regularized,
    when set, receives an extra smoothing scale eps > 0 and must reduce to A
    at eps = 0; d_eta may supply the scalar derivative of the 1-D flux for
    exact Jacobians, else a central difference is used.
    """

    label: str
    A: Callable
    c1: float
    c2: float
    p: float
    regularized: Callable | None = None
    d_eta: Callable | None = None

    def eval(self, t, x, xi, eta, eps: float = 0.0) -> np.ndarray:
        if eps > 0.0 and self.regularized is not None:
            return self.regularized(t, x, xi, eta, eps)
        return self.A(t, x, xi, eta)


def model_flux(w: Weight) -> Flux:
    """A(t,x,xi,eta) = omega(t,x) |eta|^(p-2) eta; attains c1 = c2 = 1."""
    p = w.exponents.p

    def A(t, x, xi, eta):
        mag2 = np.sum(eta ** 2, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(mag2 > 0.0, mag2 ** ((p - 2.0) / 2.0), 0.0)
        return (w.omega(t, x) * coef)[..., None] * eta

    def regularized(t, x, xi, eta, eps):
        mag2 = np.sum(eta ** 2, axis=-1) + eps ** 2
        return (w.omega(t, x) * mag2 ** ((p - 2.0) / 2.0))[..., None] * eta

    def d_eta(t, x, xi, d, eps):
        # derivative of (d^2+eps^2)^((p-2)/2) d; positive for p > 1
        m2 = d ** 2 + eps ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(m2 > 0.0,
                           m2 ** ((p - 4.0) / 2.0) * ((p - 1.0) * d ** 2 + eps ** 2),
                           0.0)
        return w.omega(t, x) * out

    return Flux(label="model", A=A, c1=1.0, c2=1.0, p=p,
                regularized=regularized, d_eta=d_eta)


@dataclass
class GrowthAudit:
    passed: bool
    c1_empirical: float
    c2_empirical: float
    witness: tuple | None
    samples: int


def audit_growth(A: Flux, w: Weight, samples: int, seed: int = 0,
                 t_range=(-1.0, 0.0), x_range=(-1.0, 1.0),
                 tol: float = 1e-9) -> GrowthAudit:
    """Empirical best (c1, c2) over random (t, x, xi, eta) against declared."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    n = w.exponents.n
    p = A.p
    t = rng.uniform(*t_range, samples)
    x = rng.uniform(*x_range, (samples, n))
    xi = rng.uniform(-2.0, 2.0, samples)
    mag = 10.0 ** rng.uniform(-3, 3, samples)
    direction = rng.normal(size=(samples, n))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    eta = mag[:, None] * direction

    vals = A.A(t, x, xi, eta)
    dot = np.sum(vals * eta, axis=-1)
    norm = np.linalg.norm(vals, axis=-1)
    omega = w.omega(t, x)
    lower_ref = omega * mag ** p
    upper_ref = omega * mag ** (p - 1.0)
    ok = lower_ref > 0
    c1_emp = float(np.min(dot[ok] / lower_ref[ok])) if ok.any() else math.inf
    c2_emp = float(np.max(norm[ok] / upper_ref[ok])) if ok.any() else 0.0

    bad_low = ok & (dot < A.c1 * lower_ref * (1.0 - tol) - tol)
    bad_up = ok & (norm > A.c2 * upper_ref * (1.0 + tol) + tol)
    witness = None
    bad = bad_low | bad_up
    if bad.any():
        i = int(np.argmax(bad))
        witness = (float(t[i]), tuple(x[i]), float(xi[i]), tuple(eta[i]))
    return GrowthAudit(passed=not bad.any(), c1_empirical=c1_emp,
                       c2_empirical=c2_emp, witness=witness, samples=samples)


# ---------------------------------------------------------------------------
# discrete operator


def _phi(u: np.ndarray, p: float) -> np.ndarray:
    return np.sign(u) * np.abs(u) ** (p - 1.0)


def _phi_prime(u: np.ndarray, p: float) -> np.ndarray:
    if p == 2.0:
        return np.ones_like(u)
    return (p - 1.0) * np.abs(u) ** (p - 2.0)


def _face_coords(grid: Grid, a: int) -> np.ndarray:
    """Coordinates of axis-a faces, shape faces_shape + (n,)."""
    axes = []
    for b in range(grid.n):
        nodes = grid.axis_nodes(b)
        if b == a:
            if grid.periodic:
                nodes = nodes + grid.h / 2.0
            else:
                nodes = nodes[:-1] + grid.h / 2.0
        axes.append(nodes)
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack(grids, axis=-1)


def _axis_diff(u: np.ndarray, a: int, h: float, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(u, -1, axis=a) - u) / h
    lo = [slice(None)] * u.ndim
    hi = [slice(None)] * u.ndim
    lo[a] = slice(0, -1)
    hi[a] = slice(1, None)
    return (u[tuple(hi)] - u[tuple(lo)]) / h


def _axis_avg(u: np.ndarray, a: int, periodic: bool) -> np.ndarray:
    if periodic:
        return 0.5 * (np.roll(u, -1, axis=a) + u)
    lo = [slice(None)] * u.ndim
    hi = [slice(None)] * u.ndim
    lo[a] = slice(0, -1)
    hi[a] = slice(1, None)
    return 0.5 * (u[tuple(hi)] + u[tuple(lo)])


def _node_gradient(u: np.ndarray, grid: Grid) -> np.ndarray:
    """Central (one-sided at ends) gradient at nodes, shape +(n,)."""
    out = []
    for a in range(grid.n):
        if grid.periodic:
            g = (np.roll(u, -1, axis=a) - np.roll(u, 1, axis=a)) / (2 * grid.h)
        else:
            g = np.gradient(u, grid.h, axis=a)
        out.append(g)
    return np.stack(out, axis=-1)


def _face_eta(u: np.ndarray, grid: Grid, a: int) -> np.ndarray:
    """Gradient vector at axis-a faces: exact difference along a, averaged
    central differences transversally."""
    D = _axis_diff(u, a, grid.h, grid.periodic)
    if grid.n == 1:
        return D[..., None]
    node_grad = _node_gradient(u, grid)
    comps = []
    for b in range(grid.n):
        if b == a:
            comps.append(D)
        else:
            comps.append(_axis_avg(node_grad[..., b], a, grid.periodic))
    return np.stack(comps, axis=-1)


def _divergence(u: np.ndarray, t: float, grid: Grid, flux: Flux, eps: float,
                neumann: bool) -> np.ndarray:
    """div of the discrete flux; zero-flux faces appended for neumann."""
    vols = grid.node_volumes()
    div = np.zeros_like(u)
    for a in range(grid.n):
        coords = _face_coords(grid, a)
        pts = coords.reshape(-1, grid.n)
        eta = _face_eta(u, grid, a).reshape(-1, grid.n)
        xi = _axis_avg(u, a, grid.periodic).reshape(-1)
        tt = np.full(pts.shape[0], t)
        F = flux.eval(tt, pts, xi, eta, eps)[:, a]
        F = F.reshape(_axis_avg(u, a, grid.periodic).shape)
        if grid.periodic:
            dF = F - np.roll(F, 1, axis=a)
        else:
            pad = [(0, 0)] * u.ndim
            pad[a] = (1, 1)
            Fp = np.pad(F, pad)  # zero-flux at both ends
            lo = [slice(None)] * u.ndim
            hi = [slice(None)] * u.ndim
            lo[a] = slice(0, -1)
            hi[a] = slice(1, None)
            dF = Fp[tuple(hi)] - Fp[tuple(lo)]
        div = div + dF / vols * (grid.h ** (grid.n - 1))
    return div


def _face_gp(u, t, grid, flux, eps, a):
    """dF_a/dD_a at axis-a faces (exact for model flux, secant otherwise)."""
    coords = _face_coords(grid, a)
    pts = coords.reshape(-1, grid.n)
    xi = _axis_avg(u, a, grid.periodic).reshape(-1)
    tt = np.full(pts.shape[0], t)
    eta = _face_eta(u, grid, a).reshape(-1, grid.n)
    if flux.d_eta is not None and grid.n == 1:
        gp = flux.d_eta(tt, pts, xi, eta[:, 0], eps)
    else:
        d = eta[:, a]
        delta = 1e-6 * (np.abs(d) + 1.0)
        ep = eta.copy()
        ep[:, a] = d + delta
        em = eta.copy()
        em[:, a] = d - delta
        gp = (flux.eval(tt, pts, xi, ep, eps)[:, a]
              - flux.eval(tt, pts, xi, em, eps)[:, a]) / (2 * delta)
    gp = np.maximum(gp, 0.0)
    return gp.reshape(_axis_avg(u, a, grid.periodic).shape)


def _jacobian(u, t, grid, flux, eps, p):
    """Sparse Jacobian triplets of the residual (diagonal block first)."""
    shape = grid.space_shape
    N = u.size
    idx = np.arange(N).reshape(shape)
    vols = grid.node_volumes()
    diag = _phi_prime(u, p).ravel().astype(float)
    rows, cols, vals = [list(idx.ravel())], [list(idx.ravel())], [list(diag)]

    hpow = grid.h ** (grid.n - 1)
    for a in range(grid.n):
        gp = _face_gp(u, t, grid, flux, eps, a) * hpow / grid.h
        if grid.periodic:
            left = idx
            right = np.roll(idx, -1, axis=a)
            coeff = 1.0 / (grid.h ** grid.n)  # uniform volumes
            for (i_, j_, s_) in ((left, left, 1.0), (left, right, -1.0),
                                 (right, right, 1.0), (right, left, -1.0)):
                rows.append(list(i_.ravel()))
                cols.append(list(j_.ravel()))
                vals.append(list((s_ * gp * coeff).ravel()))
        else:
            lo = [slice(None)] * grid.n
            hi = [slice(None)] * grid.n
            lo[a] = slice(0, -1)
            hi[a] = slice(1, None)
            left = idx[tuple(lo)]
            right = idx[tuple(hi)]
            vl = vols[tuple(lo)]
            vr = vols[tuple(hi)]
            for (i_, j_, s_, v_) in ((left, left, 1.0, vl), (left, right, -1.0, vl),
                                     (right, right, 1.0, vr), (right, left, -1.0, vr)):
                rows.append(list(i_.ravel()))
                cols.append(list(j_.ravel()))
                vals.append(list((s_ * gp / v_).ravel()))

    rows = np.concatenate([np.asarray(r) for r in rows])
    cols = np.concatenate([np.asarray(c) for c in cols])
    vals = np.concatenate([np.asarray(v) for v in vals])
    # rows past the diagonal block hold dt-scaled flux terms; scale applied by caller
    return rows, cols, vals, N


def _default_epsilon(um: np.ndarray, grid: Grid, p: float) -> float:
    s = 0.0
    for a in range(grid.n):
        D = _axis_diff(um, a, grid.h, grid.periodic)
        if D.size:
            s = max(s, float(np.max(np.abs(D))))
    umax = float(np.max(np.abs(um))) if um.size else 0.0
    s = max(s, 1e-12 * umax / grid.h)
    eps = max(1e-8, grid.h) * s
    if p < 2.0 and eps == 0.0:
        eps = 1e-14 * (1.0 + umax)  # keep the singular branch off the axis
    return eps


def _advance(um: np.ndarray, t_new: float, grid: Grid, flux: Flux,
             bc: Boundary, positivity: bool, eps: float | None,
             source: Callable | None, tol_rel: float = 1e-12,
             max_newton: int = 80) -> tuple[np.ndarray, StepReport]:
    p = flux.p
    dt = grid.dt
    if eps is None:
        eps = _default_epsilon(um, grid, p)

    rhs = _phi(um, p)
    if source is not None:
        mesh = grid.mesh().reshape(-1, grid.n)
        src = np.asarray(source(np.full(mesh.shape[0], t_new), mesh),
                         dtype=float).reshape(grid.space_shape)
        rhs = rhs + dt * src

    u = um.copy()
    bmask = np.zeros(grid.space_shape, dtype=bool)
    if bc.kind == "dirichlet":
        bmask = ~grid.interior_mask(1)
        mesh = grid.mesh()
        xb = mesh[bmask]
        u[bmask] = bc.values(np.full(xb.shape[0], t_new), xb)
    free = ~bmask
    neumann = bc.kind == "neumann"

    def residual(v):
        res = _phi(v, p) - rhs - dt * _divergence(v, t_new, grid, flux, eps, neumann)
        return np.where(free, res, 0.0)

    scale = float(np.max(np.abs(rhs))) + 1e-300
    tol = tol_rel * scale
    res = residual(u)
    rnorm = float(np.max(np.abs(res)))
    it = 0
    while rnorm > tol and it < max_newton:
        rows, cols, vals, N = _jacobian(u, t_new, grid, flux, eps, p)
        # diagonal block came unscaled; flux entries need dt
        diag_len = N
        vals = np.concatenate([vals[:diag_len], dt * vals[diag_len:]])
        J = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(N, N))
        fidx = np.flatnonzero(free.ravel())
        Jff = J[fidx][:, fidx]
        rhs_vec = -res.ravel()[fidx]
        delta = scipy.sparse.linalg.spsolve(Jff.tocsc(), rhs_vec)
        step_ = np.zeros(N)
        step_[fidx] = delta
        step_ = step_.reshape(grid.space_shape)

        alpha = 1.0
        if positivity:
            cand = u + step_
            guard = 0
            while np.any(cand[free] <= 0.0) and guard < 60:
                alpha *= 0.5
                cand = u + alpha * step_
                guard += 1
            if guard == 60:
                raise StepFailure("positivity damping exhausted",
                                  report=StepReport(it, rnorm, False), partial=u)
        for _ in range(30):
            cand = u + alpha * step_
            cres = residual(cand)
            cnorm = float(np.max(np.abs(cres)))
            if cnorm < rnorm or cnorm <= tol:
                break
            alpha *= 0.5
        u = u + alpha * step_
        res = residual(u)
        rnorm = float(np.max(np.abs(res)))
        it += 1

    pos_ok = bool(np.all(u > 0.0)) if positivity else True
    report = StepReport(newton_iterations=it, residual_norm=rnorm,
                        positivity_preserved=pos_ok)
    if rnorm > tol:
        raise StepFailure(f"newton stalled at residual {rnorm:.3e} (tol {tol:.3e})",
                          report=report, partial=u)
    if positivity and not pos_ok:
        raise StepFailure("positivity lost", report=report, partial=u)
    return u, report


def step(u: Field, dt: float, flux: Flux, w: Weight, bc: Boundary | None = None,
         positivity: bool = False, epsilon: float | None = None,
         source: Callable | None = None) -> tuple[Field, StepReport]:
    """One implicit step from the last stored level of u.

    Returns a single-level Field at the advanced time on a one-step grid of
    the same spatial resolution.
    """
    del w  # the flux carries the weight; kept for call-site symmetry
    g = u.grid
    if bc is None:
        bc = _bc_from_kind(u.boundary)
    last = u.values[-1]
    t_new = g.times[-1] + dt
    gstep = Grid(Q=Cylinder(t0=t_new, x0=g.Q.x0, R=g.Q.R, T=dt),
                 cells=g.cells, steps=1, periodic=g.periodic)
    unew, rep = _advance(last, t_new, gstep, flux, bc, positivity, epsilon, source)
    out = Field(gstep, np.stack([last, unew]), u.boundary, [rep])
    return out, rep


def _bc_from_kind(kind: str) -> Boundary:
    if kind == "dirichlet":
        raise ValueError("dirichlet stepping needs explicit boundary values")
    return Boundary(kind=kind)


def solve(Q: Cylinder, u0, bc: Boundary, flux: Flux, w: Weight,
          dt: float | None = None, cells: int = 128, steps: int | None = None,
          positivity: bool = False, epsilon: float | None = None,
          source: Callable | None = None, newton_tol: float = 1e-12) -> Field:
    """March the implicit scheme over (t0 - T, t0); returns the space-time
    Field with per-step reports.  On failure the partial trajectory is kept
    on the raised StepFailure."""
    del w
    if steps is None:
        steps = max(256, int(math.ceil(Q.T / dt))) if dt else 256
    grid = Grid(Q=Q, cells=cells, steps=steps, periodic=(bc.kind == "periodic"))
    if grid.n > 2:
        raise NotImplementedError("solver supports n <= 2")
    if grid.periodic and grid.n > 1:
        raise NotImplementedError("periodic boundaries implemented for n = 1")

    mesh = grid.mesh()
    if callable(u0):
        vals0 = np.asarray(u0(mesh.reshape(-1, grid.n)), dtype=float)
        vals0 = vals0.reshape(grid.space_shape)
    else:
        vals0 = np.asarray(u0, dtype=float).reshape(grid.space_shape)

    if bc.kind == "dirichlet":
        bmask = ~grid.interior_mask(1)
        xb = mesh[bmask]
        expected = bc.values(np.full(xb.shape[0], grid.times[0]), xb)
        if not np.allclose(vals0[bmask], expected, rtol=1e-8, atol=1e-10):
            raise ValueError("initial data incompatible with boundary values")

    levels = [vals0]
    reports = []
    u = vals0
    for m in range(steps):
        t_new = grid.times[m + 1]
        try:
            u, rep = _advance(u, t_new, grid, flux, bc, positivity, epsilon,
                              source, tol_rel=newton_tol)
        except StepFailure as exc:
            partial = Field(Grid(Q=Q, cells=cells, steps=m, periodic=grid.periodic),
                            np.stack(levels), bc.kind, reports) if m else None
            raise StepFailure(f"step {m + 1}/{steps} failed: {exc}",
                              report=exc.report, partial=partial) from exc
        levels.append(u)
        reports.append(rep)
    return Field(grid, np.stack(levels), bc.kind, reports)


# ---------------------------------------------------------------------------
# weak form


@dataclass
class TestFunction:
    """Lipschitz test function vanishing on the parabolic boundary."""

    __test__ = False                 # keep pytest from collecting this

    value: Callable                  # (t:(N,), x:(N,n)) -> (N,)
    grad: Callable                   # -> (N, n)
    dt: Callable | None = None       # -> (N,); optional, quadrature differences v
    lip: float = 1.0

    def check_vanishes(self, Q: Cylinder, samples: int = 200, tol: float = 1e-9):
        rng = np.random.default_rng(12345)
        n = Q.n
        ts = rng.uniform(Q.t_lo, Q.t0, samples)
        xs = rng.uniform(-1.0, 1.0, (samples, n))
        worst = 0.0
        # lateral faces
        for a in range(n):
            for sgn in (-1.0, 1.0):
                xb = Q.x0 + Q.R * xs
                xb = np.array(xb)
                xb[:, a] = Q.x0[a] + sgn * Q.R
                worst = max(worst, float(np.max(np.abs(self.value(ts, xb)))))
        # bottom slice
        xb = np.asarray(Q.x0) + Q.R * xs
        tb = np.full(samples, Q.t_lo)
        worst = max(worst, float(np.max(np.abs(self.value(tb, xb)))))
        if worst > tol * max(1.0, self.lip):
            raise ValueError(f"test function does not vanish on the parabolic "
                             f"boundary (max {worst:.3e})")


def weak_residual(u: Field, flux: Flux, v: TestFunction) -> float:
    """Three-term weak-form value: boundary-in-time pairing minus flux pairing
    plus time-derivative pairing; ~0 for solutions, signed for sub/super
    solutions.  The time-derivative term integrates u^(p-1) against backward
    differences of v, so constants cancel the boundary term exactly.
    """
    grid = u.grid
    Q = grid.Q
    v.check_vanishes(Q)
    p = flux.p
    vols = grid.node_volumes().ravel()
    mesh = grid.mesh().reshape(-1, grid.n)
    times = grid.times

    def v_at(m):
        tt = np.full(mesh.shape[0], times[m])
        return np.asarray(v.value(tt, mesh), dtype=float)

    def slice_term(m, vvals):
        return float(np.sum(_phi(u.values[m].ravel(), p) * vvals * vols))

    v_prev = v_at(0)
    bottom = slice_term(0, v_prev)

    flux_term = 0.0
    dtv_term = 0.0
    for m in range(1, grid.steps + 1):
        tt = np.full(mesh.shape[0], times[m])
        uv = u.values[m]
        eta = _node_gradient(uv, grid).reshape(-1, grid.n)
        Avals = flux.A(tt, mesh, uv.ravel(), eta)
        gv = np.asarray(v.grad(tt, mesh))
        flux_term += grid.dt * float(np.sum(np.sum(Avals * gv, axis=-1) * vols))
        v_now = v_at(m)
        dtv_term += float(np.sum(_phi(uv.ravel(), p) * (v_now - v_prev) * vols))
        v_prev = v_now
    top = slice_term(grid.steps, v_prev)
    return -(top - bottom) - flux_term + dtv_term


# ---------------------------------------------------------------------------
# field persistence


def field_save(u: Field, prefix: str, weight_label: str = "",
               flux_label: str = "") -> tuple[str, str]:
    """Binary lattice dump (prefix.npy) plus JSON header (prefix.json)."""
    import json
    import os

    d = os.path.dirname(prefix)
    if d:
        os.makedirs(d, exist_ok=True)
    npy = prefix + ".npy"
    hdr = prefix + ".json"
    np.save(npy, u.values)
    g = u.grid
    meta = {
        "cylinder": g.Q.as_dict(),
        "cells": g.cells, "steps": g.steps, "periodic": g.periodic,
        "boundary": u.boundary,
        "weight_label": weight_label, "flux_label": flux_label,
    }
    with open(hdr, "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return npy, hdr


def field_load(prefix: str) -> Field:
    import json

    with open(prefix + ".json") as fh:
        meta = json.load(fh)
    c = meta["cylinder"]
    Q = Cylinder(t0=c["t0"], x0=tuple(c["x0"]), R=c["R"], T=c["T"])
    grid = Grid(Q=Q, cells=meta["cells"], steps=meta["steps"],
                periodic=meta["periodic"])
    values = np.load(prefix + ".npy")
    return Field(grid, values, meta["boundary"])


def field_slice_csv(u: Field, level: int, path: str) -> str:
    """One time level as CSV rows (coordinates, value)."""
    import csv
    import os

    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    g = u.grid
    mesh = g.mesh().reshape(-1, g.n)
    vals = u.values[level].reshape(-1)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t"] + [f"x{a}" for a in range(g.n)] + ["u"])
        t = g.times[level]
        for i in range(mesh.shape[0]):
            wr.writerow([repr(float(t))]
                        + [repr(float(c)) for c in mesh[i]]
                        + [repr(float(vals[i]))])
    return path


# ---------------------------------------------------------------------------
# eigenpair oracle


@dataclass
class EigenPair:
    lam: float
    xs: np.ndarray
    phi: np.ndarray


def p_eigenpair_1d(p: float, domain: tuple[float, float], tol: float = 1e-10,
                   grid_points: int = 1025) -> EigenPair:
    """First eigenpair of the one-dimensional p-Laplacian:
    (|phi'|^(p-2) phi')' = -lam (p-1) |phi|^(p-2) phi, zero at both ends,
    positive inside, max normalized to 1.  Shooting in the flux variable
    q = |phi'|^(p-2) phi' plus the exact scaling lam ~ length^(-p)."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    a, b = domain
    if not b > a:
        raise ValueError("empty domain")
    ell = b - a
    pp = p / (p - 1.0)

    def rhs(x, y, lam):
        phi, q = y
        dphi = np.sign(q) * np.abs(q) ** (pp - 1.0)
        dq = -lam * (p - 1.0) * np.sign(phi) * np.abs(phi) ** (p - 1.0)
        return [dphi, dq]

    def hit(x, y, *args):
        return y[0]

    hit.terminal = True
    hit.direction = -1.0

    def first_zero(lam: float) -> float:
        sol = solve_ivp(rhs, (0.0, 50.0), [0.0, 1.0], args=(lam,),
                        rtol=1e-11, atol=1e-12, events=hit, dense_output=True,
                        max_step=0.05)
        if not sol.t_events[0].size:
            raise RuntimeError("shooting found no return to zero")
        return float(sol.t_events[0][0])

    x1 = first_zero(1.0)
    lam = (x1 / ell) ** p

    sol = solve_ivp(rhs, (0.0, 2.0 * ell), [0.0, 1.0], args=(lam,),
                    rtol=1e-11, atol=1e-12, events=hit, dense_output=True,
                    max_step=0.05 * ell)
    xs = np.linspace(0.0, ell, grid_points)
    phi = sol.sol(np.minimum(xs, sol.t[-1]))[0]
    phi[-1] = 0.0
    phi = np.maximum(phi, 0.0)
    phi /= np.max(phi)
    if abs(first_zero(lam) - ell) > max(tol * ell, 1e-8 * ell):
        raise RuntimeError("eigenvalue scaling check failed")
    return EigenPair(lam=lam, xs=a + xs, phi=phi)
