"""Weights, their duals, cylinder quadrature, and Muckenhoupt-type diagnostics.

A weight is a positive function omega(t, x) multiplying the diffusion flux.
Its dual is sigma = omega^(-p'/p).  The central diagnostic is the product

    (avg_Q omega^alpha)^(1/alpha) * (avg_Q sigma^r)^((p-1)/r)

over a family of space-time cylinders, which the rest of the package requires
to be uniformly bounded.  Everything here is pure: (weight, cylinder, spec)
in, numbers out.

Evaluable maps take (t, x) with t of shape (N,) and x of shape (N, n) and
return shape (N,).  Cylinders have cube cross-sections (x0_i - R, x0_i + R)
so |Q| = (2R)^n * T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .geometry import Cylinder


class AdmissibilityError(ValueError):
    """Exponent tuple violates one of the admissibility inequalities."""


class DivergenceError(ArithmeticError):
    """Refinement sequence failed to settle: the integrand does not integrate."""


# ---------------------------------------------------------------------------
# exponents


@dataclass(frozen=True)
class Exponents:
    """Growth exponent p, dimension n, condition exponents alpha and r.

    Derived quantities: the conjugates and the sup-estimate exponent L.
    Both closed forms of L - 1 are kept so they can be cross-checked.
    """

    p: float
    n: int
    alpha: float
    r: float

    @property
    def p_prime(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def alpha_prime(self) -> float:
        return self.alpha / (self.alpha - 1.0)

    @property
    def r_prime(self) -> float:
        return self.r / (self.r - 1.0)

    @property
    def L(self) -> float:
        p, n = self.p, self.n
        return (p / (n + p)
                + 1.0 / (p * self.alpha_prime)
                + n / (self.p_prime * (n + p) * self.r_prime))

    @property
    def L_gap(self) -> float:
        """L - 1 through the factored closed form."""
        p, n = self.p, self.n
        return (1.0 - (n + p) / (p * self.alpha) - n * (p - 1.0) / (p * self.r)) / (n + p)

    def as_dict(self) -> dict:
        return {"p": self.p, "n": self.n, "alpha": self.alpha, "r": self.r,
                "p_prime": self.p_prime, "L": self.L}


def admissible_exponents(p: float, n: int, alpha: float, r: float) -> Exponents:
    """Validate (p, n, alpha, r) and return Exponents with L computed.

    Raises AdmissibilityError naming the violated inequality.
    """
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise ValueError(f"n must be a positive integer, got {n}")
    lo_alpha = (n + p) / p
    lo_r = n * (p - 1.0) / p
    if not alpha > lo_alpha:
        raise AdmissibilityError(
            f"alpha not > (n+p)/p: alpha={alpha} <= {lo_alpha}")
    if not r > lo_r:
        raise AdmissibilityError(f"r not > n(p-1)/p: r={r} <= {lo_r}")
    balance = n * (p - 1.0) / (p * r) + (n + p) / (p * alpha)
    if not balance < 1.0:
        raise AdmissibilityError(
            f"n(p-1)/(pr) + (n+p)/(p*alpha) not < 1: value={balance}")
    return Exponents(p=float(p), n=int(n), alpha=float(alpha), r=float(r))


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureSpec:
    """Dyadic refinement quadrature over boxes.

    levels: refinement depth (cells per axis double each level).
    rule: "midpoint" (robust near singular sets) or "gauss" (3-point tensor).
    singular_tolerance: initial clip distance to a weight's singular set; the
    clip shrinks by half per level so divergent mass shows up as
    non-decaying increments.
    """

    levels: int = 6
    rule: str = "midpoint"
    singular_tolerance: float = 1e-3
    base_cells: int = 4

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.singular_tolerance <= 0:
            raise ValueError("singular_tolerance must be > 0")
        if self.rule not in ("midpoint", "gauss"):
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.base_cells < 1:
            raise ValueError("base_cells must be >= 1")

    def refined(self, extra: int = 1) -> "QuadratureSpec":
        return QuadratureSpec(levels=self.levels + extra, rule=self.rule,
                              singular_tolerance=self.singular_tolerance,
                              base_cells=self.base_cells)


@dataclass
class IntegralReport:
    value: float
    error: float
    converged: bool
    diverged: bool
    history: list = field(default_factory=list)


_GAUSS3_NODES = np.array([-math.sqrt(3.0 / 5.0), 0.0, math.sqrt(3.0 / 5.0)])
_GAUSS3_WEIGHTS = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


def _axis_rule(lo: float, hi: float, cells: int, rule: str):
    h = (hi - lo) / cells
    edges = lo + h * np.arange(cells)
    if rule == "midpoint":
        nodes = edges + 0.5 * h
        weights = np.full(cells, h)
    else:
        nodes = (edges[:, None] + 0.5 * h * (1.0 + _GAUSS3_NODES[None, :])).ravel()
        weights = np.tile(0.5 * h * _GAUSS3_WEIGHTS, cells)
    return nodes, weights


def box_integral_report(f: Callable[[np.ndarray], np.ndarray],
                        bounds: list[tuple[float, float]],
                        spec: QuadratureSpec,
                        singular_distance: Callable[[np.ndarray], np.ndarray] | None = None,
                        ) -> IntegralReport:
    """Integrate f over a box by tensor rules under dyadic refinement.

    f maps points of shape (N, d) to values of shape (N,).  When
    singular_distance is given, points closer than the (level-shrinking) clip
    distance contribute zero; a divergent integrand then produces increments
    that refuse to decay, which is reported instead of a number.
    """
    d = len(bounds)
    values = []
    for level in range(1, spec.levels + 1):
        cells = spec.base_cells * 2 ** (level - 1)
        axes = [_axis_rule(lo, hi, cells, spec.rule) for (lo, hi) in bounds]
        grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
        wts = np.ones(pts.shape[0])
        for wg in wgrids:
            wts = wts * wg.ravel()
        vals = np.asarray(f(pts), dtype=float)
        if vals.shape != (pts.shape[0],):
            raise ValueError("integrand must return shape (N,)")
        if singular_distance is not None:
            clip = spec.singular_tolerance * 2.0 ** (-(level - 1))
            vals = np.where(np.asarray(singular_distance(pts)) < clip, 0.0, vals)
        if not np.all(np.isfinite(vals)):
            raise DivergenceError("integrand not finite on quadrature nodes")
        values.append(float((wts * vals).sum()))

    increments = [abs(values[i] - values[i - 1]) for i in range(1, len(values))]
    scale = abs(values[-1]) + 1e-300
    diverged = False
    if len(increments) >= 2:
        d1, d2 = increments[-2], increments[-1]
        if d2 > 1e-10 * scale and d1 > 0:
            rate = math.log2(d1 / d2) if d2 > 0 else math.inf
            if rate <= 0.1:
                diverged = True
    err = increments[-1] if increments else abs(values[-1])
    return IntegralReport(value=values[-1], error=err,
                          converged=not diverged, diverged=diverged,
                          history=values)


def box_integral(f, bounds, spec, singular_distance=None) -> float:
    rep = box_integral_report(f, bounds, spec, singular_distance)
    if rep.diverged:
        raise DivergenceError(
            f"refinement increments not decaying: history={rep.history}")
    return rep.value


def cylinder_average_report(w: Callable, Q: "Cylinder", spec: QuadratureSpec,
                            singular_distance: Callable | None = None) -> IntegralReport:
    """Average of an evaluable map over a cylinder, with refinement history."""
    bounds = Q.bounds()
    vol = Q.volume

    def integrand(pts):
        return np.asarray(w(pts[:, 0], pts[:, 1:]), dtype=float)

    rep = box_integral_report(integrand, bounds, spec, singular_distance)
    rep.value /= vol
    rep.error /= vol
    rep.history = [v / vol for v in rep.history]
    return rep


def cylinder_average(w: Callable, Q: "Cylinder", spec: QuadratureSpec,
                     singular_distance: Callable | None = None) -> float:
    """(1/|Q|) * double integral of w over Q; raises DivergenceError when the
    clipped refinement sequence keeps growing instead of settling."""
    rep = cylinder_average_report(w, Q, spec, singular_distance)
    if rep.diverged:
        raise DivergenceError(
            f"average over cylinder does not converge: history={rep.history}")
    return rep.value


# ---------------------------------------------------------------------------
# weights


@dataclass
class Weight:
    """A weight omega(t, x) with its dual sigma = omega^(-p'/p).

    singular_distance, when present, maps points (N, n+1) with columns
    (t, x1..xn) to the distance from the set where omega vanishes or blows
    up; quadrature clips there.
    """

    label: str
    omega: Callable[[np.ndarray, np.ndarray], np.ndarray]
    exponents: Exponents
    singular_distance: Callable[[np.ndarray], np.ndarray] | None = None
    params: dict = field(default_factory=dict)

    def sigma(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        e = self.exponents
        return np.asarray(self.omega(t, x), dtype=float) ** (-e.p_prime / e.p)

    def omega_pow(self, q: float) -> Callable:
        return lambda t, x: np.asarray(self.omega(t, x), dtype=float) ** q

    def sigma_pow(self, q: float) -> Callable:
        e = self.exponents
        return self.omega_pow(-q * e.p_prime / e.p)

    def averages(self, Q: "Cylinder", spec: QuadratureSpec) -> tuple[float, float]:
        """((avg omega^alpha)^(1/alpha), (avg sigma^r)^((p-1)/r)) over Q."""
        e = self.exponents
        wa = cylinder_average(self.omega_pow(e.alpha), Q, spec, self.singular_distance)
        sr = cylinder_average(self.sigma_pow(e.r), Q, spec, self.singular_distance)
        return wa ** (1.0 / e.alpha), sr ** ((e.p - 1.0) / e.r)


def _euclid(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.asarray(x, dtype=float) ** 2, axis=-1))


def _const_weight(exponents: Exponents, value: float = 1.0) -> Weight:
    v = float(value)
    return Weight("const", lambda t, x: np.full(np.shape(t), v),
                  exponents, None, {"value": v})


def _power_x_weight(exponents: Exponents, gamma: float = 0.5) -> Weight:
    g = float(gamma)
    omega = lambda t, x: _euclid(x) ** g
    sing = None if g == 0 else (lambda pts: _euclid(pts[:, 1:]))
    return Weight("power_x", omega, exponents, sing, {"gamma": g})


def _power_t_weight(exponents: Exponents, theta: float = 0.5) -> Weight:
    th = float(theta)
    omega = lambda t, x: np.abs(np.asarray(t, dtype=float)) ** th
    sing = None if th == 0 else (lambda pts: np.abs(pts[:, 0]))
    return Weight("power_t", omega, exponents, sing, {"theta": th})


def _spacetime_weight(exponents: Exponents, beta: float = 1.0) -> Weight:
    b = float(beta)
    omega = lambda t, x: (np.asarray(t, dtype=float) ** 2
                          + _euclid(x) ** 2) ** (b / 2.0)
    sing = None if b == 0 else (
        lambda pts: np.sqrt(pts[:, 0] ** 2 + _euclid(pts[:, 1:]) ** 2))
    return Weight("spacetime", omega, exponents, sing, {"beta": b})


def _product_weight(exponents: Exponents, gamma: float = 0.5,
                    theta: float = 0.5) -> Weight:
    g, th = float(gamma), float(theta)
    omega = lambda t, x: (_euclid(x) ** g
                          * np.abs(np.asarray(t, dtype=float)) ** th)
    sing = lambda pts: np.minimum(_euclid(pts[:, 1:]), np.abs(pts[:, 0]))
    return Weight("product", omega, exponents, sing, {"gamma": g, "theta": th})


WEIGHT_FAMILIES: dict[str, Callable[..., Weight]] = {
    "const": _const_weight,
    "power_x": _power_x_weight,
    "power_t": _power_t_weight,
    "spacetime": _spacetime_weight,
    "product": _product_weight,
}


def register_weight_family(label: str, builder: Callable[..., Weight]) -> None:
    """Plug a user weight family: builder(exponents, **params) -> Weight."""
    WEIGHT_FAMILIES[label] = builder


def catalog_weight(label: str, exponents: Exponents, **params) -> Weight:
    if label not in WEIGHT_FAMILIES:
        raise KeyError(f"unknown weight family {label!r}; "
                       f"known: {sorted(WEIGHT_FAMILIES)}")
    return WEIGHT_FAMILIES[label](exponents, **params)


# ---------------------------------------------------------------------------
# Muckenhoupt constant


@dataclass
class MuckenhouptReport:
    constant: float
    worst_cylinder: "Cylinder"
    samples: int
    converged: bool
    products: list = field(default_factory=list)
    inadmissible: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"constant": self.constant, "samples": self.samples,
                "converged": self.converged,
                "inadmissible": len(self.inadmissible)}


def muckenhoupt_constant(w: Weight, family: list, spec: QuadratureSpec) -> MuckenhouptReport:
    """Sup over the family of the two-average product, with the attaining
    cylinder; cylinders whose mass fails to integrate are flagged, not fatal."""
    if not family:
        raise ValueError("cylinder family must be non-empty")
    best, worst_q = -math.inf, None
    products, bad = [], []
    all_ok = True
    for Q in family:
        try:
            wa, sr = w.averages(Q, spec)
        except DivergenceError:
            bad.append(Q)
            all_ok = False
            continue
        prod = wa * sr
        products.append(prod)
        if prod > best:
            best, worst_q = prod, Q
    return MuckenhouptReport(constant=best, worst_cylinder=worst_q,
                             samples=len(family), converged=all_ok,
                             products=products, inadmissible=bad)


# ---------------------------------------------------------------------------
# A-infinity fit and doubling


@dataclass(frozen=True)
class Box:
    """Axis-aligned spatial cube (center_i - halfwidth, center_i + halfwidth)."""

    center: tuple
    halfwidth: float

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def volume(self) -> float:
        return (2.0 * self.halfwidth) ** self.n

    def bounds(self) -> list[tuple[float, float]]:
        return [(c - self.halfwidth, c + self.halfwidth) for c in self.center]


@dataclass
class AInfinityFit:
    C: float
    delta: float
    holds: bool
    violations: int
    samples: int


def a_infinity_estimate(w: Callable[[np.ndarray], np.ndarray], K: Box,
                        subsets: list[Box], spec: QuadratureSpec,
                        singular_distance: Callable | None = None) -> AInfinityFit:
    """Fit v(E) <= C (|E|/|K|)^delta v(K) on spatial boxes.

    delta comes from a log-log least-squares slope (clamped to (0, 1]), C is
    lifted so the larger half of the subsets satisfies the bound exactly; the
    held-out smaller half then probes it.  Concentrating weights fail on the
    small half and are flagged.  A weight whose mass fails to integrate on K
    or on a subset is not in any A_infinity class: those boxes count as
    violations instead of aborting the fit.
    """
    if len(subsets) < 2:
        raise ValueError("need at least two subsets for a fit")

    def mass(box: Box) -> float:
        val = box_integral(lambda pts: np.asarray(w(pts), dtype=float),
                           box.bounds(), spec, singular_distance)
        if not math.isfinite(val):
            raise DivergenceError("box mass overflowed")
        return val

    try:
        vK = mass(K)
    except DivergenceError:
        return AInfinityFit(C=math.inf, delta=0.0, holds=False,
                            violations=len(subsets), samples=len(subsets))
    ratios_m, ratios_v, bad = [], [], 0
    for E in subsets:
        try:
            vE = mass(E)
        except DivergenceError:
            bad += 1
            continue
        ratios_m.append(E.volume / K.volume)
        ratios_v.append(vE / vK)
    if len(ratios_m) < 2:
        return AInfinityFit(C=math.inf, delta=0.0, holds=False,
                            violations=len(subsets), samples=len(subsets))
    lm = np.log(np.asarray(ratios_m))
    lv = np.log(np.asarray(ratios_v))
    if np.ptp(lm) < 1e-12:
        raise ValueError("degenerate fit: all subsets have the same measure")

    delta = float(np.polyfit(lm, lv, 1)[0])
    delta = min(max(delta, 1e-12), 1.0)

    order = np.argsort(lm)[::-1]          # largest subsets first
    fit_idx = order[: max(2, len(order) // 2)]
    test_idx = order[max(2, len(order) // 2):]
    logC = float(np.max(lv[fit_idx] - delta * lm[fit_idx]))
    C = math.exp(logC)

    slack = 1.05
    viol = bad + int(np.sum(lv[test_idx] > logC + delta * lm[test_idx]
                            + math.log(slack)))
    return AInfinityFit(C=C, delta=delta, holds=(viol == 0),
                        violations=viol, samples=len(subsets))


@dataclass
class DoublingReport:
    delta1s: list
    C2s: list
    mass_ratio: float
    volume_ratio: float

    def c2_at(self, delta1: float) -> float:
        return self.mass_ratio * self.volume_ratio ** (-delta1)


def doubling_estimate(w: Weight, inner: "Cylinder", outer: "Cylinder",
                      exponent: float, spec: QuadratureSpec,
                      delta1s: list[float] | None = None) -> DoublingReport:
    """Largest C2 with mass(inner) >= C2 (|inner|/|outer|)^delta1 mass(outer),
    mass taken with omega^exponent, for each delta1 on the grid."""
    if delta1s is None:
        delta1s = [0.25, 0.5, 0.75, 1.0]
    tol = 1e-9 * max(outer.R, outer.T)
    if not (inner.t0 <= outer.t0 + tol
            and inner.t0 - inner.T >= outer.t0 - outer.T - tol
            and all(abs(ci - co) + inner.R <= outer.R + tol
                    for ci, co in zip(inner.x0, outer.x0))):
        raise ValueError("inner cylinder not contained in outer")
    f = w.omega_pow(exponent)
    m_in = cylinder_average(f, inner, spec, w.singular_distance) * inner.volume
    m_out = cylinder_average(f, outer, spec, w.singular_distance) * outer.volume
    mass_ratio = m_in / m_out
    vol_ratio = inner.volume / outer.volume
    c2s = [mass_ratio * vol_ratio ** (-d1) for d1 in delta1s]
    return DoublingReport(delta1s=list(delta1s), C2s=c2s,
                          mass_ratio=mass_ratio, volume_ratio=vol_ratio)
