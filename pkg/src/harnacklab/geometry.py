"""Intrinsic parabolic cylinders.

A cylinder is K_R x (t0 - T, t0) with cube cross-section K_R =
prod_i (x0_i - R, x0_i + R).  The intrinsic height T adapts the time scale to
the weight through the implicit equation

    T * (avg_{Q_T} omega^alpha)^(1/alpha) = C * R^p,

whose left side is strictly increasing in T wherever the weight mass is
positive, so bisection on a verified monotone bracket finds the unique root.
The equivalent double-integral normalization carries an extra 2^(n/alpha)
under the cube volume convention; HeightSolve reports it alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .weights import (QuadratureSpec, Weight, DivergenceError,
                      cylinder_average)


class BracketError(RuntimeError):
    """No sign change for the height equation inside the search range."""


@dataclass(frozen=True)
class Cylinder:
    """Space-time cylinder with top time t0, spatial half-width R, height T."""

    t0: float
    x0: tuple
    R: float
    T: float

    def __post_init__(self):
        if self.R <= 0 or self.T <= 0:
            raise ValueError("cylinder needs R > 0 and T > 0")
        object.__setattr__(self, "x0", tuple(float(c) for c in self.x0))

    @property
    def n(self) -> int:
        return len(self.x0)

    @property
    def t_lo(self) -> float:
        return self.t0 - self.T

    @property
    def volume(self) -> float:
        return (2.0 * self.R) ** self.n * self.T

    def bounds(self) -> list[tuple[float, float]]:
        return [(self.t_lo, self.t0)] + [(c - self.R, c + self.R) for c in self.x0]

    def contains(self, t: float, x) -> bool:
        return (self.t_lo < t <= self.t0
                and all(abs(xi - ci) < self.R for xi, ci in zip(x, self.x0)))

    def as_dict(self) -> dict:
        return {"t0": self.t0, "x0": list(self.x0), "R": self.R, "T": self.T}


@dataclass
class HeightSolve:
    T: float
    residual: float
    iterations: int
    C: float
    converged: bool
    bracket: tuple
    c_doubleintegral: float  # C for the raw double-integral normalization

    def as_dict(self) -> dict:
        return {"T": self.T, "residual": self.residual,
                "iterations": self.iterations, "C": self.C,
                "converged": self.converged}


def _mass_factor(w: Weight, center, R: float, spec: QuadratureSpec):
    """G(T) = T * (avg_{Q_T} omega^alpha)^(1/alpha); strictly increasing."""
    t0, x0 = center
    e = w.exponents
    f = w.omega_pow(e.alpha)

    def G(T: float) -> float:
        Q = Cylinder(t0=t0, x0=tuple(x0), R=R, T=T)
        avg = cylinder_average(f, Q, spec, w.singular_distance)
        return T * avg ** (1.0 / e.alpha)

    return G


def intrinsic_height(w: Weight, center, R: float, C: float = 1.0,
                     spec: QuadratureSpec | None = None,
                     max_iter: int = 60) -> HeightSolve:
    """Solve the implicit height equation by bisection.

    center is (t0, x0) with x0 a point in R^n.  Returns the unique T with
    T * (avg omega^alpha)^(1/alpha) = C R^p.  Raises DivergenceError when the
    weight mass fails to integrate, BracketError when no bracket exists in
    [1e-12, 1e12] * R^p.
    """
    if R <= 0 or C <= 0:
        raise ValueError("need R > 0 and C > 0")
    spec = spec or QuadratureSpec()
    e = w.exponents
    target = C * R ** e.p
    G = _mass_factor(w, center, R, spec)

    lo = hi = R ** e.p
    g0 = G(lo)
    iters = 1
    if g0 < target:
        while G(hi) < target:
            hi *= 4.0
            iters += 1
            if hi > 1e12 * R ** e.p:
                raise BracketError("height bracket exceeds 1e12 * R^p")
    else:
        while G(lo) > target:
            lo /= 4.0
            iters += 1
            if lo < 1e-12 * R ** e.p:
                raise BracketError("height bracket below 1e-12 * R^p")
    if lo == hi:
        lo, hi = (lo / 4.0, hi) if g0 >= target else (lo, hi * 4.0)

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if G(mid) < target:
            lo = mid
        else:
            hi = mid
        iters += 1
    T = 0.5 * (lo + hi)
    residual = G(T) - target
    converged = abs(residual) <= 1e-10 * target
    return HeightSolve(T=T, residual=residual, iterations=iters, C=C,
                       converged=converged, bracket=(lo, hi),
                       c_doubleintegral=C * 2.0 ** (e.n / e.alpha))


def intrinsic_height_supform(w: Weight, center, R: float, C: float = 1.0,
                             spec: QuadratureSpec | None = None,
                             scan_cap: float = 1e12) -> float:
    """Height as sup{F > 0 : G(F) <= C R^p} via geometric scan plus bisection
    on the indicator boundary; independent cross-check of intrinsic_height.

    Uses the same averaged normalization, so the two solvers must agree to
    bisection tolerance wherever G is strictly increasing.
    """
    if R <= 0 or C <= 0:
        raise ValueError("need R > 0 and C > 0")
    spec = spec or QuadratureSpec()
    e = w.exponents
    target = C * R ** e.p
    G = _mass_factor(w, center, R, spec)

    inside = lambda F: G(F) <= target
    F = R ** e.p
    if inside(F):
        good = F
        while inside(F * 2.0):
            F *= 2.0
            good = F
            if F > scan_cap * R ** e.p:
                return F  # unattained sup within scan range
        bad = F * 2.0
    else:
        while not inside(F / 2.0):
            F /= 2.0
            if F < 1e-12 * R ** e.p:
                raise BracketError("sup-form scan found no admissible height")
        good, bad = F / 2.0, F

    for _ in range(60):
        mid = 0.5 * (good + bad)
        if inside(mid):
            good = mid
        else:
            bad = mid
    return 0.5 * (good + bad)


def scaled_cylinder(Q: Cylinder, s: float) -> Cylinder:
    """K_{sR} x (t0 - sT, t0) for any s in (0, 1]; shares the top time."""
    if not 0.0 < s <= 1.0:
        raise ValueError(f"scale must lie in (0, 1], got {s}")
    return Cylinder(t0=Q.t0, x0=Q.x0, R=s * Q.R, T=s * Q.T)


def subcylinder(Q: Cylinder, s: float) -> Cylinder:
    """Congruent subcylinder for s in [1/2, 1]; nested and top-aligned."""
    if not 0.5 <= s <= 1.0:
        raise ValueError(f"subcylinder scale must lie in [1/2, 1], got {s}")
    return scaled_cylinder(Q, s)


def harnack_cylinders(Q: Cylinder) -> tuple[Cylinder, Cylinder]:
    """(lower, upper) quarter cylinders: K_{R/4} x (t0-3T/4, t0-T/2) and
    K_{R/4} x (t0-T/4, t0); disjoint in time with a T/4 gap."""
    lower = Cylinder(t0=Q.t0 - Q.T / 2.0, x0=Q.x0, R=Q.R / 4.0, T=Q.T / 4.0)
    upper = Cylinder(t0=Q.t0, x0=Q.x0, R=Q.R / 4.0, T=Q.T / 4.0)
    return lower, upper


def cylinder_family(w: Weight, centers, radii, C: float = 1.0,
                    spec: QuadratureSpec | None = None) -> list[Cylinder]:
    """Intrinsic cylinders over a (center, R) grid; skips combinations whose
    height solve fails to bracket or integrate."""
    spec = spec or QuadratureSpec()
    out = []
    for center in centers:
        for R in radii:
            try:
                hs = intrinsic_height(w, center, R, C, spec)
            except (BracketError, DivergenceError):
                continue
            t0, x0 = center
            out.append(Cylinder(t0=t0, x0=tuple(x0), R=R, T=hs.T))
    return out


def height_table(w: Weight, center, radii, C: float = 1.0,
                 spec: QuadratureSpec | None = None) -> list[dict]:
    """Rows (R, T, residual, iterations) for CSV emission."""
    spec = spec or QuadratureSpec()
    rows = []
    for R in radii:
        hs = intrinsic_height(w, center, R, C, spec)
        rows.append({"R": R, "T": hs.T, "residual": hs.residual,
                     "iterations": hs.iterations})
    return rows
