"""Experiment orchestration: configuration, the two-sided ratio pipeline,
weight surveys, deterministic report emission, and the CLI.

Reports are byte-stable for a fixed (config, seed): wall-clock timings go to
a separate timings.json sidecar, never into report.json.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import estimates as est
from .geometry import (BracketError, Cylinder, cylinder_family,
                       harnack_cylinders, height_table, intrinsic_height,
                       subcylinder)
from .solver import (Boundary, Field, Grid, StepFailure, field_save,
                     field_slice_csv, model_flux, solve)
from .weights import (AdmissibilityError, DivergenceError, Exponents,
                      QuadratureSpec, WEIGHT_FAMILIES, admissible_exponents,
                      catalog_weight, doubling_estimate, muckenhoupt_constant)

DEFAULTS = {
    "label": "run",
    "exponents": {"p": 2.0, "n": 1, "alpha": 4.0, "r": 2.0},
    "weight": {"family": "const", "params": {}},
    "cylinder": {"t0": 0.0, "x0": [0.0], "R": 1.0, "C": 1.0},
    "grid": {"cells": 128, "steps": 256},
    "flux": "model",
    "boundary": {"kind": "dirichlet", "data": "bumps", "floor": 0.5,
                 "amplitude": 1.0, "modes": 3},
    "checks": ["median", "log_levelset", "moser_reciprocal", "bombieri",
               "moser_t1", "harnack", "doubling"],
    "quadrature": {"levels": 6, "rule": "midpoint"},
    "seed": 0,
    "output": "runs/out",
}

_FIELD_DOC = {
    "label": "free-form run name echoed into the report",
    "exponents": "p > 1, spatial dimension n, weight exponents alpha, r; "
                 "must satisfy the admissibility inequalities",
    "weight": "catalog family name plus its parameters "
              f"(families: {', '.join(sorted(WEIGHT_FAMILIES))})",
    "cylinder": "center (t0, x0), spatial half-width R, height constant C; "
                "the height T is always solved, never configured",
    "grid": "cells per spatial axis and time steps of the solver lattice",
    "flux": "flux label; 'model' is the weighted power-law flux",
    "boundary": "positive boundary data: kind (dirichlet), data "
                "('bumps' seeded random positive data or 'constant'), floor, "
                "amplitude, modes",
    "checks": "subset of median, log_levelset, moser_reciprocal, bombieri, "
              "moser_t1, harnack, doubling",
    "quadrature": "dyadic refinement levels and cell rule (midpoint | gauss)",
    "seed": "RNG seed; fixed (config, seed) gives byte-identical reports",
    "output": "directory where report and sidecar files are written",
}


def _merge(base: dict, over: dict) -> dict:
    out = {}
    for k, v in base.items():
        if isinstance(v, dict) and isinstance(over.get(k), dict):
            # empty defaults (weight params) are free-form maps
            out[k] = dict(over[k]) if not v else _merge(v, over[k])
        else:
            out[k] = over.get(k, v)
    extra = set(over) - set(base)
    if extra:
        raise ValueError(f"unknown config keys: {sorted(extra)}")
    return out


@dataclass
class ExperimentConfig:
    raw: dict

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        cfg = cls(raw=_merge(DEFAULTS, d or {}))
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def validate(self) -> None:
        e = self.raw["exponents"]
        admissible_exponents(e["p"], int(e["n"]), e["alpha"], e["r"])
        if self.raw["weight"]["family"] not in WEIGHT_FAMILIES:
            raise ValueError(f"unknown weight family "
                             f"{self.raw['weight']['family']!r}")
        if len(self.raw["cylinder"]["x0"]) != int(e["n"]):
            raise ValueError("cylinder center dimension != n")
        known = set(DEFAULTS["checks"])
        bad = set(self.raw["checks"]) - known
        if bad:
            raise ValueError(f"unknown checks: {sorted(bad)}")

    @property
    def exponents(self) -> Exponents:
        e = self.raw["exponents"]
        return Exponents(p=float(e["p"]), n=int(e["n"]),
                         alpha=float(e["alpha"]), r=float(e["r"]))

    def weight(self):
        wc = self.raw["weight"]
        return catalog_weight(wc["family"], self.exponents, **wc["params"])

    def quadrature(self, refine: int = 0) -> QuadratureSpec:
        q = self.raw["quadrature"]
        return QuadratureSpec(levels=int(q["levels"]) + refine,
                              rule=q["rule"])

    def as_dict(self) -> dict:
        return json.loads(json.dumps(self.raw, sort_keys=True))


def config_reference() -> str:
    """Generated documentation of every config key and its default."""
    lines = ["# Experiment configuration reference", "",
             "Any subset of the keys may appear in the JSON file; omitted",
             "keys take the defaults shown here.", ""]
    for k, v in DEFAULTS.items():
        lines.append(f"## {k}")
        lines.append(f"- default: `{json.dumps(v, sort_keys=True)}`")
        lines.append(f"- {_FIELD_DOC[k]}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# boundary data


def make_boundary_data(cfg: ExperimentConfig, Q: Cylinder, rng):
    """Strictly positive Dirichlet data and matching initial data."""
    b = cfg.raw["boundary"]
    n = Q.n
    floor = float(b["floor"])
    amp = float(b["amplitude"])
    if floor <= 0.0:
        raise ValueError("boundary floor must be positive")
    if b["data"] == "constant":
        def data(t, x):
            return np.full(np.shape(t), floor + amp)
        return data
    modes = int(b["modes"])
    centers = rng.uniform(-0.6, 0.6, (modes, n))
    widths = rng.uniform(0.2, 0.6, modes)
    heights = rng.uniform(0.2, 1.0, modes)
    tfreq = rng.uniform(0.5, 2.0, modes)
    tphase = rng.uniform(0.0, 2.0 * math.pi, modes)

    def data(t, x):
        t = np.asarray(t, dtype=float)
        xs = (np.asarray(x, dtype=float) - np.asarray(Q.x0)) / Q.R
        out = np.full(t.shape, floor)
        for j in range(modes):
            bump = np.exp(-np.sum((xs - centers[j]) ** 2, axis=-1)
                          / widths[j] ** 2)
            wob = 1.0 + 0.3 * np.sin(tfreq[j] * (t - Q.t_lo) / Q.T * 2 * math.pi
                                     + tphase[j])
            out = out + amp * heights[j] * bump * wob
        return out

    return data


# ---------------------------------------------------------------------------
# verdicts and reports


@dataclass
class CheckVerdict:
    check: str
    parameters: dict
    constant: float
    margin: float
    resolution: dict
    passed: bool

    def as_dict(self) -> dict:
        return {"check": self.check, "parameters": self.parameters,
                "constant": self.constant, "margin": self.margin,
                "resolution": self.resolution, "pass": self.passed}


@dataclass
class RunReport:
    config: dict
    height: dict
    muckenhoupt: dict
    verdicts: list = field(default_factory=list)
    error: dict | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(v.passed for v in self.verdicts)

    def as_dict(self) -> dict:
        return {"config": self.config, "height": self.height,
                "muckenhoupt": self.muckenhoupt,
                "verdicts": [v.as_dict() for v in self.verdicts],
                "error": self.error, "pass": self.passed}


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=1) + "\n").encode()


def emit_report(report: RunReport | dict, out_dir: str, fmt: str = "json",
                name: str = "report", timings: dict | None = None) -> list:
    """Writes the report (and optional timings sidecar); returns the paths."""
    if fmt not in ("json", "csv"):
        raise ValueError("format must be json or csv")
    if not os.path.isdir(out_dir):
        os.makedirs(out_dir, exist_ok=True)
        print(f"created output directory {out_dir}")
    data = report.as_dict() if isinstance(report, RunReport) else report
    paths = []
    if fmt == "json":
        path = os.path.join(out_dir, f"{name}.json")
        with open(path, "wb") as fh:
            fh.write(_json_bytes(data))
        paths.append(path)
    else:
        path = os.path.join(out_dir, f"{name}.csv")
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["check", "parameters", "constant", "margin",
                         "resolution", "pass"])
            for v in data.get("verdicts", []):
                wr.writerow([v["check"], json.dumps(v["parameters"],
                                                    sort_keys=True),
                             repr(v["constant"]), repr(v["margin"]),
                             json.dumps(v["resolution"], sort_keys=True),
                             v["pass"]])
        paths.append(path)
    if timings is not None:
        tpath = os.path.join(out_dir, "timings.json")
        with open(tpath, "wb") as fh:
            fh.write(_json_bytes(timings))
        paths.append(tpath)
    return paths


# ---------------------------------------------------------------------------
# pipeline


def _grid_resolution(u: Field) -> dict:
    g = u.grid
    return {"cells": g.cells, "steps": g.steps, "h": g.h, "dt": g.dt}


def run_harnack_pipeline(cfg: ExperimentConfig, refine: int = 0,
                         u0_override=None) -> tuple[RunReport, dict]:
    """Two-sided bound experiment in proof order: intrinsic height, positive
    solve, median normalization, log-level-set and reciprocal sup bounds
    (infimum side), then the peak cylinder T1, its sup bounds, the ratio, and
    the shrinking audit (supremum side)."""
    t_start = time.time()
    timings = {}
    E = cfg.exponents
    w = cfg.weight()
    spec = cfg.quadrature(refine)
    cyl = cfg.raw["cylinder"]
    C = float(cyl["C"])
    center = (float(cyl["t0"]), tuple(float(c) for c in cyl["x0"]))
    R = float(cyl["R"])
    gridc = cfg.raw["grid"]
    cells = int(gridc["cells"]) * (2 ** refine)
    steps = int(gridc["steps"]) * (2 ** refine)
    rng = np.random.default_rng(int(cfg.raw["seed"]))
    checks = list(cfg.raw["checks"])
    verdicts = []

    def clock(key, t0):
        timings[key] = time.time() - t0

    t0 = time.time()
    hs = intrinsic_height(w, center, R, C=C, spec=spec)
    Q = Cylinder(t0=center[0], x0=center[1], R=R, T=hs.T)
    clock("height", t0)

    t0 = time.time()
    fam = cylinder_family(w, [center], [R / 2.0, R], C=C, spec=spec)
    muck = muckenhoupt_constant(w, fam or [Q], spec)
    clock("muckenhoupt", t0)

    report = RunReport(config=cfg.as_dict(), height=hs.as_dict(),
                       muckenhoupt=muck.as_dict())

    t0 = time.time()
    data = make_boundary_data(cfg, Q, rng)
    if u0_override is not None:
        data = u0_override
    bc = Boundary("dirichlet", values=data)
    flux = model_flux(w)
    try:
        u = solve(Q, lambda x: data(np.full(x.shape[0], Q.t_lo), x), bc, flux,
                  w, cells=cells, steps=steps, positivity=True)
    except StepFailure as exc:
        report.error = {"stage": "solve", "message": str(exc)}
        clock("solve", t0)
        timings["total"] = time.time() - t_start
        return report, timings
    clock("solve", t0)
    res = _grid_resolution(u)

    lower, upper = harnack_cylinders(Q)

    t0 = time.time()
    level = est.median_level(u, lower)
    if "median" in checks:
        verdicts.append(CheckVerdict(
            check="median", parameters={"cylinder": "lower quarter"},
            constant=level, margin=level, resolution=res,
            passed=bool(level > 0.0 and math.isfinite(level))))
    un = u.scaled(1.0 / level)
    clock("median", t0)

    if "log_levelset" in checks:
        t0 = time.time()
        ll = est.log_levelset_check(un, Q)
        verdicts.append(CheckVerdict(
            check="log_levelset", parameters={"levels": len(ll.ks)},
            constant=ll.c_min, margin=ll.c_min, resolution=res,
            passed=bool(ll.holds)))
        clock("log_levelset", t0)

    deltas = [0.25, 0.5, 0.75]
    pairs = [(0.5, 0.75), (0.5, 1.0), (0.75, 1.0)]
    recip = un.mapped(lambda v: 1.0 / v)

    if "moser_reciprocal" in checks:
        t0 = time.time()
        reps = est.moser_check(recip, Q, deltas, pairs, w=w)
        cmax = max(r.implied_c for r in reps)
        verdicts.append(CheckVerdict(
            check="moser_reciprocal",
            parameters={"deltas": deltas, "pairs": [list(p) for p in pairs]},
            constant=cmax, margin=cmax, resolution=res,
            passed=bool(math.isfinite(cmax))))
        clock("moser_reciprocal", t0)

    if "bombieri" in checks:
        t0 = time.time()
        ss = [0.5, 0.625, 0.75, 0.875, 1.0]
        family = [(s, subcylinder(Q, s)) for s in ss]
        leb = catalog_weight("const", E)
        inp = est.BombieriInput(u=recip, family=family, w=leb)
        bomb = est.bombieri_check(inp, pairs=[(0.5, 1.0), (0.5, 0.75),
                                              (0.75, 1.0)])
        worst = min((m[4] for m in bomb.margins), default=math.inf)
        verdicts.append(CheckVerdict(
            check="bombieri",
            parameters={"C1": bomb.C1, "C2": bomb.C2, "theta": bomb.theta},
            constant=bomb.C1, margin=worst, resolution=res,
            passed=bool(bomb.applicable and bomb.holds)))
        clock("bombieri", t0)

    # peak of u over the lower quarter cylinder, deterministic tie-break
    t0 = time.time()
    twl, _, ml = est._restriction(un, lower)
    interior = un.grid.interior_mask(1).reshape(-1)
    mask = ml.reshape(-1) & interior
    tsel = np.flatnonzero(twl > 0.0)
    sub = un.values.reshape(un.values.shape[0], -1)[tsel][:, mask]
    peak = float(np.max(sub))
    hits = np.argwhere(sub >= peak * (1.0 - 1e-13))
    hits = hits[np.lexsort((hits[:, 1], hits[:, 0]))]
    mm, ii = int(hits[0][0]), int(hits[0][1])
    t_peak = float(un.grid.times[tsel[mm]])
    x_peak_idx = int(np.flatnonzero(mask)[ii])
    clock("argmax", t0)

    # height of the peak cylinder with the reduced constant
    t0 = time.time()
    C1 = C / 8.0
    halved = False
    T1 = intrinsic_height(w, (t_peak, center[1]), R, C=C1, spec=spec).T
    if T1 >= Q.T / 4.0:
        halved = True
        C1 = C1 / 2.0
        T1 = intrinsic_height(w, (t_peak, center[1]), R, C=C1, spec=spec).T
    t1_ok = bool(T1 < Q.T / 4.0)
    clock("t1", t0)

    if "moser_t1" in checks:
        t0 = time.time()
        q_tilde = Cylinder(t0=t_peak, x0=center[1], R=R / 4.0, T=T1 / 4.0)
        reps = est.moser_check(un, q_tilde, deltas, pairs, w=w)
        cmax = max(r.implied_c for r in reps)
        verdicts.append(CheckVerdict(
            check="moser_t1",
            parameters={"t_peak": t_peak, "x_peak_index": x_peak_idx,
                        "T1": T1, "C1": C1, "halved": halved},
            constant=cmax, margin=cmax, resolution=res,
            passed=bool(math.isfinite(cmax) and t1_ok)))
        clock("moser_t1", t0)

    if "harnack" in checks:
        t0 = time.time()
        hr = est.harnack_check(un, Q)
        verdicts.append(CheckVerdict(
            check="harnack", parameters=hr.as_dict()["grid_resolution"],
            constant=hr.ratio, margin=hr.ratio, resolution=res,
            passed=bool(math.isfinite(hr.ratio))))
        clock("harnack", t0)

    if "doubling" in checks:
        t0 = time.time()
        innerQ = Cylinder(t0=t_peak, x0=center[1], R=R, T=T1)
        dbl = doubling_estimate(w, innerQ, Q, exponent=E.p, spec=spec)
        ratio_T = T1 / Q.T
        rows = {}
        # both candidate contraction exponents: p-1+d1 and 1/p' + d1/p
        for d1 in dbl.delta1s:
            c2 = dbl.c2_at(d1)
            rows[f"direct_{d1}"] = c2 * ratio_T ** (E.p - 1.0 + d1)
            rows[f"conjugate_{d1}"] = c2 * ratio_T ** (1.0 / E.p_prime + d1 / E.p)
        worst = max(rows.values())
        verdicts.append(CheckVerdict(
            check="doubling",
            parameters={"T1_over_T": ratio_T, "C1": C1,
                        "contractions": rows},
            constant=dbl.mass_ratio, margin=C1 - worst, resolution=res,
            passed=t1_ok))
        clock("doubling", t0)

    report.verdicts = verdicts
    timings["total"] = time.time() - t_start
    return report, timings


# ---------------------------------------------------------------------------
# weight survey


def run_weight_survey(cfg: ExperimentConfig, radii=None,
                      refine: int = 0) -> list[dict]:
    """Per catalog weight: admissibility, Muckenhoupt constant over the
    intrinsic family, and the T(R) table.  One row per (weight, R)."""
    E = cfg.exponents
    spec = cfg.quadrature(refine)
    cylc = cfg.raw["cylinder"]
    center = (float(cylc["t0"]), tuple(float(c) for c in cylc["x0"]))
    C = float(cylc["C"])
    if radii is None:
        radii = list(np.geomspace(0.1, 1.0, 10))
    rows = []
    for label in sorted(WEIGHT_FAMILIES):
        w = catalog_weight(label, E)
        fam = cylinder_family(w, [center], radii, C=C, spec=spec)
        if fam:
            muck = muckenhoupt_constant(w, fam, spec)
            mconv = muck.converged
            mconst = muck.constant if math.isfinite(muck.constant) else math.nan
            merr = ("" if mconv else
                    f"dual average divergent on {len(muck.inadmissible)}"
                    f"/{len(fam)} cylinders at this center")
        else:
            mconst, mconv = math.nan, False
            merr = "no solvable intrinsic cylinder at this center"
        try:
            table = height_table(w, center, radii, C=C, spec=spec)
            err = merr
        except (DivergenceError, BracketError) as exc:
            table = []
            err = f"{type(exc).__name__}: {exc}"
        by_r = {row["R"]: row for row in table}
        for R in radii:
            row = by_r.get(R)
            rows.append({
                "weight": label,
                "p": E.p, "n": E.n, "alpha": E.alpha, "r": E.r,
                "admissible": bool(mconv and row is not None),
                "muckenhoupt": mconst,
                "R": R,
                "T": row["T"] if row else math.nan,
                "T_over_Rp": (row["T"] / R ** E.p) if row else math.nan,
                "note": err,
            })
    return rows


def survey_csv(rows: list[dict], out_dir: str, name: str = "survey") -> str:
    if not os.path.isdir(out_dir):
        os.makedirs(out_dir, exist_ok=True)
        print(f"created output directory {out_dir}")
    path = os.path.join(out_dir, f"{name}.csv")
    cols = ["weight", "p", "n", "alpha", "r", "admissible", "muckenhoupt",
            "R", "T", "T_over_Rp", "note"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(cols)
        for row in rows:
            wr.writerow([row[c] if isinstance(row[c], str)
                         else (row[c] if isinstance(row[c], (bool, int))
                               else repr(float(row[c])))
                         for c in cols])
    return path


# ---------------------------------------------------------------------------
# lemma suites (verify-lemmas subcommand)


def run_lemma_suites(seed: int = 0, samples: int = 200) -> tuple[dict, bool]:
    """Randomized checks of the four standalone lemmas plus mollification."""
    rng = np.random.default_rng(seed)
    out = {}

    # positive-part bound on lateral-vanishing fields
    viol = 0
    for _ in range(samples):
        n = 1
        R = float(rng.uniform(0.5, 1.5))
        T = float(rng.uniform(0.5, 1.5))
        Q = Cylinder(t0=float(rng.uniform(0.0, 1.0)), x0=(0.0,), R=R, T=T)
        s = float(rng.uniform(0.55, 0.95))
        g = Grid(Q, 48, 32)
        mesh = g.mesh()[..., 0]
        modes = rng.integers(1, 4)
        vals = np.zeros((g.steps + 1,) + g.space_shape)
        for _j in range(modes):
            kx = rng.integers(1, 4)
            prof = np.sin(kx * math.pi * (mesh - (Q.x0[0] - s * R))
                          / (2 * s * R))
            prof = np.where(np.abs(mesh - Q.x0[0]) <= s * R, prof, 0.0)
            amp = rng.uniform(-1.0, 1.0)
            tprof = np.cos(rng.uniform(0, 3) * (g.times - Q.t_lo) / T
                           + rng.uniform(0, 6))
            vals += amp * tprof[:, None] * prof[None, :]
        v = Field(g, vals, "neumann")
        ver = est.mamedov_check(v, Q, s)
        viol += 0 if ver.holds else 1
    out["mamedov"] = {"samples": samples, "violations": viol}

    # abstract iteration
    ok = 0
    trials = 100
    for _ in range(trials):
        alpha = float(rng.uniform(0.0, 0.9))
        beta = float(rng.uniform(0.5, 4.0))
        A = float(rng.uniform(0.1, 10.0))
        ss, fs = est.iteration_sample(alpha, A, beta, 0.0, 1.0, 12, rng)
        ver = est.iteration_check(ss, fs, alpha, A, beta)
        ok += 1 if (ver.applicable and ver.holds) else 0
    out["iteration"] = {"samples": trials, "holds": ok}

    # interpolation family over three domain sizes
    maxima = []
    for size in (0.5, 1.0, 2.0):
        best = 0.0
        for _ in range(100):
            m = rng.integers(1, 4)
            cs = rng.uniform(-0.5 * size, 0.5 * size, m)
            ws = rng.uniform(0.2 * size, 0.5 * size, m)
            hs = rng.uniform(0.5, 2.0, m)

            def val(P, cs=cs, ws=ws, hs=hs, size=size):
                x = P[:, 0]
                out_ = np.zeros(x.shape)
                for c, wd, ht in zip(cs, ws, hs):
                    out_ += ht * np.maximum(1.0 - np.abs(x - c) / wd, 0.0)
                return out_ * np.maximum(1.0 - (x / size) ** 2, 0.0)

            def grd(P, cs=cs, ws=ws, hs=hs, size=size):
                x = P[:, 0]
                base = np.zeros(x.shape)
                dbase = np.zeros(x.shape)
                for c, wd, ht in zip(cs, ws, hs):
                    tri = np.maximum(1.0 - np.abs(x - c) / wd, 0.0)
                    base += ht * tri
                    dbase += ht * np.where(tri > 0.0, -np.sign(x - c) / wd, 0.0)
                cut = np.maximum(1.0 - (x / size) ** 2, 0.0)
                dcut = np.where(np.abs(x) < size, -2.0 * x / size ** 2, 0.0)
                return (dbase * cut + base * dcut)[:, None]

            f = est.CompactFunction(value=val, grad=grd,
                                    bounds=[(-size, size)])
            q = float(rng.uniform(1.0, 3.0))
            ratio = est.interpolation_check(f, q=q, p=2.0)
            best = max(best, ratio)
        maxima.append(best)
    drift = (max(maxima) - min(maxima)) / max(maxima)
    out["interpolation"] = {"maxima": maxima, "drift": drift}

    # mollification error sequence on a solver run
    E = Exponents(p=2.0, n=1, alpha=4.0, r=2.0)
    w = catalog_weight("const", E)
    Q = Cylinder(t0=0.5, x0=(0.0,), R=1.0, T=0.5)
    data = lambda t, x: 1.0 + 0.5 * np.sin(math.pi * x[:, 0]) ** 2  # noqa: E731
    bc = Boundary("dirichlet", values=data)
    u = solve(Q, lambda x: data(None, x), bc, model_flux(w), w,
              cells=64, steps=128, positivity=True)
    errs = []
    for frac in (8, 16, 32):
        ah = est.steklov_average(u, Q.T / frac)
        M = ah.grid.steps
        errs.append(float(np.max(np.abs(ah.values - u.values[:M + 1]))))
    out["steklov"] = {"windows": ["T/8", "T/16", "T/32"], "errors": errs,
                      "monotone": bool(errs[0] >= errs[1] >= errs[2])}

    passed = (viol == 0 and ok == trials and drift <= 0.10
              and out["steklov"]["monotone"])
    return out, passed


# ---------------------------------------------------------------------------
# CLI


def _load_cfg(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
    else:
        cfg = ExperimentConfig.from_dict({})
    if args.seed is not None:
        cfg.raw["seed"] = int(args.seed)
    if args.out:
        cfg.raw["output"] = args.out
    return cfg


def _add_common(sp):
    sp.add_argument("--config", help="path to a JSON experiment config")
    sp.add_argument("--seed", type=int, default=None, help="RNG seed override")
    sp.add_argument("--out", help="output directory override")
    sp.add_argument("--format", choices=("json", "csv"), default="json",
                    help="report format")
    sp.add_argument("--refine", type=int, default=0,
                    help="extra refinement levels (grid and quadrature)")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="harnacklab",
        description="numerical laboratory for weighted degenerate "
                    "parabolic sup/inf estimates")
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name, hlp in [
        ("muckenhoupt", "two-average product over the intrinsic family"),
        ("height", "intrinsic height table over a radius grid"),
        ("solve", "run the implicit solver and dump the field"),
        ("moser", "local sup bound constants on a fresh run"),
        ("harnack", "full two-sided pipeline"),
        ("verify-lemmas", "randomized lemma suites"),
        ("survey", "weight catalog survey CSV"),
        ("report", "re-emit an existing report in another format"),
    ]:
        _add_common(sub.add_parser(name, help=hlp))

    args = ap.parse_args(argv)
    cfg = _load_cfg(args)
    out_dir = cfg.raw["output"]
    E = cfg.exponents
    spec = cfg.quadrature(args.refine)
    cylc = cfg.raw["cylinder"]
    center = (float(cylc["t0"]), tuple(float(c) for c in cylc["x0"]))
    R = float(cylc["R"])
    C = float(cylc["C"])
    ok = True

    if args.cmd == "muckenhoupt":
        w = cfg.weight()
        radii = list(np.geomspace(R / 4.0, R, 5))
        fam = cylinder_family(w, [center], radii, C=C, spec=spec)
        rep = muckenhoupt_constant(w, fam, spec) if fam else None
        ok = bool(rep and rep.converged and math.isfinite(rep.constant))
        payload = {"config": cfg.as_dict(),
                   "muckenhoupt": rep.as_dict() if rep else None,
                   "pass": ok}
        emit_report(payload, out_dir, args.format, name="muckenhoupt")
        print(f"muckenhoupt constant: "
              f"{rep.constant if rep else math.nan:.6g} pass={ok}")

    elif args.cmd == "height":
        w = cfg.weight()
        radii = list(np.geomspace(R / 4.0, R, 8))
        try:
            rows = height_table(w, center, radii, C=C, spec=spec)
        except DivergenceError as exc:
            rows = []
            ok = False
            print(f"height solve failed: {exc}")
        payload = {"config": cfg.as_dict(), "rows": rows, "pass": ok}
        emit_report(payload, out_dir, args.format, name="height")
        for row in rows:
            print(f"R={row['R']:.4g} T={row['T']:.6g} "
                  f"residual={row['residual']:.2e}")

    elif args.cmd == "solve":
        w = cfg.weight()
        hs = intrinsic_height(w, center, R, C=C, spec=spec)
        Q = Cylinder(t0=center[0], x0=center[1], R=R, T=hs.T)
        rng = np.random.default_rng(int(cfg.raw["seed"]))
        data = make_boundary_data(cfg, Q, rng)
        bc = Boundary("dirichlet", values=data)
        gridc = cfg.raw["grid"]
        try:
            u = solve(Q, lambda x: data(np.full(x.shape[0], Q.t_lo), x), bc,
                      model_flux(w), w,
                      cells=int(gridc["cells"]) * 2 ** args.refine,
                      steps=int(gridc["steps"]) * 2 ** args.refine,
                      positivity=True)
        except StepFailure as exc:
            ok = False
            print(f"solve failed: {exc}")
        else:
            os.makedirs(out_dir, exist_ok=True)
            field_save(u, os.path.join(out_dir, "field"),
                       weight_label=cfg.raw["weight"]["family"],
                       flux_label=cfg.raw["flux"])
            field_slice_csv(u, u.grid.steps, os.path.join(out_dir,
                                                          "final_slice.csv"))
            worst = max(r.residual_norm for r in u.step_reports)
            payload = {"config": cfg.as_dict(), "height": hs.as_dict(),
                       "worst_residual": worst, "pass": True}
            emit_report(payload, out_dir, args.format, name="solve")
            print(f"solved {u.grid.steps} steps, worst newton residual "
                  f"{worst:.2e}")

    elif args.cmd == "moser":
        report, timings = run_harnack_pipeline(cfg, refine=args.refine)
        keep = [v for v in report.verdicts
                if v.check in ("moser_reciprocal", "moser_t1", "median")]
        report.verdicts = keep
        ok = report.passed
        emit_report(report, out_dir, args.format, name="moser",
                    timings=timings)
        for v in keep:
            print(f"{v.check}: constant={v.constant:.6g} pass={v.passed}")

    elif args.cmd == "harnack":
        report, timings = run_harnack_pipeline(cfg, refine=args.refine)
        ok = report.passed
        emit_report(report, out_dir, args.format, name="report",
                    timings=timings)
        for v in report.verdicts:
            print(f"{v.check}: constant={v.constant:.6g} pass={v.passed}")
        if report.error:
            print(f"error: {report.error}")

    elif args.cmd == "verify-lemmas":
        out, ok = run_lemma_suites(seed=int(cfg.raw["seed"]))
        payload = {"config": cfg.as_dict(), "suites": out, "pass": ok}
        emit_report(payload, out_dir, args.format, name="lemmas")
        for k, v in out.items():
            print(f"{k}: {v}")

    elif args.cmd == "survey":
        rows = run_weight_survey(cfg, refine=args.refine)
        path = survey_csv(rows, out_dir)
        ok = all(r["admissible"] or r["note"] for r in rows)
        print(f"survey written to {path} ({len(rows)} rows)")

    elif args.cmd == "report":
        src = os.path.join(out_dir, "report.json")
        if not os.path.exists(src):
            print(f"no report.json under {out_dir}")
            return 1
        with open(src) as fh:
            data = json.load(fh)
        emit_report(data, out_dir, args.format, name="report")
        ok = bool(data.get("pass"))
        print(f"report pass={ok}")

    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
