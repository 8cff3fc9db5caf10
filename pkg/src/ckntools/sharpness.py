"""Sweeps of the inequality ratio over near-extremal families.

For each annulus ratio R the profile exponent delta is first scanned on a
grid and then refined by a fixed number of golden-section steps around the
best grid point.  The per-R optima are fitted with ``c0 + c1 / log R``; the
extrapolated limit of the ratio is ``1 - c0``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import FitIllConditioned, ParameterOutOfRange
from .inequalities import evaluate_ckn
from .quadrature import QuadratureScheme
from .testfunctions import ExtremalFamily, norm_and_gradient

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class SharpnessStudy:
    params: dict
    family: dict
    samples: list
    best: list
    best_ratio: float
    deficit_fit: dict
    extrapolated_limit: float
    alt_fit: dict = field(default_factory=dict)
    monotone: bool = True
    sound: bool = True
    degenerate: bool = False
    route: str = "radial"
    cross_check: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def table(self):
        lines = [f"{'R':>10}  {'delta*':>9}  {'ratio':>10}"]
        for row in self.best:
            lines.append(f"{row['R']:>10.4g}  {row['delta']:>9.5f}  {row['ratio']:>10.6f}")
        fit = self.deficit_fit
        lines.append(
            f"fit 1 - ratio = c0 + c1/log R: c0={fit.get('c0', float('nan')):.5f} "
            f"c1={fit.get('c1', float('nan')):.5f} R^2={fit.get('r_squared', float('nan')):.4f}"
        )
        lines.append(f"extrapolated limit: {self.extrapolated_limit:.5f}")
        if self.degenerate:
            lines.append("degenerate: a + b + 1 = n, the constant vanishes")
        return "\n".join(lines)


def ratio_of(chart, fieldspec, u, params, scheme=None, route="nd"):
    return evaluate_ckn(chart, fieldspec, u, params, scheme, route).ratio


def golden_section_max(f, lo, hi, iterations=20):
    """Maximise a unimodal f on [lo, hi] with a fixed number of golden steps.

    Returns ``(x_best, f_best, history)`` where history lists every (x, f(x)).
    """
    history = []

    def ev(x):
        v = f(x)
        history.append((x, v))
        return v

    a, b = lo, hi
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = ev(c), ev(d)
    for _ in range(iterations):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = ev(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = ev(d)
    x, v = max(history, key=lambda t: t[1])
    return x, v, history


def fit_deficit(R_values, ratios):
    """Least squares of 1 - ratio against 1/log R; returns c0, c1 and R^2."""
    R = np.asarray(R_values, dtype=float)
    if len(np.unique(R)) < 3:
        raise FitIllConditioned("the deficit fit needs at least 3 distinct R values")
    y = 1.0 - np.asarray(ratios, dtype=float)
    out = {}
    for name, x in (("inverse_log", 1.0 / np.log(R)), ("inverse_log_squared", 1.0 / np.log(R) ** 2)):
        A = np.column_stack([np.ones_like(x), x])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        resid = y - A @ coef
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
        out[name] = {"c0": float(coef[0]), "c1": float(coef[1]), "r_squared": r2}
    return out


def _outer_radius(chart, fieldspec, samples=33):
    """Largest |h| level that stays off the non-periodic chart faces."""
    if fieldspec.radial is not None:
        return fieldspec.radial.rho_max
    n = chart.n
    best = math.inf
    for axis in range(n):
        if chart.periodic[axis]:
            continue
        for bound in (chart.lower[axis], chart.upper[axis]):
            axes = [np.linspace(chart.lower[i], chart.upper[i], samples) if i != axis else np.array([bound])
                    for i in range(n)]
            X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
            rho2, _ = norm_and_gradient(chart, fieldspec, X)
            best = min(best, float(np.sqrt(rho2.min())))
    return best


def sweep(chart, fieldspec, params, family, R_values, delta_values, scheme=None, route="auto",
          rho_out=None, golden_iterations=20, cross_check=True):
    family = family if isinstance(family, ExtremalFamily) else ExtremalFamily(**family)
    R_values = [float(R) for R in R_values]
    if len(set(R_values)) < 3:
        raise FitIllConditioned("a sweep needs at least 3 distinct R values")
    deltas = sorted(float(d) for d in delta_values)
    if not deltas:
        raise ValueError("delta_values must not be empty")
    scheme = QuadratureScheme() if scheme is None else scheme
    if route == "auto":
        route = "radial" if fieldspec.radial is not None else "nd"
    if rho_out is None:
        rho_out = 0.9 * _outer_radius(chart, fieldspec)
    rho_min = fieldspec.radial.rho_min if fieldspec.radial is not None else 0.0
    for R in R_values:
        if rho_out / R <= rho_min:
            raise ParameterOutOfRange(f"R = {R:g} puts the inner radius below the chart (rho_out = {rho_out:g})")
    notes = []
    degenerate = abs(chart.n - params.k) < 1e-14
    samples, best = [], []
    max_excess = -math.inf

    def evaluate(R, delta, stage):
        nonlocal max_excess
        u = family.member(chart, fieldspec, delta, rho_out / R, rho_out)
        rep = evaluate_ckn(chart, fieldspec, u, params, scheme, route)
        samples.append({"R": R, "delta": delta, "ratio": rep.ratio, "slack": rep.slack, "stage": stage})
        max_excess = max(max_excess, rep.ratio - (1.0 + rep.slack))
        return rep.ratio

    for R in sorted(R_values):
        if degenerate:
            v = evaluate(R, deltas[0], "grid")
            best.append({"R": R, "delta": deltas[0], "ratio": v})
            continue
        grid = [evaluate(R, d, "grid") for d in deltas]
        i = int(np.argmax(grid))
        lo = deltas[max(i - 1, 0)]
        hi = deltas[min(i + 1, len(deltas) - 1)]
        x, v = deltas[i], grid[i]
        if hi > lo and golden_iterations > 0:
            gx, gv, _ = golden_section_max(lambda d: evaluate(R, d, "golden"), lo, hi, golden_iterations)
            if gv > v:
                x, v = gx, gv
        best.append({"R": R, "delta": x, "ratio": v})

    ratios = [row["ratio"] for row in best]
    fits = fit_deficit([row["R"] for row in best], ratios)
    fit = fits["inverse_log"]
    monotone = all(b >= a for a, b in zip(ratios, ratios[1:]))
    if degenerate:
        notes.append("a + b + 1 = n: the sharp constant is zero and every ratio vanishes")
    check = {}
    if cross_check and route == "radial" and not degenerate:
        first = best[0]
        u = family.member(chart, fieldspec, first["delta"], rho_out / first["R"], rho_out)
        nd = evaluate_ckn(chart, fieldspec, u, params, scheme, "nd").ratio
        rel = abs(nd - first["ratio"]) / max(abs(first["ratio"]), 1e-300)
        check = {"R": first["R"], "delta": first["delta"], "radial": first["ratio"], "nd": nd,
                 "relative_difference": rel, "ok": bool(rel <= 1e-3)}
    return SharpnessStudy(
        params=params.to_dict(),
        family=family.to_dict(),
        samples=samples,
        best=best,
        best_ratio=float(max(ratios)),
        deficit_fit=fit,
        extrapolated_limit=float(1.0 - fit["c0"]),
        alt_fit=fits["inverse_log_squared"],
        monotone=bool(monotone),
        sound=bool(max_excess <= 0.0),
        degenerate=bool(degenerate),
        route=route,
        cross_check=check,
        notes=notes,
    )
