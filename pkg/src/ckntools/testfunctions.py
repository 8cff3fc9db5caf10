"""Compactly supported test functions with analytic gradients.

Families anchored to the field norm rho = |h|_g (``power_cutoff``,
``log_cutoff``, ``truncated_gaussian``) also carry their radial profile
``rho -> (u, du/drho)`` so integrals on radially reducible catalog entries
can be routed through one-dimensional quadrature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .errors import DegenerateAnnulus, SupportOutsideChart
from .geometry import as_batch


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Scalar u with analytic gradient ``d_i u`` and a coordinate support box."""

    __test__ = False  # keep pytest from collecting this class

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    support_lo: np.ndarray
    support_hi: np.ndarray
    family_params: dict = field(default_factory=dict)
    radial_profile: Optional[Callable] = None
    breakpoints: tuple = ()
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "support_lo", np.asarray(self.support_lo, dtype=float).reshape(-1))
        object.__setattr__(self, "support_hi", np.asarray(self.support_hi, dtype=float).reshape(-1))

    @property
    def support(self):
        return self.support_lo, self.support_hi

    def __call__(self, x):
        return self.value(x)

    def scaled(self, lam):
        """The function lam * u (same support, same family)."""
        lam = float(lam)
        prof = self.radial_profile
        scaled_prof = None if prof is None else (lambda r: tuple(lam * v for v in prof(r)))
        return TestFunction(
            value=lambda X: lam * self.value(X),
            gradient=lambda X: lam * self.gradient(X),
            support_lo=self.support_lo,
            support_hi=self.support_hi,
            family_params={**self.family_params, "scale": self.scale * lam},
            radial_profile=scaled_prof,
            breakpoints=self.breakpoints,
            scale=self.scale * lam,
        )

    def to_dict(self):
        return {
            "family_params": self.family_params,
            "support": [self.support_lo.tolist(), self.support_hi.tolist()],
        }


def zero_function(chart):
    n = chart.n
    return TestFunction(
        value=lambda X: np.zeros(len(as_batch(X, n)[0])),
        gradient=lambda X: np.zeros_like(as_batch(X, n)[0]),
        support_lo=chart.lower + 0.25 * chart.widths,
        support_hi=chart.upper - 0.25 * chart.widths,
        family_params={"family": "zero"},
        radial_profile=lambda r: (np.zeros_like(r), np.zeros_like(r)),
    )


def _inside(chart, lo, hi):
    ok = np.ones(chart.n, dtype=bool)
    for i in range(chart.n):
        if chart.periodic[i]:
            continue
        ok[i] = lo[i] >= chart.lower[i] and hi[i] <= chart.upper[i]
    return bool(ok.all())


def smooth_bump(center, r_in, r_out, chart=None):
    """1 on the coordinate ball of radius r_in, 0 outside r_out, C-infinity between."""
    c = np.asarray(center, dtype=float).reshape(-1)
    n = c.shape[0]
    if not 0 < r_in < r_out:
        raise ValueError("smooth_bump needs 0 < r_in < r_out")
    width = r_out - r_in
    lo, hi = c - r_out, c + r_out
    if chart is not None:
        if chart.n != n:
            raise ValueError("bump centre dimension differs from the chart")
        if not _inside(chart, lo, hi):
            raise SupportOutsideChart(f"ball of radius {r_out} around {c.tolist()} leaves the chart")

    def value(X):
        X, single = as_batch(X, n)
        r = np.linalg.norm(X - c, axis=1)
        s, _ = kernels.smooth_step((r_out - r) / width)
        return s[0] if single else s

    def gradient(X):
        X, single = as_batch(X, n)
        d = X - c
        r = np.linalg.norm(d, axis=1)
        _, ds = kernels.smooth_step((r_out - r) / width)
        with np.errstate(invalid="ignore", divide="ignore"):
            coef = np.where(r > 0, -ds / (width * np.where(r > 0, r, 1.0)), 0.0)
        g = coef[:, None] * d
        return g[0] if single else g

    def profile(r):
        s, ds = kernels.smooth_step((r_out - r) / width)
        return s, -ds / width

    return TestFunction(
        value, gradient, lo, hi,
        family_params={"family": "smooth_bump", "center": c.tolist(), "r_in": r_in, "r_out": r_out},
        radial_profile=profile,
        breakpoints=(r_in, r_out),
    )


def norm_and_gradient(chart, fieldspec, X):
    """rho^2 = |h|_g^2 and its coordinate gradient, shapes (N,) and (N, n)."""
    G = np.asarray(chart.metric(X), dtype=float)
    dG = np.asarray(chart.metric_jacobian(X), dtype=float)
    h = np.asarray(fieldspec.components(X), dtype=float)
    J = np.asarray(fieldspec.jacobian(X), dtype=float)
    rho2, drho2 = kernels.norm_gradient(G, dG, h, J)
    return np.maximum(rho2, 0.0), drho2


def _support_box(chart, fieldspec, rho_out, resolution=17, max_zoom=40):
    """Bounding box (inside the chart) of {|h| <= rho_out}, padded by one grid cell."""
    n = chart.n
    lo, hi = chart.lower.copy(), chart.upper.copy()
    for _ in range(max_zoom):
        axes = [np.linspace(a, b, resolution) for a, b in zip(lo, hi)]
        X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        rho2, _ = norm_and_gradient(chart, fieldspec, X)
        cell = (hi - lo) / (resolution - 1)
        hit = rho2 <= rho_out * rho_out
        if hit.any():
            blo = np.maximum(X[hit].min(axis=0) - cell, chart.lower)
            bhi = np.minimum(X[hit].max(axis=0) + cell, chart.upper)
            return blo, bhi
        best = X[np.argmin(rho2)]
        lo = np.maximum(best - 2 * cell, chart.lower)
        hi = np.minimum(best + 2 * cell, chart.upper)
    raise SupportOutsideChart(f"no chart point has |h| <= {rho_out}")


def _check_faces(chart, value, lo, hi, samples=25):
    """Raise unless ``value`` vanishes on the non-periodic chart faces it touches."""
    n = chart.n
    for axis in range(n):
        if chart.periodic[axis]:
            continue
        for side, bound in ((0, chart.lower[axis]), (1, chart.upper[axis])):
            if (side == 0 and lo[axis] > bound) or (side == 1 and hi[axis] < bound):
                continue
            axes = [np.linspace(chart.lower[i], chart.upper[i], samples) if i != axis else np.array([bound])
                    for i in range(n)]
            X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
            if np.any(value(X) != 0.0):
                raise SupportOutsideChart(f"function does not vanish on the chart face x{axis} = {bound}")


def _anchored(chart, fieldspec, profile_sq, profile, rho_lo, rho_hi, params, breakpoints):
    """Build a TestFunction u = F(rho) from F expressed through rho^2.

    ``profile_sq(rho2)`` returns ``(F, dF/d(rho^2))``; ``profile(rho)`` returns
    ``(F, dF/drho)`` for the radial route.
    """
    n = chart.n

    def value(X):
        X, single = as_batch(X, n)
        rho2, _ = norm_and_gradient(chart, fieldspec, X)
        f, _ = profile_sq(rho2)
        return f[0] if single else f

    def gradient(X):
        X, single = as_batch(X, n)
        rho2, drho2 = norm_and_gradient(chart, fieldspec, X)
        _, df = profile_sq(rho2)
        g = df[:, None] * drho2
        return g[0] if single else g

    params = {**params, "anchor": "field_norm"}
    lo, hi = _support_box(chart, fieldspec, rho_hi)
    _check_faces(chart, value, lo, hi)
    return TestFunction(value, gradient, lo, hi, family_params=params, radial_profile=profile,
                        breakpoints=tuple(breakpoints))


def _annulus_window(rho, rho_in, rho_out, s):
    """eta and d eta/d rho for the two-sided ramp window used by power_cutoff."""
    a, da = kernels.smooth_step((rho - rho_in) / (s * rho_in))
    b, db = kernels.smooth_step((rho_out - rho) / (s * rho_out))
    return a * b, da * b / (s * rho_in) - a * db / (s * rho_out)


def _power_profile(window, delta):
    def profile(rho):
        rho = np.asarray(rho, dtype=float)
        eta, deta = window(rho)
        live = eta != 0.0
        safe = np.where(live, rho, 1.0)
        pw = safe ** (-delta)
        u = np.where(live, eta * pw, 0.0)
        du = np.where(live, (deta - delta * eta / safe) * pw, 0.0)
        return u, du

    def profile_sq(rho2):
        rho = np.sqrt(rho2)
        u, du = profile(rho)
        safe = np.where(rho > 0, rho, 1.0)
        return u, np.where(rho > 0, du / (2.0 * safe), 0.0)

    return profile, profile_sq


def _check_annulus(rho_in, rho_out):
    if not 0 < rho_in < rho_out:
        raise DegenerateAnnulus("need 0 < rho_in < rho_out")
    if rho_out / rho_in < 1.1:
        raise DegenerateAnnulus(f"rho_out / rho_in = {rho_out / rho_in:.4g} < 1.1")


def power_cutoff(chart, fieldspec, delta, rho_in, rho_out, smoothing=0.1):
    """u = eta(|h|) |h|^{-delta}; eta ramps up on [rho_in, rho_in(1+s)] and
    down on [rho_out(1-s), rho_out]."""
    _check_annulus(rho_in, rho_out)
    s = float(smoothing)
    if not 0 < s < 1:
        raise ValueError("smoothing must lie in (0, 1)")
    profile, profile_sq = _power_profile(lambda r: _annulus_window(r, rho_in, rho_out, s), delta)
    params = {"family": "power_cutoff", "delta": delta, "rho_in": rho_in, "rho_out": rho_out, "smoothing": s}
    bps = sorted({rho_in, rho_in * (1 + s), rho_out * (1 - s), rho_out})
    return _anchored(chart, fieldspec, profile_sq, profile, rho_in, rho_out, params, bps)


def _log_window(rho, rho_in, rho_out, s):
    L = math.log(rho_out / rho_in)
    with np.errstate(divide="ignore"):
        x = np.log(np.where(rho > 0, rho, rho_in * 1e-300)) - math.log(rho_in)
    x = x / L
    a, da = kernels.smooth_step(x / s)
    b, db = kernels.smooth_step((1.0 - x) / s)
    dx = 1.0 / (np.where(rho > 0, rho, 1.0) * L)
    return a * b, (da * b - a * db) * dx / s


def log_cutoff(chart, fieldspec, delta, rho_in, rho_out, smoothing=0.4):
    """Like :func:`power_cutoff` but with ramps of fixed width in log |h|.

    The window is ``S(x/s) S((1-x)/s)`` with ``x = log(rho/rho_in)/log R``,
    so gradients of the cutoff stay O(1/log R) relative to the power profile
    however large the annulus becomes.
    """
    _check_annulus(rho_in, rho_out)
    s = float(smoothing)
    if not 0 < s <= 1:
        raise ValueError("smoothing must lie in (0, 1]")
    profile, profile_sq = _power_profile(lambda r: _log_window(r, rho_in, rho_out, s), delta)
    params = {"family": "log_cutoff", "delta": delta, "rho_in": rho_in, "rho_out": rho_out, "smoothing": s}
    R = rho_out / rho_in
    bps = sorted({rho_in, rho_in * R ** s, rho_in * R ** (1 - s), rho_out})
    return _anchored(chart, fieldspec, profile_sq, profile, rho_in, rho_out, params, bps)


def truncated_gaussian(chart, fieldspec, sigma, rho_out, smoothing=0.1):
    """exp(-|h|^2 / (2 sigma^2)) times a smooth cutoff at |h| = rho_out.

    Unlike the annulus families its support contains the zeros of h.
    """
    if sigma <= 0 or rho_out <= 0:
        raise ValueError("sigma and rho_out must be positive")
    s = float(smoothing)
    r1 = rho_out * (1 - s)

    def profile_sq(rho2):
        rho = np.sqrt(rho2)
        c, dc = kernels.smooth_step((rho_out - rho) / (s * rho_out))
        gauss = np.exp(-rho2 / (2 * sigma * sigma))
        safe = np.where(rho > 0, rho, 1.0)
        dcut = np.where(rho > 0, -dc / (s * rho_out) / (2.0 * safe), 0.0)
        return gauss * c, gauss * (dcut - c / (2 * sigma * sigma))

    def profile(rho):
        rho = np.asarray(rho, dtype=float)
        c, dc = kernels.smooth_step((rho_out - rho) / (s * rho_out))
        gauss = np.exp(-rho * rho / (2 * sigma * sigma))
        return gauss * c, gauss * (-dc / (s * rho_out) - c * rho / (sigma * sigma))

    params = {"family": "truncated_gaussian", "sigma": sigma, "rho_out": rho_out, "smoothing": s}
    return _anchored(chart, fieldspec, profile_sq, profile, 0.0, rho_out, params, (r1, rho_out))


FAMILIES = {"power_cutoff": power_cutoff, "log_cutoff": log_cutoff}


@dataclass(frozen=True)
class ExtremalFamily:
    """Descriptor for a near-extremal family swept by the sharpness module."""

    kind: str = "log_cutoff"
    delta_range: tuple = (0.0, 1.0)
    R_range: tuple = (10.0, 1e4)
    smoothing: Optional[float] = None

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise ValueError(f"unknown family {self.kind!r}; expected one of {sorted(FAMILIES)}")
        if not self.delta_range[0] < self.delta_range[1]:
            raise ValueError("delta_range must be increasing")

    def member(self, chart, fieldspec, delta, rho_in, rho_out):
        kw = {} if self.smoothing is None else {"smoothing": self.smoothing}
        return FAMILIES[self.kind](chart, fieldspec, delta, rho_in, rho_out, **kw)

    def to_dict(self):
        return {"kind": self.kind, "delta_range": list(self.delta_range), "R_range": list(self.R_range),
                "smoothing": self.smoothing}
