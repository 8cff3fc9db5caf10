"""Integration of (possibly vector-valued) integrands against sqrt(det g) dx.

Two schemes share one cell engine.  ``tensor_gauss`` is a composite
Gauss-Legendre product rule; ``adaptive_subdivision`` bisects the cells with
the largest error estimate until the summed estimate is below
``rel_tol * int |f|``.  Each cell carries an N-point and an (N+2)-point rule;
the error estimate is their difference.

Known zeros of the field are handled by a smooth partition of unity: a
C-infinity cutoff isolates a ball around each interior zero, which is then
integrated in log-polar coordinates ``(log r, angles)`` from the excision
radius outwards.  In those coordinates the r**(n-1) volume factor absorbs
point singularities |x - z|**(-s), so the remainder seen by the cell rules is
smooth.  Zeros that cannot be isolated that way (too close to the boundary)
fall back to masking nodes inside the excision ball.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import BudgetExceeded, NonFiniteIntegrand, SingularMetric

KINDS = ("tensor_gauss", "adaptive_subdivision")
CHUNK_POINTS = 200_000


@dataclass(frozen=True)
class QuadratureScheme:
    kind: str = "adaptive_subdivision"
    points_per_axis: int = 6
    max_depth: int = 12
    rel_tol: float = 1e-6
    excision_radius: float = 0.0
    cells_per_axis: int = 1
    max_evaluations: int = 40_000_000

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown quadrature kind {self.kind!r}")
        if self.points_per_axis < 2:
            raise ValueError("points_per_axis must be >= 2")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")
        if self.excision_radius < 0:
            raise ValueError("excision_radius must be >= 0")
        if self.max_depth < 0 or self.cells_per_axis < 1:
            raise ValueError("max_depth must be >= 0 and cells_per_axis >= 1")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class IntegralResult:
    value: object
    error_estimate: object
    excised_volume_fraction: float
    scheme_echo: object
    evaluations: int = 0

    def to_dict(self):
        def conv(v):
            return np.asarray(v).tolist() if isinstance(v, np.ndarray) else v

        echo = self.scheme_echo.to_dict() if hasattr(self.scheme_echo, "to_dict") else self.scheme_echo
        return {
            "value": conv(self.value),
            "error_estimate": conv(self.error_estimate),
            "excised_volume_fraction": self.excised_volume_fraction,
            "scheme_echo": echo,
            "evaluations": self.evaluations,
        }


@lru_cache(maxsize=None)
def gauss_legendre(m):
    """Nodes and weights of the m-point Gauss-Legendre rule on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def tensor_rule(m, d):
    x, w = gauss_legendre(m)
    nodes = np.stack(np.meshgrid(*([x] * d), indexing="ij"), axis=-1).reshape(-1, d)
    weights = np.prod(np.stack(np.meshgrid(*([w] * d), indexing="ij"), axis=-1).reshape(-1, d), axis=1)
    return nodes, weights


def _tree_sum(a):
    """Pairwise sum over the leading axis, in index order."""
    a = np.asarray(a)
    return np.ascontiguousarray(np.moveaxis(a, 0, -1)).sum(axis=-1)


class _Engine:
    """Cell-rule evaluation shared by both schemes."""

    def __init__(self, fn, d, m):
        self.fn = fn
        self.d = d
        self.m = m
        self.rules = (tensor_rule(m, d), tensor_rule(m + 2, d))
        self.evaluations = 0
        self.ncomp = None
        self.vector = None

    def _call(self, P):
        vals = np.asarray(self.fn(P), dtype=float)
        if self.vector is None:
            self.vector = vals.ndim == 2
        vals = vals.reshape(len(P), -1)
        if self.ncomp is None:
            self.ncomp = vals.shape[1]
        if not np.all(np.isfinite(vals)):
            bad = P[~np.all(np.isfinite(vals), axis=1)][0]
            raise NonFiniteIntegrand(f"integrand is not finite at {bad.tolist()}")
        self.evaluations += len(P)
        return vals

    def cell_values(self, lo, w, indicators=False):
        """Return (Q_m, Q_{m+2}) of shape (C, k) for cells lo + [0, w].

        With ``indicators`` also return a (C, d, k) array measuring, per
        axis, the size of the two highest Legendre coefficients of the
        integrand on the finer rule's nodes; the adaptive scheme splits each
        cell along the axis where it is largest.
        """
        out = []
        inds = []
        for r, (nodes, weights) in enumerate(self.rules):
            q = len(weights)
            per_chunk = max(1, CHUNK_POINTS // q)
            parts = []
            for start in range(0, len(lo), per_chunk):
                clo = lo[start:start + per_chunk]
                cw = w[start:start + per_chunk]
                P = (clo[:, None, :] + cw[:, None, :] * nodes[None]).reshape(-1, self.d)
                vals = self._call(P).reshape(len(clo), q, -1)
                vol = np.prod(cw, axis=1)[:, None]
                parts.append(np.einsum("p,cpk->ck", weights, vals) * vol)
                if indicators and r == 1:
                    inds.append(self._axis_indicators(vals) * vol[:, None, :])
            out.append(np.concatenate(parts, axis=0))
        if indicators:
            return out[0], out[1], np.concatenate(inds, axis=0)
        return out[0], out[1]

    def _axis_indicators(self, vals):
        M = self.m + 2
        d = self.d
        x, w = gauss_legendre(M)
        leg = np.polynomial.legendre.legvander(2.0 * x - 1.0, M - 1)[:, -2:]  # P_{M-2}, P_{M-1}
        proj = w[:, None] * leg * (2.0 * np.arange(M - 2, M) + 1.0)
        other = tensor_rule(M, d - 1)[1] if d > 1 else np.ones(1)
        C, _, k = vals.shape
        grid = vals.reshape((C,) + (M,) * d + (k,))
        res = np.empty((C, d, k))
        for j in range(d):
            A = np.moveaxis(grid, 1 + j, -2).reshape(C, -1, M, k)
            coef = np.abs(np.einsum("cpmk,mt->cptk", A, proj)).sum(axis=2)
            res[:, j, :] = np.einsum("p,cpk->ck", other, coef)
        return res


def _coarse(x, bits=30):
    """Round mantissas to ``bits`` bits so refinement choices ignore last-ulp noise.

    Integrands that differ only by a constant factor then refine the same
    cells and split along the same axes.
    """
    m, e = np.frexp(np.asarray(x, dtype=float))
    return np.ldexp(np.round(m * (1 << bits)) / (1 << bits), e)


def _split_axis(lo, w, axis):
    """Halve each cell along its own axis; children are (left cells, right cells)."""
    rows = np.arange(len(lo))
    half = w.copy()
    half[rows, axis] *= 0.5
    right = lo.copy()
    right[rows, axis] += half[rows, axis]
    return np.concatenate([lo, right]), np.concatenate([half, half])


def _tensor(fn, lo, hi, scheme):
    d = len(lo)
    eng = _Engine(fn, d, scheme.points_per_axis)
    c = scheme.cells_per_axis
    w = (hi - lo) / c
    idx = np.stack(np.meshgrid(*([np.arange(c)] * d), indexing="ij"), axis=-1).reshape(-1, d)
    clo = lo[None] + idx * w[None]
    cw = np.broadcast_to(w, clo.shape).copy()
    qa, qb = eng.cell_values(clo, cw)
    return _tree_sum(qa), _tree_sum(np.abs(qb - qa)), _tree_sum(np.abs(qb)), eng


def _adaptive(fn, lo, hi, scheme):
    d = len(lo)
    eng = _Engine(fn, d, scheme.points_per_axis)
    per_cell = len(eng.rules[0][1]) + len(eng.rules[1][1])
    clo, cw = lo[None].astype(float), (hi - lo)[None].astype(float)
    depth = np.zeros((1, d), dtype=int)
    qa, qb, ind = eng.cell_values(clo, cw, indicators=True)
    while True:
        err = np.abs(qb - qa)
        errsum = _tree_sum(err)
        tol = scheme.rel_tol * _tree_sum(np.abs(qb))
        failing = np.nonzero(errsum > tol)[0]
        if failing.size == 0:
            break
        open_axes = depth < scheme.max_depth
        refinable = open_axes.any(axis=1)
        select = np.zeros(len(depth), dtype=bool)
        stuck = False
        for j in failing:
            frozen = _tree_sum(err[~refinable, j]) if (~refinable).any() else 0.0
            if frozen > tol[j]:
                stuck = True
                break
            excess = errsum[j] - 0.5 * tol[j]
            cand = np.nonzero(refinable)[0]
            order = cand[np.argsort(-_coarse(err[cand, j]), kind="stable")]
            cum = np.cumsum(err[order, j])
            take = min(len(order), int(np.searchsorted(cum, excess)) + 1)
            select[order[:take]] = True
        if stuck or not select.any():
            raise BudgetExceeded(
                f"adaptive quadrature reached max_depth={scheme.max_depth} before rel_tol={scheme.rel_tol}",
                _partial(qb, err, eng),
            )
        n_new = 2 * int(select.sum())
        if eng.evaluations + n_new * per_cell > scheme.max_evaluations:
            raise BudgetExceeded(
                f"adaptive quadrature would exceed max_evaluations={scheme.max_evaluations}",
                _partial(qb, err, eng),
            )
        # split axis: largest indicator, weighted by how far each failing component is from tolerance
        scale = np.where(errsum > tol, 1.0 / np.maximum(tol, 1e-300), 0.0)
        score = _coarse(np.einsum("cdk,k->cd", ind[select], scale))
        score = np.where(open_axes[select], score, -1.0)
        axis = np.argmax(score, axis=1)
        nlo, nw = _split_axis(clo[select], cw[select], axis)
        na, nb, nind = eng.cell_values(nlo, nw, indicators=True)
        child_depth = depth[select].copy()
        child_depth[np.arange(len(axis)), axis] += 1
        keep = ~select
        clo = np.concatenate([clo[keep], nlo])
        cw = np.concatenate([cw[keep], nw])
        depth = np.concatenate([depth[keep], child_depth, child_depth])
        qa = np.concatenate([qa[keep], na])
        qb = np.concatenate([qb[keep], nb])
        ind = np.concatenate([ind[keep], nind])
    return _tree_sum(qb), _tree_sum(np.abs(qb - qa)), _tree_sum(np.abs(qb)), eng


def _partial(qb, err, eng):
    return IntegralResult(_tree_sum(qb), _tree_sum(err), 0.0, None, eng.evaluations)


def _run(fn, lo, hi, scheme):
    if scheme.kind == "tensor_gauss":
        return _tensor(fn, lo, hi, scheme)
    return _adaptive(fn, lo, hi, scheme)


def ball_volume(n, r):
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * r ** n


def _sqrt_det(chart, X):
    _, logdet, ok = kernels.spd_inverse(np.asarray(chart.metric(X), dtype=float))
    if not ok.all():
        raise SingularMetric(f"metric not positive definite at {X[~ok][0].tolist()}")
    return np.exp(0.5 * logdet)


def _apply(integrand, X):
    vals = np.asarray(integrand(X), dtype=float)
    return vals


def _weighted(vals, factor):
    return vals * (factor if vals.ndim == 1 else factor[:, None])


def sphere_map(angles):
    """Unit vectors and angular jacobian for hyperspherical angles.

    ``angles`` has shape (P, n-1): theta_1..theta_{n-2} in [0, pi] and the
    last angle in [0, 2 pi].
    """
    P, m = angles.shape
    n = m + 1
    omega = np.empty((P, n))
    sin_prod = np.ones(P)
    jac = np.ones(P)
    for i in range(m):
        omega[:, i] = sin_prod * np.cos(angles[:, i])
        if i < m - 1:
            jac *= np.sin(angles[:, i]) ** (n - 2 - i)
        sin_prod = sin_prod * np.sin(angles[:, i])
    omega[:, n - 1] = sin_prod
    return omega, jac


def _cutoff(r, radius):
    """Radial cutoff: 1 for r <= radius/2, 0 for r >= radius, C^3 in between.

    It is a polynomial in r^2 on each piece, hence piecewise polynomial in
    Cartesian coordinates; Gauss cells away from the two kink spheres
    integrate it exactly.
    """
    t = np.clip((radius * radius - r * r) / (0.75 * radius * radius), 0.0, 1.0)
    return t ** 4 * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t)))


def _radial_pieces(eps, R):
    """Radial sub-ranges of a log-polar patch as (lo, hi, mapped).

    The ramp of the cutoff on [R/2, R] gets its own piece in tau = log r.
    Inside R/2, eps > 0 gives tau on [log eps, log R/2]; eps = 0 uses
    t in [0, 1) with r = (R/2) exp(-t/(1-t)), which reaches the zero itself.
    """
    half = 0.5 * R
    pieces = [(math.log(half), math.log(R), False)]
    if eps <= 0:
        pieces.insert(0, (0.0, 1.0, True))
    elif eps < half:
        pieces.insert(0, (math.log(eps), math.log(half), False))
    else:
        pieces = [(math.log(eps), math.log(R), False)]
    return pieces


def _plan_zeros(lo, hi, zeros, eps, n):
    """Split zeros into log-polar patches (z, R) and masked balls."""
    polar, masked = [], []
    inside = [z for z in zeros if np.all(z > lo) and np.all(z < hi)]
    for z in zeros:
        is_inside = any(z is w for w in inside)
        if is_inside and n >= 2:
            dist_b = float(min(np.min(z - lo), np.min(hi - z)))
            others = [float(np.linalg.norm(z - w)) for w in inside if w is not z]
            R = min([0.9 * dist_b] + [0.45 * o for o in others])
            if R > 2.0 * eps and R > 0:
                polar.append((z, R))
                continue
        if eps > 0:
            gap = np.maximum(np.maximum(lo - z, z - hi), 0.0)
            if np.linalg.norm(gap) < eps:
                masked.append(z)
    return polar, masked


def _excised_fraction(lo, hi, balls, eps, n):
    if eps <= 0 or not balls:
        return 0.0
    vol_box = float(np.prod(hi - lo))
    total = 0.0
    need_qmc = []
    for z in balls:
        if np.all(z - eps >= lo) and np.all(z + eps <= hi):
            total += ball_volume(n, eps)
        else:
            need_qmc.append(z)
    if need_qmc:
        from scipy.stats import qmc

        pts = lo + (hi - lo) * qmc.Halton(d=n, scramble=False).random(2 ** 18)
        hit = np.zeros(len(pts), dtype=bool)
        for z in need_qmc:
            hit |= np.linalg.norm(pts - z, axis=1) < eps
        total += hit.mean() * vol_box
    return min(1.0, total / vol_box)


def integrate(chart, integrand, scheme=None, zeros=(), domain=None, volume_included=False):
    """Integrate ``integrand(X) * sqrt(det g(X))`` over a box minus excision balls.

    ``integrand`` maps (P, n) points to (P,) or (P, k) values.  ``zeros`` are
    the field zeros around which balls of radius ``scheme.excision_radius``
    are removed; ``domain`` optionally restricts to a sub-box ``(lo, hi)`` of
    the chart (the support of the test function, typically).  Pass
    ``volume_included=True`` when the integrand already carries sqrt(det g).
    """
    scheme = QuadratureScheme() if scheme is None else scheme
    n = chart.n
    if domain is None:
        lo, hi = chart.lower.copy(), chart.upper.copy()
    else:
        lo = np.maximum(np.asarray(domain[0], float), chart.lower)
        hi = np.minimum(np.asarray(domain[1], float), chart.upper)
        if not np.all(hi > lo):
            raise ValueError("integration domain does not overlap the chart")
    eps = float(scheme.excision_radius)
    zeros = [np.asarray(z, dtype=float).reshape(n) for z in zeros]
    if scheme.kind == "tensor_gauss":
        polar, masked = [], [z for z in zeros if eps > 0]
    else:
        polar, masked = _plan_zeros(lo, hi, zeros, eps, n)

    def volume(X):
        return np.ones(len(X)) if volume_included else _sqrt_det(chart, X)

    def outer(X):
        factor = volume(X)
        live = np.ones(len(X), dtype=bool)
        for z, R in polar:
            r = np.linalg.norm(X - z, axis=1)
            live &= r > 0.5 * R
            factor = factor * np.where(r > 0.5 * R, 1.0 - _cutoff(r, R), 0.0)
        for z in masked:
            live &= np.linalg.norm(X - z, axis=1) >= eps
        if live.all():
            return _weighted(_apply(integrand, X), factor)
        out = None
        if live.any():
            sub = _weighted(_apply(integrand, X[live]), factor[live])
            out = np.zeros((len(X),) + sub.shape[1:])
            out[live] = sub
            return out
        probe = _apply(integrand, X[:1])
        return np.zeros((len(X),) + probe.shape[1:])

    value, err, absval, eng = _run(outer, lo, hi, scheme)
    evaluations = eng.evaluations
    vector = eng.vector

    for z, R in polar:
        for t_lo, t_hi, mapped in _radial_pieces(eps, R):
            plo = np.concatenate([[t_lo], np.zeros(n - 1)])
            phi = np.concatenate([[t_hi], np.full(n - 2, math.pi), [2 * math.pi]])

            def inner(T, z=z, R=R, mapped=mapped):
                if mapped:
                    t = T[:, 0]
                    r = 0.5 * R * np.exp(-t / (1.0 - t))
                    rjac = r ** n / (1.0 - t) ** 2
                else:
                    r = np.exp(T[:, 0])
                    rjac = r ** n
                omega, ajac = sphere_map(T[:, 1:])
                live = r > 1e-60 * R
                X = z + r[live, None] * omega[live]
                factor = volume(X) * _cutoff(r[live], R) * ajac[live] * rjac[live]
                sub = _weighted(_apply(integrand, X), factor) if live.any() else None
                if live.all():
                    return sub
                probe = sub if sub is not None else _apply(integrand, (z + R * omega[:1]))
                out = np.zeros((len(T),) + probe.shape[1:])
                if sub is not None:
                    out[live] = sub
                return out

            v2, e2, a2, eng2 = _run(inner, plo, phi, scheme)
            value = value + v2
            err = err + e2
            absval = absval + a2
            evaluations += eng2.evaluations
            vector = vector if vector is not None else eng2.vector

    if not vector:
        value, err = float(np.ravel(value)[0]), float(np.ravel(err)[0])
    balls = [z for z, _ in polar] + masked
    return IntegralResult(
        value=value,
        error_estimate=err,
        excised_volume_fraction=_excised_fraction(lo, hi, balls, eps, n),
        scheme_echo=scheme,
        evaluations=evaluations,
    )


def excision_limit_study(chart, integrand, scheme, epsilons, zeros, domain=None, volume_included=False):
    """Integrate once per excision radius (strictly decreasing, positive)."""
    eps = [float(e) for e in epsilons]
    if not eps or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be positive and strictly decreasing")
    return [integrate(chart, integrand, scheme.replace(excision_radius=e), zeros, domain, volume_included)
            for e in eps]


def cauchy_summary(results, rel_tol=1e-6, contraction=0.9):
    """Judge an excision study component by component.

    A component converges when its last successive difference is at the
    quadrature noise level (``10 * rel_tol`` of the value) or when every
    difference is at most ``contraction`` times the previous one, i.e. the
    tail behaves like a convergent geometric series in the decades of eps.
    Logarithmic divergence gives a ratio of one and fails.
    """
    vals = np.array([np.ravel(np.asarray(r.value, dtype=float)) for r in results])
    diffs = np.abs(np.diff(vals, axis=0))
    if len(diffs) == 0:
        return {"converged": True, "per_component": [True] * vals.shape[1], "diffs": [], "ratios": []}
    noise = diffs[-1] <= 10.0 * rel_tol * np.abs(vals[-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(diffs[:-1] > 0, diffs[1:] / diffs[:-1], np.where(diffs[1:] > 0, np.inf, 0.0))
    contracting = np.all(ratios <= contraction, axis=0) if len(ratios) else np.zeros(vals.shape[1], bool)
    ok = noise | contracting
    return {
        "converged": bool(ok.all()),
        "per_component": ok.tolist(),
        "diffs": diffs.tolist(),
        "ratios": np.asarray(ratios).tolist(),
    }


def radial_integrate(f, r_lo, r_hi, dim, weight=1.0, breakpoints=(), rel_tol=1e-11, points=16,
                     max_panels=1 << 14):
    """weight * int_{r_lo}^{r_hi} f(r) r**(dim-1) dr by composite Gauss-Legendre.

    Segments between breakpoints with a positive left end are integrated in
    the variable log r; panels double until successive totals agree to
    ``rel_tol`` of the absolute integral.
    """
    if not r_hi > r_lo >= 0:
        raise ValueError("need 0 <= r_lo < r_hi")
    cuts = sorted({float(r_lo), float(r_hi), *[float(b) for b in breakpoints if r_lo < b < r_hi]})
    x, w = gauss_legendre(points)
    value = err = absval = None
    evaluations = 0
    vector = False

    def seg_sum(a, b, panels):
        nonlocal evaluations, vector
        logvar = a > 0
        ta, tb = (math.log(a), math.log(b)) if logvar else (a, b)
        edges = np.linspace(ta, tb, panels + 1)
        h = np.diff(edges)
        t = (edges[:-1, None] + h[:, None] * x[None]).ravel()
        wt = (h[:, None] * w[None]).ravel()
        r = np.exp(t) if logvar else t
        jac = r ** dim if logvar else r ** (dim - 1)
        vals = np.asarray(f(r), dtype=float)
        vector = vals.ndim == 2
        vals = vals.reshape(len(r), -1)
        if not np.all(np.isfinite(vals)):
            raise NonFiniteIntegrand("radial integrand is not finite")
        evaluations += len(r)
        contrib = vals * (wt * jac)[:, None]
        return _tree_sum(contrib), _tree_sum(np.abs(contrib))

    for a, b in zip(cuts[:-1], cuts[1:]):
        panels = 1
        prev, _ = seg_sum(a, b, panels)
        while True:
            panels *= 2
            cur, cabs = seg_sum(a, b, panels)
            delta = np.abs(cur - prev)
            if np.all(delta <= rel_tol * np.maximum(cabs, 1e-300)) or np.all(delta == 0):
                break
            if panels >= max_panels:
                raise BudgetExceeded(f"radial quadrature did not converge on [{a}, {b}]",
                                     IntegralResult(cur, delta, 0.0, None, evaluations))
            prev = cur
        value = cur if value is None else value + cur
        err = delta if err is None else err + delta
        absval = cabs if absval is None else absval + cabs
    value = weight * value
    err = abs(weight) * err
    if not vector:
        value, err = float(value[0]), float(err[0])
    echo = {"kind": "radial_gauss", "points": points, "rel_tol": rel_tol, "dim": dim}
    return IntegralResult(value, err, 0.0, echo, evaluations)
