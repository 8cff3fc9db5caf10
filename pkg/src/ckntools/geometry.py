"""Coordinate-chart Riemannian geometry.

Every operation accepts either a single point of shape ``(n,)`` or a batch of
shape ``(N, n)`` and returns results with a matching leading batch axis (or
none, for a single point).  Index layouts follow :mod:`ckntools.kernels`.

Metric and field derivatives are always the analytic jacobians supplied with
the chart/field; finite differences appear only in :func:`audit_chart` and
:func:`audit_field_jacobian`.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import kernels
from .errors import SingularMetric

DEBUG = os.environ.get("CKNTOOLS_DEBUG", "").strip().lower() in {"1", "true", "yes", "on"}

ArrayFn = Callable[[np.ndarray], np.ndarray]


def as_batch(x, n):
    """Return ``(X, single)`` with ``X`` of shape (N, n)."""
    X = np.asarray(x, dtype=float)
    if X.ndim == 1:
        if X.shape[0] != n:
            raise ValueError(f"point has {X.shape[0]} coordinates, chart dimension is {n}")
        return X[None, :], True
    if X.ndim != 2 or X.shape[1] != n:
        raise ValueError(f"expected points of shape (N, {n}), got {X.shape}")
    return X, False


def _unbatch(arr, single):
    return arr[0] if single else arr


@dataclass(frozen=True, eq=False)
class ManifoldChart:
    """One axis-aligned coordinate box with a metric and its analytic jacobian.

    ``metric(X)`` maps (N, n) points to (N, n, n) components ``g_ij`` and
    ``metric_jacobian(X)`` to (N, n, n, n) with ``[b, i, j, k] = d_k g_ij``.
    ``periodic`` flags coordinates whose box edges are identified (the
    angular coordinate of a full cone, for instance); test-function supports
    may wrap across those edges.
    """

    n: int
    lower: np.ndarray
    upper: np.ndarray
    metric: ArrayFn
    metric_jacobian: ArrayFn
    label: str = "chart"
    periodic: tuple = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if self.n < 1 or lo.shape != (self.n,) or hi.shape != (self.n,):
            raise ValueError("chart bounds must have one entry per dimension")
        if not np.all(hi > lo):
            raise ValueError("chart box must have upper > lower on every axis")
        per = tuple(bool(p) for p in self.periodic) or (False,) * self.n
        if len(per) != self.n:
            raise ValueError("periodic flags must have one entry per dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "periodic", per)
        # cheap structural checks at the centre and the corners
        corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(self.n, -1).T
        pts = np.vstack([0.5 * (lo + hi), corners])
        G = self.metric(pts)
        if G.shape != (len(pts), self.n, self.n):
            raise ValueError(f"metric returned shape {G.shape}")
        if not np.allclose(G, np.swapaxes(G, 1, 2), rtol=0, atol=1e-14 * max(1.0, np.abs(G).max())):
            raise ValueError("metric is not symmetric")
        _, _, ok = kernels.spd_inverse(G)
        if not ok.all():
            raise SingularMetric(f"metric of chart {self.label!r} is not positive definite at a box corner")

    @property
    def widths(self):
        return self.upper - self.lower

    @property
    def diameter(self):
        return float(np.linalg.norm(self.widths))

    @property
    def box_volume(self):
        return float(np.prod(self.widths))

    def contains(self, x, atol=0.0):
        X, single = as_batch(x, self.n)
        inside = np.all((X >= self.lower - atol) & (X <= self.upper + atol), axis=1)
        return bool(inside[0]) if single else inside


@dataclass(frozen=True)
class SymTensor2Up:
    """Symmetric contravariant 2-tensor stored as its packed upper triangle."""

    packed: np.ndarray
    n: int

    @classmethod
    def from_matrix(cls, M):
        M = np.asarray(M, dtype=float)
        n = M.shape[-1]
        iu = np.triu_indices(n)
        return cls(packed=0.5 * (M + np.swapaxes(M, -1, -2))[..., iu[0], iu[1]], n=n)

    @property
    def matrix(self):
        iu = np.triu_indices(self.n)
        M = np.zeros(self.packed.shape[:-1] + (self.n, self.n))
        M[..., iu[0], iu[1]] = self.packed
        M[..., iu[1], iu[0]] = self.packed
        return M


class LocalGeometry(NamedTuple):
    X: np.ndarray
    G: np.ndarray
    Ginv: np.ndarray
    logdet: np.ndarray
    dG: np.ndarray
    Gamma: np.ndarray


def local_geometry(chart: ManifoldChart, X: np.ndarray, with_connection=True) -> LocalGeometry:
    """Metric, inverse, log det and Christoffels at a batch of points."""
    G = np.asarray(chart.metric(X), dtype=float)
    Ginv, logdet, ok = kernels.spd_inverse(G)
    if not ok.all():
        bad = X[~ok][0]
        raise SingularMetric(f"metric factorization failed at {bad.tolist()} in chart {chart.label!r}")
    if with_connection:
        dG = np.asarray(chart.metric_jacobian(X), dtype=float)
        Gamma = kernels.christoffel(Ginv, dG)
    else:
        dG = Gamma = None
    return LocalGeometry(X, G, Ginv, logdet, dG, Gamma)


def metric_at(chart, x):
    X, single = as_batch(x, chart.n)
    return _unbatch(np.asarray(chart.metric(X), dtype=float), single)


def inverse_metric(chart, x):
    X, single = as_batch(x, chart.n)
    return _unbatch(local_geometry(chart, X, with_connection=False).Ginv, single)


def volume_element(chart, x):
    """sqrt(det g)."""
    X, single = as_batch(x, chart.n)
    geo = local_geometry(chart, X, with_connection=False)
    return _unbatch(np.exp(0.5 * geo.logdet), single)


def christoffel(chart, x):
    """Christoffel symbols of the second kind, ``[..., k, i, j] = Gamma^k_ij``."""
    X, single = as_batch(x, chart.n)
    return _unbatch(local_geometry(chart, X).Gamma, single)


class FieldData(NamedTuple):
    h: np.ndarray  # (N, n) components h^i
    J: np.ndarray  # (N, n, n) d_k h^i at [b, i, k]
    D: np.ndarray  # (N, n, n) nabla_k h^j at [b, k, j]
    div: np.ndarray
    norm2: np.ndarray


def field_data(chart, fieldspec, geo: LocalGeometry) -> FieldData:
    h = np.asarray(fieldspec.components(geo.X), dtype=float)
    J = np.asarray(fieldspec.jacobian(geo.X), dtype=float)
    D = kernels.covariant_jacobian(J, geo.Gamma, h)
    div = np.trace(D, axis1=1, axis2=2)
    if DEBUG:
        alt = _density_divergence(geo, h, J)
        scale = np.maximum(np.abs(div), np.abs(alt)) + 1e-300
        assert np.all(np.abs(div - alt) <= 1e-10 * scale + 1e-14), "divergence formulas disagree"
    norm2 = kernels.quad_form(geo.G, h, h)
    return FieldData(h, J, D, div, norm2)


def _density_divergence(geo, h, J):
    return kernels.density_divergence(geo.Ginv, geo.dG, h, J)


def covariant_divergence(chart, fieldspec, x, method="connection"):
    """div h = nabla_i h^i.

    ``method="connection"`` contracts d_i h^i + Gamma^i_ik h^k;
    ``method="density"`` evaluates (1/sqrt g) d_i (sqrt g h^i) through the
    analytic log-determinant derivative.
    """
    X, single = as_batch(x, chart.n)
    geo = local_geometry(chart, X)
    if method == "connection":
        out = field_data(chart, fieldspec, geo).div
    elif method == "density":
        out = _density_divergence(
            geo, np.asarray(fieldspec.components(X), float), np.asarray(fieldspec.jacobian(X), float)
        )
    else:
        raise ValueError(f"unknown divergence method {method!r}")
    return _unbatch(out, single)


def covariant_jacobian(chart, fieldspec, x):
    """nabla_k h^j with layout ``[..., k, j]``."""
    X, single = as_batch(x, chart.n)
    geo = local_geometry(chart, X)
    return _unbatch(field_data(chart, fieldspec, geo).D, single)


def covariant_deriv_up(chart, fieldspec, x):
    """nabla^i h^j = g^{ik} nabla_k h^j, layout ``[..., i, j]``."""
    X, single = as_batch(x, chart.n)
    geo = local_geometry(chart, X)
    D = field_data(chart, fieldspec, geo).D
    return _unbatch(np.einsum("bik,bkj->bij", geo.Ginv, D), single)


def field_norm(chart, fieldspec, x):
    X, single = as_batch(x, chart.n)
    G = np.asarray(chart.metric(X), dtype=float)
    h = np.asarray(fieldspec.components(X), dtype=float)
    n2 = kernels.quad_form(G, h, h)
    return _unbatch(np.sqrt(np.maximum(n2, 0.0)), single)


def gradient_norm(chart, u, x):
    """|grad u| = sqrt(g^{ij} d_i u d_j u) for a test function ``u``."""
    X, single = as_batch(x, chart.n)
    geo = local_geometry(chart, X, with_connection=False)
    du = np.asarray(u.gradient(X), dtype=float)
    return _unbatch(np.sqrt(np.maximum(kernels.quad_form(geo.Ginv, du, du), 0.0)), single)


def _central_difference(fn, X, step):
    """d_k fn at [..., k] appended as the last axis."""
    cols = []
    for k in range(X.shape[1]):
        e = np.zeros(X.shape[1])
        e[k] = step
        cols.append((np.asarray(fn(X + e)) - np.asarray(fn(X - e))) / (2 * step))
    return np.stack(cols, axis=-1)


def random_points(chart, count, rng, margin=1e-3):
    lo = chart.lower + margin * chart.widths
    hi = chart.upper - margin * chart.widths
    return rng.uniform(lo, hi, size=(count, chart.n))


def audit_chart(chart, rng=None, samples=20, step=1e-5):
    """Finite-difference and algebraic audit of a chart at random points.

    Returns a dict with the worst symmetry defect, the smallest Cholesky
    pivot outcome and the worst relative jacobian mismatch.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    X = random_points(chart, samples, rng, margin=max(2 * step / chart.widths.min(), 1e-3))
    G = chart.metric(X)
    _, _, ok = kernels.spd_inverse(G)
    dG = chart.metric_jacobian(X)
    fd = _central_difference(chart.metric, X, step)
    scale = max(1.0, float(np.abs(dG).max()))
    return {
        "symmetry_defect": float(np.abs(G - np.swapaxes(G, 1, 2)).max()),
        "positive_definite": bool(ok.all()),
        "jacobian_rel_error": float(np.abs(dG - fd).max() / scale),
    }


def audit_field_jacobian(chart, fieldspec, rng=None, samples=20, step=1e-5):
    rng = np.random.default_rng(0) if rng is None else rng
    X = random_points(chart, samples, rng, margin=max(2 * step / chart.widths.min(), 1e-3))
    J = fieldspec.jacobian(X)
    fd = _central_difference(fieldspec.components, X, step)
    return float(np.abs(J - fd).max() / max(1.0, float(np.abs(J).max())))
