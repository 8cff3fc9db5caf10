"""Built-in manifolds and conformal fields with closed-form jacobians.

Identifiers accepted by :func:`build_entry` and the CLI: ``euclidean``,
``cone``, ``conformal_flat``, ``hemisphere`` and the planted non-conformal
control ``euclidean_quadratic``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParameterOutOfRange
from .fields import FieldSpec, RadialReduction
from .geometry import ManifoldChart


@dataclass(frozen=True, eq=False)
class CatalogEntry:
    chart: ManifoldChart
    field: FieldSpec
    expected: dict
    notes: str = ""
    name: str = ""
    params: dict = field(default_factory=dict)


def sphere_area(n):
    """Surface measure of the unit sphere S^{n-1} in R^n."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def _identity_batch(X):
    N, n = X.shape
    return np.broadcast_to(np.eye(n), (N, n, n)).copy()


def _dilation_field(label, zero, radial=None, params=None):
    return FieldSpec(
        components=lambda X: np.array(X, dtype=float, copy=True),
        jacobian=_identity_batch,
        zero_set=(zero,),
        label=label,
        radial=radial,
        params=params or {},
    )


def euclidean_dilation(n=3, box_half_width=1.0):
    if n not in (2, 3, 4):
        raise ParameterOutOfRange("euclidean_dilation supports n in {2, 3, 4}")
    w = float(box_half_width)
    chart = ManifoldChart(
        n=n,
        lower=-w * np.ones(n),
        upper=w * np.ones(n),
        metric=_identity_batch,
        metric_jacobian=lambda X: np.zeros((X.shape[0], n, n, n)),
        label=f"euclidean_{n}d",
        params={"n": n, "box_half_width": w},
    )
    radial = RadialReduction(weight=sphere_area(n), dim=n, div_h=float(n), rho_min=0.0, rho_max=w)
    fld = _dilation_field("dilation", np.zeros(n), radial, {"kind": "dilation"})
    return CatalogEntry(
        chart=chart,
        field=fld,
        expected={"is_conformal": True, "is_homothety": True, "mu": 2.0, "div_h": float(n)},
        notes="flat metric with the radial dilation field h = x",
        name="euclidean",
        params={"n": n, "box_half_width": w},
    )


def cone(lam=0.8, r_range=(0.5, 2.0), theta_range=(0.0, 2 * math.pi)):
    """Cone metric dr^2 + lam^2 r^2 dtheta^2 with the homothety h = r d/dr."""
    lam = float(lam)
    r0, r1 = map(float, r_range)
    t0, t1 = map(float, theta_range)
    if lam <= 0 or lam == 1.0:
        raise ParameterOutOfRange("cone needs lam > 0 and lam != 1 (lam = 1 is flat polar coordinates)")
    if not 0 < r0 < r1:
        raise ParameterOutOfRange("cone r_range must satisfy 0 < r0 < r1")
    if not t1 > t0 or t1 - t0 > 2 * math.pi + 1e-12:
        raise ParameterOutOfRange("cone theta_range must be an interval of length <= 2 pi")
    full_turn = abs((t1 - t0) - 2 * math.pi) < 1e-12
    lam2 = lam * lam

    def metric(X):
        G = np.zeros((X.shape[0], 2, 2))
        G[:, 0, 0] = 1.0
        G[:, 1, 1] = lam2 * X[:, 0] ** 2
        return G

    def metric_jacobian(X):
        dG = np.zeros((X.shape[0], 2, 2, 2))
        dG[:, 1, 1, 0] = 2.0 * lam2 * X[:, 0]
        return dG

    def components(X):
        h = np.zeros_like(X, dtype=float)
        h[:, 0] = X[:, 0]
        return h

    def jacobian(X):
        J = np.zeros((X.shape[0], 2, 2))
        J[:, 0, 0] = 1.0
        return J

    params = {"lambda": lam, "r_range": [r0, r1], "theta_range": [t0, t1]}
    chart = ManifoldChart(
        n=2,
        lower=np.array([r0, t0]),
        upper=np.array([r1, t1]),
        metric=metric,
        metric_jacobian=metric_jacobian,
        label="cone",
        periodic=(False, full_turn),
        params=params,
    )
    radial = None
    if full_turn:
        radial = RadialReduction(weight=lam * (t1 - t0), dim=2, div_h=2.0, rho_min=r0, rho_max=r1)
    fld = FieldSpec(components, jacobian, zero_set=(), label="radial_homothety", radial=radial,
                    params={"kind": "r_d_dr"})
    return CatalogEntry(
        chart=chart,
        field=fld,
        expected={"is_conformal": True, "is_homothety": True, "mu": 2.0, "div_h": 2.0},
        notes="cone apex r = 0 is excluded from the chart; h = r d/dr scales the metric by 2",
        name="cone",
        params=params,
    )


def _radial_conformal_chart(n, w, phi, dphi, label, params):
    """Chart for g = exp(2 phi(|x|^2)) delta on the box [-w, w]^n."""

    def metric(X):
        s = np.einsum("bi,bi->b", X, X)
        return np.exp(2.0 * phi(s))[:, None, None] * np.eye(n)

    def metric_jacobian(X):
        s = np.einsum("bi,bi->b", X, X)
        coef = 4.0 * dphi(s) * np.exp(2.0 * phi(s))
        return coef[:, None, None, None] * np.eye(n)[None, :, :, None] * X[:, None, None, :]

    return ManifoldChart(
        n=n,
        lower=-w * np.ones(n),
        upper=w * np.ones(n),
        metric=metric,
        metric_jacobian=metric_jacobian,
        label=label,
        params=params,
    )


def conformal_flat(kappa=0.1, n=3, box_half_width=1.5):
    """g = exp(2 kappa s e^{-s}) delta with s = |x|^2, field h = x.

    The dilation stays conformal because the conformal exponent is radial;
    its conformal factor is mu = 2 + 4 s phi'(s), which changes sign of
    (mu - 2) at s = 1.
    """
    if n not in (2, 3, 4):
        raise ParameterOutOfRange("conformal_flat supports n in {2, 3, 4}")
    kappa = float(kappa)
    w = float(box_half_width)

    def phi(s):
        return kappa * s * np.exp(-s)

    def dphi(s):
        return kappa * (1.0 - s) * np.exp(-s)

    s = np.linspace(0.0, n * w * w, 200_001)
    mu = 2.0 + 4.0 * s * dphi(s)
    if (n / 2.0) * mu.min() <= 1e-12:
        raise ParameterOutOfRange(f"div h <= 0 on the box for kappa={kappa}")
    params = {"kappa": kappa, "n": n, "box_half_width": w}
    chart = _radial_conformal_chart(n, w, phi, dphi, "conformal_flat", params)
    fld = _dilation_field("dilation", np.zeros(n), None, {"kind": "dilation"})
    homothety = kappa == 0.0
    return CatalogEntry(
        chart=chart,
        field=fld,
        expected={
            "is_conformal": True,
            "is_homothety": homothety,
            "mu_range": [float(mu.min()), float(mu.max())],
            "div_h_positive": True,
        },
        notes="radially conformally flat metric; the dilation is conformal with variable factor",
        name="conformal_flat",
        params=params,
    )


def hemisphere(n=2, cap_angle=1.2):
    """Polar cap of the round sphere in stereographic coordinates.

    In these coordinates the negative gradient of the height function is
    exactly the coordinate dilation ``h = y``; its conformal factor is twice
    the height, (1 - |y|^2)/(1 + |y|^2), which peaks at the pole.
    """
    if n not in (2, 3):
        raise ParameterOutOfRange("hemisphere supports n in {2, 3}")
    cap_angle = float(cap_angle)
    if not 0 < cap_angle < math.pi / 2:
        raise ParameterOutOfRange("cap_angle must lie in (0, pi/2)")
    w = math.tan(cap_angle / 2.0) / math.sqrt(n)

    def phi(s):
        return math.log(2.0) - np.log1p(s)

    def dphi(s):
        return -1.0 / (1.0 + s)

    params = {"n": n, "cap_angle": cap_angle}
    chart = _radial_conformal_chart(n, w, phi, dphi, "hemisphere", params)
    fld = _dilation_field("height_gradient", np.zeros(n), None, {"kind": "conformal_gradient"})
    smax = n * w * w
    return CatalogEntry(
        chart=chart,
        field=fld,
        expected={
            "is_conformal": True,
            "is_homothety": False,
            "mu_range": [2.0 * (1 - smax) / (1 + smax), 2.0],
            "div_h_positive": True,
        },
        notes="unit sphere cap around the north pole; the field vanishes at the pole",
        name="hemisphere",
        params=params,
    )


def euclidean_quadratic(n=3, box_half_width=1.0):
    """Planted non-conformal control: h = (x1^2, 0, ..., 0) on flat space."""
    base = euclidean_dilation(n, box_half_width)

    def components(X):
        h = np.zeros_like(X, dtype=float)
        h[:, 0] = X[:, 0] ** 2
        return h

    def jacobian(X):
        J = np.zeros((X.shape[0], n, n))
        J[:, 0, 0] = 2.0 * X[:, 0]
        return J

    fld = FieldSpec(components, jacobian, zero_set=(), label="quadratic", params={"kind": "quadratic"})
    return CatalogEntry(
        chart=base.chart,
        field=fld,
        expected={"is_conformal": False, "is_homothety": False},
        notes="vanishes on the hyperplane x1 = 0; deficit diag(2,-2) at (1,1) in 2d",
        name="euclidean_quadratic",
        params=base.params,
    )


CATALOG = {
    "euclidean": (euclidean_dilation, {"n": "n", "box_half_width": "box_half_width"}),
    "cone": (cone, {"lambda": "lam", "lam": "lam", "r_range": "r_range", "theta_range": "theta_range"}),
    "conformal_flat": (conformal_flat, {"kappa": "kappa", "n": "n", "box_half_width": "box_half_width"}),
    "hemisphere": (hemisphere, {"n": "n", "cap_angle": "cap_angle"}),
    "euclidean_quadratic": (euclidean_quadratic, {"n": "n", "box_half_width": "box_half_width"}),
}

CONFORMAL_NAMES = ("euclidean", "cone", "conformal_flat", "hemisphere")


def build_entry(selector):
    """Build an entry from ``{"name": ..., <params>}``."""
    if not isinstance(selector, dict) or "name" not in selector:
        raise ConfigError("catalog selector must be an object with a 'name' key")
    name = selector["name"]
    if name not in CATALOG:
        raise ConfigError(f"unknown catalog entry {name!r}; known: {sorted(CATALOG)}")
    factory, mapping = CATALOG[name]
    kwargs = {}
    for key, value in selector.items():
        if key == "name":
            continue
        if key not in mapping:
            raise ConfigError(f"catalog entry {name!r} has no parameter {key!r}")
        kwargs[mapping[key]] = value
    return factory(**kwargs)


def default_entries():
    """One instance of every conformal catalog entry, as used by self-tests."""
    return [
        euclidean_dilation(2),
        euclidean_dilation(3),
        euclidean_dilation(4),
        cone(),
        conformal_flat(),
        conformal_flat(n=2),
        hemisphere(2),
        hemisphere(3),
    ]


def affine_chart(lower, upper, constant, linear=None, label="affine"):
    """Chart with g(x) = C + sum_k x_k L_k; ``linear[k]`` is L_k."""
    C = np.asarray(constant, dtype=float)
    n = C.shape[0]
    L = np.zeros((n, n, n)) if linear is None else np.asarray(linear, dtype=float)
    if C.shape != (n, n) or L.shape != (n, n, n):
        raise ConfigError("affine metric tables must be n x n and n x n x n")
    dG = np.moveaxis(L, 0, -1)  # [i, j, k] = d_k g_ij

    return ManifoldChart(
        n=n,
        lower=lower,
        upper=upper,
        metric=lambda X: C[None] + np.einsum("bk,kij->bij", X, L),
        metric_jacobian=lambda X: np.broadcast_to(dG, (X.shape[0],) + dG.shape).copy(),
        label=label,
        params={"constant": C.tolist(), "linear": L.tolist()},
    )


def affine_field(offset, matrix, label="affine"):
    c = np.asarray(offset, dtype=float)
    A = np.asarray(matrix, dtype=float)
    zeros = ()
    if abs(np.linalg.det(A)) > 1e-12:
        zeros = (np.linalg.solve(A, -c),)
    return FieldSpec(
        components=lambda X: c[None] + X @ A.T,
        jacobian=lambda X: np.broadcast_to(A, (X.shape[0],) + A.shape).copy(),
        zero_set=zeros,
        label=label,
        params={"offset": c.tolist(), "matrix": A.tolist()},
    )


def entry_from_manifest(manifest):
    """Build a :class:`CatalogEntry` from a chart manifest (see docs/manifest.md)."""
    try:
        metric = manifest["metric"]
    except (TypeError, KeyError):
        raise ConfigError("manifest needs a 'metric' section") from None
    if "catalog" in metric:
        entry = build_entry({"name": metric["catalog"], **metric.get("params", {})})
        box = manifest.get("box")
        if box is not None:
            chart = entry.chart
            chart = ManifoldChart(
                n=chart.n,
                lower=box["lower"],
                upper=box["upper"],
                metric=chart.metric,
                metric_jacobian=chart.metric_jacobian,
                label=chart.label,
                periodic=chart.periodic,
                params=chart.params,
            )
            entry = CatalogEntry(chart, entry.field, entry.expected, entry.notes, entry.name, entry.params)
        if "dimension" in manifest and manifest["dimension"] != entry.chart.n:
            raise ConfigError("manifest dimension disagrees with the catalog metric")
        return entry
    if "affine" in metric:
        box = manifest.get("box")
        if box is None:
            raise ConfigError("affine manifests need a 'box'")
        chart = affine_chart(box["lower"], box["upper"], metric["affine"]["constant"],
                             metric["affine"].get("linear"), label=manifest.get("label", "affine"))
        if "dimension" in manifest and manifest["dimension"] != chart.n:
            raise ConfigError("manifest dimension disagrees with the metric tables")
        fspec = manifest.get("field")
        if fspec is None or "affine" not in fspec:
            raise ConfigError("affine manifests need an affine 'field' section")
        fld = affine_field(fspec["affine"]["offset"], fspec["affine"]["matrix"])
        return CatalogEntry(chart, fld, expected={}, notes="manifest", name="manifest", params=dict(manifest))
    raise ConfigError("metric section must select 'catalog' or 'affine'")
