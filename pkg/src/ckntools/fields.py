"""Conformal Killing analysis of vector fields on a chart."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .errors import TooCloseToZeroSet
from .geometry import (
    SymTensor2Up,
    _density_divergence,
    _unbatch,
    as_batch,
    field_data,
    local_geometry,
)

EPS_NORM = 1e-30
EXCISION_FRACTION = 1e-8
HOMOTHETY_BAND = 1e-8
DIV_GATE = 1e-12


@dataclass(frozen=True)
class RadialReduction:
    """How integrals of functions of |h| collapse to one radial integral.

    On the entries that carry one, ``int F(|h|) dV = weight * int F(rho)
    rho**(dim-1) d rho`` over ``rho_min <= rho <= rho_max``, with ``|grad |h|| = 1``
    and constant ``div h = div_h``.
    """

    weight: float
    dim: int
    div_h: float
    rho_min: float
    rho_max: float


@dataclass(frozen=True, eq=False)
class FieldSpec:
    """Vector field ``h`` with analytic jacobian ``J[b, i, k] = d_k h^i``."""

    components: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    zero_set: tuple = ()
    label: str = "field"
    radial: Optional[RadialReduction] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        zs = tuple(np.asarray(z, dtype=float).reshape(-1) for z in self.zero_set)
        object.__setattr__(self, "zero_set", zs)


@dataclass
class ConformalReport:
    max_deficit: float
    mu_min: float
    mu_max: float
    div_h_min: float
    is_conformal: bool
    is_homothety: bool
    tol: float
    n_points: int = 0
    n_excised: int = 0

    def to_dict(self):
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else v) for k, v in asdict(self).items()}


def excision_threshold(chart):
    return EXCISION_FRACTION * chart.diameter


def _deficit_matrix(geo, fd, n):
    A = np.einsum("bik,bkj->bij", geo.Ginv, fd.D)
    return A + np.swapaxes(A, 1, 2) - (2.0 / n) * fd.div[:, None, None] * geo.Ginv


def conformal_deficit(chart, fieldspec, x):
    """K^{ij} = nabla^i h^j + nabla^j h^i - (2/n) div h g^{ij}."""
    X, single = as_batch(x, chart.n)
    geo = local_geometry(chart, X)
    K = _deficit_matrix(geo, field_data(chart, fieldspec, geo), chart.n)
    return SymTensor2Up.from_matrix(_unbatch(K, single))


def conformal_factor(chart, fieldspec, x):
    X, single = as_batch(x, chart.n)
    geo = local_geometry(chart, X)
    return _unbatch((2.0 / chart.n) * field_data(chart, fieldspec, geo).div, single)


def sample_grid(chart, resolution):
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(chart.lower, chart.upper)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, chart.n)


def classify(chart, fieldspec, grid_resolution=9, tol=1e-9):
    """Sample the deficit tensor and conformal factor on a tensor grid.

    Grid points where |h| falls below ``1e-8 * diameter`` are skipped.  The
    deficit is normalised by ``(|h| + 1e-30) * |g^{-1}|_F`` so the verdict is
    invariant under rescaling of the field or the metric.
    """
    if grid_resolution < 3:
        raise ValueError("grid_resolution must be >= 3")
    X = sample_grid(chart, grid_resolution)
    geo = local_geometry(chart, X)
    fd = field_data(chart, fieldspec, geo)
    hnorm = np.sqrt(np.maximum(fd.norm2, 0.0))
    keep = hnorm >= excision_threshold(chart)
    if not keep.any():
        raise TooCloseToZeroSet("every grid point lies in the excision neighbourhood of the zero set")
    K = _deficit_matrix(geo, fd, chart.n)[keep]
    scale = (hnorm[keep] + EPS_NORM) * np.linalg.norm(geo.Ginv[keep], axis=(1, 2))
    deficit = np.linalg.norm(K, axis=(1, 2)) / scale
    mu = (2.0 / chart.n) * fd.div[keep]
    max_deficit = float(deficit.max())
    mu_min, mu_max = float(mu.min()), float(mu.max())
    is_conformal = max_deficit <= tol
    is_homothety = is_conformal and (mu_max - mu_min) <= HOMOTHETY_BAND * max(1.0, abs(mu_max))
    return ConformalReport(
        max_deficit=max_deficit,
        mu_min=mu_min,
        mu_max=mu_max,
        div_h_min=float(fd.div[keep].min()),
        is_conformal=bool(is_conformal),
        is_homothety=bool(is_homothety),
        tol=tol,
        n_points=int(keep.sum()),
        n_excised=int((~keep).sum()),
    )


def lemma_divergence_check(chart, fieldspec, k, x):
    """Compare div(h/|h|^k) with ((n-k)/2) mu / |h|^k.

    The left side goes through the density form of the divergence and the
    chain rule for |h|^{-k}; the right side uses the connection-form
    conformal factor.  Returns ``(lhs, rhs, abs_err)``.
    """
    n = chart.n
    X, single = as_batch(x, n)
    geo = local_geometry(chart, X)
    fd = field_data(chart, fieldspec, geo)
    hn = np.sqrt(np.maximum(fd.norm2, 0.0))
    if k > 0 and np.any(hn < excision_threshold(chart)):
        raise TooCloseToZeroSet(f"|h| below excision threshold with k={k} > 0")
    # d_i |h|^2 = d_i g_ab h^a h^b + 2 g_ab h^a d_i h^b
    _, dnorm2 = kernels.norm_gradient(geo.G, geo.dG, fd.h, fd.J)
    div_density = _density_divergence(geo, fd.h, fd.J)
    with np.errstate(divide="ignore", invalid="ignore"):
        power = np.where(hn > 0, hn ** (-float(k)), 1.0 if k == 0 else 0.0)
        radial = np.einsum("bi,bi->b", fd.h, dnorm2)
        second = np.where(fd.norm2 > 0, 0.5 * k * power * radial / np.where(fd.norm2 > 0, fd.norm2, 1.0), 0.0)
    lhs = power * div_density - second
    mu = (2.0 / n) * fd.div
    rhs = 0.5 * (n - k) * mu * power
    err = np.abs(lhs - rhs)
    return _unbatch(lhs, single), _unbatch(rhs, single), _unbatch(err, single)


def radial_identity_check(chart, fieldspec, x):
    """Compare h_j h^k nabla_k h^j with (mu/2) |h|^2; returns ``(lhs, rhs, abs_err)``."""
    X, single = as_batch(x, chart.n)
    geo = local_geometry(chart, X)
    fd = field_data(chart, fieldspec, geo)
    v = np.einsum("bk,bkj->bj", fd.h, fd.D)
    lhs = kernels.quad_form(geo.G, v, fd.h)
    rhs = 0.5 * (2.0 / chart.n) * fd.div * fd.norm2
    return _unbatch(lhs, single), _unbatch(rhs, single), _unbatch(np.abs(lhs - rhs), single)
