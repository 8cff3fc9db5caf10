"""Both sides of the weighted CKN family, its specialisations, the integration
by parts chain behind it and the quadratic-form certificate for p = 2.

Every evaluator gathers all the integrals it needs into one vector-valued
integrand so they share quadrature nodes; this keeps algebraic identities
between reports (scaling, specialisations) exact up to rounding.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import (
    DivergenceNotPositive,
    NonIntegrableWeight,
    NotConformalField,
    NotHomothety,
    ParamConditionViolated,
    SupportOutsideChart,
)
from .fields import DIV_GATE, classify
from .geometry import _density_divergence, local_geometry
from .quadrature import QuadratureScheme, cauchy_summary, excision_limit_study, integrate, radial_integrate

MU_TOL = 1e-8
PROBE_EPSILONS = (1e-2, 1e-3, 1e-4)


@dataclass(frozen=True)
class CKNParams:
    a: float
    b: float
    p: float

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must be > 1")

    @property
    def q(self):
        return self.p / (self.p - 1.0)

    @property
    def k(self):
        return self.a + self.b + 1.0

    def to_dict(self):
        return {"a": self.a, "b": self.b, "p": self.p, "q": self.q}


@dataclass(frozen=True)
class XiaParams:
    alpha: float
    beta: float
    gamma: float
    r: float
    p: float

    @classmethod
    def from_alpha_beta(cls, alpha, beta, r, p):
        """Fill gamma from the linking relation."""
        return cls(alpha, beta, (alpha - 1.0) / r + (p - 1.0) * beta / (p * r), r, p)

    @property
    def q(self):
        return self.p / (self.p - 1.0)

    def to_dict(self):
        return {**asdict(self), "q": self.q}


def xia_violations(params, n):
    """Names and values of the violated parameter conditions (empty if valid)."""
    al, be, ga, r, p = params.alpha, params.beta, params.gamma, params.r, params.p
    out = []
    if not 1 < p < r:
        out.append(("1 < p < r", {"p": p, "r": r}))
    else:
        checks = [
            ("1/p + alpha/n > 0", 1 / p + al / n),
            ("(p-1)/(p(r-1)) + beta/n > 0", (p - 1) / (p * (r - 1)) + be / n),
            ("1/r + gamma/n > 0", 1 / r + ga / n),
        ]
        out.extend((name, val) for name, val in checks if not val > 0)
        link = (al - 1) / r + (p - 1) * be / (p * r)
        if abs(ga - link) > 1e-12:
            out.append(("gamma = (alpha-1)/r + (p-1) beta/(p r)", {"gamma": ga, "required": link}))
    return out


def check_xia_conditions(params, n):
    bad = xia_violations(params, n)
    if bad:
        names = "; ".join(f"{name} (got {val})" for name, val in bad)
        raise ParamConditionViolated(f"parameter conditions violated: {names}", [name for name, _ in bad])


@dataclass
class InequalityReport:
    name: str
    lhs: float
    rhs: float
    constant: float
    ratio: float
    margin: float
    integrals: dict
    quadrature_errors: dict
    slack: float
    verdict: str
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return self.verdict == "pass"

    def to_dict(self):
        return asdict(self)


def sharp_constant_ckn(n, params):
    return abs(n - params.k) / (params.p * n)


@lru_cache(maxsize=128)
def _classification(chart, fieldspec):
    return classify(chart, fieldspec)


def _gate(chart, fieldspec):
    rep = _classification(chart, fieldspec)
    if not rep.is_conformal:
        raise NotConformalField(f"field {fieldspec.label!r} is not conformal (max_deficit={rep.max_deficit:.3g})")
    if not rep.div_h_min > DIV_GATE:
        raise DivergenceNotPositive(f"div h reaches {rep.div_h_min:.3g} on the chart")
    return rep


def _homothety_gate(chart, fieldspec):
    rep = _gate(chart, fieldspec)
    if not rep.is_homothety or abs(rep.mu_max - 2.0) > MU_TOL * 2.0 or abs(rep.mu_min - 2.0) > MU_TOL * 2.0:
        raise NotHomothety(f"need a homothety with mu = 2, got mu in [{rep.mu_min:.6g}, {rep.mu_max:.6g}]")
    return rep


def _check_support(chart, u):
    lo, hi = u.support
    for i in range(chart.n):
        if chart.periodic[i]:
            continue
        if lo[i] < chart.lower[i] - 1e-12 or hi[i] > chart.upper[i] + 1e-12:
            raise SupportOutsideChart("test function support leaves the chart")


class Pointwise:
    """Pointwise quantities on the live set (where u or grad u is nonzero)."""

    def __init__(self, u, grad_norm, h_dot_grad, rho, div, n):
        self.u = u
        self.absu = np.abs(u)
        self.grad_norm = grad_norm
        self.h_dot_grad = h_dot_grad
        self.rho = rho
        self.div = div
        self.mu = (2.0 / n) * div

    def rpow(self, s):
        """|h|**s with 0**0 = 1."""
        return self.rho ** s if s != 0 else np.ones_like(self.rho)

    def upow(self, s):
        return self.absu ** s


def _pointwise_nd(chart, fieldspec, u, X):
    """u, |grad u|, (h, grad u), |h|, div h and sqrt(det g) at a batch of points."""
    geo = local_geometry(chart, X, with_connection=False)
    geo = geo._replace(dG=np.asarray(chart.metric_jacobian(X), dtype=float))
    h = np.asarray(fieldspec.components(X), dtype=float)
    div = _density_divergence(geo, h, np.asarray(fieldspec.jacobian(X), dtype=float))
    du = np.asarray(u.gradient(X), dtype=float)
    gn = np.sqrt(np.maximum(kernels.quad_form(geo.Ginv, du, du), 0.0))
    hdg = np.einsum("bi,bi->b", h, du)
    rho = np.sqrt(np.maximum(kernels.quad_form(geo.G, h, h), 0.0))
    return np.asarray(u.value(X), dtype=float), gn, hdg, rho, div, np.exp(0.5 * geo.logdet)


def _nd_integrand(chart, fieldspec, u, terms):
    n = chart.n

    def f(X):
        val, gn, hdg, rho, div, vol = _pointwise_nd(chart, fieldspec, u, X)
        live = (val != 0) | (gn != 0)
        out = np.zeros((len(X), len(terms)))
        if not live.any():
            return out
        if np.any(div[live] <= 0):
            raise DivergenceNotPositive("div h <= 0 inside the support of u")
        pw = Pointwise(val[live], gn[live], hdg[live], rho[live], div[live], n)
        for j, term in enumerate(terms):
            out[live, j] = term(pw) * vol[live]
        return out

    return f


def _zero_singular(chart, fieldspec, u, z):
    """True when u or grad u is nonzero arbitrarily close to the zero z."""
    lo, hi = u.support
    if np.any(z < lo) or np.any(z > hi):
        return False
    d = 1e-6 * chart.diameter
    pts = [z] + [z + s * d * e for e in np.eye(chart.n) for s in (1.0, -1.0)]
    P = np.array([p for p in pts if chart.contains(p)])
    return bool(np.any(np.asarray(u.value(P)) != 0) or np.any(np.asarray(u.gradient(P)) != 0))


def _integrals(chart, fieldspec, u, terms, scheme, route="nd", names=None):
    """Vector of integrals of ``terms`` against dV; returns (values, errors, notes)."""
    scheme = QuadratureScheme() if scheme is None else scheme
    names = names or [f"I{j}" for j in range(len(terms))]
    notes = []
    if route == "radial":
        values, errors = _radial_integrals(chart, fieldspec, u, terms, scheme)
        return values, errors, ["radial route"]
    _check_support(chart, u)
    f = _nd_integrand(chart, fieldspec, u, terms)
    singular = [z for z in fieldspec.zero_set if _zero_singular(chart, fieldspec, u, z)]
    domain = u.support
    # zeros inside the support get a log-polar patch even when u vanishes
    # there: annular supports around them are then resolved along log r only
    zeros = [z for z in fieldspec.zero_set
             if any(z is s for s in singular) or np.all((z > domain[0]) & (z < domain[1]))]
    if scheme.excision_radius > 0:
        zeros += [z for z in fieldspec.zero_set if not any(z is w for w in zeros)]
    if singular:
        # the study only sees differences near the zeros, so a small box around each suffices
        size = float(np.linalg.norm(domain[1] - domain[0]))
        study = None
        for z in singular:
            half = 0.05 * (domain[1] - domain[0])
            box = (np.maximum(z - half, domain[0]), np.minimum(z + half, domain[1]))
            part = excision_limit_study(chart, f, scheme, [e * size for e in PROBE_EPSILONS], [z], box,
                                        volume_included=True)
            study = part if study is None else [_sum_results(x, y) for x, y in zip(study, part)]
        summary = cauchy_summary(study, rel_tol=scheme.rel_tol)
        if not summary["converged"]:
            bad = [nm for nm, ok in zip(names, summary["per_component"]) if not ok]
            raise NonIntegrableWeight(
                f"integrals {bad} do not converge as the excision radius shrinks "
                f"(successive differences {summary['diffs']})"
            )
        notes.append("u does not vanish near a zero of h; excision study converged")
    res = integrate(chart, f, scheme, zeros=zeros, domain=domain, volume_included=True)
    return np.atleast_1d(res.value), np.atleast_1d(res.error_estimate), notes


def _sum_results(x, y):
    return dataclasses.replace(x, value=np.asarray(x.value) + np.asarray(y.value),
                               error_estimate=np.asarray(x.error_estimate) + np.asarray(y.error_estimate))


def _radial_integrals(chart, fieldspec, u, terms, scheme):
    red = fieldspec.radial
    if red is None or u.radial_profile is None or u.family_params.get("anchor") != "field_norm":
        raise ValueError("radial route needs a radially reducible field and a |h|-anchored test function")
    bps = [b for b in u.breakpoints]
    r_lo = max(red.rho_min, float(u.family_params.get("rho_in", 0.0)))
    r_hi = min(red.rho_max, max(bps))
    n = chart.n

    def f(rho):
        val, du = u.radial_profile(rho)
        live = (val != 0) | (du != 0)
        out = np.zeros((len(rho), len(terms)))
        if not live.any():
            return out
        div = np.full(int(live.sum()), red.div_h)
        mu = 2.0 * red.div_h / n
        # h . grad u = (du/drho) h(|h|) = (mu/2) rho du/drho by the radial identity
        pw = Pointwise(val[live], np.abs(du[live]), 0.5 * mu * rho[live] * du[live], rho[live], div, n)
        for j, term in enumerate(terms):
            out[live, j] = term(pw)
        return out

    res = radial_integrate(f, r_lo, r_hi, red.dim, weight=red.weight, breakpoints=bps,
                           rel_tol=min(scheme.rel_tol, 1e-10))
    return np.atleast_1d(res.value), np.atleast_1d(res.error_estimate)


def _rel(err, val):
    return float(err / abs(val)) if val != 0 else 0.0


def _report(name, lhs, rhs, constant, integrals, errors, rel_err, notes):
    slack = 10.0 * rel_err
    if lhs == 0 and rhs == 0:
        ratio = 0.0
    elif rhs == 0:
        ratio = math.inf
    else:
        ratio = lhs / rhs
    verdict = "pass" if lhs <= rhs * (1.0 + slack) else "fail"
    return InequalityReport(
        name=name,
        lhs=float(lhs),
        rhs=float(rhs),
        constant=float(constant),
        ratio=float(ratio),
        margin=float(rhs - lhs),
        integrals={k: float(v) for k, v in integrals.items()},
        quadrature_errors={k: float(v) for k, v in errors.items()},
        slack=float(slack),
        verdict=verdict,
        notes=list(notes),
    )


def _three_factor(name, constant, names, vals, errs, q_exp, p_exp, notes):
    """lhs = constant * I0, rhs = I1**q_exp * I2**p_exp with the matching slack."""
    i0, i1, i2 = vals
    lhs = constant * i0
    rhs = i1 ** q_exp * i2 ** p_exp
    rel = _rel(errs[0], i0) + q_exp * _rel(errs[1], i1) + p_exp * _rel(errs[2], i2)
    return _report(name, lhs, rhs, constant, dict(zip(names, vals)), dict(zip(names, errs)), rel, notes)


def _ckn_terms(params):
    p, a, b, q, k = params.p, params.a, params.b, params.q, params.k
    return [
        lambda w: w.div * w.upow(p) * w.rpow(-k),
        lambda w: w.div * w.upow(p) * w.rpow(-a * q),
        lambda w: w.div ** (1.0 - p) * w.grad_norm ** p * w.rpow(-b * p),
    ]


CKN_NAMES = ["weighted_mass", "mass_factor", "gradient_factor"]


def evaluate_ckn(chart, fieldspec, u, params, scheme=None, route="nd"):
    _gate(chart, fieldspec)
    vals, errs, notes = _integrals(chart, fieldspec, u, _ckn_terms(params), scheme, route, CKN_NAMES)
    C = sharp_constant_ckn(chart.n, params)
    return _three_factor("ckn", C, CKN_NAMES, vals, errs, 1.0 / params.q, 1.0 / params.p, notes)


def euclidean_ckn_constant(n, a, b):
    return abs(n - (a + b + 1.0)) / 2.0


def evaluate_euclidean_ckn(chart, fieldspec, u, a, b, scheme=None, route="nd"):
    """p = q = 2 form for a homothety normalised to div h = n (no div h weights)."""
    _homothety_gate(chart, fieldspec)
    terms = [
        lambda w: w.upow(2) * w.rpow(-(a + b + 1.0)),
        lambda w: w.upow(2) * w.rpow(-2.0 * a),
        lambda w: w.grad_norm ** 2 * w.rpow(-2.0 * b),
    ]
    names = ["weighted_mass", "mass_factor", "gradient_factor"]
    vals, errs, notes = _integrals(chart, fieldspec, u, terms, scheme, route, names)
    C = euclidean_ckn_constant(chart.n, a, b)
    return _three_factor("euclidean_ckn", C, names, vals, errs, 0.5, 0.5, notes)


def hardy_constant(n, p):
    return (abs(n - p) / (n * p)) ** p


def _two_sided(name, constant, names, vals, errs, notes):
    i0, i1 = vals
    lhs, rhs = constant * i0, i1
    rel = _rel(errs[0], i0) + _rel(errs[1], i1)
    return _report(name, lhs, rhs, constant, dict(zip(names, vals)), dict(zip(names, errs)), rel, notes)


def evaluate_hardy(chart, fieldspec, u, p, scheme=None, route="nd"):
    _gate(chart, fieldspec)
    terms = [
        lambda w: w.div * w.upow(p) * w.rpow(-p),
        lambda w: w.div ** (1.0 - p) * w.grad_norm ** p,
    ]
    names = ["weighted_mass", "gradient_energy"]
    vals, errs, notes = _integrals(chart, fieldspec, u, terms, scheme, route, names)
    return _two_sided("hardy", hardy_constant(chart.n, p), names, vals, errs, notes)


def evaluate_classical_hardy(chart, fieldspec, u, p, scheme=None, route="nd"):
    """((n-p)/p)^p int |u|^p/|h|^p <= int |grad u|^p, for homotheties with div h = n."""
    _homothety_gate(chart, fieldspec)
    n = chart.n
    terms = [lambda w: w.upow(p) * w.rpow(-p), lambda w: w.grad_norm ** p]
    names = ["weighted_mass", "gradient_energy"]
    vals, errs, notes = _integrals(chart, fieldspec, u, terms, scheme, route, names)
    return _two_sided("classical_hardy", (abs(n - p) / p) ** p, names, vals, errs, notes)


def evaluate_uncertainty(chart, fieldspec, u, p, scheme=None, route="nd"):
    """(1/p) int div h |u|^p <= (int div h |h|^q |u|^p)^{1/q} (int (div h)^{1-p} |grad u|^p)^{1/p}.

    The statement asks for u supported away from the zeros of h.  The
    weights here are bounded, so a support that reaches a zero is evaluated
    anyway and flagged in ``notes``.
    """
    _gate(chart, fieldspec)
    q = p / (p - 1.0)
    terms = [
        lambda w: w.div * w.upow(p),
        lambda w: w.div * w.upow(p) * w.rpow(q),
        lambda w: w.div ** (1.0 - p) * w.grad_norm ** p,
    ]
    names = ["mass", "moment_factor", "gradient_factor"]
    vals, errs, notes = _integrals(chart, fieldspec, u, terms, scheme, route, names)
    if route == "nd" and any(_zero_singular(chart, fieldspec, u, z) for z in fieldspec.zero_set):
        notes.append("support of u contains a zero of h")
    return _three_factor("uncertainty", 1.0 / p, names, vals, errs, 1.0 / q, 1.0 / p, notes)


def xia_constant(n, params):
    return params.r * n / (n + params.gamma * params.r)


def _xia_terms(params, with_div):
    al, be, ga, r, p, q = params.alpha, params.beta, params.gamma, params.r, params.p, params.q
    if with_div:
        return [
            lambda w: w.div * w.rpow(ga * r) * w.upow(r),
            lambda w: w.div ** (1.0 - p) * w.rpow(al * p) * w.grad_norm ** p,
            lambda w: w.div * w.rpow(be) * w.upow((r - 1.0) * q),
        ]
    return [
        lambda w: w.rpow(ga * r) * w.upow(r),
        lambda w: w.rpow(al * p) * w.grad_norm ** p,
        lambda w: w.rpow(be) * w.upow((r - 1.0) * q),
    ]


XIA_NAMES = ["lhs_integral", "gradient_factor", "mass_factor"]


def _xia_report(name, constant, vals, errs, params, notes):
    i0, i1, i2 = vals
    lhs = i0
    rhs = constant * i1 ** (1.0 / params.p) * i2 ** (1.0 / params.q)
    rel = _rel(errs[0], i0) + _rel(errs[1], i1) / params.p + _rel(errs[2], i2) / params.q
    return _report(name, lhs, rhs, constant, dict(zip(XIA_NAMES, vals)), dict(zip(XIA_NAMES, errs)), rel, notes)


def evaluate_xia(chart, fieldspec, u, params, scheme=None, route="nd"):
    check_xia_conditions(params, chart.n)
    _gate(chart, fieldspec)
    vals, errs, notes = _integrals(chart, fieldspec, u, _xia_terms(params, True), scheme, route, XIA_NAMES)
    return _xia_report("xia", xia_constant(chart.n, params), vals, errs, params, notes)


def evaluate_xia_euclidean(chart, fieldspec, u, params, scheme=None, route="nd"):
    """The flat-space form with factor r/(n + gamma r) and no div h weights."""
    check_xia_conditions(params, chart.n)
    _homothety_gate(chart, fieldspec)
    vals, errs, notes = _integrals(chart, fieldspec, u, _xia_terms(params, False), scheme, route, XIA_NAMES)
    const = params.r / (chart.n + params.gamma * params.r)
    return _xia_report("xia_euclidean", const, vals, errs, params, notes)


def proof_chain_trace(chart, fieldspec, u, params, scheme=None, route="nd"):
    """Numbers for the three steps from the divergence identity to the bound.

    (i)   int |u|^{p-2} u (h, grad u)/|h|^k + ((n-k)/(2p)) int mu |u|^p/|h|^k = 0
    (ii)  |(n-k)/(2p)| int mu |u|^p/|h|^k <= int |u|^{p-1} |grad u| |h|/|h|^k
    (iii) the right side of (ii) <= Hoelder product, which equals the rhs of
          the weighted inequality.
    """
    _gate(chart, fieldspec)
    n, p, a, b, q, k = chart.n, params.p, params.a, params.b, params.q, params.k
    terms = [
        lambda w: np.sign(w.u) * w.upow(p - 1.0) * w.h_dot_grad * w.rpow(-k),
        lambda w: w.mu * w.upow(p) * w.rpow(-k),
        lambda w: w.upow(p - 1.0) * w.grad_norm * w.rpow(1.0 - k),
        lambda w: w.mu * w.upow(p) * w.rpow(-a * q),
        lambda w: w.mu ** (1.0 - p) * w.grad_norm ** p * w.rpow(-b * p),
    ]
    names = ["ibp_term", "mu_mass", "cauchy_schwarz_term", "mu_mass_factor", "mu_gradient_factor"]
    vals, errs, notes = _integrals(chart, fieldspec, u, terms, scheme, route, names)
    ibp, mass, cs, mf, gf = vals
    signed = (n - k) / (2.0 * p)
    residual = abs(ibp + signed * mass)
    st1 = abs(signed) * mass
    st3 = mf ** (1.0 / q) * gf ** (1.0 / p)
    scale = max(abs(ibp), abs(signed * mass), cs)
    rel_res = residual / scale if scale > 0 else 0.0
    err_i = errs[0] + abs(signed) * errs[1]
    rel_err = sum(_rel(e, v) for e, v in zip(errs, vals))
    tol = 10.0 * rel_err
    return {
        "params": params.to_dict(),
        "sign_n_minus_k": int(np.sign(n - k)),
        "station_i": {
            "ibp_term": float(ibp),
            "mass_term": float(signed * mass),
            "residual": float(residual),
            "relative_residual": float(rel_res),
            "quadrature_error": float(err_i),
            "value": float(st1),
        },
        "station_ii": {"value": float(cs)},
        "station_iii": {"value": float(st3), "mass_factor": float(mf), "gradient_factor": float(gf)},
        "monotone": bool(st1 <= cs * (1 + tol) and cs <= st3 * (1 + tol)),
        "slack": float(tol),
        "integrals": {nm: float(v) for nm, v in zip(names, vals)},
        "quadrature_errors": {nm: float(e) for nm, e in zip(names, errs)},
        "notes": notes,
    }


@dataclass
class CostaReport:
    t_values: list
    quad_values: list
    quad_nonnegative: bool
    A: float
    B: float
    B_direct: float
    D: float
    optimal_t: float
    discriminant_ratio: float
    recovered_bound: bool
    slack: float
    quadrature_errors: dict

    def to_dict(self):
        return asdict(self)


def costa_quadratic_check(chart, fieldspec, u, a, b, t=(-2.0, -1.0, 0.0, 1.0, 2.0), scheme=None, route="nd",
                          tol=1e-8):
    """Quadratic-form certificate for the p = 2 bound on homotheties with div h = n.

    With W = grad u/|h|^b + t u h/|h|^{a+1}, the integral of g(W, W) is
    A t^2 + B t + D.  ``B`` is the cross coefficient rewritten through the
    divergence lemma, ``B_direct`` the same coefficient integrated as is.
    """
    _homothety_gate(chart, fieldspec)
    n = chart.n
    k = a + b + 1.0
    ts = [float(x) for x in np.atleast_1d(t)]
    terms = [
        lambda w: w.upow(2) * w.rpow(-2.0 * a),
        lambda w: 2.0 * w.u * w.h_dot_grad * w.rpow(-k),
        lambda w: w.grad_norm ** 2 * w.rpow(-2.0 * b),
        lambda w: w.upow(2) * w.rpow(-k),
    ]
    for tv in ts:
        terms.append(lambda w, tv=tv: w.grad_norm ** 2 * w.rpow(-2.0 * b)
                     + 2.0 * tv * w.u * w.h_dot_grad * w.rpow(-k)
                     + tv * tv * w.upow(2) * w.rpow(2.0 - 2.0 * a - 2.0))
    names = ["A", "B_direct", "D", "lemma_mass"] + [f"Q({tv:g})" for tv in ts]
    vals, errs, _ = _integrals(chart, fieldspec, u, terms, scheme, route, names)
    A, Bd, D, lm = vals[:4]
    quad = vals[4:]
    B = -(n - k) * lm
    optimal_t = -B / (2.0 * A) if A > 0 else 0.0
    disc = B * B / (4.0 * A * D) if A > 0 and D > 0 else 0.0
    rel = 2.0 * (_rel(errs[3], lm)) + _rel(errs[0], A) + _rel(errs[2], D)
    slack = 10.0 * rel
    return CostaReport(
        t_values=ts,
        quad_values=[float(v) for v in quad],
        quad_nonnegative=bool(np.all(quad >= -tol)),
        A=float(A),
        B=float(B),
        B_direct=float(Bd),
        D=float(D),
        optimal_t=float(optimal_t),
        discriminant_ratio=float(disc),
        recovered_bound=bool(disc <= 1.0 + slack),
        slack=float(slack),
        quadrature_errors={nm: float(e) for nm, e in zip(names, errs)},
    )
