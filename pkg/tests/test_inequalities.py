import json
import math
from pathlib import Path

import numpy as np
import pytest

from ckntools.catalog import cone, conformal_flat, euclidean_dilation, euclidean_quadratic, hemisphere
from ckntools.errors import (
    DivergenceNotPositive,
    NonIntegrableWeight,
    NotConformalField,
    NotHomothety,
    ParamConditionViolated,
)
from ckntools.fields import FieldSpec
from ckntools.inequalities import (
    CKNParams,
    XiaParams,
    check_xia_conditions,
    costa_quadratic_check,
    euclidean_ckn_constant,
    evaluate_ckn,
    evaluate_classical_hardy,
    evaluate_euclidean_ckn,
    evaluate_hardy,
    evaluate_uncertainty,
    evaluate_xia,
    evaluate_xia_euclidean,
    proof_chain_trace,
    sharp_constant_ckn,
    xia_violations,
)
from ckntools.testfunctions import log_cutoff, power_cutoff, smooth_bump, truncated_gaussian, zero_function

from oracles import ckn_integrals, ckn_sides

GOLDEN = Path(__file__).parent / "golden"
E3 = euclidean_dilation(3)


@pytest.fixture(scope="module")
def ref_bump():
    return smooth_bump([0.0, 0.0, 0.0], 0.5, 1.0, E3.chart)


def test_sharp_constants():
    assert sharp_constant_ckn(3, CKNParams(0, 0, 2)) == pytest.approx(1 / 3)
    assert sharp_constant_ckn(3, CKNParams(1, 1, 2)) == 0.0
    assert euclidean_ckn_constant(3, 0, 0) == 1.0
    assert CKNParams(0, 0, 3).q == pytest.approx(1.5)
    with pytest.raises(ValueError):
        CKNParams(0, 0, 1.0)


def test_ckn_matches_radial_oracle(ref_bump):
    rep = evaluate_ckn(E3.chart, E3.field, ref_bump, CKNParams(0.0, 0.0, 2.0))
    oracle = ckn_integrals(3, 0.0, 0.0, 2.0, 0.5, 1.0)
    got = [rep.integrals[k] for k in ("weighted_mass", "mass_factor", "gradient_factor")]
    np.testing.assert_allclose(got, oracle, rtol=1e-4)
    assert rep.passed and rep.ratio < 1


@pytest.mark.parametrize("a,b,p", [(0.5, 0.5, 2.0), (-1.0, 0.5, 1.5), (0.3, -0.2, 3.0)])
def test_ckn_other_exponents_match_oracle(a, b, p):
    u = smooth_bump([0.0, 0.0, 0.0], 0.3, 0.9, E3.chart)
    rep = evaluate_ckn(E3.chart, E3.field, u, CKNParams(a, b, p))
    lhs, rhs = ckn_sides(3, a, b, p, 0.3, 0.9)
    assert rep.lhs == pytest.approx(lhs, rel=1e-4)
    assert rep.rhs == pytest.approx(rhs, rel=1e-4)
    assert rep.passed


def test_zero_function_and_degenerate_constant():
    z = zero_function(E3.chart)
    rep = evaluate_ckn(E3.chart, E3.field, z, CKNParams(0, 0, 2))
    assert rep.lhs == rep.rhs == 0.0 and rep.ratio == 0.0 and rep.passed
    u = smooth_bump([0.5, 0.4, 0.0], 0.1, 0.3, E3.chart)
    rep = evaluate_ckn(E3.chart, E3.field, u, CKNParams(1.0, 1.0, 2.0))
    assert rep.constant == 0.0 and rep.lhs == 0.0 and rep.rhs > 0 and rep.passed


def test_gates():
    q = euclidean_quadratic(3)
    u = smooth_bump([0.3, 0.2, 0.0], 0.1, 0.5, q.chart)
    with pytest.raises(NotConformalField):
        evaluate_ckn(q.chart, q.field, u, CKNParams(0, 0, 2))
    contraction = FieldSpec(lambda X: -np.asarray(X, float), lambda X: -E3.field.jacobian(X), (np.zeros(3),),
                            label="contraction")
    with pytest.raises(DivergenceNotPositive):
        evaluate_ckn(E3.chart, contraction, u, CKNParams(0, 0, 2))
    h = hemisphere(2)
    v = smooth_bump([0.0, 0.0], 0.05, 0.2, h.chart)
    with pytest.raises(NotHomothety):
        evaluate_euclidean_ckn(h.chart, h.field, v, 0.0, 0.0)


def test_nonintegrable_weight_is_reported(ref_bump):
    with pytest.raises(NonIntegrableWeight) as info:
        evaluate_ckn(E3.chart, E3.field, ref_bump, CKNParams(2.0, 0.5, 2.0))
    assert "weighted_mass" in str(info.value)


def test_scaling_covariance():
    u = smooth_bump([0.2, -0.1, 0.1], 0.2, 0.6, E3.chart)
    params = CKNParams(0.4, 0.2, 1.5)
    lam = 3.0
    r1 = evaluate_ckn(E3.chart, E3.field, u, params)
    r2 = evaluate_ckn(E3.chart, E3.field, u.scaled(lam), params)
    assert r2.lhs == pytest.approx(lam ** 1.5 * r1.lhs, rel=1e-12)
    assert r2.rhs == pytest.approx(lam ** 1.5 * r1.rhs, rel=1e-12)
    assert r2.ratio == pytest.approx(r1.ratio, rel=1e-12)


def test_hardy_specialization_coherence():
    u = power_cutoff(E3.chart, E3.field, 0.5, 0.05, 0.9)
    for p in (1.5, 2.0):
        ckn = evaluate_ckn(E3.chart, E3.field, u, CKNParams(p - 1.0, 0.0, p), route="radial")
        hardy = evaluate_hardy(E3.chart, E3.field, u, p, route="radial")
        assert hardy.ratio == pytest.approx(ckn.ratio ** p, rel=1e-10)


def test_euclidean_reduction_same_sides(ref_bump):
    for a, b in ((0.0, 0.0), (0.5, 0.0)):
        euc = evaluate_euclidean_ckn(E3.chart, E3.field, ref_bump, a, b)
        gen = evaluate_ckn(E3.chart, E3.field, ref_bump, CKNParams(a, b, 2.0))
        # identical integrands up to the constant divergence; the adaptive
        # refinement paths differ, so agreement is at quadrature level
        tol = 1e-12 if a == 0.0 else 10 * max(euc.slack, gen.slack)
        assert euc.lhs == pytest.approx(gen.lhs, rel=tol)
        assert euc.rhs == pytest.approx(gen.rhs, rel=tol)


def test_euclidean_ckn_on_cone():
    c = cone()
    u = smooth_bump([1.2, 3.0], 0.1, 0.5, c.chart)
    rep = evaluate_euclidean_ckn(c.chart, c.field, u, 0.3, 0.2)
    assert rep.passed and 0 < rep.ratio < 1


def test_hardy_p_equals_n_is_trivial():
    e2 = euclidean_dilation(2)
    u = smooth_bump([0.3, 0.2], 0.1, 0.4, e2.chart)
    rep = evaluate_hardy(e2.chart, e2.field, u, 2.0)
    assert rep.constant == 0.0 and rep.lhs == 0.0 and rep.passed


def test_classical_hardy_reduction():
    u = power_cutoff(E3.chart, E3.field, 0.5, 0.05, 0.9)
    h = evaluate_hardy(E3.chart, E3.field, u, 2.0, route="radial")
    c = evaluate_classical_hardy(E3.chart, E3.field, u, 2.0, route="radial")
    # multiplying through by n^{p-1} = 3 maps one statement to the other
    assert 3.0 * h.lhs == pytest.approx(c.lhs, rel=1e-10)
    assert 3.0 * h.rhs == pytest.approx(c.rhs, rel=1e-10)
    assert c.constant == pytest.approx(0.25)


def test_uncertainty_reduces_to_classical(ref_bump):
    rep = evaluate_uncertainty(E3.chart, E3.field, ref_bump, 2.0)
    from oracles import bump_profile, radial_integral

    prof = bump_profile(0.5, 1.0)
    m0 = radial_integral(lambda r: prof(r)[0] ** 2, 0, 1, 3, (0.5,))
    m2 = radial_integral(lambda r: r * r * prof(r)[0] ** 2, 0, 1, 3, (0.5,))
    g = radial_integral(lambda r: prof(r)[1] ** 2, 0.5, 1, 3)
    classical = (9 / 4) * m0 ** 2 / (m2 * g)
    assert rep.ratio ** 2 == pytest.approx(classical, rel=1e-4)
    assert "support of u contains a zero of h" in rep.notes


def test_uncertainty_gaussian_near_equality():
    ratios = []
    for sigma in (0.3, 0.2, 0.12):
        u = truncated_gaussian(E3.chart, E3.field, sigma, 0.95)
        rep = evaluate_uncertainty(E3.chart, E3.field, u, 2.0, route="radial")
        assert rep.passed
        ratios.append(rep.ratio)
    assert ratios[0] < ratios[1] < ratios[2] and ratios[2] > 1 - 1e-9


def test_uncertainty_zero_function():
    rep = evaluate_uncertainty(E3.chart, E3.field, zero_function(E3.chart), 2.0)
    assert rep.lhs == 0 and rep.rhs == 0 and rep.passed


def test_xia_conditions_individually():
    n = 3
    assert xia_violations(XiaParams(1, 1, 1 / 6, 3, 2), n) == []
    cases = {
        "1/r + gamma/n > 0": XiaParams.from_alpha_beta(-2.5, 0.0, 2.0, 1.1),
        "1/p + alpha/n > 0": XiaParams.from_alpha_beta(-2.0, 3.0, 3.0, 2.0),
        "(p-1)/(p(r-1)) + beta/n > 0": XiaParams.from_alpha_beta(1.0, -1.0, 3.0, 2.0),
        "gamma = (alpha-1)/r + (p-1) beta/(p r)": XiaParams(1, 1, 0.5, 3, 2),
        "1 < p < r": XiaParams.from_alpha_beta(1.0, 1.0, 2.0, 3.0),
    }
    for name, params in cases.items():
        names = [v[0] for v in xia_violations(params, n)]
        assert names == [name]
        with pytest.raises(ParamConditionViolated) as info:
            check_xia_conditions(params, n)
        assert info.value.violations == [name] and name in str(info.value)


def test_xia_valid_set_and_euclidean_form():
    params = XiaParams(1.0, 1.0, 1.0 / 6.0, 3.0, 2.0)
    u = smooth_bump([0.0, 0.0, 0.0], 0.2, 0.7, E3.chart)
    rep = evaluate_xia(E3.chart, E3.field, u, params)
    assert rep.passed and rep.ratio < 1
    euc = evaluate_xia_euclidean(E3.chart, E3.field, u, params)
    assert euc.lhs * 3 == pytest.approx(rep.lhs, rel=1e-10)
    assert euc.rhs * 3 == pytest.approx(rep.rhs, rel=1e-10)
    assert rep.ratio == pytest.approx(euc.ratio, rel=1e-10)
    z = evaluate_xia(E3.chart, E3.field, zero_function(E3.chart), params)
    assert z.lhs == 0 and z.passed


def test_proof_chain_trace():
    u = smooth_bump([0.1, -0.2, 0.1], 0.2, 0.6, E3.chart)
    tr = proof_chain_trace(E3.chart, E3.field, u, CKNParams(0.0, 0.0, 2.0))
    assert tr["station_i"]["relative_residual"] <= 1e-5
    assert tr["monotone"] and tr["sign_n_minus_k"] == 1
    rep = evaluate_ckn(E3.chart, E3.field, u, CKNParams(0.0, 0.0, 2.0))
    # same quantities, integrated within a different vector of integrands
    assert tr["station_iii"]["value"] == pytest.approx(rep.rhs, rel=10 * rep.slack)
    assert tr["station_i"]["value"] == pytest.approx(rep.lhs, rel=10 * rep.slack)
    off = smooth_bump([0.4, 0.3, 0.0], 0.1, 0.3, E3.chart)
    neg = proof_chain_trace(E3.chart, E3.field, off, CKNParams(2.0, 1.0, 2.0))
    assert neg["sign_n_minus_k"] == -1 and neg["monotone"]


def test_proof_chain_borderline_vanishes():
    u = smooth_bump([0.4, 0.3, 0.0], 0.1, 0.4, E3.chart)
    tr = proof_chain_trace(E3.chart, E3.field, u, CKNParams(1.0, 1.0, 2.0))
    st = tr["station_i"]
    assert st["mass_term"] == 0.0 and st["value"] == 0.0
    assert abs(st["ibp_term"]) <= 1e-6 * tr["station_ii"]["value"]


def test_proof_chain_non_homothety():
    h = hemisphere(2)
    u = smooth_bump([0.1, 0.0], 0.05, 0.2, h.chart)
    tr = proof_chain_trace(h.chart, h.field, u, CKNParams(0.5, 0.0, 2.0))
    assert tr["station_i"]["relative_residual"] <= 1e-5 and tr["monotone"]


def test_costa_quadratic(ref_bump):
    rep = costa_quadratic_check(E3.chart, E3.field, ref_bump, 0.0, 0.0)
    assert rep.quad_nonnegative and rep.recovered_bound
    assert rep.quad_values[2] == pytest.approx(rep.D, rel=1e-12)
    assert rep.B == pytest.approx(rep.B_direct, rel=1e-5)
    euc = evaluate_euclidean_ckn(E3.chart, E3.field, ref_bump, 0.0, 0.0)
    assert rep.discriminant_ratio == pytest.approx(euc.ratio ** 2, rel=1e-3)
    # Q(t) is the quadratic A t^2 + B t + D
    for t, qv in zip(rep.t_values, rep.quad_values):
        assert qv == pytest.approx(rep.A * t * t + rep.B * t + rep.D, rel=1e-5)
    with pytest.raises(NotHomothety):
        costa_quadratic_check(conformal_flat().chart, conformal_flat().field, ref_bump, 0, 0)


def test_report_json_golden(ref_bump):
    rep = evaluate_ckn(E3.chart, E3.field, ref_bump, CKNParams(0.0, 0.0, 2.0))
    got = json.loads(json.dumps(rep.to_dict(), sort_keys=True))
    want = json.loads((GOLDEN / "ckn_euclidean3_bump.json").read_text())
    assert set(got) == set(want)
    for key in ("name", "verdict", "notes"):
        assert got[key] == want[key]
    for key in ("lhs", "rhs", "constant", "ratio", "margin"):
        assert got[key] == pytest.approx(want[key], rel=1e-9)
    for key, val in want["integrals"].items():
        assert got["integrals"][key] == pytest.approx(val, rel=1e-9)


def test_log_cutoff_routes_agree():
    u = log_cutoff(E3.chart, E3.field, 0.5, 0.09, 0.9)
    params = CKNParams(1.0, 0.0, 2.0)
    nd = evaluate_ckn(E3.chart, E3.field, u, params)
    rad = evaluate_ckn(E3.chart, E3.field, u, params, route="radial")
    assert nd.ratio == pytest.approx(rad.ratio, rel=1e-4)
    for key in nd.integrals:
        assert nd.integrals[key] == pytest.approx(rad.integrals[key], rel=1e-4)
