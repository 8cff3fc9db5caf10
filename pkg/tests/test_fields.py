import numpy as np
import pytest

from ckntools.catalog import cone, euclidean_dilation, euclidean_quadratic, hemisphere
from ckntools.errors import TooCloseToZeroSet
from ckntools.fields import (
    FieldSpec,
    classify,
    conformal_deficit,
    conformal_factor,
    excision_threshold,
    lemma_divergence_check,
    radial_identity_check,
)
from ckntools.geometry import field_norm, inverse_metric, metric_at, random_points


def zero_field(n):
    return FieldSpec(lambda X: np.zeros_like(X, dtype=float), lambda X: np.zeros((len(X), X.shape[1], X.shape[1])))


def usable_points(entry, count, rng):
    X = random_points(entry.chart, 4 * count, rng)
    keep = field_norm(entry.chart, entry.field, X) > 1e3 * excision_threshold(entry.chart)
    return X[keep][:count]


def test_deficit_examples():
    e = euclidean_dilation(3)
    np.testing.assert_allclose(conformal_deficit(e.chart, e.field, [0.3, -0.2, 0.1]).matrix, 0.0, atol=1e-15)
    q = euclidean_quadratic(2)
    np.testing.assert_allclose(conformal_deficit(q.chart, q.field, [1.0, 1.0]).matrix, np.diag([2.0, -2.0]))
    c = cone()
    np.testing.assert_allclose(conformal_deficit(c.chart, c.field, [1.3, 0.7]).matrix, 0.0, atol=1e-14)


def test_deficit_is_traceless_for_any_field(rng, conformal_entries):
    entries = list(conformal_entries) + [euclidean_quadratic(2), euclidean_quadratic(3)]
    for entry in entries:
        X = random_points(entry.chart, 20, rng)
        K = conformal_deficit(entry.chart, entry.field, X).matrix
        G = metric_at(entry.chart, X)
        assert np.abs(np.einsum("bij,bij->b", G, K)).max() <= 1e-10


def test_conformal_factor_examples():
    e = euclidean_dilation(3)
    assert conformal_factor(e.chart, e.field, [0.1, 0.5, -0.3]) == pytest.approx(2.0)
    assert conformal_factor(e.chart, zero_field(3), [0.1, 0.5, -0.3]) == 0.0
    h = hemisphere(2)
    X = random_points(h.chart, 200, np.random.default_rng(1))
    mu = conformal_factor(h.chart, h.field, X)
    pole = conformal_factor(h.chart, h.field, [0.0, 0.0])
    assert pole == pytest.approx(2.0)
    assert np.all(mu <= pole) and mu.min() < pole - 0.1


def test_classify_examples():
    rep = classify(*_pair(euclidean_dilation(3)))
    assert rep.is_conformal and rep.is_homothety
    assert rep.mu_min == pytest.approx(2.0) and rep.mu_max == pytest.approx(2.0)
    rep = classify(*_pair(euclidean_quadratic(3)))
    assert not rep.is_conformal and rep.max_deficit > 1e-2
    rep = classify(*_pair(hemisphere(2)))
    assert rep.is_conformal and not rep.is_homothety


def _pair(entry):
    return entry.chart, entry.field


def test_catalog_conformal_grid(conformal_entries):
    for entry in conformal_entries:
        res = 5 if entry.chart.n == 4 else 9
        rep = classify(entry.chart, entry.field, grid_resolution=res)
        assert rep.max_deficit <= 1e-9, entry.name
        assert rep.is_conformal == entry.expected["is_conformal"]
        assert rep.is_homothety == entry.expected["is_homothety"]
        assert rep.div_h_min > 0


def test_classify_is_scale_invariant():
    e = euclidean_quadratic(3)
    big = FieldSpec(lambda X: 1e6 * e.field.components(X), lambda X: 1e6 * e.field.jacobian(X))
    a = classify(e.chart, e.field).max_deficit
    b = classify(e.chart, big).max_deficit
    assert b == pytest.approx(a, rel=1e-9)


def test_lemma_examples():
    e = euclidean_dilation(3)
    lhs, rhs, _ = lemma_divergence_check(e.chart, e.field, 2.0, [1.0, 0.0, 0.0])
    assert lhs == pytest.approx(1.0) and rhs == pytest.approx(1.0)
    lhs, rhs, _ = lemma_divergence_check(e.chart, e.field, 3.0, [0.3, 0.2, -0.4])
    assert rhs == 0.0 and abs(lhs) <= 1e-9
    lhs, rhs, err = lemma_divergence_check(e.chart, e.field, 0.0, [0.3, 0.2, -0.4])
    assert lhs == pytest.approx(3.0) and err <= 1e-12
    with pytest.raises(TooCloseToZeroSet):
        lemma_divergence_check(e.chart, e.field, 1.0, [0.0, 0.0, 0.0])


def test_lemma_on_cone_closed_form():
    c = cone()
    lhs, rhs, _ = lemma_divergence_check(c.chart, c.field, 1.0, [1.6, 0.3])
    assert lhs == pytest.approx(1.0 / 1.6) and rhs == pytest.approx(1.0 / 1.6)


def test_lemma_negative_control(rng):
    q = euclidean_quadratic(3)
    X = random_points(q.chart, 100, rng)
    _, _, err = lemma_divergence_check(q.chart, q.field, 2.0, X)
    assert err.max() > 1e-3


def test_radial_identity_examples():
    e = euclidean_dilation(3, 3.0)
    lhs, rhs, _ = radial_identity_check(e.chart, e.field, [1.0, 2.0, 2.0])
    assert lhs == pytest.approx(9.0) and rhs == pytest.approx(9.0)
    lhs, rhs, _ = radial_identity_check(e.chart, zero_field(3), [1.0, 2.0, 2.0])
    assert lhs == 0.0 and rhs == 0.0
    c = cone()
    lhs, rhs, _ = radial_identity_check(c.chart, c.field, [2.0, 1.0])
    assert lhs == pytest.approx(4.0) and rhs == pytest.approx(4.0)


def test_listed_zeros_vanish(conformal_entries):
    for entry in conformal_entries:
        for z in entry.field.zero_set:
            assert field_norm(entry.chart, entry.field, z) < 1e-12


def test_inverse_metric_consistency(conformal_entries, rng):
    for entry in conformal_entries:
        X = random_points(entry.chart, 5, rng)
        prod = np.einsum("bij,bjk->bik", metric_at(entry.chart, X), inverse_metric(entry.chart, X))
        np.testing.assert_allclose(prod, np.broadcast_to(np.eye(entry.chart.n), prod.shape), atol=1e-12)
