import math

import numpy as np
import pytest

from ckntools.catalog import (
    CATALOG,
    build_entry,
    cone,
    conformal_flat,
    entry_from_manifest,
    euclidean_dilation,
    hemisphere,
    sphere_area,
)
from ckntools.errors import ConfigError, ParameterOutOfRange
from ckntools.fields import classify, conformal_factor, lemma_divergence_check
from ckntools.geometry import covariant_divergence, random_points, volume_element


def test_sphere_area():
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)
    assert sphere_area(4) == pytest.approx(2 * math.pi ** 2)


def test_euclidean_lemma_borderline():
    e = euclidean_dilation(4)
    lhs, rhs, _ = lemma_divergence_check(e.chart, e.field, 4.0, [0.2, 0.1, 0.3, -0.5])
    assert abs(lhs) <= 1e-12 and rhs == 0.0


def test_cone_facts():
    lam = 0.6
    c = cone(lam)
    assert volume_element(c.chart, [2.0, 1.0]) == pytest.approx(2 * lam)
    rep = classify(c.chart, c.field)
    assert rep.is_homothety and rep.mu_min == pytest.approx(2.0)
    assert c.chart.periodic == (False, True)
    assert c.field.radial is not None
    assert cone(lam, theta_range=(0.0, 1.0)).field.radial is None
    with pytest.raises(ParameterOutOfRange):
        cone(1.0)
    with pytest.raises(ParameterOutOfRange):
        cone(0.5, r_range=(0.0, 1.0))


def test_conformal_flat_limits():
    flat = conformal_flat(kappa=0.0)
    rep = classify(flat.chart, flat.field)
    assert rep.is_homothety
    e = conformal_flat(kappa=0.1)
    X = random_points(e.chart, 500, np.random.default_rng(3))
    mu = conformal_factor(e.chart, e.field, X)
    assert mu.min() < 2.0 < mu.max() and mu.min() > 0
    lo, hi = e.expected["mu_range"]
    assert lo - 1e-9 <= mu.min() and mu.max() <= hi + 1e-9
    with pytest.raises(ParameterOutOfRange):
        conformal_flat(kappa=-5.0)


def test_hemisphere_divergence_positive():
    h = hemisphere(3)
    w = h.chart.upper[0]
    corner = np.full(3, 0.999 * w)
    assert covariant_divergence(h.chart, h.field, corner) > 0
    lo, hi = h.expected["mu_range"]
    assert conformal_factor(h.chart, h.field, corner) == pytest.approx(lo, rel=1e-2)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_build_entry_by_name(name):
    entry = build_entry({"name": name})
    assert entry.name == name
    rep = classify(entry.chart, entry.field)
    assert rep.is_conformal == entry.expected["is_conformal"]


def test_build_entry_errors():
    with pytest.raises(ConfigError):
        build_entry({"name": "torus"})
    with pytest.raises(ConfigError):
        build_entry({"name": "euclidean", "radius": 2})
    with pytest.raises(ConfigError):
        build_entry("euclidean")


def test_manifest_catalog_and_affine():
    e = entry_from_manifest({"dimension": 2, "metric": {"catalog": "euclidean", "params": {"n": 2}},
                             "box": {"lower": [-2, -2], "upper": [2, 2]}})
    assert e.chart.box_volume == pytest.approx(16.0)
    a = entry_from_manifest({
        "dimension": 2,
        "box": {"lower": [-1, -1], "upper": [1, 1]},
        "metric": {"affine": {"constant": [[4, 0], [0, 4]]}},
        "field": {"affine": {"offset": [0, 0], "matrix": [[1, 0], [0, 1]]}},
    })
    rep = classify(a.chart, a.field)
    assert rep.is_homothety and rep.div_h_min == pytest.approx(2.0)
    with pytest.raises(ConfigError):
        entry_from_manifest({"metric": {"catalog": "euclidean", "params": {"n": 2}}, "dimension": 3})
    with pytest.raises(ConfigError):
        entry_from_manifest({"metric": {"spline": {}}})
