import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ckntools.catalog import cone, euclidean_dilation, hemisphere
from ckntools.errors import DegenerateAnnulus, SupportOutsideChart
from ckntools.geometry import field_norm, random_points
from ckntools.testfunctions import (
    ExtremalFamily,
    log_cutoff,
    power_cutoff,
    smooth_bump,
    truncated_gaussian,
    zero_function,
)


def fd_gradient(u, X, step=1e-6):
    cols = []
    for k in range(X.shape[1]):
        e = np.zeros(X.shape[1])
        e[k] = step
        cols.append((u.value(X + e) - u.value(X - e)) / (2 * step))
    return np.stack(cols, axis=1)


def members(entry):
    chart, fld = entry.chart, entry.field
    rng = np.random.default_rng(0)
    X = random_points(chart, 2000, rng)
    rho = field_norm(chart, fld, X)
    rho_out = 0.9 * rho.max()
    if entry.name == "cone":
        rho_out = 0.95 * chart.upper[0]
        rho_in = 1.05 * chart.lower[0]
    else:
        rho_out = 0.8 * min(chart.upper - chart.lower) / 2
        rho_in = rho_out / 5
    out = [
        power_cutoff(chart, fld, 0.5, rho_in, rho_out),
        log_cutoff(chart, fld, 0.3, rho_in, rho_out),
    ]
    if fld.zero_set:
        out.append(truncated_gaussian(chart, fld, 0.3 * rho_out, rho_out))
    c = 0.5 * (chart.lower + chart.upper)
    r = 0.3 * float(min(chart.upper - chart.lower))
    out.append(smooth_bump(c, 0.4 * r, r, chart))
    return out


def test_gradients_match_finite_differences(conformal_entries):
    rng = np.random.default_rng(7)
    for entry in conformal_entries:
        for u in members(entry):
            lo, hi = u.support
            lo = np.maximum(lo, entry.chart.lower + 1e-4)
            hi = np.minimum(hi, entry.chart.upper - 1e-4)
            X = rng.uniform(lo, hi, size=(100, entry.chart.n))
            if entry.field.zero_set:
                X = X[field_norm(entry.chart, entry.field, X) > 1e-3]
            g = u.gradient(X)
            fd = fd_gradient(u, X)
            scale = max(1.0, np.abs(g).max())
            assert np.abs(g - fd).max() <= 1e-4 * scale, (entry.name, u.family_params["family"])


def test_bump_examples():
    u = smooth_bump([0.1, 0.2], 0.2, 0.5)
    assert u.value([0.1, 0.2]) == 1.0
    assert u.value([0.7, 0.2]) == 0.0
    np.testing.assert_array_equal(u.gradient([0.7, 0.2]), 0.0)
    with pytest.raises(ValueError):
        smooth_bump([0, 0], 0.5, 0.5)
    with pytest.raises(SupportOutsideChart):
        smooth_bump([0.8, 0.0, 0.0], 0.1, 0.3, euclidean_dilation(3).chart)


def test_values_vanish_on_support_boundary(conformal_entries):
    for entry in conformal_entries:
        for u in members(entry):
            lo, hi = u.support
            n = entry.chart.n
            rng = np.random.default_rng(1)
            for axis in range(n):
                if entry.chart.periodic[axis]:
                    continue
                for bound in (lo[axis], hi[axis]):
                    X = rng.uniform(lo, hi, size=(50, n))
                    X[:, axis] = bound
                    assert np.all(u.value(X) == 0.0)


def test_power_cutoff_examples():
    e = euclidean_dilation(3)
    u = power_cutoff(e.chart, e.field, 0.0, 0.1, 0.9)
    assert u.value([0.1, 0.0, 0.0]) == 0.0
    assert u.value([0.5, 0.0, 0.0]) == 1.0
    v = power_cutoff(e.chart, e.field, 0.5, 0.1, 0.9)
    assert v.value([0.5, 0.0, 0.0]) == pytest.approx(0.5 ** -0.5)
    assert v.family_params["anchor"] == "field_norm"
    with pytest.raises(DegenerateAnnulus):
        power_cutoff(e.chart, e.field, 0.5, 0.5, 0.52)
    with pytest.raises(DegenerateAnnulus):
        log_cutoff(e.chart, e.field, 0.5, 0.5, 0.4)


def test_annulus_support_avoids_zero():
    e = euclidean_dilation(2)
    u = power_cutoff(e.chart, e.field, 0.5, 0.05, 0.9)
    X = random_points(e.chart, 5000, np.random.default_rng(2))
    live = u.value(X) != 0
    assert np.all(field_norm(e.chart, e.field, X[live]) >= 0.05)


def test_anchored_support_must_fit_chart():
    h = hemisphere(2)
    with pytest.raises(SupportOutsideChart):
        power_cutoff(h.chart, h.field, 0.5, 0.05, 10.0)


def test_cone_annulus_wraps_periodic_angle():
    c = cone()
    u = power_cutoff(c.chart, c.field, 0.5, 0.6, 1.9)
    assert u.value([1.0, 0.0]) == u.value([1.0, 3.0]) > 0


def test_zero_function_and_scaling():
    e = euclidean_dilation(2)
    z = zero_function(e.chart)
    assert z.value([0.1, 0.1]) == 0.0
    u = smooth_bump([0, 0], 0.2, 0.6, e.chart)
    v = u.scaled(2.5)
    assert v.value([0.1, 0.0]) == 2.5
    assert v.radial_profile(np.array([0.1]))[0][0] == 2.5


def test_extremal_family_descriptor():
    fam = ExtremalFamily("power_cutoff", smoothing=0.2)
    e = euclidean_dilation(3)
    u = fam.member(e.chart, e.field, 0.5, 0.01, 0.9)
    assert u.family_params["smoothing"] == 0.2
    with pytest.raises(ValueError):
        ExtremalFamily("wavelet")
    with pytest.raises(ValueError):
        ExtremalFamily(delta_range=(1.0, 0.0))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.5), st.floats(0.01, 0.3), st.floats(1.2, 50.0))
def test_radial_profile_matches_pointwise_value(delta, rho_in, ratio):
    e = euclidean_dilation(3)
    rho_out = min(rho_in * ratio, 0.95)
    if rho_out / rho_in < 1.1:
        return
    u = log_cutoff(e.chart, e.field, delta, rho_in, rho_out)
    r = np.geomspace(rho_in * 0.9, rho_out * 1.01, 40)
    X = np.zeros((40, 3))
    X[:, 2] = r
    np.testing.assert_allclose(u.radial_profile(r)[0], u.value(X), rtol=1e-12, atol=1e-300)
