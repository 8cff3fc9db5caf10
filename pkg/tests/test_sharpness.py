import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from ckntools import CKNParams, ExtremalFamily, sweep
from ckntools.catalog import cone, euclidean_dilation
from ckntools.errors import FitIllConditioned, ParameterOutOfRange
from ckntools.sharpness import fit_deficit, golden_section_max

E3 = euclidean_dilation(3)
HARDY = CKNParams(1.0, 0.0, 2.0)


def test_golden_section_matches_scipy():
    f = lambda x: math.exp(-((x - 0.37) ** 2)) * (1.0 + 0.2 * math.sin(x))
    x, v, hist = golden_section_max(f, -1.0, 2.0, iterations=40)
    ref = minimize_scalar(lambda t: -f(t), bounds=(-1.0, 2.0), method="bounded", options={"xatol": 1e-10})
    assert x == pytest.approx(ref.x, abs=1e-6)
    assert v == pytest.approx(-ref.fun, rel=1e-12)
    assert len(hist) == 42


def test_fit_deficit_recovers_planted_model():
    R = np.array([10.0, 100.0, 1e3, 1e4])
    y = 0.03 + 0.7 / np.log(R)
    fit = fit_deficit(R, 1.0 - y)["inverse_log"]
    ref = np.polyfit(1.0 / np.log(R), y, 1)
    assert fit["c0"] == pytest.approx(ref[1], abs=1e-12)
    assert fit["c1"] == pytest.approx(ref[0], rel=1e-12)
    assert fit["r_squared"] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("R_values", [[10, 100], [10, 10, 100]])
def test_too_few_R_values(R_values):
    with pytest.raises(FitIllConditioned):
        fit_deficit(R_values, [0.1] * len(R_values))
    with pytest.raises(FitIllConditioned):
        sweep(E3.chart, E3.field, HARDY, ExtremalFamily("power_cutoff"), R_values, [0.5])


def test_R_beyond_chart_rejected():
    c = cone()
    with pytest.raises(ParameterOutOfRange):
        sweep(c.chart, c.field, CKNParams(0.0, 0.0, 2.0), ExtremalFamily("power_cutoff"), [2, 4, 8], [0.5])


def test_hardy_power_cutoff_optimum_near_half():
    st = sweep(E3.chart, E3.field, HARDY, ExtremalFamily("power_cutoff"), [10, 100, 1000],
               np.linspace(0.1, 0.9, 9), cross_check=True)
    assert st.route == "radial" and not st.degenerate
    assert st.sound and st.best_ratio <= 1.0
    assert st.monotone
    assert abs(st.best[-1]["delta"] - 0.5) <= 0.1
    assert st.cross_check["ok"]
    assert all(s["ratio"] <= 1.0 + s["slack"] for s in st.samples)


def test_degenerate_flag():
    st = sweep(E3.chart, E3.field, CKNParams(1.0, 1.0, 2.0), ExtremalFamily("power_cutoff"),
               [10, 100, 1000], [0.2, 0.5])
    assert st.degenerate
    assert all(row["ratio"] == 0.0 for row in st.best)
    assert "degenerate" in st.table()


def test_cone_matches_planar_euclidean():
    # the ratio with a = b = 0, p = 2 is scale invariant on a homothety, so
    # the cone and the plane must agree despite different outer radii
    params = CKNParams(0.0, 0.0, 2.0)
    fam = ExtremalFamily("power_cutoff")
    c, e2 = cone(), euclidean_dilation(2)
    sc = sweep(c.chart, c.field, params, fam, [1.5, 2, 3], np.linspace(0, 1, 5), golden_iterations=8)
    se = sweep(e2.chart, e2.field, params, fam, [1.5, 2, 3], np.linspace(0, 1, 5), golden_iterations=8)
    for a, b in zip(sc.best, se.best):
        assert a["ratio"] == pytest.approx(b["ratio"], rel=1e-8)
    assert sc.monotone and sc.cross_check["ok"]


def test_study_serializes():
    import json

    st = sweep(E3.chart, E3.field, HARDY, ExtremalFamily("log_cutoff"), [10, 100, 1000], [0.4, 0.5, 0.6],
               golden_iterations=3, cross_check=False)
    d = json.loads(json.dumps(st.to_dict()))
    assert d["family"]["kind"] == "log_cutoff"
    assert len(d["best"]) == 3 and d["samples"]
    assert d["extrapolated_limit"] == pytest.approx(1.0 - d["deficit_fit"]["c0"])
