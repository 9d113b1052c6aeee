import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from ample.errors import AllFamiliesFailed, EmptyInput, LengthMismatch, TooFewPoints
from ample.metrics import (FAMILIES, DistFit, ThrRange, abs_error_cdf, ahre, evaluate, fit_best_distribution,
                           fit_distributions, fit_family, mae, mean_sim_time, pdf_distance, pmde, rmse,
                           thr, write_abs_error_cdf)

vals = st.lists(st.floats(60, 160), min_size=1, max_size=40)


def test_rmse_mae_hand():
    assert rmse([3.0, -4.0], [0.0, 0.0]) == pytest.approx(math.sqrt(12.5))
    assert mae([3.0, -4.0], [0.0, 0.0]) == 3.5
    assert rmse([1, 2], [1, 2]) == 0.0 == mae([1, 2], [1, 2])


def test_input_errors():
    with pytest.raises(LengthMismatch):
        rmse([1.0], [1.0, 2.0])
    with pytest.raises(EmptyInput):
        mae([], [])
    with pytest.raises(ValueError):
        ThrRange(10, 5)
    with pytest.raises(ValueError):
        ThrRange(1, 5, 0)


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_metric_properties(data):
    a = np.array(data.draw(vals))
    b = np.array(data.draw(st.lists(st.floats(60, 160), min_size=a.size, max_size=a.size)))
    c = data.draw(st.floats(-50, 50))
    assert rmse(a, b) >= mae(a, b) - 1e-9
    assert rmse(a, b) == pytest.approx(rmse(b, a))
    assert mae(a + c, b + c) == pytest.approx(mae(a, b), abs=1e-9)
    r = ThrRange(80, 120)
    assert 0 <= ahre(a, b, r) <= 100
    assert ahre(a, b, r) == ahre(b, a, r)
    assert 0 <= thr(a, b, 100.0) <= 100


def test_thr_cases():
    assert thr([90, 110], [90, 110], 100) == 100
    assert thr([90, 95], [105, 110], 100) == 0
    assert thr([95, 105], [105, 95], 100) == 0
    assert thr([100, 100], [100, 100], 100) == 100
    assert thr([100], [101], 100) == 0


def test_ahre_cases():
    assert ahre([95, 105], [105, 95], ThrRange(100, 100)) == 100
    assert ahre([90, 130], [90, 130], ThrRange(80, 120)) == 0
    assert ahre([70, 70], [130, 130], ThrRange(80, 120)) == 100
    assert len(ThrRange(80, 100).thresholds) == 21
    assert ThrRange.for_environment(los=True) == ThrRange(80, 100)
    assert ThrRange.for_environment(los=False) == ThrRange(100, 120)


def test_normal_selected():
    x = np.random.default_rng(0).normal(100, 9, 100_000)
    best = fit_best_distribution(x)
    assert best.family == "normal"
    assert best.mean == pytest.approx(100, abs=0.1)
    assert best.std == pytest.approx(9, abs=0.1)


def test_aic_definition():
    x = np.random.default_rng(1).gamma(50, 2, 5000)
    for f in fit_distributions(x):
        assert f.aic == pytest.approx(2 * f.k - 2 * f.loglik)


def test_closed_form_fits_match_scipy():
    rng = np.random.default_rng(2)
    x = rng.weibull(8.0, 20_000) * 90
    ours = fit_family(x, "weibull")
    c, _, scale = stats.weibull_min.fit(x, floc=0)
    assert ours.params["shape"] == pytest.approx(c, rel=1e-4)
    assert ours.params["scale"] == pytest.approx(scale, rel=1e-4)
    y = rng.gamma(30, 3, 20_000)
    a, _, scale = stats.gamma.fit(y, floc=0)
    assert fit_family(y, "gamma").params["shape"] == pytest.approx(a, rel=1e-4)


def test_ricean_moments_stable():
    x = np.random.default_rng(9).normal(600, 8, 20_000)
    f = fit_family(x, "ricean")
    assert f.mean == pytest.approx(600, abs=0.5)
    assert f.std == pytest.approx(8, abs=0.2)
    small = fit_family(stats.rice(1.5, scale=10).rvs(20_000, random_state=1), "ricean")
    assert small.mean == pytest.approx(float(small.dist.mean()), rel=1e-9)
    assert small.std == pytest.approx(float(small.dist.std()), rel=1e-7)


def test_ricean_and_chisquare_recovery():
    rng = np.random.default_rng(3)
    x = stats.rice(2.5, scale=20).rvs(50_000, random_state=rng)
    f = fit_family(x, "ricean")
    assert f.params["nu"] == pytest.approx(50, rel=0.02)
    assert f.params["sigma"] == pytest.approx(20, rel=0.02)
    y = rng.chisquare(90, 50_000)
    assert fit_family(y, "chisquare").params["df"] == pytest.approx(90, rel=0.01)


def test_ricean_matches_scipy_mle():
    x = stats.rice(1.2, scale=15).rvs(5000, random_state=3)
    f = fit_family(x, "ricean")
    b, _, scale = stats.rice.fit(x, floc=0)
    assert f.loglik >= stats.rice.logpdf(x, b, 0, scale).sum() - 1e-6
    assert f.params["nu"] == pytest.approx(b * scale, rel=1e-4)


def test_rayleigh_selected_or_nested():
    x = np.random.default_rng(4).rayleigh(40, 100_000)
    assert fit_best_distribution(x).family in {"rayleigh", "weibull", "ricean"}


def test_degenerate_inputs():
    with pytest.raises(AllFamiliesFailed):
        fit_best_distribution(np.full(100, 3.0))
    with pytest.raises(TooFewPoints):
        fit_best_distribution(np.arange(10.0))


def test_nonpositive_data_skips_positive_families(caplog):
    caplog.set_level("INFO")
    x = np.random.default_rng(5).normal(0, 1, 500)
    fams = {f.family for f in fit_distributions(x)}
    assert fams == {"normal"}
    assert "skipping" in caplog.text


def test_pmde_cases():
    rng = np.random.default_rng(6)
    a = rng.normal(100, 8, 100_000)
    b = rng.normal(100, 8, 100_000)
    assert pmde(a, b) < 0.02
    assert pmde(a, a) == 0.0
    assert pmde(a, a + 500) == pytest.approx(2.0, abs=1e-6)


def test_pdf_distance_quadrature():
    # integral of |phi(x) - phi(x - 1)|, independent oracle by scipy quad
    from scipy.integrate import quad
    exact = quad(lambda t: abs(stats.norm.pdf(t) - stats.norm.pdf(t - 1)), -20, 21, points=[0.5])[0]
    assert exact == pytest.approx(2 * (2 * stats.norm.cdf(0.5) - 1), abs=1e-9)
    fa = DistFit("normal", {}, 0.0, 2, stats.norm(0, 1))
    fb = DistFit("normal", {}, 0.0, 2, stats.norm(1, 1))
    assert pdf_distance(fa, fb) == pytest.approx(exact, abs=1e-3)


def test_mean_sim_time():
    data = np.zeros(1000)
    t = mean_sim_time(lambda d: None, data, rounds=100)
    assert 0 < t < 100
    t1 = mean_sim_time(lambda d: d * 2.0, data, rounds=1000)
    t2 = mean_sim_time(lambda d: d * 2.0, data, rounds=100)
    assert t1 / 3 < t2 < 3 * t1 or t2 < 5
    with pytest.raises(EmptyInput):
        mean_sim_time(lambda d: None, [], 10)
    with pytest.raises(ValueError):
        mean_sim_time(lambda d: None, data, 0)


def test_report_outputs(tmp_path):
    rng = np.random.default_rng(7)
    ref = rng.normal(110, 8, 500)
    pred = ref + rng.normal(0, 2, 500)
    rep = evaluate(pred, ref, ThrRange(100, 120), model="ci", t_p=12.5)
    recs = [json.loads(line) for line in rep.to_jsonl().splitlines()]
    assert [r["metric"] for r in recs] == ["rmse", "mae", "ahre", "pmde", "t_p"]
    assert "RMSE" in rep.to_table()
    assert 0 <= rep.pmde <= 2
    write_abs_error_cdf(tmp_path / "cdf.txt", pred, ref)
    rows = np.loadtxt(tmp_path / "cdf.txt")
    assert rows.shape == (500, 2)
    assert np.all(np.diff(rows[:, 0]) >= 0) and rows[-1, 1] == 1.0
    e, c = abs_error_cdf([1, 3, 2], [0, 0, 0])
    assert list(e) == [1, 2, 3]


def test_selection_deterministic():
    x = np.random.default_rng(8).lognormal(4.6, 0.1, 2000)
    assert fit_best_distribution(x).family == fit_best_distribution(x.copy()).family
    assert set(FAMILIES) == {"normal", "lognormal", "gamma", "weibull", "rayleigh", "ricean", "chisquare"}
