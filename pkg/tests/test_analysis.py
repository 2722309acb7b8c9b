import math
import warnings

import pytest
from hypothesis import given, strategies as st
from scipy.stats import beta

from bellsurgery.analysis import (ExponentialFit, LogicalErrorEstimate, ebit_budget, ebit_cost_for_target,
                                  ebit_saving, ebits_per_round, estimate_pL, find_threshold, fit_exponential,
                                  lambda_factors, observed_distance, remap_to_ebits, wilson_interval)


def test_zero_failures_interval():
    est = estimate_pL(0, 10**6)
    assert est.p_L == 0 and est.ci_lo == 0
    # Wilson upper bound; the exact Clopper-Pearson bound is 3.69e-6
    assert est.ci_hi == pytest.approx(3.84e-6, rel=0.01)
    assert beta.ppf(0.975, 1, 10**6) == pytest.approx(3.689e-6, rel=1e-3)


def test_point_estimate():
    est = estimate_pL(500, 10**6)
    assert est.p_L == pytest.approx(5e-4)
    assert est.ci_lo < 5e-4 < est.ci_hi
    assert est.stderr == pytest.approx(math.sqrt(5e-4 * (1 - 5e-4) / 1e6))
    assert est.to_dict()["failures"] == 500


@pytest.mark.parametrize("args", [(1, 0), (-1, 10), (11, 10)])
def test_estimate_rejects_bad_counts(args):
    with pytest.raises(ValueError):
        estimate_pL(*args)


@given(st.integers(min_value=1, max_value=10**7), st.data())
def test_wilson_interval_contains_estimate(shots, data):
    k = data.draw(st.integers(min_value=0, max_value=shots))
    lo, hi = wilson_interval(k, shots)
    est = estimate_pL(k, shots)
    assert 0 <= lo <= est.p_L <= hi <= 1
    assert est.ci_lo <= est.p_L <= est.ci_hi


def test_observed_distance_from_slope():
    # slope 5 over a decade of p gives d_obs = 9
    assert observed_distance(1e-10, 1e-5) == pytest.approx(9.0)
    assert observed_distance(1e-6, 1e-4) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        observed_distance(0, 1e-3)


@given(st.floats(min_value=0.5, max_value=8), st.floats(min_value=1e-12, max_value=1e-3))
def test_observed_distance_inverts_power_law(slope, scale):
    pl = lambda p: scale * (p / 0.001) ** slope  # noqa: E731
    assert observed_distance(pl(0.001), pl(0.01)) == pytest.approx(2 * slope - 1, rel=1e-9)


def _synthetic(pth, ds, ps, a=0.1):
    return {d: [(p, a * (p / pth) ** ((d + 1) / 2)) for p in ps] for d in ds}


def test_threshold_of_synthetic_curves():
    ps = [0.003, 0.004, 0.005, 0.006, 0.007]
    th = find_threshold(_synthetic(0.005, [3, 5, 7], ps))
    assert th.value == pytest.approx(0.005, rel=1e-9)
    assert th.spread == pytest.approx(0.0, abs=1e-12)
    assert [c[:2] for c in th.crossings] == [(3, 5), (5, 7)]


@given(st.floats(min_value=0.0035, max_value=0.0065))
def test_threshold_between_grid_points(pth):
    ps = [0.003, 0.004, 0.005, 0.006, 0.007]
    assert find_threshold(_synthetic(pth, [3, 5], ps)).value == pytest.approx(pth, rel=1e-9)


def test_threshold_errors():
    ps = [0.001, 0.002, 0.003]
    with pytest.raises(ValueError):
        find_threshold({3: [(p, p) for p in ps]})
    with pytest.raises(ValueError):
        find_threshold({3: [(0.001, 0.1), (0.002, 0.2)], 5: [(0.001, 0.01), (0.002, 0.3)]})
    with pytest.raises(ValueError):
        find_threshold(_synthetic(0.1, [3, 5], ps))


def test_lambda_factor_constant_ratio():
    ests = {3: 1e-2, 5: 1e-3, 7: 1e-4}
    lf = lambda_factors(ests)
    assert lf.mean == pytest.approx(10) and lf.std == pytest.approx(0)
    # benchmark ebit keys 5, 9, 13 step by four: a factor 10 per step is sqrt(10) per two ebits
    eb = lambda_factors(remap_to_ebits("BenchmarkTeleported", ests), "Ebit")
    assert set(eb.ratios) == {(5, 9), (9, 13)}
    assert eb.mean == pytest.approx(math.sqrt(10))
    assert lambda_factors(remap_to_ebits("BellTeleported", ests), "Ebit").mean == pytest.approx(10)


def test_lambda_excludes_zero_estimates():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lf = lambda_factors({3: estimate_pL(100, 10**4), 5: estimate_pL(0, 10**4), 7: estimate_pL(0, 10**5)})
    assert lf.ratios == {} and lf.excluded == [(3, 5), (5, 7)] and math.isnan(lf.mean)
    with pytest.raises(ValueError):
        lambda_factors({3: 0.1}, axis="Time")


def test_ebit_accounting():
    assert [ebits_per_round("BellTeleported", d) for d in (3, 5)] == [3, 5]
    assert [ebits_per_round("BenchmarkTeleported", d) for d in (3, 5)] == [5, 9]
    assert ebits_per_round("BellDirect", 7) == ebits_per_round("BenchmarkDirect", 7) == 0
    assert ebit_budget("BellDirect", 7) == 7 and ebit_budget("BenchmarkDirect", 7) == 13
    assert remap_to_ebits("BellTeleported", {3: 1, 5: 2}) == {3: 1, 5: 2}
    assert ebit_saving(10, 17) == pytest.approx(7 / 17)


def test_exponential_fit_recovers_parameters():
    ests = {d: math.exp(-1.0 - 1.2 * d) for d in (3, 5, 7, 9)}
    fit = fit_exponential(ests)
    assert fit.intercept == pytest.approx(-1.0) and fit.slope == pytest.approx(-1.2)
    assert fit.lambda_d == pytest.approx(math.exp(2.4))
    assert fit.distance_for(fit(11)) == pytest.approx(11)
    with pytest.raises(ValueError):
        fit_exponential({3: 0.1, 5: 0.01})


def test_fit_weights_follow_failure_counts():
    ests = {3: estimate_pL(10000, 10**5), 5: estimate_pL(1000, 10**5), 7: estimate_pL(3, 10**5)}
    fit = fit_exponential(ests)
    # the two well-measured points dominate
    assert fit(3) == pytest.approx(0.1, rel=0.02) and fit(5) == pytest.approx(0.01, rel=0.05)


def test_ebit_cost_for_target():
    bench = ExponentialFit(math.log(0.1), -math.log(10) / 2, ((3, 0.01), (5, 0.001)))
    bell = ExponentialFit(math.log(0.1), -math.log(10) / 2, ((3, 0.01),))
    costs = ebit_cost_for_target(0.01, {"BenchmarkTeleported": bench, "BellTeleported": bell})
    assert costs["BenchmarkTeleported"][:2] == (3, 5)
    assert costs["BellTeleported"][:2] == (3, 3)
    assert costs["BellTeleported"][2] == pytest.approx(2.0)
    assert ebit_cost_for_target(1e-4, {"BellTeleported": bell})["BellTeleported"][0] == 7
    with pytest.raises(ValueError):
        ebit_cost_for_target(0.01, {"BellTeleported": ExponentialFit(0, 0.1, ())})


def test_estimate_is_frozen():
    est = LogicalErrorEstimate(0.1, 10, 1, 0.0, 0.4)
    with pytest.raises(AttributeError):
        est.p_L = 0.2
