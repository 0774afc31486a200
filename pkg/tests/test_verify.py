import json
import math

import numpy as np
import pytest
from scipy import stats

from csasim import BoxDomain, QuadratureGrid, TestFunction
from csasim import verify as V
from csasim.errors import Refusal
from csasim.verify import VerificationReport, recompute

from conftest import make_model

HALF1 = TestFunction.indicator_box([0.0], [0.5])
HALF2 = TestFunction.indicator_box([0.0, 0.0], [0.5, 1.0])


def test_thread_count_does_not_change_results(monkeypatch):
    model = make_model(2, "exp", r=0.1)
    one = V.ensemble_map(model, 200, 12, 5, lambda st: st.points.copy(), threads=1)
    four = V.ensemble_map(model, 200, 12, 5, lambda st: st.points.copy(), threads=4)
    assert all(np.array_equal(a, b) for a, b in zip(one, four))
    monkeypatch.setenv(V.THREADS_ENV, "3")
    assert V.resolve_threads() == 3 and V.resolve_threads(2) == 2


def test_report_verdict_recomputes_from_json():
    rep = V.run_lln(make_model(1, "exp"), HALF1, (50, 500), N=40, seed=3)
    d = json.loads(json.dumps(rep.to_dict()))
    assert recompute(d) == rep.verdict
    d["threshold"]["final_error"]["value"] = 0.0
    assert recompute(d)["overall"] == "FAIL"
    again = VerificationReport.from_dict(json.loads(json.dumps(rep.to_dict())))
    assert again.to_dict() == rep.to_dict()


def test_every_verdict_has_threshold():
    rep = V.run_poisson(make_model(2, r=0.1), [0.5, 0.5], 0.5, m=500, N=200, seed=1)
    assert set(rep.verdict["criteria"]) == set(rep.threshold)
    for t in rep.threshold.values():
        assert t["observed"] in rep.observed


def test_lln_binomial():
    rep = V.run_lln(make_model(2, r=0.1), HALF2, (100, 1000, 10000), N=200, seed=4)
    assert rep.passed
    assert rep.observed["median_abs_error_at_max_m"] < 0.02


def test_lln_constant_function_degenerate():
    rep = V.run_lln(make_model(1, "exp"), TestFunction.constant(1.0), (10, 100), N=20, seed=1)
    assert rep.observed["median_abs_error"] == [0.0, 0.0]
    assert rep.passed and any("degenerate" in w for w in rep.warnings)


def test_lln_rejects_unsorted_m_list():
    with pytest.raises(ValueError):
        V.run_lln(make_model(1), HALF1, (100, 10), N=5, seed=1)


def test_clt_binomial_window():
    rep = V.run_clt(make_model(1), HALF1, m=2000, N=500, seed=2)
    lo, hi = rep.threshold["variance"]["value"]
    assert lo == pytest.approx(0.25 * (1 - 3 * math.sqrt(2 / 500) - 0.05), abs=1e-9)
    assert 0.19 < lo and hi < 0.31
    assert rep.passed


def test_clt_constant_function_skips_ks():
    rep = V.run_clt(make_model(1), TestFunction.constant(2.0), m=50, N=40, seed=2)
    assert rep.observed["variance"] == 0.0
    assert rep.verdict["criteria"]["ks"] == "SKIP" and rep.passed


def test_clt_refuses_rate_violation():
    with pytest.raises(Refusal, match="rate condition"):
        V.run_clt(make_model(1, "poly", q=0.4), HALF1, m=50, N=10, seed=1)


def test_clt_limit_centering_runs():
    rep = V.run_clt(make_model(1, "exp"), HALF1, m=200, N=60, seed=2, centering="limit")
    assert rep.params["centering"] == "limit"


def test_poisson_lambda_examples():
    assert V.poisson_lambda(make_model(1), [0.5], 1.0) == pytest.approx(2.0)
    assert V.poisson_lambda(make_model(2), [0.5, 0.5], 0.5) == pytest.approx(0.25 * math.pi)


def test_poisson_binomial():
    rep = V.run_poisson(make_model(2, r=0.1), [0.5, 0.5], 0.5, m=5000, N=2000, seed=7)
    assert rep.reference["lambda"] == pytest.approx(0.7853981634)
    assert rep.passed


def test_poisson_refuses_boundary_ball():
    with pytest.raises(Refusal):
        V.run_poisson(make_model(2), [0.001, 0.5], 0.5, m=100, N=10, seed=1)


def test_tv_bound_binomial_closed_form():
    rep = V.run_poisson_tv_bound(make_model(2, r=0.1), [0.5, 0.5], 0.5, m=500, N=200, seed=3)
    assert rep.reference["m_pm_squared"] == pytest.approx(500 * (math.pi / 2000) ** 2, rel=1e-12)
    assert rep.reference["m_pm_squared"] == pytest.approx(0.00123, abs=5e-6)
    assert rep.observed["drift_mean"] < 1e-10
    assert rep.passed


def test_binomial_poisson_tv_below_le_cam():
    # exact TV(Binomial(m, p), Poisson(m p)) is below m p^2
    m, p = 500, math.pi / 2000
    k = np.arange(0, 60)
    tv = 0.5 * (np.abs(stats.binom.pmf(k, m, p) - stats.poisson.pmf(k, m * p)).sum()
                + stats.poisson.sf(59, m * p))
    assert tv <= m * p * p


def test_tv_bound_refuses_large_m():
    with pytest.raises(Refusal):
        V.run_poisson_tv_bound(make_model(2), [0.5, 0.5], 0.5, m=501, N=10, seed=1)


def test_tv_bound_finite_perturbation_runs():
    rep = V.run_poisson_tv_bound(make_model(2, "finite", r=0.2, overrides=[2.0]), [0.5, 0.5], 0.5,
                                 m=300, N=50, seed=1)
    assert rep.reference["bound"] >= rep.reference["m_pm_squared"]


def test_coverage_delta0_recipe():
    l, d0 = V.coverage_delta0(make_model(1, r=0.5))
    assert (l, d0) == (9, pytest.approx(1 / 9))
    l2, d02 = V.coverage_delta0(make_model(2, "exp", r=0.1))
    assert l2 == 41 and d02 == pytest.approx(41 ** -2 * 0.5)


def test_coverage_binomial():
    rep = V.run_coverage(make_model(1, r=0.5), None, (100, 1000, 10000), N=200, seed=1)
    assert rep.params["delta"] == pytest.approx(1 / 18)
    assert rep.passed


def test_coverage_refuses_large_delta():
    with pytest.raises(Refusal, match="delta0"):
        V.run_coverage(make_model(1, r=0.5), 0.2, (10, 100), N=5, seed=1)


def test_coverage_grid_resolution():
    g = V.coverage_grid(make_model(2, r=0.1))
    assert max(g.widths) <= 0.05


def test_cumulants_refuse_poly():
    with pytest.raises(Refusal, match="exponential rate"):
        V.run_cumulants(make_model(1, "poly"), HALF1, m=100, N=40, seed=1)
    with pytest.raises(Refusal):
        V.run_cumulants(make_model(1, "exp"), HALF1, eps=0.6, m=100, N=40, seed=1)


def test_cumulants_binomial():
    rep = V.run_cumulants(make_model(1), HALF1, 0.25, m=1000, N=1000, seed=5)
    assert rep.params["start_index"] == math.ceil(1000 ** 0.25)
    assert rep.passed


def test_cumulants_constant_function():
    rep = V.run_cumulants(make_model(1, "exp"), TestFunction.constant(1.0), 0.25, m=100, N=50, seed=5)
    assert abs(rep.observed["K2"]) < 1e-20 and rep.observed["abs_K4"] < 1e-20


def test_density_oracle_binomial_m1():
    rep = V.run_density_oracle(make_model(1), 1, QuadratureGrid(BoxDomain.unit(1), 10), 20000, seed=1)
    assert rep.passed and rep.observed["tv"] < 3 * rep.reference["expected_sampling_tv"]


def test_density_oracle_refusals():
    model = make_model(1, "exp")
    with pytest.raises(Refusal):
        V.run_density_oracle(model, 4, None, 10, seed=1)
    with pytest.raises(Refusal):
        V.run_density_oracle(model, 3, QuadratureGrid(model.domain, 101), 10, seed=1)


def test_expected_sampling_tv_matches_simulation():
    table = np.full(100, 0.01)
    rng = np.random.default_rng(0)
    tvs = [0.5 * np.abs(rng.multinomial(10**5, table) / 1e5 - table).sum() for _ in range(200)]
    assert np.mean(tvs) == pytest.approx(V.expected_sampling_tv(table, 10**5), rel=0.03)


def test_uniform_gof_binomial_only():
    assert V.run_uniform_gof(make_model(2), 1000, 100, seed=2).passed
    with pytest.raises(Refusal):
        V.run_uniform_gof(make_model(2, "exp"), 10, 10, seed=2)
