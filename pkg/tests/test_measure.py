import math

import numpy as np
import pytest

from csasim import (BoxDomain, CSAModel, Field, IntensityFamily, ProcessState, QuadratureGrid,
                    RadiusField, TestFunction, simulate)
from csasim.errors import Refusal
from csasim.measure import (SampleStatistics, ball_count, center_counts, central_moments,
                            centered_scaled_sum, compute_G, compute_J, compute_Un,
                            conditional_mean_Jk, conditional_means, cumulant_estimate,
                            default_grid, quad_alpha)
from csasim.verify import ensemble_map

from conftest import make_model

UNIT1 = BoxDomain.unit(1)
HALF = TestFunction.indicator_box([0.0], [0.5])


def test_grid_volume_invariant():
    g = QuadratureGrid(BoxDomain((0, 0, 0), (2, 1, 3)), (4, 3, 5))
    assert g.cell_volume * g.n_cells == pytest.approx(6.0)
    assert g.centers.shape == (60, 3)


def test_quad_alpha_examples():
    assert quad_alpha(IntensityFamily.constant(BoxDomain.unit(2), 2.0), QuadratureGrid(BoxDomain.unit(2), 7)) == pytest.approx(2.0)
    dom = BoxDomain((0, 0), (2, 2))
    assert quad_alpha(IntensityFamily.constant(dom, 1.0), QuadratureGrid(dom, 3)) == pytest.approx(4.0)
    fam = IntensityFamily.constant(UNIT1, Field(UNIT1, [1.0, 3.0]))
    assert quad_alpha(fam, QuadratureGrid(UNIT1, 2)) == pytest.approx(2.0)


def test_quad_alpha_with_counts():
    fam = IntensityFamily.limit_plus_exp(UNIT1, 1.0, 1.0, math.log(2))
    g = QuadratureGrid(UNIT1, 4)
    assert quad_alpha(fam, g, [0, 0, 1, 1]) == pytest.approx(0.25 * (2 + 2 + 1.5 + 1.5))


def test_compute_J_examples():
    fam = IntensityFamily.constant(UNIT1, 1.0)
    g = QuadratureGrid(UNIT1, 100)
    assert compute_J(TestFunction.constant(1.0), fam, g) == pytest.approx(1.0)
    assert compute_J(HALF, fam, g) == pytest.approx(0.5)
    assert compute_J(TestFunction.monomial([1]), fam, g) == pytest.approx(0.5, abs=1e-15)


def test_compute_J_weighted_by_beta():
    # beta = 1 on [0, 1/2), 3 on [1/2, 1]: J(indicator [0, 1/2]) = 0.5 / 2 = 1/4
    fam = IntensityFamily.constant(UNIT1, Field(UNIT1, [1.0, 3.0]))
    assert compute_J(HALF, fam, QuadratureGrid(UNIT1, 10)) == pytest.approx(0.25)


def test_compute_G_examples():
    fam = IntensityFamily.constant(UNIT1, 1.0)
    g = QuadratureGrid(UNIT1, 100)
    one = TestFunction.constant(1.0)
    assert compute_G(one, one, fam, g) == pytest.approx(0.0, abs=1e-15)
    assert compute_G(HALF, HALF, fam, g) == pytest.approx(0.25)


def test_compute_Un():
    fam = IntensityFamily.limit_plus_exp(UNIT1, Field(UNIT1, [1.0, 2.0]), 1.0, 1.0)
    g = QuadratureGrid(UNIT1, 50)
    f = TestFunction.cosine([1.0])
    assert compute_Un(f, 1, fam, g) == pytest.approx(0.0, abs=1e-14)
    assert compute_Un(f, 2, fam, g) == pytest.approx(compute_G(f, f, fam, g), rel=1e-12)
    uni = IntensityFamily.constant(UNIT1, 1.0)
    assert compute_Un(HALF, 3, uni, QuadratureGrid(UNIT1, 100)) == pytest.approx(0.0, abs=1e-14)
    # Bernoulli(1/2) fourth central moment is 1/16
    assert compute_Un(HALF, 4, uni, QuadratureGrid(UNIT1, 100)) == pytest.approx(1 / 16)
    with pytest.raises(Refusal):
        compute_Un(f, 7, fam, g)


def test_un_matches_direct_central_moments():
    fam = IntensityFamily.limit_plus_exp(UNIT1, Field(UNIT1, [1.0, 2.0, 0.5, 1.0]), 1.0, 1.0)
    g = QuadratureGrid(UNIT1, 40)
    f = TestFunction.monomial([2])
    w = fam.beta_limit(g.centers)
    w = w / w.sum()
    fv = f(g.centers)
    mu = np.sum(w * fv)
    for n in range(1, 7):
        assert compute_Un(f, n, fam, g) == pytest.approx(np.sum(w * (fv - mu) ** n), abs=1e-13)


def test_sup_norm_exact():
    dom = BoxDomain((-1, 0), (2, 1))
    assert TestFunction.monomial([2, 1]).sup_norm(dom) == 4.0
    assert TestFunction.indicator_box([5, 5], [6, 6]).sup_norm(dom) == 0.0
    assert TestFunction.indicator_box([0, 0], [0.5, 0.5]).sup_norm(dom) == 1.0
    assert TestFunction.cosine([0.1, 0.0]).sup_norm(BoxDomain((0.5, 0), (1.0, 1))) == pytest.approx(
        math.cos(2 * math.pi * 0.05))
    assert TestFunction.constant(-3).sup_norm(dom) == 3.0


def test_conditional_mean_examples():
    grid = QuadratureGrid(UNIT1, 200)
    const = make_model(1, "constant")
    assert conditional_mean_Jk(HALF, ProcessState(const), grid) == pytest.approx(
        compute_J(HALF, const.family, grid))
    exp = make_model(1, "exp", r=0.25)
    st = simulate(exp, 30, seed=2)
    assert conditional_mean_Jk(TestFunction.constant(1.0), st, grid) == pytest.approx(1.0)


def test_conditional_mean_past_cutoff_is_limit():
    model = make_model(1, "finite", r=0.3, beta_limit=1.0, overrides=[5.0, 0.5])
    grid = QuadratureGrid(UNIT1, 100)
    st = simulate(model, 400, seed=3)
    assert center_counts(st, grid).min() >= 2
    assert conditional_mean_Jk(HALF, st, grid) == compute_J(HALF, model.family, grid)


def test_conditional_means_match_prefix_evaluation():
    model = make_model(2, "exp", r=0.2)
    grid = QuadratureGrid(model.domain, 12)
    st = simulate(model, 40, seed=5)
    f = TestFunction.cosine([1.0, 0.5])
    seq = conditional_means(f, st, grid)
    for k in (0, 1, 17, 39):
        pre = ProcessState(model)
        for p in st.points[:k]:
            pre.insert(p)
        assert seq[k] == pytest.approx(conditional_mean_Jk(f, pre, grid), rel=1e-12)


def test_conditional_mean_bound():
    # |J_k(f) - J(f)| <= (2 ||f|| / beta_min) * sup_x |beta_n(x) - beta(x)|  (with alpha's |D| = 1)
    model = make_model(1, "exp", r=0.1, a=2.0)
    grid = QuadratureGrid(UNIT1, 100)
    f = TestFunction.cosine([2.0])
    st = simulate(model, 60, seed=4)
    seq = conditional_means(f, st, grid)
    J = compute_J(f, model.family, grid)
    fam = model.family
    for k in range(60):
        counts = center_counts(st, grid, limit=k)
        gap = np.max(np.abs(fam.beta_by_cell(counts, fam.cell_of(grid.centers)) - fam.beta_limit(grid.centers)))
        assert abs(seq[k] - J) <= 2 * f.sup_norm(UNIT1) / fam.beta_min * gap + 1e-12


def test_centered_scaled_sum():
    model = make_model(1)
    st = simulate(model, 50, seed=1)
    assert centered_scaled_sum(TestFunction.constant(2.0), st, np.full(50, 2.0)) == 0.0
    one = simulate(model, 1, seed=2)
    assert centered_scaled_sum(HALF, one, [0.3]) == pytest.approx(HALF(one.points[0]) - 0.3)
    with pytest.raises(ValueError):
        centered_scaled_sum(HALF, st, np.zeros(49))


def test_centered_sum_binomial_variance():
    model = make_model(1)
    S = ensemble_map(model, 2000, 1000, 8,
                     lambda st: centered_scaled_sum(HALF, st, np.full(2000, 0.5)), threads=1)
    assert abs(np.var(S) / 0.25 - 1) < 0.15


def test_ball_count_examples():
    model = make_model(2)
    st = ProcessState(model).insert([0.4, 0.4])
    bc = ball_count(st, [0.4, 0.4], 0.1)
    assert bc.count == 1 and not bc.clipped
    assert ball_count(st, [0.4, 0.4], 1e-12).count == 1
    assert ball_count(st, [0.5, 0.5], 1e-12).count == 0
    assert ball_count(st, [0.01, 0.5], 0.1).clipped
    with pytest.raises(ValueError):
        ball_count(ProcessState(model), [0.5, 0.5], 0.1)


def test_ball_count_binomial_mean():
    model = make_model(2, r=0.1)
    counts = ensemble_map(model, 5000, 2000, 6, lambda st: ball_count(st, [0.5, 0.5], 1.0).count,
                          threads=1)
    assert abs(np.mean(counts) / math.pi - 1) < 0.05


def test_cumulant_examples():
    assert [cumulant_estimate(np.full(40, 3.3), n) for n in (2, 3, 4)] == [0.0, 0.0, 0.0]
    pm = np.tile([-1.0, 1.0], 50)
    assert cumulant_estimate(pm, 2) == 1.0 and cumulant_estimate(pm, 3) == 0.0
    assert cumulant_estimate(pm, 4) == -2.0
    with pytest.raises(Refusal):
        cumulant_estimate(np.zeros(29), 2)
    z = np.random.default_rng(2024).standard_normal(100_000)
    assert abs(cumulant_estimate(z, 3)) < 0.03 and abs(cumulant_estimate(z, 4)) < 0.06


def test_sample_statistics_consistent():
    v = np.random.default_rng(1).exponential(size=500)
    s = SampleStatistics.from_values(v)
    assert s.k2 == s.variance == pytest.approx(np.var(v))
    assert np.allclose(s.central_moments, central_moments(v))
    assert s.k4 == pytest.approx(cumulant_estimate(v, 4))


def test_default_grid_refines_fields():
    dom = BoxDomain((0, 0), (1, 1))
    fam = IntensityFamily.limit_plus_exp(dom, Field(dom, [[1, 2, 3]]), 1.0, 1.0)
    model = CSAModel(dom, RadiusField.grid(dom, [[0.1], [0.2]]), fam)
    g = default_grid(model)
    assert g.refines(fam.resolution) and g.refines((2, 1))
