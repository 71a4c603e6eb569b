import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import quad

from mdlab import (
    DomainError,
    ExactDistribution,
    PairSample,
    RatioTable,
    SteinBudget,
    Variant,
    band,
    check_mgf_bound,
    check_tail_integral,
    conditional_regression,
    fit_constant,
    normal_tail,
    pair_antisymmetry_check,
    ratio_table,
    tail_ratio_table,
    zero_bias_band,
)
from mdlab.models import antivoter


def test_budget_validation():
    with pytest.raises(DomainError):
        SteinBudget(delta=-0.1, delta1=0.0, delta2=0.0)
    with pytest.raises(DomainError):
        SteinBudget(delta=0.1, delta1=0.0, delta2=0.0, theta=0.5)
    with pytest.raises(DomainError):
        SteinBudget(delta=0.1, delta1=0.0, delta2=0.1, variant=Variant.R_QUADRATIC)
    b = SteinBudget(delta=0.1, delta1=0.0, delta2=0.1, alpha=0.5, variant=Variant.R_QUADRATIC)
    assert b.c_alpha() == pytest.approx(2 * 3.5 / 0.5)
    assert SteinBudget(delta=0.1, delta1=0.0, delta2=0.0).c_alpha() == 12.0


def test_band_examples():
    degenerate = SteinBudget(delta=0.0, delta1=0.0, delta2=0.0, theta=1.0)
    assert band(degenerate, 2.0) == (1.0, 1.0, True)
    b = SteinBudget(delta=0.1, delta1=0.0, delta2=0.0, theta=1.0)
    lo, hi, ok = band(b, 0.0)
    assert (lo, hi, ok) == (pytest.approx(0.9), pytest.approx(1.1), True)
    *_, ok3 = band(b, 3.0)
    assert not ok3  # 3 > 0.1^(-1/3) ~ 2.154
    with pytest.raises(DomainError):
        band(b, -1.0)


def test_band_monotone_widening():
    rng = np.random.Generator(np.random.PCG64(7))
    for _ in range(50):
        d, d1, d2 = rng.uniform(0, 0.2, size=3)
        th = 1.0 + rng.uniform(0, 1)
        x = rng.uniform(0, 3)
        base = band(SteinBudget(d, d1, d2, th), x)[1]
        assert band(SteinBudget(d * 2, d1, d2, th), x)[1] >= base
        assert band(SteinBudget(d, d1 * 2, d2, th), x)[1] >= base
        assert band(SteinBudget(d, d1, d2 * 2, th), x)[1] >= base
        assert band(SteinBudget(d, d1, d2, th + 0.5), x)[1] >= base
        assert band(SteinBudget(d, d1, d2, th), x + 0.5)[1] >= base


def test_zero_bias_band_boundaries():
    assert zero_bias_band(0.0, 5.0) == (1.0, 1.0, True)
    *_, ok = zero_bias_band(0.001, 10.0)
    assert ok  # 10 = 0.001^(-1/3), boundary included
    *_, ok2 = zero_bias_band(0.008, 5.001)
    assert not ok2  # 0.008^(-1/3) = 5


def _sym_three_atom():
    # symmetric standardized lattice law with an atom at 0
    return ExactDistribution.from_probs(
        [-math.sqrt(2.0), 0.0, math.sqrt(2.0)], [0.25, 0.5, 0.25]
    )


def test_ratio_table_x0_row_inclusive_convention():
    d = _sym_three_atom()
    b = SteinBudget(delta=0.1, delta1=0.0, delta2=0.0)
    t = ratio_table(d, b, [0.0, 0.5], nudge_atoms=False)
    # inclusive: P(W >= 0)/0.5 = 0.75/0.5
    assert t.ratio[0] == pytest.approx(0.75 / 0.5, rel=1e-14)


def test_ratio_table_x0_row_midpoint_nudge():
    d = _sym_three_atom()
    b = SteinBudget(delta=0.1, delta1=0.0, delta2=0.0)
    t = ratio_table(d, b, [0.0, 0.5])
    # numerator nudged to the midpoint above the atom: P(W > 0)/0.5
    assert t.ratio[0] == pytest.approx(0.25 / 0.5, rel=1e-14)
    assert t.log_normal_tail[0] == pytest.approx(math.log(0.5), abs=1e-15)


def test_ratio_table_binomial400_rational_oracle():
    k = 400
    d = ExactDistribution.binomial_half(k).standardize(200.0, 10.0)
    b = SteinBudget(delta=2.0 / 20.0, delta1=0.0, delta2=0.0)
    t = ratio_table(d, b, [0.95, 1.0, 1.05])
    # x = 1.0 hits the atom s = 210; nudged numerator = P(S >= 211)
    tail_211 = Fraction(sum(math.comb(400, s) for s in range(211, 401)), 2**400)
    assert t.log_tail[1] == pytest.approx(math.log(tail_211), abs=1e-12)
    # x = 0.95 is atom-free: inclusive tail = P(S >= 210)
    tail_210 = Fraction(sum(math.comb(400, s) for s in range(210, 401)), 2**400)
    assert t.log_tail[0] == pytest.approx(math.log(tail_210), abs=1e-12)
    assert t.ratio[1] == pytest.approx(
        float(tail_211) / normal_tail(1.0), rel=1e-10
    )


def test_ratio_table_rejects_bad_inputs():
    d = _sym_three_atom()
    b = SteinBudget(delta=0.1, delta1=0.0, delta2=0.0)
    with pytest.raises(DomainError):
        ratio_table(d, b, [])
    with pytest.raises(DomainError):
        ratio_table(ExactDistribution.binomial_half(10), b, [0.0, 1.0])
    with pytest.raises(DomainError):
        ratio_table(d, b, [1.0, 0.5])


def test_ratio_table_single_point_grid():
    d = _sym_three_atom()
    t = tail_ratio_table(d, [0.0], lambda x: 1.0)
    assert t.x.size == 1 and np.isfinite(t.ratio[0])


def test_fit_constant_examples():
    x = np.array([0.0, 1.0])
    ones = np.ones_like(x)
    t = RatioTable(x, ones, ones, ones, 0.1 * ones, np.array([True, True]))
    assert fit_constant(t) == 0.0
    t2 = RatioTable(
        np.array([1.0]),
        np.zeros(1),
        np.zeros(1),
        np.array([1.2]),
        np.array([0.1]),
        np.array([True]),
    )
    assert fit_constant(t2) == pytest.approx(2.0, rel=1e-14)
    t3 = RatioTable(
        np.array([1.0]),
        np.zeros(1),
        np.zeros(1),
        np.array([1.2]),
        np.array([0.1]),
        np.array([False]),
    )
    with pytest.raises(DomainError):
        fit_constant(t3)


def test_fit_constant_scale_consistency():
    d = antivoter.stationary_law(antivoter.transition_rates(200))
    b1 = SteinBudget(delta=0.05, delta1=0.02, delta2=0.01)
    b2 = SteinBudget(delta=0.10, delta1=0.04, delta2=0.02)
    grid = np.linspace(0.0, 1.5, 7)
    c1 = fit_constant(ratio_table(d, b1, grid))
    c2 = fit_constant(ratio_table(d, b2, grid))
    assert c1 == pytest.approx(2.0 * c2, rel=1e-12)


def test_conditional_regression_zero_bias_like():
    rng = np.random.Generator(np.random.PCG64(1))
    samples = [PairSample(w=float(w), w_prime=float(w), d=1.0, r=0.0)
               for w in rng.normal(size=200)]
    assert conditional_regression(samples, bins=5) == (0.0, 0.0, 1.0)


def test_conditional_regression_constant_d():
    rng = np.random.Generator(np.random.PCG64(2))
    samples = [PairSample(w=float(w), w_prime=float(w), d=2.0, r=0.0)
               for w in rng.normal(size=100)]
    d1, d2, theta = conditional_regression(samples, bins=5)
    assert theta == 2.0


def test_conditional_regression_antivoter_closed_form():
    n = 40
    chain = antivoter.transition_rates(n)
    w = chain.w_values()[1:n]
    e_d = (n / chain.sigma**2) * (chain.birth[1:n] + chain.death[1:n])
    samples = []
    for wi, di in zip(w, e_d):
        samples.extend([PairSample(w=float(wi), w_prime=float(wi), d=float(di), r=0.0)] * 10)
    d1, d2, theta = conditional_regression(samples, bins=w.size)
    want = float(np.max(np.abs(w**2 - 1.0) / (2.0 * (n - 1.0) * (1.0 + np.abs(w)))))
    assert d1 == pytest.approx(want, abs=1e-12)
    assert d2 == 0.0
    assert theta == pytest.approx(float(np.max(e_d)), abs=1e-12)


def test_conditional_regression_preconditions():
    samples = [PairSample(0.0, 0.0, 1.0, 0.0)] * 30
    with pytest.raises(DomainError):
        conditional_regression(samples, bins=4)
    with pytest.raises(DomainError):
        conditional_regression(samples, bins=5)  # needs 50


def test_check_mgf_bound_binomial_stability():
    fitted = []
    for k in (64, 256, 1024):
        d = ExactDistribution.binomial_half(k).standardize(k / 2, math.sqrt(k / 4))
        budget = SteinBudget(delta=2.0 / math.sqrt(k), delta1=0.0, delta2=0.0)
        res = check_mgf_bound(d, budget, np.linspace(0.01, 2.0, 40))
        assert res.ok
        # symmetric Bernoulli sums are sub-Gaussian: log MGF <= t^2/2
        assert res.fitted_c1 <= 0.0
        fitted.append(res.fitted_c1)
    assert max(abs(c) for c in fitted) < 0.01


def test_check_mgf_bound_skips_and_errors():
    d = ExactDistribution.uniform([-1.0, 1.0])
    zero = SteinBudget(delta=0.0, delta1=0.0, delta2=0.0)
    with pytest.raises(DomainError):
        check_mgf_bound(d, zero, [0.5, 1.0])  # zero denominator everywhere
    b = SteinBudget(delta=0.5, delta1=0.0, delta2=0.0)
    res = check_mgf_bound(d, b, [1e-4, 0.5, 5.0])
    assert res.used_t == (0.5,)
    assert set(res.skipped_t) == {1e-4, 5.0}
    assert res.abs_mean == pytest.approx(1.0)
    with pytest.raises(DomainError):
        check_mgf_bound(d, SteinBudget(delta=0.1, delta1=0.0, delta2=0.3), [0.5])


def test_check_tail_integral_trivial_cases():
    d = ExactDistribution.binomial_half(16).standardized()
    assert check_tail_integral(d, 1, 0.0) == (0.0, 0.0)
    point = ExactDistribution.point_mass(0.0)
    value, ratio = check_tail_integral(point, 1, 2.0)
    assert value == 0.0 and ratio == 0.0
    with pytest.raises(DomainError):
        check_tail_integral(d, 0, 1.0)


def test_check_tail_integral_quadrature_oracle():
    d = ExactDistribution.binomial_half(256).standardize(128.0, 8.0)
    for k in (1, 2, 3):
        value, ratio = check_tail_integral(d, k, 2.0)
        # oracle: piecewise quadrature at 10x finer subdivision
        cuts = [0.0] + [float(s) for s in d.support if 0.0 < s < 2.0] + [2.0]
        oracle = 0.0
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            p = math.exp(d.log_upper_tail(0.5 * (lo + hi)))
            for j in range(10):
                a = lo + (hi - lo) * j / 10
                b = lo + (hi - lo) * (j + 1) / 10
                val, _ = quad(lambda u: u**k * math.exp(u * u / 2.0), a, b)
                oracle += p * val
        assert value == pytest.approx(oracle, rel=1e-8)
        assert ratio == pytest.approx(value / 2.0**k, rel=1e-14)
        assert np.isfinite(ratio) and ratio > 0


def test_pair_antisymmetry_symmetric_kernel():
    kernel = [(0.0, 1.0, 0.25), (1.0, 0.0, 0.25), (0.0, 0.0, 0.25), (1.0, 1.0, 0.25)]
    assert pair_antisymmetry_check(kernel) <= 1e-15
    assert pair_antisymmetry_check(kernel, "sin_diff") <= 1e-15
    with pytest.raises(DomainError):
        pair_antisymmetry_check(kernel, "nope")


def test_pair_antisymmetry_rejects_perturbed_kernel():
    kernel = [(0.0, 1.0, 0.3), (1.0, 0.0, 0.2), (0.0, 0.0, 0.5)]
    with pytest.raises(DomainError):
        pair_antisymmetry_check(kernel)


def test_pair_antisymmetry_antivoter_kernel():
    kern = antivoter.pair_kernel(antivoter.transition_rates(60))
    assert pair_antisymmetry_check(kern) <= 1e-10


def test_ratio_table_csv_roundtrip():
    d = _sym_three_atom()
    t = tail_ratio_table(d, [0.25, 0.75], lambda x: (1 + x**3) * 0.1)
    text = t.csv_text()
    lines = text.strip().splitlines()
    assert lines[0] == "x,log_tail,log_normal_tail,ratio,band_halfwidth_unit,in_range"
    cells = lines[1].split(",")
    assert float(cells[0]) == 0.25
    assert float(cells[3]) == t.ratio[0]  # 17 significant digits round-trip
