import json
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import quad

from mdlab import (
    DegenerateError,
    DomainError,
    ExactDistribution,
    ResourceError,
    convolve,
    convolve_many,
    convolve_power,
    total_variation,
    zero_bias,
)


def test_moments_point_mass():
    assert ExactDistribution.point_mass(3.0).moments() == (3.0, 0.0)


def test_moments_uniform_pm1():
    mean, var = ExactDistribution.uniform([-1.0, 1.0]).moments()
    assert mean == 0.0
    assert var == pytest.approx(1.0, abs=1e-15)


def test_moments_binomial_10():
    mean, var = ExactDistribution.binomial_half(10).moments()
    # brute-force oracle over the 11 atoms
    probs = np.array([math.comb(10, s) for s in range(11)]) / 2.0**10
    want_mean = float(np.dot(probs, np.arange(11)))
    want_var = float(np.dot(probs, (np.arange(11) - want_mean) ** 2))
    assert (want_mean, want_var) == (5.0, 2.5)
    assert mean == pytest.approx(want_mean, abs=1e-12)
    assert var == pytest.approx(want_var, abs=1e-12)


def test_standardize_binomial():
    k = 16
    d = ExactDistribution.binomial_half(k).standardize(k / 2, math.sqrt(k / 4))
    mean, var = d.moments()
    assert abs(mean) <= 1e-10
    assert abs(var - 1.0) <= 1e-10


def test_standardize_rejects_zero_sigma():
    with pytest.raises(DegenerateError):
        ExactDistribution.point_mass(0.0).standardize(0.0, 0.0)
    with pytest.raises(DegenerateError):
        ExactDistribution.point_mass(2.0).standardized()


def test_standardize_identity_case():
    u = ExactDistribution.uniform([-1.0, 1.0])
    same = u.standardize(0.0, 1.0)
    assert np.array_equal(same.support, u.support)
    assert np.array_equal(same.logp, u.logp)


def test_normalization_validated():
    with pytest.raises(DomainError):
        ExactDistribution(np.array([0.0, 1.0]), np.array([-1.0, -1.0]))
    with pytest.raises(DomainError):
        ExactDistribution(np.array([1.0, 0.0]), np.array([-math.log(2)] * 2))


def test_upper_tail_basics():
    u = ExactDistribution.uniform([-1.0, 1.0])
    assert u.log_upper_tail(-1.0) == pytest.approx(0.0, abs=1e-15)
    assert u.log_upper_tail(0.0) == pytest.approx(math.log(0.5), abs=1e-15)
    assert u.log_upper_tail(1.5) == float("-inf")


def test_upper_tail_binomial20_rational_oracle():
    k = 20
    d = ExactDistribution.binomial_half(k).standardize(10.0, math.sqrt(5.0))
    # atoms >= 1 in W-space are s >= 13; exact tail by rational arithmetic
    want = Fraction(sum(math.comb(20, s) for s in range(13, 21)), 2**20)
    assert d.log_upper_tail(1.0) == pytest.approx(math.log(want), abs=1e-12)


def test_upper_tail_monotone_left_continuous():
    d = ExactDistribution.binomial_half(8).standardized()
    xs = np.linspace(-4, 4, 301)
    vals = [d.log_upper_tail(float(x)) for x in xs]
    assert all(b <= a + 1e-14 for a, b in zip(vals, vals[1:]))
    for a in d.support:
        # left-continuity at atoms and constancy on (previous atom, a]
        assert d.log_upper_tail(float(a) - 1e-12) == pytest.approx(
            d.log_upper_tail(float(a)), abs=1e-12
        )
        assert d.log_upper_tail(float(a) + 1e-12) < d.log_upper_tail(float(a))


def test_mgf_basics():
    u = ExactDistribution.uniform([-1.0, 1.0])
    assert u.log_mgf(0.0) == pytest.approx(0.0, abs=1e-15)
    assert u.log_mgf(1.0) == pytest.approx(math.log(math.cosh(1.0)), abs=1e-14)


def test_mgf_convex_in_t():
    d = ExactDistribution.binomial_half(12).standardized()
    for t in (-1.0, 0.3, 2.0):
        h = 0.25
        mid = d.log_mgf(t)
        assert d.log_mgf(t - h) + d.log_mgf(t + h) >= 2 * mid - 1e-12


def test_convolve_identity_element():
    d = ExactDistribution.binomial_half(6)
    e = convolve(d, ExactDistribution.point_mass(0.0))
    assert np.array_equal(e.support, d.support)
    assert np.allclose(e.logp, d.logp, atol=1e-14)


def test_convolve_bernoulli_pair():
    b = ExactDistribution.uniform([0.0, 1.0])
    c = convolve(b, b)
    assert np.array_equal(c.support, [0.0, 1.0, 2.0])
    assert np.allclose(np.exp(c.logp), [0.25, 0.5, 0.25], atol=1e-15)


def test_convolve_pascal_identity():
    bern = ExactDistribution.uniform([0.0, 1.0])
    for m in range(1, 21):
        fold = convolve(ExactDistribution.binomial_half(m), bern)
        want = ExactDistribution.binomial_half(m + 1)
        assert np.array_equal(fold.support, want.support)
        assert np.allclose(fold.logp, want.logp, atol=1e-12)


def test_convolve_commutative_associative():
    rng = np.random.Generator(np.random.PCG64(3))
    laws = [
        ExactDistribution.from_probs(
            np.sort(rng.normal(size=4)), rng.dirichlet(np.ones(4))
        )
        for _ in range(3)
    ]
    ab = convolve(laws[0], laws[1])
    ba = convolve(laws[1], laws[0])
    assert np.allclose(ab.support, ba.support, atol=1e-12)
    assert np.allclose(ab.logp, ba.logp, atol=1e-12)
    left = convolve(ab, laws[2])
    right = convolve(laws[0], convolve(laws[1], laws[2]))
    assert np.allclose(left.support, right.support, atol=1e-12)
    assert np.allclose(left.logp, right.logp, atol=1e-10)


def test_convolve_cap():
    big = ExactDistribution.uniform(np.arange(4000.0))
    with pytest.raises(ResourceError):
        convolve(big, big)


def test_convolve_power_matches_naive():
    base = ExactDistribution.uniform([-1.0, 1.0])
    naive = base
    for _ in range(63):
        naive = convolve(naive, base)
    fast = convolve_power(base, 64)
    assert np.array_equal(naive.support, fast.support)
    assert np.allclose(naive.logp, fast.logp, atol=1e-11)


def test_convolve_many_balanced_fold():
    base = ExactDistribution.uniform([0.0, 1.0])
    out = convolve_many([base] * 10)
    want = ExactDistribution.binomial_half(10)
    assert np.array_equal(out.support, want.support)
    assert np.allclose(out.logp, want.logp, atol=1e-12)


def test_total_variation_examples():
    d = ExactDistribution.binomial_half(4)
    assert total_variation(d, d) == 0.0
    p0 = ExactDistribution.point_mass(0.0)
    p1 = ExactDistribution.point_mass(1.0)
    assert total_variation(p0, p1) == pytest.approx(1.0, abs=1e-15)
    u = ExactDistribution.uniform([0.0, 1.0, 2.0, 3.0, 4.0])
    assert total_variation(d, u) == pytest.approx(0.275, abs=1e-14)


def test_zero_bias_uniform_pm1():
    zb = zero_bias(ExactDistribution.uniform([-1.0, 1.0]))
    assert np.array_equal(zb.knots, [-1.0, 1.0])
    assert zb.segment_density == pytest.approx([0.5], abs=1e-15)
    assert zb.density_at(-1.5) == 0.0
    assert zb.density_at(0.3) == 0.5
    assert zb.density_at(1.0) == 0.0


def test_zero_bias_requires_standardized():
    with pytest.raises(DomainError):
        zero_bias(ExactDistribution.binomial_half(8))


def smooth_bump(w):
    w = np.atleast_1d(np.asarray(w, dtype=float))
    out = np.zeros_like(w)
    inside = np.abs(w) < 1
    out[inside] = np.exp(-1.0 / (1.0 - w[inside] ** 2))
    return out if out.size > 1 else float(out[0])


def smooth_bump_prime(w):
    w = np.atleast_1d(np.asarray(w, dtype=float))
    out = np.zeros_like(w)
    inside = np.abs(w) < 1
    wi = w[inside]
    out[inside] = np.exp(-1.0 / (1.0 - wi**2)) * (-2.0 * wi / (1.0 - wi**2) ** 2)
    return out if out.size > 1 else float(out[0])


BASKET = [
    (lambda w: w**2, lambda w: 2.0 * w),
    (lambda w: w**3, lambda w: 3.0 * w**2),
    (np.cos, lambda w: -np.sin(w)),
    (smooth_bump, smooth_bump_prime),
]


def _corpus():
    from mdlab.models import antivoter

    laws = [
        ExactDistribution.uniform([-1.0, 1.0]),
        ExactDistribution.binomial_half(8).standardized(),
        ExactDistribution.binomial_half(20).standardized(),
    ]
    for n in (10, 30):
        laws.append(antivoter.stationary_law(antivoter.transition_rates(n)).standardized())
    return laws


def test_zero_bias_functional_identity_exact_route():
    for d in _corpus():
        zb = zero_bias(d)
        for f, _ in BASKET:
            lhs = d.expect(lambda w: w * f(w))
            rhs = zb.expect_derivative(f)
            assert abs(lhs - rhs) <= 1e-8


def test_zero_bias_functional_identity_quadrature_oracle():
    # independent route: integrate f'(w) p*(w) segment by segment with scipy
    for d in _corpus()[:3]:
        zb = zero_bias(d)
        for f, fprime in BASKET:
            lhs = d.expect(lambda w: w * f(w))
            rhs = 0.0
            for j in range(zb.segment_density.size):
                a, b = zb.knots[j], zb.knots[j + 1]
                c = zb.segment_density[j]
                if c > 0:
                    val, _ = quad(lambda w: float(fprime(w)), a, b, limit=200)
                    rhs += c * val
            assert abs(lhs - rhs) <= 1e-8


def test_zero_bias_integral_and_hull():
    for d in _corpus():
        zb = zero_bias(d)
        total = float(np.sum(zb.segment_density * np.diff(zb.knots)))
        assert abs(total - 1.0) <= 1e-10
        assert zb.density_at(zb.knots[0] - 1e-9) == 0.0
        assert zb.density_at(zb.knots[-1] + 1e-9) == 0.0


def test_json_roundtrip():
    d = ExactDistribution.binomial_half(6).standardized()
    again = ExactDistribution.from_json(d.to_json())
    assert np.array_equal(d.support, again.support)
    assert np.array_equal(d.logp, again.logp)
    with pytest.raises(DomainError):
        ExactDistribution.from_json(json.dumps({"support": [0.0]}))
