import math

import numpy as np
import pytest

from mdlab import (
    DomainError,
    mills_ratio,
    normal_cdf,
    normal_eval,
    normal_tail,
    log_normal_tail,
    stein_bracket,
    stein_solution,
    stein_solution_derivative_g,
)

SQRT_2PI = math.sqrt(2.0 * math.pi)


def test_tail_at_zero_is_half():
    assert normal_tail(0.0) == 0.5


def test_tail_at_two_matches_frozen_oracle_value():
    # 50-digit quadrature oracle: 0.0227501319481792072003...
    assert normal_tail(2.0) == pytest.approx(0.02275013194817921, rel=1e-14)


def test_reflection_identity_on_grid():
    w = np.linspace(0.0, 10.0, 401)
    assert np.max(np.abs(normal_tail(w) + normal_tail(-w) - 1.0)) <= 1e-14


def test_tail_strictly_decreasing():
    # below w ~ -8 the tail saturates at the double 1.0, so strictness is
    # only assertable where 1 - Phi(w) is representable away from 1
    w = np.linspace(-8.0, 38.0, 2000)
    t = normal_tail(w)
    assert np.all(np.diff(t) < 0)
    w_full = np.linspace(-38.0, 38.0, 2000)
    assert np.all(np.diff(normal_tail(w_full)) <= 0)


def test_tail_positive_up_to_38():
    assert normal_tail(37.99) > 0.0


def test_oracle_comparison_200_points(normal_tail_oracle):
    worst = 0.0
    for w, tail, _ in normal_tail_oracle:
        got = normal_tail(w)
        worst = max(worst, abs(got - tail) / tail)
    assert worst <= 1e-12


def test_log_tail_matches_oracle(normal_tail_oracle):
    for w, _, log_tail in normal_tail_oracle:
        if abs(log_tail) < 1e-6:  # log ~ 0 rows carry no relative-scale information
            continue
        assert log_normal_tail(w) == pytest.approx(log_tail, rel=1e-12)


def test_non_finite_input_rejected():
    for bad in (float("nan"), float("inf"), -float("inf")):
        with pytest.raises(DomainError):
            normal_tail(bad)
        with pytest.raises(DomainError):
            stein_solution(0.0, bad)
        with pytest.raises(DomainError):
            stein_solution_derivative_g(bad, 0.0)


def test_mills_bound_on_declared_grid():
    w = np.arange(0.0, 38.0 + 1e-9, 0.01)
    m = mills_ratio(w)
    with np.errstate(divide="ignore"):
        bound = np.minimum(0.5, np.where(w > 0, 1.0 / (w * SQRT_2PI), np.inf))
    assert np.all(m <= bound + 1e-15)
    assert m[0] == 0.5


def test_lower_tail_bound_on_grid():
    # The denominator 2(1+x) version of this bound is false beyond x ~ 2.22
    # (at x = 3: 1 - Phi(3) = 0.0013499 < e^{-4.5}/8 = 0.0013886); the
    # correct classical form divides by sqrt(2 pi) (1 + x) and holds for all
    # x >= 0.  Assert the correct form everywhere and the looser constant
    # only on [0, 2] where it is valid.
    x = np.linspace(0.0, 38.0, 3801)
    lhs = log_normal_tail(x)
    rhs = -0.5 * x * x - np.log(SQRT_2PI * (1.0 + x))
    assert np.all(lhs >= rhs)
    x2 = np.linspace(0.0, 2.0, 201)
    rhs2 = -0.5 * x2 * x2 - np.log(2.0 * (1.0 + x2))
    assert np.all(log_normal_tail(x2) >= rhs2 - 1e-12)


def test_normal_eval_bundle():
    ev = normal_eval(1.3)
    assert ev.phi + ev.tail == pytest.approx(1.0, abs=1e-14)
    assert ev.mills == pytest.approx(ev.tail * math.exp(1.3**2 / 2), rel=1e-13)


def test_stein_solution_at_origin():
    assert stein_solution(0.0, 0.0) == pytest.approx(SQRT_2PI / 4.0, rel=1e-14)


def test_stein_solution_vanishes_at_large_w():
    vals = [stein_solution(3.0, w) for w in (10.0, 100.0, 1000.0)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 1e-3


def test_stein_solution_nonnegative_and_continuous_at_kink():
    for x in (-2.0, 0.0, 1.5, 6.0):
        w = np.linspace(x - 5, x + 5, 101)
        f = stein_solution(x, w)
        assert np.all(f >= 0.0)
        eps = 1e-9
        assert stein_solution(x, x - eps) == pytest.approx(
            stein_solution(x, x + eps), rel=1e-6
        )


def stein_residual(x: float, w: float) -> float:
    h = 1e-5 * (1.0 + abs(w))
    fp = (stein_solution(x, w + h) - stein_solution(x, w - h)) / (2.0 * h)
    rhs = (1.0 if w >= x else 0.0) - normal_tail(x)
    return abs(w * stein_solution(x, w) - fp - rhs)


def test_stein_equation_residual_on_grid():
    xs = np.arange(0.0, 8.0 + 1e-9, 0.5)
    ws = np.linspace(-10.0, 10.0, 81)
    worst = 0.0
    for x in xs:
        for w in ws:
            if abs(w - x) < 1e-3:  # derivative does not exist at the kink
                continue
            worst = max(worst, stein_residual(float(x), float(w)))
    assert worst <= 1e-6


def test_derivative_g_lower_branch_value():
    # (sqrt(2 pi) * 1 * Phi(0) + 0) * (1 - Phi(1)) at x=1, w=0
    want = (SQRT_2PI * 0.5) * normal_tail(1.0)
    assert stein_solution_derivative_g(1.0, 0.0) == pytest.approx(want, rel=1e-13)


def test_bracket_at_zero():
    b = stein_bracket(0.0)
    assert b == pytest.approx(SQRT_2PI / 2.0, rel=1e-13)
    assert b <= 2.0


def test_bracket_example_x2_w5():
    b = stein_bracket(5.0)
    assert 0.0 <= b <= 2.0 / (1.0 + 5.0**3)
    # and the assembled derivative respects the same bracket scaling
    g = stein_solution_derivative_g(2.0, 5.0)
    assert 0.0 <= g <= (2.0 / 126.0) * normal_cdf(2.0) * (1 + 1e-12)


def test_bracket_bound_on_declared_grid():
    w = np.arange(0.0, 38.0 + 1e-9, 0.01)
    b = stein_bracket(w)
    assert np.all(b >= -1e-12)
    assert np.all(b <= 2.0 / (1.0 + w**3) + 1e-12)
