"""Mean-field Ising (Curie-Weiss) magnetization at desk scale.

Gibbs weights over n spins sigma_i in {-1, +1}:

    P(config) prop. exp( (beta/n) sum_{i<j} sigma_i sigma_j + beta h sum_i sigma_i ),

so the total spin S = sum_i sigma_i has the exact law
P(S = n - 2j) prop. C(n, j) exp(beta (S^2 - n)/(2n) + beta h S).

The magnetization fixed point m = tanh(beta (m + h)) splits the phase
space into three cases; only the Gaussian ones are standardized here:

* case1 (0 < beta < 1, any h; or beta >= 1, h != 0): unique root m0 with
  m0 h >= 0; W = (S - n m0)/sigma, sigma^2 = n (1-m0^2)/(1-(1-m0^2) beta).
* case2 (beta > 1, h = 0): two roots m1 = -m2 < 0 < m2; the law is
  conditioned on S < 0 or S > 0 before standardizing.
* case3 (beta = 1, h = 0): rejected by every Gaussian-band operation.

Single-site heat-bath dynamics collapse to a birth-death chain on S.
The per-state flip probabilities A(w), B(w) are exact (not asymptotic):
A(w) is the chance that a chosen +1 spin resamples to -1, B(w) the
reverse, with A(W) + B(W) = 1 + O(1/n).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln, logsumexp

from ..dist import ExactDistribution
from ..errors import DegenerateError, DomainError
from ..stein import RatioTable, SteinBudget, Variant, fit_constant, tail_ratio_table
from . import _mc

ROOT_TOLERANCE = 1e-14
ROOT_SUBDIVISIONS = 128


class Case(enum.Enum):
    CASE1 = "case1"
    CASE2 = "case2"
    CASE3 = "case3"


@dataclass(frozen=True)
class CWParams:
    n: int
    beta: float
    h: float
    case_id: Case
    roots: tuple[float, ...]

    def sigma2_of(self, m: float) -> float:
        denom = 1.0 - (1.0 - m * m) * self.beta
        if denom <= 0:
            raise DegenerateError(
                f"variance undefined: 1 - (1 - m^2) beta = {denom} <= 0 at m = {m}"
            )
        return self.n * (1.0 - m * m) / denom

    def root_for(self, sign: str | None) -> float:
        if self.case_id is Case.CASE1:
            if sign is not None:
                raise DomainError("sign conditioning applies only to case2 (beta > 1, h = 0)")
            return self.roots[0]
        if self.case_id is Case.CASE2:
            if sign not in ("+", "-"):
                raise DomainError('case2 requires sign "+" or "-"')
            return self.roots[1] if sign == "+" else self.roots[0]
        raise DomainError(
            "case3 (beta = 1, h = 0): the limit is not Gaussian; band operations are undefined"
        )


def _fixed_point_roots(beta: float, h: float) -> list[float]:
    """All roots of m - tanh(beta (m + h)) in [-1, 1] by bracketing + bisection."""

    def f(m: float) -> float:
        return m - math.tanh(beta * (m + h))

    grid = np.linspace(-1.0, 1.0, ROOT_SUBDIVISIONS + 1)
    vals = [f(g) for g in grid]
    roots: list[float] = []
    for i in range(ROOT_SUBDIVISIONS):
        a, b, fa, fb = grid[i], grid[i + 1], vals[i], vals[i + 1]
        if fa == 0.0:
            roots.append(float(a))
            continue
        if fa * fb < 0:
            while b - a > ROOT_TOLERANCE:
                mid = 0.5 * (a + b)
                fm = f(mid)
                if fm == 0.0:
                    a = b = mid
                    break
                if fa * fm < 0:
                    b, fb = mid, fm
                else:
                    a, fa = mid, fm
            roots.append(0.5 * (a + b))
    if vals[-1] == 0.0:
        roots.append(1.0)
    # dedupe near-identical brackets
    out: list[float] = []
    for r in roots:
        if not out or abs(r - out[-1]) > 1e-10:
            out.append(r)
    return out


def solve_magnetization(n: int, beta: float, h: float) -> CWParams:
    if n < 2:
        raise DomainError(f"need n >= 2 spins, got {n}")
    if not (beta > 0):
        raise DomainError(f"beta must be > 0, got {beta}")
    if beta == 1.0 and h == 0.0:
        return CWParams(n, beta, h, Case.CASE3, (0.0,))
    roots = _fixed_point_roots(beta, h)
    if beta > 1.0 and h == 0.0:
        pos = [r for r in roots if r > 1e-8]
        if len(pos) != 1:
            raise DomainError(f"expected a unique positive root for beta={beta}, h=0, found {roots}")
        m2 = pos[0]
        return CWParams(n, beta, h, Case.CASE2, (-m2, m2))
    keep = [r for r in roots if r * h >= 0]
    if h == 0.0:
        keep = [r for r in roots if abs(r) <= 1e-8] or keep
    if len(keep) != 1:
        raise DomainError(
            f"expected a unique root with m*h >= 0 for beta={beta}, h={h}, found {roots}"
        )
    return CWParams(n, beta, h, Case.CASE1, (keep[0],))


def exact_spin_sum_law(params: CWParams) -> ExactDistribution:
    """Exact law of S = sum of spins, via log-space binomial weights."""
    n = params.n
    if n > 10**6:
        raise DomainError(f"exact law limited to n <= 1e6, got {n}")
    j = np.arange(n + 1)  # number of -1 spins
    s = (n - 2 * j).astype(float)
    logw = (
        gammaln(n + 1.0)
        - gammaln(j + 1.0)
        - gammaln(n - j + 1.0)
        + params.beta * (s * s - n) / (2.0 * n)
        + params.beta * params.h * s
    )
    order = np.argsort(s)
    return ExactDistribution.from_logweights(
        s[order], logw[order], meta=f"curieweiss(n={n},beta={params.beta},h={params.h})"
    )


def _heat_bath_rates(params: CWParams, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(p_up, p_down) per state S: probabilities that one chain step moves S by +-2.

    p_down(S) = P(pick a +1 site) * P(it resamples to -1 | rest)
              = (n+S)/(2n) * logistic(-2 (beta (S-1)/n + beta h))
    p_up(S)   = (n-S)/(2n) * logistic(+2 (beta (S+1)/n + beta h))
    """
    n, beta, h = params.n, params.beta, params.h
    g_down = beta * (s - 1.0) / n + beta * h
    g_up = beta * (s + 1.0) / n + beta * h
    p_down = (n + s) / (2.0 * n) * expit(-2.0 * g_down)
    p_up = (n - s) / (2.0 * n) * expit(2.0 * g_up)
    return p_up, p_down


def glauber_kernel(params: CWParams, w: float, sign: str | None = None):
    """(A(w), B(w), lambda) for the standardized magnetization at w.

    A(w) = exp(-beta(m+h) - beta sigma w/n + beta/n) /
           [same + exp(beta(m+h) + beta sigma w/n - beta/n)]
    B(w) = exp(beta(m+h) + beta sigma w/n + beta/n) /
           [same + exp(-beta(m+h) - beta sigma w/n - beta/n)]
    lambda = (1 - (1 - m^2) beta)/n > 0.

    A is exactly the heat-bath flip probability of a +1 site when
    S = n m + sigma w, and B the flip probability of a -1 site.
    """
    if params.case_id is Case.CASE3:
        raise DomainError("glauber_kernel is defined for cases 1-2 only")
    m = params.root_for(sign) if params.case_id is Case.CASE2 else params.roots[0]
    n, beta, h = params.n, params.beta, params.h
    sigma = math.sqrt(params.sigma2_of(m))
    u = beta * (m + h) + beta * sigma * w / n - beta / n
    v = beta * (m + h) + beta * sigma * w / n + beta / n
    a = float(expit(-2.0 * u))
    b = float(expit(2.0 * v))
    lam = (1.0 - (1.0 - m * m) * beta) / n
    return a, b, lam


@dataclass(frozen=True)
class ConditioningReport:
    """Bookkeeping of the case-2 split and the |W| <= c1 sqrt(n) truncation."""

    c1: float
    window_halfwidth: float  # c1 * sqrt(n), in W units
    truncated_mass: float
    zero_atom_mass: float  # S = 0 probability excluded by strict conditioning
    delta2_initial: float


def _restrict(law: ExactDistribution, keep: np.ndarray, meta: str) -> ExactDistribution:
    lp = law.logp[keep]
    return ExactDistribution.from_logweights(law.support[keep], lp - logsumexp(lp), meta=meta)


def _initial_delta2(params: CWParams, sign: str | None) -> float:
    """max |E(R|S)| / (1 + W^2) over the sign-restricted states, no window yet."""
    m = params.root_for(sign) if params.case_id is Case.CASE2 else params.roots[0]
    sigma = math.sqrt(params.sigma2_of(m))
    lam = (1.0 - (1.0 - m * m) * params.beta) / params.n
    s_law = exact_spin_sum_law(params)
    s = s_law.support
    if sign == "+":
        s = s[s > 0]
    elif sign == "-":
        s = s[s < 0]
    w = (s - params.n * m) / sigma
    p_up, p_down = _heat_bath_rates(params, s)
    drift = (2.0 / sigma) * (p_down - p_up)  # E(W - W' | S)
    remainder = w - drift / lam
    return float(np.max(np.abs(remainder) / (1.0 + w * w)))


def conditional_standardized_law(
    params: CWParams, sign: str | None = None, truncate: bool = True
) -> tuple[ExactDistribution, ConditioningReport]:
    """Standardized (and, for case2, sign-conditioned) law of W with the
    |W| <= c1 sqrt(n) window applied; truncated mass is reported, never
    silently dropped.

    c1 is the largest value with delta2_hat * c1 * sqrt(n) <= 1/2, using
    the empirical delta2 of the unwindowed kernel.
    """
    m = params.root_for(sign)
    sigma = math.sqrt(params.sigma2_of(m))
    s_law = exact_spin_sum_law(params)
    meta = f"{s_law.meta},sign={sign}"

    zero_mass = 0.0
    if params.case_id is Case.CASE2:
        has_zero = np.abs(s_law.support) < 0.5
        if np.any(has_zero):
            zero_mass = float(np.exp(s_law.logp[has_zero]).sum())
        keep = s_law.support > 0 if sign == "+" else s_law.support < 0
        s_law = _restrict(s_law, keep, meta)
    w_law = s_law.standardize(params.n * m, sigma)

    d2 = _initial_delta2(params, sign)
    c1 = 0.5 / (d2 * math.sqrt(params.n)) if d2 > 0 else float("inf")
    halfwidth = c1 * math.sqrt(params.n)
    truncated = 0.0
    if truncate and np.isfinite(halfwidth):
        inside = np.abs(w_law.support) <= halfwidth
        if not np.all(inside):
            truncated = float(np.exp(w_law.logp[~inside]).sum())
            w_law = _restrict(w_law, inside, meta)
    report = ConditioningReport(
        c1=c1,
        window_halfwidth=halfwidth,
        truncated_mass=truncated,
        zero_atom_mass=zero_mass,
        delta2_initial=d2,
    )
    return w_law, report


def budget(params: CWParams, sign: str | None = None) -> tuple[SteinBudget, ConditioningReport]:
    """Empirical budget from the exact windowed kernel (R-quadratic, alpha = 1/2)."""
    m = params.root_for(sign)
    sigma = math.sqrt(params.sigma2_of(m))
    lam = (1.0 - (1.0 - m * m) * params.beta) / params.n
    w_law, report = conditional_standardized_law(params, sign)
    w = w_law.support
    s = w * sigma + params.n * m
    p_up, p_down = _heat_bath_rates(params, s)
    # moves that would exit the window (or the conditioning side) are suppressed
    p_up = p_up.copy()
    p_down = p_down.copy()
    p_up[-1] = 0.0
    p_down[0] = 0.0
    drift = (2.0 / sigma) * (p_down - p_up)
    e_d = (2.0 / (sigma**2 * lam)) * (p_up + p_down)
    remainder = w - drift / lam
    delta1 = float(np.max(np.abs(e_d - 1.0) / (1.0 + np.abs(w))))
    delta2 = float(np.max(np.abs(remainder) / (1.0 + w * w)))
    theta = max(1.0, float(np.max(e_d)))
    return (
        SteinBudget(
            delta=2.0 / sigma,
            delta1=delta1,
            delta2=delta2,
            theta=theta,
            alpha=0.5,
            variant=Variant.R_QUADRATIC,
            provenance="empirical fit",
        ),
        report,
    )


def band_report(
    params: CWParams,
    sign: str | None = None,
    grid=None,
    points: int = 25,
    nudge_atoms: bool = True,
) -> tuple[RatioTable, float]:
    """Tail-ratio table with unit band (1 + x^3)/sqrt(n), range cap n^{1/6}."""
    law, _ = conditional_standardized_law(params, sign)
    n = params.n
    cap = n ** (1.0 / 6.0)
    if grid is None:
        grid = np.linspace(0.0, cap, points)
    rate = 1.0 / math.sqrt(n)
    table = tail_ratio_table(
        law,
        grid,
        lambda x: (1.0 + x**3) * rate,
        range_cap=cap,
        nudge_atoms=nudge_atoms,
        meta=f"curieweiss(n={n},beta={params.beta},h={params.h},sign={sign})",
    )
    return table, fit_constant(table)


def glauber_sampler(
    params: CWParams,
    seed: int,
    burnin: int,
    count: int,
    thin: int = 1,
    workers: int = 1,
) -> np.ndarray:
    """Seeded heat-bath chain samples of S (unconditioned; cases 1-2 only)."""
    if params.case_id is Case.CASE3:
        raise DomainError("glauber_sampler is defined for cases 1-2 only")
    n = params.n
    s = (n - 2.0 * np.arange(n + 1))[::-1]  # index i holds S = -n + 2i
    p_up, p_down = _heat_bath_rates(params, s)
    idx = _mc.sample_birth_death(
        p_up, p_down, start=(n + _start_s(params)) // 2, seed=seed,
        count=count, burnin=burnin, thin=thin, workers=workers,
    )
    return (-n + 2 * idx).astype(np.int64)


def _start_s(params: CWParams) -> int:
    m = params.roots[-1]
    s0 = int(round(params.n * m))
    return s0 - (s0 + params.n) % 2  # match the parity of the S lattice


def empirical_s_law(params: CWParams, s_samples: np.ndarray) -> ExactDistribution:
    n = params.n
    idx = (s_samples + n) // 2
    counts = np.bincount(idx.astype(np.int64), minlength=n + 1)
    s = -n + 2.0 * np.arange(n + 1)
    keep = counts > 0
    return ExactDistribution.from_probs(s[keep], counts[keep] / counts.sum())
