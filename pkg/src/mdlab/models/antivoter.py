"""Anti-voter dynamics on the complete graph.

One step: pick a vertex I uniformly, pick a uniform other vertex J, set
the spin at I to the opposite of the spin at J.  With T the number of +1
spins, the induced chain on T is birth-death:

    T -> T+1  w.p.  b_T = (n-T)(n-T-1) / (n(n-1))
    T -> T-1  w.p.  d_T = T(T-1) / (n(n-1))

and the stationary law of U = 2T - n has variance exactly
(n^2 - 2n)/(2n - 3).  The exchangeable pair W' = (U - X_I - X_J)/sigma
satisfies two exact per-state identities,

    E(W - W' | T) = (2/n) W_T
    E(D | T) - 1  = W_T^2 / (2(n-1)) - 1 / (2(n-1)),   D = n (W'-W)^2 / 4,

which this module recomputes from the kernel and asserts state by state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..dist import ExactDistribution
from ..errors import DomainError, ModelIntegrityError
from ..stein import RatioTable, SteinBudget, Variant, fit_constant, tail_ratio_table
from . import _mc

IDENTITY_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class AntiVoterChain:
    n: int
    birth: np.ndarray  # b_T, T = 0..n
    death: np.ndarray  # d_T, T = 0..n
    sigma2: Fraction
    lam: Fraction  # coupling rate in E(W - W'|W) = lam * W

    @property
    def sigma(self) -> float:
        return math.sqrt(float(self.sigma2))

    def w_values(self) -> np.ndarray:
        """W_T = (2T - n)/sigma for T = 0..n."""
        return (2.0 * np.arange(self.n + 1) - self.n) / self.sigma


def transition_rates(n: int) -> AntiVoterChain:
    if n < 4:
        raise DomainError(f"anti-voter chain requires n >= 4, got {n}")
    t = np.arange(n + 1, dtype=float)
    denom = float(n * (n - 1))
    birth = (n - t) * (n - t - 1) / denom
    death = t * (t - 1) / denom
    return AntiVoterChain(
        n=n,
        birth=birth,
        death=death,
        sigma2=Fraction(n * n - 2 * n, 2 * n - 3),
        lam=Fraction(2, n),
    )


def stationary_t_logp(chain: AntiVoterChain) -> np.ndarray:
    """Stationary log-probabilities over T = 1..n-1 (0 and n are unreachable)."""
    n = chain.n
    logr = np.log(chain.birth[1 : n - 1]) - np.log(chain.death[2:n])
    logp = np.concatenate(([0.0], np.cumsum(logr)))
    shift = logp.max()
    logp -= shift + math.log(np.exp(logp - shift).sum())
    return logp


def stationary_law(chain: AntiVoterChain) -> ExactDistribution:
    """Stationary law of W = (2T - n)/sigma, standardized exactly by construction."""
    logp = stationary_t_logp(chain)
    support = chain.w_values()[1 : chain.n]
    return ExactDistribution.from_logweights(support, logp, meta=f"antivoter(n={chain.n})")


@dataclass(frozen=True)
class AntiVoterIdentities:
    """Per-state kernel-vs-closed-form residuals and the resulting budget."""

    residual_drift: float
    residual_d: float
    budget: SteinBudget


def exact_pair_identities(chain: AntiVoterChain) -> AntiVoterIdentities:
    n = chain.n
    sigma = chain.sigma
    w = chain.w_values()[1:n]
    b = chain.birth[1:n]
    d = chain.death[1:n]

    # kernel side: W - W' = (X_I + X_J)/sigma is +-2/sigma on moves, 0 when lazy
    drift_kernel = (2.0 / sigma) * (d - b)
    drift_closed = (2.0 / n) * w
    e_d_kernel = (n / sigma**2) * (b + d)
    e_d_closed = 1.0 + (w**2 - 1.0) / (2.0 * (n - 1.0))

    residual_drift = float(np.max(np.abs(drift_kernel - drift_closed)))
    residual_d = float(np.max(np.abs(e_d_kernel - e_d_closed)))
    if max(residual_drift, residual_d) > IDENTITY_TOLERANCE:
        raise ModelIntegrityError(
            f"anti-voter kernel and closed-form identities disagree: "
            f"drift residual {residual_drift:.3e}, D residual {residual_d:.3e}"
        )
    delta1 = float(np.max(np.abs(e_d_kernel - 1.0) / (1.0 + np.abs(w))))
    theta = max(1.0, float(np.max(e_d_kernel)))
    budget = SteinBudget(
        delta=2.0 / sigma,
        delta1=delta1,
        delta2=0.0,
        theta=theta,
        variant=Variant.R_LINEAR,
        provenance="exact formula",
    )
    return AntiVoterIdentities(residual_drift, residual_d, budget)


def pair_kernel(chain: AntiVoterChain) -> list[tuple[float, float, float]]:
    """Exact stationary joint law of (W, W'), lazy moves included."""
    n = chain.n
    logp = stationary_t_logp(chain)
    probs = np.exp(logp)
    w = chain.w_values()
    out = []
    for i, t in enumerate(range(1, n)):
        pt = float(probs[i])
        b, d = float(chain.birth[t]), float(chain.death[t])
        if d > 0:
            out.append((w[t], w[t - 1], pt * d))
        if b > 0:
            out.append((w[t], w[t + 1], pt * b))
        out.append((w[t], w[t], pt * (1.0 - b - d)))
    return out


def band_report(
    n: int, grid=None, points: int = 25, nudge_atoms: bool = True
) -> tuple[RatioTable, float]:
    """Tail-ratio table with unit band (1 + x^3)/sqrt(n), range cap n^{1/6}."""
    if n > 10**6:
        raise DomainError(f"band_report is limited to n <= 1e6 (O(n) solve), got {n}")
    chain = transition_rates(n)
    law = stationary_law(chain)
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
        meta=f"antivoter(n={n})",
    )
    return table, fit_constant(table)


def sample(
    n: int,
    seed: int,
    count: int,
    burnin: int | None = None,
    thin: int = 1,
    workers: int = 1,
) -> np.ndarray:
    """Seeded stationary-chain samples of T (number of +1 spins)."""
    chain = transition_rates(n)
    if burnin is None:
        burnin = 20 * n
    return _mc.sample_birth_death(
        chain.birth, chain.death, start=n // 2, seed=seed, count=count,
        burnin=burnin, thin=thin, workers=workers,
    )


def empirical_w_law(chain: AntiVoterChain, t_samples: np.ndarray) -> ExactDistribution:
    """Empirical law of W over the chain's exact support values."""
    counts = np.bincount(t_samples, minlength=chain.n + 1)
    keep = counts > 0
    return ExactDistribution.from_probs(
        chain.w_values()[keep], counts[keep] / counts.sum()
    )
