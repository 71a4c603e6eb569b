"""Exact finite-support distribution algebra.

An ExactDistribution is an immutable pair (support, logp) with strictly
increasing finite support and log-probabilities normalized to
logsumexp(logp) = 0.  All tail/MGF queries are answered in log space so
that lattice tails as small as e^{-700} stay meaningful; moments use
compensated summation in probability space.

The zero-bias transform of a standardized law is absolutely continuous
with density p*(w) = E[W 1{W > w}], piecewise constant between support
points; ZeroBiasDensity holds the knots and per-segment values and can
integrate f' exactly segment by segment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateError, DomainError, ResourceError

ATOM_MERGE_RTOL = 1e-12
CONVOLVE_ATOM_CAP = 10_000_000


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.flags.writeable = False
    return out


def _merge_atoms(support: np.ndarray, logp: np.ndarray, rtol: float = ATOM_MERGE_RTOL):
    """Sort atoms and merge coordinates equal within `rtol` (relative)."""
    order = np.argsort(support, kind="stable")
    s = support[order]
    lp = logp[order]
    if s.size <= 1:
        return s, lp
    gap = np.diff(s)
    scale = np.maximum(1.0, np.maximum(np.abs(s[:-1]), np.abs(s[1:])))
    new_group = np.concatenate(([True], gap > rtol * scale))
    starts = np.flatnonzero(new_group)
    merged_s = s[starts]
    merged_lp = np.logaddexp.reduceat(lp, starts)
    return merged_s, merged_lp


@dataclass(frozen=True, eq=False)
class ExactDistribution:
    """Finite lattice law: ordered support points plus log-probabilities."""

    support: np.ndarray
    logp: np.ndarray
    meta: str | None = None

    def __post_init__(self):
        support = _frozen(self.support)
        logp = _frozen(self.logp)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "logp", logp)
        if support.ndim != 1 or logp.ndim != 1 or support.size != logp.size:
            raise DomainError("support and logp must be 1-D arrays of equal length")
        if support.size < 1:
            raise DomainError("ExactDistribution needs at least one atom")
        if not np.all(np.isfinite(support)):
            raise DomainError("support entries must be finite")
        if support.size > 1 and not np.all(np.diff(support) > 0):
            raise DomainError("support must be strictly increasing")
        total = logsumexp(logp)
        if not abs(total) <= 1e-12:
            raise DomainError(
                f"logp must be normalized: |logsumexp(logp)| = {abs(total):.3e} > 1e-12"
            )

    # ---------------------------------------------------------------- builders

    @classmethod
    def from_logweights(cls, support, logw, meta: str | None = None) -> "ExactDistribution":
        support = np.asarray(support, dtype=float)
        logw = np.asarray(logw, dtype=float)
        s, lp = _merge_atoms(support, logw)
        lp = lp - logsumexp(lp)
        # one pass can leave ~1e-12 residual on 1e5-atom laws; a second pass
        # lands within the strict normalization invariant
        lp = lp - logsumexp(lp)
        return cls(s, lp, meta=meta)

    @classmethod
    def from_probs(cls, support, probs, meta: str | None = None) -> "ExactDistribution":
        probs = np.asarray(probs, dtype=float)
        if np.any(probs < 0):
            raise DomainError("probabilities must be nonnegative")
        keep = probs > 0
        support = np.asarray(support, dtype=float)[keep]
        with np.errstate(divide="ignore"):
            return cls.from_logweights(support, np.log(probs[keep]), meta=meta)

    @classmethod
    def from_counts(cls, support, counts: Sequence[int], meta: str | None = None) -> "ExactDistribution":
        """Exact integer counts; log-probabilities via big-int logs."""
        counts = list(counts)
        if any(c < 0 for c in counts):
            raise DomainError("counts must be nonnegative")
        total = sum(counts)
        if total <= 0:
            raise DomainError("counts must have positive total")
        log_total = _log_int(total)
        sup, lp = [], []
        for x, c in zip(support, counts):
            if c:
                sup.append(float(x))
                lp.append(_log_int(c) - log_total)
        return cls.from_logweights(np.array(sup), np.array(lp), meta=meta)

    @classmethod
    def point_mass(cls, x: float, meta: str | None = None) -> "ExactDistribution":
        return cls(np.array([float(x)]), np.array([0.0]), meta=meta)

    @classmethod
    def uniform(cls, values, meta: str | None = None) -> "ExactDistribution":
        values = np.asarray(values, dtype=float)
        return cls.from_logweights(values, np.zeros(values.size), meta=meta)

    @classmethod
    def binomial_half(cls, k: int, meta: str | None = None) -> "ExactDistribution":
        """Binomial(k, 1/2) on {0..k}, from exact integer coefficients."""
        if k < 1:
            raise DomainError(f"k must be >= 1, got {k}")
        return cls.from_counts(range(k + 1), [math.comb(k, s) for s in range(k + 1)], meta=meta)

    # ---------------------------------------------------------------- queries

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.logp)

    def moments(self) -> tuple[float, float]:
        """(mean, variance) with compensated summation in probability space."""
        shift = float(np.max(self.logp))
        w = np.exp(self.logp - shift)
        total = math.fsum(w)
        mean = math.fsum(w * self.support) / total
        var = math.fsum(w * (self.support - mean) ** 2) / total
        return mean, var

    def standardize(self, mean: float, sigma: float) -> "ExactDistribution":
        if not (sigma > 0):
            raise DegenerateError(f"sigma must be > 0, got {sigma}")
        return ExactDistribution((self.support - mean) / sigma, self.logp, meta=self.meta)

    def standardized(self) -> "ExactDistribution":
        """Standardize by the law's own exact moments."""
        mean, var = self.moments()
        if var <= 0:
            raise DegenerateError("cannot standardize a degenerate (zero variance) law")
        return self.standardize(mean, math.sqrt(var))

    def log_upper_tail(self, x: float) -> float:
        """log P(W >= x), inclusive convention; -inf above the top atom."""
        i = int(np.searchsorted(self.support, x, side="left"))
        if i >= self.support.size:
            return float("-inf")
        return float(logsumexp(self.logp[i:]))

    def log_mgf(self, t: float) -> float:
        """log E e^{tW}."""
        if not np.isfinite(t):
            raise DomainError(f"t must be finite, got {t}")
        return float(logsumexp(self.logp + t * self.support))

    def expect(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        shift = float(np.max(self.logp))
        w = np.exp(self.logp - shift)
        return math.fsum(w * f(self.support)) / math.fsum(w)

    def abs_mean(self) -> float:
        return self.expect(np.abs)

    # ------------------------------------------------------------ serialization

    def to_json(self) -> str:
        return json.dumps({"support": self.support.tolist(), "logp": self.logp.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "ExactDistribution":
        obj = json.loads(text)
        if not isinstance(obj, dict) or "support" not in obj or "logp" not in obj:
            raise DomainError('distribution JSON must have keys "support" and "logp"')
        return cls(np.asarray(obj["support"], dtype=float), np.asarray(obj["logp"], dtype=float))


def _log_int(n: int) -> float:
    # math.log handles arbitrary-precision ints exactly enough (float result)
    return math.log(n)


def convolve(a: ExactDistribution, b: ExactDistribution, cap: int = CONVOLVE_ATOM_CAP) -> ExactDistribution:
    """Exact law of the independent sum; atoms merged at 1e-12 relative."""
    n_atoms = a.support.size * b.support.size
    if n_atoms > cap:
        raise ResourceError(
            f"convolution would create {n_atoms} atoms before merging, above the cap {cap}"
        )
    s = (a.support[:, None] + b.support[None, :]).ravel()
    lp = (a.logp[:, None] + b.logp[None, :]).ravel()
    merged_s, merged_lp = _merge_atoms(s, lp)
    return ExactDistribution(merged_s, merged_lp - logsumexp(merged_lp))


def convolve_many(parts: Sequence[ExactDistribution], cap: int = CONVOLVE_ATOM_CAP) -> ExactDistribution:
    """Fold a list of laws by balanced pairwise convolution (deterministic order)."""
    if not parts:
        raise DomainError("convolve_many requires at least one distribution")
    layer = list(parts)
    while len(layer) > 1:
        nxt = []
        for i in range(0, len(layer) - 1, 2):
            nxt.append(convolve(layer[i], layer[i + 1], cap=cap))
        if len(layer) % 2:
            nxt.append(layer[-1])
        layer = nxt
    return layer[0]


def convolve_power(d: ExactDistribution, n: int, cap: int = CONVOLVE_ATOM_CAP) -> ExactDistribution:
    """n-fold self-convolution by squaring."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    acc = None
    base = d
    k = n
    while k:
        if k & 1:
            acc = base if acc is None else convolve(acc, base, cap=cap)
        k >>= 1
        if k:
            base = convolve(base, base, cap=cap)
    return acc


def total_variation(a: ExactDistribution, b: ExactDistribution) -> float:
    """(1/2) sum |p_a - p_b| over the union support (missing atoms count 0)."""
    sup = np.concatenate([a.support, b.support])
    masses = np.concatenate([a.probs, -b.probs])
    order = np.argsort(sup, kind="stable")
    sup, masses = sup[order], masses[order]
    if sup.size > 1:
        gap = np.diff(sup)
        scale = np.maximum(1.0, np.maximum(np.abs(sup[:-1]), np.abs(sup[1:])))
        new_group = np.concatenate(([True], gap > ATOM_MERGE_RTOL * scale))
        starts = np.flatnonzero(new_group)
        diffs = np.add.reduceat(masses, starts)
    else:
        diffs = masses
    return 0.5 * float(np.sum(np.abs(diffs)))


@dataclass(frozen=True, eq=False)
class ZeroBiasDensity:
    """Piecewise-constant density of the zero-biased law of a lattice W.

    knots are the base support points; segment_density[j] is the constant
    density on [knots[j], knots[j+1]).
    """

    knots: np.ndarray
    segment_density: np.ndarray

    def __post_init__(self):
        knots = _frozen(self.knots)
        dens = _frozen(self.segment_density)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "segment_density", dens)
        if knots.size != dens.size + 1:
            raise DomainError("need exactly one density value per inter-knot segment")
        if np.any(dens < 0):
            raise DomainError("zero-bias segment densities must be nonnegative")
        total = float(np.sum(dens * np.diff(knots)))
        if abs(total - 1.0) > 1e-10:
            raise DomainError(f"zero-bias density must integrate to 1, got {total!r}")

    def density_at(self, w: float) -> float:
        if w < self.knots[0] or w >= self.knots[-1]:
            return 0.0
        j = int(np.searchsorted(self.knots, w, side="right")) - 1
        j = min(j, self.segment_density.size - 1)
        return float(self.segment_density[j])

    def expect_derivative(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """E f'(W*) = sum_j density_j (f(knot_{j+1}) - f(knot_j)), exact per segment."""
        vals = f(self.knots)
        return float(math.fsum(self.segment_density * np.diff(vals)))


def zero_bias(d: ExactDistribution) -> ZeroBiasDensity:
    """Zero-bias transform of a standardized law (mean 0, variance 1 within 1e-9)."""
    mean, var = d.moments()
    if abs(mean) > 1e-9 or abs(var - 1.0) > 1e-9:
        raise DomainError(
            f"zero_bias requires mean 0 and variance 1 within 1e-9, got ({mean!r}, {var!r})"
        )
    if d.support.size < 2:
        raise DomainError("zero_bias needs a non-degenerate law")
    xp = d.support * d.probs
    # density on [t_j, t_{j+1}) is E[W 1{W > t_j}] = sum of x*p over atoms above t_j
    tail = np.cumsum(xp[::-1])[::-1]
    dens = np.maximum(tail[1:], 0.0)
    return ZeroBiasDensity(d.support, dens)
