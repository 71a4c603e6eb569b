"""Budgets, tail-ratio bands and inequality checkers.

The abstract contract verified throughout this package is: a random
variable W admits a coupling identity

    E W f(W) = E int_{|t| <= delta} f'(W + t) dmu(t) + E(R f(W)),

with D = mu's total mass, and there are constants (delta1, delta2, theta)
with

    |E(D|W) - 1| <= delta1 (1 + |W|),
    |E(R|W)|     <= delta2 (1 + |W|)            (R-linear), or
    |E(R|W)|     <= delta2 (1 + W^2), delta2|W| <= alpha < 1   (R-quadratic),
    E(D|W)       <= theta.

Under these, the tail ratio P(W >= x) / (1 - Phi(x)) equals
1 + O(1) theta^3 (1 + x^3)(delta + delta1 + delta2) for
0 <= x <= theta^{-1} min(delta^{-1/3}, delta1^{-1/3}, delta2^{-1/3}).
The universal constant is unknown; `fit_constant` estimates it
empirically from a RatioTable and the constant is tracked across model
sizes for boundedness, never asserted to a fixed value.

Two auxiliary inequalities get their own checkers, each returning the
smallest constant that would make the bound tight on the data:

* an MGF bound  E e^{tW} <= exp(t^2/2 + c1 theta (delta2 t + delta1 t^2
  + (delta+delta1+delta2) t^3))  for admissible t (`check_mgf_bound`),
* a weighted tail integral  int_0^t u^k e^{u^2/2} P(W >= u) du <= c2 t^k
  (`check_tail_integral`).

Lattice caveat: P(W >= x) is ambiguous between the strict and weak
conventions when x sits exactly on an atom.  Tables inherit the inclusive
(>=) convention; with `nudge_atoms=True` (default) the tail is instead
read at the midpoint between the hit atom and its successor, which is
convention-free, while the normal tail and the band stay at the nominal
x.  A grid point on the top atom is left inclusive (there is no
successor).
"""

from __future__ import annotations

import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .dist import ExactDistribution
from .errors import DomainError
from .normal import log_normal_tail

ATOM_HIT_RTOL = 1e-9


class Variant(enum.Enum):
    """Which alternative bounds the remainder term R."""

    R_LINEAR = "R-linear"
    R_QUADRATIC = "R-quadratic"


@dataclass(frozen=True)
class SteinBudget:
    """Smallness parameters (delta, delta1, delta2, theta, alpha) plus provenance."""

    delta: float
    delta1: float
    delta2: float
    theta: float = 1.0
    alpha: float | None = None
    variant: Variant = Variant.R_LINEAR
    provenance: str = "exact formula"

    def __post_init__(self):
        for name in ("delta", "delta1", "delta2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise DomainError(f"{name} must be finite and >= 0, got {v}")
        if not (np.isfinite(self.theta) and self.theta >= 1):
            raise DomainError(f"theta must be >= 1, got {self.theta}")
        if self.variant is Variant.R_QUADRATIC:
            if self.alpha is None or not (0 <= self.alpha < 1):
                raise DomainError(
                    f"R-quadratic budgets need alpha in [0, 1), got {self.alpha}"
                )

    @property
    def delta_sum(self) -> float:
        return self.delta + self.delta1 + self.delta2

    def range_cap(self) -> float:
        """theta^{-1} min over positive deltas of delta^{-1/3}; inf if all zero."""
        caps = [d ** (-1.0 / 3.0) for d in (self.delta, self.delta1, self.delta2) if d > 0]
        return min(caps) / self.theta if caps else float("inf")

    def c_alpha(self) -> float:
        if self.variant is Variant.R_LINEAR:
            return 12.0
        return 2.0 * (3.0 + self.alpha) / (1.0 - self.alpha)

    def as_dict(self) -> dict:
        return {
            "delta": self.delta,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "theta": self.theta,
            "alpha": self.alpha,
            "variant": self.variant.value,
            "provenance": self.provenance,
        }


@dataclass(frozen=True)
class PairSample:
    """One exchangeable-pair draw: (w, w', D realization, R realization)."""

    w: float
    w_prime: float
    d: float
    r: float

    def __post_init__(self):
        for name in ("w", "w_prime", "d", "r"):
            if not np.isfinite(getattr(self, name)):
                raise DomainError(f"PairSample.{name} must be finite")


def band(budget: SteinBudget, x: float) -> tuple[float, float, bool]:
    """Unit band 1 -+ theta^3 (1 + x^3)(delta+delta1+delta2) with its range flag.

    The unknown universal constant is taken as 1; `fit_constant` estimates
    the actual factor.
    """
    if not (np.isfinite(x) and x >= 0):
        raise DomainError(f"x must be >= 0, got {x}")
    half = budget.theta**3 * (1.0 + x**3) * budget.delta_sum
    in_range = x <= budget.range_cap() * (1.0 + 1e-9)
    return 1.0 - half, 1.0 + half, bool(in_range)


def zero_bias_band(delta: float, x: float) -> tuple[float, float, bool]:
    """Unit band 1 -+ (1 + x^3) delta for zero-bias couplings, range x <= delta^{-1/3}."""
    if not (np.isfinite(delta) and delta >= 0):
        raise DomainError(f"delta must be >= 0, got {delta}")
    if not (np.isfinite(x) and x >= 0):
        raise DomainError(f"x must be >= 0, got {x}")
    half = (1.0 + x**3) * delta
    cap = delta ** (-1.0 / 3.0) if delta > 0 else float("inf")
    return 1.0 - half, 1.0 + half, bool(x <= cap * (1.0 + 1e-9))


@dataclass(frozen=True, eq=False)
class RatioTable:
    """Rows (x, log P(W>=x), log(1-Phi(x)), ratio, unit band half-width, in_range)."""

    x: np.ndarray
    log_tail: np.ndarray
    log_normal_tail: np.ndarray
    ratio: np.ndarray
    band_halfwidth_unit: np.ndarray
    in_range: np.ndarray
    meta: str | None = None

    COLUMNS = ("x", "log_tail", "log_normal_tail", "ratio", "band_halfwidth_unit", "in_range")

    def __post_init__(self):
        n = self.x.size
        for name in self.COLUMNS:
            if getattr(self, name).shape != (n,):
                raise DomainError(f"RatioTable column {name} must have shape ({n},)")
        if n == 0:
            raise DomainError("RatioTable must not be empty")
        if n > 1 and not np.all(np.diff(self.x) > 0):
            raise DomainError("RatioTable x grid must be strictly increasing")

    def to_csv(self, target) -> None:
        """17-significant-digit CSV, round-trip exact for binary64."""
        close = False
        if isinstance(target, (str, bytes)) or hasattr(target, "__fspath__"):
            fh = open(target, "w", newline="")
            close = True
        else:
            fh = target
        try:
            fh.write(",".join(self.COLUMNS) + "\n")
            for i in range(self.x.size):
                vals = [
                    f"{self.x[i]:.17g}",
                    f"{self.log_tail[i]:.17g}",
                    f"{self.log_normal_tail[i]:.17g}",
                    f"{self.ratio[i]:.17g}",
                    f"{self.band_halfwidth_unit[i]:.17g}",
                    "1" if self.in_range[i] else "0",
                ]
                fh.write(",".join(vals) + "\n")
        finally:
            if close:
                fh.close()

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def _nudged_numerator_point(d: ExactDistribution, x: float) -> float:
    """Midpoint above an atom hit; nominal x otherwise (top atom stays inclusive)."""
    sup = d.support
    i = int(np.searchsorted(sup, x, side="left"))
    if i < sup.size and abs(sup[i] - x) <= ATOM_HIT_RTOL * (1.0 + abs(x)):
        if i + 1 < sup.size:
            return 0.5 * (sup[i] + sup[i + 1])
        return x
    # side='left' can land one past an atom equal to x within tolerance
    if i > 0 and abs(sup[i - 1] - x) <= ATOM_HIT_RTOL * (1.0 + abs(x)):
        if i < sup.size:
            return 0.5 * (sup[i - 1] + sup[i])
    return x


def tail_ratio_table(
    d: ExactDistribution,
    grid: Sequence[float],
    halfwidth_fn: Callable[[float], float],
    range_cap: float = float("inf"),
    nudge_atoms: bool = True,
    meta: str | None = None,
) -> RatioTable:
    """Build a RatioTable with a caller-supplied unit band half-width per x."""
    xs = np.asarray(grid, dtype=float)
    if xs.size == 0:
        raise DomainError("grid must be nonempty")
    if np.any(xs < 0) or not np.all(np.isfinite(xs)):
        raise DomainError("grid must be finite and nonnegative")
    if xs.size > 1 and not np.all(np.diff(xs) > 0):
        raise DomainError("grid must be strictly increasing")
    log_tail = np.empty(xs.size)
    for i, x in enumerate(xs):
        x_num = _nudged_numerator_point(d, float(x)) if nudge_atoms else float(x)
        log_tail[i] = d.log_upper_tail(x_num)
    log_norm = log_normal_tail(xs)
    ratio = np.exp(log_tail - log_norm)
    half = np.array([halfwidth_fn(float(x)) for x in xs])
    in_range = xs <= range_cap * (1.0 + 1e-9)
    return RatioTable(xs, log_tail, log_norm, ratio, half, in_range, meta=meta)


def ratio_table(
    d: ExactDistribution,
    budget: SteinBudget,
    grid: Sequence[float],
    nudge_atoms: bool = True,
    meta: str | None = None,
) -> RatioTable:
    """RatioTable with the generic budget band theta^3 (1+x^3) delta_sum."""
    mean, var = d.moments()
    if abs(mean) > 1e-6 or abs(var - 1.0) > 1e-6:
        raise DomainError(
            f"ratio_table requires a standardized law within 1e-6, got ({mean!r}, {var!r})"
        )
    theta3 = budget.theta**3
    dsum = budget.delta_sum
    return tail_ratio_table(
        d,
        grid,
        lambda x: theta3 * (1.0 + x**3) * dsum,
        range_cap=budget.range_cap(),
        nudge_atoms=nudge_atoms,
        meta=meta,
    )


def fit_constant(table: RatioTable) -> float:
    """Empirical universal constant: max over in-range rows with x > 0 of
    |ratio - 1| / unit half-width."""
    eligible = (table.x > 0) & table.in_range
    if not np.any(eligible):
        raise DomainError("fit_constant needs at least one in-range row with x > 0")
    hw = table.band_halfwidth_unit[eligible]
    if np.any(hw <= 0):
        raise DomainError("fit_constant requires positive unit half-widths for x > 0")
    return float(np.max(np.abs(table.ratio[eligible] - 1.0) / hw))


def conditional_regression(
    samples: Sequence[PairSample],
    bins: int,
    variant: Variant = Variant.R_LINEAR,
) -> tuple[float, float, float]:
    """Equal-count binned estimates (delta1_hat, delta2_hat, theta_hat).

    Bins are equal-count in w (W concentrates near 0; equal-width bins
    would starve the tails).
    """
    if bins < 5:
        raise DomainError(f"bins must be >= 5, got {bins}")
    if len(samples) < 10 * bins:
        raise DomainError(f"need >= 10*bins = {10 * bins} samples, got {len(samples)}")
    w = np.array([s.w for s in samples])
    dd = np.array([s.d for s in samples])
    rr = np.array([s.r for s in samples])
    order = np.argsort(w, kind="stable")
    d1 = d2 = 0.0
    theta = -np.inf
    for idx in np.array_split(order, bins):
        wbar = float(np.mean(w[idx]))
        dbar = float(np.mean(dd[idx]))
        rbar = float(np.mean(rr[idx]))
        d1 = max(d1, abs(dbar - 1.0) / (1.0 + abs(wbar)))
        denom = 1.0 + wbar**2 if variant is Variant.R_QUADRATIC else 1.0 + abs(wbar)
        d2 = max(d2, abs(rbar) / denom)
        theta = max(theta, dbar)
    return d1, d2, float(theta)


@dataclass(frozen=True)
class MgfBoundCheck:
    """Result of check_mgf_bound: the fitted constant and the t bookkeeping."""

    fitted_c1: float
    ok: bool
    used_t: tuple[float, ...]
    skipped_t: tuple[float, ...]
    abs_mean: float


def check_mgf_bound(
    d: ExactDistribution, budget: SteinBudget, t_grid: Sequence[float]
) -> MgfBoundCheck:
    """Fit the smallest c1 with log E e^{tW} <= t^2/2 + c1 theta (delta2 t
    + delta1 t^2 + (delta+delta1+delta2) t^3) over the admissible t's.

    Admissible: 1e-3 <= t <= 1/(2 delta) and
    t delta1 + C_alpha t theta delta2 <= 1/2.  Inadmissible t's are
    skipped and reported.  The exact E|W| is recorded alongside (the
    bound's constant also depends on a moment bound for |W|).
    """
    if budget.delta2 > 0.25:
        raise DomainError(f"MGF bound requires delta2 <= 1/4, got {budget.delta2}")
    ca = budget.c_alpha()
    used, skipped, fitted = [], [], -np.inf
    for t in t_grid:
        t = float(t)
        admissible = (
            t >= 1e-3
            and (budget.delta == 0 or t <= 1.0 / (2.0 * budget.delta))
            and t * budget.delta1 + ca * t * budget.theta * budget.delta2 <= 0.5
        )
        denom = budget.theta * (
            budget.delta2 * t + budget.delta1 * t**2 + budget.delta_sum * t**3
        )
        if not admissible or denom <= 0:
            skipped.append(t)
            continue
        used.append(t)
        fitted = max(fitted, (d.log_mgf(t) - 0.5 * t * t) / denom)
    if not used:
        raise DomainError(
            "no admissible t in t_grid (all skipped: out of range or zero denominator)"
        )
    return MgfBoundCheck(
        fitted_c1=float(fitted),
        ok=bool(np.isfinite(fitted)),
        used_t=tuple(used),
        skipped_t=tuple(skipped),
        abs_mean=d.abs_mean(),
    )


def _exp_sq_antiderivative(u: float, k: int) -> float:
    """int_0^u v^k e^{v^2/2} dv by the everywhere-convergent series
    sum_m u^{k+2m+1} / ((k+2m+1) 2^m m!)."""
    if u == 0.0:
        return 0.0
    total = 0.0
    m = 0
    coeff = 1.0  # 1 / (2^m m!)
    upow = u ** (k + 1)
    while True:
        term = upow * coeff / (k + 2 * m + 1)
        total += term
        if abs(term) <= 1e-17 * abs(total) and m > 2:
            break
        m += 1
        coeff /= 2.0 * m
        upow *= u * u
        if m > 10_000:
            raise DomainError(f"series for the weighted tail integral failed at u={u}")
    return total


def check_tail_integral(
    d: ExactDistribution, k: int, t: float
) -> tuple[float, float]:
    """(integral, integral / t^k) for int_0^t u^k e^{u^2/2} P(W >= u) du.

    P(W >= u) is piecewise constant between atoms, so each piece is
    integrated in closed form via the series antiderivative; callers
    enforce that t sits inside the admissible range of the model budget.
    """
    if k < 1:
        raise DomainError(f"k must be a positive integer, got {k}")
    if not (np.isfinite(t) and t >= 0):
        raise DomainError(f"t must be finite and >= 0, got {t}")
    if t == 0.0:
        return 0.0, 0.0
    cuts = [0.0] + [float(s) for s in d.support if 0.0 < s < t] + [t]
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        # on (lo, hi]: P(W >= u) = P(W > lo) = inclusive tail at the first atom > lo
        j = int(np.searchsorted(d.support, lo, side="right"))
        if j >= d.support.size:
            break
        p = math.exp(d.log_upper_tail(float(d.support[j])))
        if p > 0:
            total += p * (_exp_sq_antiderivative(hi, k) - _exp_sq_antiderivative(lo, k))
    return total, total / t**k


_ANTISYMMETRIC_BASKET: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "diff": lambda delta: delta,
    "diff_cubed": lambda delta: delta**3,
    "sin_diff": np.sin,
}


def pair_antisymmetry_check(
    kernel: Iterable[tuple[float, float, float]],
    test_fn: str | None = None,
) -> float:
    """|E F(W, W')| for antisymmetric F over an exact exchangeable-pair law.

    kernel: (w, w', prob) triples.  Raises DomainError (naming the pair)
    if the law is not swap-invariant within 1e-12.  test_fn selects one of
    {'diff', 'diff_cubed', 'sin_diff'}; default is the max over all three.
    """
    joint: dict[tuple[float, float], float] = {}
    for w, wp, p in kernel:
        key = (float(w), float(wp))
        joint[key] = joint.get(key, 0.0) + float(p)
    for (w, wp), p in joint.items():
        mirror = joint.get((wp, w), 0.0)
        if abs(p - mirror) > 1e-12:
            raise DomainError(
                f"pair law is not exchangeable: P({w},{wp})={p!r} vs P({wp},{w})={mirror!r}"
            )
    deltas = np.array([w - wp for (w, wp) in joint])
    probs = np.array(list(joint.values()))
    if test_fn is not None:
        if test_fn not in _ANTISYMMETRIC_BASKET:
            raise DomainError(f"unknown test function id {test_fn!r}")
        fns = [_ANTISYMMETRIC_BASKET[test_fn]]
    else:
        fns = list(_ANTISYMMETRIC_BASKET.values())
    return max(abs(float(np.dot(probs, f(deltas)))) for f in fns)


@dataclass(frozen=True)
class DiagnosticsReport:
    """Per-model record of identity residuals, fitted constants and pass/fail."""

    model: str
    n: int
    budget: SteinBudget | None
    fitted_constant: float | None
    identity_residuals: dict = field(default_factory=dict)
    passed: bool = True

    def to_json(self) -> str:
        return json.dumps(
            {
                "model": self.model,
                "n": self.n,
                "budget": self.budget.as_dict() if self.budget is not None else None,
                "fitted_constant": self.fitted_constant,
                "identity_residuals": self.identity_residuals,
                "pass": self.passed,
            },
            indent=1,
            sort_keys=True,
        )
