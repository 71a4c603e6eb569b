"""Standard normal tails and the solution machinery of the normal Stein equation.

Everything downstream (tail-ratio tables, inequality checkers) funnels
through `normal_tail` / `log_normal_tail`, so these are required to hold
relative error ~1e-12 over |w| <= 40 and to stay strictly positive up to
w = 38 (subnormal range).  Tail ratios are always combined in log space
by the callers.

The Stein equation solved here is

    w f(w) - f'(w) = 1{w >= x} - (1 - Phi(x)),

whose bounded solution f_x and the derivative g = (w f_x)' have two-branch
closed forms in terms of the Mills ratio (1 - Phi(w)) e^{w^2/2}.  Both are
evaluated through logs so that the e^{w^2/2} factor never overflows on the
branch where it is tamed by a matching tail factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr

from .errors import DomainError

SQRT_2PI = math.sqrt(2.0 * math.pi)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _as_finite_array(w, name: str) -> np.ndarray:
    arr = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {w!r}")
    return arr


def _scalar_or_array(value: np.ndarray, scalar_input: bool):
    return float(value) if scalar_input else value


def normal_tail(w):
    """Upper tail 1 - Phi(w).

    Uses the complementary-error-function evaluation of scipy (rational
    forms in the tail); where that flushes to zero (w ~ 37.6+) falls back
    to exp(log_ndtr(-w)), which reaches the subnormal range, so the tail
    is nonzero up to w = 38 and slightly beyond.
    """
    scalar = np.isscalar(w)
    arr = _as_finite_array(w, "w")
    out = ndtr(-arr)
    dead = out == 0.0
    if np.any(dead):
        out = np.where(dead, np.exp(log_ndtr(-arr)), out)
    return _scalar_or_array(out, scalar)


def log_normal_tail(w):
    """log(1 - Phi(w)), accurate for all finite w."""
    scalar = np.isscalar(w)
    arr = _as_finite_array(w, "w")
    return _scalar_or_array(log_ndtr(-arr), scalar)


def normal_cdf(w):
    """Phi(w)."""
    scalar = np.isscalar(w)
    arr = _as_finite_array(w, "w")
    return _scalar_or_array(ndtr(arr), scalar)


def mills_ratio(w):
    """(1 - Phi(w)) e^{w^2/2}, computed as exp(log tail + w^2/2).

    For w > 0 this is bounded by min(1/2, 1/(w sqrt(2 pi))).  For
    w <~ -38.6 the value overflows to inf (the tail factor is ~1).
    """
    scalar = np.isscalar(w)
    arr = _as_finite_array(w, "w")
    with np.errstate(over="ignore"):
        out = np.exp(log_ndtr(-arr) + 0.5 * arr * arr)
    return _scalar_or_array(out, scalar)


@dataclass(frozen=True)
class NormalEval:
    """One evaluation point bundling Phi, the tail and the Mills ratio."""

    w: float
    phi: float
    tail: float
    mills: float


def normal_eval(w: float) -> NormalEval:
    arr = _as_finite_array(w, "w")
    if arr.ndim != 0:
        raise DomainError(f"w must be a scalar, got shape {arr.shape}")
    x = float(arr)
    return NormalEval(w=x, phi=normal_cdf(x), tail=normal_tail(x), mills=mills_ratio(x))


def _log_mills(w: np.ndarray) -> np.ndarray:
    return log_ndtr(-w) + 0.5 * w * w


def stein_solution(x, w):
    """Bounded solution f_x(w) of the Stein equation for the indicator 1{w >= x}.

        f_x(w) = sqrt(2 pi) e^{w^2/2} (1 - Phi(w)) Phi(x),   w >= x
        f_x(w) = sqrt(2 pi) e^{w^2/2} (1 - Phi(x)) Phi(w),   w < x

    Continuous and nonnegative; evaluated as exp of a log-space sum.
    """
    scalar = np.isscalar(x) and np.isscalar(w)
    xa = _as_finite_array(x, "x")
    wa = _as_finite_array(w, "w")
    xa, wa = np.broadcast_arrays(xa, wa)
    log_upper = LOG_SQRT_2PI + _log_mills(wa) + log_ndtr(xa)
    log_lower = LOG_SQRT_2PI + _log_mills(-wa) + log_ndtr(-xa)
    out = np.exp(np.where(wa >= xa, log_upper, log_lower))
    return _scalar_or_array(out, scalar)


def stein_bracket(w):
    """sqrt(2 pi) (1 + w^2) e^{w^2/2} (1 - Phi(w)) - w.

    For w >= 0 this lies in [0, 2 / (1 + w^3)]; it is the w >= x factor of
    the derivative g below.
    """
    scalar = np.isscalar(w)
    arr = _as_finite_array(w, "w")
    out = SQRT_2PI * (1.0 + arr * arr) * np.exp(_log_mills(arr)) - arr
    return _scalar_or_array(out, scalar)


def stein_solution_derivative_g(x, w):
    """g(w) = (w f_x(w))', in the two-branch closed form.

        g(w) = [sqrt(2 pi) (1+w^2) e^{w^2/2} (1-Phi(w)) - w] Phi(x),   w >= x
        g(w) = [sqrt(2 pi) (1+w^2) e^{w^2/2} Phi(w) + w] (1-Phi(x)),   w < x

    The lower branch bracket equals stein_bracket(-w).
    """
    scalar = np.isscalar(x) and np.isscalar(w)
    xa = _as_finite_array(x, "x")
    wa = _as_finite_array(w, "w")
    xa, wa = np.broadcast_arrays(xa, wa)
    upper = stein_bracket(wa) * ndtr(xa)
    lower = stein_bracket(-wa) * ndtr(-xa)
    out = np.where(wa >= xa, upper, lower)
    return _scalar_or_array(out, scalar)
