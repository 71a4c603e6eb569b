"""Random-permutation array statistic W = sum_i a_{i,pi(i)} / sigma.

The array must be doubly centered (every row and column sums to zero);
then the statistic has mean 0 and variance

    sigma^2 = sum_{ij} a_{ij}^2 / (n - 1).

That closed form is not taken on faith: the test suite validates it
against full permutation enumeration for n <= 8 before it is used.  The
coupling budget is the zero-bias one, delta = 8 c0 / sigma with
c0 = max |a_{ij}|, and delta1 = delta2 = 0, theta = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from ..dist import ExactDistribution
from ..errors import DegenerateError, DomainError, ResourceError
from ..stein import RatioTable, SteinBudget, Variant, fit_constant, tail_ratio_table
from . import _mc

ROW_COL_TOLERANCE = 1e-10
EXACT_MAX_N = 9


@dataclass(frozen=True, eq=False)
class CombArray:
    n: int
    a: np.ndarray
    c0: float
    sigma: float

    @property
    def delta(self) -> float:
        return 8.0 * self.c0 / self.sigma


def validate_and_sigma(a) -> CombArray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"array must be square, got shape {a.shape}")
    n = a.shape[0]
    if n < 2:
        raise DomainError(f"array must be at least 2x2, got n = {n}")
    if not np.all(np.isfinite(a)):
        raise DomainError("array entries must be finite")
    row = a.sum(axis=1)
    col = a.sum(axis=0)
    bad_row = np.flatnonzero(np.abs(row) > ROW_COL_TOLERANCE)
    if bad_row.size:
        i = int(bad_row[0])
        raise DomainError(f"row {i} sums to {row[i]!r}, must be 0 within {ROW_COL_TOLERANCE}")
    bad_col = np.flatnonzero(np.abs(col) > ROW_COL_TOLERANCE)
    if bad_col.size:
        j = int(bad_col[0])
        raise DomainError(f"column {j} sums to {col[j]!r}, must be 0 within {ROW_COL_TOLERANCE}")
    sigma2 = float(np.sum(a * a)) / (n - 1)
    if sigma2 <= 0:
        raise DegenerateError("array is identically zero: sigma would be 0")
    a = a.copy()
    a.flags.writeable = False
    return CombArray(n=n, a=a, c0=float(np.max(np.abs(a))), sigma=math.sqrt(sigma2))


def double_center(raw) -> np.ndarray:
    """Subtract row means then column means; the result satisfies the
    zero-sum constraints up to float rounding."""
    raw = np.asarray(raw, dtype=float)
    out = raw - raw.mean(axis=1, keepdims=True)
    out -= out.mean(axis=0, keepdims=True)
    return out


def permutation_values(arr: CombArray) -> np.ndarray:
    """All n! values of the unstandardized statistic (n <= 9)."""
    n = arr.n
    if n > EXACT_MAX_N:
        raise ResourceError(
            f"exact enumeration capped at n <= {EXACT_MAX_N} (n! permutations); "
            f"use sample() for n = {n}"
        )
    perms = np.array(list(permutations(range(n))), dtype=np.intp)
    return arr.a[np.arange(n)[None, :], perms].sum(axis=1)


def exact_law(arr: CombArray) -> ExactDistribution:
    """Exact standardized law by full enumeration over permutations."""
    vals = permutation_values(arr) / arr.sigma
    order = np.argsort(vals, kind="stable")
    return ExactDistribution.from_logweights(
        vals[order],
        np.zeros(vals.size),
        meta=f"combinatorial(n={arr.n})",
    )


def budget(arr: CombArray) -> SteinBudget:
    """Zero-bias coupling budget: delta = 8 c0 / sigma, delta1 = delta2 = 0."""
    return SteinBudget(
        delta=arr.delta,
        delta1=0.0,
        delta2=0.0,
        theta=1.0,
        variant=Variant.R_LINEAR,
        provenance="exact formula",
    )


def sample(arr: CombArray, seed: int, count: int, workers: int = 1) -> np.ndarray:
    """Seeded W draws under uniform permutations (argsort-of-uniforms shuffle)."""
    if count < 0:
        raise DomainError(f"count must be >= 0, got {count}")
    seeds = _mc.worker_seeds(seed, workers)
    idx = np.arange(arr.n)[None, :]
    chunks = []
    for c, s in zip(_mc.split_count(count, workers), seeds):
        if c == 0:
            continue
        rng = np.random.Generator(np.random.PCG64(int(s)))
        perms = np.argsort(rng.random((c, arr.n)), axis=1)
        chunks.append(arr.a[idx, perms].sum(axis=1) / arr.sigma)
    if not chunks:
        return np.empty(0, dtype=float)
    return np.concatenate(chunks)


def band_report(
    arr: CombArray, grid=None, points: int = 25, nudge_atoms: bool = True
) -> tuple[RatioTable, float]:
    """Tail-ratio table with the zero-bias unit band (1 + x^3) delta."""
    law = exact_law(arr)
    delta = arr.delta
    cap = delta ** (-1.0 / 3.0)
    if grid is None:
        grid = np.linspace(0.0, cap, points)
    table = tail_ratio_table(
        law,
        grid,
        lambda x: (1.0 + x**3) * delta,
        range_cap=cap,
        nudge_atoms=nudge_atoms,
        meta=f"combinatorial(n={arr.n})",
    )
    return table, fit_constant(table)
