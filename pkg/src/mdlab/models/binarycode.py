"""Digit-sum laws of binary code systems for uniform X on {0..n}.

A code system assigns each integer a binary string; the statistic is the
number of ones.  Systems satisfying the halving recursion

    law(2m - 1) = law(m - 1) + Bernoulli(1/2)   for all m >= 1

are exactly those induced by labeled infinite binary trees with
(C1) root labeled 0, (C2) sibling labels differing, (C3) the subtrees
rooted along the leftmost path identical to the whole tree.  Two extreme
labelings bracket every such system stochastically:

* binary-expansion: left sibling 0, right sibling 1 -> popcount(X);
* reflected-extreme: the forced pair (V_{k,0}, V_{k,1}) = (0, 1) and
  every other sibling pair (1, 0).

For the reflected tree, walking the label rule gives the exact split
(with k the bit length of n):

    x < 2^{k-1}:   number of ones ~ Binomial(k-1, 1/2)  (self-symmetric
                   under s -> k-1-s),
    x >= 2^{k-1}:  number of ones = k + 1 - popcount(x)  pointwise,

and the law is assembled from exact integer counts on both halves.

The exchangeable pair for the binary-expansion system flips a uniformly
chosen bit position unless the flip would exceed n (the Q statistic
counts the blocked positions).  With W = (2S - k)/sqrt(k) and
lambda = 2/k this gives two exact grouped identities:

    E(W - W' | S) = lambda (W + E(Q|S)/sqrt(k))
    E((W - W')^2 | S) / (2 lambda) - 1 = -E(Q|S)/k.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..dist import ExactDistribution
from ..errors import DomainError, ModelIntegrityError, ResourceError
from ..stein import RatioTable, SteinBudget, Variant, fit_constant, tail_ratio_table

IDENTITY_TOLERANCE = 1e-8
BRUTE_FORCE_MAX_N = 1 << 18
EXACT_GROUPING_MAX_N = 1 << 22
TREE_WALK_MAX_N = 1 << 18
TREE_DEPTH_CAP = 22


class System(enum.Enum):
    BINARY_EXPANSION = "binary-expansion"
    REFLECTED_EXTREME = "reflected-extreme"
    CUSTOM_TREE = "custom-tree"


@dataclass(frozen=True)
class CodeInstance:
    n: int
    k: int
    system: System
    lam: Fraction

    @classmethod
    def make(cls, n: int, system: System = System.BINARY_EXPANSION) -> "CodeInstance":
        if n < 1:
            raise DomainError(f"n must be >= 1, got {n}")
        k = n.bit_length()
        return cls(n=n, k=k, system=system, lam=Fraction(2, k))


def standardized_support(k: int, s: np.ndarray) -> np.ndarray:
    """W values (2s - k)/sqrt(k) for digit sums s."""
    return (2.0 * s - k) / math.sqrt(k)


# --------------------------------------------------------------- digit DP


def _popcount_counts_bounded(bound: int, k: int, forced_zero: int | None = None) -> list[int]:
    """counts[s] = #{x in [0, bound] : popcount_k(x) = s}, optionally with
    bit position `forced_zero` (1 = most significant of k) required to be 0.

    Exact integer DP over the bits of `bound`, O(k^2).
    """
    counts = [0] * (k + 1)
    if bound < 0:
        return counts
    ones_prefix = 0
    prefix_ok = True  # goes False once the prefix carries a 1 at the forced position
    for pos in range(1, k + 1):
        bit = (bound >> (k - pos)) & 1
        if bit:
            # branch: bits < pos follow `bound`, bit at pos = 0, suffix free
            if prefix_ok:
                free = k - pos
                if forced_zero is not None and forced_zero > pos:
                    free -= 1  # the forced position sits in the suffix, pinned to 0
                for j in range(free + 1):
                    counts[ones_prefix + j] += math.comb(free, j)
            if forced_zero == pos:
                prefix_ok = False
            ones_prefix += 1
    if prefix_ok:
        counts[ones_prefix] += 1  # x = bound itself
    return counts


def digit_sum_counts(n: int) -> list[int]:
    """Exact integer counts of popcount(x) over x in {0..n}; sums to n + 1."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    k = n.bit_length()
    if k > 62:
        raise ResourceError(f"digit DP supports bit lengths up to 62, got {k}")
    return _popcount_counts_bounded(n, k)


def digit_sum_law(n: int) -> ExactDistribution:
    """Exact law of popcount(X), X uniform on {0..n} (binary-expansion system)."""
    counts = digit_sum_counts(n)
    return ExactDistribution.from_counts(
        range(len(counts)), counts, meta=f"binarycode(n={n},system=binary-expansion)"
    )


def reflected_counts(n: int) -> list[int]:
    """Exact integer counts for the reflected-extreme system.

    Lower half is Binomial(k-1, 1/2) counts; on the upper half the digit
    sum is k + 1 - popcount(x) pointwise.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    k = n.bit_length()
    counts = [0] * (k + 1)
    if k == 1:
        # n = 1: strings are the labels 0, 1
        counts[0] += 1
        counts[1] += 1
        return counts
    for s in range(k):
        counts[s] += math.comb(k - 1, s)
    upper = _popcount_counts_bounded(n - (1 << (k - 1)), k - 1)
    for pc, c in enumerate(upper):
        counts[k - pc] += c
    return counts


def reflected_law(n: int) -> ExactDistribution:
    counts = reflected_counts(n)
    return ExactDistribution.from_counts(
        range(len(counts)), counts, meta=f"binarycode(n={n},system=reflected-extreme)"
    )


# --------------------------------------------------------------- tree systems


@dataclass(frozen=True, eq=False)
class TreeLabeling:
    """Explicit 0/1 labels of a binary tree down to `depth` generations.

    levels[j] is the label array of generation j (length 2^j).  Checks:
    root 0, sibling labels differ, and the leftmost-path self-similarity
    (the subtree rooted at the leftmost node of any generation carries the
    same labels as the tree itself).
    """

    levels: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.levels:
            raise DomainError("TreeLabeling needs at least the root level")
        if len(self.levels) - 1 > TREE_DEPTH_CAP:
            raise ResourceError(f"tree depth capped at {TREE_DEPTH_CAP}")
        for j, lev in enumerate(self.levels):
            if lev.shape != (1 << j,):
                raise DomainError(f"level {j} must have length {1 << j}")
        if self.levels[0][0] != 0:
            raise DomainError("C1 violated: the root must be labeled 0")
        for j in range(1, len(self.levels)):
            lev = self.levels[j]
            if np.any(lev[0::2] == lev[1::2]):
                raise DomainError(f"C2 violated at generation {j}: equal sibling labels")
        # C3: generation j of the subtree rooted at V_{d,0} equals generation j
        for d in range(1, len(self.levels)):
            for j in range(len(self.levels) - d):
                sub = self.levels[d + j][: 1 << j]
                if not np.array_equal(sub, self.levels[j]):
                    raise DomainError(
                        f"C3 violated: subtree at depth {d} differs at generation {j}"
                    )

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @classmethod
    def from_rule(cls, depth: int, left_label) -> "TreeLabeling":
        """Build levels from `left_label(j, pair_index) -> 0/1` for the free
        sibling pairs; the leftmost pair of every generation is forced (0, 1)."""
        if depth < 0:
            raise DomainError("depth must be >= 0")
        levels = [np.zeros(1, dtype=np.int8)]
        for j in range(1, depth + 1):
            lev = np.empty(1 << j, dtype=np.int8)
            lev[0], lev[1] = 0, 1
            for pair in range(1, 1 << (j - 1)):
                left = int(left_label(j, pair)) & 1
                lev[2 * pair] = left
                lev[2 * pair + 1] = 1 - left
            levels.append(lev)
        return cls(tuple(levels))

    @classmethod
    def binary_expansion(cls, depth: int) -> "TreeLabeling":
        return cls.from_rule(depth, lambda j, pair: 0)

    @classmethod
    def reflected_extreme(cls, depth: int) -> "TreeLabeling":
        return cls.from_rule(depth, lambda j, pair: 1)

    def digit_sum(self, x: int) -> int:
        """Sum of labels on the root-to-leaf path of node x at generation bit_length(x)."""
        k = max(x.bit_length(), 1)
        if k > self.depth:
            raise ResourceError(f"x = {x} needs depth {k} > stored depth {self.depth}")
        return int(sum(int(self.levels[j][x >> (k - j)]) for j in range(1, k + 1)))

    def law(self, n: int) -> ExactDistribution:
        """Law of the digit sum for X uniform on {0..n} by direct tree walk."""
        if n > TREE_WALK_MAX_N:
            raise ResourceError(f"tree walk capped at n <= {TREE_WALK_MAX_N}, got {n}")
        k = n.bit_length()
        if k > self.depth:
            raise ResourceError(f"n = {n} needs depth {k} > stored depth {self.depth}")
        x = np.arange(n + 1, dtype=np.int64)
        total = np.zeros(n + 1, dtype=np.int64)
        for j in range(1, k + 1):
            total += self.levels[j][(x >> (k - j)).astype(np.int64)]
        counts = np.bincount(total, minlength=k + 1)
        return ExactDistribution.from_counts(
            range(k + 1), counts.tolist(), meta=f"binarycode(n={n},system=custom-tree)"
        )


def system_law(n: int, system: System, tree: TreeLabeling | None = None) -> ExactDistribution:
    if system is System.BINARY_EXPANSION:
        return digit_sum_law(n)
    if system is System.REFLECTED_EXTREME:
        return reflected_law(n)
    if tree is None:
        raise DomainError("custom-tree system requires a TreeLabeling")
    return tree.law(n)


def standardized_law(n: int, system: System = System.BINARY_EXPANSION,
                     tree: TreeLabeling | None = None) -> ExactDistribution:
    """Law of W = (2S - k)/sqrt(k) under the requested system."""
    k = n.bit_length()
    law = system_law(n, system, tree)
    return ExactDistribution(
        standardized_support(k, law.support), law.logp, meta=law.meta
    )


# --------------------------------------------------------- exchangeable pair


def exchangeable_step(n: int, x: int, i: int) -> int:
    """Resample bit position i (1 = MSB of the k-bit string): a 0 becomes 1
    only if the flip keeps x <= n; a 1 always becomes 0."""
    k = n.bit_length()
    if not (0 <= x <= n):
        raise DomainError(f"x must be in [0, {n}], got {x}")
    if not (1 <= i <= k):
        raise DomainError(f"i must be in [1, {k}], got {i}")
    bit = 1 << (k - i)
    if x & bit:
        return x - bit
    if x + bit <= n:
        return x + bit
    return x


def q_statistic(n: int, x: int) -> int:
    """Number of 0 bits of x whose upward flip would exceed n."""
    k = n.bit_length()
    if not (0 <= x <= n):
        raise DomainError(f"x must be in [0, {n}], got {x}")
    q = 0
    for i in range(1, k + 1):
        bit = 1 << (k - i)
        if not (x & bit) and x + bit > n:
            q += 1
    return q


def blocked_sum_by_s(n: int) -> list[int]:
    """T[s] = sum of Q(x) over x <= n with popcount s, by digit DP (exact ints)."""
    k = n.bit_length()
    totals = [0] * (k + 1)
    for i in range(1, k + 1):
        hi = _popcount_counts_bounded(n, k, forced_zero=i)
        lo = _popcount_counts_bounded(n - (1 << (k - i)), k, forced_zero=i)
        for s in range(k + 1):
            totals[s] += hi[s] - lo[s]
    return totals


@dataclass(frozen=True)
class BinaryCodeIdentities:
    """Grouped kernel-vs-closed-form residuals, the budget and the fitted
    constant of the blocked-flip bound E(Q|S) <= C (1 + |W|)."""

    residual_drift: float
    residual_d: float
    budget: SteinBudget
    q_bound_constant: float
    e_q_by_s: dict[int, float]


def pair_identities_report(n: int, _perturb: float = 0.0) -> BinaryCodeIdentities:
    """Exact grouped identities for the binary-expansion pair.

    For n <= 2^18 the kernel side is brute-forced per (x, i); above that
    the blocked-flip sums come from the digit DP (still exact integers).
    `_perturb` is a test hook that biases the kernel drift to exercise the
    integrity error path.
    """
    if n > EXACT_GROUPING_MAX_N:
        raise ResourceError(
            f"exact conditional sums are capped at n <= {EXACT_GROUPING_MAX_N}, got {n}"
        )
    k = n.bit_length()
    counts = digit_sum_counts(n)
    sqrt_k = math.sqrt(k)
    lam = 2.0 / k

    if n <= BRUTE_FORCE_MAX_N:
        # kernel side: walk every (x, i) through the resampling rule
        drift_sum = [0.0] * (k + 1)  # sum over x of E(W - W' | x)
        d_sum = [0.0] * (k + 1)      # sum over x of E((W-W')^2 | x) / (2 lam)
        q_sum = [0] * (k + 1)
        for x in range(n + 1):
            s = x.bit_count()
            q = 0
            moved = 0
            for i in range(1, k + 1):
                xp = exchangeable_step(n, x, i)
                if xp == x and not (x >> (k - i)) & 1:
                    q += 1
                if xp != x:
                    moved += 1
            # each move changes S by +-1, i.e. W by -+2/sqrt(k)
            up = k - s - q  # 0 -> 1 flips (S increases)
            down = s        # 1 -> 0 flips
            drift_sum[s] += (2.0 / (k * sqrt_k)) * (down - up)
            d_sum[s] += (k / 4.0) * (4.0 / (k * k)) * moved
            q_sum[s] += q
    else:
        q_sum = blocked_sum_by_s(n)
        drift_sum = [0.0] * (k + 1)
        d_sum = [0.0] * (k + 1)
        for s in range(k + 1):
            if counts[s] == 0:
                continue
            q_over_count = q_sum[s] / counts[s]
            drift_sum[s] = counts[s] * (2.0 / (k * sqrt_k)) * (2 * s - k + q_over_count)
            d_sum[s] = counts[s] * (k - q_over_count) / k

    res_drift = 0.0
    res_d = 0.0
    delta1 = 0.0
    delta2 = 0.0
    theta_raw = -np.inf
    q_bound = 0.0
    e_q: dict[int, float] = {}
    for s in range(k + 1):
        if counts[s] == 0:
            continue
        w = (2.0 * s - k) / sqrt_k
        eq = q_sum[s] / counts[s]
        e_q[s] = eq
        drift_kernel = drift_sum[s] / counts[s] + _perturb
        d_kernel = d_sum[s] / counts[s]
        drift_closed = lam * (w + eq / sqrt_k)
        d_closed = 1.0 - eq / k
        res_drift = max(res_drift, abs(drift_kernel - drift_closed))
        res_d = max(res_d, abs(d_kernel - d_closed))
        delta1 = max(delta1, (eq / k) / (1.0 + abs(w)))
        delta2 = max(delta2, (eq / sqrt_k) / (1.0 + abs(w)))
        theta_raw = max(theta_raw, d_kernel)
        q_bound = max(q_bound, eq / (1.0 + abs(w)))
    if max(res_drift, res_d) > IDENTITY_TOLERANCE:
        raise ModelIntegrityError(
            f"binary-code kernel and closed-form identities disagree: "
            f"drift residual {res_drift:.3e}, D residual {res_d:.3e}"
        )
    budget = SteinBudget(
        delta=2.0 / sqrt_k,
        delta1=delta1,
        delta2=delta2,
        theta=max(1.0, float(theta_raw)),
        variant=Variant.R_LINEAR,
        provenance="exact formula",
    )
    return BinaryCodeIdentities(
        residual_drift=res_drift,
        residual_d=res_d,
        budget=budget,
        q_bound_constant=q_bound,
        e_q_by_s=e_q,
    )


def pair_kernel(n: int) -> list[tuple[float, float, float]]:
    """Exact joint law of (W, W') for the uniform (X, I) kernel; n <= 2^12."""
    if n > (1 << 12):
        raise ResourceError(f"explicit pair kernel capped at n <= {1 << 12}, got {n}")
    k = n.bit_length()
    w = {s: (2.0 * s - k) / math.sqrt(k) for s in range(k + 1)}
    p_each = 1.0 / ((n + 1) * k)
    joint: dict[tuple[float, float], float] = {}
    for x in range(n + 1):
        for i in range(1, k + 1):
            xp = exchangeable_step(n, x, i)
            key = (w[x.bit_count()], w[xp.bit_count()])
            joint[key] = joint.get(key, 0.0) + p_each
    return [(a, b, p) for (a, b), p in joint.items()]


def band_report(
    n: int, grid=None, points: int = 25, nudge_atoms: bool = True,
) -> dict[System, tuple[RatioTable, float]]:
    """Tail-ratio tables for both extreme systems, unit band (1 + x^3)/sqrt(k)."""
    if n < 2:
        raise DomainError(f"band_report requires n >= 2, got {n}")
    k = n.bit_length()
    cap = k ** (1.0 / 6.0)
    if grid is None:
        grid = np.linspace(0.0, cap, points)
    rate = 1.0 / math.sqrt(k)
    out: dict[System, tuple[RatioTable, float]] = {}
    for system in (System.BINARY_EXPANSION, System.REFLECTED_EXTREME):
        law = standardized_law(n, system)
        table = tail_ratio_table(
            law,
            grid,
            lambda x: (1.0 + x**3) * rate,
            range_cap=cap,
            nudge_atoms=nudge_atoms,
            meta=f"binarycode(n={n},system={system.value})",
        )
        out[system] = (table, fit_constant(table))
    return out


def sample(n: int, seed: int, count: int, workers: int = 1) -> np.ndarray:
    """Digit sums of seeded uniform draws X ~ U{0..n} (binary-expansion system)."""
    from . import _mc

    if count < 0:
        raise DomainError(f"count must be >= 0, got {count}")
    seeds = _mc.worker_seeds(seed, workers)
    chunks = []
    for c, s in zip(_mc.split_count(count, workers), seeds):
        if c == 0:
            continue
        rng = np.random.Generator(np.random.PCG64(int(s)))
        xs = rng.integers(0, n + 1, size=c)
        chunks.append(np.array([int(x).bit_count() for x in xs], dtype=np.int64))
    if not chunks:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(chunks)
