"""Shared Monte Carlo helpers: seeded birth-death chain sampling.

Both lattice chains in this package (anti-voter T-chain, mean-field spin
S-chain) reduce to a walk on an integer index with tabulated up/down
probabilities, so one compiled stepper serves both.  Worker streams are
split deterministically from the master seed and merged in worker order,
which keeps outputs byte-identical for a fixed (seed, workers, count).
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError

_kernel = None


def _get_kernel():
    global _kernel
    if _kernel is None:
        import numba

        @numba.njit(cache=False)
        def chain_sample(up, down, start, burnin, count, thin, seed):  # pragma: no cover
            np.random.seed(seed)
            state = start
            out = np.empty(count, dtype=np.int64)
            for _ in range(burnin):
                u = np.random.random()
                if u < up[state]:
                    state += 1
                elif u < up[state] + down[state]:
                    state -= 1
            for i in range(count):
                for _ in range(thin):
                    u = np.random.random()
                    if u < up[state]:
                        state += 1
                    elif u < up[state] + down[state]:
                        state -= 1
                out[i] = state
            return out

        _kernel = chain_sample
    return _kernel


def worker_seeds(seed: int, workers: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed)).generate_state(workers, dtype=np.uint32)


def split_count(count: int, workers: int) -> list[int]:
    base, extra = divmod(count, workers)
    return [base + (1 if i < extra else 0) for i in range(workers)]


def sample_birth_death(
    up: np.ndarray,
    down: np.ndarray,
    start: int,
    seed: int,
    count: int,
    burnin: int,
    thin: int = 1,
    workers: int = 1,
) -> np.ndarray:
    """Stationary-chain samples of the state index, thinned by `thin`."""
    if count < 0:
        raise DomainError(f"count must be >= 0, got {count}")
    if burnin < 0 or thin < 1 or workers < 1:
        raise DomainError("burnin >= 0, thin >= 1 and workers >= 1 are required")
    if count == 0:
        return np.empty(0, dtype=np.int64)
    kernel = _get_kernel()
    up = np.ascontiguousarray(up, dtype=np.float64)
    down = np.ascontiguousarray(down, dtype=np.float64)
    seeds = worker_seeds(seed, workers)
    chunks = [
        kernel(up, down, int(start), int(burnin), int(c), int(thin), int(s))
        for c, s in zip(split_count(count, workers), seeds)
        if c > 0
    ]
    return np.concatenate(chunks)
