"""Deterministic chunked execution.

Work is split into fixed-size chunks; chunk ``j`` always draws from the
generator seeded by ``(seed, j)``, so results do not depend on how many
workers run the chunks.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np

CHUNK = 64


def chunk_rng(seed, index: int) -> np.random.Generator:
    base = 0 if seed is None else int(seed)
    return np.random.default_rng(np.random.SeedSequence([base, int(index)]))


def chunk_sizes(total: int, chunk: int = CHUNK) -> list[int]:
    full, rest = divmod(int(total), chunk)
    return [chunk] * full + ([rest] if rest else [])


def map_chunks(fn: Callable, total: int, seed, workers: int = 1, chunk: int = CHUNK, args: tuple = ()) -> list:
    """Call ``fn(size, rng, *args)`` for each chunk; results in chunk order."""
    sizes = chunk_sizes(total, chunk)
    rngs = [chunk_rng(seed, j) for j in range(len(sizes))]
    workers = max(1, min(int(workers or 1), len(sizes), os.cpu_count() or 1))
    if workers == 1:
        return [fn(s, r, *args) for s, r in zip(sizes, rngs)]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(fn, s, r, *args) for s, r in zip(sizes, rngs)]
        return [f.result() for f in futs]


def mean_stderr(values: Sequence[float]) -> tuple[float, float]:
    """Order-independent mean and standard error (compensated sums)."""
    x = np.asarray(values, dtype=float)
    n = len(x)
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(x) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)
