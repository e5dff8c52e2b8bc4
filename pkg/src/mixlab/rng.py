"""Counter-based random streams keyed by (seed, stream, chunk).

Monte-Carlo runs are split into fixed-size chunks; chunk ``c`` of stream
``s`` always draws from ``Philox(SeedSequence(seed, spawn_key=(s, c)))``.
Output therefore does not depend on how chunks are spread over threads.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .config import CHUNK_RUNS
from .errors import ConfigError

__all__ = ["STREAMS", "check_seed", "generator", "chunk_bounds", "map_chunks", "resolve_threads"]

STREAMS = {"chain": 1, "coupled": 2, "block": 3, "maximal": 4}


def check_seed(seed) -> int:
    try:
        s = int(seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seed must be an integer, got {seed!r}") from exc
    if not 0 <= s < 2**64 or s != seed:
        raise ConfigError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return s


def generator(seed: int, stream: str, chunk: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=(STREAMS[stream], chunk))
    return np.random.Generator(np.random.Philox(ss))


def chunk_bounds(runs: int, size: int = CHUNK_RUNS) -> list[tuple[int, int, int]]:
    """``(chunk_index, start, stop)`` covering ``range(runs)``."""
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    return [(c, s, min(s + size, runs)) for c, s in enumerate(range(0, runs, size))]


def resolve_threads(threads: int | None) -> int:
    """Explicit value, else ``MIXLAB_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("MIXLAB_THREADS")
        if env is None:
            return 1
        try:
            threads = int(env)
        except ValueError as exc:
            raise ConfigError(f"MIXLAB_THREADS must be an integer, got {env!r}") from exc
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    return threads


def map_chunks(fn: Callable[[int, int, int], np.ndarray], runs: int, threads: int | None = None) -> Sequence:
    """Apply ``fn(chunk, start, stop)`` over all chunks and return results in chunk order."""
    chunks = chunk_bounds(runs)
    n = resolve_threads(threads)
    if n == 1 or len(chunks) == 1:
        return [fn(*c) for c in chunks]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(lambda c: fn(*c), chunks))
