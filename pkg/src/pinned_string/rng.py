"""Counter-based random streams.

Every replica owns a Philox-4x64 generator keyed by ``(seed, tag, replica)``
through :class:`numpy.random.SeedSequence`. Draws within a replica are taken
in a fixed order (initial modes, then per step: modes, zero mode), so a
replica's numbers do not depend on how replicas are batched or which worker
runs them.
"""
from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK = 128


def stream_tag(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def replica_generator(seed: int, tag: str, replica: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=(stream_tag(tag), int(replica)))
    return np.random.Generator(np.random.Philox(ss))


def replica_generators(seed: int, tag: str, start: int, stop: int) -> list:
    return [replica_generator(seed, tag, r) for r in range(start, stop)]


def worker_count(requested: int | None = None) -> int:
    """Number of workers, capped by ``PINNED_STRING_THREADS`` when set."""
    n = requested if requested else (os.cpu_count() or 1)
    cap = os.environ.get("PINNED_STRING_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, int(n))


def blocks(replicas: int, size: int = BLOCK):
    return [(a, min(a + size, replicas)) for a in range(0, replicas, size)]


def map_blocks(func, replicas: int, workers: int | None = None, size: int = BLOCK) -> list:
    """Run ``func(start, stop)`` over replica blocks; results come back in block order."""
    spans = blocks(replicas, size)
    n = worker_count(workers)
    if n == 1 or len(spans) == 1:
        return [func(a, b) for a, b in spans]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(lambda ab: func(*ab), spans))
