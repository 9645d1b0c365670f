"""Derived seeds and worker-count independent block execution.

Draw ``i`` of a stream always belongs to block ``i // BLOCK_SIZE``; the
randomness of a block is derived only from ``(master_seed, stream, block)``
and draws inside a block are generated sequentially. The set of samples
therefore never depends on how blocks are spread over workers.
"""
from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK_SIZE = 2048

def stream_id(name: str) -> int:
    """Stable 32-bit integer for a stream label."""
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")

def block_rng(seed: int, stream: str, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(stream_id(stream), int(block)))
    return np.random.Generator(np.random.PCG64(ss))

def blocks(n: int, block_size: int = BLOCK_SIZE):
    """(block index, start, stop) triples covering range(n)."""
    return [(b, s, min(s + block_size, n)) for b, s in enumerate(range(0, n, block_size))]

def run_blocks(fn, n: int, workers: int = 1, block_size: int = BLOCK_SIZE):
    """Apply ``fn(block, start, stop)`` to every block and return results in block order.

    Compiled kernels release the GIL, so a thread pool gives real parallelism.
    """
    todo = blocks(n, block_size)
    if workers <= 1 or len(todo) <= 1:
        return [fn(*t) for t in todo]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda t: fn(*t), todo))
