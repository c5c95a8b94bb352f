"""Deterministic random streams.

Every consumer derives its generator from ``(seed, stream tag, *indices)``
through :class:`numpy.random.SeedSequence`, so results never depend on call
order or on how work is split across processes.

Monte Carlo samples draw one uniform per edge. Sample ``i`` of a run with
master seed ``s`` reads row ``i % rows`` of block ``i // rows``, where the
block generator is keyed by ``(s, SAMPLE_STREAM, block)`` and ``rows``
depends only on the edge count.
"""

from __future__ import annotations

from typing import Iterator, Tuple

import numpy as np

SAMPLE_STREAM = 0
TRIVALENCY_STREAM = 1
CE_STREAM = 2
INNER_STREAM = 3
PAIR_STREAM = 4
SELECT_STREAM = 5

_MASK = (1 << 64) - 1
_BLOCK_CELLS = 1 << 20


def generator(seed: int, *stream: int) -> np.random.Generator:
    key = [int(seed) & _MASK] + [int(x) & _MASK for x in stream]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def block_rows(edge_count: int) -> int:
    return max(1, min(1024, _BLOCK_CELLS // max(1, edge_count)))


def uniform_block(seed: int, block: int, rows: int, edge_count: int, *stream: int) -> np.ndarray:
    rng = generator(seed, SAMPLE_STREAM, *stream, block)
    return rng.random((rows, edge_count))


def sample_uniforms(seed: int, index: int, edge_count: int, *stream: int) -> np.ndarray:
    """Edge uniforms of a single Monte Carlo sample."""
    rows = block_rows(edge_count)
    block, row = divmod(index, rows)
    return uniform_block(seed, block, rows, edge_count, *stream)[row]


def blocks(n_samples: int, edge_count: int) -> Iterator[Tuple[int, int, int]]:
    """Yield ``(block, first_sample, row_count)`` covering ``n_samples``."""
    rows = block_rows(edge_count)
    for b, start in enumerate(range(0, n_samples, rows)):
        yield b, start, min(rows, n_samples - start)
