"""Index-derived random streams for Monte Carlo ensembles.

Paths are grouped in fixed-size blocks. Every (seed, tag, block) triple owns
its own ``numpy.random.Generator``, so the draws of path ``p`` depend only on
``seed``, the tag and ``p`` -- never on how many paths are requested or on
the order in which blocks are produced.
"""

from __future__ import annotations

import zlib

import numpy as np

DEFAULT_BLOCK = 1024


def _tag_id(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


class PathStreams:
    """Factory of per-block generators for an ensemble of ``n_paths`` paths."""

    def __init__(self, seed: int, n_paths: int, block_size: int = DEFAULT_BLOCK):
        if n_paths < 1:
            raise ValueError(f"n_paths must be positive, got {n_paths}")
        if block_size < 1:
            raise ValueError(f"block_size must be positive, got {block_size}")
        self.seed = int(seed)
        self.n_paths = int(n_paths)
        self.block_size = int(block_size)

    @property
    def n_blocks(self) -> int:
        return -(-self.n_paths // self.block_size)

    def generator(self, tag: str, block: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, _tag_id(tag), block])

    def _padded(self) -> int:
        return self.n_blocks * self.block_size

    def normal(self, tag: str, shape: tuple[int, ...]) -> np.ndarray:
        """Standard normals of shape ``(n_paths, *shape)``."""
        out = np.empty((self._padded(), *shape))
        bs = self.block_size
        for b in range(self.n_blocks):
            out[b * bs:(b + 1) * bs] = self.generator(tag, b).standard_normal((bs, *shape))
        return out[: self.n_paths]

    def poisson(self, tag: str, mean: np.ndarray) -> np.ndarray:
        """Poisson counts with per-entry ``mean`` of shape ``(n_paths, ...)``.

        The mean array is padded with zeros up to a whole number of blocks so
        that a block always consumes its generator identically.
        """
        mean = np.asarray(mean, dtype=float)
        if mean.shape[0] != self.n_paths:
            raise ValueError("leading axis of mean must equal n_paths")
        padded = np.zeros((self._padded(), *mean.shape[1:]))
        padded[: self.n_paths] = mean
        out = np.empty(padded.shape, dtype=np.int64)
        bs = self.block_size
        for b in range(self.n_blocks):
            sl = slice(b * bs, (b + 1) * bs)
            out[sl] = self.generator(tag, b).poisson(padded[sl])
        return out[: self.n_paths]
